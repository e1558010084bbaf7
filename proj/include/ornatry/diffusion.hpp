// Copyright (C) 2026 the ornatry authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "ornatry/image.hpp"
#include "ornatry/maskrefine.hpp"
#include "ornatry/tensor.hpp"

namespace ornatry {

enum class ScheduleShape { linear, cosine };

/// Beta / cumulative-alpha tables over T timesteps (double precision).
struct NoiseSchedule {
    int T = 0;
    std::vector<double> betas;
    std::vector<double> alpha_bars;  // prod_{s<=t} (1 - beta_s)
};

NoiseSchedule make_schedule(int T, double beta_min, double beta_max,
                            ScheduleShape shape = ScheduleShape::linear);

/// z_t = sqrt(abar_t) z0 + sqrt(1-abar_t) eps, one timestep for the whole tensor.
Tensor q_sample(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& s);
/// Per-sample timesteps for an (N,C,H,W) batch.
Tensor q_sample_batch(const Tensor& z0, const std::vector<int>& ts, const Tensor& eps,
                      const NoiseSchedule& s);

/// Mean squared error between predicted and true noise.
Tensor denoise_loss(const Tensor& eps_pred, const Tensor& eps);

// ---- deterministic sampling ---------------------------------------------------

class TryonModel;

struct SampleConditioning {
    Image ornament;        // reference ornament crop, RGB [0,1]
    Mask ornament_mask;    // its silhouette
    Image masked_model;    // model crop with the edit region filled neutral
    Mask box_mask;         // coarse input mask (the only mask required)
};

struct SampleResult {
    Image image;                        // composed crop, [0,1]
    Image final_mask;                   // refined wearing mask, soft [0,1]
    std::vector<Image> mask_trajectory; // mask after each denoising step
};

/// Deterministic DDIM loop; the conditioning mask channel is refreshed from
/// the mask refiner every step (unless refine_mask is false, in which case it
/// stays at the coarse box). Throws SamplingError on non-finite latents.
SampleResult sample(const TryonModel& model, const NoiseSchedule& schedule,
                    const SampleConditioning& cond, int steps, uint64_t seed,
                    const AlphaSchedule& alpha_schedule, bool refine_mask);

}  // namespace ornatry
