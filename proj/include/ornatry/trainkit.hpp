// Copyright (C) 2026 the ornatry authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ornatry/diffusion.hpp"
#include "ornatry/refnet.hpp"
#include "ornatry/synthgen.hpp"

namespace ornatry {

/// Loss weights decay linearly to floor_fraction of their initial values.
struct LossWeights {
    float lambda1_0 = 1.0f;
    float lambda2_0 = 0.5f;
    float floor_fraction = 0.3f;
};

std::pair<float, float> lambda_at(int64_t step, int64_t total_steps, const LossWeights& w);

struct TrainConfig {
    int epochs = 20;
    int batch_size = 16;
    float learning_rate = 3e-4f;
    float clip_norm = 1.0f;
    uint64_t seed = 0;
    int resolution = 64;

    bool mask_refinement = true;
    bool mask_guided_attention = true;

    AlphaSchedule alpha;
    LossWeights weights;

    int timesteps = 1000;
    double beta_min = 1e-4, beta_max = 0.02;
    ScheduleShape schedule_shape = ScheduleShape::linear;
    int inference_steps = 50;

    int refine_iterations = 2;
    std::optional<MaskKind> mask_kind;  // nullopt -> use the manifest's kind
    int val_count = 48;
    int checkpoint_every_epochs = 5;

    ModelConfig model;
};

TrainConfig train_config_from_json_file(const std::string& path);
std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);
uint64_t config_hash(const TrainConfig& cfg);

/// L1 + lambda1*L2 + lambda2*L3 at the step's decayed weights. Null loss
/// pointers mean the corresponding machinery is ablated away and contribute
/// exactly nothing (value or gradient).
Tensor total_loss(const Tensor& l1, const Tensor* l2, const Tensor* l3, int64_t step,
                  int64_t total_steps, const LossWeights& w);

struct StepLog {
    int64_t step = 0;
    double l1 = 0, l2 = 0, l3 = 0;
    double lambda1 = 0, lambda2 = 0;
    double total = 0;
    std::optional<double> val_iou;
};

struct TrainResult {
    std::string checkpoint_path;
    std::string log_path;
    std::vector<StepLog> history;
    double final_loss = 0;
    double val_mask_iou = 0;  // mask-head IoU on the held-out split
};

/// Versioned binary container: config snapshot + parameters + Adam state.
struct Checkpoint {
    TrainConfig config;
    int64_t step = 0;
    std::shared_ptr<TryonModel> model;
    std::vector<float> adam_m, adam_v;
    int64_t adam_t = 0;
};

void save_checkpoint(const std::string& path, const TryonModel& model, const TrainConfig& cfg,
                     int64_t step, const std::vector<float>& adam_m,
                     const std::vector<float>& adam_v, int64_t adam_t);
Checkpoint load_checkpoint(const std::string& path);

/// Train denoiser + reference branch + mask head jointly. Deterministic for a
/// fixed seed. Writes JSONL step logs and periodic checkpoints under out_dir.
TrainResult fit(const TrainConfig& cfg, const DatasetManifest& manifest,
                const std::string& out_dir);

/// Indices of the held-out validation split (the manifest tail).
std::vector<int> validation_indices(const DatasetManifest& manifest, int val_count);

/// Mask-head IoU (two refinement iterations at alpha=1, binarized at 0.5)
/// against the ground-truth wearing mask, averaged over the given samples.
double quick_mask_iou(const TryonModel& model, const DatasetManifest& manifest,
                      const std::vector<int>& indices, const TrainConfig& cfg);

}  // namespace ornatry
