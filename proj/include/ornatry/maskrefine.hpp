// Copyright (C) 2026 the ornatry authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ornatry/image.hpp"
#include "ornatry/tensor.hpp"

namespace ornatry {

/// Blending coefficient trajectory: linear ramp from start_value at progress 0
/// to 1.0 at ramp_fraction, constant 1.0 afterwards.
struct AlphaSchedule {
    double start_value = 0.1;
    double ramp_fraction = 0.5;
};

double alpha_at(double progress, const AlphaSchedule& schedule);

/// Per-trajectory mask refinement state.
struct MaskState {
    Image current_mask;  // soft wearing mask estimate in [0,1]
    Mask box_mask;       // coarse input mask
    float alpha = 0.f;
};

MaskState init_mask_state(const Mask& box_mask);

/// alpha*pred + (1-alpha)*box, elementwise. Pure data version.
Image blend_mask(const Image& pred_mask, const Mask& box_mask, float alpha);
/// Graph version used inside training (box enters as a constant).
Tensor blend_mask(const Tensor& pred_mask, const Tensor& box_mask, float alpha);

/// Mean squared error between a predicted soft mask and the binary target.
Tensor mask_loss(const Tensor& pred_mask, const Tensor& gt_mask);

}  // namespace ornatry
