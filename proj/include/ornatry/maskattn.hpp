// Copyright (C) 2026 the ornatry authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "ornatry/image.hpp"
#include "ornatry/tensor.hpp"

namespace ornatry {
namespace maskattn {

/// Reference mask downsampled to an attention layer's token grid and
/// flattened row-major.
struct ReducedMask {
    std::vector<float> values;  // length d_i, in [0,1]
    int source_dim = 0;         // d_0 (side length of the original mask)
};

/// Area-average downsample of a d0 x d0 single-channel mask to
/// sqrt(d_i) x sqrt(d_i), flattened row-major. d_i must be a perfect square
/// with sqrt(d_i) <= d0.
ReducedMask downflat_mask(const Image& reference_mask, int d_i);

/// Core transform: every attention row is multiplied elementwise by the
/// reduced reference mask across its columns and summed over them (masking
/// keeps only ornament-region keys, the sum pushes their mass onto each
/// query); the per-query totals are reshaped to the token grid and
/// bilinearly upsampled back to d0 x d0. Differentiable through `attn`.
Tensor mask_and_marginalize(const Tensor& attn, const ReducedMask& reduced);

/// Elementwise mean of the per-layer transformed masks.
Tensor aggregate(const std::vector<Tensor>& maps);

/// MSE between the aggregated transformed mask and the wearing mask target.
Tensor attn_mask_loss(const Tensor& transformed, const Image& gt_wearing_mask);
Tensor attn_mask_loss(const Tensor& transformed, const Tensor& gt_wearing_mask);

}  // namespace maskattn
}  // namespace ornatry
