// Copyright (C) 2026 the ornatry authors
// SPDX-License-Identifier: Apache-2.0

#include "ornatry/maskattn.hpp"

#include <cmath>

#include "ornatry/errors.hpp"

namespace ornatry {
namespace maskattn {

namespace {

int isqrt_exact(int v) {
    int r = static_cast<int>(std::lround(std::sqrt(static_cast<double>(v))));
    if (r * r != v) return -1;
    return r;
}

}  // namespace

ReducedMask downflat_mask(const Image& reference_mask, int d_i) {
    if (reference_mask.c != 1 || reference_mask.w != reference_mask.h)
        throw ParamError("downflat_mask: expects a square single-channel mask");
    int side = isqrt_exact(d_i);
    if (side < 0) throw ParamError("downflat_mask: d_i is not a perfect square");
    if (side > reference_mask.w) throw ParamError("downflat_mask: sqrt(d_i) exceeds mask size");
    Image small = side == reference_mask.w ? reference_mask
                                           : downsample_area(reference_mask, side, side);
    ReducedMask out;
    out.source_dim = reference_mask.w;
    out.values.assign(small.px.begin(), small.px.end());
    return out;
}

Tensor mask_and_marginalize(const Tensor& attn, const ReducedMask& reduced) {
    if (attn.shape().size() != 2 || attn.dim(0) != attn.dim(1))
        throw ParamError("mask_and_marginalize: attention map must be square");
    int d_i = attn.dim(0);
    if (static_cast<size_t>(d_i) != reduced.values.size())
        throw ParamError("mask_and_marginalize: mask length does not match attention dim");
    int side = isqrt_exact(d_i);
    if (side < 0) throw ParamError("mask_and_marginalize: attention dim is not a perfect square");
    int d0 = reduced.source_dim;

    // row r: sum_c attn[r][c] * m[c]
    Tensor per_query = matvec_const(attn, reduced.values);
    Tensor grid = reshape(per_query, {1, 1, side, side});
    Tensor up = upsample_bilinear(grid, d0, d0);
    return reshape(up, {d0, d0});
}

Tensor aggregate(const std::vector<Tensor>& maps) {
    if (maps.empty()) throw ParamError("aggregate: empty map list");
    return mean_of(maps);
}

Tensor attn_mask_loss(const Tensor& transformed, const Image& gt_wearing_mask) {
    if (gt_wearing_mask.c != 1) throw ParamError("attn_mask_loss: gt mask must be single-channel");
    Tensor gt = Tensor::from(std::vector<float>(gt_wearing_mask.px.begin(),
                                                gt_wearing_mask.px.end()),
                             {gt_wearing_mask.h, gt_wearing_mask.w});
    return attn_mask_loss(transformed, gt);
}

Tensor attn_mask_loss(const Tensor& transformed, const Tensor& gt_wearing_mask) {
    if (transformed.shape() != gt_wearing_mask.shape())
        throw ParamError("attn_mask_loss: shape mismatch");
    return mse(transformed, gt_wearing_mask);
}

}  // namespace maskattn
}  // namespace ornatry
