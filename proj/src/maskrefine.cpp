// Copyright (C) 2026 the ornatry authors
// SPDX-License-Identifier: Apache-2.0

#include "ornatry/maskrefine.hpp"

#include <algorithm>

#include "ornatry/errors.hpp"

namespace ornatry {

double alpha_at(double progress, const AlphaSchedule& schedule) {
    if (progress < 0.0 || progress > 1.0) throw ParamError("alpha_at: progress outside [0,1]");
    if (progress >= schedule.ramp_fraction) return 1.0;
    double t = progress / schedule.ramp_fraction;
    return schedule.start_value + (1.0 - schedule.start_value) * t;
}

MaskState init_mask_state(const Mask& box_mask) {
    MaskState st;
    st.box_mask = box_mask;
    st.current_mask = mask_to_image(box_mask);
    st.alpha = 0.f;
    return st;
}

Image blend_mask(const Image& pred_mask, const Mask& box_mask, float alpha) {
    if (pred_mask.w != box_mask.w || pred_mask.h != box_mask.h || pred_mask.c != 1)
        throw ParamError("blend_mask: shape mismatch");
    if (alpha < 0.f || alpha > 1.f) throw ParamError("blend_mask: alpha outside [0,1]");
    Image out(pred_mask.w, pred_mask.h, 1);
    for (size_t i = 0; i < out.px.size(); ++i) {
        float box = box_mask.px[i] ? 1.f : 0.f;
        out.px[i] = std::clamp(alpha * pred_mask.px[i] + (1.f - alpha) * box, 0.f, 1.f);
    }
    return out;
}

Tensor blend_mask(const Tensor& pred_mask, const Tensor& box_mask, float alpha) {
    if (pred_mask.shape() != box_mask.shape()) throw ParamError("blend_mask: shape mismatch");
    if (alpha < 0.f || alpha > 1.f) throw ParamError("blend_mask: alpha outside [0,1]");
    return add_weighted(pred_mask, alpha, box_mask, 1.f - alpha);
}

Tensor mask_loss(const Tensor& pred_mask, const Tensor& gt_mask) {
    return mse(pred_mask, gt_mask);
}

}  // namespace ornatry
