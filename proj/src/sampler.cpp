// Copyright (C) 2026 the ornatry authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "ornatry/diffusion.hpp"
#include "ornatry/errors.hpp"
#include "ornatry/refnet.hpp"
#include "ornatry/rng.hpp"

namespace ornatry {

SampleResult sample(const TryonModel& model, const NoiseSchedule& schedule,
                    const SampleConditioning& cond, int steps, uint64_t seed,
                    const AlphaSchedule& alpha_schedule, bool refine_mask) {
    if (steps < 1 || steps > schedule.T) throw ParamError("sample: steps must be in [1, T]");
    int res = model.config().resolution;
    if (cond.ornament.w != res || cond.ornament.h != res || cond.masked_model.w != res ||
        cond.masked_model.h != res || cond.box_mask.w != res || cond.box_mask.h != res)
        throw ParamError("sample: conditioning resolution mismatch");

    NoGradGuard ng;
    Tensor ornament = image_batch_to_tensor({&cond.ornament}, true);
    Tensor masked = image_batch_to_tensor({&cond.masked_model}, true);
    Tensor orn_mask;
    if (cond.ornament_mask.w == res && cond.ornament_mask.h == res) {
        Image om = mask_to_image(cond.ornament_mask);
        orn_mask = mask_to_tensor(om);
    }
    Tensor tokens = model.ornament_embed(ornament);

    Rng rng(Rng::mix(seed, 0x73616d70ULL));
    Tensor z = Tensor::zeros({1, 3, res, res});
    for (int64_t i = 0; i < z.numel(); ++i) z.data()[i] = static_cast<float>(rng.normal());

    // evenly spaced timestep ladder ending at T-1
    std::vector<int> ladder(steps);
    for (int k = 0; k < steps; ++k)
        ladder[k] = static_cast<int>((static_cast<int64_t>(k) + 1) * schedule.T / steps) - 1;

    MaskState state = init_mask_state(cond.box_mask);
    SampleResult result;
    result.mask_trajectory.reserve(steps);

    Tensor x0;
    for (int k = steps - 1; k >= 0; --k) {
        int step_index = steps - 1 - k;
        int t = ladder[k];
        float progress = steps > 1 ? static_cast<float>(step_index) / (steps - 1) : 1.f;

        Tensor temb = model.time_embed({t}, schedule.T);
        Tensor mask_in = mask_to_tensor(state.current_mask);
        FeatureStack feats = model.encode_reference(ornament, masked, mask_in, temb, orn_mask);
        if (refine_mask) state = refine_step(state, feats, progress, alpha_schedule, model);
        result.mask_trajectory.push_back(state.current_mask);

        Tensor mask_ch = mask_to_tensor(state.current_mask);
        Tensor eps = model.denoise(z, masked, mask_ch, temb, feats, tokens);
        for (int64_t i = 0; i < eps.numel(); ++i)
            if (!std::isfinite(eps.data()[i]))
                throw SamplingError("non-finite noise prediction", step_index);

        double ab = schedule.alpha_bars[t];
        double ab_prev = k > 0 ? schedule.alpha_bars[ladder[k - 1]] : 1.0;
        float sa = static_cast<float>(std::sqrt(ab));
        float sb = static_cast<float>(std::sqrt(1.0 - ab));
        float pa = static_cast<float>(std::sqrt(ab_prev));
        float pb = static_cast<float>(std::sqrt(1.0 - ab_prev));

        x0 = Tensor::zeros(z.shape());
        for (int64_t i = 0; i < z.numel(); ++i) {
            float v = (z.data()[i] - sb * eps.data()[i]) / sa;
            x0.data()[i] = std::min(1.f, std::max(-1.f, v));
            if (!std::isfinite(x0.data()[i]))
                throw SamplingError("non-finite latent", step_index);
        }
        for (int64_t i = 0; i < z.numel(); ++i)
            z.data()[i] = pa * x0.data()[i] + pb * eps.data()[i];
    }

    Image generated = tensor_to_image(x0, 0, true);
    // outside the input mask the conditioning image is authoritative
    Image composed = generated;
    for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x)
            if (!cond.box_mask.at(x, y))
                for (int c = 0; c < 3; ++c) composed.at(x, y, c) = cond.masked_model.at(x, y, c);
    result.image = composed;
    result.final_mask = state.current_mask;
    return result;
}

}  // namespace ornatry
