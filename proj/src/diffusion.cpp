// Copyright (C) 2026 the ornatry authors
// SPDX-License-Identifier: Apache-2.0

#include "ornatry/diffusion.hpp"

#include <cmath>

#include "ornatry/errors.hpp"

namespace ornatry {

NoiseSchedule make_schedule(int T, double beta_min, double beta_max, ScheduleShape shape) {
    if (T < 2) throw ParamError("make_schedule: T must be >= 2");
    if (!(beta_min > 0.0 && beta_min < beta_max && beta_max < 1.0))
        throw ParamError("make_schedule: need 0 < beta_min < beta_max < 1");
    NoiseSchedule s;
    s.T = T;
    s.betas.resize(T);
    s.alpha_bars.resize(T);
    if (shape == ScheduleShape::linear) {
        for (int t = 0; t < T; ++t)
            s.betas[t] = beta_min + (beta_max - beta_min) * t / (T - 1);
    } else {
        // squared-cosine cumulative alpha, betas recovered from ratios
        auto f = [T](double t) {
            double v = std::cos((t / T + 0.008) / 1.008 * 3.14159265358979323846 / 2.0);
            return v * v;
        };
        double prev = 1.0;
        for (int t = 0; t < T; ++t) {
            double ab = f(t + 1.0) / f(0.0);
            double beta = 1.0 - ab / prev;
            s.betas[t] = std::min(std::max(beta, beta_min), beta_max);
            prev = ab;
        }
    }
    double prod = 1.0;
    for (int t = 0; t < T; ++t) {
        prod *= 1.0 - s.betas[t];
        s.alpha_bars[t] = prod;
    }
    return s;
}

namespace {

void check_t(int t, const NoiseSchedule& s) {
    if (t < 0 || t >= s.T) throw ParamError("timestep out of range");
}

}  // namespace

Tensor q_sample(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& s) {
    check_t(t, s);
    if (z0.shape() != eps.shape()) throw ParamError("q_sample: eps shape mismatch");
    float a = static_cast<float>(std::sqrt(s.alpha_bars[t]));
    float b = static_cast<float>(std::sqrt(1.0 - s.alpha_bars[t]));
    return add_weighted(z0, a, eps, b);
}

Tensor q_sample_batch(const Tensor& z0, const std::vector<int>& ts, const Tensor& eps,
                      const NoiseSchedule& s) {
    if (z0.shape() != eps.shape()) throw ParamError("q_sample_batch: eps shape mismatch");
    if (z0.shape().size() != 4 || static_cast<int>(ts.size()) != z0.dim(0))
        throw ParamError("q_sample_batch: bad timestep list");
    Tensor out = Tensor::zeros(z0.shape());
    int64_t per = z0.numel() / z0.dim(0);
    for (int bi = 0; bi < z0.dim(0); ++bi) {
        check_t(ts[bi], s);
        float a = static_cast<float>(std::sqrt(s.alpha_bars[ts[bi]]));
        float b = static_cast<float>(std::sqrt(1.0 - s.alpha_bars[ts[bi]]));
        const float* pz = z0.data() + bi * per;
        const float* pe = eps.data() + bi * per;
        float* po = out.data() + bi * per;
        for (int64_t i = 0; i < per; ++i) po[i] = a * pz[i] + b * pe[i];
    }
    return out;
}

Tensor denoise_loss(const Tensor& eps_pred, const Tensor& eps) {
    if (eps_pred.shape() != eps.shape()) throw ParamError("denoise_loss: shape mismatch");
    return mse(eps_pred, eps);
}

}  // namespace ornatry
