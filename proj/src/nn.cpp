// Copyright (C) 2026 the ornatry authors
// SPDX-License-Identifier: Apache-2.0

#include "ornatry/nn.hpp"

#include <cmath>

#include "ornatry/errors.hpp"

namespace ornatry {

Tensor ParamRegistry::add(const std::string& name, const Shape& shape) {
    for (const auto& [n, t] : params_)
        if (n == name) throw ParamError("duplicate parameter name: " + name);
    Tensor t = Tensor::zeros(shape, /*requires_grad=*/true);
    params_.emplace_back(name, t);
    return t;
}

Tensor ParamRegistry::find(const std::string& name) const {
    for (const auto& [n, t] : params_)
        if (n == name) return t;
    throw ParamError("unknown parameter: " + name);
}

int64_t ParamRegistry::total_elements() const {
    int64_t n = 0;
    for (const auto& [name, t] : params_) n += t.numel();
    return n;
}

void ParamRegistry::zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
}

void init_kaiming(Tensor& w, int fan_in, Rng& rng) {
    float std = std::sqrt(2.f / fan_in);
    float* p = w.data();
    for (int64_t i = 0; i < w.numel(); ++i) p[i] = static_cast<float>(rng.normal()) * std;
}

void init_zero(Tensor& w) {
    float* p = w.data();
    for (int64_t i = 0; i < w.numel(); ++i) p[i] = 0.f;
}

Linear::Linear(ParamRegistry& reg, const std::string& name, int in, int out, Rng& rng,
               bool zero_init) {
    w = reg.add(name + ".w", {out, in});
    b = reg.add(name + ".b", {out});
    if (zero_init)
        init_zero(w);
    else
        init_kaiming(w, in, rng);
}

Conv2d::Conv2d(ParamRegistry& reg, const std::string& name, int in, int out, int ksize, int stride,
               int pad, Rng& rng, bool zero_init)
    : stride(stride), pad(pad) {
    w = reg.add(name + ".w", {out, in, ksize, ksize});
    b = reg.add(name + ".b", {out});
    if (zero_init)
        init_zero(w);
    else
        init_kaiming(w, in * ksize * ksize, rng);
}

GroupNorm::GroupNorm(ParamRegistry& reg, const std::string& name, int channels, int groups)
    : groups(groups) {
    gamma = reg.add(name + ".gamma", {channels});
    beta = reg.add(name + ".beta", {channels});
    for (int i = 0; i < channels; ++i) gamma.data()[i] = 1.f;
}

TimeEmbed::TimeEmbed(ParamRegistry& reg, const std::string& name, int dim, Rng& rng) : dim(dim) {
    l1 = Linear(reg, name + ".l1", dim, dim, rng);
    l2 = Linear(reg, name + ".l2", dim, dim, rng);
}

Tensor TimeEmbed::forward(const std::vector<float>& t01) const {
    int batch = static_cast<int>(t01.size());
    int half = dim / 2;
    std::vector<float> feats(static_cast<size_t>(batch) * dim);
    for (int bi = 0; bi < batch; ++bi) {
        for (int i = 0; i < half; ++i) {
            // frequencies log-spaced in [1, 1000]
            float freq = std::exp(std::log(1000.f) * i / (half - 1));
            feats[static_cast<size_t>(bi) * dim + i] = std::sin(t01[bi] * freq);
            feats[static_cast<size_t>(bi) * dim + half + i] = std::cos(t01[bi] * freq);
        }
    }
    Tensor x = Tensor::from(std::move(feats), {batch, dim});
    return l2.forward(silu(l1.forward(x)));
}

ResBlock::ResBlock(ParamRegistry& reg, const std::string& name, int in, int out, int time_dim,
                   Rng& rng) {
    n1 = GroupNorm(reg, name + ".n1", in, 8);
    c1 = Conv2d(reg, name + ".c1", in, out, 3, 1, 1, rng);
    n2 = GroupNorm(reg, name + ".n2", out, 8);
    c2 = Conv2d(reg, name + ".c2", out, out, 3, 1, 1, rng);
    time_proj = Linear(reg, name + ".temb", time_dim, out, rng);
    if (in != out) {
        skip = Conv2d(reg, name + ".skip", in, out, 1, 1, 0, rng);
        has_skip = true;
    }
}

Tensor ResBlock::forward(const Tensor& x, const Tensor& temb) const {
    Tensor h = c1.forward(silu(n1.forward(x)));
    h = add_time_bias(h, time_proj.forward(temb));
    h = c2.forward(silu(n2.forward(h)));
    Tensor res = has_skip ? skip.forward(x) : x;
    return add(h, res);
}

AdamOptimizer::AdamOptimizer(ParamRegistry& reg, float lr, float beta1, float beta2, float eps,
                             float clip_norm)
    : lr(lr), reg_(reg), beta1_(beta1), beta2_(beta2), eps_(eps), clip_(clip_norm) {
    int64_t n = reg.total_elements();
    m_.assign(n, 0.f);
    v_.assign(n, 0.f);
}

void AdamOptimizer::step() {
    ++t_;
    // global gradient norm for clipping
    double norm2 = 0;
    for (auto& [name, t] : reg_.params()) {
        const auto& g = t.grad();
        for (float v : g) norm2 += static_cast<double>(v) * v;
    }
    float scale_g = 1.f;
    double norm = std::sqrt(norm2);
    if (clip_ > 0 && norm > clip_) scale_g = static_cast<float>(clip_ / norm);

    float bc1 = 1.f - std::pow(beta1_, static_cast<float>(t_));
    float bc2 = 1.f - std::pow(beta2_, static_cast<float>(t_));
    int64_t off = 0;
    for (auto& [name, t] : reg_.params()) {
        Tensor tt = t;
        int64_t n = tt.numel();
        const auto& gvec = tt.grad();
        float* p = tt.data();
        for (int64_t i = 0; i < n; ++i) {
            float g = gvec.empty() ? 0.f : gvec[i] * scale_g;
            float& m = m_[off + i];
            float& v = v_[off + i];
            m = beta1_ * m + (1 - beta1_) * g;
            v = beta2_ * v + (1 - beta2_) * g * g;
            float mhat = m / bc1;
            float vhat = v / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
        off += n;
    }
}

void AdamOptimizer::zero_grad() { reg_.zero_grad(); }

}  // namespace ornatry
