// Copyright (C) 2026 the ornatry authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "ornatry/rng.hpp"
#include "ornatry/tensor.hpp"

namespace ornatry {

/// Flat registry of named trainable tensors; the optimizer and checkpoint
/// serializer iterate it in registration order.
class ParamRegistry {
public:
    Tensor add(const std::string& name, const Shape& shape);
    const std::vector<std::pair<std::string, Tensor>>& params() const { return params_; }
    Tensor find(const std::string& name) const;
    int64_t total_elements() const;
    void zero_grad();

private:
    std::vector<std::pair<std::string, Tensor>> params_;
};

// Weight init helpers (deterministic via the supplied rng).
void init_kaiming(Tensor& w, int fan_in, Rng& rng);
void init_zero(Tensor& w);

struct Linear {
    Tensor w, b;  // w is (out, in)
    Linear() = default;
    Linear(ParamRegistry& reg, const std::string& name, int in, int out, Rng& rng,
           bool zero_init = false);
    Tensor forward(const Tensor& x) const { return linear(x, w, b); }
    int out_features() const { return w.dim(0); }
};

struct Conv2d {
    Tensor w, b;
    int stride = 1, pad = 1;
    Conv2d() = default;
    Conv2d(ParamRegistry& reg, const std::string& name, int in, int out, int ksize, int stride,
           int pad, Rng& rng, bool zero_init = false);
    Tensor forward(const Tensor& x) const { return conv2d(x, w, b, stride, pad); }
};

struct GroupNorm {
    Tensor gamma, beta;
    int groups = 8;
    GroupNorm() = default;
    GroupNorm(ParamRegistry& reg, const std::string& name, int channels, int groups);
    Tensor forward(const Tensor& x) const { return group_norm(x, groups, gamma, beta); }
};

/// Sinusoidal timestep features -> 2-layer MLP.
struct TimeEmbed {
    Linear l1, l2;
    int dim = 0;
    TimeEmbed() = default;
    TimeEmbed(ParamRegistry& reg, const std::string& name, int dim, Rng& rng);
    /// t values scaled to [0,1] externally; returns (batch, dim).
    Tensor forward(const std::vector<float>& t01) const;
};

/// Conv-conv residual block with per-channel time conditioning.
struct ResBlock {
    GroupNorm n1, n2;
    Conv2d c1, c2;
    Linear time_proj;
    Conv2d skip;  // 1x1 when channel count changes
    bool has_skip = false;
    ResBlock() = default;
    ResBlock(ParamRegistry& reg, const std::string& name, int in, int out, int time_dim, Rng& rng);
    Tensor forward(const Tensor& x, const Tensor& temb) const;
};

/// Adam with global-norm gradient clipping.
class AdamOptimizer {
public:
    AdamOptimizer(ParamRegistry& reg, float lr, float beta1 = 0.9f, float beta2 = 0.999f,
                  float eps = 1e-8f, float clip_norm = 1.0f);
    void step();
    void zero_grad();
    int64_t step_count() const { return t_; }

    // checkpoint access
    std::vector<float>& moment1() { return m_; }
    std::vector<float>& moment2() { return v_; }
    void set_step_count(int64_t t) { t_ = t; }
    float lr;

private:
    ParamRegistry& reg_;
    float beta1_, beta2_, eps_, clip_;
    std::vector<float> m_, v_;
    int64_t t_ = 0;
};

}  // namespace ornatry
