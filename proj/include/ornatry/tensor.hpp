// Copyright (C) 2026 the ornatry authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace ornatry {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);

/// One node of the dynamically built computation graph.
struct TensorNode {
    Shape shape;
    std::vector<float> val;
    std::vector<float> grad;  // allocated on first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn;
    int scratch = 0;  // topo-sort mark

    float* grad_buf();  // lazily zero-initialized
};

/// Value-semantics handle over a graph node. Copies share the node.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

    static Tensor zeros(const Shape& s, bool requires_grad = false);
    static Tensor full(const Shape& s, float v);
    static Tensor from(std::vector<float> v, const Shape& s);
    static Tensor scalar(float v);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int dim(int i) const { return node_->shape[i]; }
    int64_t numel() const { return static_cast<int64_t>(node_->val.size()); }
    float* data() { return node_->val.data(); }
    const float* data() const { return node_->val.data(); }
    float item() const { return node_->val[0]; }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }
    const std::vector<float>& grad() const { return node_->grad; }
    void zero_grad() { node_->grad.clear(); }

    std::shared_ptr<TensorNode> node() const { return node_; }

private:
    std::shared_ptr<TensorNode> node_;
};

/// Reverse-mode sweep from a scalar loss.
void backward(const Tensor& loss);

bool grad_enabled();
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    bool prev;
};

// ---- elementwise / linear algebra -------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);
Tensor add_scalar(const Tensor& a, float s);
/// wa*a + wb*b, same shapes.
Tensor add_weighted(const Tensor& a, float wa, const Tensor& b, float wb);

Tensor silu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

/// (M,K) x (K,N) -> (M,N)
Tensor matmul(const Tensor& a, const Tensor& b);
/// (M,K) x (N,K)^T -> (M,N)
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// x (M,K), W (N,K), b (N) -> (M,N)
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

/// Row-wise softmax of a 2-D tensor.
Tensor softmax_rows(const Tensor& x);
/// Adds a per-column bias to every row of a 2-D tensor (no-grad bias).
Tensor add_col_bias(const Tensor& x, const std::vector<float>& bias);

/// (R,C) times a constant length-C vector -> (R).
Tensor matvec_const(const Tensor& a, const std::vector<float>& v);

Tensor slice_rows(const Tensor& x, int r0, int r1);
Tensor slice_cols(const Tensor& x, int c0, int c1);
Tensor concat_rows(const std::vector<Tensor>& parts);

/// Mean squared error over all elements (scalar result).
Tensor mse(const Tensor& a, const Tensor& b);
/// Elementwise mean of equally shaped tensors.
Tensor mean_of(const std::vector<Tensor>& parts);

// ---- NCHW ops ---------------------------------------------------------------

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta,
                  float eps = 1e-5f);
/// (N,C,H,W) * (N,1,H,W), mask broadcast over channels.
Tensor mul_mask(const Tensor& x, const Tensor& m);
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Concatenate along the width axis (same N, C, H).
Tensor concat_width(const Tensor& a, const Tensor& b);
/// Split along width: columns [w0, w1).
Tensor slice_width(const Tensor& x, int w0, int w1);
Tensor upsample_nearest2x(const Tensor& x);
/// (N, 4C, H, W) -> (N, C, 2H, 2W): channel groups become 2x2 sub-pixels.
Tensor pixel_shuffle2x(const Tensor& x);
/// align_corners=true bilinear resize of NCHW maps.
Tensor upsample_bilinear(const Tensor& x, int out_h, int out_w);
Tensor avg_pool2x(const Tensor& x);
/// (N,C,H,W) -> (N*H*W, C)
Tensor nchw_to_tokens(const Tensor& x);
/// (M, C) -> (N,C,H,W) with M = N*H*W
Tensor tokens_to_nchw(const Tensor& x, int n, int c, int h, int w);
/// Plain same-layout reinterpretation (copies, identity gradient).
Tensor reshape(const Tensor& x, const Shape& s);

/// Per-sample time embedding broadcast: x (N,C,H,W) + e (N,C).
Tensor add_time_bias(const Tensor& x, const Tensor& e);

}  // namespace ornatry
