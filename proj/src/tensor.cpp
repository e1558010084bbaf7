// Copyright (C) 2026 the ornatry authors
// SPDX-License-Identifier: Apache-2.0

#include "ornatry/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "ornatry/errors.hpp"
#include "ornatry/gemm.hpp"

namespace ornatry {

namespace {
#ifdef __GLIBC__
// Large tensors churn fast; keeping them on the main heap instead of
// per-allocation mmap regions avoids constant page faulting.
const bool g_malloc_tuned = [] {
    mallopt(M_MMAP_MAX, 0);
    mallopt(M_TRIM_THRESHOLD, -1);
    return true;
}();
#endif
}  // namespace

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

float* TensorNode::grad_buf() {
    if (grad.empty()) grad.assign(val.size(), 0.f);
    return grad.data();
}

namespace {

thread_local bool g_grad_enabled = true;

std::shared_ptr<TensorNode> make_node(const Shape& s) {
    auto n = std::make_shared<TensorNode>();
    n->shape = s;
    n->val.resize(static_cast<size_t>(shape_numel(s)));
    return n;
}

bool track(const std::initializer_list<Tensor>& parents) {
    if (!g_grad_enabled) return false;
    for (const auto& p : parents)
        if (p.requires_grad()) return true;
    return false;
}

/// Finish op construction: wire parents + backward only when tracking.
Tensor finish(std::shared_ptr<TensorNode> n, std::initializer_list<Tensor> parents,
              std::function<void(TensorNode&)> bk) {
    if (track(parents)) {
        n->requires_grad = true;
        for (const auto& p : parents)
            if (p.defined()) n->parents.push_back(p.node());
        n->backward_fn = std::move(bk);
    }
    return Tensor(std::move(n));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) throw ParamError(std::string(op) + ": shape mismatch");
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }
NoGradGuard::NoGradGuard() : prev(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev; }

Tensor Tensor::zeros(const Shape& s, bool requires_grad) {
    auto n = make_node(s);
    n->requires_grad = requires_grad;
    return Tensor(n);
}

Tensor Tensor::full(const Shape& s, float v) {
    auto n = make_node(s);
    std::fill(n->val.begin(), n->val.end(), v);
    return Tensor(n);
}

Tensor Tensor::from(std::vector<float> v, const Shape& s) {
    if (static_cast<int64_t>(v.size()) != shape_numel(s))
        throw ParamError("Tensor::from: data size does not match shape");
    auto n = std::make_shared<TensorNode>();
    n->shape = s;
    n->val = std::move(v);
    return Tensor(n);
}

Tensor Tensor::scalar(float v) { return from({v}, {1}); }

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) throw ParamError("backward: loss must be scalar");
    // iterative DFS topological order
    std::vector<TensorNode*> order;
    std::vector<std::pair<TensorNode*, size_t>> stack;
    stack.push_back({loss.node().get(), 0});
    loss.node()->scratch = 1;
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            TensorNode* p = node->parents[idx++].get();
            if (p->scratch == 0) {
                p->scratch = 1;
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (TensorNode* n : order) n->scratch = 0;
    loss.node()->grad.assign(1, 1.f);
    TensorNode* root = loss.node().get();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
        // intermediate activations are dead once their backward has run;
        // dropping them early keeps the peak footprint near the forward pass
        if (n->backward_fn && n != root) {
            std::vector<float>().swap(n->val);
            std::vector<float>().swap(n->grad);
        }
    }
}

// ---- elementwise -------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    auto n = make_node(a.shape());
    const float* pa = a.data();
    const float* pb = b.data();
    for (size_t i = 0; i < n->val.size(); ++i) n->val[i] = pa[i] + pb[i];
    return finish(n, {a, b}, [a = a.node(), b = b.node()](TensorNode& self) {
        if (a->requires_grad) {
            float* g = a->grad_buf();
            for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
        }
        if (b->requires_grad) {
            float* g = b->grad_buf();
            for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) { return add_weighted(a, 1.f, b, -1.f); }

Tensor add_weighted(const Tensor& a, float wa, const Tensor& b, float wb) {
    check_same_shape(a, b, "add_weighted");
    auto n = make_node(a.shape());
    const float* pa = a.data();
    const float* pb = b.data();
    for (size_t i = 0; i < n->val.size(); ++i) n->val[i] = wa * pa[i] + wb * pb[i];
    return finish(n, {a, b}, [a = a.node(), b = b.node(), wa, wb](TensorNode& self) {
        if (a->requires_grad) {
            float* g = a->grad_buf();
            for (size_t i = 0; i < self.grad.size(); ++i) g[i] += wa * self.grad[i];
        }
        if (b->requires_grad) {
            float* g = b->grad_buf();
            for (size_t i = 0; i < self.grad.size(); ++i) g[i] += wb * self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    auto n = make_node(a.shape());
    const float* pa = a.data();
    const float* pb = b.data();
    for (size_t i = 0; i < n->val.size(); ++i) n->val[i] = pa[i] * pb[i];
    return finish(n, {a, b}, [a = a.node(), b = b.node()](TensorNode& self) {
        if (a->requires_grad) {
            float* g = a->grad_buf();
            for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * b->val[i];
        }
        if (b->requires_grad) {
            float* g = b->grad_buf();
            for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * a->val[i];
        }
    });
}

Tensor scale(const Tensor& a, float s) {
    auto n = make_node(a.shape());
    const float* pa = a.data();
    for (size_t i = 0; i < n->val.size(); ++i) n->val[i] = pa[i] * s;
    return finish(n, {a}, [a = a.node(), s](TensorNode& self) {
        if (!a->requires_grad) return;
        float* g = a->grad_buf();
        for (size_t i = 0; i < self.grad.size(); ++i) g[i] += s * self.grad[i];
    });
}

Tensor add_scalar(const Tensor& a, float s) {
    auto n = make_node(a.shape());
    const float* pa = a.data();
    for (size_t i = 0; i < n->val.size(); ++i) n->val[i] = pa[i] + s;
    return finish(n, {a}, [a = a.node()](TensorNode& self) {
        if (!a->requires_grad) return;
        float* g = a->grad_buf();
        for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    });
}

Tensor silu(const Tensor& x) {
    auto n = make_node(x.shape());
    const float* px = x.data();
    for (size_t i = 0; i < n->val.size(); ++i) {
        float s = 1.f / (1.f + std::exp(-px[i]));
        n->val[i] = px[i] * s;
    }
    return finish(n, {x}, [x = x.node()](TensorNode& self) {
        if (!x->requires_grad) return;
        float* g = x->grad_buf();
        for (size_t i = 0; i < self.grad.size(); ++i) {
            float v = x->val[i];
            float s = 1.f / (1.f + std::exp(-v));
            g[i] += self.grad[i] * s * (1.f + v * (1.f - s));
        }
    });
}

Tensor sigmoid(const Tensor& x) {
    auto n = make_node(x.shape());
    const float* px = x.data();
    for (size_t i = 0; i < n->val.size(); ++i) n->val[i] = 1.f / (1.f + std::exp(-px[i]));
    return finish(n, {x}, [x = x.node()](TensorNode& self) {
        if (!x->requires_grad) return;
        float* g = x->grad_buf();
        for (size_t i = 0; i < self.grad.size(); ++i) {
            float y = self.val[i];
            g[i] += self.grad[i] * y * (1.f - y);
        }
    });
}

// ---- dense linear algebra ----------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.dim(1) != b.dim(0))
        throw ParamError("matmul: incompatible shapes");
    int m = a.dim(0), k = a.dim(1), nn = b.dim(1);
    auto n = make_node({m, nn});
    gemm(m, nn, k, a.data(), b.data(), n->val.data());
    return finish(n, {a, b}, [a = a.node(), b = b.node(), m, k, nn](TensorNode& self) {
        if (a->requires_grad)  // dA = dC * B^T
            gemm_nt(m, k, nn, self.grad.data(), b->val.data(), a->grad_buf(), true);
        if (b->requires_grad)  // dB = A^T * dC
            gemm_tn(k, nn, m, a->val.data(), self.grad.data(), b->grad_buf(), true);
    });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.dim(1) != b.dim(1))
        throw ParamError("matmul_nt: incompatible shapes");
    int m = a.dim(0), k = a.dim(1), nn = b.dim(0);
    auto n = make_node({m, nn});
    gemm_nt(m, nn, k, a.data(), b.data(), n->val.data());
    return finish(n, {a, b}, [a = a.node(), b = b.node(), m, k, nn](TensorNode& self) {
        if (a->requires_grad)  // dA = dC * B
            gemm(m, k, nn, self.grad.data(), b->val.data(), a->grad_buf(), true);
        if (b->requires_grad)  // dB = dC^T * A
            gemm_tn(nn, k, m, self.grad.data(), a->val.data(), b->grad_buf(), true);
    });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    Tensor y = matmul_nt(x, w);
    if (!b.defined()) return y;
    if (b.numel() != y.dim(1)) throw ParamError("linear: bias size mismatch");
    auto n = make_node(y.shape());
    int rows = y.dim(0), cols = y.dim(1);
    const float* py = y.data();
    const float* pb = b.data();
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            n->val[static_cast<size_t>(r) * cols + c] = py[static_cast<size_t>(r) * cols + c] + pb[c];
    return finish(n, {y, b}, [y = y.node(), b = b.node(), rows, cols](TensorNode& self) {
        if (y->requires_grad) {
            float* g = y->grad_buf();
            for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
        }
        if (b->requires_grad) {
            float* g = b->grad_buf();
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c) g[c] += self.grad[static_cast<size_t>(r) * cols + c];
        }
    });
}

Tensor softmax_rows(const Tensor& x) {
    if (x.shape().size() != 2) throw ParamError("softmax_rows: expects 2-D input");
    int rows = x.dim(0), cols = x.dim(1);
    auto n = make_node(x.shape());
    const float* px = x.data();
    for (int r = 0; r < rows; ++r) {
        const float* xr = px + static_cast<size_t>(r) * cols;
        float* yr = n->val.data() + static_cast<size_t>(r) * cols;
        float mx = xr[0];
        for (int c = 1; c < cols; ++c) mx = std::max(mx, xr[c]);
        float sum = 0.f;
        for (int c = 0; c < cols; ++c) {
            yr[c] = std::exp(xr[c] - mx);
            sum += yr[c];
        }
        float inv = 1.f / sum;
        for (int c = 0; c < cols; ++c) yr[c] *= inv;
    }
    return finish(n, {x}, [x = x.node(), rows, cols](TensorNode& self) {
        if (!x->requires_grad) return;
        float* g = x->grad_buf();
        for (int r = 0; r < rows; ++r) {
            const float* yr = self.val.data() + static_cast<size_t>(r) * cols;
            const float* dyr = self.grad.data() + static_cast<size_t>(r) * cols;
            float dot = 0.f;
            for (int c = 0; c < cols; ++c) dot += dyr[c] * yr[c];
            float* gr = g + static_cast<size_t>(r) * cols;
            for (int c = 0; c < cols; ++c) gr[c] += yr[c] * (dyr[c] - dot);
        }
    });
}

Tensor add_col_bias(const Tensor& x, const std::vector<float>& bias) {
    if (x.shape().size() != 2 || static_cast<size_t>(x.dim(1)) != bias.size())
        throw ParamError("add_col_bias: size mismatch");
    int rows = x.dim(0), cols = x.dim(1);
    auto n = make_node(x.shape());
    const float* px = x.data();
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            n->val[static_cast<size_t>(r) * cols + c] = px[static_cast<size_t>(r) * cols + c] + bias[c];
    return finish(n, {x}, [x = x.node()](TensorNode& self) {
        if (!x->requires_grad) return;
        float* g = x->grad_buf();
        for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    });
}

Tensor matvec_const(const Tensor& a, const std::vector<float>& v) {
    if (a.shape().size() != 2 || static_cast<size_t>(a.dim(1)) != v.size())
        throw ParamError("matvec_const: size mismatch");
    int rows = a.dim(0), cols = a.dim(1);
    auto n = make_node({rows});
    const float* pa = a.data();
    for (int r = 0; r < rows; ++r) {
        float s = 0.f;
        const float* ar = pa + static_cast<size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) s += ar[c] * v[c];
        n->val[r] = s;
    }
    return finish(n, {a}, [a = a.node(), v, rows, cols](TensorNode& self) {
        if (!a->requires_grad) return;
        float* g = a->grad_buf();
        for (int r = 0; r < rows; ++r) {
            float gr = self.grad[r];
            float* row = g + static_cast<size_t>(r) * cols;
            for (int c = 0; c < cols; ++c) row[c] += gr * v[c];
        }
    });
}

Tensor slice_rows(const Tensor& x, int r0, int r1) {
    if (x.shape().size() != 2 || r0 < 0 || r1 > x.dim(0) || r0 >= r1)
        throw ParamError("slice_rows: bad range");
    int cols = x.dim(1);
    auto n = make_node({r1 - r0, cols});
    std::memcpy(n->val.data(), x.data() + static_cast<size_t>(r0) * cols,
                sizeof(float) * n->val.size());
    return finish(n, {x}, [x = x.node(), r0, cols](TensorNode& self) {
        if (!x->requires_grad) return;
        float* g = x->grad_buf() + static_cast<size_t>(r0) * cols;
        for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    });
}

Tensor slice_cols(const Tensor& x, int c0, int c1) {
    if (x.shape().size() != 2 || c0 < 0 || c1 > x.dim(1) || c0 >= c1)
        throw ParamError("slice_cols: bad range");
    int rows = x.dim(0), cols = x.dim(1), out = c1 - c0;
    auto n = make_node({rows, out});
    const float* px = x.data();
    for (int r = 0; r < rows; ++r)
        std::memcpy(n->val.data() + static_cast<size_t>(r) * out,
                    px + static_cast<size_t>(r) * cols + c0, sizeof(float) * out);
    return finish(n, {x}, [x = x.node(), c0, rows, cols, out](TensorNode& self) {
        if (!x->requires_grad) return;
        float* g = x->grad_buf();
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < out; ++c)
                g[static_cast<size_t>(r) * cols + c0 + c] += self.grad[static_cast<size_t>(r) * out + c];
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ParamError("concat_rows: empty list");
    int cols = parts[0].dim(1);
    int rows = 0;
    for (const auto& p : parts) {
        if (p.shape().size() != 2 || p.dim(1) != cols)
            throw ParamError("concat_rows: column mismatch");
        rows += p.dim(0);
    }
    auto n = make_node({rows, cols});
    size_t off = 0;
    bool any_grad = false;
    for (const auto& p : parts) {
        std::memcpy(n->val.data() + off, p.data(), sizeof(float) * p.numel());
        off += p.numel();
        any_grad = any_grad || p.requires_grad();
    }
    if (!g_grad_enabled || !any_grad) return Tensor(n);
    n->requires_grad = true;
    std::vector<std::shared_ptr<TensorNode>> nodes;
    for (const auto& p : parts) {
        n->parents.push_back(p.node());
        nodes.push_back(p.node());
    }
    n->backward_fn = [nodes](TensorNode& self) {
        size_t off2 = 0;
        for (const auto& p : nodes) {
            if (p->requires_grad) {
                float* g = p->grad_buf();
                for (size_t i = 0; i < p->val.size(); ++i) g[i] += self.grad[off2 + i];
            }
            off2 += p->val.size();
        }
    };
    return Tensor(n);
}

Tensor mse(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mse");
    auto n = make_node({1});
    const float* pa = a.data();
    const float* pb = b.data();
    double acc = 0;
    size_t cnt = a.node()->val.size();
    for (size_t i = 0; i < cnt; ++i) {
        double d = static_cast<double>(pa[i]) - pb[i];
        acc += d * d;
    }
    n->val[0] = static_cast<float>(acc / cnt);
    return finish(n, {a, b}, [a = a.node(), b = b.node(), cnt](TensorNode& self) {
        float s = self.grad[0] * 2.f / static_cast<float>(cnt);
        if (a->requires_grad) {
            float* g = a->grad_buf();
            for (size_t i = 0; i < cnt; ++i) g[i] += s * (a->val[i] - b->val[i]);
        }
        if (b->requires_grad) {
            float* g = b->grad_buf();
            for (size_t i = 0; i < cnt; ++i) g[i] -= s * (a->val[i] - b->val[i]);
        }
    });
}

Tensor mean_of(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ParamError("mean_of: empty list");
    for (const auto& p : parts) check_same_shape(parts[0], p, "mean_of");
    auto n = make_node(parts[0].shape());
    float inv = 1.f / parts.size();
    for (const auto& p : parts) {
        const float* pp = p.data();
        for (size_t i = 0; i < n->val.size(); ++i) n->val[i] += pp[i] * inv;
    }
    bool any_grad = false;
    for (const auto& p : parts) any_grad = any_grad || p.requires_grad();
    if (!g_grad_enabled || !any_grad) return Tensor(n);
    n->requires_grad = true;
    std::vector<std::shared_ptr<TensorNode>> nodes;
    for (const auto& p : parts) {
        n->parents.push_back(p.node());
        nodes.push_back(p.node());
    }
    n->backward_fn = [nodes, inv](TensorNode& self) {
        for (const auto& p : nodes) {
            if (!p->requires_grad) continue;
            float* g = p->grad_buf();
            for (size_t i = 0; i < self.grad.size(); ++i) g[i] += inv * self.grad[i];
        }
    };
    return Tensor(n);
}

Tensor reshape(const Tensor& x, const Shape& s) {
    if (shape_numel(s) != x.numel()) throw ParamError("reshape: element count mismatch");
    auto n = make_node(s);
    n->val = x.node()->val;
    return finish(n, {x}, [x = x.node()](TensorNode& self) {
        if (!x->requires_grad) return;
        float* g = x->grad_buf();
        for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    });
}

}  // namespace ornatry
