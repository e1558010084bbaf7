// Copyright (C) 2026 the ornatry authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <cstring>

#include "ornatry/errors.hpp"
#include "ornatry/gemm.hpp"
#include "ornatry/tensor.hpp"

namespace ornatry {

namespace {

struct ConvDims {
    int batch, cin, h, w, cout, kh, kw, stride, pad, oh, ow;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad) {
    if (x.shape().size() != 4 || w.shape().size() != 4) throw ParamError("conv2d: expects 4-D");
    ConvDims d{};
    d.batch = x.dim(0);
    d.cin = x.dim(1);
    d.h = x.dim(2);
    d.w = x.dim(3);
    d.cout = w.dim(0);
    d.kh = w.dim(2);
    d.kw = w.dim(3);
    d.stride = stride;
    d.pad = pad;
    if (w.dim(1) != d.cin) throw ParamError("conv2d: channel mismatch");
    d.oh = (d.h + 2 * pad - d.kh) / stride + 1;
    d.ow = (d.w + 2 * pad - d.kw) / stride + 1;
    if (d.oh <= 0 || d.ow <= 0) throw ParamError("conv2d: output collapses to zero");
    return d;
}

// col is (Cin*kh*kw) x (oh*ow), one sample. Stride-1 rows are contiguous in
// the source, so the interior copies in bulk.
void im2col(const float* x, const ConvDims& d, float* col) {
    int spatial = d.oh * d.ow;
    for (int ci = 0; ci < d.cin; ++ci) {
        const float* xc = x + static_cast<size_t>(ci) * d.h * d.w;
        for (int ky = 0; ky < d.kh; ++ky) {
            for (int kx = 0; kx < d.kw; ++kx) {
                float* row = col + (static_cast<size_t>(ci) * d.kh * d.kw + ky * d.kw + kx) * spatial;
                for (int oy = 0; oy < d.oh; ++oy) {
                    int iy = oy * d.stride - d.pad + ky;
                    float* dst = row + static_cast<size_t>(oy) * d.ow;
                    if (iy < 0 || iy >= d.h) {
                        std::memset(dst, 0, sizeof(float) * d.ow);
                        continue;
                    }
                    const float* src_row = xc + static_cast<size_t>(iy) * d.w;
                    if (d.stride == 1) {
                        int ix0 = kx - d.pad;  // source x of output column 0
                        int lead = std::max(0, -ix0);
                        int tail = std::max(0, ix0 + d.ow - d.w);
                        int body = d.ow - lead - tail;
                        if (lead) std::memset(dst, 0, sizeof(float) * lead);
                        if (body > 0)
                            std::memcpy(dst + lead, src_row + ix0 + lead, sizeof(float) * body);
                        if (tail) std::memset(dst + d.ow - tail, 0, sizeof(float) * tail);
                    } else {
                        for (int ox = 0; ox < d.ow; ++ox) {
                            int ix = ox * d.stride - d.pad + kx;
                            dst[ox] = (ix >= 0 && ix < d.w) ? src_row[ix] : 0.f;
                        }
                    }
                }
            }
        }
    }
}

void col2im_add(const float* col, const ConvDims& d, float* dx) {
    int spatial = d.oh * d.ow;
    for (int ci = 0; ci < d.cin; ++ci) {
        float* xc = dx + static_cast<size_t>(ci) * d.h * d.w;
        for (int ky = 0; ky < d.kh; ++ky) {
            for (int kx = 0; kx < d.kw; ++kx) {
                const float* row =
                    col + (static_cast<size_t>(ci) * d.kh * d.kw + ky * d.kw + kx) * spatial;
                for (int oy = 0; oy < d.oh; ++oy) {
                    int iy = oy * d.stride - d.pad + ky;
                    if (iy < 0 || iy >= d.h) continue;
                    const float* src = row + static_cast<size_t>(oy) * d.ow;
                    float* dst_row = xc + static_cast<size_t>(iy) * d.w;
                    if (d.stride == 1) {
                        int ix0 = kx - d.pad;
                        int lead = std::max(0, -ix0);
                        int tail = std::max(0, ix0 + d.ow - d.w);
                        int body = d.ow - lead - tail;
                        float* dst = dst_row + ix0 + lead;
                        const float* s = src + lead;
                        for (int i = 0; i < body; ++i) dst[i] += s[i];
                    } else {
                        for (int ox = 0; ox < d.ow; ++ox) {
                            int ix = ox * d.stride - d.pad + kx;
                            if (ix >= 0 && ix < d.w) dst_row[ix] += src[ox];
                        }
                    }
                }
            }
        }
    }
}

std::shared_ptr<TensorNode> alloc(const Shape& s) {
    auto n = std::make_shared<TensorNode>();
    n->shape = s;
    n->val.resize(static_cast<size_t>(shape_numel(s)));
    return n;
}

Tensor wire(std::shared_ptr<TensorNode> n, std::initializer_list<Tensor> parents,
            std::function<void(TensorNode&)> bk) {
    bool need = false;
    if (grad_enabled())
        for (const auto& p : parents) need = need || p.requires_grad();
    if (need) {
        n->requires_grad = true;
        for (const auto& p : parents)
            if (p.defined()) n->parents.push_back(p.node());
        n->backward_fn = std::move(bk);
    }
    return Tensor(std::move(n));
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
    ConvDims d = conv_dims(x, w, stride, pad);
    if (b.defined() && b.numel() != d.cout) throw ParamError("conv2d: bias size mismatch");
    int k = d.cin * d.kh * d.kw;
    int spatial = d.oh * d.ow;
    // 1x1 stride-1 convolutions multiply the channel planes directly
    bool direct = d.kh == 1 && d.kw == 1 && d.stride == 1 && d.pad == 0;
    auto n = alloc({d.batch, d.cout, d.oh, d.ow});

    std::vector<float> col(direct ? 0 : static_cast<size_t>(k) * spatial);
    for (int bi = 0; bi < d.batch; ++bi) {
        const float* src = x.data() + static_cast<size_t>(bi) * d.cin * d.h * d.w;
        const float* bmat = src;
        if (!direct) {
            im2col(src, d, col.data());
            bmat = col.data();
        }
        float* out = n->val.data() + static_cast<size_t>(bi) * d.cout * spatial;
        gemm(d.cout, spatial, k, w.data(), bmat, out);
        if (b.defined()) {
            for (int co = 0; co < d.cout; ++co) {
                float bias = b.data()[co];
                float* oc = out + static_cast<size_t>(co) * spatial;
                for (int i = 0; i < spatial; ++i) oc[i] += bias;
            }
        }
    }

    return wire(n, {x, w, b}, [x = x.node(), w = w.node(), b = b.node(), d, k, spatial,
                               direct](TensorNode& self) {
        std::vector<float> col(direct ? 0 : static_cast<size_t>(k) * spatial);
        std::vector<float> dcol(x->requires_grad && !direct
                                    ? static_cast<size_t>(k) * spatial
                                    : 0);
        for (int bi = 0; bi < d.batch; ++bi) {
            const float* dy = self.grad.data() + static_cast<size_t>(bi) * d.cout * spatial;
            const float* src = x->val.data() + static_cast<size_t>(bi) * d.cin * d.h * d.w;
            const float* bmat = src;
            if (!direct && (w->requires_grad || x->requires_grad)) {
                im2col(src, d, col.data());
                bmat = col.data();
            }
            if (w->requires_grad)  // dW += dY * col^T
                gemm_nt(d.cout, k, spatial, dy, bmat, w->grad_buf(), true);
            if (x->requires_grad) {  // dcol = W^T dY, scatter back
                float* gx = x->grad_buf() + static_cast<size_t>(bi) * d.cin * d.h * d.w;
                if (direct) {
                    gemm_tn(k, spatial, d.cout, w->val.data(), dy, gx, true);
                } else {
                    gemm_tn(k, spatial, d.cout, w->val.data(), dy, dcol.data());
                    col2im_add(dcol.data(), d, gx);
                }
            }
            if (b && b->requires_grad) {
                float* gb = b->grad_buf();
                for (int co = 0; co < d.cout; ++co) {
                    const float* dyc = dy + static_cast<size_t>(co) * spatial;
                    float s = 0.f;
                    for (int i = 0; i < spatial; ++i) s += dyc[i];
                    gb[co] += s;
                }
            }
        }
    });
}

Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta, float eps) {
    if (x.shape().size() != 4) throw ParamError("group_norm: expects 4-D");
    int batch = x.dim(0), ch = x.dim(1), hw = x.dim(2) * x.dim(3);
    if (ch % groups != 0) throw ParamError("group_norm: channels not divisible by groups");
    int gch = ch / groups;
    int64_t gsize = static_cast<int64_t>(gch) * hw;
    auto n = alloc(x.shape());
    auto stats = std::make_shared<std::vector<float>>(static_cast<size_t>(batch) * groups * 2);

    const float* px = x.data();
    for (int bi = 0; bi < batch; ++bi) {
        for (int g = 0; g < groups; ++g) {
            const float* xg = px + (static_cast<size_t>(bi) * ch + static_cast<size_t>(g) * gch) * hw;
            double mean = 0;
            for (int64_t i = 0; i < gsize; ++i) mean += xg[i];
            mean /= gsize;
            double var = 0;
            for (int64_t i = 0; i < gsize; ++i) {
                double dd = xg[i] - mean;
                var += dd * dd;
            }
            var /= gsize;
            float rstd = 1.f / std::sqrt(static_cast<float>(var) + eps);
            (*stats)[(static_cast<size_t>(bi) * groups + g) * 2] = static_cast<float>(mean);
            (*stats)[(static_cast<size_t>(bi) * groups + g) * 2 + 1] = rstd;
            float* yg = n->val.data() + (static_cast<size_t>(bi) * ch + static_cast<size_t>(g) * gch) * hw;
            for (int ci = 0; ci < gch; ++ci) {
                float gm = gamma.data()[g * gch + ci];
                float bt = beta.data()[g * gch + ci];
                const float* xc = xg + static_cast<size_t>(ci) * hw;
                float* yc = yg + static_cast<size_t>(ci) * hw;
                for (int i = 0; i < hw; ++i)
                    yc[i] = (xc[i] - static_cast<float>(mean)) * rstd * gm + bt;
            }
        }
    }

    return wire(n, {x, gamma, beta},
                [x = x.node(), gamma = gamma.node(), beta = beta.node(), stats, batch, groups, gch,
                 hw, gsize](TensorNode& self) {
        int ch = groups * gch;
        for (int bi = 0; bi < batch; ++bi) {
            for (int g = 0; g < groups; ++g) {
                float mean = (*stats)[(static_cast<size_t>(bi) * groups + g) * 2];
                float rstd = (*stats)[(static_cast<size_t>(bi) * groups + g) * 2 + 1];
                size_t base = (static_cast<size_t>(bi) * ch + static_cast<size_t>(g) * gch) * hw;
                const float* xg = x->val.data() + base;
                const float* dyg = self.grad.data() + base;
                // accumulate per-channel param grads and the two group reductions
                double sum_dyh = 0, sum_dyh_xhat = 0;
                for (int ci = 0; ci < gch; ++ci) {
                    float gm = gamma->val[g * gch + ci];
                    const float* xc = xg + static_cast<size_t>(ci) * hw;
                    const float* dyc = dyg + static_cast<size_t>(ci) * hw;
                    double dg = 0, db = 0;
                    for (int i = 0; i < hw; ++i) {
                        float xhat = (xc[i] - mean) * rstd;
                        dg += dyc[i] * xhat;
                        db += dyc[i];
                        sum_dyh += dyc[i] * gm;
                        sum_dyh_xhat += dyc[i] * gm * xhat;
                    }
                    if (gamma->requires_grad) gamma->grad_buf()[g * gch + ci] += static_cast<float>(dg);
                    if (beta->requires_grad) beta->grad_buf()[g * gch + ci] += static_cast<float>(db);
                }
                if (!x->requires_grad) continue;
                float m1 = static_cast<float>(sum_dyh / gsize);
                float m2 = static_cast<float>(sum_dyh_xhat / gsize);
                float* gx = x->grad_buf() + base;
                for (int ci = 0; ci < gch; ++ci) {
                    float gm = gamma->val[g * gch + ci];
                    const float* xc = xg + static_cast<size_t>(ci) * hw;
                    const float* dyc = dyg + static_cast<size_t>(ci) * hw;
                    float* gc = gx + static_cast<size_t>(ci) * hw;
                    for (int i = 0; i < hw; ++i) {
                        float xhat = (xc[i] - mean) * rstd;
                        gc[i] += rstd * (dyc[i] * gm - m1 - xhat * m2);
                    }
                }
            }
        }
    });
}

Tensor mul_mask(const Tensor& x, const Tensor& m) {
    if (x.shape().size() != 4 || m.shape().size() != 4 || m.dim(1) != 1 || m.dim(0) != x.dim(0) ||
        m.dim(2) != x.dim(2) || m.dim(3) != x.dim(3))
        throw ParamError("mul_mask: shape mismatch");
    int batch = x.dim(0), ch = x.dim(1), hw = x.dim(2) * x.dim(3);
    auto n = alloc(x.shape());
    const float* px = x.data();
    const float* pm = m.data();
    for (int bi = 0; bi < batch; ++bi)
        for (int ci = 0; ci < ch; ++ci) {
            const float* xc = px + (static_cast<size_t>(bi) * ch + ci) * hw;
            const float* mc = pm + static_cast<size_t>(bi) * hw;
            float* yc = n->val.data() + (static_cast<size_t>(bi) * ch + ci) * hw;
            for (int i = 0; i < hw; ++i) yc[i] = xc[i] * mc[i];
        }
    return wire(n, {x, m}, [x = x.node(), m = m.node(), batch, ch, hw](TensorNode& self) {
        if (x->requires_grad) {
            float* g = x->grad_buf();
            for (int bi = 0; bi < batch; ++bi)
                for (int ci = 0; ci < ch; ++ci) {
                    size_t off = (static_cast<size_t>(bi) * ch + ci) * hw;
                    const float* mc = m->val.data() + static_cast<size_t>(bi) * hw;
                    for (int i = 0; i < hw; ++i) g[off + i] += self.grad[off + i] * mc[i];
                }
        }
        if (m->requires_grad) {
            float* g = m->grad_buf();
            for (int bi = 0; bi < batch; ++bi)
                for (int ci = 0; ci < ch; ++ci) {
                    size_t off = (static_cast<size_t>(bi) * ch + ci) * hw;
                    float* gm = g + static_cast<size_t>(bi) * hw;
                    for (int i = 0; i < hw; ++i) gm[i] += self.grad[off + i] * x->val[off + i];
                }
        }
    });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 4 || b.shape().size() != 4 || a.dim(0) != b.dim(0) ||
        a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
        throw ParamError("concat_channels: shape mismatch");
    int batch = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
    auto n = alloc({batch, ca + cb, a.dim(2), a.dim(3)});
    for (int bi = 0; bi < batch; ++bi) {
        std::memcpy(n->val.data() + static_cast<size_t>(bi) * (ca + cb) * hw,
                    a.data() + static_cast<size_t>(bi) * ca * hw, sizeof(float) * ca * hw);
        std::memcpy(n->val.data() + (static_cast<size_t>(bi) * (ca + cb) + ca) * hw,
                    b.data() + static_cast<size_t>(bi) * cb * hw, sizeof(float) * cb * hw);
    }
    return wire(n, {a, b}, [a = a.node(), b = b.node(), batch, ca, cb, hw](TensorNode& self) {
        for (int bi = 0; bi < batch; ++bi) {
            if (a->requires_grad) {
                float* g = a->grad_buf() + static_cast<size_t>(bi) * ca * hw;
                const float* s = self.grad.data() + static_cast<size_t>(bi) * (ca + cb) * hw;
                for (size_t i = 0; i < static_cast<size_t>(ca) * hw; ++i) g[i] += s[i];
            }
            if (b->requires_grad) {
                float* g = b->grad_buf() + static_cast<size_t>(bi) * cb * hw;
                const float* s = self.grad.data() + (static_cast<size_t>(bi) * (ca + cb) + ca) * hw;
                for (size_t i = 0; i < static_cast<size_t>(cb) * hw; ++i) g[i] += s[i];
            }
        }
    });
}

Tensor concat_width(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 4 || b.shape().size() != 4 || a.dim(0) != b.dim(0) ||
        a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2))
        throw ParamError("concat_width: shape mismatch");
    int batch = a.dim(0), ch = a.dim(1), h = a.dim(2), wa = a.dim(3), wb = b.dim(3);
    int w = wa + wb;
    auto n = alloc({batch, ch, h, w});
    const float* pa = a.data();
    const float* pb = b.data();
    for (int bc = 0; bc < batch * ch; ++bc)
        for (int y = 0; y < h; ++y) {
            float* row = n->val.data() + (static_cast<size_t>(bc) * h + y) * w;
            std::memcpy(row, pa + (static_cast<size_t>(bc) * h + y) * wa, sizeof(float) * wa);
            std::memcpy(row + wa, pb + (static_cast<size_t>(bc) * h + y) * wb, sizeof(float) * wb);
        }
    return wire(n, {a, b}, [a = a.node(), b = b.node(), batch, ch, h, wa, wb, w](TensorNode& self) {
        for (int bc = 0; bc < batch * ch; ++bc)
            for (int y = 0; y < h; ++y) {
                const float* s = self.grad.data() + (static_cast<size_t>(bc) * h + y) * w;
                if (a->requires_grad) {
                    float* g = a->grad_buf() + (static_cast<size_t>(bc) * h + y) * wa;
                    for (int i = 0; i < wa; ++i) g[i] += s[i];
                }
                if (b->requires_grad) {
                    float* g = b->grad_buf() + (static_cast<size_t>(bc) * h + y) * wb;
                    for (int i = 0; i < wb; ++i) g[i] += s[wa + i];
                }
            }
    });
}

Tensor slice_width(const Tensor& x, int w0, int w1) {
    if (x.shape().size() != 4 || w0 < 0 || w1 > x.dim(3) || w0 >= w1)
        throw ParamError("slice_width: bad range");
    int batch = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3), ow = w1 - w0;
    auto n = alloc({batch, ch, h, ow});
    const float* px = x.data();
    for (int bi = 0; bi < batch; ++bi)
        for (int ci = 0; ci < ch; ++ci)
            for (int y = 0; y < h; ++y)
                std::memcpy(
                    n->val.data() + ((static_cast<size_t>(bi) * ch + ci) * h + y) * ow,
                    px + ((static_cast<size_t>(bi) * ch + ci) * h + y) * w + w0,
                    sizeof(float) * ow);
    return wire(n, {x}, [x = x.node(), batch, ch, h, w, w0, ow](TensorNode& self) {
        if (!x->requires_grad) return;
        float* g = x->grad_buf();
        for (int bi = 0; bi < batch; ++bi)
            for (int ci = 0; ci < ch; ++ci)
                for (int y = 0; y < h; ++y) {
                    float* gr = g + ((static_cast<size_t>(bi) * ch + ci) * h + y) * w + w0;
                    const float* s =
                        self.grad.data() + ((static_cast<size_t>(bi) * ch + ci) * h + y) * ow;
                    for (int i = 0; i < ow; ++i) gr[i] += s[i];
                }
    });
}

Tensor upsample_nearest2x(const Tensor& x) {
    if (x.shape().size() != 4) throw ParamError("upsample_nearest2x: expects 4-D");
    int batch = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
    auto n = alloc({batch, ch, h * 2, w * 2});
    const float* px = x.data();
    for (int bc = 0; bc < batch * ch; ++bc) {
        const float* src = px + static_cast<size_t>(bc) * h * w;
        float* dst = n->val.data() + static_cast<size_t>(bc) * h * w * 4;
        for (int y = 0; y < 2 * h; ++y)
            for (int x2 = 0; x2 < 2 * w; ++x2)
                dst[static_cast<size_t>(y) * 2 * w + x2] = src[static_cast<size_t>(y / 2) * w + x2 / 2];
    }
    return wire(n, {x}, [x = x.node(), batch, ch, h, w](TensorNode& self) {
        if (!x->requires_grad) return;
        float* g = x->grad_buf();
        for (int bc = 0; bc < batch * ch; ++bc) {
            float* gs = g + static_cast<size_t>(bc) * h * w;
            const float* s = self.grad.data() + static_cast<size_t>(bc) * h * w * 4;
            for (int y = 0; y < 2 * h; ++y)
                for (int x2 = 0; x2 < 2 * w; ++x2)
                    gs[static_cast<size_t>(y / 2) * w + x2 / 2] += s[static_cast<size_t>(y) * 2 * w + x2];
        }
    });
}

Tensor pixel_shuffle2x(const Tensor& x) {
    if (x.shape().size() != 4 || x.dim(1) % 4 != 0)
        throw ParamError("pixel_shuffle2x: channel count must be divisible by 4");
    int batch = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
    int cout = cin / 4;
    auto n = alloc({batch, cout, 2 * h, 2 * w});
    const float* px = x.data();
    for (int bi = 0; bi < batch; ++bi)
        for (int co = 0; co < cout; ++co)
            for (int sy = 0; sy < 2; ++sy)
                for (int sx = 0; sx < 2; ++sx) {
                    const float* src =
                        px + ((static_cast<size_t>(bi) * cin + co * 4 + sy * 2 + sx) * h) * w;
                    float* dst = n->val.data() +
                                 (static_cast<size_t>(bi) * cout + co) * 4 * h * w;
                    for (int y = 0; y < h; ++y)
                        for (int x2 = 0; x2 < w; ++x2)
                            dst[static_cast<size_t>(2 * y + sy) * 2 * w + 2 * x2 + sx] =
                                src[static_cast<size_t>(y) * w + x2];
                }
    return wire(n, {x}, [x = x.node(), batch, cin, cout, h, w](TensorNode& self) {
        if (!x->requires_grad) return;
        float* g = x->grad_buf();
        for (int bi = 0; bi < batch; ++bi)
            for (int co = 0; co < cout; ++co)
                for (int sy = 0; sy < 2; ++sy)
                    for (int sx = 0; sx < 2; ++sx) {
                        float* gs =
                            g + ((static_cast<size_t>(bi) * cin + co * 4 + sy * 2 + sx) * h) * w;
                        const float* sg = self.grad.data() +
                                          (static_cast<size_t>(bi) * cout + co) * 4 * h * w;
                        for (int y = 0; y < h; ++y)
                            for (int x2 = 0; x2 < w; ++x2)
                                gs[static_cast<size_t>(y) * w + x2] +=
                                    sg[static_cast<size_t>(2 * y + sy) * 2 * w + 2 * x2 + sx];
                    }
    });
}

Tensor upsample_bilinear(const Tensor& x, int out_h, int out_w) {
    if (x.shape().size() != 4) throw ParamError("upsample_bilinear: expects 4-D");
    int batch = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
    auto n = alloc({batch, ch, out_h, out_w});
    float sy = out_h > 1 ? static_cast<float>(h - 1) / (out_h - 1) : 0.f;
    float sx = out_w > 1 ? static_cast<float>(w - 1) / (out_w - 1) : 0.f;
    const float* px = x.data();
    for (int bc = 0; bc < batch * ch; ++bc) {
        const float* src = px + static_cast<size_t>(bc) * h * w;
        float* dst = n->val.data() + static_cast<size_t>(bc) * out_h * out_w;
        for (int oy = 0; oy < out_h; ++oy) {
            float fy = oy * sy;
            int y0 = static_cast<int>(fy);
            int y1 = std::min(y0 + 1, h - 1);
            float wy = fy - y0;
            for (int ox = 0; ox < out_w; ++ox) {
                float fx = ox * sx;
                int x0 = static_cast<int>(fx);
                int x1 = std::min(x0 + 1, w - 1);
                float wx = fx - x0;
                dst[static_cast<size_t>(oy) * out_w + ox] =
                    (src[static_cast<size_t>(y0) * w + x0] * (1 - wx) +
                     src[static_cast<size_t>(y0) * w + x1] * wx) *
                        (1 - wy) +
                    (src[static_cast<size_t>(y1) * w + x0] * (1 - wx) +
                     src[static_cast<size_t>(y1) * w + x1] * wx) *
                        wy;
            }
        }
    }
    return wire(n, {x}, [x = x.node(), batch, ch, h, w, out_h, out_w, sy, sx](TensorNode& self) {
        if (!x->requires_grad) return;
        float* g = x->grad_buf();
        for (int bc = 0; bc < batch * ch; ++bc) {
            float* gs = g + static_cast<size_t>(bc) * h * w;
            const float* s = self.grad.data() + static_cast<size_t>(bc) * out_h * out_w;
            for (int oy = 0; oy < out_h; ++oy) {
                float fy = oy * sy;
                int y0 = static_cast<int>(fy);
                int y1 = std::min(y0 + 1, h - 1);
                float wy = fy - y0;
                for (int ox = 0; ox < out_w; ++ox) {
                    float fx = ox * sx;
                    int x0 = static_cast<int>(fx);
                    int x1 = std::min(x0 + 1, w - 1);
                    float wx = fx - x0;
                    float d = s[static_cast<size_t>(oy) * out_w + ox];
                    gs[static_cast<size_t>(y0) * w + x0] += d * (1 - wx) * (1 - wy);
                    gs[static_cast<size_t>(y0) * w + x1] += d * wx * (1 - wy);
                    gs[static_cast<size_t>(y1) * w + x0] += d * (1 - wx) * wy;
                    gs[static_cast<size_t>(y1) * w + x1] += d * wx * wy;
                }
            }
        }
    });
}

Tensor avg_pool2x(const Tensor& x) {
    if (x.shape().size() != 4 || x.dim(2) % 2 || x.dim(3) % 2)
        throw ParamError("avg_pool2x: expects even 4-D spatial dims");
    int batch = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
    int oh = h / 2, ow = w / 2;
    auto n = alloc({batch, ch, oh, ow});
    const float* px = x.data();
    for (int bc = 0; bc < batch * ch; ++bc) {
        const float* src = px + static_cast<size_t>(bc) * h * w;
        float* dst = n->val.data() + static_cast<size_t>(bc) * oh * ow;
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox)
                dst[static_cast<size_t>(oy) * ow + ox] =
                    0.25f * (src[static_cast<size_t>(2 * oy) * w + 2 * ox] +
                             src[static_cast<size_t>(2 * oy) * w + 2 * ox + 1] +
                             src[static_cast<size_t>(2 * oy + 1) * w + 2 * ox] +
                             src[static_cast<size_t>(2 * oy + 1) * w + 2 * ox + 1]);
    }
    return wire(n, {x}, [x = x.node(), batch, ch, h, w, oh, ow](TensorNode& self) {
        if (!x->requires_grad) return;
        float* g = x->grad_buf();
        for (int bc = 0; bc < batch * ch; ++bc) {
            float* gs = g + static_cast<size_t>(bc) * h * w;
            const float* s = self.grad.data() + static_cast<size_t>(bc) * oh * ow;
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    float d = 0.25f * s[static_cast<size_t>(oy) * ow + ox];
                    gs[static_cast<size_t>(2 * oy) * w + 2 * ox] += d;
                    gs[static_cast<size_t>(2 * oy) * w + 2 * ox + 1] += d;
                    gs[static_cast<size_t>(2 * oy + 1) * w + 2 * ox] += d;
                    gs[static_cast<size_t>(2 * oy + 1) * w + 2 * ox + 1] += d;
                }
        }
    });
}

Tensor nchw_to_tokens(const Tensor& x) {
    if (x.shape().size() != 4) throw ParamError("nchw_to_tokens: expects 4-D");
    int batch = x.dim(0), ch = x.dim(1), hw = x.dim(2) * x.dim(3);
    auto n = alloc({batch * hw, ch});
    const float* px = x.data();
    for (int bi = 0; bi < batch; ++bi)
        for (int ci = 0; ci < ch; ++ci) {
            const float* src = px + (static_cast<size_t>(bi) * ch + ci) * hw;
            for (int i = 0; i < hw; ++i)
                n->val[(static_cast<size_t>(bi) * hw + i) * ch + ci] = src[i];
        }
    return wire(n, {x}, [x = x.node(), batch, ch, hw](TensorNode& self) {
        if (!x->requires_grad) return;
        float* g = x->grad_buf();
        for (int bi = 0; bi < batch; ++bi)
            for (int ci = 0; ci < ch; ++ci) {
                float* gc = g + (static_cast<size_t>(bi) * ch + ci) * hw;
                for (int i = 0; i < hw; ++i)
                    gc[i] += self.grad[(static_cast<size_t>(bi) * hw + i) * ch + ci];
            }
    });
}

Tensor tokens_to_nchw(const Tensor& x, int n_, int c_, int h_, int w_) {
    if (x.shape().size() != 2 || x.dim(0) != n_ * h_ * w_ || x.dim(1) != c_)
        throw ParamError("tokens_to_nchw: shape mismatch");
    int hw = h_ * w_;
    auto n = alloc({n_, c_, h_, w_});
    const float* px = x.data();
    for (int bi = 0; bi < n_; ++bi)
        for (int ci = 0; ci < c_; ++ci) {
            float* dst = n->val.data() + (static_cast<size_t>(bi) * c_ + ci) * hw;
            for (int i = 0; i < hw; ++i)
                dst[i] = px[(static_cast<size_t>(bi) * hw + i) * c_ + ci];
        }
    return wire(n, {x}, [x = x.node(), n_, c_, hw](TensorNode& self) {
        if (!x->requires_grad) return;
        float* g = x->grad_buf();
        for (int bi = 0; bi < n_; ++bi)
            for (int ci = 0; ci < c_; ++ci) {
                const float* s = self.grad.data() + (static_cast<size_t>(bi) * c_ + ci) * hw;
                for (int i = 0; i < hw; ++i)
                    g[(static_cast<size_t>(bi) * hw + i) * c_ + ci] += s[i];
            }
    });
}

Tensor add_time_bias(const Tensor& x, const Tensor& e) {
    if (x.shape().size() != 4 || e.shape().size() != 2 || e.dim(0) != x.dim(0) ||
        e.dim(1) != x.dim(1))
        throw ParamError("add_time_bias: shape mismatch");
    int batch = x.dim(0), ch = x.dim(1), hw = x.dim(2) * x.dim(3);
    auto n = alloc(x.shape());
    const float* px = x.data();
    const float* pe = e.data();
    for (int bi = 0; bi < batch; ++bi)
        for (int ci = 0; ci < ch; ++ci) {
            float bias = pe[static_cast<size_t>(bi) * ch + ci];
            const float* xc = px + (static_cast<size_t>(bi) * ch + ci) * hw;
            float* yc = n->val.data() + (static_cast<size_t>(bi) * ch + ci) * hw;
            for (int i = 0; i < hw; ++i) yc[i] = xc[i] + bias;
        }
    return wire(n, {x, e}, [x = x.node(), e = e.node(), batch, ch, hw](TensorNode& self) {
        if (x->requires_grad) {
            float* g = x->grad_buf();
            for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
        }
        if (e->requires_grad) {
            float* g = e->grad_buf();
            for (int bi = 0; bi < batch; ++bi)
                for (int ci = 0; ci < ch; ++ci) {
                    const float* s = self.grad.data() + (static_cast<size_t>(bi) * ch + ci) * hw;
                    float acc = 0.f;
                    for (int i = 0; i < hw; ++i) acc += s[i];
                    g[static_cast<size_t>(bi) * ch + ci] += acc;
                }
        }
    });
}

}  // namespace ornatry
