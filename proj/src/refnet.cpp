// Copyright (C) 2026 the ornatry authors
// SPDX-License-Identifier: Apache-2.0

#include "ornatry/refnet.hpp"

#include <cmath>

#include "ornatry/errors.hpp"

namespace ornatry {

Tensor FeatureStack::ornament_half(int level) const {
    const Level& l = levels.at(level);
    return slice_width(l.features, 0, l.split);
}

Tensor FeatureStack::model_half(int level) const {
    const Level& l = levels.at(level);
    return slice_width(l.features, l.split, 2 * l.split);
}

SelfAttention::SelfAttention(ParamRegistry& reg, const std::string& name, int channels, Rng& rng)
    : channels(channels) {
    norm = GroupNorm(reg, name + ".norm", channels, 8);
    q = Linear(reg, name + ".q", channels, channels, rng);
    k = Linear(reg, name + ".k", channels, channels, rng);
    v = Linear(reg, name + ".v", channels, channels, rng);
    proj = Linear(reg, name + ".proj", channels, channels, rng, /*zero_init=*/true);
}

Tensor SelfAttention::forward(const Tensor& x) const {
    int batch = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    int len = h * w;
    float inv_scale = 1.f / std::sqrt(static_cast<float>(c));
    Tensor xt = nchw_to_tokens(norm.forward(x));
    Tensor q_all = q.forward(xt);
    Tensor k_all = k.forward(xt);
    Tensor v_all = v.forward(xt);
    std::vector<Tensor> outs;
    outs.reserve(batch);
    for (int b = 0; b < batch; ++b) {
        Tensor qb = slice_rows(q_all, b * len, (b + 1) * len);
        Tensor kb = slice_rows(k_all, b * len, (b + 1) * len);
        Tensor vb = slice_rows(v_all, b * len, (b + 1) * len);
        Tensor weights = softmax_rows(scale(matmul_nt(qb, kb), inv_scale));
        outs.push_back(matmul(weights, vb));
    }
    Tensor out = proj.forward(concat_rows(outs));
    return add(x, tokens_to_nchw(out, batch, c, h, w));
}

InjectedAttention::InjectedAttention(ParamRegistry& reg, const std::string& name, int channels,
                                     int ref_channels, int token_dim, Rng& rng)
    : channels(channels) {
    norm = GroupNorm(reg, name + ".norm", channels, 8);
    q = Linear(reg, name + ".q", channels, channels, rng);
    k = Linear(reg, name + ".k", channels, channels, rng);
    v = Linear(reg, name + ".v", channels, channels, rng);
    proj = Linear(reg, name + ".proj", channels, channels, rng, /*zero_init=*/true);
    ref_k = Linear(reg, name + ".ref_k", ref_channels, channels, rng);
    ref_v = Linear(reg, name + ".ref_v", ref_channels, channels, rng);
    norm2 = GroupNorm(reg, name + ".norm2", channels, 8);
    cq = Linear(reg, name + ".cq", channels, channels, rng);
    ck = Linear(reg, name + ".ck", token_dim, channels, rng);
    cv = Linear(reg, name + ".cv", token_dim, channels, rng);
    cproj = Linear(reg, name + ".cproj", channels, channels, rng, /*zero_init=*/true);
}

Tensor InjectedAttention::forward(const Tensor& x, const FeatureStack::Level* ref,
                                  const Tensor& tokens, int token_count,
                                  std::vector<Tensor>* recorded,
                                  const std::vector<float>* key_bias) const {
    int batch = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    int len = h * w;
    float inv_scale = 1.f / std::sqrt(static_cast<float>(c));

    Tensor xt = nchw_to_tokens(norm.forward(x));  // (B*L, C)
    Tensor q_all = q.forward(xt);
    Tensor k_all = k.forward(xt);
    Tensor v_all = v.forward(xt);

    int n_ref = 0;
    Tensor rk_o, rv_o, rk_m, rv_m;
    if (ref) {
        Tensor half_o = slice_width(ref->features, 0, ref->split);
        Tensor half_m = slice_width(ref->features, ref->split, 2 * ref->split);
        Tensor to = nchw_to_tokens(half_o);  // (B*n_ref, Cr)
        Tensor tm = nchw_to_tokens(half_m);
        rk_o = ref_k.forward(to);
        rv_o = ref_v.forward(to);
        rk_m = ref_k.forward(tm);
        rv_m = ref_v.forward(tm);
        n_ref = ref->features.dim(2) * ref->split;
    }

    std::vector<Tensor> outs;
    outs.reserve(batch);
    for (int b = 0; b < batch; ++b) {
        Tensor qb = slice_rows(q_all, b * len, (b + 1) * len);
        Tensor kb = slice_rows(k_all, b * len, (b + 1) * len);
        Tensor vb = slice_rows(v_all, b * len, (b + 1) * len);
        if (ref) {
            kb = concat_rows({kb, slice_rows(rk_o, b * n_ref, (b + 1) * n_ref),
                              slice_rows(rk_m, b * n_ref, (b + 1) * n_ref)});
            vb = concat_rows({vb, slice_rows(rv_o, b * n_ref, (b + 1) * n_ref),
                              slice_rows(rv_m, b * n_ref, (b + 1) * n_ref)});
        }
        Tensor logits = scale(matmul_nt(qb, kb), inv_scale);
        if (key_bias) logits = add_col_bias(logits, *key_bias);
        Tensor weights = softmax_rows(logits);
        if (recorded) {
            if (!ref || n_ref != len)
                throw ParamError("attention recording requires matching reference level");
            recorded->push_back(slice_cols(weights, len, len + n_ref));
        }
        outs.push_back(matmul(weights, vb));
    }
    Tensor attn_out = proj.forward(concat_rows(outs));
    Tensor x1 = add(x, tokens_to_nchw(attn_out, batch, c, h, w));

    if (!tokens.defined()) return x1;

    // cross-attention to the ornament embedding tokens
    Tensor x1t = nchw_to_tokens(norm2.forward(x1));
    Tensor q2 = cq.forward(x1t);
    Tensor k2 = ck.forward(tokens);  // (B*token_count, C)
    Tensor v2 = cv.forward(tokens);
    std::vector<Tensor> outs2;
    outs2.reserve(batch);
    for (int b = 0; b < batch; ++b) {
        Tensor qb = slice_rows(q2, b * len, (b + 1) * len);
        Tensor kb = slice_rows(k2, b * token_count, (b + 1) * token_count);
        Tensor vb = slice_rows(v2, b * token_count, (b + 1) * token_count);
        Tensor weights = softmax_rows(scale(matmul_nt(qb, kb), inv_scale));
        outs2.push_back(matmul(weights, vb));
    }
    Tensor cross_out = cproj.forward(concat_rows(outs2));
    return add(x1, tokens_to_nchw(cross_out, batch, c, h, w));
}

TryonModel::TryonModel(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
    Rng rng(Rng::mix(seed, 0x6d6f64656cULL));
    int c0 = cfg.widths[0], c1 = cfg.widths[1], c2 = cfg.widths[2];
    int td = cfg.time_dim;

    temb_ = TimeEmbed(reg_, "temb", td, rng);

    // denoiser: 7 input planes (z_t rgb + masked model rgb + wearing mask)
    stem_ = Conv2d(reg_, "stem", 7, c0, 3, 2, 1, rng);
    enc0_ = ResBlock(reg_, "enc0", c0, c0, td, rng);
    down1_ = Conv2d(reg_, "down1", c0, c1, 3, 2, 1, rng);
    enc1_ = ResBlock(reg_, "enc1", c1, c1, td, rng);
    attn_enc1_ = InjectedAttention(reg_, "attn_enc1", c1, c1, cfg.token_dim, rng);
    down2_ = Conv2d(reg_, "down2", c1, c2, 3, 2, 1, rng);
    enc2_ = ResBlock(reg_, "enc2", c2, c2, td, rng);
    mid1_ = ResBlock(reg_, "mid1", c2, c2, td, rng);
    attn_mid_ = InjectedAttention(reg_, "attn_mid", c2, c2, cfg.token_dim, rng);
    mid2_ = ResBlock(reg_, "mid2", c2, c2, td, rng);
    dec2_ = ResBlock(reg_, "dec2", c2 + c2, c2, td, rng);
    up1_ = Conv2d(reg_, "up1", c2, c1, 3, 1, 1, rng);
    dec1_ = ResBlock(reg_, "dec1", c1 + c1, c1, td, rng);
    attn_dec1_ = InjectedAttention(reg_, "attn_dec1", c1, c1, cfg.token_dim, rng);
    up0_ = Conv2d(reg_, "up0", c1, c0, 3, 1, 1, rng);
    dec0_ = ResBlock(reg_, "dec0", c0 + c0, c0, td, rng);
    out_norm_ = GroupNorm(reg_, "out_norm", c0, 8);
    // sub-pixel head: 12 channels at half resolution shuffle into RGB at full
    out_conv_ = Conv2d(reg_, "out_conv", c0, 12, 3, 1, 1, rng, /*zero_init=*/true);

    // reference branch: 4 input planes per half (rgb + mask plane)
    r_stem_ = Conv2d(reg_, "ref.stem", 4, c0, 3, 2, 1, rng);
    r_b0_ = ResBlock(reg_, "ref.b0", c0, c0, td, rng);
    r_down1_ = Conv2d(reg_, "ref.down1", c0, c1, 3, 2, 1, rng);
    r_b1_ = ResBlock(reg_, "ref.b1", c1, c1, td, rng);
    r_down2_ = Conv2d(reg_, "ref.down2", c1, c2, 3, 2, 1, rng);
    r_b2_ = ResBlock(reg_, "ref.b2", c2, c2, td, rng);
    r_attn_ = SelfAttention(reg_, "ref.attn", c2, rng);
    r_up1_ = Conv2d(reg_, "ref.up1", c2, c1, 3, 1, 1, rng);
    r_ub1_ = ResBlock(reg_, "ref.ub1", c1 + c1, c1, td, rng);
    r_up0_ = Conv2d(reg_, "ref.up0", c1, c0, 3, 1, 1, rng);
    r_ub0_ = ResBlock(reg_, "ref.ub0", c0 + c0, c0, td, rng);

    // ornament token encoder: 64 -> 4 spatial, token_dim channels
    e0_ = Conv2d(reg_, "embed.e0", 3, 16, 3, 2, 1, rng);
    e1_ = Conv2d(reg_, "embed.e1", 16, 32, 3, 2, 1, rng);
    e2_ = Conv2d(reg_, "embed.e2", 32, cfg.token_dim, 3, 2, 1, rng);
    e3_ = Conv2d(reg_, "embed.e3", cfg.token_dim, cfg.token_dim, 3, 2, 1, rng);

    // wearing-mask head: per-pixel linear over [gated model half, ornament half]
    head_ = Conv2d(reg_, "mask_head", 2 * c0, 1, 1, 1, 0, rng);
}

Tensor TryonModel::time_embed(const std::vector<int>& ts, int total_T) const {
    std::vector<float> t01(ts.size());
    for (size_t i = 0; i < ts.size(); ++i)
        t01[i] = static_cast<float>(ts[i]) / static_cast<float>(total_T);
    return temb_.forward(t01);
}

Tensor TryonModel::ornament_embed(const Tensor& ornament_rgb) const {
    Tensor h = silu(e0_.forward(ornament_rgb));
    h = silu(e1_.forward(h));
    h = silu(e2_.forward(h));
    h = e3_.forward(h);  // (B, token_dim, 4, 4)
    return nchw_to_tokens(h);
}

void TryonModel::encode_half(const Tensor& rgb, const Tensor& mask_plane, const Tensor& temb,
                             std::array<Tensor, 3>& levels) const {
    Tensor x = concat_channels(rgb, mask_plane);
    Tensor l0 = r_b0_.forward(r_stem_.forward(x), temb);
    levels[0] = l0;
    Tensor l1 = r_b1_.forward(r_down1_.forward(silu(l0)), temb);
    levels[1] = l1;
    levels[2] = r_b2_.forward(r_down2_.forward(silu(l1)), temb);
}

FeatureStack TryonModel::encode_reference(const Tensor& ornament_rgb,
                                          const Tensor& masked_model_rgb,
                                          const Tensor& current_mask, const Tensor& temb,
                                          const Tensor& ornament_mask) const {
    if (ornament_rgb.shape() != masked_model_rgb.shape())
        throw ParamError("encode_reference: resolution mismatch between ornament and model");
    if (current_mask.dim(2) != ornament_rgb.dim(2) || current_mask.dim(3) != ornament_rgb.dim(3))
        throw ParamError("encode_reference: mask resolution mismatch");

    Tensor orn_plane = ornament_mask;
    if (!orn_plane.defined()) {
        // silhouette from distance to the backdrop color (corner pixel);
        // inputs are in [-1,1], so the threshold doubles
        int batch = ornament_rgb.dim(0), h = ornament_rgb.dim(2), w = ornament_rgb.dim(3);
        orn_plane = Tensor::zeros({batch, 1, h, w});
        const float* p = ornament_rgb.data();
        for (int bi = 0; bi < batch; ++bi) {
            size_t base = static_cast<size_t>(bi) * 3 * h * w;
            float c0 = p[base], c1 = p[base + static_cast<size_t>(h) * w],
                  c2 = p[base + 2 * static_cast<size_t>(h) * w];
            for (int i = 0; i < h * w; ++i) {
                float d0 = p[base + i] - c0;
                float d1 = p[base + static_cast<size_t>(h) * w + i] - c1;
                float d2 = p[base + 2 * static_cast<size_t>(h) * w + i] - c2;
                if (std::sqrt(d0 * d0 + d1 * d1 + d2 * d2) > 0.24f)
                    orn_plane.data()[static_cast<size_t>(bi) * h * w + i] = 1.f;
            }
        }
    }
    if (orn_plane.shape() != current_mask.shape())
        throw ParamError("encode_reference: ornament mask resolution mismatch");

    std::array<Tensor, 3> lo{}, lm{};
    encode_half(ornament_rgb, orn_plane, temb, lo);
    encode_half(masked_model_rgb, current_mask, temb, lm);

    // the bottleneck attends over both halves jointly (token attention is
    // permutation-equivariant, so swapping the halves still swaps the
    // features exactly); the decoder then carries the mixed context back up
    Tensor joint2 = r_attn_.forward(concat_width(lo[2], lm[2]));
    int split2 = lo[2].dim(3);
    std::array<Tensor, 2> deep = {slice_width(joint2, 0, split2),
                                  slice_width(joint2, split2, 2 * split2)};

    std::array<Tensor, 2> top{};
    for (int h = 0; h < 2; ++h) {
        const auto& enc = h == 0 ? lo : lm;
        Tensor u1 = r_up1_.forward(upsample_nearest2x(silu(deep[h])));
        u1 = r_ub1_.forward(concat_channels(u1, enc[1]), temb);
        Tensor u0 = r_up0_.forward(upsample_nearest2x(silu(u1)));
        top[h] = r_ub0_.forward(concat_channels(u0, enc[0]), temb);
    }

    FeatureStack fs;
    FeatureStack::Level l0;
    l0.split = top[0].dim(3);
    l0.features = concat_width(top[0], top[1]);  // ornament half first
    fs.levels.push_back(l0);
    for (int i = 1; i < 3; ++i) {
        FeatureStack::Level lvl;
        lvl.split = lo[i].dim(3);
        lvl.features = concat_width(lo[i], lm[i]);
        fs.levels.push_back(lvl);
    }
    return fs;
}

Tensor TryonModel::predict_mask(const FeatureStack& features, const Tensor& prev_mask) const {
    const FeatureStack::Level& l0 = features.levels.at(0);
    Tensor f_o = slice_width(l0.features, 0, l0.split);
    Tensor f_m = slice_width(l0.features, l0.split, 2 * l0.split);
    int res = prev_mask.dim(2);
    int head_res = f_m.dim(2);
    Tensor mask_small = prev_mask;
    while (mask_small.dim(2) > head_res) mask_small = avg_pool2x(mask_small);
    if (mask_small.dim(2) != head_res) throw ParamError("predict_mask: mask/feature scale mismatch");
    Tensor gated = mul_mask(f_m, mask_small);
    Tensor logits = head_.forward(concat_channels(gated, f_o));
    Tensor pred = sigmoid(logits);
    return upsample_bilinear(pred, res, res);
}

Tensor TryonModel::denoise(const Tensor& z_t, const Tensor& masked_model,
                           const Tensor& mask_channel, const Tensor& temb,
                           const FeatureStack& ref, const Tensor& tokens,
                           AttentionMapSet* record) const {
    Tensor x = concat_channels(concat_channels(z_t, masked_model), mask_channel);

    Tensor h0 = enc0_.forward(stem_.forward(x), temb);
    Tensor h1 = enc1_.forward(down1_.forward(silu(h0)), temb);

    std::vector<Tensor> rec_enc, rec_dec;
    const FeatureStack::Level* lvl1 = ref.levels.empty() ? nullptr : &ref.levels.at(1);
    const FeatureStack::Level* lvl2 = ref.levels.empty() ? nullptr : &ref.levels.at(2);
    h1 = attn_enc1_.forward(h1, lvl1, tokens, cfg_.token_count, record ? &rec_enc : nullptr);

    Tensor h2 = enc2_.forward(down2_.forward(silu(h1)), temb);
    Tensor m = mid1_.forward(h2, temb);
    m = attn_mid_.forward(m, lvl2, tokens, cfg_.token_count);
    m = mid2_.forward(m, temb);

    Tensor d2 = dec2_.forward(concat_channels(m, h2), temb);
    Tensor d1 = dec1_.forward(concat_channels(up1_.forward(upsample_nearest2x(d2)), h1), temb);
    d1 = attn_dec1_.forward(d1, lvl1, tokens, cfg_.token_count, record ? &rec_dec : nullptr);
    Tensor d0 = dec0_.forward(concat_channels(up0_.forward(upsample_nearest2x(d1)), h0), temb);

    Tensor out = pixel_shuffle2x(out_conv_.forward(silu(out_norm_.forward(d0))));

    if (record) {
        AttentionMapSet::Tap enc_tap, dec_tap;
        enc_tap.tag = "encoder_highres";
        enc_tap.d = h1.dim(2) * h1.dim(3);
        enc_tap.per_sample = std::move(rec_enc);
        dec_tap.tag = "decoder_highres";
        dec_tap.d = enc_tap.d;
        dec_tap.per_sample = std::move(rec_dec);
        record->taps = {std::move(enc_tap), std::move(dec_tap)};
    }
    return out;
}

MaskState refine_step(const MaskState& state, const FeatureStack& features, float progress,
                      const AlphaSchedule& schedule, const TryonModel& model) {
    Tensor prev = mask_to_tensor(state.current_mask);
    Tensor pred = model.predict_mask(features, prev);
    float a = static_cast<float>(alpha_at(progress, schedule));
    MaskState next;
    next.box_mask = state.box_mask;
    next.alpha = a;
    Image pred_img = tensor_to_mask_image(pred);
    next.current_mask = blend_mask(pred_img, state.box_mask, a);
    return next;
}

Tensor image_batch_to_tensor(const std::vector<const Image*>& images, bool to_signed_range) {
    if (images.empty()) throw ParamError("image_batch_to_tensor: empty batch");
    int w = images[0]->w, h = images[0]->h, c = images[0]->c;
    Tensor t = Tensor::zeros({static_cast<int>(images.size()), c, h, w});
    float* p = t.data();
    for (size_t bi = 0; bi < images.size(); ++bi) {
        const Image& img = *images[bi];
        if (img.w != w || img.h != h || img.c != c)
            throw ParamError("image_batch_to_tensor: inconsistent shapes");
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    float v = img.at(x, y, ch);
                    p[((bi * c + ch) * h + y) * w + x] = to_signed_range ? v * 2.f - 1.f : v;
                }
    }
    return t;
}

Tensor mask_to_tensor(const Image& soft_mask) {
    if (soft_mask.c != 1) throw ParamError("mask_to_tensor: expected single channel");
    return image_batch_to_tensor({&soft_mask}, false);
}

Image tensor_to_mask_image(const Tensor& t, int batch_index) {
    int h = t.dim(2), w = t.dim(3);
    Image img(w, h, 1);
    const float* p = t.data() + static_cast<size_t>(batch_index) * h * w;
    for (int i = 0; i < h * w; ++i) img.px[i] = std::min(1.f, std::max(0.f, p[i]));
    return img;
}

Image tensor_to_image(const Tensor& t, int batch_index, bool from_signed_range) {
    int c = t.dim(1), h = t.dim(2), w = t.dim(3);
    Image img(w, h, c);
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                float v = t.data()[((static_cast<size_t>(batch_index) * c + ch) * h + y) * w + x];
                if (from_signed_range) v = (v + 1.f) * 0.5f;
                img.at(x, y, ch) = std::min(1.f, std::max(0.f, v));
            }
    return img;
}

}  // namespace ornatry
