// Copyright (C) 2026 the ornatry authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ornatry/refnet.hpp"
#include "testing.hpp"

using namespace ornatry;
using testing::random_tensor;

namespace {

TryonModel& shared_model() {
    static TryonModel model(ModelConfig{}, 42);
    return model;
}

Tensor zeros_img(int b = 1, int c = 3, int r = 64) { return Tensor::zeros({b, c, r, r}); }

}  // namespace

TEST_CASE("encode_reference: level shapes and split") {
    TryonModel& m = shared_model();
    Rng rng(1);
    Tensor orn = random_tensor({2, 3, 64, 64}, rng, 0.3f, false);
    Tensor mod = random_tensor({2, 3, 64, 64}, rng, 0.3f, false);
    Tensor mask = Tensor::zeros({2, 1, 64, 64});
    Tensor temb = m.time_embed({10, 500}, 1000);
    FeatureStack fs = m.encode_reference(orn, mod, mask, temb);

    REQUIRE(fs.levels.size() == 3);
    // level 0: half-resolution features, width 32+32 split at 32
    CHECK(fs.levels[0].features.shape() == Shape{2, 32, 32, 64});
    CHECK(fs.levels[0].split == 32);
    CHECK(fs.levels[1].features.shape() == Shape{2, 64, 16, 32});
    CHECK(fs.levels[1].split == 16);
    CHECK(fs.levels[2].features.shape() == Shape{2, 128, 8, 16});
    CHECK(fs.levels[2].split == 8);
    for (const auto& lvl : fs.levels) {
        CHECK(lvl.features.dim(3) % 2 == 0);
        Tensor o = fs.ornament_half(0);
        Tensor mm = fs.model_half(0);
        CHECK(o.shape() == mm.shape());
    }
}

TEST_CASE("encode_reference: all-zero input stays finite") {
    TryonModel& m = shared_model();
    Tensor temb = m.time_embed({0}, 1000);
    FeatureStack fs = m.encode_reference(zeros_img(), zeros_img(), Tensor::zeros({1, 1, 64, 64}),
                                         temb);
    for (const auto& lvl : fs.levels)
        for (int64_t i = 0; i < lvl.features.numel(); ++i)
            CHECK(std::isfinite(lvl.features.data()[i]));
}

TEST_CASE("encode_reference: swapping the halves swaps f_o and f_m") {
    TryonModel& m = shared_model();
    Rng rng(3);
    Tensor a = random_tensor({1, 3, 64, 64}, rng, 0.4f, false);
    Tensor b = random_tensor({1, 3, 64, 64}, rng, 0.4f, false);
    Tensor zero_mask = Tensor::zeros({1, 1, 64, 64});
    Tensor temb = m.time_embed({100}, 1000);

    // with all-zero mask planes on both halves the inputs are symmetric,
    // so the shared-weight encoder/decoder output must swap exactly
    FeatureStack fab = m.encode_reference(a, b, zero_mask, temb, zero_mask);
    FeatureStack fba = m.encode_reference(b, a, zero_mask, temb, zero_mask);
    for (int lvl = 0; lvl < 3; ++lvl) {
        Tensor o1 = fab.ornament_half(lvl);
        Tensor m1 = fab.model_half(lvl);
        Tensor o2 = fba.ornament_half(lvl);
        Tensor m2 = fba.model_half(lvl);
        for (int64_t i = 0; i < o1.numel(); ++i) {
            CHECK(o1.data()[i] == m2.data()[i]);
            CHECK(m1.data()[i] == o2.data()[i]);
        }
    }

    // a nonzero wearing mask perturbs only the pre-attention encoder levels of
    // the opposite half (the decoder level mixes both halves by design)
    Tensor mask = Tensor::full({1, 1, 64, 64}, 1.f);
    FeatureStack fm = m.encode_reference(a, b, mask, temb, zero_mask);
    for (int lvl = 1; lvl < 3; ++lvl) {
        Tensor o_masked = fm.ornament_half(lvl);
        Tensor o_plain = fab.ornament_half(lvl);
        for (int64_t i = 0; i < o_masked.numel(); ++i)
            CHECK(o_masked.data()[i] == o_plain.data()[i]);
    }
}

TEST_CASE("feature halves align spatially with their source halves") {
    TryonModel& m = shared_model();
    Tensor temb = m.time_embed({0}, 1000);
    // bright dot in the ornament image, upper-left quadrant
    Tensor orn = Tensor::zeros({1, 3, 64, 64});
    for (int c = 0; c < 3; ++c) orn.data()[c * 4096 + 12 * 64 + 12] = 10.f;
    FeatureStack fs = m.encode_reference(orn, zeros_img(), Tensor::zeros({1, 1, 64, 64}), temb,
                                         Tensor::zeros({1, 1, 64, 64}));

    auto peak_position = [](const Tensor& t) {
        int h = t.dim(2), w = t.dim(3);
        float best = -1;
        int bx = 0, by = 0;
        for (int c = 0; c < t.dim(1); ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    float v = std::fabs(t.data()[(static_cast<size_t>(c) * h + y) * w + x]);
                    if (v > best) {
                        best = v;
                        bx = x;
                        by = y;
                    }
                }
        return std::pair<int, int>(bx, by);
    };
    // the activation peak lands near the dot in the ornament half (12/2 = 6)
    auto [ox, oy] = peak_position(fs.ornament_half(0));
    CHECK(std::abs(ox - 6) <= 2);
    CHECK(std::abs(oy - 6) <= 2);
    // and the model half stays flat (zero input, zero mask)
    Tensor mh = fs.model_half(0);
    float spread = 0;
    for (int64_t i = 0; i < mh.numel(); ++i) spread = std::max(spread, std::fabs(mh.data()[i]));
    float peak = 0;
    Tensor oh = fs.ornament_half(0);
    for (int64_t i = 0; i < oh.numel(); ++i) peak = std::max(peak, std::fabs(oh.data()[i]));
    CHECK(peak > spread);
}

TEST_CASE("ornament_embed: deterministic, fixed token count, discriminative") {
    TryonModel& m = shared_model();
    Rng rng(5);
    Tensor a = random_tensor({1, 3, 64, 64}, rng, 0.4f, false);
    Tensor t1 = m.ornament_embed(a);
    Tensor t2 = m.ornament_embed(a);
    REQUIRE(t1.shape() == Shape{16, 64});
    for (int64_t i = 0; i < t1.numel(); ++i) CHECK(t1.data()[i] == t2.data()[i]);

    Tensor b = random_tensor({1, 3, 64, 64}, rng, 0.4f, false);
    Tensor t3 = m.ornament_embed(b);
    // pooled-token cosine similarity strictly below 1
    double dot = 0, na = 0, nb = 0;
    std::vector<double> pa(64, 0), pb(64, 0);
    for (int tok = 0; tok < 16; ++tok)
        for (int d = 0; d < 64; ++d) {
            pa[d] += t1.data()[tok * 64 + d];
            pb[d] += t3.data()[tok * 64 + d];
        }
    for (int d = 0; d < 64; ++d) {
        dot += pa[d] * pb[d];
        na += pa[d] * pa[d];
        nb += pb[d] * pb[d];
    }
    CHECK(dot / std::sqrt(na * nb) < 0.999);
}

TEST_CASE("injected attention: zeroed keys give uniform recorded rows") {
    ParamRegistry reg;
    Rng rng(7);
    InjectedAttention attn(reg, "toy", 32, 32, 64, rng);
    // zero every key projection: all logits collapse to a constant per row
    init_zero(attn.k.w);
    init_zero(attn.k.b);
    init_zero(attn.ref_k.w);
    init_zero(attn.ref_k.b);

    Tensor x = random_tensor({1, 32, 4, 4}, rng, 0.5f, false);
    FeatureStack::Level ref;
    ref.features = random_tensor({1, 32, 4, 8}, rng, 0.5f, false);
    ref.split = 4;
    std::vector<Tensor> recorded;
    attn.forward(x, &ref, Tensor(), 0, &recorded);
    REQUIRE(recorded.size() == 1);
    // 16 latent tokens + 32 reference tokens -> every weight is 1/48
    const Tensor& sub = recorded[0];
    REQUIRE(sub.shape() == Shape{16, 16});
    for (int64_t i = 0; i < sub.numel(); ++i)
        CHECK(sub.data()[i] == doctest::Approx(1.0 / 48).epsilon(1e-4));
}

TEST_CASE("injected attention: recorded sub-block is a valid partial distribution") {
    ParamRegistry reg;
    Rng rng(9);
    InjectedAttention attn(reg, "toy", 32, 32, 64, rng);
    Tensor x = random_tensor({1, 32, 4, 4}, rng, 0.5f, false);
    FeatureStack::Level ref;
    ref.features = random_tensor({1, 32, 4, 8}, rng, 0.5f, false);
    ref.split = 4;
    std::vector<Tensor> recorded;
    attn.forward(x, &ref, Tensor(), 0, &recorded);
    const Tensor& sub = recorded[0];
    for (int r = 0; r < 16; ++r) {
        float row = 0;
        for (int c = 0; c < 16; ++c) {
            float v = sub.data()[r * 16 + c];
            CHECK(v >= 0.f);
            row += v;
        }
        CHECK(row <= 1.f + 1e-5f);
    }
}

TEST_CASE("injected attention: masked-out reference keys reproduce the plain path bitwise") {
    ParamRegistry reg;
    Rng rng(11);
    InjectedAttention attn(reg, "toy", 32, 32, 64, rng);
    Tensor x = random_tensor({2, 32, 4, 4}, rng, 0.5f, false);
    FeatureStack::Level ref;
    ref.features = random_tensor({2, 32, 4, 8}, rng, 0.5f, false);
    ref.split = 4;

    Tensor plain = attn.forward(x, nullptr, Tensor(), 0);
    std::vector<float> bias(16 + 32, 0.f);
    for (size_t i = 16; i < bias.size(); ++i) bias[i] = -1e30f;
    Tensor masked = attn.forward(x, &ref, Tensor(), 0, nullptr, &bias);
    REQUIRE(plain.shape() == masked.shape());
    for (int64_t i = 0; i < plain.numel(); ++i) CHECK(plain.data()[i] == masked.data()[i]);
}

TEST_CASE("denoise: output shape, finiteness, recorded taps") {
    TryonModel& m = shared_model();
    Rng rng(13);
    Tensor z = random_tensor({1, 3, 64, 64}, rng, 1.f, false);
    Tensor masked = random_tensor({1, 3, 64, 64}, rng, 0.3f, false);
    Tensor maskch = Tensor::zeros({1, 1, 64, 64});
    Tensor orn = random_tensor({1, 3, 64, 64}, rng, 0.3f, false);
    Tensor temb = m.time_embed({321}, 1000);
    FeatureStack fs = m.encode_reference(orn, masked, maskch, temb);
    Tensor tokens = m.ornament_embed(orn);

    AttentionMapSet maps;
    Tensor eps = m.denoise(z, masked, maskch, temb, fs, tokens, &maps);
    CHECK(eps.shape() == Shape{1, 3, 64, 64});
    for (int64_t i = 0; i < eps.numel(); ++i) CHECK(std::isfinite(eps.data()[i]));

    REQUIRE(maps.taps.size() == 2);
    CHECK(maps.taps[0].tag == "encoder_highres");
    CHECK(maps.taps[1].tag == "decoder_highres");
    for (const auto& tap : maps.taps) {
        CHECK(tap.d == 256);  // 16x16 level
        REQUIRE(tap.per_sample.size() == 1);
        CHECK(tap.per_sample[0].shape() == Shape{256, 256});
        // d_i is a perfect square of the level resolution
        int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(tap.d))));
        CHECK(side * side == tap.d);
    }
}

TEST_CASE("predict_mask: box gating and output range") {
    TryonModel& m = shared_model();
    Rng rng(17);
    Tensor orn = random_tensor({1, 3, 64, 64}, rng, 0.4f, false);
    Tensor mod1 = random_tensor({1, 3, 64, 64}, rng, 0.4f, false);
    Tensor mod2 = random_tensor({1, 3, 64, 64}, rng, 0.4f, false);
    Tensor temb = m.time_embed({50}, 1000);
    Tensor zero_mask = Tensor::zeros({1, 1, 64, 64});

    FeatureStack f1 = m.encode_reference(orn, mod1, zero_mask, temb);
    FeatureStack f2 = m.encode_reference(orn, mod2, zero_mask, temb);

    // an all-zero previous mask suppresses the model half entirely: the head
    // output depends only on the ornament features and bias
    Tensor p1 = m.predict_mask(f1, zero_mask);
    Tensor p2 = m.predict_mask(f2, zero_mask);
    for (int64_t i = 0; i < p1.numel(); ++i) CHECK(p1.data()[i] == p2.data()[i]);

    CHECK(p1.shape() == Shape{1, 1, 64, 64});
    for (int64_t i = 0; i < p1.numel(); ++i) {
        CHECK(p1.data()[i] > 0.f);
        CHECK(p1.data()[i] < 1.f);
    }
}

TEST_CASE("refine_step: blend degenerate cases on the image path") {
    TryonModel& m = shared_model();
    Rng rng(19);
    Tensor orn = random_tensor({1, 3, 64, 64}, rng, 0.4f, false);
    Tensor mod = random_tensor({1, 3, 64, 64}, rng, 0.4f, false);

    Mask box(64, 64);
    for (int y = 20; y < 44; ++y)
        for (int x = 16; x < 48; ++x) box.at(x, y) = 1;
    MaskState st = init_mask_state(box);
    // initialization contract: the first gate is the coarse box itself
    for (size_t i = 0; i < box.px.size(); ++i)
        CHECK(st.current_mask.px[i] == (box.px[i] ? 1.f : 0.f));

    Tensor temb = m.time_embed({900}, 1000);
    FeatureStack fs = m.encode_reference(orn, mod, mask_to_tensor(st.current_mask), temb);

    // a zero-start schedule keeps alpha at 0 on the first step: fixed point
    AlphaSchedule zero_start{0.0, 1.0};
    MaskState next = refine_step(st, fs, 0.f, zero_start, m);
    for (size_t i = 0; i < box.px.size(); ++i)
        CHECK(next.current_mask.px[i] == (box.px[i] ? 1.f : 0.f));

    // alpha = 1 passes the prediction through untouched
    AlphaSchedule eager{1.0, 0.5};
    MaskState pred_only = refine_step(st, fs, 0.9f, eager, m);
    Tensor direct = m.predict_mask(fs, mask_to_tensor(st.current_mask));
    for (int i = 0; i < 64 * 64; ++i)
        CHECK(pred_only.current_mask.px[i] == doctest::Approx(direct.data()[i]).epsilon(1e-6));
}
