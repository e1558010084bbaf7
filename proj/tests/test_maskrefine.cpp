// Copyright (C) 2026 the ornatry authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ornatry/errors.hpp"
#include "ornatry/maskrefine.hpp"
#include "testing.hpp"

using namespace ornatry;
using testing::gradcheck;
using testing::random_tensor;

TEST_CASE("alpha_at: endpoints, saturation, midpoint") {
    AlphaSchedule s{0.1, 0.5};
    CHECK(alpha_at(0.f, s) == s.start_value);  // exact at the endpoint
    CHECK(alpha_at(0.5f, s) == 1.f);
    CHECK(alpha_at(0.75f, s) == 1.f);
    CHECK(alpha_at(1.f, s) == 1.f);
    CHECK(alpha_at(0.25f, s) == doctest::Approx(0.55).epsilon(1e-6));
    CHECK_THROWS_AS(alpha_at(-0.1f, s), ParamError);
    CHECK_THROWS_AS(alpha_at(1.1f, s), ParamError);

    // monotone nondecreasing over the whole range
    float prev = 0.f;
    for (int i = 0; i <= 100; ++i) {
        float a = alpha_at(i / 100.f, s);
        CHECK(a >= prev);
        prev = a;
    }
}

TEST_CASE("blend_mask: identity, fallback, arithmetic") {
    Image pred(8, 8, 1, 0.2f);
    Mask box(8, 8, 1);  // all ones

    Image full = blend_mask(pred, box, 1.f);
    for (float v : full.px) CHECK(v == doctest::Approx(0.2f));

    Image none = blend_mask(pred, box, 0.f);
    for (float v : none.px) CHECK(v == 1.f);

    Image half = blend_mask(pred, box, 0.5f);
    for (float v : half.px) CHECK(v == doctest::Approx(0.6f));

    // blend(m, m, alpha) = m for binary m
    Mask m(8, 8);
    for (int i = 0; i < 64; i += 3) m.px[i] = 1;
    Image m_img = mask_to_image(m);
    for (float a : {0.f, 0.3f, 0.7f, 1.f}) {
        Image out = blend_mask(m_img, m, a);
        for (size_t i = 0; i < out.px.size(); ++i) CHECK(out.px[i] == m_img.px[i]);
    }

    Image wrong(4, 4, 1);
    CHECK_THROWS_AS(blend_mask(wrong, box, 0.5f), ParamError);
    CHECK_THROWS_AS(blend_mask(pred, box, 1.5f), ParamError);
}

TEST_CASE("blend_mask tensor path is affine in both inputs") {
    Rng rng(3);
    Tensor a = random_tensor({1, 1, 4, 4}, rng, 0.3f, false);
    Tensor b = random_tensor({1, 1, 4, 4}, rng, 0.3f, false);
    float alpha = 0.35f;
    Tensor out = blend_mask(a, b, alpha);
    for (int64_t i = 0; i < out.numel(); ++i)
        CHECK(out.data()[i] ==
              doctest::Approx(alpha * a.data()[i] + (1 - alpha) * b.data()[i]).epsilon(1e-6));
}

TEST_CASE("mask_loss: zero at equality, one at complement, loop oracle") {
    Rng rng(5);
    Tensor gt = Tensor::zeros({8, 8});
    for (int64_t i = 0; i < gt.numel(); ++i) gt.data()[i] = rng.uniform() < 0.4 ? 1.f : 0.f;

    CHECK(mask_loss(gt, gt).item() == 0.f);

    Tensor comp = Tensor::zeros({8, 8});
    for (int64_t i = 0; i < comp.numel(); ++i) comp.data()[i] = 1.f - gt.data()[i];
    CHECK(mask_loss(comp, gt).item() == doctest::Approx(1.f));

    Tensor pred = random_tensor({8, 8}, rng, 0.5f, false);
    double want = 0;
    for (int64_t i = 0; i < pred.numel(); ++i) {
        double d = static_cast<double>(pred.data()[i]) - gt.data()[i];
        want += d * d;
    }
    want /= pred.numel();
    CHECK(mask_loss(pred, gt).item() == doctest::Approx(want).epsilon(1e-6));
}

TEST_CASE("mask_loss gradient vs central differences (16-dim toy)") {
    Rng rng(7);
    Tensor pred = random_tensor({4, 4}, rng, 0.5f);
    Tensor gt = Tensor::zeros({4, 4});
    for (int64_t i = 0; i < gt.numel(); ++i) gt.data()[i] = rng.uniform() < 0.5 ? 1.f : 0.f;
    double worst = gradcheck(pred, [&] { return mask_loss(pred, gt); }, 10, rng, 0.1);
    CHECK(worst < 1e-3);
}

TEST_CASE("init_mask_state starts at the coarse box") {
    Mask box(16, 16);
    for (int y = 4; y < 12; ++y)
        for (int x = 2; x < 14; ++x) box.at(x, y) = 1;
    MaskState st = init_mask_state(box);
    CHECK(st.box_mask.px == box.px);
    for (size_t i = 0; i < box.px.size(); ++i)
        CHECK(st.current_mask.px[i] == (box.px[i] ? 1.f : 0.f));
}
