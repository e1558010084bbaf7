// Copyright (C) 2026 the ornatry authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ornatry/errors.hpp"
#include "ornatry/maskattn.hpp"
#include "oracles.hpp"
#include "testing.hpp"

using namespace ornatry;
using namespace ornatry::maskattn;
using testing::gradcheck;
using testing::random_tensor;

namespace {

Tensor row_stochastic_attention(int d, Rng& rng) {
    Tensor logits = random_tensor({d, d}, rng, 1.f, false);
    return softmax_rows(logits);
}

Image constant_mask(int d0, float v) { return Image(d0, d0, 1, v); }

}  // namespace

TEST_CASE("downflat_mask: identity-resolution flatten preserves values") {
    Image m(4, 4, 1);
    for (int i = 0; i < 16; ++i) m.px[i] = i / 16.f;
    ReducedMask r = downflat_mask(m, 16);
    CHECK(r.source_dim == 4);
    REQUIRE(r.values.size() == 16);
    for (int i = 0; i < 16; ++i) CHECK(r.values[i] == doctest::Approx(i / 16.f));
}

TEST_CASE("downflat_mask: all-ones mask stays all ones") {
    Image m = constant_mask(8, 1.f);
    ReducedMask r = downflat_mask(m, 16);
    for (float v : r.values) CHECK(v == doctest::Approx(1.f));
}

TEST_CASE("downflat_mask: 4x4 checkerboard to d_i=4 averages to one half") {
    Image m(4, 4, 1);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) m.at(x, y, 0) = (x + y) % 2 ? 1.f : 0.f;
    ReducedMask r = downflat_mask(m, 4);
    REQUIRE(r.values.size() == 4);
    for (float v : r.values) CHECK(v == doctest::Approx(0.5f));
}

TEST_CASE("downflat_mask rejects non-square d_i") {
    Image m = constant_mask(8, 1.f);
    CHECK_THROWS_AS(downflat_mask(m, 5), ParamError);
}

TEST_CASE("mask_and_marginalize: all-ones mask with row-stochastic attention gives ones") {
    Rng rng(3);
    int d0 = 8, d_i = 16;
    Tensor attn = row_stochastic_attention(d_i, rng);
    ReducedMask r = downflat_mask(constant_mask(d0, 1.f), d_i);
    Tensor out = mask_and_marginalize(attn, r);
    REQUIRE(out.shape() == Shape{d0, d0});
    for (int64_t i = 0; i < out.numel(); ++i)
        CHECK(out.data()[i] == doctest::Approx(1.f).epsilon(1e-4));
}

TEST_CASE("mask_and_marginalize: all-zeros mask annihilates") {
    Rng rng(5);
    Tensor attn = row_stochastic_attention(16, rng);
    ReducedMask r = downflat_mask(constant_mask(8, 0.f), 16);
    Tensor out = mask_and_marginalize(attn, r);
    for (int64_t i = 0; i < out.numel(); ++i) CHECK(out.data()[i] == 0.f);
}

TEST_CASE("transform matches the loop oracle on random inputs") {
    Rng rng(7);
    for (int d_i : {4, 16, 64}) {
        for (int rep = 0; rep < 25; ++rep) {
            int d0 = 16;
            Tensor attn = row_stochastic_attention(d_i, rng);
            Image mask(d0, d0, 1);
            for (auto& v : mask.px) v = rng.uniform() < 0.5 ? 1.f : 0.f;

            std::vector<double> attn_d(attn.data(), attn.data() + attn.numel());
            std::vector<double> mask_d(mask.px.begin(), mask.px.end());
            std::vector<double> want = testing::oracle_transform(attn_d, d_i, mask_d, d0);

            Tensor got = mask_and_marginalize(attn, downflat_mask(mask, d_i));
            for (int64_t i = 0; i < got.numel(); ++i)
                CHECK(std::fabs(got.data()[i] - want[i]) < 1e-6);
        }
    }
}

TEST_CASE("transform is linear in the mask and monotone") {
    Rng rng(11);
    int d0 = 16, d_i = 16;
    Tensor attn = row_stochastic_attention(d_i, rng);
    Image m1(d0, d0, 1), m2(d0, d0, 1);
    for (auto& v : m1.px) v = static_cast<float>(rng.uniform());
    for (auto& v : m2.px) v = static_cast<float>(rng.uniform());

    float a = 0.3f, b = 0.6f;
    Image mc(d0, d0, 1);
    for (size_t i = 0; i < mc.px.size(); ++i) mc.px[i] = a * m1.px[i] + b * m2.px[i];

    Tensor t1 = mask_and_marginalize(attn, downflat_mask(m1, d_i));
    Tensor t2 = mask_and_marginalize(attn, downflat_mask(m2, d_i));
    Tensor tc = mask_and_marginalize(attn, downflat_mask(mc, d_i));
    for (int64_t i = 0; i < tc.numel(); ++i)
        CHECK(tc.data()[i] ==
              doctest::Approx(a * t1.data()[i] + b * t2.data()[i]).epsilon(1e-4));

    // enlarging the mask can only increase the output
    Image bigger = m1;
    for (auto& v : bigger.px) v = std::min(1.f, v + 0.25f);
    Tensor tb = mask_and_marginalize(attn, downflat_mask(bigger, d_i));
    for (int64_t i = 0; i < tb.numel(); ++i) CHECK(tb.data()[i] >= t1.data()[i] - 1e-6f);
}

TEST_CASE("transform stays within the softmax row mass bound") {
    Rng rng(13);
    int d0 = 16, d_i = 16;
    Tensor attn = row_stochastic_attention(d_i, rng);
    Image mask(d0, d0, 1);
    for (auto& v : mask.px) v = rng.uniform() < 0.6 ? 1.f : 0.f;
    Tensor out = mask_and_marginalize(attn, downflat_mask(mask, d_i));
    for (int64_t i = 0; i < out.numel(); ++i) {
        CHECK(out.data()[i] >= -1e-6f);
        CHECK(out.data()[i] <= 1.f + 1e-5f);
    }
}

TEST_CASE("aggregate: identity, mean, permutation invariance") {
    Rng rng(17);
    Tensor a = random_tensor({8, 8}, rng, 1.f, false);
    Tensor one = aggregate({a});
    for (int64_t i = 0; i < a.numel(); ++i) CHECK(one.data()[i] == a.data()[i]);

    Tensor z = Tensor::zeros({8, 8});
    Tensor o = Tensor::full({8, 8}, 1.f);
    Tensor mean = aggregate({z, o});
    for (int64_t i = 0; i < mean.numel(); ++i) CHECK(mean.data()[i] == doctest::Approx(0.5f));

    Tensor b = random_tensor({8, 8}, rng, 1.f, false);
    Tensor ab = aggregate({a, b});
    Tensor ba = aggregate({b, a});
    for (int64_t i = 0; i < ab.numel(); ++i) CHECK(ab.data()[i] == ba.data()[i]);

    CHECK_THROWS_AS(aggregate({}), ParamError);
}

TEST_CASE("attn_mask_loss: exact match and density cases") {
    Rng rng(19);
    Image gt(8, 8, 1);
    for (auto& v : gt.px) v = rng.uniform() < 0.3 ? 1.f : 0.f;
    Tensor same = Tensor::from(std::vector<float>(gt.px.begin(), gt.px.end()), {8, 8});
    CHECK(attn_mask_loss(same, gt).item() == 0.f);

    // constant-zero map against a mask of density rho -> loss = rho
    double rho = 0;
    for (float v : gt.px) rho += v;
    rho /= gt.px.size();
    Tensor zero = Tensor::zeros({8, 8});
    CHECK(attn_mask_loss(zero, gt).item() == doctest::Approx(rho).epsilon(1e-6));
}

TEST_CASE("attn_mask_loss gradient flows back through attention logits (16-dim toy)") {
    Rng rng(23);
    // 4x4 attention map = 16 logits
    int d0 = 4, d_i = 4;
    Tensor logits = random_tensor({d_i, d_i}, rng, 0.7f);
    Image mask(d0, d0, 1);
    for (auto& v : mask.px) v = rng.uniform() < 0.5 ? 1.f : 0.f;
    Image gt(d0, d0, 1);
    for (auto& v : gt.px) v = rng.uniform() < 0.4 ? 1.f : 0.f;
    ReducedMask reduced = downflat_mask(mask, d_i);

    auto loss_fn = [&] {
        Tensor attn = softmax_rows(logits);
        return attn_mask_loss(mask_and_marginalize(attn, reduced), gt);
    };
    CHECK(gradcheck(logits, loss_fn, 10, rng, 2e-2) < 1e-3);
}
