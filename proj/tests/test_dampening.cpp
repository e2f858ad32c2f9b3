#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ficabu/dampening.hpp"

using namespace ficabu;

namespace {

Tensor random_positive(std::uint32_t n, std::mt19937_64& gen, float span = 4.0f) {
    Tensor t({n});
    for (auto& v : t.data) v = span * (static_cast<float>(gen() >> 40) / 16777216.0f) + 1e-6f;
    return t;
}

Tensor random_signed(std::uint32_t n, std::mt19937_64& gen) {
    Tensor t({n});
    for (auto& v : t.data) v = 3.0f * (static_cast<float>(gen() >> 40) / 16777216.0f - 0.5f);
    return t;
}

/// A single-dense-layer model whose classifier weight vector is `theta`.
Model wrap_layer(const Tensor& theta) {
    Model m = Model::mlp(theta.shape[0], {}, 1);
    m.param_layer(1).weight = Tensor({1, theta.shape[0]}, theta.data);
    m.param_layer(1).bias_eligible = false;
    return m;
}

ImportanceSlice wrap_slice(const Tensor& w) {
    ImportanceSlice s;
    s.layer = 1;
    s.weight = Tensor({1, w.shape[0]}, w.data);
    s.bias = Tensor({1});
    return s;
}

}  // namespace

TEST(SelectMask, EqualImportanceWithUnitAlphaSelectsNothing) {
    Tensor imp({4}, {1.0f, 2.0f, 0.0f, 5.0f});
    auto mask = select_mask(imp, imp, 1.0f);
    for (auto m : mask) EXPECT_EQ(m, 0);  // strict inequality
}

TEST(SelectMask, DoubledImportanceSelectsEverything) {
    Tensor d({3}, {1.0f, 0.5f, 2.0f});
    Tensor f({3}, {2.0f, 1.0f, 4.0f});
    auto mask = select_mask(f, d, 1.0f);
    for (auto m : mask) EXPECT_EQ(m, 1);
}

TEST(SelectMask, PaperAlphaTenArithmetic) {
    Tensor d({2}, {1.0f, 1.0f});
    Tensor f({2}, {5.0f, 11.0f});
    auto mask = select_mask(f, d, 10.0f);
    EXPECT_EQ(mask[0], 0);  // 5 < 10*1
    EXPECT_EQ(mask[1], 1);  // 11 > 10*1
}

TEST(SelectMask, ShapeMismatchThrows) {
    EXPECT_THROW(select_mask(Tensor({2}), Tensor({3}), 1.0f), DimensionError);
}

TEST(Beta, ClampsAtOne) {
    EXPECT_EQ(beta(2.0f, 2.0f, 1.0f), 1.0f);
}

TEST(Beta, DirectFormula) {
    EXPECT_FLOAT_EQ(beta(4.0f, 2.0f, 0.1f), 0.05f);
}

TEST(Beta, FaceRecognitionSetting) {
    // lambda = 0.1 with alpha = 50: a selected parameter at the threshold
    // ratio gets beta = 0.1 * (1/50) = 0.002.
    EXPECT_FLOAT_EQ(beta(50.0f, 1.0f, 0.1f), 0.002f);
}

TEST(Beta, ZeroForgetImportanceIsInternalError) {
    EXPECT_THROW(beta(0.0f, 1.0f, 1.0f), std::logic_error);
}

TEST(DampenLayer, NothingSelectedLeavesModelBitIdentical) {
    std::mt19937_64 gen(3);
    Tensor theta = random_signed(16, gen);
    Model m = wrap_layer(theta);
    Tensor imp = random_positive(16, gen);
    auto rep = dampen_layer(m, 1, wrap_slice(imp), wrap_slice(imp), {1.0f, 1.0f});
    EXPECT_EQ(rep.selected, 0u);
    EXPECT_EQ(rep.beta_min, 1.0f);
    EXPECT_EQ(rep.beta_mean, 1.0);
    EXPECT_EQ(m.param_layer(1).weight.data, theta.data);
}

TEST(DampenLayer, AllSelectedWithUnitBetaIsIdentity) {
    std::mt19937_64 gen(5);
    Tensor theta = random_signed(16, gen);
    Model m = wrap_layer(theta);
    Tensor d = random_positive(16, gen);
    Tensor f = d;
    for (auto& v : f.data) v *= 3.0f;  // ratio exactly 3
    auto rep = dampen_layer(m, 1, wrap_slice(f), wrap_slice(d), {2.0f, 3.0f});
    EXPECT_EQ(rep.selected, 16u);
    EXPECT_EQ(m.param_layer(1).weight.data, theta.data);  // beta = min(3/3, 1) = 1
}

TEST(DampenLayer, MatchesScalarOracleBitExactly) {
    std::mt19937_64 gen(7);
    for (int trial = 0; trial < 200; ++trial) {
        std::uint32_t n = 1 + static_cast<std::uint32_t>(gen() % 256);
        Tensor theta = random_signed(n, gen);
        Tensor f = random_positive(n, gen);
        Tensor d = random_positive(n, gen, 1.0f);
        for (auto& v : d.data) {
            if ((gen() & 7) == 0) v = 0.0f;  // exercise the zero-importance edge
        }
        DampeningParams p{0.5f + static_cast<float>(gen() % 40) / 10.0f,
                          0.05f + static_cast<float>(gen() % 30) / 10.0f};

        // Scalar oracle: the selection and strength rules, one parameter at
        // a time in plain float arithmetic.
        std::vector<float> expect = theta.data;
        std::uint64_t expect_selected = 0;
        for (std::uint32_t i = 0; i < n; ++i) {
            if (f.data[i] > p.alpha * d.data[i]) {
                float b = p.lambda * d.data[i] / f.data[i];
                if (b > 1.0f) b = 1.0f;
                expect[i] *= b;
                ++expect_selected;
            }
        }

        Model m = wrap_layer(theta);
        auto rep = dampen_layer(m, 1, wrap_slice(f), wrap_slice(d), p);
        EXPECT_EQ(rep.selected, expect_selected);
        ASSERT_EQ(m.param_layer(1).weight.data, expect) << "trial " << trial;
    }
}

TEST(DampenLayer, ZeroGlobalImportanceZeroesSelectedParameters) {
    Tensor theta({2}, {1.5f, -2.0f});
    Model m = wrap_layer(theta);
    Tensor f({2}, {1.0f, 0.0f});
    Tensor d({2}, {0.0f, 0.0f});
    auto rep = dampen_layer(m, 1, wrap_slice(f), wrap_slice(d), {1.0f, 1.0f});
    EXPECT_EQ(rep.selected, 1u);  // imp_f 0 with imp_d 0 is never selected
    EXPECT_EQ(m.param_layer(1).weight.data[0], 0.0f);
    EXPECT_EQ(m.param_layer(1).weight.data[1], -2.0f);
}

TEST(DampenLayer, NeverGrowsMagnitudeOrFlipsSign) {
    std::mt19937_64 gen(11);
    for (int trial = 0; trial < 50; ++trial) {
        std::uint32_t n = 8 + static_cast<std::uint32_t>(gen() % 64);
        Tensor theta = random_signed(n, gen);
        Model m = wrap_layer(theta);
        Tensor f = random_positive(n, gen);
        Tensor d = random_positive(n, gen, 0.3f);
        dampen_layer(m, 1, wrap_slice(f), wrap_slice(d), {1.0f, 0.7f});
        for (std::uint32_t i = 0; i < n; ++i) {
            float before = theta.data[i], after = m.param_layer(1).weight.data[i];
            EXPECT_LE(std::fabs(after), std::fabs(before));
            EXPECT_GE(after * before, 0.0f);
        }
    }
}

TEST(DampenLayer, DoubleApplicationEqualsSequentialScalarOracle) {
    std::mt19937_64 gen(13);
    Tensor theta = random_signed(64, gen);
    Tensor f = random_positive(64, gen);
    Tensor d = random_positive(64, gen, 0.2f);
    DampeningParams p{1.0f, 0.5f};

    std::vector<float> expect = theta.data;
    for (int pass = 0; pass < 2; ++pass) {
        for (std::uint32_t i = 0; i < 64; ++i) {
            if (f.data[i] > p.alpha * d.data[i]) {
                float b = p.lambda * d.data[i] / f.data[i];
                if (b > 1.0f) b = 1.0f;
                expect[i] *= b;  // (theta*b)*b: beta^2 overall
            }
        }
    }
    Model m = wrap_layer(theta);
    dampen_layer(m, 1, wrap_slice(f), wrap_slice(d), p);
    dampen_layer(m, 1, wrap_slice(f), wrap_slice(d), p);
    EXPECT_EQ(m.param_layer(1).weight.data, expect);
}

TEST(DampenLayer, ImportanceShapeMismatchThrows) {
    std::mt19937_64 gen(17);
    Model m = wrap_layer(random_signed(8, gen));
    ImportanceSlice f = wrap_slice(random_positive(8, gen));
    ImportanceSlice d = wrap_slice(random_positive(6, gen));  // wrong width
    EXPECT_THROW(dampen_layer(m, 1, f, d, {1.0f, 1.0f}), DimensionError);
}

TEST(DampenLayer, IneligibleTensorIsSkipped) {
    Model m = Model::mlp(4, {}, 2);
    Layer& ly = m.param_layer(1);
    for (auto& w : ly.weight.data) w = 1.0f;
    ly.bias.data = {2.0f, 2.0f};
    ly.weight_eligible = false;
    ImportanceSlice f, d;
    f.weight = Tensor({2, 4}, std::vector<float>(8, 1.0f));
    f.bias = Tensor({2}, {1.0f, 1.0f});
    d.weight = Tensor({2, 4});  // zeros: everything would be selected
    d.bias = Tensor({2});
    auto rep = dampen_layer(m, 1, f, d, {1.0f, 1.0f});
    EXPECT_EQ(rep.selected, 2u);  // only the bias entries
    for (auto w : ly.weight.data) EXPECT_EQ(w, 1.0f);
    for (auto b : ly.bias.data) EXPECT_EQ(b, 0.0f);
}

TEST(Profile, EndpointsAreExact) {
    for (double b_r : {1.0, 1.5, 2.0, 7.3, 10.0, 100.0}) {
        for (std::uint32_t depth : {2u, 3u, 16u, 32u}) {
            for (double c_m = 0.5; c_m <= depth + 0.5; c_m += 0.75) {
                ProfileParams p{b_r, c_m, depth};
                EXPECT_EQ(profile_scale(1, p), 1.0) << b_r << " " << depth << " " << c_m;
                EXPECT_EQ(profile_scale(depth, p), b_r) << b_r << " " << depth << " " << c_m;
            }
        }
    }
}

TEST(Profile, StrictlyIncreasingForBrAboveOne) {
    for (std::uint32_t depth = 2; depth <= 32; ++depth) {
        for (double c_m : {1.0, depth / 2.0, (1.0 + depth) / 2.0, static_cast<double>(depth)}) {
            ProfileParams p{10.0, c_m, depth};
            double prev = profile_scale(1, p);
            for (std::uint32_t l = 2; l <= depth; ++l) {
                double cur = profile_scale(l, p);
                EXPECT_GT(cur, prev) << "L=" << depth << " c_m=" << c_m << " l=" << l;
                prev = cur;
            }
        }
    }
}

TEST(Profile, UnitBoundDegeneratesToConstantOne) {
    ProfileParams p{1.0, 4.0, 8};
    for (std::uint32_t l = 1; l <= 8; ++l) EXPECT_EQ(profile_scale(l, p), 1.0);
}

TEST(Profile, MidpointSymmetryAtPaperDefaults) {
    // b_r = 10, L = 16, c_m = 8.5: S(c_m+k) + S(c_m-k) = 1 + b_r.
    ProfileParams p{10.0, 8.5, 16};
    for (std::uint32_t k = 0; k < 8; ++k) {
        double lo = profile_scale(8 - k, p);  // c_m - (k + 0.5)
        double hi = profile_scale(9 + k, p);  // c_m + (k + 0.5)
        EXPECT_NEAR(lo + hi, 11.0, 1e-9);
    }
}

TEST(Profile, DegenerateConfigsThrow) {
    ProfileParams p{10.0, 1.0, 1};
    EXPECT_THROW(profile_scale(1, p), ConfigError);
    ProfileParams bad_b{0.5, 1.0, 4};
    EXPECT_THROW(profile_scale(1, bad_b), ConfigError);
    ProfileParams unset{10.0, std::numeric_limits<double>::quiet_NaN(), 4};
    EXPECT_THROW(profile_scale(1, unset), ConfigError);
}

TEST(ScaledParams, BackEndLayerKeepsBase) {
    DampeningParams base{10.0f, 1.0f};
    ProfileParams p{10.0, 4.5, 8};
    DampeningParams s = scaled_params(base, 1, p);
    EXPECT_EQ(s.alpha, base.alpha);
    EXPECT_EQ(s.lambda, base.lambda);
}

TEST(ScaledParams, FrontEndLayerScalesByBound) {
    DampeningParams base{10.0f, 1.0f};
    ProfileParams p{10.0, 4.5, 8};
    DampeningParams s = scaled_params(base, 8, p);
    EXPECT_FLOAT_EQ(s.alpha, 100.0f);
    EXPECT_FLOAT_EQ(s.lambda, 10.0f);
}

TEST(ScaledParams, AlphaRatioStrictlyIncreasesWithDepth) {
    DampeningParams base{10.0f, 1.0f};
    ProfileParams p{6.0, 5.0, 12};
    float prev = 0.0f;
    for (std::uint32_t l = 1; l <= 12; ++l) {
        DampeningParams s = scaled_params(base, l, p);
        EXPECT_GT(s.alpha, prev);
        prev = s.alpha;
    }
}

TEST(DeriveMidpoint, HandComputedBand) {
    // counts [0,0,50,0,0,0]: smoothed band above 10% of peak covers layers
    // 2..4, so the midpoint lands on 3.
    EXPECT_DOUBLE_EQ(derive_profile_midpoint({0, 0, 50, 0, 0, 0}), 3.0);
    // Wide band: every smoothed value clears the threshold.
    EXPECT_DOUBLE_EQ(derive_profile_midpoint({0, 100, 80, 0}), 2.5);
}

TEST(DeriveMidpoint, NoSelectionFallsBackToCenter) {
    EXPECT_DOUBLE_EQ(derive_profile_midpoint({0, 0, 0, 0}), 2.5);
    EXPECT_THROW(derive_profile_midpoint({}), EmptyInputError);
}
