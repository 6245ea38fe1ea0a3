#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "graphvl/losses.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace graphvl;

namespace {

Matrix<double> rows(std::initializer_list<std::initializer_list<double>> r) { return Matrix<double>(r); }

double softplus(double x) { return std::log1p(std::exp(x)); }

} // namespace

TEST(Cosine, HandValues) {
    EXPECT_DOUBLE_EQ(cosine(std::vector<double>{1, 0}, std::vector<double>{1, 0}), 1.0);
    EXPECT_DOUBLE_EQ(cosine(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 0.0);
    EXPECT_NEAR(cosine(std::vector<double>{1, 1}, std::vector<double>{1, 0}), 0.70710678, 1e-8);
}

TEST(Cosine, ZeroVectorThrows) {
    EXPECT_THROW(cosine(std::vector<double>{0, 0}, std::vector<double>{1, 0}), Error);
}

TEST(LossCma, SingleClassIsZero) {
    const std::vector<int> y{0, 0};
    const auto r = loss_cma(rows({{1, 2}, {-3, 1}}), std::span<const int>(y), rows({{0.5, 0.5}}), 0.3, 1.0);
    EXPECT_DOUBLE_EQ(r.loss, 0.0);
    for (auto v : r.grad_z.values()) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(LossCma, OppositeClassesTwoWay) {
    const std::vector<int> y{0};
    const auto r = loss_cma(rows({{1, 0}}), std::span<const int>(y), rows({{1, 0}, {-1, 0}}), 0.3, 1.0);
    EXPECT_NEAR(r.loss, softplus(-2.0), 1e-12);
    EXPECT_NEAR(r.loss, 0.126928, 1e-6);
}

TEST(LossCma, TiedClassesGiveLog2PlusMargin) {
    // z at 45 degrees between the two class directions: equal similarities.
    const std::vector<int> y{1};
    const auto r = loss_cma(rows({{1, 1}}), std::span<const int>(y), rows({{1, 0}, {0, 1}}), 0.3, 1.0);
    EXPECT_NEAR(r.loss, std::log(2.0) + 0.3, 1e-12);
}

TEST(LossCma, PrintedHingeDiffers) {
    // Printed form sums over all c, including c = y, and penalizes s_y - s_c > α.
    const std::vector<int> y{0};
    const auto prose = loss_cma(rows({{1, 0}}), std::span<const int>(y), rows({{1, 0}, {-1, 0}}), 0.3, 1.0, false);
    const auto printed = loss_cma(rows({{1, 0}}), std::span<const int>(y), rows({{1, 0}, {-1, 0}}), 0.3, 1.0, true);
    EXPECT_NEAR(printed.loss - prose.loss, 2.0 - 0.3, 1e-12);
}

TEST(LossCma, RejectsBadInput) {
    const std::vector<int> y{2};
    EXPECT_THROW(loss_cma(rows({{1, 0}}), std::span<const int>(y), rows({{1, 0}, {0, 1}}), 0.3, 1.0), Error);
    const std::vector<int> ok{0};
    EXPECT_THROW(loss_cma(rows({{1, 0}}), std::span<const int>(ok), rows({{1, 0}, {0, 1}}), 0.3, 0.0), Error);
    EXPECT_THROW(loss_cma(rows({{0, 0}}), std::span<const int>(ok), rows({{1, 0}, {0, 1}}), 0.3, 1.0), Error);
}

TEST(LossCma, InvariantToPositiveRescaling) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        auto z = oracle::random_matrix(4, 3, rng);
        auto ybar = oracle::random_matrix(3, 3, rng);
        std::vector<int> y(4);
        for (auto& v : y) v = oracle::uniform_int(rng, 0, 2);
        const double base = loss_cma(z, std::span<const int>(y), ybar, 0.3, 0.7).loss;
        std::uniform_real_distribution<double> scale(0.1, 10.0);
        for (auto* m : {&z, &ybar}) {
            for (std::size_t i = 0; i < m->rows(); ++i) {
                const double s = scale(rng);
                for (auto& v : m->row(i)) v *= s;
            }
        }
        EXPECT_NEAR(loss_cma(z, std::span<const int>(y), ybar, 0.3, 0.7).loss, base, 1e-12);
    }
}

TEST(LossCma, MonotoneInTrueClassSimilarity) {
    // Class directions are axes 0..2; axis 3 absorbs the slack so only
    // δ(z, ȳ_y) moves while the other similarities stay put.
    const auto ybar = rows({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}});
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        const int y = oracle::uniform_int(rng, 0, 2);
        std::uniform_real_distribution<double> u(-0.5, 0.5);
        std::vector<double> others{u(rng), u(rng), u(rng)};
        const std::vector<int> yv{y};
        double prev = -1.0;
        for (double sy = 0.7; sy >= -0.7; sy -= 0.01) {
            others[static_cast<std::size_t>(y)] = sy;
            const double rest = 1.0 - others[0] * others[0] - others[1] * others[1] - others[2] * others[2];
            const auto z = rows({{others[0], others[1], others[2], std::sqrt(std::max(rest, 0.0))}});
            const double l = loss_cma(z, std::span<const int>(yv), ybar, 0.3, 1.0).loss;
            EXPECT_GE(l, prev - 1e-12);
            prev = l;
        }
    }
}

TEST(LossCma, NonNegative) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const auto z = oracle::random_matrix(3, 4, rng);
        const auto ybar = oracle::random_matrix(4, 4, rng);
        std::vector<int> y(3);
        for (auto& v : y) v = oracle::uniform_int(rng, 0, 3);
        EXPECT_GE(loss_cma(z, std::span<const int>(y), ybar, 0.3, 1.0).loss, 0.0);
    }
}

TEST(LossSdp, HandValues) {
    EXPECT_NEAR(loss_sdp(rows({{1, 0}}), rows({{2, 0}}), rows({{0, 1}})).loss, 0.0, 1e-15);
    EXPECT_NEAR(loss_sdp(rows({{1, 0}}), rows({{0, 1}}), rows({{3, 0}})).loss, 2.0, 1e-15);
    // δ(a, n) = -0.5 is clamped away; only 1 - δ(a, p) = 1 remains.
    const auto clamped = loss_sdp(rows({{1, 0}}), rows({{0, 1}}), rows({{-0.5, std::sqrt(0.75)}}));
    EXPECT_NEAR(clamped.loss, 1.0, 1e-12);
    for (auto v : clamped.grad_negatives.values()) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(LossSdp, ZeroOnlyAtPerfectTriplet) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const auto a = oracle::random_matrix(1, 3, rng);
        const auto p = oracle::random_matrix(1, 3, rng);
        const auto n = oracle::random_matrix(1, 3, rng);
        const double l = loss_sdp(a, p, n).loss;
        EXPECT_GE(l, 0.0);
        const double sap = cosine(std::span<const double>(a.row(0)), std::span<const double>(p.row(0)));
        if (l == 0.0) {
            EXPECT_NEAR(sap, 1.0, 1e-12);
        }
    }
}

TEST(LossSdp, PrintedForm) {
    const auto r = loss_sdp(rows({{1, 0}}), rows({{0, 1}}), rows({{-1, 0}}), true);
    EXPECT_NEAR(r.loss, (0.0 - 1.0) + (-1.0), 1e-12);
}

TEST(LossCs, HandValues) {
    const auto mu = rows({{0.5, -1.0}, {2.0, 0.0}});
    EXPECT_DOUBLE_EQ(loss_cs(mu, mu).loss, 0.0);
    EXPECT_DOUBLE_EQ(loss_cs(rows({{3, 4}}), rows({{0, 0}})).loss, 12.5);
}

TEST(LossCs, ZeroIffEqual) {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 100; ++trial) {
        const auto t = oracle::random_matrix(3, 2, rng);
        auto mu = t;
        EXPECT_DOUBLE_EQ(loss_cs(t, mu).loss, 0.0);
        mu(oracle::uniform_int(rng, 0, 2), oracle::uniform_int(rng, 0, 1)) += 1e-3;
        EXPECT_GT(loss_cs(t, mu).loss, 0.0);
    }
}

TEST(SampleTriplets, ForcedChoice) {
    std::mt19937_64 rng(0);
    const std::vector<int> labels{0, 0, 1};
    const auto t = sample_triplets(std::span<const int>(labels), rng);
    ASSERT_EQ(t.size(), 2u);
    EXPECT_EQ(t[0], (Triplet{0, 1, 2}));
    EXPECT_EQ(t[1], (Triplet{1, 0, 2}));
}

TEST(SampleTriplets, NoPositivesGivesEmpty) {
    std::mt19937_64 rng(0);
    const std::vector<int> labels{0, 1, 2};
    EXPECT_TRUE(sample_triplets(std::span<const int>(labels), rng).empty());
}

TEST(SampleTriplets, DeterministicAndValid) {
    const std::vector<int> labels{0, 0, 1, 1};
    std::mt19937_64 r1(42), r2(42);
    const auto a = sample_triplets(std::span<const int>(labels), r1);
    EXPECT_EQ(a, sample_triplets(std::span<const int>(labels), r2));
    for (const auto& t : a) {
        EXPECT_NE(t.anchor, t.positive);
        EXPECT_EQ(labels[t.anchor], labels[t.positive]);
        EXPECT_NE(labels[t.anchor], labels[t.negative]);
    }
}

TEST(LossTotal, SumOfComponents) {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 100; ++trial) {
        Batch<double> b;
        b.z = oracle::random_matrix(6, 4, rng);
        b.ybar = oracle::random_matrix(3, 4, rng);
        b.t = oracle::random_matrix(3, 4, rng);
        b.y_idx.resize(6);
        for (auto& v : b.y_idx) v = oracle::uniform_int(rng, 0, 2);
        const auto tr = sample_triplets(std::span<const int>(b.y_idx), rng);
        const auto r = loss_total(b, std::span<const Triplet>(tr), LossOptions{});
        EXPECT_EQ(r.total, r.cma + r.sdp + r.cs);
        EXPECT_GE(r.total, 0.0);
    }
}

TEST(LossTotal, AllZeroComponents) {
    // One class, z matches ybar, t = ybar, no triplets possible.
    Batch<double> b;
    b.z = rows({{1, 0}});
    b.ybar = rows({{1, 0}});
    b.t = rows({{1, 0}});
    b.y_idx = {0};
    const auto r = loss_total(b, {}, LossOptions{});
    EXPECT_EQ(r.total, 0.0);
}

TEST(LossTotal, CentersDetached) {
    // The prompt term contributes nothing to grad_ybar.
    Batch<double> b;
    b.z = rows({{1, 0}});
    b.ybar = rows({{1, 0}});
    b.t = rows({{5, 5}});
    b.y_idx = {0};
    const auto r = loss_total(b, {}, LossOptions{});
    EXPECT_GT(r.cs, 0.0);
    for (auto v : r.grad_ybar.values()) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Gradients, Cma) {
    const auto r = gradcheck::check_cma(100, 1);
    EXPECT_LT(r.max_rel, 1e-4);
}

TEST(Gradients, CmaAsPrinted) {
    EXPECT_LT(gradcheck::check_cma(100, 2, true).max_rel, 1e-4);
}

TEST(Gradients, Sdp) {
    EXPECT_LT(gradcheck::check_sdp(100, 3).max_rel, 1e-4);
    EXPECT_LT(gradcheck::check_sdp(100, 4, true).max_rel, 1e-4);
}

TEST(Gradients, Cs) {
    EXPECT_LT(gradcheck::check_cs(100, 5).max_rel, 1e-4);
}

TEST(Gradients, Total) {
    EXPECT_LT(gradcheck::check_total(100, 6).max_rel, 1e-4);
    EXPECT_LT(gradcheck::check_total(100, 7, true).max_rel, 1e-4);
}
