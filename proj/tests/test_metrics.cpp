#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "sharpen/errors.hpp"
#include "sharpen/instances.hpp"
#include "sharpen/metrics.hpp"
#include "test_support.hpp"

using namespace sharpen;
using namespace sharpen::testing;

namespace {

std::vector<std::size_t> idx(const std::vector<Response>& rs) {
    std::vector<std::size_t> out;
    for (auto r : rs) {
        out.push_back(r.index);
    }
    return out;
}

using V = std::vector<std::size_t>;

} // namespace

TEST(ArgmaxSet, Unique) { EXPECT_EQ(idx(argmax_set(*table({0.5, 0.3, 0.2}), Prompt{0})), (V{0})); }

TEST(ArgmaxSet, Uniform) { EXPECT_EQ(idx(argmax_set(*table({0.25, 0.25, 0.25, 0.25}), Prompt{0})), (V{0, 1, 2, 3})); }

TEST(ArgmaxSet, ExactTie) { EXPECT_EQ(idx(argmax_set(*table({0.4, 0.4, 0.2}), Prompt{0})), (V{0, 1})); }

TEST(GammaArgmax, Threshold) {
    auto m = table({0.5, 0.3, 0.2});
    EXPECT_EQ(idx(gamma_argmax_set(*m, Prompt{0}, 0.5)), (V{0, 1}));
    EXPECT_EQ(idx(gamma_argmax_set(*m, Prompt{0}, 0.0)), idx(argmax_set(*m, Prompt{0})));
    EXPECT_EQ(idx(gamma_argmax_set(*m, Prompt{0}, 0.9)), (V{0, 1, 2}));
    EXPECT_THROW(gamma_argmax_set(*m, Prompt{0}, 1.0), DomainError);
    EXPECT_THROW(gamma_argmax_set(*m, Prompt{0}, -0.1), DomainError);
}

// Property: Y_gamma grows with gamma.
TEST(Property, GammaArgmaxMonotone) {
    RngStream rng(1);
    for (int trial = 0; trial < 200; ++trial) {
        auto m = table(random_simplex(2 + rng.below(20), rng));
        std::size_t prev = 0;
        for (double g = 0.0; g < 1.0; g += 0.05) {
            const auto s = gamma_argmax_set(*m, Prompt{0}, g);
            EXPECT_GE(s.size(), prev);
            prev = s.size();
        }
        // nonzero responses all enter near 1
        const auto p = m->distribution(Prompt{0});
        const auto nz = static_cast<std::size_t>(std::count_if(p.begin(), p.end(), [](double v) { return v > 1e-6; }));
        EXPECT_GE(gamma_argmax_set(*m, Prompt{0}, 1.0 - 1e-9).size(), nz);
    }
}

TEST(Sharpness, PointMassOnArgmax) {
    auto base = table({0.5, 0.3, 0.2});
    auto cand = table({1.0, 0.0, 0.0});
    for (double d : {0.0, 0.3, 0.9}) {
        EXPECT_EQ(sharpness_check(*cand, *base, PromptDistribution({1.0}), d).epsilon_hat, 0.0);
    }
}

TEST(Sharpness, UniformIsAlreadySharp) {
    auto u = table({0.25, 0.25, 0.25, 0.25});
    const auto v = sharpness_check(*u, *u, PromptDistribution({1.0}), 0.0);
    EXPECT_NEAR(v.masses[0], 1.0, 1e-12);
    EXPECT_EQ(v.epsilon_hat, 0.0);
}

TEST(Sharpness, BelowThresholdFails) {
    const auto v = sharpness_check(*table({0.7, 0.3}), *table({0.6, 0.4}), PromptDistribution({1.0}), 0.25);
    EXPECT_NEAR(v.masses[0], 0.7, 1e-12);
    EXPECT_EQ(v.epsilon_hat, 1.0);
    EXPECT_FALSE(v.passes(0.5));
}

TEST(Sharpness, FailureFractionIsMuWeighted) {
    auto sp = atomic_spaces(2, 2);
    auto base = std::make_shared<TabularModel>(sp, std::vector<std::vector<double>>{{0.6, 0.4}, {0.6, 0.4}});
    auto cand = std::make_shared<TabularModel>(sp, std::vector<std::vector<double>>{{1.0, 0.0}, {0.5, 0.5}});
    EXPECT_NEAR(sharpness_check(*cand, *base, PromptDistribution({0.3, 0.7}), 0.1).epsilon_hat, 0.7, 1e-12);
}

TEST(Coverage, SinglePrompt) {
    const auto c = coverage_profile(*table({0.5, 0.25, 0.25}), PromptDistribution({1.0}), 0.0);
    EXPECT_NEAR(c.c_cov, 2.0, 1e-12);
    EXPECT_NEAR(c.margin_max, 1.0, 1e-12);
}

TEST(Coverage, ArgmaxMassesHalfAndQuarter) {
    auto sp = atomic_spaces(2, 5);
    auto b = std::make_shared<TabularModel>(
        sp, std::vector<std::vector<double>>{{0.5, 0.2, 0.2, 0.1, 0.0}, {0.25, 0.2, 0.2, 0.2, 0.15}});
    EXPECT_NEAR(coverage_profile(*b, PromptDistribution({0.5, 0.5}), 0.0).c_cov, 3.0, 1e-12);
}

TEST(Coverage, LowerBoundFamilyGamma) {
    RngStream rng(3);
    const auto inst = lower_bound_family(2, 4, 0.5, 0.5, rng);
    EXPECT_NEAR(coverage_profile(*inst.base, inst.mu, 0.5).c_cov_gamma, 1.5, 1e-12);
}

TEST(Coverage, ConcentrabilityAndLoss) {
    auto base = table({0.5, 0.5});
    std::vector<ModelPtr> cands{table({0.9, 0.1}), base};
    const auto c = coverage_profile(*base, PromptDistribution({1.0}), 0.0, 1, cands, 2.0);
    EXPECT_NEAR(c.c_conc[0], 0.81 / 0.5 + 0.01 / 0.5, 1e-12);
    EXPECT_NEAR(c.c_conc[1], 1.0, 1e-12);
    EXPECT_NEAR(c.c_loss[0], 0.5 * std::pow(0.5 / 0.9, 2.0) + 0.5 * std::pow(0.5 / 0.1, 2.0), 1e-12);
    EXPECT_NEAR(c.c_loss[1], 1.0, 1e-12);
}

TEST(Coverage, MarginInfiniteWhenEverythingTies) {
    EXPECT_EQ(coverage_profile(*table({0.5, 0.5}), PromptDistribution({1.0}), 0.0).margin_max, kInf);
}

TEST(Tilt, ClosedFormSquare) {
    const auto p = tilt(*table({0.6, 0.4}), 1.0)->distribution(Prompt{0});
    EXPECT_NEAR(p[0], 0.692308, 1e-6);
    EXPECT_NEAR(p[1], 0.307692, 1e-6);
}

TEST(Tilt, DeterministicFixedPoint) {
    for (double b : {0.01, 1.0, 100.0}) {
        const auto p = tilt(*table({0.0, 1.0, 0.0}), b)->distribution(Prompt{0});
        EXPECT_EQ(p, (std::vector<double>{0.0, 1.0, 0.0}));
    }
}

TEST(Tilt, LargeBetaIsBase) {
    RngStream rng(4);
    auto base = table(random_simplex(10, rng));
    EXPECT_LE(tv(tilt(*base, 1e9)->distribution(Prompt{0}), base->distribution(Prompt{0})), 1e-6);
    EXPECT_THROW(tilt(*base, 0.0), DomainError);
    EXPECT_THROW(tilt(*base, -1.0), DomainError);
}

// Property: tilt matches the power-law oracle and keeps the argmax set.
TEST(Property, TiltMatchesPowerLaw) {
    RngStream rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        const auto p = random_simplex(2 + rng.below(30), rng);
        const double beta = std::exp(4.0 * rng.uniform() - 2.0);
        std::vector<double> q(p.size());
        double z = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            q[i] = std::pow(p[i], 1.0 + 1.0 / beta);
            z += q[i];
        }
        auto base = table(p);
        const auto t = tilt(*base, beta);
        const auto got = t->distribution(Prompt{0});
        for (std::size_t i = 0; i < p.size(); ++i) {
            EXPECT_NEAR(got[i], q[i] / z, 1e-12);
        }
        EXPECT_EQ(argmax_set(*t, Prompt{0}, 1e-9), argmax_set(*base, Prompt{0}, 1e-9));
        // the tilt puts no less mass on the argmax set
        const auto am = argmax_set(*base, Prompt{0});
        EXPECT_GE(mass_of(t->log_distribution(Prompt{0}), am) + 1e-12, mass_of(base->log_distribution(Prompt{0}), am));
    }
}

TEST(JBeta, BaseItself) {
    auto u = table({0.5, 0.5});
    EXPECT_NEAR(j_beta(*u, *u, PromptDistribution({1.0}), 1.0), -0.693147, 1e-6);
}

TEST(JBeta, PointMass) {
    EXPECT_NEAR(j_beta(*table({1.0, 0.0}), *table({0.5, 0.5}), PromptDistribution({1.0}), 1.0), -1.386294, 1e-6);
}

TEST(JBeta, UnsupportedCandidate) {
    EXPECT_EQ(j_beta(*table({0.5, 0.5}), *table({1.0, 0.0}), PromptDistribution({1.0}), 1.0), kNegInf);
}

// Property: the tilt maximizes J_beta with the self-reward.
TEST(Property, TiltMaximizesJBeta) {
    RngStream rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t k = 2 + rng.below(8);
        auto base = table(random_simplex(k, rng));
        const double beta = 0.2 + 2.0 * rng.uniform();
        const PromptDistribution mu({1.0});
        const double best = j_beta(*tilt(*base, beta), *base, mu, beta);
        for (int c = 0; c < 20; ++c) {
            EXPECT_LE(j_beta(*table(random_simplex(k, rng)), *base, mu, beta), best + 1e-12);
        }
    }
}

TEST(Divergence, Identical) {
    const std::vector<double> p{0.2, 0.8};
    const auto d = divergences(p, p);
    EXPECT_EQ(d.kl, 0.0);
    EXPECT_NEAR(d.hellinger_sq, 0.0, 1e-15);
}

TEST(Divergence, PointMassVsUniform) {
    const std::vector<double> p{1.0, 0.0};
    const std::vector<double> q{0.5, 0.5};
    const auto d = divergences(p, q);
    EXPECT_NEAR(d.kl, 0.693147, 1e-6);
    EXPECT_NEAR(d.hellinger_sq, 0.585786, 1e-6);
}

// Property: KL >= 0, 0 <= H^2 <= 2, TV symmetric in [0, 1], H^2 <= KL.
TEST(Property, DivergenceBounds) {
    RngStream rng(7);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t k = 2 + rng.below(20);
        const auto p = random_simplex(k, rng);
        const auto q = random_simplex(k, rng);
        const auto d = divergences(p, q);
        EXPECT_GE(d.kl, -1e-12);
        EXPECT_GE(d.hellinger_sq, 0.0);
        EXPECT_LE(d.hellinger_sq, 2.0 + 1e-12);
        EXPECT_LE(d.hellinger_sq, d.kl + 1e-9);
        EXPECT_NEAR(total_variation(p, q), total_variation(q, p), 1e-15);
        EXPECT_LE(total_variation(p, q), 1.0);
        EXPECT_NEAR(total_variation(p, q), tv(p, q), 1e-12);
    }
}

TEST(Divergence, ModelsAverageOverMu) {
    auto sp = atomic_spaces(2, 2);
    auto p = std::make_shared<TabularModel>(sp, std::vector<std::vector<double>>{{1.0, 0.0}, {0.5, 0.5}});
    auto q = std::make_shared<TabularModel>(sp, std::vector<std::vector<double>>{{0.5, 0.5}, {0.5, 0.5}});
    EXPECT_NEAR(divergences(*p, *q, PromptDistribution({0.25, 0.75})).kl, 0.25 * std::log(2.0), 1e-12);
}
