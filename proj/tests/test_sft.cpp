#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "sharpen/errors.hpp"
#include "sharpen/metrics.hpp"
#include "sharpen/sft.hpp"
#include "test_support.hpp"

using namespace sharpen;
using namespace sharpen::testing;

TEST(ExactBon, NOneIsBase) {
    const std::vector<double> p{0.1, 0.6, 0.3};
    auto base = table(p);
    const auto q = exact_bon_distribution(*base, Prompt{0}, 1);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_NEAR(q[i], p[i], 1e-15);
    }
}

TEST(ExactBon, SixFourTwoDraws) {
    const auto q = exact_bon_distribution(*table({0.6, 0.4}), Prompt{0}, 2);
    EXPECT_NEAR(q[0], 0.84, 1e-15);
    EXPECT_NEAR(q[1], 0.16, 1e-15);
}

TEST(ExactBon, TieGroupSplitsEvenly) {
    const auto q = exact_bon_distribution(*table({0.5, 0.5}), Prompt{0}, 3);
    EXPECT_NEAR(q[0], 0.5, 1e-15);
    EXPECT_NEAR(q[1], 0.5, 1e-15);
}

// Property: the closed form equals tuple enumeration with first-drawn ties.
TEST(Property, ExactBonMatchesTupleEnumeration) {
    RngStream rng(1);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t k = 2 + rng.below(4);
        auto p = random_simplex(k, rng);
        if (rng.uniform() < 0.3) {
            p[1] = p[0];  // inject a tie
            const double s = std::accumulate(p.begin(), p.end(), 0.0);
            for (auto& v : p) {
                v /= s;
            }
        }
        if (rng.uniform() < 0.2) {
            p[k - 1] = 0.0;
            const double s = std::accumulate(p.begin(), p.end(), 0.0);
            for (auto& v : p) {
                v /= s;
            }
        }
        const std::size_t n = 1 + rng.below(5);
        std::vector<double> logs(k);
        for (std::size_t i = 0; i < k; ++i) {
            logs[i] = p[i] > 0 ? std::log(p[i]) : kNegInf;
        }
        const auto got = exact_bon_distribution(logs, n);
        const auto want = bon_by_tuples(p, n);
        // ties in the tuple oracle favor the first drawn, which splits by symmetry
        for (std::size_t i = 0; i < k; ++i) {
            EXPECT_NEAR(got[i], want[i], 1e-12) << "k=" << k << " n=" << n << " i=" << i;
        }
    }
}

// Property: BoN mass on the argmax set is nondecreasing in N.
TEST(Property, BonArgmaxMassMonotone) {
    RngStream rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        auto base = table(random_simplex(2 + rng.below(30), rng));
        const auto am = argmax_set(*base, Prompt{0});
        double prev = 0.0;
        for (std::size_t n = 1; n <= 64; n *= 2) {
            const auto q = exact_bon_distribution(*base, Prompt{0}, n);
            double m = 0.0;
            for (auto r : am) {
                m += q[r.index];
            }
            EXPECT_GE(m + 1e-12, prev);
            prev = m;
        }
    }
}

TEST(Collect, DeterministicBase) {
    auto base = table({0.0, 0.0, 1.0});
    OracleSession s(base, PromptDistribution({1.0}), SessionConfig::fixed(10, 4));
    RngStream rng(3);
    const auto data = collect_bon_dataset(s, 10, 4, SelfReward{}, rng);
    ASSERT_EQ(data.records.size(), 10u);
    for (const auto& r : data.records) {
        EXPECT_EQ(r.response.index, 2u);
        EXPECT_EQ(r.group_size, 4u);
    }
}

TEST(Collect, BudgetAccounting) {
    RngStream rng(4);
    auto base = random_table(atomic_spaces(3, 4), rng);
    OracleSession s(base, PromptDistribution::uniform(3), SessionConfig::fixed(3, 5));
    collect_bon_dataset(s, 3, 5, SelfReward{}, rng);
    EXPECT_EQ(s.budget_report(), (BudgetReport{3, 5, 15, 0}));
}

TEST(Collect, RecordsFollowBonDistribution) {
    auto base = table({0.5, 0.3, 0.2});
    OracleSession s(base, PromptDistribution({1.0}), SessionConfig::adaptive());
    RngStream rng(5);
    const auto data = collect_bon_dataset(s, 50000, 3, SelfReward{}, rng);
    std::vector<std::size_t> ys;
    for (const auto& r : data.records) {
        ys.push_back(r.response.index);
    }
    EXPECT_LE(tv(frequencies(ys, 3), bon_by_tuples({0.5, 0.3, 0.2}, 3)), 0.01);
}

TEST(BonTransform, MatchesPerPrompt) {
    RngStream rng(6);
    auto base = random_table(atomic_spaces(4, 5), rng);
    auto t = bon_transform(*base, 7);
    for (std::size_t x = 0; x < 4; ++x) {
        const auto want = exact_bon_distribution(*base, Prompt{x}, 7);
        const auto got = t->distribution(Prompt{x});
        for (std::size_t y = 0; y < 5; ++y) {
            EXPECT_NEAR(got[y], want[y], 1e-14);
        }
    }
}

TEST(MleFit, Singleton) {
    auto m = table({0.3, 0.7});
    BonDataset d{{{Prompt{0}, Response{0}, std::log(0.3), 1}}};
    const auto fit = mle_fit(ModelClass::finite({m}), d);
    EXPECT_EQ(fit.model, m);
    EXPECT_EQ(fit.index, 0u);
}

TEST(MleFit, PicksTiltFromTiltSamples) {
    auto base = table({0.6, 0.4});
    auto t = tilt(*base, 1.0);
    const auto cls = ModelClass::finite({base, t});
    int right = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        RngStream rng(1000 + seed);
        BonDataset d;
        for (int i = 0; i < 500; ++i) {
            const auto y = t->sample(Prompt{0}, rng);
            d.records.push_back({Prompt{0}, y, base->logprob(Prompt{0}, y), 1});
        }
        right += mle_fit(cls, d).index == 1u ? 1 : 0;
    }
    EXPECT_GE(right, 99);
}

TEST(MleFit, TabularEmpiricalFrequencies) {
    auto sp = atomic_spaces(2, 2);
    BonDataset d;
    for (int i = 0; i < 3; ++i) {
        d.records.push_back({Prompt{0}, Response{0}, 0.0, 1});
    }
    d.records.push_back({Prompt{0}, Response{1}, 0.0, 1});
    const auto fit = mle_fit(ModelClass::tabular(sp), d);
    const auto p = fit.model->distribution(Prompt{0});
    EXPECT_NEAR(p[0], 0.75, 1e-15);
    EXPECT_NEAR(p[1], 0.25, 1e-15);
    const auto u = fit.model->distribution(Prompt{1});
    EXPECT_NEAR(u[0], 0.5, 1e-15);
}

TEST(MleFit, FiniteTiesGoToLowestIndex) {
    auto a = table({0.5, 0.5});
    auto b = table({0.5, 0.5});
    BonDataset d{{{Prompt{0}, Response{1}, 0.0, 1}}};
    EXPECT_EQ(mle_fit(ModelClass::finite({a, b}), d).index, 0u);
}

TEST(MleFit, SoftmaxRecoversInteriorTheta) {
    auto sp = atomic_spaces(1, 4);
    auto phi = std::make_shared<TableFeatures>(
        2, 4, std::vector<std::vector<std::vector<double>>>{{{1, 0, 0, 1, -1, 0, 0, -1}}});
    const Params truth{{0.4, -0.2}};
    const auto cls = ModelClass::softmax(sp, phi, 2.0);
    auto gen = cls.make(truth);
    RngStream rng(7);
    BonDataset d;
    for (int i = 0; i < 40000; ++i) {
        const auto y = gen->sample(Prompt{0}, rng);
        d.records.push_back({Prompt{0}, y, 0.0, 1});
    }
    const auto fit = mle_fit(cls, d);
    ASSERT_TRUE(fit.theta);
    EXPECT_NEAR((*fit.theta)[0][0], 0.4, 0.03);
    EXPECT_NEAR((*fit.theta)[0][1], -0.2, 0.03);
}

TEST(Adaptive, DeterministicStopsAtTwo) {
    auto base = table({1.0, 0.0});
    OracleSession s(base, PromptDistribution({1.0}), SessionConfig::adaptive());
    RngStream rng(8);
    const auto d = adaptive_collect(s, 20, StoppingConfig{2.0}, rng);
    for (const auto& r : d.records) {
        EXPECT_EQ(r.group_size, 2u);
    }
}

TEST(Adaptive, MeanStoppingTimeBound) {
    auto base = table({0.5, 0.25, 0.25});
    OracleSession s(base, PromptDistribution({1.0}), SessionConfig::adaptive());
    RngStream rng(9);
    const auto d = adaptive_collect(s, 100000, StoppingConfig{1.0}, rng);
    double total = 0.0;
    for (const auto& r : d.records) {
        total += static_cast<double>(r.group_size);
    }
    EXPECT_LE(total / 1e5, 4.0 + 0.03);
}

TEST(Adaptive, CapIsCapacityError) {
    auto base = table({0.001, 0.999});
    OracleSession s(base, PromptDistribution({1.0}), SessionConfig::adaptive());
    RngStream rng(10);
    StoppingConfig cfg{1e6, 5};
    EXPECT_THROW(adaptive_collect(s, 1, cfg, rng), CapacityError);
}
