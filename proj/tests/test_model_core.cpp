#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "sharpen/errors.hpp"
#include "sharpen/metrics.hpp"
#include "sharpen/serialize.hpp"
#include "sharpen/softmax.hpp"
#include "test_support.hpp"

using namespace sharpen;
using namespace sharpen::testing;

namespace {

std::shared_ptr<AutoregressiveTabularModel> random_ar(std::size_t v, std::size_t h, RngStream& rng) {
    std::vector<std::string> vocab = names("t", v);
    auto sp = make_spaces(PromptSpace({"p", "q"}), ResponseSpace::sequence(vocab, h));
    std::vector<AutoregressiveTabularModel::StepTable> steps(h);
    std::size_t prefixes = 1;
    for (std::size_t k = 0; k < h; ++k) {
        steps[k].resize(2);
        for (auto& per_prompt : steps[k]) {
            for (std::size_t p = 0; p < prefixes; ++p) {
                per_prompt.push_back(random_simplex(v, rng));
            }
        }
        prefixes *= v;
    }
    return std::make_shared<AutoregressiveTabularModel>(sp, steps);
}

} // namespace

TEST(Logprob, TabularHalf) {
    auto m = table({0.5, 0.5});
    EXPECT_NEAR(m->logprob(Prompt{0}, Response{0}), -0.693147, 1e-6);
}

TEST(Logprob, DeterministicSupportPoint) {
    auto m = table({0.0, 1.0, 0.0});
    EXPECT_EQ(m->logprob(Prompt{0}, Response{1}), 0.0);
    EXPECT_EQ(m->logprob(Prompt{0}, Response{0}), kNegInf);
}

TEST(Logprob, AutoregressiveProductRule) {
    auto sp = make_spaces(PromptSpace({"x"}), ResponseSpace::sequence({"a", "b"}, 2));
    AutoregressiveTabularModel::StepTable s1{{{0.5, 0.5}}};
    AutoregressiveTabularModel::StepTable s2{{{0.5, 0.5}, {0.1, 0.9}}};
    AutoregressiveTabularModel m(sp, {s1, s2});
    const Response ab = sp->responses.find("a b");
    EXPECT_NEAR(m.logprob(Prompt{0}, ab), -1.386294, 1e-6);
}

TEST(Logprob, UnknownIdentifierIsDomainError) {
    auto m = table({0.5, 0.5});
    EXPECT_THROW(m->logprob(Prompt{3}, Response{0}), DomainError);
    EXPECT_THROW(m->logprob(Prompt{0}, Response{7}), DomainError);
    EXPECT_THROW(m->spaces()->responses.find("nope"), DomainError);
}

TEST(Spaces, SequenceSizeAndOrdering) {
    auto ys = ResponseSpace::sequence({"a", "b", "c"}, 3);
    EXPECT_EQ(ys.size(), 27u);
    // first token most significant
    EXPECT_EQ(ys.id(Response{1}), "a a b");
    EXPECT_EQ(ys.id(Response{9}), "b a a");
    EXPECT_EQ(ys.find("c c c").index, 26u);
    EXPECT_THROW(ResponseSpace::atomic({"a", "a"}), DomainError);
    EXPECT_THROW(PromptSpace({}), DomainError);
}

TEST(Spaces, PromptDistributionValidation) {
    EXPECT_THROW(PromptDistribution({0.5, 0.4}), std::exception);
    EXPECT_THROW(PromptDistribution({1.5, -0.5}), std::exception);
    EXPECT_NO_THROW(PromptDistribution({0.5, 0.5 + 1e-10}));
}

TEST(Validation, RowsMustSumToOne) {
    auto sp = atomic_spaces(1, 2);
    EXPECT_THROW(TabularModel(sp, {{0.6, 0.5}}), ValidationError);
    EXPECT_THROW(TabularModel(sp, {{1.1, -0.1}}), ValidationError);
}

TEST(Sample, DeterministicAlwaysSupport) {
    auto m = table({0.0, 0.0, 1.0});
    RngStream rng(1);
    for (int i = 0; i < 1000; ++i) {
        EXPECT_EQ(m->sample(Prompt{0}, rng).index, 2u);
    }
}

TEST(Sample, BinomialFrequency) {
    auto m = table({0.6, 0.4});
    RngStream rng(2024);
    std::size_t hits = 0;
    for (int i = 0; i < 100000; ++i) {
        hits += m->sample(Prompt{0}, rng).index == 0 ? 1 : 0;
    }
    const double f = static_cast<double>(hits) / 1e5;
    EXPECT_GE(f, 0.594);
    EXPECT_LE(f, 0.606);
}

TEST(Sample, ZeroThetaSoftmaxIsUniformPerStep) {
    auto sp = make_spaces(PromptSpace({"x"}), ResponseSpace::sequence({"a", "b", "c"}, 2));
    auto phi = std::make_shared<MonomialFeatures>(2, std::vector<double>{-1.0, 0.0, 1.0});
    LinearSoftmaxModel m(sp, phi, Params(2, std::vector<double>(phi->dim(), 0.0)), 1.0);
    RngStream rng(5);
    std::vector<std::size_t> draws;
    for (int i = 0; i < 90000; ++i) {
        draws.push_back(m.sample(Prompt{0}, rng).index);
    }
    const auto f = frequencies(draws, 9);
    EXPECT_LE(tv(f, std::vector<double>(9, 1.0 / 9.0)), 0.01);
}

TEST(Rng, ReproducibleAndIndependentStreams) {
    RngStream a(7, 1);
    RngStream b(7, 1);
    RngStream c(7, 2);
    int same = 0;
    for (int i = 0; i < 1000; ++i) {
        const auto va = a();
        EXPECT_EQ(va, b());
        same += va == c() ? 1 : 0;
    }
    EXPECT_EQ(same, 0);
    // split does not advance the parent
    RngStream p(3);
    auto child = p.split(4);
    EXPECT_EQ(p.counter(), 0u);
    EXPECT_NE(child(), RngStream(3)());
}

TEST(Rng, UniformMoments) {
    RngStream r(11);
    double s = 0.0;
    double s2 = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        s += u;
        s2 += u * u;
    }
    EXPECT_NEAR(s / n, 0.5, 0.003);
    EXPECT_NEAR(s2 / n - (s / n) * (s / n), 1.0 / 12.0, 0.002);
    for (int i = 0; i < 1000; ++i) {
        EXPECT_LT(r.below(7), 7u);
    }
}

TEST(SoftmaxEval, TwoResponsesZeroTheta) {
    auto sp = atomic_spaces(1, 2);
    auto phi = std::make_shared<TableFeatures>(1, 2, std::vector<std::vector<std::vector<double>>>{{{1.0, -1.0}}});
    LinearSoftmaxModel m(sp, phi, {{0.0}}, 1.0);
    const auto p = m.distribution(Prompt{0});
    EXPECT_NEAR(p[0], 0.5, 1e-15);
    EXPECT_NEAR(p[1], 0.5, 1e-15);
}

TEST(SoftmaxEval, HalfLogThree) {
    auto sp = atomic_spaces(1, 2);
    auto phi = std::make_shared<TableFeatures>(1, 2, std::vector<std::vector<std::vector<double>>>{{{1.0, -1.0}}});
    LinearSoftmaxModel m(sp, phi, {{std::log(3.0) / 2.0}}, 1.0);
    const auto p = m.distribution(Prompt{0});
    EXPECT_NEAR(p[0], 0.75, 1e-12);
    EXPECT_NEAR(p[1], 0.25, 1e-12);
}

TEST(SoftmaxEval, MultiLayerZeroIsUniform) {
    auto sp = make_spaces(PromptSpace({"x"}), ResponseSpace::sequence({"a", "b"}, 3));
    auto phi = std::make_shared<MonomialFeatures>(3, std::vector<double>{-1.0, 1.0});
    LinearSoftmaxModel m(sp, phi, Params(3, std::vector<double>(phi->dim(), 0.0)), 1.0);
    for (double p : m.distribution(Prompt{0})) {
        EXPECT_NEAR(p, 0.125, 1e-15);
    }
}

TEST(SoftmaxEval, NormViolationIsValidationError) {
    auto sp = atomic_spaces(1, 2);
    auto phi = std::make_shared<TableFeatures>(1, 2, std::vector<std::vector<std::vector<double>>>{{{1.0, -1.0}}});
    EXPECT_THROW(LinearSoftmaxModel(sp, phi, {{2.0}}, 1.0), ValidationError);
}

TEST(SoftmaxEval, GradientMatchesCentralDifferences) {
    RngStream rng(17);
    auto sp = make_spaces(PromptSpace({"x"}), ResponseSpace::sequence({"a", "b", "c"}, 2));
    auto phi = std::make_shared<MonomialFeatures>(2, std::vector<double>{-1.0, 0.5, 1.0});
    Params theta(2, std::vector<double>(phi->dim()));
    for (auto& l : theta) {
        for (auto& t : l) {
            t = rng.uniform() - 0.5;
        }
    }
    const Response y{5};
    Params g(2, std::vector<double>(phi->dim(), 0.0));
    softmax_logprob(*phi, theta, sp->responses, Prompt{0}, y, &g);
    for (std::size_t h = 0; h < 2; ++h) {
        for (std::size_t k = 0; k < phi->dim(); ++k) {
            auto up = theta;
            auto dn = theta;
            up[h][k] += 1e-6;
            dn[h][k] -= 1e-6;
            const double fd = (softmax_logprob(*phi, up, sp->responses, Prompt{0}, y) -
                               softmax_logprob(*phi, dn, sp->responses, Prompt{0}, y)) /
                              2e-6;
            EXPECT_NEAR(g[h][k], fd, 1e-6);
        }
    }
}

// Property: every model normalizes at desk scale.
TEST(Property, DistributionsSumToOne) {
    RngStream rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        auto ar = random_ar(2 + rng.below(3), 1 + rng.below(3), rng);
        for (std::size_t x = 0; x < 2; ++x) {
            const auto p = ar->distribution(Prompt{x});
            EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-9);
        }
    }
    auto sp = make_spaces(PromptSpace({"x"}), ResponseSpace::sequence({"a", "b", "c"}, 3));
    auto phi = std::make_shared<MonomialFeatures>(3, std::vector<double>{-1.0, 0.3, 1.0});
    for (int trial = 0; trial < 20; ++trial) {
        Params theta(3, std::vector<double>(phi->dim()));
        for (auto& l : theta) {
            for (auto& t : l) {
                t = 0.3 * (rng.uniform() - 0.5);
            }
        }
        project_to_ball(theta, 1.0);
        LinearSoftmaxModel m(sp, phi, theta, 1.0);
        const auto p = m.distribution(Prompt{0});
        EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-9);
    }
}

// Property: autoregressive logprob equals the chain rule product.
TEST(Property, ChainRule) {
    RngStream rng(123);
    for (int trial = 0; trial < 20; ++trial) {
        auto ar = random_ar(3, 3, rng);
        const auto& ys = ar->responses();
        for (std::size_t x = 0; x < 2; ++x) {
            for (std::size_t y = 0; y < ys.size(); ++y) {
                const auto toks = ys.tokens(Response{y});
                double p = 1.0;
                std::size_t prefix = 0;
                for (std::size_t h = 0; h < toks.size(); ++h) {
                    p *= ar->steps()[h][x][prefix][toks[h]];
                    prefix = prefix * 3 + toks[h];
                }
                EXPECT_NEAR(ar->logprob(Prompt{x}, Response{y}), std::log(p), 1e-12);
            }
        }
    }
}

// Property: empirical sampling converges in total variation.
TEST(Property, SamplingConvergesInTv) {
    RngStream rng(31337);
    for (int trial = 0; trial < 5; ++trial) {
        const std::size_t k = 8 + rng.below(57);
        auto m = table(random_simplex(k, rng));
        std::vector<std::size_t> draws;
        for (int i = 0; i < 100000; ++i) {
            draws.push_back(m->sample(Prompt{0}, rng).index);
        }
        EXPECT_LE(tv(frequencies(draws, k), m->distribution(Prompt{0})), 0.02);
    }
    auto ar = random_ar(4, 3, rng);
    std::vector<std::size_t> draws;
    for (int i = 0; i < 100000; ++i) {
        draws.push_back(ar->sample(Prompt{1}, rng).index);
    }
    EXPECT_LE(tv(frequencies(draws, 64), ar->distribution(Prompt{1})), 0.02);
}

// Property: scaling single-layer theta by c > 0 keeps the argmax set.
TEST(Property, ArgmaxInvariantUnderScaling) {
    RngStream rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t ny = 2 + rng.below(10);
        const std::size_t d = 1 + rng.below(4);
        auto sp = atomic_spaces(1, ny);
        std::vector<double> block(ny * d);
        for (auto& v : block) {
            v = std::round(4.0 * (rng.uniform() - 0.5)) / 4.0;  // coarse grid forces ties
        }
        auto phi = std::make_shared<TableFeatures>(d, ny, std::vector<std::vector<std::vector<double>>>{{block}});
        Params theta{std::vector<double>(d)};
        for (auto& t : theta[0]) {
            t = rng.uniform() < 0.3 ? 0.0 : rng.uniform() - 0.5;
        }
        LinearSoftmaxModel m(sp, phi, theta, 10.0);
        for (double c : {0.5, 2.0, 7.0}) {
            Params scaled = theta;
            for (auto& t : scaled[0]) {
                t *= c;
            }
            LinearSoftmaxModel s(sp, phi, scaled, 100.0);
            EXPECT_EQ(argmax_set(m, Prompt{0}, 1e-9), argmax_set(s, Prompt{0}, 1e-9));
        }
    }
}

TEST(Serialize, RoundTripExactParametersAndProbabilities) {
    RngStream rng(4);
    auto dir = std::filesystem::temp_directory_path() / "sharpen_serialize_test";
    std::filesystem::create_directories(dir);

    auto tab = random_table(atomic_spaces(3, 5), rng);
    save_model(*tab, dir / "tab.json");
    auto back = load_model(dir / "tab.json");
    for (std::size_t x = 0; x < 3; ++x) {
        const auto a = tab->distribution(Prompt{x});
        const auto b = back->distribution(Prompt{x});
        for (std::size_t y = 0; y < 5; ++y) {
            EXPECT_NEAR(a[y], b[y], 1e-15);
        }
    }

    auto sp = make_spaces(PromptSpace({"x"}), ResponseSpace::sequence({"a", "b"}, 2));
    auto phi = std::make_shared<MonomialFeatures>(2, std::vector<double>{-1.0, 1.0});
    Params theta(2, std::vector<double>(phi->dim()));
    for (auto& l : theta) {
        for (auto& t : l) {
            t = (rng.uniform() - 0.5) / 3.0;
        }
    }
    LinearSoftmaxModel lin(sp, phi, theta, 1.0);
    save_model(lin, dir / "lin.json");
    auto lin2 = std::dynamic_pointer_cast<const LinearSoftmaxModel>(load_model(dir / "lin.json"));
    ASSERT_TRUE(lin2);
    EXPECT_EQ(lin2->theta(), theta);  // bit-exact

    auto ar = random_ar(3, 2, rng);
    save_model(*ar, dir / "ar.json");
    auto ar2 = load_model(dir / "ar.json");
    for (std::size_t y = 0; y < 9; ++y) {
        EXPECT_NEAR(std::exp(ar->logprob(Prompt{1}, Response{y})), std::exp(ar2->logprob(Prompt{1}, Response{y})),
                    1e-15);
    }
    std::filesystem::remove_all(dir);
}

TEST(Serialize, MalformedInputIsInputError) {
    EXPECT_THROW(model_from_json(nlohmann::json::parse(R"({"format":"other"})")), InputError);
}
