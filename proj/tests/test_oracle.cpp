#include <gtest/gtest.h>

#include <sstream>

#include "sharpen/errors.hpp"
#include "sharpen/oracle.hpp"
#include "test_support.hpp"

using namespace sharpen;
using namespace sharpen::testing;

namespace {

std::shared_ptr<TabularModel> two_prompt_model() {
    return std::make_shared<TabularModel>(atomic_spaces(2, 3),
                                          std::vector<std::vector<double>>{{0.2, 0.3, 0.5}, {0.0, 1.0, 0.0}});
}

} // namespace

TEST(DrawPrompt, PointMass) {
    OracleSession s(two_prompt_model(), PromptDistribution::point_mass(2, Prompt{0}), SessionConfig::adaptive());
    RngStream rng(1);
    for (int i = 0; i < 20; ++i) {
        EXPECT_EQ(s.draw_prompt(rng).index, 0u);
    }
}

TEST(DrawPrompt, BinomialBalance) {
    OracleSession s(two_prompt_model(), PromptDistribution({0.5, 0.5}), SessionConfig::adaptive());
    RngStream rng(2);
    std::size_t zeros = 0;
    for (int i = 0; i < 10000; ++i) {
        zeros += s.draw_prompt(rng).index == 0 ? 1 : 0;
    }
    EXPECT_GE(zeros, 4850u);
    EXPECT_LE(zeros, 5150u);
}

TEST(DrawPrompt, AfterSealIsStateError) {
    OracleSession s(two_prompt_model(), PromptDistribution({0.5, 0.5}), SessionConfig::adaptive());
    RngStream rng(3);
    s.seal();
    EXPECT_THROW(s.draw_prompt(rng), StateError);
}

TEST(DrawAndEvaluate, DeterministicBase) {
    OracleSession s(two_prompt_model(), PromptDistribution::point_mass(2, Prompt{1}), SessionConfig::adaptive());
    RngStream rng(4);
    const auto x = s.draw_prompt(rng);
    const auto d = s.draw_and_evaluate(x, rng);
    EXPECT_EQ(d.response.index, 1u);
    EXPECT_EQ(d.logprob, 0.0);
}

TEST(DrawAndEvaluate, AccountingAndExactLogprobs) {
    auto base = two_prompt_model();
    OracleSession s(base, PromptDistribution::point_mass(2, Prompt{0}), SessionConfig::adaptive());
    RngStream rng(5);
    const auto x = s.draw_prompt(rng);
    for (int k = 0; k < 7; ++k) {
        const auto d = s.draw_and_evaluate(x, rng);
        EXPECT_EQ(d.logprob, base->logprob(x, d.response));
    }
    EXPECT_EQ(s.group_sizes().back(), 7u);
    EXPECT_EQ(s.budget_report().m, 7u);
    for (const auto& q : s.log()) {
        EXPECT_EQ(q.logprob, base->logprob(q.prompt, q.response));
    }
}

TEST(DrawAndEvaluate, UnopenedPromptIsStateError) {
    OracleSession s(two_prompt_model(), PromptDistribution::point_mass(2, Prompt{0}), SessionConfig::adaptive());
    RngStream rng(6);
    EXPECT_THROW(s.draw_and_evaluate(Prompt{0}, rng), StateError);
    s.draw_prompt(rng);
    EXPECT_THROW(s.draw_and_evaluate(Prompt{1}, rng), StateError);
}

TEST(DrawAndEvaluate, ClosedGroupCannotBeRevisited) {
    OracleSession s(two_prompt_model(), PromptDistribution({0.5, 0.5}), SessionConfig::adaptive());
    RngStream rng(7);
    const auto first = s.draw_prompt(rng);
    Prompt second = s.draw_prompt(rng);
    while (second == first) {
        second = s.draw_prompt(rng);
    }
    EXPECT_THROW(s.draw_and_evaluate(first, rng), StateError);
}

TEST(BudgetReport, Fresh) {
    OracleSession s(two_prompt_model(), PromptDistribution({0.5, 0.5}), SessionConfig::adaptive());
    EXPECT_EQ(s.budget_report(), (BudgetReport{0, 0, 0, 0}));
}

TEST(BudgetReport, FixedThreeByFive) {
    OracleSession s(two_prompt_model(), PromptDistribution({0.5, 0.5}), SessionConfig::fixed(3, 5));
    RngStream rng(8);
    for (int i = 0; i < 3; ++i) {
        const auto x = s.draw_prompt(rng);
        for (int k = 0; k < 5; ++k) {
            s.draw_and_evaluate(x, rng);
        }
    }
    s.seal();
    const auto r = s.budget_report();
    EXPECT_EQ(r.n, 3u);
    EXPECT_EQ(r.n_max, 5u);
    EXPECT_EQ(r.m, 15u);
}

TEST(BudgetReport, AdaptiveGroups) {
    OracleSession s(two_prompt_model(), PromptDistribution({0.5, 0.5}), SessionConfig::adaptive());
    RngStream rng(9);
    for (int sizes : {2, 7}) {
        const auto x = s.draw_prompt(rng);
        for (int k = 0; k < sizes; ++k) {
            s.draw_and_evaluate(x, rng);
        }
    }
    const auto r = s.budget_report();
    EXPECT_EQ(r.n, 2u);
    EXPECT_EQ(r.n_max, 7u);
    EXPECT_EQ(r.m, 9u);
}

// Property: fixed sessions never exceed m = n N.
TEST(Budget, FixedModeHardFails) {
    OracleSession s(two_prompt_model(), PromptDistribution({0.5, 0.5}), SessionConfig::fixed(2, 3));
    RngStream rng(10);
    auto x = s.draw_prompt(rng);
    EXPECT_THROW(s.draw_prompt(rng), StateError);  // incomplete group
    for (int k = 0; k < 3; ++k) {
        s.draw_and_evaluate(x, rng);
    }
    EXPECT_THROW(s.draw_and_evaluate(x, rng), BudgetExhausted);
    x = s.draw_prompt(rng);
    for (int k = 0; k < 3; ++k) {
        s.draw_and_evaluate(x, rng);
    }
    EXPECT_THROW(s.draw_prompt(rng), BudgetExhausted);
    EXPECT_EQ(s.budget_report().m, 6u);
}

TEST(Budget, QueryCapInAdaptiveMode) {
    auto cfg = SessionConfig::adaptive();
    cfg.max_queries = 4;
    OracleSession s(two_prompt_model(), PromptDistribution({0.5, 0.5}), cfg);
    RngStream rng(11);
    const auto x = s.draw_prompt(rng);
    for (int k = 0; k < 4; ++k) {
        s.draw_and_evaluate(x, rng);
    }
    EXPECT_THROW(s.draw_and_evaluate(x, rng), BudgetExhausted);
}

TEST(Evaluate, OnlyInRelaxedSessions) {
    OracleSession strict(two_prompt_model(), PromptDistribution({0.5, 0.5}), SessionConfig::adaptive());
    EXPECT_THROW(strict.evaluate(Prompt{0}, Response{1}), StateError);
    OracleSession relaxed(two_prompt_model(), PromptDistribution({0.5, 0.5}), SessionConfig::relaxed());
    EXPECT_DOUBLE_EQ(relaxed.evaluate(Prompt{0}, Response{2}), std::log(0.5));
    EXPECT_EQ(relaxed.budget_report().evaluations, 1u);
    EXPECT_EQ(relaxed.budget_report().m, 0u);
}

// Property: the exported log replays the session exactly.
TEST(Log, ExportImportRoundTrip) {
    auto base = two_prompt_model();
    OracleSession s(base, PromptDistribution({0.5, 0.5}), SessionConfig::relaxed());
    RngStream rng(12);
    for (int i = 0; i < 10; ++i) {
        const auto x = s.draw_prompt(rng);
        for (int k = 0; k < 3; ++k) {
            s.draw_and_evaluate(x, rng);
        }
    }
    s.evaluate(Prompt{1}, Response{0});  // -inf logprob survives the trip
    std::stringstream buf;
    s.export_log(buf);
    const auto back = import_log(buf, *base->spaces());
    ASSERT_EQ(back.size(), s.log().size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        EXPECT_EQ(back[i].group, s.log()[i].group);
        EXPECT_EQ(back[i].kind, s.log()[i].kind);
        EXPECT_EQ(back[i].prompt, s.log()[i].prompt);
        EXPECT_EQ(back[i].response, s.log()[i].response);
        EXPECT_EQ(back[i].logprob, s.log()[i].logprob);
    }
    std::stringstream bad("{\"group\":0}\n");
    EXPECT_THROW(import_log(bad, *base->spaces()), InputError);
}
