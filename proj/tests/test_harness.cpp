#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sharpen/errors.hpp"
#include "sharpen/experiment.hpp"
#include "sharpen/harness.hpp"
#include "sharpen/serialize.hpp"
#include "sharpen/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sharpen;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("sharpen-test-" + name + "-" + std::to_string(::getpid()));
    fs::remove_all(p);
    return p;
}

CompletionRecord rec(std::string p, std::string r, double lp, std::optional<std::string> ans, std::optional<bool> ok) {
    CompletionRecord c;
    c.prompt_id = std::move(p);
    c.response_id = std::move(r);
    c.logprob = lp;
    c.answer = std::move(ans);
    c.correct = ok;
    return c;
}

// Two prompts with labelled pools of 4.
std::vector<CompletionRecord> small_pool() {
    return {rec("a", "a0", -0.5, "1", true),  rec("a", "a1", -2.0, "2", false), rec("a", "a2", -1.0, "1", true),
            rec("a", "a3", -3.0, "3", false), rec("b", "b0", -1.5, "7", false), rec("b", "b1", -0.2, "7", false),
            rec("b", "b2", -2.5, "8", true),  rec("b", "b3", -4.0, "7", false)};
}

ExperimentConfig tabular_config(Algorithm a, const fs::path& out) {
    ExperimentConfig cfg;
    cfg.instance = {{"kind", "random-tabular"}, {"seed", 3}, {"prompts", 4}, {"responses", 5}};
    cfg.algorithm = a;
    cfg.n = 40;
    cfg.big_n = 8;
    cfg.seeds = {0, 1, 2};
    cfg.output_dir = out.string();
    return cfg;
}

} // namespace

TEST(Completions, RoundTrip) {
    const auto recs = small_pool();
    std::stringstream s;
    write_completions(s, recs);
    const auto back = read_completions(s);
    ASSERT_EQ(back.size(), recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        EXPECT_EQ(back[i].prompt_id, recs[i].prompt_id);
        EXPECT_EQ(back[i].response_id, recs[i].response_id);
        EXPECT_EQ(back[i].logprob, recs[i].logprob);
        EXPECT_EQ(back[i].answer, recs[i].answer);
        EXPECT_EQ(back[i].correct, recs[i].correct);
    }
}

TEST(Completions, EmptyInputIsAnError) {
    std::stringstream s("\n\n");
    EXPECT_THROW(read_completions(s), InputError);
}

TEST(Completions, MalformedLineNamesTheLine) {
    std::stringstream s(R"({"prompt_id":"a","response_id":"r","logprob":-1})"
                        "\n{not json}\n");
    try {
        read_completions(s);
        FAIL() << "expected InputError";
    } catch (const InputError& e) {
        EXPECT_NE(std::string(e.what()).find('2'), std::string::npos);
    }
}

TEST(Completions, MissingFieldIsAnError) {
    std::stringstream s(R"({"prompt_id":"a","logprob":-1})");
    EXPECT_THROW(read_completions(s), InputError);
}

TEST(Analyzer, NOneIsThePlainSampleAccuracy) {
    AnalyzeConfig cfg;
    cfg.ns = {1};
    RngStream rng(1);
    const auto rows = bon_analyze(small_pool(), cfg, rng);
    ASSERT_EQ(rows.size(), 1u);
    // prompt a: 2/4 correct, prompt b: 1/4
    EXPECT_NEAR(*rows[0].accuracy, (0.5 + 0.25) / 2.0, 1e-15);
    EXPECT_NEAR(*rows[0].lift_abs, 0.0, 1e-15);
}

TEST(Analyzer, FullPoolSelectsTheLikelihoodMaximizer) {
    AnalyzeConfig cfg;
    cfg.ns = {4};
    RngStream rng(2);
    const auto rows = bon_analyze(small_pool(), cfg, rng);
    // a0 is correct, b1 is not
    EXPECT_NEAR(*rows[0].accuracy, 0.5, 1e-15);
    EXPECT_NEAR(*rows[0].coverage, 1.0, 1e-15);
    EXPECT_NEAR(*rows[0].lift_abs, 0.5 - 0.375, 1e-15);
    EXPECT_NEAR(*rows[0].lift_rel, (0.5 - 0.375) / 0.375, 1e-12);
    EXPECT_NEAR(rows[0].mean_logprob, (-0.5 - 0.2) / 2.0, 1e-15);
}

TEST(Analyzer, AccuracyNeverExceedsCoverage) {
    AnalyzeConfig cfg;
    cfg.ns = {1, 2, 3, 4, 6};
    cfg.rewards = {SelfReward{}, SelfReward::parse("length_normalized"), SelfReward::parse("majority")};
    RngStream rng(3);
    for (const auto& row : bon_analyze(small_pool(), cfg, rng)) {
        EXPECT_LE(*row.accuracy, *row.coverage + 1e-15) << row.reward << " N=" << row.n;
        EXPECT_LE(*row.accuracy_lo, *row.accuracy + 1e-15);
        EXPECT_GE(*row.accuracy_hi, *row.accuracy - 1e-15);
    }
}

TEST(Analyzer, MajorityWithoutAnswersCountsSelectionErrors) {
    auto recs = small_pool();
    for (auto& r : recs) {
        r.answer.reset();
    }
    AnalyzeConfig cfg;
    cfg.ns = {2};
    cfg.rewards = {SelfReward::parse("majority")};
    RngStream rng(4);
    const auto rows = bon_analyze(recs, cfg, rng);
    EXPECT_EQ(rows[0].evaluated, 0u);
    EXPECT_EQ(rows[0].selection_errors, 2u);
}

TEST(Analyzer, MajorityUsesDelimiterWhenAnswersAreAbsent) {
    std::vector<CompletionRecord> recs{rec("a", "work #### 5", -3.0, std::nullopt, true),
                                       rec("a", "other #### 5", -2.0, std::nullopt, true),
                                       rec("a", "guess #### 9", -0.1, std::nullopt, false)};
    AnalyzeConfig cfg;
    cfg.ns = {3};
    cfg.rewards = {SelfReward{RewardKind::majority, "####"}};
    RngStream rng(5);
    const auto rows = bon_analyze(recs, cfg, rng);
    EXPECT_EQ(rows[0].selection_errors, 0u);
    EXPECT_NEAR(*rows[0].accuracy, 1.0, 1e-15);
}

TEST(Analyzer, CsvHeaderIsFrozen) {
    std::stringstream s;
    write_analyze_csv(s, {});
    std::string first;
    std::getline(s, first);
    EXPECT_EQ(first,
              "n,reward,prompts,evaluated,selection_errors,accuracy,accuracy_lo,accuracy_hi,coverage,coverage_lo,"
              "coverage_hi,mean_logprob,lift_abs,lift_rel");
}

TEST(Analyzer, SameSeedSameOutput) {
    AnalyzeConfig cfg;
    cfg.ns = {2, 3};
    RngStream a(9);
    RngStream b(9);
    std::stringstream sa;
    std::stringstream sb;
    write_analyze_csv(sa, bon_analyze(small_pool(), cfg, a));
    write_analyze_csv(sb, bon_analyze(small_pool(), cfg, b));
    EXPECT_EQ(sa.str(), sb.str());
}

TEST(Config, UnknownKeyIsRejected) {
    json j = {{"instance", {{"kind", "representational"}, {"n", 8}}}, {"algorithm", "sft"}, {"bogus", 1}};
    EXPECT_THROW(parse_config(j), InputError);
}

TEST(Config, UnknownInstanceKeyIsRejected) {
    EXPECT_THROW(build_instance({{"kind", "maxcut"}, {"vertices", 4}, {"colour", 2}}), InputError);
}

TEST(Config, CanonicalFormRoundTrips) {
    json j = {{"instance", {{"kind", "lower-bound"}, {"d", 2}, {"M", 4}}}, {"algorithm", "ada-sft"}, {"T", 7}};
    const auto cfg = parse_config(j);
    EXPECT_EQ(config_to_json(parse_config(config_to_json(cfg))), config_to_json(cfg));
    EXPECT_EQ(cfg.algorithm, Algorithm::ada_sft);
    EXPECT_EQ(cfg.T, 7u);
}

TEST(Experiment, SftOnADeterministicBaseIsExact) {
    const auto dir = scratch("det");
    ExperimentConfig cfg;
    cfg.instance = {{"kind", "tabular"}, {"rows", {{0.0, 1.0, 0.0}, {1.0, 0.0, 0.0}}}};
    cfg.algorithm = Algorithm::sft;
    cfg.n = 10;
    cfg.big_n = 3;
    cfg.output_dir = dir.string();
    const auto out = run_experiment(cfg);
    ASSERT_EQ(out.completed, 1u);
    EXPECT_EQ(out.report["seeds"][0]["verdict"]["epsilon_hat"].get<double>(), 0.0);
    EXPECT_EQ(out.report["seeds"][0]["budget"]["m"].get<std::size_t>(), 30u);
    fs::remove_all(dir);
}

TEST(Experiment, RerunIsByteIdentical) {
    const auto a = scratch("rerun-a");
    const auto b = scratch("rerun-b");
    run_experiment(tabular_config(Algorithm::sft, a));
    run_experiment(tabular_config(Algorithm::sft, b));
    for (const char* f : {"report.json", "report.csv", "instance.json", "seed-1.queries.jsonl"}) {
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    }
    std::ifstream csv(a / "report.csv");
    std::string header;
    std::getline(csv, header);
    EXPECT_EQ(header, kReportCsvHeader);
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Experiment, ThreadCountDoesNotChangeReports) {
    const auto a = scratch("thr-a");
    const auto b = scratch("thr-b");
    ::setenv("SHARPEN_THREADS", "1", 1);
    run_experiment(tabular_config(Algorithm::dpo, a));
    ::setenv("SHARPEN_THREADS", "3", 1);
    run_experiment(tabular_config(Algorithm::dpo, b));
    ::unsetenv("SHARPEN_THREADS");
    EXPECT_EQ(slurp(a / "report.json"), slurp(b / "report.json"));
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Experiment, XpoSelectsTheBestIterate) {
    const auto dir = scratch("xpo");
    ExperimentConfig cfg;
    cfg.instance = {{"kind", "separation"}, {"seed", 1}, {"d", 3}, {"y_size", 8}};
    cfg.algorithm = Algorithm::xpo;
    cfg.T = 30;
    cfg.beta = 0.2;
    cfg.output_dir = dir.string();
    const auto out = run_experiment(cfg);
    ASSERT_EQ(out.completed, 1u) << out.report.dump();
    const auto& seed = out.report["seeds"][0];
    const auto& trace = seed["trace"];
    ASSERT_EQ(trace.size(), 31u);  // the base plus T updates
    const auto sel = seed["selected_t"].get<std::size_t>();
    const double picked = trace[sel - 1]["j_beta"].get<double>();
    EXPECT_GE(picked, trace[0]["j_beta"].get<double>());
    for (const auto& it : trace) {
        EXPECT_LE(it["j_beta"].get<double>(), picked);
    }
    EXPECT_TRUE(fs::exists(dir / "seed-0.iterates.csv"));
    fs::remove_all(dir);
}

TEST(Experiment, BadSeedIsRecordedNotFatal) {
    const auto dir = scratch("bad");
    ExperimentConfig cfg;
    cfg.instance = {{"kind", "tabular"}, {"rows", {{0.5, 0.5}}}};
    cfg.algorithm = Algorithm::sft;
    cfg.model_class = "bon";  // needs N
    cfg.output_dir = dir.string();
    const auto out = run_experiment(cfg);
    EXPECT_EQ(out.failed, 1u);
    EXPECT_EQ(out.report["seeds"][0]["status"], "error");
    fs::remove_all(dir);
}

TEST(Experiment, OutputDirFromEnvironment) {
    const auto dir = scratch("env");
    ::setenv("SHARPEN_OUTPUT_DIR", dir.string().c_str(), 1);
    auto cfg = tabular_config(Algorithm::sft, scratch("ignored"));
    cfg.seeds = {0};
    run_experiment(cfg);
    ::unsetenv("SHARPEN_OUTPUT_DIR");
    EXPECT_TRUE(fs::exists(dir / "report.json"));
    fs::remove_all(dir);
}

TEST(Replay, ReproducesBudgetsAndVerdicts) {
    for (auto a : {Algorithm::sft, Algorithm::ada_sft, Algorithm::dpo}) {
        const auto dir = scratch("replay-" + algorithm_name(a));
        run_experiment(tabular_config(a, dir));
        const auto r = replay(dir);
        EXPECT_TRUE(r["all_match"].get<bool>()) << algorithm_name(a) << " " << r.dump();
        EXPECT_EQ(r["seeds"].size(), 3u);
        fs::remove_all(dir);
    }
}

TEST(Replay, DetectsTamperedLogs) {
    const auto dir = scratch("tamper");
    run_experiment(tabular_config(Algorithm::sft, dir));
    const auto log = dir / "seed-0.queries.jsonl";
    auto text = slurp(log);
    text = text.substr(0, text.rfind('\n', text.size() - 2) + 1);  // drop one query
    std::ofstream(log, std::ios::binary) << text;
    EXPECT_FALSE(replay(dir)["all_match"].get<bool>());
    fs::remove_all(dir);
}

TEST(Verify, UnknownSuiteIsAnInputError) { EXPECT_THROW(run_suite("nope"), InputError); }

TEST(Verify, SuitesCoverEveryCriterion) {
    ASSERT_EQ(suite_names().size(), 12u);
    EXPECT_EQ(run_suite("lemma1").criterion, 12);
}
