#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sharpen/errors.hpp"
#include "sharpen/experiment.hpp"
#include "sharpen/harness.hpp"
#include "sharpen/serialize.hpp"
#include "sharpen/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sharpen;

namespace {

// key=value, the value read as JSON when it parses and as a string otherwise
json parse_params(const std::vector<std::string>& items) {
    json out = json::object();
    for (const auto& it : items) {
        const auto eq = it.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw InputError("parameter '" + it + "' is not key=value");
        }
        const auto key = it.substr(0, eq);
        const auto raw = it.substr(eq + 1);
        out[key] = json::accept(raw) ? json::parse(raw) : json(raw);
    }
    return out;
}

int gen_instance(const std::string& kind, const std::vector<std::string>& params, std::optional<std::uint64_t> seed,
                 const std::string& out) {
    json spec = parse_params(params);
    spec["kind"] = kind;
    if (seed) {
        spec["seed"] = *seed;
    }
    const auto inst = build_instance(spec);
    fs::create_directories(out);
    save_model(*inst.base, fs::path(out) / "model.json");
    write_json_file(fs::path(out) / "instance.json", instance_sidecar(inst));
    write_json_file(fs::path(out) / "spec.json", spec);
    std::cout << "wrote " << out << "/{model,instance,spec}.json\n";
    return 0;
}

int run(const std::string& config, std::optional<std::uint64_t> seed, const std::string& out,
        const std::vector<std::string>& overrides) {
    auto j = read_json_file(config);
    const auto set = parse_params(overrides);
    for (const auto& [k, v] : set.items()) {
        j[k] = v;
    }
    if (seed) {
        j["seeds"] = json::array({*seed});
    }
    if (!out.empty()) {
        j["output_dir"] = out;
    }
    const auto cfg = parse_config(j);
    const auto r = run_experiment(cfg);
    const auto& agg = r.report["aggregate"];
    std::cout << "seeds " << agg["seeds"] << " completed " << agg["completed"] << " failed " << agg["failed"]
              << " passes " << agg["passes"] << " success_rate " << agg["success_rate"] << "\n";
    return r.failed == 0 ? 0 : 1;
}

int analyze(const std::string& input, const std::vector<std::size_t>& ns, const std::vector<std::string>& rewards,
            const std::string& delimiter, std::size_t repetitions, std::size_t bootstrap, std::uint64_t seed,
            const std::string& out) {
    std::vector<CompletionRecord> recs;
    if (input == "-") {
        recs = read_completions(std::cin);
    } else {
        std::ifstream in(input);
        if (!in) {
            throw InputError("cannot open " + input);
        }
        recs = read_completions(in);
    }
    AnalyzeConfig cfg;
    cfg.ns = ns;
    cfg.rewards.clear();
    for (const auto& r : rewards) {
        auto sr = SelfReward::parse(r);
        sr.delimiter = delimiter;
        cfg.rewards.push_back(sr);
    }
    cfg.repetitions = repetitions;
    cfg.bootstrap = bootstrap;
    RngStream rng(seed);
    const auto rows = bon_analyze(recs, cfg, rng);
    if (out.empty() || out == "-") {
        write_analyze_csv(std::cout, rows);
    } else {
        std::ofstream f(out);
        write_analyze_csv(f, rows);
    }
    return 0;
}

int verify(const std::vector<std::string>& suites, bool as_json) {
    const auto& names = suites.empty() ? suite_names() : suites;
    int failed = 0;
    json all = json::array();
    for (const auto& name : names) {
        const auto r = run_suite(name);
        failed += r.passed ? 0 : 1;
        if (as_json) {
            all.push_back({{"suite", r.name},
                           {"criterion", r.criterion},
                           {"passed", r.passed},
                           {"seconds", r.seconds},
                           {"measured", r.measured}});
        } else {
            std::printf("%s criterion %d (%s) %.1fs\n", r.passed ? "PASS" : "FAIL", r.criterion, r.name.c_str(),
                        r.seconds);
            std::fflush(stdout);
        }
    }
    if (as_json) {
        std::cout << all.dump(2) << "\n";
    }
    return failed == 0 ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"sharpen: self-improvement by sharpening, simulated"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-instance", "Generate an instance and write its model and ground truth");
    std::string kind;
    std::vector<std::string> params;
    std::optional<std::uint64_t> gen_seed;
    std::string gen_out = "instance";
    gen->add_option("--kind", kind, "random-tabular, lower-bound, separation, representational, maxcut, tabular")
        ->required();
    gen->add_option("--param,-p", params, "generator parameter key=value (JSON values)");
    gen->add_option("--seed", gen_seed);
    gen->add_option("--out", gen_out, "output directory");

    auto* runc = app.add_subcommand("run", "Run an experiment config");
    std::string config;
    std::optional<std::uint64_t> run_seed;
    std::string run_out;
    std::vector<std::string> overrides;
    runc->add_option("--config", config)->required()->check(CLI::ExistingFile);
    runc->add_option("--seed", run_seed, "run this single seed");
    runc->add_option("--out", run_out, "output directory");
    runc->add_option("--set", overrides, "config override key=value (JSON values)");

    auto* ana = app.add_subcommand("bon-analyze", "Best-of-N curves from a completion JSONL file");
    std::string input;
    std::vector<std::size_t> ns{1, 2, 4, 8, 16, 32, 50};
    std::vector<std::string> rewards{"log_likelihood"};
    std::string delimiter;
    std::size_t repetitions = 32;
    std::size_t bootstrap = 1000;
    std::uint64_t ana_seed = 0;
    std::string ana_out;
    ana->add_option("--input", input, "JSONL file, or - for stdin")->required();
    ana->add_option("--N", ns)->delimiter(',');
    ana->add_option("--reward", rewards, "log_likelihood, length_normalized, majority")->delimiter(',');
    ana->add_option("--delimiter", delimiter, "answer delimiter for majority voting");
    ana->add_option("--repetitions", repetitions);
    ana->add_option("--bootstrap", bootstrap);
    ana->add_option("--seed", ana_seed);
    ana->add_option("--out", ana_out, "CSV path (stdout when absent)");

    auto* ver = app.add_subcommand("verify", "Run acceptance suites");
    std::vector<std::string> suites;
    bool as_json = false;
    ver->add_option("--suite", suites, "suite name (repeatable); all when absent");
    ver->add_flag("--json", as_json, "print measured values as JSON");

    auto* rep = app.add_subcommand("replay", "Recompute budgets and verdicts of a finished run from its logs");
    std::string dir;
    rep->add_option("--dir", dir)->required()->check(CLI::ExistingDirectory);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            return gen_instance(kind, params, gen_seed, gen_out);
        }
        if (*runc) {
            return run(config, run_seed, run_out, overrides);
        }
        if (*ana) {
            return analyze(input, ns, rewards, delimiter, repetitions, bootstrap, ana_seed, ana_out);
        }
        if (*ver) {
            return verify(suites, as_json);
        }
        if (*rep) {
            const auto r = replay(dir);
            std::cout << r.dump(2) << "\n";
            return r["all_match"].get<bool>() ? 0 : 1;
        }
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
