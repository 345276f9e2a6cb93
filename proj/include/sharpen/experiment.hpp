#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sharpen/instances.hpp"

namespace sharpen {

enum class Algorithm { sft, ada_sft, dpo, xpo, inference_bon };

Algorithm parse_algorithm(std::string_view name);
std::string algorithm_name(Algorithm a);

struct ExperimentConfig {
    /// {"kind": ..., generator parameters}; see build_instance.
    nlohmann::json instance;
    Algorithm algorithm = Algorithm::sft;
    /// "auto", "instance", "tabular", "bon" or "tilt".
    std::string model_class = "auto";
    std::string reward = "log_likelihood";
    std::size_t n = 100;
    std::optional<std::size_t> big_n;
    /// Inference-time N; required_N(rho, min argmax mass) when absent.
    std::optional<std::size_t> n_star;
    double mu_stop = 1.0;
    double beta = 1.0;
    std::optional<double> alpha;
    std::size_t T = 100;
    double delta = 0.1;
    double gamma = 0.0;
    double epsilon = 0.1;
    double rho = 0.1;
    std::string selection = "exact";
    std::vector<std::uint64_t> seeds{0};
    std::string output_dir = "sharpen-out";
};

/// Strict parse: unknown keys and wrong types are InputErrors.
ExperimentConfig parse_config(const nlohmann::json& j);
/// Canonical form with every default spelled out.
nlohmann::json config_to_json(const ExperimentConfig& cfg);

/// kinds: random-tabular, lower-bound, separation, representational, maxcut,
/// tabular (explicit rows) and file (a saved model). Unknown keys are rejected.
SharpeningInstance build_instance(const nlohmann::json& spec);

/// Hash of the library sources this binary was built from.
std::string version_hash();

struct ExperimentOutcome {
    nlohmann::json report;
    std::size_t completed = 0;
    std::size_t failed = 0;
};

/// Runs every seed, writes report.json, report.csv, instance.json and the
/// per-seed query logs under the output directory. SHARPEN_OUTPUT_DIR
/// overrides the directory and SHARPEN_THREADS sets the worker count.
ExperimentOutcome run_experiment(const ExperimentConfig& cfg);

/// Frozen per-seed CSV columns; append-only.
inline constexpr const char* kReportCsvHeader =
    "seed,status,epsilon_hat,passes,n,n_max,m,evaluations,objective,selected_t,message";

/// Recomputes budgets (and fits, for sft, ada-sft and dpo) from the logs of a
/// finished run and compares them with its report.
nlohmann::json replay(const std::filesystem::path& dir);

} // namespace sharpen
