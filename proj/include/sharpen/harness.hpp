#pragma once

#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "sharpen/decode.hpp"
#include "sharpen/rng.hpp"

namespace sharpen {

/// One line of the completion JSONL stream.
struct CompletionRecord {
    std::string prompt_id;
    std::string response_id;
    double logprob = 0.0;
    std::size_t length = 1;
    std::optional<std::string> answer;
    std::optional<bool> correct;
};

/// Parses JSONL; blank lines are skipped. Empty input or a malformed line is an
/// InputError naming the line.
std::vector<CompletionRecord> read_completions(std::istream& in);
void write_completions(std::ostream& out, const std::vector<CompletionRecord>& records);

struct AnalyzeConfig {
    std::vector<std::size_t> ns{1, 2, 4, 8, 16, 32, 50};
    std::vector<SelfReward> rewards{SelfReward{}};
    /// Subsamples per prompt and N (N = 1 is enumerated exactly instead).
    std::size_t repetitions = 32;
    std::size_t bootstrap = 1000;
    double level = 0.95;
};

/// One CSV row: a (N, reward) cell aggregated over prompts.
struct AnalyzeRow {
    std::size_t n = 0;
    std::string reward;
    std::size_t prompts = 0;
    /// Prompts with at least one successful selection.
    std::size_t evaluated = 0;
    std::size_t selection_errors = 0;
    /// Present when every record carries a correctness label.
    std::optional<double> accuracy;
    std::optional<double> accuracy_lo;
    std::optional<double> accuracy_hi;
    std::optional<double> coverage;
    std::optional<double> coverage_lo;
    std::optional<double> coverage_hi;
    double mean_logprob = 0.0;
    /// Against the plain sample accuracy (N = 1).
    std::optional<double> lift_abs;
    std::optional<double> lift_rel;
};

std::vector<AnalyzeRow> bon_analyze(const std::vector<CompletionRecord>& records, const AnalyzeConfig& cfg,
                                    RngStream& rng);

/// Frozen column order; new columns are appended only.
inline constexpr const char* kAnalyzeCsvHeader =
    "n,reward,prompts,evaluated,selection_errors,accuracy,accuracy_lo,accuracy_hi,coverage,coverage_lo,"
    "coverage_hi,mean_logprob,lift_abs,lift_rel";

void write_analyze_csv(std::ostream& out, const std::vector<AnalyzeRow>& rows);

} // namespace sharpen
