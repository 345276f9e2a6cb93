#pragma once

#include <span>
#include <vector>

#include "sharpen/decode.hpp"
#include "sharpen/model_class.hpp"
#include "sharpen/oracle.hpp"

namespace sharpen {

struct BonRecord {
    Prompt prompt;
    Response response;
    double logprob = 0.0;
    /// Responses drawn for this prompt (N, or the realized stopping time).
    std::size_t group_size = 0;
};

struct BonDataset {
    std::vector<BonRecord> records;
};

/// Distribution of the first-drawn log-likelihood maximizer among N i.i.d.
/// draws. Responses tied within kTieTolerance share their level's mass.
std::vector<double> exact_bon_distribution(std::span<const double> logs, std::size_t n);
std::vector<double> exact_bon_distribution(const ConditionalModel& base, Prompt x, std::size_t n);

/// pi^BoN_N as a table over every prompt.
std::shared_ptr<TabularModel> bon_transform(const ConditionalModel& base, std::size_t n);

ModelClass bon_class(std::span<const ModelPtr> bases, std::size_t n);
ModelClass tilt_class(std::span<const ModelPtr> bases, double beta);

BonDataset collect_bon_dataset(OracleSession& session, std::size_t n, std::size_t big_n, const SelfReward& reward,
                               RngStream& rng);

struct StoppingConfig {
    double mu_stop = 1.0;
    /// Draws allowed per prompt before giving up with CapacityError.
    std::size_t max_draws = 1'000'000;
};

/// Draws until 1 / max_j pi_base(y_j|x) <= k / mu_stop, then keeps the
/// reward maximizer.
BonDataset adaptive_collect(OracleSession& session, std::size_t n, const StoppingConfig& cfg, RngStream& rng,
                            const SelfReward& reward = {});

/// Frozen constant c in N = ceil(c C_cov ln(2/delta) / eps) and
/// n = ceil(c ln|Pi| / (delta eps)).
inline constexpr double kSftConstant = 1.0;

struct SftSizes {
    std::size_t n = 0;
    std::size_t big_n = 0;
};

SftSizes sft_sample_sizes(double c_cov, double log_class_size, double epsilon, double delta,
                          double c = kSftConstant);

struct FitOptions {
    std::size_t max_iters = 2000;
    double tolerance = 1e-8;
    bool throw_on_stall = false;
};

/// argmax over the class of sum_i ln pi(y_i|x_i). Finite classes: exhaustive,
/// lowest index on ties. Tabular family: empirical frequencies, uniform on
/// prompts with no records. Softmax family: projected gradient ascent.
FitResult mle_fit(const ModelClass& cls, const BonDataset& data, const FitOptions& opts = {});

} // namespace sharpen
