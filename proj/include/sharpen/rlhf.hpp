#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include "sharpen/metrics.hpp"
#include "sharpen/model_class.hpp"
#include "sharpen/optimize.hpp"
#include "sharpen/oracle.hpp"

namespace sharpen {

struct PreferenceTriple {
    Prompt prompt;
    Response y;
    Response y_prime;
    /// ln pi_base(y|x) and ln pi_base(y'|x) as logged by the session.
    double logprob_y = 0.0;
    double logprob_y_prime = 0.0;
};

struct PreferenceDataset {
    std::vector<PreferenceTriple> triples;
};

/// n prompts, two independent base draws each.
PreferenceDataset collect_preferences(OracleSession& session, std::size_t n, RngStream& rng);

struct DpoLoss {
    double value = 0.0;
    /// Candidate log-probabilities clamped to kLogFloor.
    std::size_t floored = 0;
};

/// sum (beta ln pi/base (y) - beta ln pi/base (y') - (r(y) - r(y')))^2 with
/// base terms taken from the dataset. The reward defaults to ln pi_base.
DpoLoss dpo_loss(const ConditionalModel& pi, const PreferenceDataset& data, double beta, const RewardFn& reward = {});

struct DpoOptions {
    std::size_t max_iters = 5000;
    double tolerance = 1e-9;
    /// Compare the analytic gradient against central differences at the start.
    bool check_gradient = false;
    double gradient_tolerance = 1e-4;
    /// Non-convergence raises ConvergenceError.
    bool throw_on_stall = true;
};

FitResult dpo_fit(const ModelClass& cls, const PreferenceDataset& data, double beta, const DpoOptions& opts = {},
                  const RewardFn& reward = {});

/// Loss of pi_theta in a softmax family with its analytic gradient.
double dpo_loss_softmax(const SoftmaxFamily& fam, const Params& theta, const PreferenceDataset& data, double beta,
                        Params* grad = nullptr, const RewardFn& reward = {});

/// Largest relative error between analytic and central-difference gradients
/// (relative to max(1, |g|) per coordinate).
double dpo_gradient_check(const SoftmaxFamily& fam, const Params& theta, const PreferenceDataset& data, double beta,
                          double step = 1e-5, const RewardFn& reward = {});

enum class JSelection { exact, validation };

struct XpoConfig {
    std::size_t T = 100;
    double beta = 1.0;
    /// Defaults to default_xpo_alpha when absent.
    std::optional<double> alpha;
    /// Defaults to ln pi_base.
    RewardFn reward;
    JSelection selection = JSelection::exact;
    std::size_t validation_samples = 256;
    /// Parameters of the default optimism coefficient.
    double epsilon = 0.1;
    double delta = 0.1;
    double rho = 0.1;
    /// Upper bound on members x prompts x responses tabulated for finite classes.
    std::size_t max_class_cells = std::size_t{1} << 26;
    BallOptions inner;
};

struct XpoIterate {
    std::size_t t = 0;
    double j_beta = 0.0;
    /// Optimism-regularized objective at the iterate (0 for t = 1).
    double loss = 0.0;
    /// Finite classes: member position; -1 for the base model.
    long chosen_index = -1;
};

struct XpoResult {
    FitResult fit;
    /// 1-based iterate that maximized J_beta.
    std::size_t selected_t = 1;
    std::vector<XpoIterate> iterates;
    PreferenceDataset data;
};

/// beta / (B + ln|Y|) * sqrt((d ln(B d T / (eps delta)) + ln(T / rho)) / (d T ln T)).
double default_xpo_alpha(double beta, double bound, std::size_t responses, std::size_t dim, std::size_t T,
                         double epsilon, double delta, double rho);

/// Exploration loop over a finite class or a single-layer softmax family.
/// Needs a relaxed session; the base model is read only through it.
XpoResult xpo_run(const ModelClass& cls, const XpoConfig& cfg, OracleSession& session, RngStream& rng);

void write_iterates_csv(std::ostream& out, const std::vector<XpoIterate>& iterates);

/// The SEC sum for the given policy sequence (a lower bound on the supremum).
double sec_along_sequence(std::span<const ModelPtr> policies, const ConditionalModel& base, const RewardFn& reward,
                          double beta, double lambda, const PromptDistribution& mu);

} // namespace sharpen
