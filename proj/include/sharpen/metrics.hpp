#pragma once

#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "sharpen/model.hpp"

namespace sharpen {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// r(x, y); the default self-reward is ln pi_base(y|x).
using RewardFn = std::function<double(Prompt, Response)>;

/// Indices within `tol` of the maximum of `logs`, ascending.
std::vector<Response> argmax_of(std::span<const double> logs, double tol = kTieTolerance);

std::vector<Response> argmax_set(const ConditionalModel& model, Prompt x, double tol = kTieTolerance);

/// {y : pi(y|x) >= (1 - gamma) max pi(.|x)}, gamma in [0, 1).
std::vector<Response> gamma_argmax_set(const ConditionalModel& model, Prompt x, double gamma);
std::vector<Response> gamma_argmax_of(std::span<const double> logs, double gamma);

/// Total probability of `set` under a log-distribution.
double mass_of(std::span<const double> logs, std::span<const Response> set);

struct SharpnessVerdict {
    double epsilon_hat = 0.0;
    /// Candidate mass on Y_gamma(x), indexed by prompt.
    std::vector<double> masses;
    double delta = 0.0;
    double gamma = 0.0;

    /// Failure fraction <= epsilon.
    bool passes(double epsilon) const noexcept { return epsilon_hat <= epsilon; }
};

/// Y_gamma is always taken under the base model. A prompt fails when its mass
/// is below 1 - delta by more than 1e-12.
SharpnessVerdict sharpness_check(const ConditionalModel& candidate, const ConditionalModel& base,
                                 const PromptDistribution& mu, double delta, double gamma = 0.0);

struct CoverageProfile {
    double c_cov = 0.0;
    double c_cov_gamma = 0.0;
    double c_cov_gamma_p = 0.0;
    /// E_pi[pi / base] per candidate.
    std::vector<double> c_conc;
    /// E_base[(base / pi)^beta] per candidate.
    std::vector<double> c_loss;
    /// kInf when every prompt has y*(x) = Y.
    double margin_max = kInf;
};

CoverageProfile coverage_profile(const ConditionalModel& base, const PromptDistribution& mu, double gamma,
                                 unsigned p = 1, std::span<const ModelPtr> candidates = {}, double beta = 1.0);

/// Smallest over supp(mu) of max pi / (best non-argmax pi) - 1.
double margin_max(const ConditionalModel& base, const PromptDistribution& mu);

/// pi*_beta proportional to base^(1 + 1/beta), tabulated exactly.
std::shared_ptr<TabularModel> tilt(const ConditionalModel& base, double beta);

/// E_pi[r] - beta * KL(pi || base), exact. kNegInf when pi charges a
/// response the base model cannot produce.
double j_beta(const ConditionalModel& candidate, const ConditionalModel& base, const PromptDistribution& mu,
              double beta, const RewardFn& reward = {});

struct Divergences {
    double kl = 0.0;
    /// Un-halved: sum (sqrt p - sqrt q)^2.
    double hellinger_sq = 0.0;
};

Divergences divergences(const ConditionalModel& p, const ConditionalModel& q, const PromptDistribution& mu);
Divergences divergences(std::span<const double> p, std::span<const double> q);

/// Total variation between two probability vectors.
double total_variation(std::span<const double> p, std::span<const double> q);

} // namespace sharpen
