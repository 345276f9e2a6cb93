#include "sharpen/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "sharpen/errors.hpp"

namespace sharpen {

namespace {

void require_same_spaces(const ConditionalModel& a, const ConditionalModel& b) {
    if (a.spaces() != b.spaces() && !(*a.spaces() == *b.spaces())) {
        throw DomainError("models are defined over different spaces");
    }
}

void require_mu(const ConditionalModel& m, const PromptDistribution& mu) {
    if (mu.size() != m.prompts().size()) {
        throw DomainError("prompt distribution does not match the prompt space");
    }
}

double max_of(std::span<const double> logs) {
    return logs.empty() ? kNegInf : *std::max_element(logs.begin(), logs.end());
}

} // namespace

std::vector<Response> argmax_of(std::span<const double> logs, double tol) {
    std::vector<Response> out;
    const double hi = max_of(logs);
    if (hi == kNegInf) {
        return out;
    }
    for (std::size_t y = 0; y < logs.size(); ++y) {
        if (logs[y] >= hi - tol) {
            out.push_back(Response{y});
        }
    }
    return out;
}

std::vector<Response> argmax_set(const ConditionalModel& model, Prompt x, double tol) {
    const auto logs = model.log_distribution(x);
    return argmax_of(logs, tol);
}

std::vector<Response> gamma_argmax_of(std::span<const double> logs, double gamma) {
    if (!(gamma >= 0.0 && gamma < 1.0)) {
        throw DomainError("gamma must lie in [0, 1)");
    }
    if (gamma == 0.0) {
        return argmax_of(logs);
    }
    const double cut = max_of(logs) + std::log1p(-gamma) - kTieTolerance;
    std::vector<Response> out;
    for (std::size_t y = 0; y < logs.size(); ++y) {
        if (logs[y] != kNegInf && logs[y] >= cut) {
            out.push_back(Response{y});
        }
    }
    return out;
}

std::vector<Response> gamma_argmax_set(const ConditionalModel& model, Prompt x, double gamma) {
    if (!(gamma >= 0.0 && gamma < 1.0)) {
        throw DomainError("gamma must lie in [0, 1)");
    }
    const auto logs = model.log_distribution(x);
    return gamma_argmax_of(logs, gamma);
}

double mass_of(std::span<const double> logs, std::span<const Response> set) {
    double s = 0.0;
    for (auto y : set) {
        s += std::exp(logs[y.index]);
    }
    return s;
}

SharpnessVerdict sharpness_check(const ConditionalModel& candidate, const ConditionalModel& base,
                                 const PromptDistribution& mu, double delta, double gamma) {
    require_same_spaces(candidate, base);
    require_mu(base, mu);
    if (!(delta >= 0.0 && delta <= 1.0)) {
        throw DomainError("delta must lie in [0, 1]");
    }
    SharpnessVerdict v;
    v.delta = delta;
    v.gamma = gamma;
    v.masses.assign(mu.size(), 0.0);
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const Prompt x{i};
        const auto target = gamma_argmax_set(base, x, gamma);
        const auto cand = candidate.log_distribution(x);
        v.masses[i] = mass_of(cand, target);
        if (v.masses[i] < 1.0 - delta - 1e-12) {
            v.epsilon_hat += mu.weight(x);
        }
    }
    return v;
}

double margin_max(const ConditionalModel& base, const PromptDistribution& mu) {
    require_mu(base, mu);
    double best = kInf;
    for (auto x : mu.support()) {
        const auto logs = base.log_distribution(x);
        const double hi = max_of(logs);
        double runner = kNegInf;
        for (double l : logs) {
            if (l < hi - kTieTolerance) {
                runner = std::max(runner, l);
            }
        }
        if (runner == kNegInf) {
            continue;
        }
        best = std::min(best, std::expm1(hi - runner));
    }
    return best;
}

CoverageProfile coverage_profile(const ConditionalModel& base, const PromptDistribution& mu, double gamma,
                                 unsigned p, std::span<const ModelPtr> candidates, double beta) {
    require_mu(base, mu);
    if (p == 0) {
        throw DomainError("p must be a positive integer");
    }
    if (!(beta > 0.0)) {
        throw DomainError("beta must be positive");
    }
    CoverageProfile prof;
    prof.c_conc.assign(candidates.size(), 0.0);
    prof.c_loss.assign(candidates.size(), 0.0);
    double moment = 0.0;
    for (auto x : mu.support()) {
        const double w = mu.weight(x);
        const auto logs = base.log_distribution(x);
        const double star = mass_of(logs, argmax_of(logs));
        const double approx = mass_of(logs, gamma_argmax_of(logs, gamma));
        prof.c_cov += w / star;
        prof.c_cov_gamma += w / approx;
        moment += w / std::pow(approx, static_cast<double>(p));

        for (std::size_t k = 0; k < candidates.size(); ++k) {
            require_same_spaces(*candidates[k], base);
            const auto cl = candidates[k]->log_distribution(x);
            double conc = 0.0;
            double loss = 0.0;
            for (std::size_t y = 0; y < cl.size(); ++y) {
                if (cl[y] != kNegInf) {
                    conc += logs[y] == kNegInf ? kInf : std::exp(2.0 * cl[y] - logs[y]);
                }
                if (logs[y] != kNegInf) {
                    loss += cl[y] == kNegInf ? kInf : std::exp(logs[y] + beta * (logs[y] - cl[y]));
                }
            }
            prof.c_conc[k] += w * conc;
            prof.c_loss[k] += w * loss;
        }
    }
    prof.c_cov_gamma_p = std::pow(moment, 1.0 / static_cast<double>(p));
    prof.margin_max = margin_max(base, mu);
    return prof;
}

std::shared_ptr<TabularModel> tilt(const ConditionalModel& base, double beta) {
    if (!(beta > 0.0)) {
        throw DomainError("tilt needs beta > 0");
    }
    const double power = 1.0 + 1.0 / beta;
    std::vector<std::vector<double>> logits(base.prompts().size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        logits[i] = base.log_distribution(Prompt{i});
        for (auto& l : logits[i]) {
            if (l != kNegInf) {
                l *= power;
            }
        }
    }
    return TabularModel::from_logits(base.spaces(), logits);
}

double j_beta(const ConditionalModel& candidate, const ConditionalModel& base, const PromptDistribution& mu,
              double beta, const RewardFn& reward) {
    require_same_spaces(candidate, base);
    require_mu(base, mu);
    double total = 0.0;
    for (auto x : mu.support()) {
        const auto cl = candidate.log_distribution(x);
        const auto bl = base.log_distribution(x);
        double inner = 0.0;
        for (std::size_t y = 0; y < cl.size(); ++y) {
            if (cl[y] == kNegInf) {
                continue;
            }
            if (bl[y] == kNegInf) {
                return kNegInf;
            }
            const double r = reward ? reward(x, Response{y}) : bl[y];
            inner += std::exp(cl[y]) * (r - beta * (cl[y] - bl[y]));
        }
        total += mu.weight(x) * inner;
    }
    return total;
}

Divergences divergences(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) {
        throw DomainError("distributions differ in size");
    }
    Divergences d;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) {
            d.kl += q[i] > 0.0 ? p[i] * (std::log(p[i]) - std::log(q[i])) : kInf;
        }
        const double g = std::sqrt(p[i]) - std::sqrt(q[i]);
        d.hellinger_sq += g * g;
    }
    return d;
}

Divergences divergences(const ConditionalModel& p, const ConditionalModel& q, const PromptDistribution& mu) {
    require_same_spaces(p, q);
    require_mu(p, mu);
    Divergences d;
    for (auto x : mu.support()) {
        const auto one = divergences(p.distribution(x), q.distribution(x));
        d.kl += mu.weight(x) * one.kl;
        d.hellinger_sq += mu.weight(x) * one.hellinger_sq;
    }
    return d;
}

double total_variation(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) {
        throw DomainError("distributions differ in size");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        s += std::abs(p[i] - q[i]);
    }
    return 0.5 * s;
}

} // namespace sharpen
