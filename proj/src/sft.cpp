#include "sharpen/sft.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "sharpen/errors.hpp"
#include "sharpen/metrics.hpp"
#include "sharpen/optimize.hpp"

namespace sharpen {

std::vector<double> exact_bon_distribution(std::span<const double> logs, std::size_t n) {
    if (n == 0) {
        throw DomainError("best-of-N needs N >= 1");
    }
    std::vector<std::size_t> order(logs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return logs[a] > logs[b]; });

    std::vector<double> out(logs.size(), 0.0);
    const double big_n = static_cast<double>(n);
    double above = 0.0;  // mass of strictly better levels
    std::size_t i = 0;
    while (i < order.size()) {
        const double leader = logs[order[i]];
        if (leader == kNegInf) {
            break;
        }
        std::size_t j = i;
        double q = 0.0;
        while (j < order.size() && logs[order[j]] >= leader - kTieTolerance) {
            q += std::exp(logs[order[j]]);
            ++j;
        }
        // P(all draws at or below this level) - P(all strictly below)
        const double at_or_below = std::max(0.0, 1.0 - above);
        const double strictly_below = std::max(0.0, at_or_below - q);
        const double level = std::pow(at_or_below, big_n) - std::pow(strictly_below, big_n);
        for (std::size_t k = i; k < j; ++k) {
            out[order[k]] = level * std::exp(logs[order[k]]) / q;
        }
        above += q;
        i = j;
    }
    return out;
}

std::vector<double> exact_bon_distribution(const ConditionalModel& base, Prompt x, std::size_t n) {
    return exact_bon_distribution(base.log_distribution(x), n);
}

std::shared_ptr<TabularModel> bon_transform(const ConditionalModel& base, std::size_t n) {
    std::vector<std::vector<double>> logits(base.prompts().size());
    for (std::size_t x = 0; x < logits.size(); ++x) {
        const auto p = exact_bon_distribution(base, Prompt{x}, n);
        logits[x].resize(p.size());
        std::transform(p.begin(), p.end(), logits[x].begin(),
                       [](double v) { return v > 0.0 ? std::log(v) : kNegInf; });
    }
    return TabularModel::from_logits(base.spaces(), logits);
}

ModelClass bon_class(std::span<const ModelPtr> bases, std::size_t n) {
    std::vector<ModelPtr> members;
    members.reserve(bases.size());
    for (const auto& b : bases) {
        members.push_back(bon_transform(*b, n));
    }
    return ModelClass::finite(std::move(members));
}

ModelClass tilt_class(std::span<const ModelPtr> bases, double beta) {
    std::vector<ModelPtr> members;
    members.reserve(bases.size());
    for (const auto& b : bases) {
        members.push_back(tilt(*b, beta));
    }
    return ModelClass::finite(std::move(members));
}

SftSizes sft_sample_sizes(double c_cov, double log_class_size, double epsilon, double delta, double c) {
    if (!(epsilon > 0.0 && epsilon < 1.0) || !(delta > 0.0 && delta < 1.0) || !(c > 0.0) || !(c_cov >= 1.0) ||
        !(log_class_size >= 0.0) || !std::isfinite(c_cov) || !std::isfinite(log_class_size)) {
        throw DomainError("sft sample sizes need eps, delta in (0,1), c > 0, finite C_cov >= 1 and ln|Pi| >= 0");
    }
    SftSizes s;
    s.big_n = static_cast<std::size_t>(std::ceil(c * c_cov * std::log(2.0 / delta) / epsilon * (1.0 - 1e-12)));
    s.n = static_cast<std::size_t>(std::ceil(c * log_class_size / (delta * epsilon) * (1.0 - 1e-12)));
    s.big_n = std::max<std::size_t>(1, s.big_n);
    s.n = std::max<std::size_t>(1, s.n);
    return s;
}

BonDataset collect_bon_dataset(OracleSession& session, std::size_t n, std::size_t big_n, const SelfReward& reward,
                               RngStream& rng) {
    if (n == 0 || big_n == 0) {
        throw DomainError("collect_bon_dataset needs n, N >= 1");
    }
    BonDataset data;
    data.records.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Prompt x = session.draw_prompt(rng);
        const auto best = bon_sample(session, x, big_n, reward, rng);
        data.records.push_back(BonRecord{x, best.response, best.logprob, big_n});
    }
    return data;
}

BonDataset adaptive_collect(OracleSession& session, std::size_t n, const StoppingConfig& cfg, RngStream& rng,
                            const SelfReward& reward) {
    if (!(cfg.mu_stop > 0.0)) {
        throw DomainError("mu_stop must be positive");
    }
    if (reward.kind == RewardKind::majority) {
        throw DomainError("adaptive collection supports per-response rewards only");
    }
    const double log_mu = std::log(cfg.mu_stop);
    const auto& ys = session.spaces()->responses;
    BonDataset data;
    data.records.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Prompt x = session.draw_prompt(rng);
        double top = kNegInf;
        Candidate best;
        double best_value = kNegInf;
        std::size_t k = 0;
        while (true) {
            if (k == cfg.max_draws) {
                throw CapacityError("adaptive stopping did not fire within " + std::to_string(cfg.max_draws) +
                                    " draws");
            }
            const auto d = session.draw_and_evaluate(x, rng);
            ++k;
            Candidate c{d.response, d.logprob, ys.length(d.response), std::nullopt, std::nullopt};
            const double v = reward_value(c, reward);
            if (k == 1 || v > best_value) {
                best = c;
                best_value = v;
            }
            top = std::max(top, d.logprob);
            if (std::log(static_cast<double>(k)) >= log_mu - top - 1e-12) {
                break;
            }
        }
        data.records.push_back(BonRecord{x, best.response, best.logprob, k});
    }
    return data;
}

namespace {

using Counts = std::map<std::pair<std::size_t, std::size_t>, std::size_t>;

Counts count_records(const BonDataset& data) {
    Counts counts;
    for (const auto& r : data.records) {
        ++counts[{r.prompt.index, r.response.index}];
    }
    return counts;
}

double log_likelihood(const ConditionalModel& m, const Counts& counts) {
    double s = 0.0;
    for (const auto& [key, c] : counts) {
        const double lp = m.logprob(Prompt{key.first}, Response{key.second});
        if (lp == kNegInf) {
            return kNegInf;
        }
        s += static_cast<double>(c) * lp;
    }
    return s;
}

FitResult fit_finite(const FiniteClass& cls, const Counts& counts) {
    FitResult best;
    double best_ll = kNegInf;
    for (std::size_t k = 0; k < cls.members.size(); ++k) {
        const double ll = log_likelihood(*cls.members[k], counts);
        if (!best.index || ll > best_ll + kTieTolerance) {
            best.index = k;
            best_ll = ll;
        }
    }
    best.model = cls.members[*best.index];
    best.objective = best_ll;
    return best;
}

FitResult fit_tabular(const TabularFamily& fam, const Counts& counts) {
    const auto& sp = *fam.spaces;
    sp.responses.require_enumerable();
    const std::size_t ny = sp.responses.size();
    std::vector<std::vector<double>> rows(sp.prompts.size(), std::vector<double>(ny, 0.0));
    std::vector<std::size_t> totals(sp.prompts.size(), 0);
    for (const auto& [key, c] : counts) {
        rows[key.first][key.second] += static_cast<double>(c);
        totals[key.first] += c;
    }
    for (std::size_t x = 0; x < rows.size(); ++x) {
        for (auto& v : rows[x]) {
            v = totals[x] == 0 ? 1.0 / static_cast<double>(ny) : v / static_cast<double>(totals[x]);
        }
    }
    FitResult res;
    auto model = std::make_shared<TabularModel>(fam.spaces, std::move(rows));
    res.objective = log_likelihood(*model, counts);
    res.model = std::move(model);
    return res;
}

FitResult fit_softmax(const ModelClass& cls, const SoftmaxFamily& fam, const Counts& counts, double total,
                      const FitOptions& opts) {
    const std::size_t d = fam.features->dim();
    const auto& ys = fam.spaces->responses;
    auto objective = [&](const Eigen::VectorXd& v, Eigen::VectorXd* grad) {
        const Params theta = unflatten(v, fam.layers);
        Params g(fam.layers, std::vector<double>(d, 0.0));
        double ll = 0.0;
        for (const auto& [key, c] : counts) {
            const double w = static_cast<double>(c) / total;
            ll += w * softmax_logprob(*fam.features, theta, ys, Prompt{key.first}, Response{key.second},
                                      grad ? &g : nullptr, w);
        }
        if (grad) {
            *grad = -flatten(g);
        }
        return -ll;
    };
    BallOptions bo;
    bo.max_iters = opts.max_iters;
    bo.tolerance = opts.tolerance;
    bo.throw_on_stall = opts.throw_on_stall;
    bo.blocks = fam.layers;
    const auto r = minimize_in_ball(objective, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(fam.layers * d)),
                                    fam.bound, bo);
    FitResult res;
    res.theta = unflatten(r.x, fam.layers);
    res.model = cls.make(*res.theta);
    res.objective = -r.value * total;
    res.iterations = r.iterations;
    return res;
}

} // namespace

FitResult mle_fit(const ModelClass& cls, const BonDataset& data, const FitOptions& opts) {
    if (data.records.empty()) {
        throw DomainError("mle_fit needs at least one record");
    }
    for (const auto& r : data.records) {
        cls.spaces()->prompts.check(r.prompt);
        cls.spaces()->responses.check(r.response);
    }
    const auto counts = count_records(data);
    if (const auto* f = std::get_if<FiniteClass>(&cls.repr())) {
        return fit_finite(*f, counts);
    }
    if (const auto* t = std::get_if<TabularFamily>(&cls.repr())) {
        return fit_tabular(*t, counts);
    }
    return fit_softmax(cls, std::get<SoftmaxFamily>(cls.repr()), counts, static_cast<double>(data.records.size()),
                       opts);
}

} // namespace sharpen
