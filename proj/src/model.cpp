#include "sharpen/model.hpp"

#include <algorithm>
#include <numeric>

#include "sharpen/errors.hpp"

namespace sharpen {

double log_sum_exp(std::span<const double> v) noexcept {
    double hi = kNegInf;
    for (double x : v) {
        hi = std::max(hi, x);
    }
    if (hi == kNegInf) {
        return kNegInf;
    }
    double s = 0.0;
    for (double x : v) {
        s += std::exp(x - hi);
    }
    return hi + std::log(s);
}

namespace {

void validate_row(std::span<const double> row, const char* what) {
    double total = 0.0;
    for (double p : row) {
        if (!(p >= 0.0) || !std::isfinite(p)) {
            throw ValidationError(std::string(what) + ": probabilities must be finite and nonnegative");
        }
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw ValidationError(std::string(what) + ": row sums to " + std::to_string(total));
    }
}

std::vector<double> logs_of(std::span<const double> row) {
    std::vector<double> out(row.size());
    std::transform(row.begin(), row.end(), out.begin(),
                   [](double p) { return p > 0.0 ? std::log(p) : kNegInf; });
    return out;
}

std::vector<double> cumulative_of(std::span<const double> row) {
    std::vector<double> out(row.size());
    std::partial_sum(row.begin(), row.end(), out.begin());
    return out;
}

std::size_t draw_from_logs(std::span<const double> logs, RngStream& rng) {
    std::vector<double> cum(logs.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logs.size(); ++i) {
        total += std::exp(logs[i]);
        cum[i] = total;
    }
    return sample_cumulative(cum, rng);
}

} // namespace

ConditionalModel::ConditionalModel(SpacesPtr spaces) : spaces_(std::move(spaces)) {
    if (!spaces_) {
        throw DomainError("model requires spaces");
    }
}

void ConditionalModel::check(Prompt x, Response y) const {
    prompts().check(x);
    responses().check(y);
}

Response ConditionalModel::sample(Prompt x, RngStream& rng) const {
    return Response{draw_from_logs(log_distribution(x), rng)};
}

std::vector<double> ConditionalModel::log_distribution(Prompt x) const {
    prompts().check(x);
    responses().require_enumerable();
    std::vector<double> out(responses().size());
    for (std::size_t y = 0; y < out.size(); ++y) {
        out[y] = logprob(x, Response{y});
    }
    return out;
}

std::vector<double> ConditionalModel::distribution(Prompt x) const {
    auto out = log_distribution(x);
    for (double& v : out) {
        v = std::exp(v);
    }
    return out;
}

SequenceModel::SequenceModel(SpacesPtr spaces) : ConditionalModel(std::move(spaces)) {}

double SequenceModel::logprob(Prompt x, Response y) const {
    check(x, y);
    const auto toks = responses().tokens(y);
    double total = 0.0;
    for (std::size_t h = 0; h < toks.size(); ++h) {
        const auto step = step_logprobs(x, std::span<const Token>(toks.data(), h));
        total += step[toks[h]];
        if (total == kNegInf) {
            return kNegInf;
        }
    }
    return total;
}

Response SequenceModel::sample(Prompt x, RngStream& rng) const {
    prompts().check(x);
    std::vector<Token> toks;
    toks.reserve(responses().horizon());
    for (std::size_t h = 0; h < responses().horizon(); ++h) {
        const auto step = step_logprobs(x, toks);
        toks.push_back(draw_from_logs(step, rng));
    }
    return responses().encode(toks);
}

std::vector<double> SequenceModel::log_distribution(Prompt x) const {
    prompts().check(x);
    responses().require_enumerable();
    const std::size_t v = responses().vocab_size();
    std::vector<double> level{0.0};
    std::vector<Token> prefix;
    for (std::size_t h = 0; h < responses().horizon(); ++h) {
        std::vector<double> next(level.size() * v, kNegInf);
        prefix.assign(h, 0);
        for (std::size_t p = 0; p < level.size(); ++p) {
            if (level[p] != kNegInf) {
                std::size_t rest = p;
                for (std::size_t k = h; k-- > 0;) {
                    prefix[k] = rest % v;
                    rest /= v;
                }
                const auto step = step_logprobs(x, prefix);
                for (std::size_t t = 0; t < v; ++t) {
                    next[p * v + t] = step[t] == kNegInf ? kNegInf : level[p] + step[t];
                }
            }
        }
        level = std::move(next);
    }
    return level;
}

TabularModel::TabularModel(SpacesPtr spaces, std::vector<std::vector<double>> rows)
    : ConditionalModel(std::move(spaces)), probs_(std::move(rows)) {
    if (probs_.size() != prompts().size()) {
        throw ValidationError("tabular model needs one row per prompt");
    }
    responses().require_enumerable();
    logs_.reserve(probs_.size());
    cumulative_.reserve(probs_.size());
    for (const auto& row : probs_) {
        if (row.size() != responses().size()) {
            throw ValidationError("tabular row length differs from the response space size");
        }
        validate_row(row, "tabular model");
        logs_.push_back(logs_of(row));
        cumulative_.push_back(cumulative_of(row));
    }
}

std::shared_ptr<TabularModel> TabularModel::from_logits(SpacesPtr spaces,
                                                        const std::vector<std::vector<double>>& logits) {
    std::vector<std::vector<double>> probs;
    std::vector<std::vector<double>> logs;
    probs.reserve(logits.size());
    for (const auto& row : logits) {
        const double z = log_sum_exp(row);
        if (z == kNegInf || !std::isfinite(z)) {
            throw ValidationError("logit row has no finite mass");
        }
        std::vector<double> lp(row.size());
        std::vector<double> p(row.size());
        for (std::size_t i = 0; i < row.size(); ++i) {
            lp[i] = row[i] == kNegInf ? kNegInf : row[i] - z;
            p[i] = std::exp(lp[i]);
        }
        probs.push_back(std::move(p));
        logs.push_back(std::move(lp));
    }
    auto model = std::make_shared<TabularModel>(std::move(spaces), std::move(probs));
    model->logs_ = std::move(logs);
    return model;
}

std::shared_ptr<TabularModel> TabularModel::snapshot(const ConditionalModel& model) {
    std::vector<std::vector<double>> logits;
    logits.reserve(model.prompts().size());
    for (std::size_t x = 0; x < model.prompts().size(); ++x) {
        logits.push_back(model.log_distribution(Prompt{x}));
    }
    return from_logits(model.spaces(), logits);
}

double TabularModel::logprob(Prompt x, Response y) const {
    check(x, y);
    return logs_[x.index][y.index];
}

double TabularModel::prob(Prompt x, Response y) const {
    check(x, y);
    return probs_[x.index][y.index];
}

Response TabularModel::sample(Prompt x, RngStream& rng) const {
    prompts().check(x);
    return Response{sample_cumulative(cumulative_[x.index], rng)};
}

std::vector<double> TabularModel::log_distribution(Prompt x) const {
    prompts().check(x);
    return logs_[x.index];
}

AutoregressiveTabularModel::AutoregressiveTabularModel(SpacesPtr spaces, std::vector<StepTable> steps)
    : SequenceModel(std::move(spaces)), steps_(std::move(steps)) {
    const std::size_t v = responses().vocab_size();
    if (steps_.size() != responses().horizon()) {
        throw ValidationError("autoregressive model needs one step table per position");
    }
    std::size_t prefixes = 1;
    logs_.resize(steps_.size());
    for (std::size_t h = 0; h < steps_.size(); ++h) {
        if (steps_[h].size() != prompts().size()) {
            throw ValidationError("step table needs one entry per prompt");
        }
        logs_[h].resize(prompts().size());
        for (std::size_t x = 0; x < prompts().size(); ++x) {
            if (steps_[h][x].size() != prefixes) {
                throw ValidationError("step " + std::to_string(h) + " needs |V|^h prefix rows");
            }
            for (const auto& row : steps_[h][x]) {
                if (row.size() != v) {
                    throw ValidationError("conditional row length differs from |V|");
                }
                validate_row(row, "autoregressive conditional");
                logs_[h][x].push_back(logs_of(row));
            }
        }
        prefixes *= v;
    }
}

std::vector<double> AutoregressiveTabularModel::step_logprobs(Prompt x, std::span<const Token> prefix) const {
    prompts().check(x);
    if (prefix.size() >= steps_.size()) {
        throw DomainError("prefix longer than horizon");
    }
    return logs_[prefix.size()][x.index][responses().prefix_index(prefix)];
}

} // namespace sharpen
