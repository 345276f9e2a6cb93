#include "sharpen/decode.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "sharpen/errors.hpp"
#include "sharpen/metrics.hpp"

namespace sharpen {

SelfReward SelfReward::parse(std::string_view name) {
    SelfReward r;
    if (name == "log_likelihood" || name == "loglik") {
        r.kind = RewardKind::log_likelihood;
    } else if (name == "length_normalized") {
        r.kind = RewardKind::length_normalized;
    } else if (name == "majority") {
        r.kind = RewardKind::majority;
    } else if (name == "external_label") {
        r.kind = RewardKind::external_label;
    } else {
        throw DomainError("unknown reward '" + std::string(name) + "'");
    }
    return r;
}

std::string SelfReward::name() const {
    switch (kind) {
    case RewardKind::log_likelihood:
        return "log_likelihood";
    case RewardKind::length_normalized:
        return "length_normalized";
    case RewardKind::majority:
        return "majority";
    case RewardKind::external_label:
        return "external_label";
    }
    return "unknown";
}

std::optional<std::string> extract_answer(std::string_view text, std::string_view delimiter) {
    std::string_view tail = text;
    if (!delimiter.empty()) {
        const auto pos = text.rfind(delimiter);
        if (pos == std::string_view::npos) {
            return std::nullopt;
        }
        tail = text.substr(pos + delimiter.size());
    }
    const auto b = tail.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) {
        return std::nullopt;
    }
    const auto e = tail.find_last_not_of(" \t\r\n");
    return std::string(tail.substr(b, e - b + 1));
}

double reward_value(const Candidate& c, const SelfReward& reward) {
    switch (reward.kind) {
    case RewardKind::log_likelihood:
        return c.logprob;
    case RewardKind::length_normalized:
        if (c.length == 0) {
            throw DomainError("length-normalized reward needs length >= 1");
        }
        return c.logprob / static_cast<double>(c.length);
    case RewardKind::external_label:
        if (!c.correct) {
            throw SelectionError("external-label reward needs correctness labels");
        }
        return *c.correct ? 1.0 : 0.0;
    case RewardKind::majority:
        break;
    }
    throw DomainError("majority reward has no per-candidate value");
}

std::size_t bon_select(std::span<const Candidate> items, const SelfReward& reward) {
    if (items.empty()) {
        throw DomainError("bon_select needs at least one candidate");
    }
    if (reward.kind == RewardKind::majority) {
        // count votes, remembering where each answer first appeared
        std::map<std::string, std::pair<std::size_t, std::size_t>> votes;
        for (std::size_t i = 0; i < items.size(); ++i) {
            if (!items[i].answer) {
                continue;
            }
            auto [it, fresh] = votes.try_emplace(*items[i].answer, 0, i);
            ++it->second.first;
        }
        if (votes.empty()) {
            throw SelectionError("majority reward: no extractable answers");
        }
        std::size_t best_count = 0;
        std::size_t best_first = items.size();
        for (const auto& [answer, v] : votes) {
            if (v.first > best_count || (v.first == best_count && v.second < best_first)) {
                best_count = v.first;
                best_first = v.second;
            }
        }
        return best_first;
    }
    std::size_t best = 0;
    double best_value = reward_value(items[0], reward);
    for (std::size_t i = 1; i < items.size(); ++i) {
        const double v = reward_value(items[i], reward);
        if (v > best_value) {
            best = i;
            best_value = v;
        }
    }
    return best;
}

Response greedy_decode(const SequenceModel& model, Prompt x) {
    const auto& ys = model.responses();
    std::vector<Token> prefix;
    prefix.reserve(ys.horizon());
    for (std::size_t h = 0; h < ys.horizon(); ++h) {
        const auto step = model.step_logprobs(x, prefix);
        prefix.push_back(argmax_of(step).front().index);
    }
    return ys.encode(prefix);
}

std::vector<Response> exact_sequence_argmax(const ConditionalModel& model, Prompt x, double tol) {
    model.responses().require_enumerable();
    return argmax_set(model, x, tol);
}

Candidate bon_sample(OracleSession& session, Prompt x, std::size_t n, const SelfReward& reward, RngStream& rng) {
    if (n == 0) {
        throw DomainError("bon_sample needs N >= 1");
    }
    const auto& ys = session.spaces()->responses;
    std::vector<Candidate> drawn;
    drawn.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto d = session.draw_and_evaluate(x, rng);
        Candidate c;
        c.response = d.response;
        c.logprob = d.logprob;
        c.length = ys.length(d.response);
        if (reward.kind == RewardKind::majority) {
            c.answer = extract_answer(ys.id(d.response), reward.delimiter);
        }
        drawn.push_back(std::move(c));
    }
    return drawn[bon_select(drawn, reward)];
}

std::size_t required_N(double rho, double mass) {
    if (!(rho > 0.0 && rho < 1.0)) {
        throw DomainError("rho must lie in (0, 1)");
    }
    if (!(mass > 0.0 && mass <= 1.0)) {
        throw DomainError("mass must lie in (0, 1]");
    }
    // the relative shave keeps ln(1/rho) = 1 - ulp from rounding up
    const double raw = std::log(1.0 / rho) / mass * (1.0 - 1e-12);
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(raw)));
}

} // namespace sharpen
