#include "sharpen/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include <json.hpp>

#include "sharpen/errors.hpp"

namespace sharpen {

SessionConfig SessionConfig::fixed(std::size_t prompts, std::size_t per_prompt) {
    if (per_prompt == 0) {
        throw DomainError("fixed sessions need N >= 1");
    }
    SessionConfig c;
    c.mode = SessionMode::fixed;
    c.responses_per_prompt = per_prompt;
    c.max_prompts = prompts;
    c.max_queries = prompts * per_prompt;
    return c;
}

SessionConfig SessionConfig::adaptive(std::optional<std::size_t> prompts) {
    SessionConfig c;
    c.mode = SessionMode::adaptive;
    c.max_prompts = prompts;
    return c;
}

SessionConfig SessionConfig::relaxed() {
    SessionConfig c;
    c.mode = SessionMode::adaptive;
    c.allow_evaluate = true;
    return c;
}

OracleSession::OracleSession(ModelPtr base, PromptDistribution mu, SessionConfig config)
    : base_(std::move(base)), mu_(std::move(mu)), config_(config) {
    if (!base_) {
        throw DomainError("session requires a base model");
    }
    if (mu_.size() != base_->prompts().size()) {
        throw DomainError("prompt distribution does not match the prompt space");
    }
}

void OracleSession::require_open() const {
    if (sealed_) {
        throw StateError("session is sealed");
    }
}

void OracleSession::close_group() const {
    if (config_.mode == SessionMode::fixed && !group_sizes_.empty() &&
        group_sizes_.back() != config_.responses_per_prompt) {
        throw StateError("fixed session: prompt group closed with " + std::to_string(group_sizes_.back()) +
                         " of " + std::to_string(config_.responses_per_prompt) + " responses");
    }
}

Prompt OracleSession::draw_prompt(RngStream& rng) {
    require_open();
    close_group();
    if (config_.max_prompts && group_prompts_.size() >= *config_.max_prompts) {
        throw BudgetExhausted("prompt budget of " + std::to_string(*config_.max_prompts) + " exhausted");
    }
    const Prompt x = mu_.sample(rng);
    group_prompts_.push_back(x);
    group_sizes_.push_back(0);
    return x;
}

Draw OracleSession::draw_and_evaluate(Prompt x, RngStream& rng) {
    require_open();
    if (group_prompts_.empty() || group_prompts_.back() != x) {
        throw StateError("prompt is not the currently open group");
    }
    if (config_.mode == SessionMode::fixed && group_sizes_.back() >= config_.responses_per_prompt) {
        throw BudgetExhausted("fixed session: group already holds N responses");
    }
    if (config_.max_queries && total_draws_ >= *config_.max_queries) {
        throw BudgetExhausted("query budget of " + std::to_string(*config_.max_queries) + " exhausted");
    }
    const Response y = base_->sample(x, rng);
    const double lp = base_->logprob(x, y);
    ++group_sizes_.back();
    ++total_draws_;
    log_.push_back(LoggedQuery{group_prompts_.size() - 1, QueryKind::sample, x, y, lp});
    return Draw{y, lp};
}

double OracleSession::evaluate(Prompt x, Response y) {
    require_open();
    if (!config_.allow_evaluate) {
        throw StateError("evaluate-only queries need a relaxed session");
    }
    const double lp = base_->logprob(x, y);
    ++evaluations_;
    const std::size_t group = group_prompts_.empty() ? 0 : group_prompts_.size() - 1;
    log_.push_back(LoggedQuery{group, QueryKind::evaluate, x, y, lp});
    return lp;
}

void OracleSession::seal() {
    if (sealed_) {
        return;
    }
    close_group();
    sealed_ = true;
}

BudgetReport OracleSession::budget_report() const {
    BudgetReport r;
    r.n = group_prompts_.size();
    r.m = total_draws_;
    r.evaluations = evaluations_;
    if (!group_sizes_.empty()) {
        r.n_max = *std::max_element(group_sizes_.begin(), group_sizes_.end());
    }
    return r;
}

void OracleSession::export_log(std::ostream& out) const {
    const auto& spaces = *base_->spaces();
    for (const auto& q : log_) {
        nlohmann::json j = {{"group", q.group},
                            {"kind", q.kind == QueryKind::sample ? "sample" : "evaluate"},
                            {"prompt", spaces.prompts.id(q.prompt)},
                            {"response", spaces.responses.id(q.response)},
                            {"logprob", nullptr}};
        if (std::isfinite(q.logprob)) {
            j["logprob"] = q.logprob;
        }
        out << j.dump() << '\n';
    }
}

std::vector<LoggedQuery> import_log(std::istream& in, const Spaces& spaces) {
    std::vector<LoggedQuery> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        try {
            const auto j = nlohmann::json::parse(line);
            LoggedQuery q;
            q.group = j.at("group").get<std::size_t>();
            const auto kind = j.at("kind").get<std::string>();
            if (kind != "sample" && kind != "evaluate") {
                throw InputError("unknown query kind '" + kind + "'");
            }
            q.kind = kind == "sample" ? QueryKind::sample : QueryKind::evaluate;
            q.prompt = spaces.prompts.find(j.at("prompt").get<std::string>());
            q.response = spaces.responses.find(j.at("response").get<std::string>());
            q.logprob = j.at("logprob").is_null() ? kNegInf : j.at("logprob").get<double>();
            out.push_back(q);
        } catch (const nlohmann::json::exception& e) {
            throw InputError("query log line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

} // namespace sharpen
