#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include "sharpen/model.hpp"

namespace sharpen {

enum class SessionMode { fixed, adaptive };

struct SessionConfig {
    SessionMode mode = SessionMode::adaptive;
    /// Fixed mode: every prompt receives exactly this many responses.
    std::size_t responses_per_prompt = 0;
    std::optional<std::size_t> max_prompts;
    std::optional<std::size_t> max_queries;
    /// Permits evaluate-only likelihood queries at arbitrary (x, y).
    bool allow_evaluate = false;

    static SessionConfig fixed(std::size_t prompts, std::size_t per_prompt);
    static SessionConfig adaptive(std::optional<std::size_t> prompts = std::nullopt);
    static SessionConfig relaxed();
};

enum class QueryKind { sample, evaluate };

struct LoggedQuery {
    std::size_t group = 0;
    QueryKind kind = QueryKind::sample;
    Prompt prompt;
    Response response;
    double logprob = 0.0;
};

struct Draw {
    Response response;
    double logprob = 0.0;
};

struct BudgetReport {
    std::size_t n = 0;      ///< prompt draws
    std::size_t n_max = 0;  ///< largest per-prompt response count
    std::size_t m = 0;      ///< total response draws
    std::size_t evaluations = 0;

    friend bool operator==(const BudgetReport&, const BudgetReport&) = default;
};

/// Sample-and-evaluate access to a base model. Prompts are drawn from mu; each
/// draw opens a response group that closes when the next prompt is drawn.
/// Single writer; reports and logs may be read concurrently once sealed.
class OracleSession {
  public:
    OracleSession(ModelPtr base, PromptDistribution mu, SessionConfig config);

    Prompt draw_prompt(RngStream& rng);
    /// y ~ base(.|x) for the currently open prompt x, logged with its logprob.
    Draw draw_and_evaluate(Prompt x, RngStream& rng);
    /// Likelihood-only query; relaxed sessions only.
    double evaluate(Prompt x, Response y);

    void seal();
    bool sealed() const noexcept { return sealed_; }

    BudgetReport budget_report() const;
    const std::vector<LoggedQuery>& log() const noexcept { return log_; }
    const std::vector<Prompt>& group_prompts() const noexcept { return group_prompts_; }
    const std::vector<std::size_t>& group_sizes() const noexcept { return group_sizes_; }

    const PromptDistribution& prompt_distribution() const noexcept { return mu_; }
    const SpacesPtr& spaces() const noexcept { return base_->spaces(); }
    const SessionConfig& config() const noexcept { return config_; }

    /// One JSON record per line: group, kind, prompt, response, logprob.
    void export_log(std::ostream& out) const;

  private:
    void require_open() const;
    void close_group() const;

    ModelPtr base_;
    PromptDistribution mu_;
    SessionConfig config_;
    bool sealed_ = false;
    std::vector<Prompt> group_prompts_;
    std::vector<std::size_t> group_sizes_;
    std::size_t total_draws_ = 0;
    std::size_t evaluations_ = 0;
    std::vector<LoggedQuery> log_;
};

/// Parses a log written by OracleSession::export_log.
std::vector<LoggedQuery> import_log(std::istream& in, const Spaces& spaces);

} // namespace sharpen
