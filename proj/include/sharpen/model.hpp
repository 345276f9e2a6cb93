#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "sharpen/rng.hpp"
#include "sharpen/space.hpp"

namespace sharpen {

/// Log-probability of an impossible response.
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
/// Clamp used when a loss needs a finite stand-in for log 0.
inline constexpr double kLogFloor = -745.0;
/// Two log-probabilities within this distance are tied.
inline constexpr double kTieTolerance = 1e-12;

inline double floor_log(double logp) noexcept { return logp < kLogFloor ? kLogFloor : logp; }

/// Numerically stable log(sum(exp(v))); -inf for an empty or all -inf input.
double log_sum_exp(std::span<const double> v) noexcept;

/// A prompt-indexed distribution over responses with exact evaluation.
/// Implementations are immutable after construction and safe to share.
class ConditionalModel {
  public:
    explicit ConditionalModel(SpacesPtr spaces);
    virtual ~ConditionalModel() = default;

    ConditionalModel(const ConditionalModel&) = delete;
    ConditionalModel& operator=(const ConditionalModel&) = delete;

    const SpacesPtr& spaces() const noexcept { return spaces_; }
    const PromptSpace& prompts() const noexcept { return spaces_->prompts; }
    const ResponseSpace& responses() const noexcept { return spaces_->responses; }

    /// ln pi(y|x); kNegInf for zero-probability responses.
    virtual double logprob(Prompt x, Response y) const = 0;

    virtual Response sample(Prompt x, RngStream& rng) const;

    /// Log-probabilities of every response, in response index order.
    virtual std::vector<double> log_distribution(Prompt x) const;

    /// exp(log_distribution(x)).
    std::vector<double> distribution(Prompt x) const;

  protected:
    void check(Prompt x, Response y) const;

  private:
    SpacesPtr spaces_;
};

using ModelPtr = std::shared_ptr<const ConditionalModel>;

/// Models with explicit per-step conditionals over V^H. An atomic response
/// space is treated as a single step over V = Y.
class SequenceModel : public ConditionalModel {
  public:
    explicit SequenceModel(SpacesPtr spaces);

    /// ln pi_h(. | x, prefix) over the vocabulary, h = prefix.size().
    virtual std::vector<double> step_logprobs(Prompt x, std::span<const Token> prefix) const = 0;

    double logprob(Prompt x, Response y) const override;
    Response sample(Prompt x, RngStream& rng) const override;
    std::vector<double> log_distribution(Prompt x) const override;
};

/// Explicit probability table over (prompt, response). Works for atomic and
/// (flattened) sequence response spaces.
class TabularModel final : public ConditionalModel {
  public:
    /// rows[x][y] = pi(y|x); each row nonnegative and summing to 1 within 1e-9.
    TabularModel(SpacesPtr spaces, std::vector<std::vector<double>> rows);

    /// Build from log-probabilities, normalizing each row exactly.
    static std::shared_ptr<TabularModel> from_logits(SpacesPtr spaces,
                                                     const std::vector<std::vector<double>>& logits);
    /// Snapshot any model into a table.
    static std::shared_ptr<TabularModel> snapshot(const ConditionalModel& model);

    double logprob(Prompt x, Response y) const override;
    Response sample(Prompt x, RngStream& rng) const override;
    std::vector<double> log_distribution(Prompt x) const override;

    double prob(Prompt x, Response y) const;
    const std::vector<std::vector<double>>& rows() const noexcept { return probs_; }

  private:
    std::vector<std::vector<double>> probs_;
    std::vector<std::vector<double>> logs_;
    std::vector<std::vector<double>> cumulative_;
};

/// Autoregressive model with per-step conditional tables:
/// steps[h][x][prefix_index] is a distribution over V, h = 0..H-1.
class AutoregressiveTabularModel final : public SequenceModel {
  public:
    using StepTable = std::vector<std::vector<std::vector<double>>>;

    AutoregressiveTabularModel(SpacesPtr spaces, std::vector<StepTable> steps);

    std::vector<double> step_logprobs(Prompt x, std::span<const Token> prefix) const override;

    const std::vector<StepTable>& steps() const noexcept { return steps_; }

  private:
    std::vector<StepTable> steps_;
    std::vector<StepTable> logs_;
};

} // namespace sharpen
