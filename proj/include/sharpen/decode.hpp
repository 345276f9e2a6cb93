#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sharpen/model.hpp"
#include "sharpen/oracle.hpp"

namespace sharpen {

enum class RewardKind { log_likelihood, length_normalized, majority, external_label };

struct SelfReward {
    RewardKind kind = RewardKind::log_likelihood;
    /// Majority: bon_sample takes the text after the last delimiter of the
    /// response id (the whole id when empty). Ingested records without an
    /// answer field do the same only when a delimiter is set.
    std::string delimiter;

    static SelfReward parse(std::string_view name);
    std::string name() const;
};

std::optional<std::string> extract_answer(std::string_view text, std::string_view delimiter);

/// One drawn response as seen by a selector.
struct Candidate {
    Response response;
    double logprob = 0.0;
    std::size_t length = 1;
    std::optional<std::string> answer;
    std::optional<bool> correct;
};

/// Reward value of a non-voting reward for one candidate.
double reward_value(const Candidate& c, const SelfReward& reward);

/// Position of the selected candidate. Ties go to the first drawn.
std::size_t bon_select(std::span<const Candidate> items, const SelfReward& reward);

/// Per-step argmax; ties resolve to the lowest token.
Response greedy_decode(const SequenceModel& model, Prompt x);

/// All maximizers of the sequence probability, by enumeration. tol = 0 keeps
/// only exact maximizers.
std::vector<Response> exact_sequence_argmax(const ConditionalModel& model, Prompt x, double tol = kTieTolerance);

/// Draws N responses through the session and returns the selected one.
Candidate bon_sample(OracleSession& session, Prompt x, std::size_t n, const SelfReward& reward, RngStream& rng);

/// ceil(ln(1/rho) / mass).
std::size_t required_N(double rho, double mass);

} // namespace sharpen
