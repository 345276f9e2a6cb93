#pragma once

#include <compare>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sharpen/rng.hpp"

namespace sharpen {

struct Prompt {
    std::size_t index = 0;
    friend auto operator<=>(const Prompt&, const Prompt&) = default;
};

struct Response {
    std::size_t index = 0;
    friend auto operator<=>(const Response&, const Response&) = default;
};

using Token = std::size_t;

/// Enumeration guard for sequence spaces (|V|^H).
inline constexpr std::size_t kMaxEnumerable = std::size_t{1} << 24;

class PromptSpace {
  public:
    explicit PromptSpace(std::vector<std::string> ids);

    std::size_t size() const noexcept { return ids_.size(); }
    const std::string& id(Prompt x) const;
    Prompt find(std::string_view id) const;
    bool contains(Prompt x) const noexcept { return x.index < ids_.size(); }
    void check(Prompt x) const;
    const std::vector<std::string>& ids() const noexcept { return ids_; }

    friend bool operator==(const PromptSpace& a, const PromptSpace& b) { return a.ids_ == b.ids_; }

  private:
    std::vector<std::string> ids_;
    std::unordered_map<std::string, std::size_t> lookup_;
};

/// Either a finite list of atomic responses or all sequences V^H, indexed
/// lexicographically with the first token most significant.
class ResponseSpace {
  public:
    static ResponseSpace atomic(std::vector<std::string> ids);
    static ResponseSpace sequence(std::vector<std::string> vocab, std::size_t horizon);

    bool is_sequence() const noexcept { return sequence_; }
    std::size_t size() const noexcept { return size_; }
    bool contains(Response y) const noexcept { return y.index < size_; }
    void check(Response y) const;

    /// Atomic mode: the response ids. Sequence mode: the vocabulary.
    const std::vector<std::string>& symbols() const noexcept { return symbols_; }
    std::size_t vocab_size() const noexcept { return sequence_ ? symbols_.size() : size_; }
    std::size_t horizon() const noexcept { return horizon_; }

    /// Token count of a response: H in sequence mode, 1 for atomic responses.
    std::size_t length(Response) const noexcept { return sequence_ ? horizon_ : 1; }

    std::string id(Response y) const;
    Response find(std::string_view id) const;

    std::vector<Token> tokens(Response y) const;
    Response encode(std::span<const Token> tokens) const;
    /// Index of a prefix among the |V|^len prefixes of that length.
    std::size_t prefix_index(std::span<const Token> prefix) const;

    /// Throws CapacityError when |Y| exceeds kMaxEnumerable.
    void require_enumerable() const;

    friend bool operator==(const ResponseSpace& a, const ResponseSpace& b) {
        return a.sequence_ == b.sequence_ && a.horizon_ == b.horizon_ && a.symbols_ == b.symbols_;
    }

  private:
    ResponseSpace() = default;

    bool sequence_ = false;
    std::vector<std::string> symbols_;
    std::size_t horizon_ = 1;
    std::size_t size_ = 0;
    std::unordered_map<std::string, std::size_t> lookup_;
};

/// Prompt and response spaces shared by every model over them.
struct Spaces {
    PromptSpace prompts;
    ResponseSpace responses;

    friend bool operator==(const Spaces& a, const Spaces& b) {
        return a.prompts == b.prompts && a.responses == b.responses;
    }
};

using SpacesPtr = std::shared_ptr<const Spaces>;

SpacesPtr make_spaces(PromptSpace prompts, ResponseSpace responses);

/// Prompt distribution mu, aligned with a PromptSpace.
class PromptDistribution {
  public:
    explicit PromptDistribution(std::vector<double> weights);

    static PromptDistribution uniform(std::size_t n);
    static PromptDistribution point_mass(std::size_t n, Prompt x);

    std::size_t size() const noexcept { return weights_.size(); }
    double weight(Prompt x) const { return weights_.at(x.index); }
    const std::vector<double>& weights() const noexcept { return weights_; }
    /// Prompts with positive weight, in index order.
    std::vector<Prompt> support() const;

    Prompt sample(RngStream& rng) const;

  private:
    std::vector<double> weights_;
    std::vector<double> cumulative_;
};

/// Inverse-CDF draw from a cumulative table whose last entry is ~1.
std::size_t sample_cumulative(std::span<const double> cumulative, RngStream& rng);

} // namespace sharpen
