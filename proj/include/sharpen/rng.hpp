#pragma once

#include <cstdint>
#include <limits>

namespace sharpen {

/// Counter-based random stream. Output i is a pure function of (seed, stream, i),
/// so streams can be split per prompt/seed and replayed independently.
class RngStream {
  public:
    using result_type = std::uint64_t;

    explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0) noexcept;

    result_type operator()() noexcept;

    /// Uniform double in [0, 1) with 53 bits of resolution.
    double uniform() noexcept;

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n) noexcept;

    /// Independent child stream; does not advance this stream.
    RngStream split(std::uint64_t child) const noexcept;

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream() const noexcept { return stream_; }
    std::uint64_t counter() const noexcept { return counter_; }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t key0_;
    std::uint64_t key1_;
    std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x) noexcept;

} // namespace sharpen
