#include "sharpen/rng.hpp"

namespace sharpen {

std::uint64_t mix64(std::uint64_t x) noexcept {
    // murmur3 fmix64
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdULL;
    x ^= x >> 33;
    x *= 0xc4ceb9fe1a85ec53ULL;
    x ^= x >> 33;
    return x;
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream) noexcept
    : seed_(seed), stream_(stream) {
    key0_ = mix64(seed ^ 0x9e3779b97f4a7c15ULL) ^ mix64(stream + 0x632be59bd9b4e019ULL);
    key1_ = mix64(key0_ + 0xd1b54a32d192ed03ULL) ^ stream;
}

RngStream::result_type RngStream::operator()() noexcept {
    const std::uint64_t c = counter_++;
    return mix64(mix64(c * 0x9e3779b97f4a7c15ULL + key0_) ^ key1_);
}

double RngStream::uniform() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::below(std::uint64_t n) noexcept {
    // Lemire's multiply-shift with rejection.
    std::uint64_t x = (*this)();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    std::uint64_t low = static_cast<std::uint64_t>(m);
    if (low < n) {
        const std::uint64_t threshold = (0 - n) % n;
        while (low < threshold) {
            x = (*this)();
            m = static_cast<__uint128_t>(x) * n;
            low = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

RngStream RngStream::split(std::uint64_t child) const noexcept {
    return RngStream(seed_, mix64(stream_ ^ mix64(child + 0x2545f4914f6cdd1dULL)));
}

} // namespace sharpen
