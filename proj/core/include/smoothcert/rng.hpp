#pragma once

#include <bit>
#include <cstdint>
#include <string_view>

namespace smoothcert {

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// FNV-1a over the bytes of `text`. Stable across platforms and runs.
constexpr std::uint64_t stable_hash(std::string_view text) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const char ch : text) {
        h ^= static_cast<std::uint8_t>(ch);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Child seed for `salt` under `parent`; order of derivation does not matter across siblings.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t salt) noexcept {
    return mix64(parent ^ mix64(salt + 0x9e3779b97f4a7c15ULL));
}

inline std::uint64_t derive_seed(std::uint64_t parent, double salt) noexcept {
    return derive_seed(parent, std::bit_cast<std::uint64_t>(salt));
}

/// Counter-based stream: output i is mix64(key + (i + 1) * golden), so any draw is addressable
/// without replaying its predecessors.
class CounterStream {
public:
    explicit CounterStream(std::uint64_t key) noexcept : key_(key) {}

    std::uint64_t at(std::uint64_t index) const noexcept {
        return mix64(key_ + (index + 1) * 0x9e3779b97f4a7c15ULL);
    }

    std::uint64_t next() noexcept { return at(counter_++); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    std::uint64_t counter() const noexcept { return counter_; }
    std::uint64_t key() const noexcept { return key_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

/// Exact Binomial(n, p) variate.
///
/// Inversion when n * min(p, 1 - p) <= 30, otherwise a sum of n Bernoulli trials in blocks of 64,
/// each trial comparing one 64-bit stream word against a fixed threshold.
std::uint64_t sample_binomial(CounterStream& stream, std::uint64_t n, double p);

}  // namespace smoothcert
