#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace mixopt::rng {

// splitmix64 finalizer; used both as a stream mixer and for seed derivation.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Folds an ordered list of tags into a root seed. Streams derived with
// distinct tag paths never collide in practice, which is what the engine
// relies on when it fans out per (iteration, sample, domain).
inline std::uint64_t derive(std::uint64_t seed) { return mix64(seed); }

template <typename... Rest>
std::uint64_t derive(std::uint64_t seed, std::uint64_t tag, Rest... rest) {
    return derive(mix64(seed ^ mix64(tag)), rest...);
}

// Tag values for the engine's seed tree. Fixed constants: changing them
// changes every recorded run.
namespace tags {
inline constexpr std::uint64_t kAcquire = 0xA1;
inline constexpr std::uint64_t kEstimate = 0xE5;
inline constexpr std::uint64_t kDomain = 0xD0;
inline constexpr std::uint64_t kNoise = 0x11;
}  // namespace tags

// Deterministic generator. mt19937_64 output is pinned by the standard, and
// every sampler below is built from canonical uniforms only, so sequences are
// reproducible across platforms and standard libraries.
class Stream {
  public:
    explicit Stream(std::uint64_t seed) : gen_(mix64(seed)) {}

    std::uint64_t next_u64() { return gen_(); }

    // uniform on [0, 1) with 53 random bits
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // uniform on (0, 1], safe as a log argument
    double uniform_pos() { return 1.0 - uniform(); }

    double exponential(double rate = 1.0) { return -std::log(uniform_pos()) / rate; }

    // index in [0, n)
    std::size_t index(std::size_t n) {
        // rejection-free modulo bias is negligible for n << 2^64, but stay exact
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n + 1) % n;
        std::uint64_t x = gen_();
        while (x > limit) x = gen_();
        return static_cast<std::size_t>(x % n);
    }

  private:
    std::mt19937_64 gen_;
};

}  // namespace mixopt::rng
