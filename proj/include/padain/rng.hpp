#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "padain/shape.hpp"

namespace padain {

// Counter-free splitmix64. Chosen over std::mt19937 so that streams can be
// derived by key mixing and the whole sequence is pinned by this file alone,
// independent of standard-library implementation details.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Stream domains. Keying substreams by (seed, domain, a, b) keeps consumers
// independent: adding draws in one domain never shifts another.
enum class StreamDomain : std::uint64_t {
    kParamInit = 1,
    kDataGen = 2,
    kAugment = 3,
    kShuffle = 4,
    kPadainCoin = 5,
    kPadainPerm = 6,
    kFixedPerm = 7,
    kVerify = 8,
    kRandomStats = 9,
};

class RngStream {
public:
    RngStream() : state_(0x853c49e6748fea9bull) {}
    explicit RngStream(std::uint64_t seed) : state_(seed ^ 0x2545f4914f6cdd1dull) {
        // One warm-up draw so seed=0 does not start the raw counter at zero.
        (void)splitmix64(state_);
    }

    static RngStream derive(std::uint64_t seed, StreamDomain domain,
                            std::uint64_t a = 0, std::uint64_t b = 0) {
        std::uint64_t s = seed;
        s = mix(s, static_cast<std::uint64_t>(domain));
        s = mix(s, a);
        s = mix(s, b);
        return RngStream(s);
    }

    std::uint64_t next_u64() { return splitmix64(state_); }

    // Uniform in [0, 1). 53 mantissa bits, exact dyadic rational.
    double next_uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, bound). Rejection sampling, no modulo bias.
    std::uint64_t next_below(std::uint64_t bound) {
        if (bound == 0) throw InputError("RngStream::next_below: bound must be positive");
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
        std::uint64_t v;
        do {
            v = next_u64();
        } while (v >= limit);
        return v % bound;
    }

    // Standard normal via Box-Muller. The spare is not cached: one draw costs
    // two uniforms, but every draw consumes a fixed number of raw outputs,
    // which keeps derived-stream reasoning simple.
    double next_normal() {
        double u1 = next_uniform();
        while (u1 <= 0.0) u1 = next_uniform();
        const double u2 = next_uniform();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * std::numbers::pi * u2);
    }

    bool next_bernoulli(double p) { return next_uniform() < p; }

    // Fisher-Yates. n=1 returns {0} without consuming draws.
    std::vector<int> permutation(int n) {
        if (n <= 0) throw InputError("RngStream::permutation: n must be positive");
        std::vector<int> pi(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) pi[static_cast<std::size_t>(i)] = i;
        for (int i = n - 1; i > 0; --i) {
            const int j = static_cast<int>(next_below(static_cast<std::uint64_t>(i) + 1));
            std::swap(pi[static_cast<std::size_t>(i)], pi[static_cast<std::size_t>(j)]);
        }
        return pi;
    }

private:
    static std::uint64_t mix(std::uint64_t acc, std::uint64_t v) {
        std::uint64_t s = acc ^ (v + 0x9e3779b97f4a7c15ull + (acc << 6) + (acc >> 2));
        return splitmix64(s);
    }

    std::uint64_t state_;
};

// FNV-1a over the raw draws a stream hands out; used to fingerprint runs.
struct DrawTranscript {
    std::uint64_t hash = 0xcbf29ce484222325ull;
    std::uint64_t count = 0;

    void record(std::uint64_t v) {
        for (int byte = 0; byte < 8; ++byte) {
            hash ^= (v >> (8 * byte)) & 0xffull;
            hash *= 0x100000001b3ull;
        }
        ++count;
    }
};

}  // namespace padain
