#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "padain/rng.hpp"
#include "padain/shape.hpp"

using padain::DrawTranscript;
using padain::RngStream;
using padain::StreamDomain;

TEST_CASE("splitmix64 matches the reference sequence") {
    // First outputs for state 0 from the published reference implementation.
    std::uint64_t s = 0;
    CHECK(padain::splitmix64(s) == 0xe220a8397b1dcdafull);
    CHECK(padain::splitmix64(s) == 0x6e789e6aa1b965f4ull);
    CHECK(padain::splitmix64(s) == 0x06c45d188009454full);
}

TEST_CASE("seeded streams are deterministic and seed-sensitive") {
    RngStream a(42), b(42), c(43);
    bool all_equal = true, any_diff = false;
    for (int i = 0; i < 64; ++i) {
        const std::uint64_t va = a.next_u64();
        all_equal = all_equal && va == b.next_u64();
        any_diff = any_diff || va != c.next_u64();
    }
    CHECK(all_equal);
    CHECK(any_diff);
}

TEST_CASE("derive is pure and key-separated") {
    const auto fp = [](RngStream s) { return s.next_u64(); };
    // Deriving twice with equal keys gives the same stream.
    CHECK(fp(RngStream::derive(7, StreamDomain::kShuffle, 3)) ==
          fp(RngStream::derive(7, StreamDomain::kShuffle, 3)));
    // Any key component separates the stream.
    const std::uint64_t base = fp(RngStream::derive(7, StreamDomain::kShuffle, 3, 0));
    CHECK(base != fp(RngStream::derive(8, StreamDomain::kShuffle, 3, 0)));
    CHECK(base != fp(RngStream::derive(7, StreamDomain::kAugment, 3, 0)));
    CHECK(base != fp(RngStream::derive(7, StreamDomain::kShuffle, 4, 0)));
    CHECK(base != fp(RngStream::derive(7, StreamDomain::kShuffle, 3, 1)));
    // Deriving a child must not consume from the parent.
    RngStream parent(9);
    RngStream probe(9);
    (void)RngStream::derive(5, StreamDomain::kVerify, 1);
    CHECK(parent.next_u64() == probe.next_u64());
}

TEST_CASE("next_uniform stays in [0, 1) and fills the unit interval") {
    RngStream s(1);
    double lo = 1.0, hi = 0.0;
    for (int i = 0; i < 20000; ++i) {
        const double u = s.next_uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        lo = std::min(lo, u);
        hi = std::max(hi, u);
    }
    CHECK(lo < 0.01);
    CHECK(hi > 0.99);
}

TEST_CASE("next_below is range-correct and roughly uniform") {
    RngStream s(2);
    std::vector<int> counts(10, 0);
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) {
        const std::uint64_t v = s.next_below(10);
        REQUIRE(v < 10);
        ++counts[static_cast<std::size_t>(v)];
    }
    // 5 sigma of Binomial(1e5, 0.1) is about 474.
    for (const int c : counts) CHECK(std::abs(c - draws / 10) < 500);
    CHECK_THROWS_AS((void)s.next_below(0), padain::InputError);
}

TEST_CASE("permutation returns each permutation, all valid") {
    RngStream s(3);
    std::map<std::vector<int>, int> seen;
    for (int i = 0; i < 600; ++i) {
        std::vector<int> pi = s.permutation(3);
        std::vector<int> sorted = pi;
        std::sort(sorted.begin(), sorted.end());
        REQUIRE(sorted == std::vector<int>{0, 1, 2});
        ++seen[pi];
    }
    CHECK(seen.size() == 6);  // all 3! patterns occur in 600 draws
    CHECK(s.permutation(1) == std::vector<int>{0});
    CHECK_THROWS_AS((void)s.permutation(0), padain::InputError);
}

TEST_CASE("next_normal has roughly standard moments") {
    RngStream s(4);
    const int n = 50000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = s.next_normal();
        sum += v;
        sumsq += v * v;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    CHECK(std::fabs(mean) < 0.02);
    CHECK(std::fabs(var - 1.0) < 0.05);
}

TEST_CASE("bernoulli rate tracks p") {
    RngStream s(5);
    int hits = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) hits += s.next_bernoulli(0.01) ? 1 : 0;
    // 5 sigma of Binomial(1e5, 0.01) is about 157.
    CHECK(std::abs(hits - 1000) < 160);
}

TEST_CASE("transcript hash is order-sensitive and deterministic") {
    DrawTranscript a, b, c;
    a.record(1);
    a.record(2);
    b.record(1);
    b.record(2);
    c.record(2);
    c.record(1);
    CHECK(a.hash == b.hash);
    CHECK(a.count == 2);
    CHECK(a.hash != c.hash);
}
