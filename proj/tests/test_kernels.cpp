#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "padain/kernels.hpp"
#include "padain/kernels_ref.hpp"
#include "padain/rng.hpp"
#include "padain/shape.hpp"

using padain::RngStream;
using padain::StreamDomain;
namespace kn = padain::kernels;

namespace {

std::vector<float> randf(std::size_t n, RngStream& s, double scale = 1.0) {
    std::vector<float> v(n);
    for (float& x : v) {
        x = static_cast<float>((s.next_uniform() * 2.0 - 1.0) * scale);
    }
    return v;
}

std::vector<double> widen(const std::vector<float>& v) {
    return {v.begin(), v.end()};
}

// Max |a - b| / max(1, |b|) over aligned entries.
double max_err(const std::vector<float>& a, const std::vector<double>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = std::fabs(static_cast<double>(a[i]) - b[i]);
        worst = std::max(worst, d / std::max(1.0, std::fabs(b[i])));
    }
    return worst;
}

// Runs one gemm flavor through a backend and through the 64-bit reference,
// including the accumulate variant, and returns the worst error.
template <typename F64, typename F32>
double gemm_vs_oracle(F32 f32, F64 f64, int M, int K, int N, bool acc,
                      std::uint64_t salt) {
    RngStream s = RngStream::derive(99, StreamDomain::kVerify, salt);
    const std::vector<float> A = randf(static_cast<std::size_t>(M) * K, s);
    const std::vector<float> B = randf(static_cast<std::size_t>(K) * N, s);
    std::vector<float> C = randf(static_cast<std::size_t>(M) * N, s);
    std::vector<double> Cd = widen(C);
    f32(M, K, N, A.data(), B.data(), C.data(), acc);
    const std::vector<double> Ad = widen(A), Bd = widen(B);
    f64(M, K, N, Ad.data(), Bd.data(), Cd.data(), acc);
    return max_err(C, Cd);
}

void backend_suite(const kn::Backend& be) {
    // Odd sizes exercise SIMD tail handling.
    for (const auto& [M, K, N] : std::initializer_list<std::array<int, 3>>{
             {1, 1, 1}, {3, 7, 5}, {16, 16, 16}, {17, 31, 9}, {8, 64, 33}}) {
        for (const bool acc : {false, true}) {
            CHECK(gemm_vs_oracle(be.gemm_nn, padain::ref::gemm_nn<double>, M, K, N,
                                 acc, 1) < 1e-5);
            CHECK(gemm_vs_oracle(be.gemm_tn, padain::ref::gemm_tn<double>, M, K, N,
                                 acc, 2) < 1e-5);
            CHECK(gemm_vs_oracle(be.gemm_nt, padain::ref::gemm_nt<double>, M, K, N,
                                 acc, 3) < 1e-5);
        }
    }

    RngStream s = RngStream::derive(7, StreamDomain::kVerify, 11);
    for (const std::size_t n : {std::size_t{1}, std::size_t{7}, std::size_t{64},
                                std::size_t{1009}}) {
        const std::vector<float> x = randf(n, s);
        const std::vector<float> y0 = randf(n, s);

        std::vector<float> out(n);
        be.relu_fwd(x.data(), out.data(), n);
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(out[i] == (x[i] > 0.0f ? x[i] : 0.0f));
        }

        // relu_bwd accumulates: dx += gated dy.
        std::vector<float> dx(n, 0.5f);
        be.relu_bwd(x.data(), y0.data(), dx.data(), n);
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(dx[i] == 0.5f + (x[i] > 0.0f ? y0[i] : 0.0f));
        }

        be.add(x.data(), y0.data(), out.data(), n);
        for (std::size_t i = 0; i < n; ++i) CHECK(out[i] == x[i] + y0[i]);

        std::vector<float> acc = y0;
        be.axpy(0.25f, x.data(), acc.data(), n);
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(std::fabs(acc[i] - (y0[i] + 0.25f * x[i])) < 1e-6f);
        }

        double sum = 0.0, sumsq = 0.0;
        be.plane_sums(x.data(), n, &sum, &sumsq);
        double rsum = 0.0, rsumsq = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            rsum += x[i];
            rsumsq += static_cast<double>(x[i]) * x[i];
        }
        CHECK(std::fabs(sum - rsum) < 1e-9 * (1.0 + std::fabs(rsum)));
        CHECK(std::fabs(sumsq - rsumsq) < 1e-9 * (1.0 + rsumsq));

        be.plane_affine(x.data(), 1.5f, -0.25f, out.data(), n);
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(std::fabs(out[i] - (1.5f * x[i] - 0.25f)) < 1e-6f);
        }

        std::vector<float> p = randf(n, s), g = randf(n, s), v = randf(n, s);
        std::vector<double> pd = widen(p), gd = widen(g), vd = widen(v);
        be.sgd_update(p.data(), g.data(), v.data(), n, 0.1f, 0.9f, 5e-4f);
        padain::ref::sgd_update<double>(pd.data(), gd.data(), vd.data(), n, 0.1, 0.9,
                                        5e-4);
        CHECK(max_err(p, pd) < 1e-6);
        CHECK(max_err(v, vd) < 1e-6);
    }
}

}  // namespace

TEST_CASE("scalar backend matches the 64-bit reference") {
    backend_suite(kn::scalar_backend());
}

TEST_CASE("avx2 backend matches the 64-bit reference") {
    if (!kn::avx2_supported()) return;  // host without AVX2: vacuously true
    backend_suite(kn::avx2_backend());
}

TEST_CASE("backend selection is explicit and validated") {
    const std::string before = kn::active_name();
    kn::select("scalar");
    CHECK(kn::active_name() == "scalar");
    if (kn::avx2_supported()) {
        kn::select("avx2");
        CHECK(kn::active_name() == "avx2");
    }
    kn::select("auto");
    CHECK_THROWS_AS(kn::select("neon"), padain::InputError);
    kn::select(before);  // restore for any later cases
}
