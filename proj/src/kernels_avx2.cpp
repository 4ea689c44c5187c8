// AVX2+FMA backend. Compiled with -mavx2 -mfma in its own translation unit;
// nothing here runs unless avx2_supported() said yes. Lane-parallel reductions
// reassociate relative to the scalar reference, so equivalence tests compare
// with tolerances instead of bit equality. Within this backend every kernel is
// a pure function of its inputs with a fixed lane layout, so results stay
// bit-reproducible run to run.

#include <immintrin.h>

#include "padain/kernels.hpp"

namespace padain::kernels {

namespace {

inline float hsum8(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    lo = _mm_hadd_ps(lo, lo);
    lo = _mm_hadd_ps(lo, lo);
    return _mm_cvtss_f32(lo);
}

inline double hsum4d(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(lo) + _mm_cvtsd_f64(_mm_unpackhi_pd(lo, lo));
}

// 6x16 register-blocked microkernel for C(MxN) = A(MxK)*B(KxN).
template <int MR>
inline void nn_block(int K, int N, const float* A, const float* B, float* crow0,
                     int n0, bool acc) {
    __m256 c0[MR], c1[MR];
    for (int r = 0; r < MR; ++r) {
        if (acc) {
            c0[r] = _mm256_loadu_ps(crow0 + static_cast<std::size_t>(r) * N + n0);
            c1[r] = _mm256_loadu_ps(crow0 + static_cast<std::size_t>(r) * N + n0 + 8);
        } else {
            c0[r] = _mm256_setzero_ps();
            c1[r] = _mm256_setzero_ps();
        }
    }
    for (int k = 0; k < K; ++k) {
        const __m256 b0 = _mm256_loadu_ps(B + static_cast<std::size_t>(k) * N + n0);
        const __m256 b1 = _mm256_loadu_ps(B + static_cast<std::size_t>(k) * N + n0 + 8);
        for (int r = 0; r < MR; ++r) {
            const __m256 a = _mm256_broadcast_ss(A + static_cast<std::size_t>(r) * K + k);
            c0[r] = _mm256_fmadd_ps(a, b0, c0[r]);
            c1[r] = _mm256_fmadd_ps(a, b1, c1[r]);
        }
    }
    for (int r = 0; r < MR; ++r) {
        _mm256_storeu_ps(crow0 + static_cast<std::size_t>(r) * N + n0, c0[r]);
        _mm256_storeu_ps(crow0 + static_cast<std::size_t>(r) * N + n0 + 8, c1[r]);
    }
}

// One C row, 8 columns at a time, scalar column tail.
inline void nn_row_tail(int K, int N, const float* arow, const float* B, float* crow,
                        int n0, bool acc) {
    int n = n0;
    for (; n + 8 <= N; n += 8) {
        __m256 c = acc ? _mm256_loadu_ps(crow + n) : _mm256_setzero_ps();
        for (int k = 0; k < K; ++k) {
            const __m256 b = _mm256_loadu_ps(B + static_cast<std::size_t>(k) * N + n);
            c = _mm256_fmadd_ps(_mm256_broadcast_ss(arow + k), b, c);
        }
        _mm256_storeu_ps(crow + n, c);
    }
    for (; n < N; ++n) {
        float c = acc ? crow[n] : 0.0f;
        for (int k = 0; k < K; ++k) c += arow[k] * B[static_cast<std::size_t>(k) * N + n];
        crow[n] = c;
    }
}

void v_gemm_nn(int M, int K, int N, const float* A, const float* B, float* C, bool acc) {
    int m = 0;
    for (; m + 6 <= M; m += 6) {
        const float* ablk = A + static_cast<std::size_t>(m) * K;
        float* cblk = C + static_cast<std::size_t>(m) * N;
        int n = 0;
        for (; n + 16 <= N; n += 16) nn_block<6>(K, N, ablk, B, cblk, n, acc);
        for (int r = 0; r < 6; ++r) {
            nn_row_tail(K, N, ablk + static_cast<std::size_t>(r) * K, B,
                        cblk + static_cast<std::size_t>(r) * N, n, acc);
        }
    }
    for (; m < M; ++m) {
        nn_row_tail(K, N, A + static_cast<std::size_t>(m) * K, B,
                    C + static_cast<std::size_t>(m) * N, 0, acc);
    }
}

// C(MxN) = A^T(KxM as-stored)*B(KxN) via rank-1 updates: ascending k per element.
void v_gemm_tn(int M, int K, int N, const float* A, const float* B, float* C, bool acc) {
    if (!acc) {
        const std::size_t total = static_cast<std::size_t>(M) * N;
        std::size_t i = 0;
        const __m256 z = _mm256_setzero_ps();
        for (; i + 8 <= total; i += 8) _mm256_storeu_ps(C + i, z);
        for (; i < total; ++i) C[i] = 0.0f;
    }
    for (int k = 0; k < K; ++k) {
        const float* arow = A + static_cast<std::size_t>(k) * M;
        const float* brow = B + static_cast<std::size_t>(k) * N;
        for (int m = 0; m < M; ++m) {
            const __m256 a = _mm256_broadcast_ss(arow + m);
            float* crow = C + static_cast<std::size_t>(m) * N;
            int n = 0;
            for (; n + 8 <= N; n += 8) {
                const __m256 c = _mm256_loadu_ps(crow + n);
                _mm256_storeu_ps(crow + n, _mm256_fmadd_ps(a, _mm256_loadu_ps(brow + n), c));
            }
            const float as = arow[m];
            for (; n < N; ++n) crow[n] += as * brow[n];
        }
    }
}

// C(MxN) = A(MxK)*B^T(NxK as-stored): lane-parallel dot products over k.
void v_gemm_nt(int M, int K, int N, const float* A, const float* B, float* C, bool acc) {
    for (int m = 0; m < M; ++m) {
        const float* arow = A + static_cast<std::size_t>(m) * K;
        float* crow = C + static_cast<std::size_t>(m) * N;
        for (int n = 0; n < N; ++n) {
            const float* brow = B + static_cast<std::size_t>(n) * K;
            __m256 accv = _mm256_setzero_ps();
            int k = 0;
            for (; k + 8 <= K; k += 8) {
                accv = _mm256_fmadd_ps(_mm256_loadu_ps(arow + k),
                                       _mm256_loadu_ps(brow + k), accv);
            }
            float dot = hsum8(accv);
            for (; k < K; ++k) dot += arow[k] * brow[k];
            crow[n] = acc ? crow[n] + dot : dot;
        }
    }
}

void v_relu_fwd(const float* x, float* y, std::size_t n) {
    const __m256 z = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), z));
    }
    for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void v_relu_bwd(const float* x, const float* dy, float* dx, std::size_t n) {
    const __m256 z = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), z, _CMP_GT_OQ);
        const __m256 gated = _mm256_and_ps(mask, _mm256_loadu_ps(dy + i));
        _mm256_storeu_ps(dx + i, _mm256_add_ps(_mm256_loadu_ps(dx + i), gated));
    }
    for (; i < n; ++i) {
        if (x[i] > 0.0f) dx[i] += dy[i];
    }
}

void v_add(const float* a, const float* b, float* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(out + i,
                         _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void v_axpy(float alpha, const float* x, float* y, std::size_t n) {
    const __m256 av = _mm256_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(
            y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

// Sums accumulate in double lanes (4-wide), matching the reference contract
// that moment math never happens in fp32.
void v_plane_sums(const float* x, std::size_t n, double* sum, double* sumsq) {
    __m256d s = _mm256_setzero_pd();
    __m256d sq = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 v = _mm256_loadu_ps(x + i);
        const __m256d lo = _mm256_cvtps_pd(_mm256_castps256_ps128(v));
        const __m256d hi = _mm256_cvtps_pd(_mm256_extractf128_ps(v, 1));
        s = _mm256_add_pd(s, _mm256_add_pd(lo, hi));
        sq = _mm256_fmadd_pd(lo, lo, sq);
        sq = _mm256_fmadd_pd(hi, hi, sq);
    }
    double st = hsum4d(s);
    double sqt = hsum4d(sq);
    for (; i < n; ++i) {
        const double v = static_cast<double>(x[i]);
        st += v;
        sqt += v * v;
    }
    *sum = st;
    *sumsq = sqt;
}

void v_plane_affine(const float* x, float scale, float shift, float* y, std::size_t n) {
    const __m256 sc = _mm256_set1_ps(scale);
    const __m256 sh = _mm256_set1_ps(shift);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(_mm256_loadu_ps(x + i), sc, sh));
    }
    for (; i < n; ++i) y[i] = x[i] * scale + shift;
}

void v_sgd_update(float* p, const float* g, float* v, std::size_t n,
                  float lr, float mom, float wd) {
    const __m256 momv = _mm256_set1_ps(mom);
    const __m256 wdv = _mm256_set1_ps(wd);
    const __m256 nlrv = _mm256_set1_ps(-lr);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 pv = _mm256_loadu_ps(p + i);
        const __m256 grad = _mm256_fmadd_ps(wdv, pv, _mm256_loadu_ps(g + i));
        const __m256 vel = _mm256_fmadd_ps(momv, _mm256_loadu_ps(v + i), grad);
        _mm256_storeu_ps(v + i, vel);
        _mm256_storeu_ps(p + i, _mm256_fmadd_ps(nlrv, vel, pv));
    }
    for (; i < n; ++i) {
        const float grad = g[i] + wd * p[i];
        v[i] = mom * v[i] + grad;
        p[i] -= lr * v[i];
    }
}

}  // namespace

const Backend& avx2_backend() {
    static const Backend table{
        "avx2",       v_gemm_nn, v_gemm_tn,    v_gemm_nt,      v_relu_fwd,
        v_relu_bwd,   v_add,     v_axpy,       v_plane_sums,   v_plane_affine,
        v_sgd_update,
    };
    return table;
}

}  // namespace padain::kernels
