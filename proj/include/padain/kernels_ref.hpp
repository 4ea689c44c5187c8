#pragma once

// Scalar reference kernels, templated so the 64-bit verification path and the
// 32-bit scalar backend share one implementation. Every reduction here has a
// single fixed accumulation order; SIMD backends must reproduce results within
// the tolerances asserted in tests/test_kernels.cpp but may reassociate.

#include <algorithm>
#include <cstddef>

namespace padain::ref {

// C(MxN) = A(MxK) * B(KxN), packed row-major. acc=true accumulates into C.
template <typename T>
void gemm_nn(int M, int K, int N, const T* A, const T* B, T* C, bool acc) {
    for (int m = 0; m < M; ++m) {
        T* crow = C + static_cast<std::size_t>(m) * N;
        if (!acc) std::fill(crow, crow + N, T(0));
        for (int k = 0; k < K; ++k) {
            const T a = A[static_cast<std::size_t>(m) * K + k];
            const T* brow = B + static_cast<std::size_t>(k) * N;
            for (int n = 0; n < N; ++n) crow[n] += a * brow[n];
        }
    }
}

// C(MxN) = A^T * B where A is (KxM), B is (KxN). Rank-1 update order so each
// C element accumulates in ascending k.
template <typename T>
void gemm_tn(int M, int K, int N, const T* A, const T* B, T* C, bool acc) {
    if (!acc) std::fill(C, C + static_cast<std::size_t>(M) * N, T(0));
    for (int k = 0; k < K; ++k) {
        const T* arow = A + static_cast<std::size_t>(k) * M;
        const T* brow = B + static_cast<std::size_t>(k) * N;
        for (int m = 0; m < M; ++m) {
            const T a = arow[m];
            T* crow = C + static_cast<std::size_t>(m) * N;
            for (int n = 0; n < N; ++n) crow[n] += a * brow[n];
        }
    }
}

// C(MxN) = A(MxK) * B^T where B is (NxK). Dot products over k.
template <typename T>
void gemm_nt(int M, int K, int N, const T* A, const T* B, T* C, bool acc) {
    for (int m = 0; m < M; ++m) {
        const T* arow = A + static_cast<std::size_t>(m) * K;
        T* crow = C + static_cast<std::size_t>(m) * N;
        for (int n = 0; n < N; ++n) {
            const T* brow = B + static_cast<std::size_t>(n) * K;
            T dot = T(0);
            for (int k = 0; k < K; ++k) dot += arow[k] * brow[k];
            crow[n] = acc ? crow[n] + dot : dot;
        }
    }
}

template <typename T>
void relu_fwd(const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

// dx += (x > 0) ? dy : 0
template <typename T>
void relu_bwd(const T* x, const T* dy, T* dx, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        if (x[i] > T(0)) dx[i] += dy[i];
    }
}

template <typename T>
void add(const T* a, const T* b, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

// y += alpha * x
template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// Raw sums for moment computation, accumulated in double regardless of T so
// that fp32 layers still satisfy the 1e-6 agreement bound against 64-bit
// oracles. Callers turn (sum, sumsq) into mean/var.
template <typename T>
void plane_sums(const T* x, std::size_t n, double* sum, double* sumsq) {
    double s = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double v = static_cast<double>(x[i]);
        s += v;
        sq += v * v;
    }
    *sum = s;
    *sumsq = sq;
}

// y = x * scale + shift
template <typename T>
void plane_affine(const T* x, T scale, T shift, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] * scale + shift;
}

// Heavy-ball SGD with decoupled-from-nothing classic weight decay folded into
// the gradient: v = mom*v + (g + wd*p); p -= lr*v.
template <typename T>
void sgd_update(T* p, const T* g, T* v, std::size_t n, T lr, T mom, T wd) {
    for (std::size_t i = 0; i < n; ++i) {
        const T grad = g[i] + wd * p[i];
        v[i] = mom * v[i] + grad;
        p[i] -= lr * v[i];
    }
}

}  // namespace padain::ref
