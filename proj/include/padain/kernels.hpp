#pragma once

#include <cstddef>
#include <string>

#include "padain/kernels_ref.hpp"

namespace padain::kernels {

// Function-pointer table for the fp32 hot path. One scalar table (wrapping the
// reference templates) and one AVX2 table; selection happens once at startup.
// The fp64 verification path bypasses the table and calls padain::ref directly.
struct Backend {
    const char* name;
    void (*gemm_nn)(int M, int K, int N, const float* A, const float* B, float* C, bool acc);
    void (*gemm_tn)(int M, int K, int N, const float* A, const float* B, float* C, bool acc);
    void (*gemm_nt)(int M, int K, int N, const float* A, const float* B, float* C, bool acc);
    void (*relu_fwd)(const float* x, float* y, std::size_t n);
    void (*relu_bwd)(const float* x, const float* dy, float* dx, std::size_t n);
    void (*add)(const float* a, const float* b, float* out, std::size_t n);
    void (*axpy)(float alpha, const float* x, float* y, std::size_t n);
    void (*plane_sums)(const float* x, std::size_t n, double* sum, double* sumsq);
    void (*plane_affine)(const float* x, float scale, float shift, float* y, std::size_t n);
    void (*sgd_update)(float* p, const float* g, float* v, std::size_t n,
                       float lr, float mom, float wd);
};

const Backend& scalar_backend();
const Backend& avx2_backend();   // only valid to call through if avx2_supported()
bool avx2_supported();

// Active table. Resolution order: explicit select() call, else PADAIN_KERNELS
// env var (auto|scalar|avx2), else auto-detect. Invalid requests throw.
const Backend& active();
void select(const std::string& name);
std::string active_name();

// Typed entry points so templated code reads identically for float and double:
// float goes through the dispatch table, double through the reference kernels.
template <typename T>
inline void gemm_nn(int M, int K, int N, const T* A, const T* B, T* C, bool acc) {
    if constexpr (std::is_same_v<T, float>) active().gemm_nn(M, K, N, A, B, C, acc);
    else ref::gemm_nn(M, K, N, A, B, C, acc);
}
template <typename T>
inline void gemm_tn(int M, int K, int N, const T* A, const T* B, T* C, bool acc) {
    if constexpr (std::is_same_v<T, float>) active().gemm_tn(M, K, N, A, B, C, acc);
    else ref::gemm_tn(M, K, N, A, B, C, acc);
}
template <typename T>
inline void gemm_nt(int M, int K, int N, const T* A, const T* B, T* C, bool acc) {
    if constexpr (std::is_same_v<T, float>) active().gemm_nt(M, K, N, A, B, C, acc);
    else ref::gemm_nt(M, K, N, A, B, C, acc);
}
template <typename T>
inline void relu_fwd(const T* x, T* y, std::size_t n) {
    if constexpr (std::is_same_v<T, float>) active().relu_fwd(x, y, n);
    else ref::relu_fwd(x, y, n);
}
template <typename T>
inline void relu_bwd(const T* x, const T* dy, T* dx, std::size_t n) {
    if constexpr (std::is_same_v<T, float>) active().relu_bwd(x, dy, dx, n);
    else ref::relu_bwd(x, dy, dx, n);
}
template <typename T>
inline void add(const T* a, const T* b, T* out, std::size_t n) {
    if constexpr (std::is_same_v<T, float>) active().add(a, b, out, n);
    else ref::add(a, b, out, n);
}
template <typename T>
inline void axpy(T alpha, const T* x, T* y, std::size_t n) {
    if constexpr (std::is_same_v<T, float>) active().axpy(alpha, x, y, n);
    else ref::axpy(alpha, x, y, n);
}
template <typename T>
inline void plane_sums(const T* x, std::size_t n, double* sum, double* sumsq) {
    if constexpr (std::is_same_v<T, float>) active().plane_sums(x, n, sum, sumsq);
    else ref::plane_sums(x, n, sum, sumsq);
}
template <typename T>
inline void plane_affine(const T* x, T scale, T shift, T* y, std::size_t n) {
    if constexpr (std::is_same_v<T, float>) active().plane_affine(x, scale, shift, y, n);
    else ref::plane_affine(x, scale, shift, y, n);
}
template <typename T>
inline void sgd_update(T* p, const T* g, T* v, std::size_t n, T lr, T mom, T wd) {
    if constexpr (std::is_same_v<T, float>) active().sgd_update(p, g, v, n, lr, mom, wd);
    else ref::sgd_update(p, g, v, n, lr, mom, wd);
}

}  // namespace padain::kernels
