#include "padain/kernels.hpp"

namespace padain::kernels {

namespace {

void s_gemm_nn(int M, int K, int N, const float* A, const float* B, float* C, bool acc) {
    ref::gemm_nn(M, K, N, A, B, C, acc);
}
void s_gemm_tn(int M, int K, int N, const float* A, const float* B, float* C, bool acc) {
    ref::gemm_tn(M, K, N, A, B, C, acc);
}
void s_gemm_nt(int M, int K, int N, const float* A, const float* B, float* C, bool acc) {
    ref::gemm_nt(M, K, N, A, B, C, acc);
}
void s_relu_fwd(const float* x, float* y, std::size_t n) { ref::relu_fwd(x, y, n); }
void s_relu_bwd(const float* x, const float* dy, float* dx, std::size_t n) {
    ref::relu_bwd(x, dy, dx, n);
}
void s_add(const float* a, const float* b, float* out, std::size_t n) { ref::add(a, b, out, n); }
void s_axpy(float alpha, const float* x, float* y, std::size_t n) { ref::axpy(alpha, x, y, n); }
void s_plane_sums(const float* x, std::size_t n, double* sum, double* sumsq) {
    ref::plane_sums(x, n, sum, sumsq);
}
void s_plane_affine(const float* x, float scale, float shift, float* y, std::size_t n) {
    ref::plane_affine(x, scale, shift, y, n);
}
void s_sgd_update(float* p, const float* g, float* v, std::size_t n,
                  float lr, float mom, float wd) {
    ref::sgd_update(p, g, v, n, lr, mom, wd);
}

}  // namespace

const Backend& scalar_backend() {
    static const Backend table{
        "scalar",     s_gemm_nn, s_gemm_tn,    s_gemm_nt,      s_relu_fwd,
        s_relu_bwd,   s_add,     s_axpy,       s_plane_sums,   s_plane_affine,
        s_sgd_update,
    };
    return table;
}

}  // namespace padain::kernels
