#pragma once

#include <vector>

#include "padain/tensor.hpp"

namespace padain::ops {

// Differentiable op library. Every function computes values eagerly and, when
// at least one input is attached to a tape, records a node whose backward
// accumulates with += into parent gradient buffers. All ops are pure: inputs
// are never mutated, outputs own fresh storage (reshape/flatten alias the
// input store by design).

template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                  int stride, int pad);

// w layout (InC, OutC, kH, kW); output height (H-1)*stride - 2*pad + kH + out_pad.
template <typename T>
TensorT<T> conv_transpose2d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                            int stride, int pad, int out_pad);

// x (N, In, 1, 1), w (Out, In, 1, 1), b (1, Out, 1, 1).
template <typename T>
TensorT<T> linear(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b);

template <typename T>
TensorT<T> relu(const TensorT<T>& x);

template <typename T>
TensorT<T> max_pool2d(const TensorT<T>& x, int k, int stride);

// Per-(n, c) spatial moments. spatial_std takes the center as a separate
// differentiable input so composed normalizers backprop through both paths;
// population convention, eps inside the square root.
template <typename T>
TensorT<T> spatial_mean(const TensorT<T>& x);
template <typename T>
TensorT<T> spatial_std(const TensorT<T>& x, const TensorT<T>& mu, double eps);

// out[i] = x[pi[i]]; backward scatters grads through the inverse permutation.
template <typename T>
TensorT<T> batch_permute(const TensorT<T>& x, const std::vector<int>& pi);

// Same values, no tape lineage. Gradients never flow into or past the result.
template <typename T>
TensorT<T> detach(const TensorT<T>& x);

template <typename T> TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b);
template <typename T> TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b);
template <typename T> TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b);
template <typename T> TensorT<T> div_el(const TensorT<T>& a, const TensorT<T>& b);

template <typename T> TensorT<T> add_scalar(const TensorT<T>& x, double c);
template <typename T> TensorT<T> mul_scalar(const TensorT<T>& x, double c);

// Broadcast ops against s of shape (N, C, 1, 1) or (1, C, 1, 1).
template <typename T> TensorT<T> add_nc(const TensorT<T>& x, const TensorT<T>& s);
template <typename T> TensorT<T> sub_nc(const TensorT<T>& x, const TensorT<T>& s);
template <typename T> TensorT<T> mul_nc(const TensorT<T>& x, const TensorT<T>& s);
template <typename T> TensorT<T> div_nc(const TensorT<T>& x, const TensorT<T>& s);

template <typename T> TensorT<T> sqrt_el(const TensorT<T>& x);
template <typename T> TensorT<T> square(const TensorT<T>& x);

template <typename T> TensorT<T> sum_all(const TensorT<T>& x);
template <typename T> TensorT<T> mean_all(const TensorT<T>& x);

template <typename T> TensorT<T> reshape(const TensorT<T>& x, Shape4 s);
template <typename T> TensorT<T> flatten(const TensorT<T>& x);

// Mean negative log-likelihood over the batch; probabilities and the log-sum
// are computed in double per row regardless of T.
template <typename T>
TensorT<T> softmax_cross_entropy(const TensorT<T>& logits, const std::vector<int>& labels);

// Training-mode batch normalization, fused forward and backward. Batch moments
// (population convention over N*H*W, eps inside the sqrt) are returned so the
// caller can maintain running statistics outside the tape.
template <typename T>
struct BnResult {
    TensorT<T> y;
    std::vector<double> mu;   // per channel
    std::vector<double> var;  // per channel, before eps
};
template <typename T>
BnResult<T> batch_norm_train(const TensorT<T>& x, const TensorT<T>& gamma,
                             const TensorT<T>& beta, double eps);

}  // namespace padain::ops
