#pragma once

#include <cstdint>
#include <vector>

#include "padain/rng.hpp"
#include "padain/tensor.hpp"

namespace padain::norm {

// Per-sample, per-channel spatial moments. Population convention (divide by
// H*W), eps added inside the square root. Arithmetic matches the tape ops
// spatial_mean/spatial_std bit for bit so permuting these values is
// interchangeable with computing stats of permuted planes.
template <typename T>
struct ChannelStatsT {
    int n = 0;
    int c = 0;
    std::vector<T> mu;     // n*c, row-major over (n, c)
    std::vector<T> sigma;  // same layout

    T mu_at(int in, int ic) const { return mu[static_cast<std::size_t>(in) * c + ic]; }
    T sigma_at(int in, int ic) const {
        return sigma[static_cast<std::size_t>(in) * c + ic];
    }
};
using ChannelStats = ChannelStatsT<float>;

template <typename T>
ChannelStatsT<T> channel_stats(const TensorT<T>& x, double eps);

// (x - mu) / sigma per (n, c) plane.
template <typename T>
TensorT<T> instance_norm(const TensorT<T>& x, double eps);

// sigma(b) * (x - mu(a)) / sigma(a) + mu(b), computed as a * r + (mu_b - r * mu_a)
// with r = sigma_b / sigma_a so that b == a reproduces a exactly when the ratio
// is exactly one. a and b must share batch size and channel count; spatial
// extents may differ.
template <typename T>
TensorT<T> adain(const TensorT<T>& a, const TensorT<T>& b, double eps);

// Which normalization statistics the loss gradient is allowed to flow through.
// kOwnOnly is the default: the receiving sample's own moments stay on the tape,
// the donor's moments are treated as constants.
enum class BackpropScheme { kOwnOnly, kBoth, kDonorOnly, kNeither };

// kResample draws a fresh permutation every time the coin fires; kFixedPerRun
// reuses one permutation per batch size, derived from fixed_perm_seed, across
// all layers and steps of a run.
enum class PermPolicy { kResample, kFixedPerRun };

// kPermuted takes donor stats from another sample in the batch; kRandomNormal
// draws mu ~ N(0,1) and sigma = max(|N(0,1)|, random_sigma_floor) instead.
enum class StatsSource { kPermuted, kRandomNormal };

struct PAdaINConfig {
    double p = 0.01;
    double eps = 1e-5;
    BackpropScheme scheme = BackpropScheme::kOwnOnly;
    PermPolicy perm_policy = PermPolicy::kResample;
    StatsSource stats_source = StatsSource::kPermuted;
    double random_sigma_floor = 1e-3;
    std::uint64_t fixed_perm_seed = 0;
};

template <typename T>
struct PadainResult {
    TensorT<T> y;
    bool applied = false;
    std::vector<int> pi;  // empty unless applied with permuted stats
    // Stats actually used, exposed for verification and the stats-swap demo.
    TensorT<T> mu_own, sigma_own, mu_donor, sigma_donor;
};

// One coin per call (probability cfg.p, drawn from `stream`), applied only in
// training mode. When the coin fires, each sample is renormalized to donor
// statistics; otherwise the input tensor is returned untouched, same storage,
// and nothing further is drawn from other streams.
template <typename T>
PadainResult<T> padain_forward(const TensorT<T>& x, const PAdaINConfig& cfg,
                               RngStream& stream, bool training);

struct BnInteraction {
    double max_mu_residual = 0.0;
    double max_sigma_residual = 0.0;
};

// Checks the closed-form effect of train-mode BN applied after a forced
// permutation swap: per-sample means map to gamma * (mu_pi(n) - muB) / sigmaB
// + beta and per-sample stds to gamma * sigma_pi(n) / sigmaB, where muB/sigmaB
// are batch moments of the unswapped input. Returns the worst absolute
// residuals over all (n, c).
BnInteraction verify_bn_interaction(const TensorT<double>& x, const std::vector<int>& pi,
                                    const std::vector<double>& gamma,
                                    const std::vector<double>& beta, double eps);

}  // namespace padain::norm
