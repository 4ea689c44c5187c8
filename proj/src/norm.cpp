#include "padain/norm.hpp"

#include <cmath>

#include "padain/kernels.hpp"
#include "padain/ops.hpp"

namespace padain::norm {

template <typename T>
ChannelStatsT<T> channel_stats(const TensorT<T>& x, double eps) {
    if (eps < 0.0) throw InputError("channel_stats: eps must be >= 0");
    const int N = x.shape.n, C = x.shape.c;
    const std::size_t plane = x.shape.plane();
    ChannelStatsT<T> st;
    st.n = N;
    st.c = C;
    st.mu.resize(static_cast<std::size_t>(N) * C);
    st.sigma.resize(static_cast<std::size_t>(N) * C);
    for (int nc = 0; nc < N * C; ++nc) {
        double s, sq;
        kernels::plane_sums<T>(x.data() + static_cast<std::size_t>(nc) * plane, plane,
                               &s, &sq);
        // Same rounding sequence as spatial_mean/spatial_std: the variance is
        // taken around the T-rounded mean, not the double one.
        const T mu = static_cast<T>(s / static_cast<double>(plane));
        const double m = static_cast<double>(mu);
        const double var =
            sq / static_cast<double>(plane) - 2.0 * m * s / static_cast<double>(plane) + m * m;
        st.mu[static_cast<std::size_t>(nc)] = mu;
        st.sigma[static_cast<std::size_t>(nc)] =
            static_cast<T>(std::sqrt(std::max(var, 0.0) + eps));
    }
    return st;
}

template <typename T>
TensorT<T> instance_norm(const TensorT<T>& x, double eps) {
    TensorT<T> mu = ops::spatial_mean(x);
    TensorT<T> sig = ops::spatial_std(x, mu, eps);
    return ops::div_nc(ops::sub_nc(x, mu), sig);
}

template <typename T>
TensorT<T> adain(const TensorT<T>& a, const TensorT<T>& b, double eps) {
    if (a.shape.n != b.shape.n || a.shape.c != b.shape.c) {
        throw DimError("adain: content " + to_string(a.shape) + " and style " +
                       to_string(b.shape) + " must share batch and channel axes");
    }
    TensorT<T> mu_a = ops::spatial_mean(a);
    TensorT<T> sig_a = ops::spatial_std(a, mu_a, eps);
    TensorT<T> mu_b = ops::spatial_mean(b);
    TensorT<T> sig_b = ops::spatial_std(b, mu_b, eps);
    TensorT<T> r = ops::div_el(sig_b, sig_a);
    TensorT<T> shift = ops::sub(mu_b, ops::mul(r, mu_a));
    return ops::add_nc(ops::mul_nc(a, r), shift);
}

template <typename T>
PadainResult<T> padain_forward(const TensorT<T>& x, const PAdaINConfig& cfg,
                               RngStream& stream, bool training) {
    if (cfg.p < 0.0 || cfg.p > 1.0) {
        throw InputError("padain_forward: p must be in [0, 1]");
    }
    PadainResult<T> res;
    if (!training || cfg.p <= 0.0 || !stream.next_bernoulli(cfg.p)) {
        res.y = x;
        return res;
    }

    const int N = x.shape.n, C = x.shape.c;
    const bool own_detached = cfg.scheme == BackpropScheme::kDonorOnly ||
                              cfg.scheme == BackpropScheme::kNeither;
    const bool donor_detached = cfg.scheme == BackpropScheme::kOwnOnly ||
                                cfg.scheme == BackpropScheme::kNeither;

    TensorT<T> mu_raw = ops::spatial_mean(x);
    TensorT<T> sig_raw = ops::spatial_std(x, mu_raw, cfg.eps);
    TensorT<T> mu_own = own_detached ? ops::detach(mu_raw) : mu_raw;
    TensorT<T> sig_own = own_detached ? ops::detach(sig_raw) : sig_raw;

    TensorT<T> mu_d, sig_d;
    if (cfg.stats_source == StatsSource::kRandomNormal) {
        // Drawn stats are constants by definition. Two passes: all means in
        // (n, c) order, then all sigmas.
        mu_d = make_tensor<T>(Shape4{N, C, 1, 1});
        sig_d = make_tensor<T>(Shape4{N, C, 1, 1});
        for (std::size_t i = 0; i < mu_d.numel(); ++i) {
            (*mu_d.store)[i] = static_cast<T>(stream.next_normal());
        }
        const T floor = static_cast<T>(cfg.random_sigma_floor);
        for (std::size_t i = 0; i < sig_d.numel(); ++i) {
            const T v = static_cast<T>(std::fabs(stream.next_normal()));
            (*sig_d.store)[i] = v > floor ? v : floor;
        }
    } else {
        res.pi = cfg.perm_policy == PermPolicy::kFixedPerRun
                     ? RngStream::derive(cfg.fixed_perm_seed, StreamDomain::kFixedPerm,
                                         static_cast<std::uint64_t>(N))
                           .permutation(N)
                     : stream.permutation(N);
        if (donor_detached) {
            // Permuting the already-computed moments is bitwise identical to
            // computing moments of permuted planes, and records no donor path.
            mu_d = ops::batch_permute(ops::detach(mu_raw), res.pi);
            sig_d = ops::batch_permute(ops::detach(sig_raw), res.pi);
        } else {
            TensorT<T> xp = ops::batch_permute(x, res.pi);
            mu_d = ops::spatial_mean(xp);
            sig_d = ops::spatial_std(xp, mu_d, cfg.eps);
        }
    }

    // y = x * r + (mu_d - r * mu_own); identity permutations give r == 1 and
    // shift == 0 exactly, so y reproduces x elementwise.
    TensorT<T> r = ops::div_el(sig_d, sig_own);
    TensorT<T> shift = ops::sub(mu_d, ops::mul(r, mu_own));
    res.y = ops::add_nc(ops::mul_nc(x, r), shift);
    res.applied = true;
    res.mu_own = ops::detach(mu_raw);
    res.sigma_own = ops::detach(sig_raw);
    res.mu_donor = ops::detach(mu_d);
    res.sigma_donor = ops::detach(sig_d);
    return res;
}

BnInteraction verify_bn_interaction(const TensorT<double>& x, const std::vector<int>& pi,
                                    const std::vector<double>& gamma,
                                    const std::vector<double>& beta, double eps) {
    const int N = x.shape.n, C = x.shape.c;
    const std::size_t plane = x.shape.plane();
    if (static_cast<int>(pi.size()) != N) {
        throw InputError("verify_bn_interaction: permutation length " +
                         std::to_string(pi.size()) + " for batch of " + std::to_string(N));
    }
    if (static_cast<int>(gamma.size()) != C || static_cast<int>(beta.size()) != C) {
        throw InputError("verify_bn_interaction: gamma/beta must have one entry per channel");
    }
    if (eps <= 0.0) throw InputError("verify_bn_interaction: eps must be > 0");

    // Forced swap at the given permutation, then train-mode BN.
    const ChannelStatsT<double> st = channel_stats(x, eps);
    TensorT<double> y = make_tensor<double>(x.shape);
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const int d = pi[static_cast<std::size_t>(n)];
            const double r = st.sigma_at(d, c) / st.sigma_at(n, c);
            const double shift = st.mu_at(d, c) - r * st.mu_at(n, c);
            const std::size_t off = (static_cast<std::size_t>(n) * C + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                (*y.store)[off + i] = (*x.store)[off + i] * r + shift;
            }
        }
    }

    // Batch moments of the unswapped input, which the closed forms say BN
    // effectively normalizes by.
    std::vector<double> mu_b(static_cast<std::size_t>(C));
    std::vector<double> sig_b(static_cast<std::size_t>(C));
    const double m = static_cast<double>(N) * static_cast<double>(plane);
    for (int c = 0; c < C; ++c) {
        double s = 0.0, sq = 0.0;
        for (int n = 0; n < N; ++n) {
            double ps, pq;
            kernels::plane_sums<double>(
                x.data() + (static_cast<std::size_t>(n) * C + c) * plane, plane, &ps, &pq);
            s += ps;
            sq += pq;
        }
        const double mean = s / m;
        mu_b[static_cast<std::size_t>(c)] = mean;
        sig_b[static_cast<std::size_t>(c)] =
            std::sqrt(std::max(sq / m - mean * mean, 0.0) + eps);
    }

    // Train-mode BN of y with its own batch moments.
    TensorT<double> z = make_tensor<double>(x.shape);
    for (int c = 0; c < C; ++c) {
        double s = 0.0, sq = 0.0;
        for (int n = 0; n < N; ++n) {
            double ps, pq;
            kernels::plane_sums<double>(
                y.data() + (static_cast<std::size_t>(n) * C + c) * plane, plane, &ps, &pq);
            s += ps;
            sq += pq;
        }
        const double mean = s / m;
        const double sigma = std::sqrt(std::max(sq / m - mean * mean, 0.0) + eps);
        for (int n = 0; n < N; ++n) {
            const std::size_t off = (static_cast<std::size_t>(n) * C + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                (*z.store)[off + i] =
                    gamma[static_cast<std::size_t>(c)] * ((*y.store)[off + i] - mean) / sigma +
                    beta[static_cast<std::size_t>(c)];
            }
        }
    }

    const ChannelStatsT<double> zst = channel_stats(z, 0.0);
    BnInteraction out;
    for (int n = 0; n < N; ++n) {
        const int d = pi[static_cast<std::size_t>(n)];
        for (int c = 0; c < C; ++c) {
            const std::size_t ci = static_cast<std::size_t>(c);
            const double mu_hat =
                gamma[ci] * (st.mu_at(d, c) - mu_b[ci]) / sig_b[ci] + beta[ci];
            const double raw_sig = std::sqrt(
                std::max(st.sigma_at(d, c) * st.sigma_at(d, c) - eps, 0.0));
            const double sig_hat = gamma[ci] * raw_sig / sig_b[ci];
            out.max_mu_residual =
                std::max(out.max_mu_residual, std::fabs(zst.mu_at(n, c) - mu_hat));
            out.max_sigma_residual =
                std::max(out.max_sigma_residual, std::fabs(zst.sigma_at(n, c) - sig_hat));
        }
    }
    return out;
}

#define PADAIN_INSTANTIATE_NORM(T)                                                   \
    template ChannelStatsT<T> channel_stats<T>(const TensorT<T>&, double);           \
    template TensorT<T> instance_norm<T>(const TensorT<T>&, double);                 \
    template TensorT<T> adain<T>(const TensorT<T>&, const TensorT<T>&, double);      \
    template PadainResult<T> padain_forward<T>(const TensorT<T>&, const PAdaINConfig&, \
                                               RngStream&, bool);

PADAIN_INSTANTIATE_NORM(float)
PADAIN_INSTANTIATE_NORM(double)

#undef PADAIN_INSTANTIATE_NORM

}  // namespace padain::norm
