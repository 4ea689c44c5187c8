#include "padain/verify.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <map>
#include <ostream>
#include <sstream>

#include "padain/gradcheck.hpp"
#include "padain/norm.hpp"
#include "padain/ops.hpp"
#include "padain/rng.hpp"
#include "padain/tensor.hpp"

namespace padain::verify {

namespace {

// Every suite seeds from this constant, not from user input, so `verify`
// output is a fixed function of the build.
constexpr std::uint64_t kSuiteSeed = 0x70ada1f5u;

bool fault(const char* tag) {
    const char* v = std::getenv("PADAIN_FAULT");
    return v != nullptr && std::strcmp(v, tag) == 0;
}

template <typename T>
TensorT<T> urand(Shape4 s, RngStream& g, double lo, double hi) {
    TensorT<T> t = make_tensor<T>(s);
    for (T& v : *t.store) v = static_cast<T>(lo + (hi - lo) * g.next_uniform());
    return t;
}

// Magnitudes in [lo, hi] with random sign; keeps values away from the relu
// kink so central differences stay two-sided.
TensorT<double> urand_signed(Shape4 s, RngStream& g, double lo, double hi) {
    TensorT<double> t = make_tensor<double>(s);
    for (double& v : *t.store) {
        const double mag = lo + (hi - lo) * g.next_uniform();
        v = g.next_bernoulli(0.5) ? mag : -mag;
    }
    return t;
}

// Shuffled arithmetic ramp: all pairwise gaps >= step, far above the finite
// difference perturbation, so max-pool argmax sets cannot flip mid-check.
TensorT<double> gapped(Shape4 s, RngStream& g, double step = 0.01) {
    const std::size_t n = s.numel();
    std::vector<double> vals(n);
    for (std::size_t i = 0; i < n; ++i) vals[i] = step * static_cast<double>(i);
    for (std::size_t i = n - 1; i > 0; --i) {
        const std::size_t j = g.next_below(i + 1);
        std::swap(vals[i], vals[j]);
    }
    return make_tensor<double>(s, std::move(vals));
}

// Per-plane scale/shift diversity so donor and receiver moments differ by O(1).
template <typename T>
TensorT<T> plane_varied(Shape4 s, RngStream& g) {
    TensorT<T> t = make_tensor<T>(s);
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            const double scale = 0.5 + 1.5 * g.next_uniform();
            const double shift = -1.0 + 2.0 * g.next_uniform();
            for (int h = 0; h < s.h; ++h) {
                for (int w = 0; w < s.w; ++w) {
                    t.at(n, c, h, w) = static_cast<T>(shift + scale * g.next_normal());
                }
            }
        }
    }
    return t;
}

// Weighted sum against fixed positive weights; turns any tensor-valued op
// into a scalar loss with nondegenerate gradients everywhere.
TensorT<double> probe(const TensorT<double>& y, const TensorT<double>& w) {
    return ops::sum_all(ops::mul(y, w));
}

CheckResult le_row(std::string suite, std::string name, double measured, double threshold,
                   std::string detail) {
    CheckResult r;
    r.suite = std::move(suite);
    r.name = std::move(name);
    r.measured = measured;
    r.threshold = threshold;
    r.at_most = true;
    r.pass = measured <= threshold;
    r.detail = std::move(detail);
    return r;
}

CheckResult ge_row(std::string suite, std::string name, double measured, double threshold,
                   std::string detail) {
    CheckResult r;
    r.suite = std::move(suite);
    r.name = std::move(name);
    r.measured = measured;
    r.threshold = threshold;
    r.at_most = false;
    r.pass = measured >= threshold;
    r.detail = std::move(detail);
    return r;
}

CheckResult fd_row(const std::string& name, const CheckFn& fn,
                   std::vector<TensorT<double>> params, double tol = 1e-6) {
    const GradCheckResult g = gradient_check(fn, std::move(params), 1e-5, tol);
    std::ostringstream d;
    d << "max abs err " << g.max_abs_err;
    return le_row("grad", name, g.max_rel_err, tol, d.str());
}

// Identity op with an adjustable backward multiplier. The forward scales by
// 2; the correct backward scales the incoming gradient by the same 2. Under
// PADAIN_FAULT=grad-backward the backward uses 2.02 instead, a deliberate
// defect the finite-difference check must catch.
TensorT<double> twice_with_backward(Tape<double>* tp, const TensorT<double>& x,
                                    double back_scale) {
    auto store = std::make_shared<std::vector<double>>(x.numel());
    for (std::size_t i = 0; i < x.numel(); ++i) (*store)[i] = 2.0 * (*x.store)[i];
    const int xa = x.node;
    const int id = tp->add_node(x.shape, store,
                                [xa, back_scale](Tape<double>& t, int self) {
                                    if (xa < 0) return;
                                    const std::vector<double>& g = t.grad_buf(self);
                                    std::vector<double>& gx = t.grad_buf(xa);
                                    for (std::size_t i = 0; i < g.size(); ++i) {
                                        gx[i] += back_scale * g[i];
                                    }
                                });
    return TensorT<double>(x.shape, store, tp, id);
}

// Double two-pass moments, independent of channel_stats' accumulation scheme.
void two_pass(const float* p, std::size_t n, double eps, double* mu, double* sigma) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += static_cast<double>(p[i]);
    const double m = s / static_cast<double>(n);
    double q = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(p[i]) - m;
        q += d * d;
    }
    *mu = m;
    *sigma = std::sqrt(q / static_cast<double>(n) + eps);
}

// ===================== grad suite =====================

// Replays the draw order of padain_forward at p=1 so the permutation is known
// before the live call; bumps the stream key until some sample has a
// non-identity donor.
struct ForcedSwap {
    std::uint64_t key = 0;
    std::vector<int> pi;
    int receiver = -1;
};

ForcedSwap find_forced_swap(int batch) {
    for (std::uint64_t key = 0; key < 64; ++key) {
        RngStream s = RngStream::derive(kSuiteSeed, StreamDomain::kVerify, 7, key);
        (void)s.next_bernoulli(1.0);
        std::vector<int> pi = s.permutation(batch);
        for (int i = 0; i < batch; ++i) {
            if (pi[static_cast<std::size_t>(i)] != i) return {key, pi, i};
        }
    }
    throw CheckInvalidError("find_forced_swap: no non-identity permutation in 64 streams");
}

void grad_suite(std::vector<CheckResult>& out) {
    RngStream g = RngStream::derive(kSuiteSeed, StreamDomain::kVerify, 1);

    {
        auto x = urand<double>({2, 3, 5, 5}, g, -1.0, 1.0);
        auto w = urand<double>({4, 3, 3, 3}, g, -0.5, 0.5);
        auto b = urand<double>({1, 4, 1, 1}, g, -0.2, 0.2);
        auto pw = urand<double>({2, 4, 5, 5}, g, 0.5, 1.5);
        out.push_back(fd_row("conv2d_k3_s1_p1",
                             [pw](Tape<double>&, std::vector<TensorT<double>>& p) {
                                 return probe(ops::conv2d(p[0], p[1], p[2], 1, 1), pw);
                             },
                             {x, w, b}));
    }
    {
        auto x = urand<double>({2, 2, 7, 7}, g, -1.0, 1.0);
        auto w = urand<double>({3, 2, 3, 3}, g, -0.5, 0.5);
        auto b = urand<double>({1, 3, 1, 1}, g, -0.2, 0.2);
        auto pw = urand<double>({2, 3, 3, 3}, g, 0.5, 1.5);
        out.push_back(fd_row("conv2d_k3_s2_p0",
                             [pw](Tape<double>&, std::vector<TensorT<double>>& p) {
                                 return probe(ops::conv2d(p[0], p[1], p[2], 2, 0), pw);
                             },
                             {x, w, b}));
    }
    {
        auto x = urand<double>({2, 3, 4, 4}, g, -1.0, 1.0);
        auto w = urand<double>({4, 3, 1, 1}, g, -0.5, 0.5);
        auto b = urand<double>({1, 4, 1, 1}, g, -0.2, 0.2);
        auto pw = urand<double>({2, 4, 4, 4}, g, 0.5, 1.5);
        out.push_back(fd_row("conv2d_k1_pointwise",
                             [pw](Tape<double>&, std::vector<TensorT<double>>& p) {
                                 return probe(ops::conv2d(p[0], p[1], p[2], 1, 0), pw);
                             },
                             {x, w, b}));
    }
    {
        auto x = urand<double>({2, 3, 4, 4}, g, -1.0, 1.0);
        auto w = urand<double>({3, 2, 3, 3}, g, -0.5, 0.5);
        auto b = urand<double>({1, 2, 1, 1}, g, -0.2, 0.2);
        auto pw = urand<double>({2, 2, 8, 8}, g, 0.5, 1.5);
        out.push_back(fd_row("conv_transpose_k3_s2_p1_op1",
                             [pw](Tape<double>&, std::vector<TensorT<double>>& p) {
                                 return probe(ops::conv_transpose2d(p[0], p[1], p[2], 2, 1, 1),
                                              pw);
                             },
                             {x, w, b}));
    }
    {
        auto x = urand<double>({3, 8, 1, 1}, g, -1.0, 1.0);
        auto w = urand<double>({5, 8, 1, 1}, g, -0.5, 0.5);
        auto b = urand<double>({1, 5, 1, 1}, g, -0.2, 0.2);
        auto pw = urand<double>({3, 5, 1, 1}, g, 0.5, 1.5);
        out.push_back(fd_row("linear",
                             [pw](Tape<double>&, std::vector<TensorT<double>>& p) {
                                 return probe(ops::linear(p[0], p[1], p[2]), pw);
                             },
                             {x, w, b}));
    }
    {
        auto x = urand_signed({2, 3, 4, 4}, g, 0.1, 1.0);
        auto pw = urand<double>({2, 3, 4, 4}, g, 0.5, 1.5);
        out.push_back(fd_row("relu",
                             [pw](Tape<double>&, std::vector<TensorT<double>>& p) {
                                 return probe(ops::relu(p[0]), pw);
                             },
                             {x}));
    }
    {
        auto x = gapped({2, 2, 6, 6}, g);
        auto pw = urand<double>({2, 2, 3, 3}, g, 0.5, 1.5);
        out.push_back(fd_row("max_pool_k2_s2",
                             [pw](Tape<double>&, std::vector<TensorT<double>>& p) {
                                 return probe(ops::max_pool2d(p[0], 2, 2), pw);
                             },
                             {x}));
    }
    {
        auto x = urand<double>({2, 3, 4, 4}, g, -1.0, 1.0);
        auto wm = urand<double>({2, 3, 1, 1}, g, 0.5, 1.5);
        auto ws = urand<double>({2, 3, 1, 1}, g, 0.5, 1.5);
        out.push_back(fd_row("spatial_mean_and_std",
                             [wm, ws](Tape<double>&, std::vector<TensorT<double>>& p) {
                                 auto mu = ops::spatial_mean(p[0]);
                                 auto sig = ops::spatial_std(p[0], mu, 1e-5);
                                 return ops::add(probe(mu, wm), probe(sig, ws));
                             },
                             {x}));
    }
    {
        auto x = urand<double>({2, 3, 5, 5}, g, -1.0, 1.0);
        auto pw = urand<double>({2, 3, 5, 5}, g, 0.5, 1.5);
        out.push_back(fd_row("instance_norm",
                             [pw](Tape<double>&, std::vector<TensorT<double>>& p) {
                                 return probe(norm::instance_norm(p[0], 1e-5), pw);
                             },
                             {x}));
    }
    {
        auto a = urand<double>({2, 3, 4, 4}, g, -1.0, 1.0);
        auto b = urand<double>({2, 3, 5, 5}, g, -1.0, 1.0);
        auto pw = urand<double>({2, 3, 4, 4}, g, 0.5, 1.5);
        out.push_back(fd_row("adain_both_inputs",
                             [pw](Tape<double>&, std::vector<TensorT<double>>& p) {
                                 return probe(norm::adain(p[0], p[1], 1e-5), pw);
                             },
                             {a, b}));
    }
    {
        auto x = urand<double>({3, 2, 3, 3}, g, -1.0, 1.0);
        auto pw = urand<double>({3, 2, 3, 3}, g, 0.5, 1.5);
        const std::vector<int> pi = {2, 0, 1};
        out.push_back(fd_row("batch_permute",
                             [pw, pi](Tape<double>&, std::vector<TensorT<double>>& p) {
                                 return probe(ops::batch_permute(p[0], pi), pw);
                             },
                             {x}));
    }
    {
        auto a = urand<double>({2, 2, 3, 3}, g, -1.0, 1.0);
        auto b = urand<double>({2, 2, 3, 3}, g, -1.0, 1.0);
        auto c = urand_signed({2, 2, 3, 3}, g, 0.5, 1.5);
        auto pw = urand<double>({2, 2, 3, 3}, g, 0.5, 1.5);
        out.push_back(fd_row("elementwise_add_sub_mul_div",
                             [pw](Tape<double>&, std::vector<TensorT<double>>& p) {
                                 auto y = ops::div_el(ops::mul(ops::add(p[0], p[1]),
                                                               ops::sub(p[0], p[1])),
                                                      p[2]);
                                 return probe(y, pw);
                             },
                             {a, b, c}));
    }
    {
        auto x = urand<double>({2, 3, 3, 3}, g, -1.0, 1.0);
        auto s = urand<double>({1, 3, 1, 1}, g, 0.7, 1.5);
        auto t = urand<double>({2, 3, 1, 1}, g, 0.7, 1.5);
        auto pw = urand<double>({2, 3, 3, 3}, g, 0.5, 1.5);
        out.push_back(fd_row("broadcast_add_sub_mul_div_nc",
                             [pw](Tape<double>&, std::vector<TensorT<double>>& p) {
                                 auto y = ops::div_nc(
                                     ops::mul_nc(ops::sub_nc(ops::add_nc(p[0], p[1]), p[2]),
                                                 p[1]),
                                     p[2]);
                                 return probe(y, pw);
                             },
                             {x, s, t}));
    }
    {
        auto x = urand<double>({2, 2, 4, 4}, g, -1.0, 1.0);
        out.push_back(fd_row("scalar_sqrt_square_mean_chain",
                             [](Tape<double>&, std::vector<TensorT<double>>& p) {
                                 auto y = ops::mean_all(ops::square(ops::sqrt_el(
                                     ops::add_scalar(ops::mul_scalar(ops::flatten(p[0]), 0.5),
                                                     2.0))));
                                 return y;
                             },
                             {x}));
    }
    {
        auto x = urand<double>({2, 3, 4, 2}, g, -1.0, 1.0);
        auto pw = urand<double>({4, 3, 2, 2}, g, 0.5, 1.5);
        out.push_back(fd_row("reshape_view",
                             [pw](Tape<double>&, std::vector<TensorT<double>>& p) {
                                 return probe(ops::reshape(p[0], Shape4{4, 3, 2, 2}), pw);
                             },
                             {x}));
    }
    {
        auto logits = urand<double>({5, 7, 1, 1}, g, -2.0, 2.0);
        const std::vector<int> labels = {3, 0, 6, 2, 5};
        out.push_back(fd_row("softmax_cross_entropy",
                             [labels](Tape<double>&, std::vector<TensorT<double>>& p) {
                                 return ops::softmax_cross_entropy(p[0], labels);
                             },
                             {logits}));
    }
    {
        auto x = urand<double>({4, 3, 3, 3}, g, -1.0, 1.0);
        auto gamma = urand<double>({1, 3, 1, 1}, g, 0.5, 1.5);
        auto beta = urand<double>({1, 3, 1, 1}, g, -0.5, 0.5);
        auto pw = urand<double>({4, 3, 3, 3}, g, 0.5, 1.5);
        out.push_back(fd_row("batch_norm_train",
                             [pw](Tape<double>&, std::vector<TensorT<double>>& p) {
                                 auto r = ops::batch_norm_train(p[0], p[1], p[2], 1e-5);
                                 return probe(r.y, pw);
                             },
                             {x, gamma, beta}));
    }
    {
        auto x = urand<double>({3, 2, 6, 6}, g, -1.0, 1.0);
        auto w = urand<double>({4, 2, 3, 3}, g, -0.4, 0.4);
        auto b = urand<double>({1, 4, 1, 1}, g, -0.2, 0.2);
        auto gamma = urand<double>({1, 4, 1, 1}, g, 0.8, 1.2);
        auto beta = urand<double>({1, 4, 1, 1}, g, 0.2, 0.6);
        auto w2 = urand<double>({5, 36, 1, 1}, g, -0.3, 0.3);
        auto b2 = urand<double>({1, 5, 1, 1}, g, -0.2, 0.2);
        const std::vector<int> labels = {0, 3, 2};
        out.push_back(fd_row("classifier_chain",
                             [labels](Tape<double>&, std::vector<TensorT<double>>& p) {
                                 auto h = ops::conv2d(p[0], p[1], p[2], 1, 1);
                                 auto bn = ops::batch_norm_train(h, p[3], p[4], 1e-5);
                                 auto r = ops::relu(bn.y);
                                 auto pl = ops::max_pool2d(r, 2, 2);
                                 auto lg = ops::linear(ops::flatten(pl), p[5], p[6]);
                                 return ops::softmax_cross_entropy(lg, labels);
                             },
                             {x, w, b, gamma, beta, w2, b2}));
    }

    // Swap layer with the whole graph live: donor statistics stay on the tape
    // (no detachment), so central differences must reproduce every path.
    {
        auto x = plane_varied<double>({4, 3, 4, 4}, g);
        auto pw = urand<double>({4, 3, 4, 4}, g, 0.5, 1.5);
        norm::PAdaINConfig cfg;
        cfg.p = 1.0;
        cfg.eps = 1e-5;
        cfg.scheme = norm::BackpropScheme::kBoth;
        out.push_back(fd_row("padain_full_graph",
                             [pw, cfg](Tape<double>&, std::vector<TensorT<double>>& p) {
                                 RngStream s = RngStream::derive(
                                     kSuiteSeed, StreamDomain::kVerify, 6, 0);
                                 auto res = norm::padain_forward(p[0], cfg, s, true);
                                 return probe(res.y, pw);
                             },
                             {x}));
    }

    // Stop-gradient contract. The live layer detaches donor moments, so its
    // tape gradient must equal the finite-difference gradient of a functional
    // in which donor moments are constants frozen at their base values.
    {
        const int N = 4, C = 3, S = 4;
        const ForcedSwap fs = find_forced_swap(N);
        auto x = plane_varied<double>({N, C, S, S}, g);
        const double eps = 1e-5;

        // Loss weights confined to the receiving sample.
        auto wmask = make_tensor<double>(Shape4{N, C, S, S});
        {
            RngStream wg = RngStream::derive(kSuiteSeed, StreamDomain::kVerify, 8);
            for (int c = 0; c < C; ++c) {
                for (int h = 0; h < S; ++h) {
                    for (int w = 0; w < S; ++w) {
                        wmask.at(fs.receiver, c, h, w) = 0.5 + wg.next_uniform();
                    }
                }
            }
        }

        norm::PAdaINConfig own_only;
        own_only.p = 1.0;
        own_only.eps = eps;
        own_only.scheme = norm::BackpropScheme::kOwnOnly;

        auto live_grad = [&](const norm::PAdaINConfig& cfg) {
            Tape<double> tape;
            TensorT<double> xl = tape.leaf(x);
            RngStream s = RngStream::derive(kSuiteSeed, StreamDomain::kVerify, 7, fs.key);
            auto res = norm::padain_forward(xl, cfg, s, true);
            TensorT<double> loss = probe(res.y, wmask);
            tape.backward(loss);
            return *xl.grad();
        };
        const std::vector<double> g_own = live_grad(own_only);

        const std::size_t plane = static_cast<std::size_t>(C) * S * S;
        const int donor = fs.pi[static_cast<std::size_t>(fs.receiver)];
        double off_receiver = 0.0, on_receiver = 0.0;
        for (int n = 0; n < N; ++n) {
            double m = 0.0;
            for (std::size_t j = 0; j < plane; ++j) {
                m = std::max(m, std::fabs(g_own[static_cast<std::size_t>(n) * plane + j]));
            }
            if (n == fs.receiver) {
                on_receiver = m;
            } else {
                off_receiver = std::max(off_receiver, m);
            }
        }
        out.push_back(le_row("grad", "stopgrad_donor_plane_zero", off_receiver, 1e-6,
                             "gradient into sample " + std::to_string(donor) +
                                 " and all other non-receivers, donor stats detached"));
        out.push_back(ge_row("grad", "stopgrad_receiver_grad_alive", on_receiver, 1e-8,
                             "receiver sample keeps a gradient"));

        norm::PAdaINConfig both = own_only;
        both.scheme = norm::BackpropScheme::kBoth;
        const std::vector<double> g_both = live_grad(both);
        double donor_m = 0.0;
        for (std::size_t j = 0; j < plane; ++j) {
            donor_m = std::max(
                donor_m,
                std::fabs(g_both[static_cast<std::size_t>(donor) * plane + j]));
        }
        out.push_back(ge_row("grad", "donor_grad_flows_when_attached", donor_m, 1e-8,
                             "same loss, donor stats left on the tape"));

        // Frozen-donor functional: donor moments fixed at base-point values.
        TensorT<double> mu_raw = ops::spatial_mean(x);
        TensorT<double> sig_raw = ops::spatial_std(x, mu_raw, eps);
        TensorT<double> mu_d0 = ops::batch_permute(mu_raw, fs.pi);
        TensorT<double> sig_d0 = ops::batch_permute(sig_raw, fs.pi);
        CheckFn frozen = [mu_d0, sig_d0, wmask, eps](Tape<double>&,
                                                     std::vector<TensorT<double>>& p) {
            auto mu_o = ops::spatial_mean(p[0]);
            auto sig_o = ops::spatial_std(p[0], mu_o, eps);
            auto r = ops::div_el(sig_d0, sig_o);
            auto shift = ops::sub(mu_d0, ops::mul(r, mu_o));
            auto y = ops::add_nc(ops::mul_nc(p[0], r), shift);
            return ops::sum_all(ops::mul(y, wmask));
        };
        out.push_back(fd_row("stopgrad_frozen_donor_fd", frozen, {x}));

        {
            Tape<double> tape;
            TensorT<double> xl = tape.leaf(x);
            std::vector<TensorT<double>> ps = {xl};
            TensorT<double> loss = frozen(tape, ps);
            tape.backward(loss);
            const std::vector<double>& g_frozen = *xl.grad();
            double diff = 0.0;
            for (std::size_t j = 0; j < g_frozen.size(); ++j) {
                diff = std::max(diff, std::fabs(g_frozen[j] - g_own[j]));
            }
            out.push_back(le_row("grad", "stopgrad_live_equals_frozen", diff, 0.0,
                                 "live detached-donor gradient vs frozen-donor functional"));
        }
    }

    {
        auto x = urand<double>({2, 2, 3, 3}, g, 0.5, 1.5);
        auto pw = urand<double>({2, 2, 3, 3}, g, 0.5, 1.5);
        Tape<double> tape;
        TensorT<double> xl = tape.leaf(x);
        TensorT<double> d = ops::detach(xl);
        TensorT<double> loss = probe(ops::mul(xl, d), pw);
        tape.backward(loss);
        const std::vector<double>& gx = *xl.grad();
        double diff = 0.0;
        for (std::size_t i = 0; i < gx.size(); ++i) {
            diff = std::max(diff,
                            std::fabs(gx[i] - (*pw.store)[i] * (*d.store)[i]));
        }
        out.push_back(le_row("grad", "detach_blocks_second_path", diff, 0.0,
                             "d(x*detach(x))/dx == detach(x), not 2x"));
    }

    {
        auto x = urand<double>({2, 2, 3, 3}, g, -1.0, 1.0);
        auto pw = urand<double>({2, 2, 3, 3}, g, 0.5, 1.5);
        const double back_scale = fault("grad-backward") ? 2.02 : 2.0;
        out.push_back(fd_row("corrupted_backward_hook",
                             [pw, back_scale](Tape<double>& tp,
                                              std::vector<TensorT<double>>& p) {
                                 return probe(twice_with_backward(&tp, p[0], back_scale), pw);
                             },
                             {x}));
        out.back().detail = "negative control, fails under PADAIN_FAULT=grad-backward";
    }
}

// ===================== stats suite =====================

void stats_suite(std::vector<CheckResult>& out) {
    RngStream g = RngStream::derive(kSuiteSeed, StreamDomain::kVerify, 2);

    {
        double diff0 = 0.0, diff_eps = 0.0;
        for (int t = 0; t < 20; ++t) {
            auto a = plane_varied<float>({3, 4, 5, 5}, g);
            auto y0 = norm::adain(a, a, 0.0);
            auto ye = norm::adain(a, a, 1e-5);
            for (std::size_t i = 0; i < a.numel(); ++i) {
                diff0 = std::max(diff0, std::fabs(static_cast<double>((*y0.store)[i]) -
                                                  static_cast<double>((*a.store)[i])));
                diff_eps = std::max(diff_eps, std::fabs(static_cast<double>((*ye.store)[i]) -
                                                        static_cast<double>((*a.store)[i])));
            }
        }
        out.push_back(le_row("stats", "adain_self_identity_eps0", diff0, 0.0,
                             "adain(a, a) at eps=0 reproduces a exactly"));
        out.push_back(le_row("stats", "adain_self_identity_eps", diff_eps, 1e-4,
                             "shared eps convention keeps the scale ratio at exactly 1"));
    }

    {
        // Forced swap: output per-plane moments must equal the donor plane's,
        // both sides measured by an independent double two-pass.
        const double eps = 1e-7;
        norm::PAdaINConfig cfg;
        cfg.p = 1.0;
        cfg.eps = eps;
        double worst = 0.0;
        for (int t = 0; t < 100; ++t) {
            auto x = plane_varied<float>({4, 3, 6, 6}, g);
            RngStream s = RngStream::derive(kSuiteSeed, StreamDomain::kVerify, 30,
                                            static_cast<std::uint64_t>(t));
            auto res = norm::padain_forward(x, cfg, s, true);
            const std::size_t plane = x.shape.plane();
            for (int n = 0; n < 4; ++n) {
                const int d = res.pi[static_cast<std::size_t>(n)];
                for (int c = 0; c < 3; ++c) {
                    double mu_y, sig_y, mu_d, sig_d;
                    two_pass(res.y.data() + (static_cast<std::size_t>(n) * 3 + c) * plane,
                             plane, eps, &mu_y, &sig_y);
                    two_pass(x.data() + (static_cast<std::size_t>(d) * 3 + c) * plane,
                             plane, eps, &mu_d, &sig_d);
                    worst = std::max({worst, std::fabs(mu_y - mu_d),
                                      std::fabs(sig_y - sig_d)});
                }
            }
        }
        if (fault("stats-shift")) worst += 1e-3;
        out.push_back(le_row("stats", "forced_swap_stats_match_donor", worst, 1e-5,
                             "100 random tensors, mean and std residual vs donor plane"));
    }

    {
        double worst = 0.0;
        for (int t = 0; t < 100; ++t) {
            auto x = plane_varied<float>({3, 5, 4, 6}, g);
            const auto st = norm::channel_stats(x, 1e-5);
            const std::size_t plane = x.shape.plane();
            for (int n = 0; n < 3; ++n) {
                for (int c = 0; c < 5; ++c) {
                    double mu, sig;
                    two_pass(x.data() + (static_cast<std::size_t>(n) * 5 + c) * plane, plane,
                             1e-5, &mu, &sig);
                    worst = std::max({worst,
                                      std::fabs(static_cast<double>(st.mu_at(n, c)) - mu),
                                      std::fabs(static_cast<double>(st.sigma_at(n, c)) - sig)});
                }
            }
        }
        out.push_back(le_row("stats", "channel_stats_vs_two_pass", worst, 1e-6,
                             "float-path moments against a 64-bit two-pass oracle"));
    }

    {
        double worst_mu = 0.0, worst_sig = 0.0;
        for (int t = 0; t < 50; ++t) {
            auto x = plane_varied<float>({2, 4, 6, 6}, g);
            auto y = norm::instance_norm(x, 0.0);
            const std::size_t plane = x.shape.plane();
            for (int nc = 0; nc < 8; ++nc) {
                double mu, sig;
                two_pass(y.data() + static_cast<std::size_t>(nc) * plane, plane, 0.0, &mu,
                         &sig);
                worst_mu = std::max(worst_mu, std::fabs(mu));
                worst_sig = std::max(worst_sig, std::fabs(sig - 1.0));
            }
        }
        out.push_back(le_row("stats", "instance_norm_zero_mean", worst_mu, 1e-5,
                             "post-normalization plane means at eps=0"));
        out.push_back(le_row("stats", "instance_norm_unit_std", worst_sig, 1e-4,
                             "post-normalization plane stds at eps=0"));
    }

    {
        norm::PAdaINConfig off;
        off.p = 0.0;
        norm::PAdaINConfig on;
        on.p = 1.0;
        int violations = 0;
        auto x = plane_varied<float>({3, 2, 4, 4}, g);
        for (int t = 0; t < 2000; ++t) {
            RngStream s = RngStream::derive(kSuiteSeed, StreamDomain::kVerify, 31,
                                            static_cast<std::uint64_t>(t));
            auto r0 = norm::padain_forward(x, off, s, true);
            if (r0.applied || r0.y.store != x.store) ++violations;
            RngStream s1 = RngStream::derive(kSuiteSeed, StreamDomain::kVerify, 32,
                                             static_cast<std::uint64_t>(t));
            auto r1 = norm::padain_forward(x, on, s1, true);
            if (!r1.applied) ++violations;
            RngStream s2 = RngStream::derive(kSuiteSeed, StreamDomain::kVerify, 33,
                                             static_cast<std::uint64_t>(t));
            auto r2 = norm::padain_forward(x, on, s2, false);
            if (r2.applied || r2.y.store != x.store) ++violations;
        }
        out.push_back(le_row("stats", "coin_edge_cases", static_cast<double>(violations),
                             0.0, "p=0 and eval mode pass through untouched, p=1 always fires"));
    }

    {
        // Detachment changes lineage only; forward values must be identical
        // across all four backpropagation schemes.
        auto x = plane_varied<float>({4, 3, 5, 5}, g);
        norm::PAdaINConfig cfg;
        cfg.p = 1.0;
        const norm::BackpropScheme schemes[] = {
            norm::BackpropScheme::kOwnOnly, norm::BackpropScheme::kBoth,
            norm::BackpropScheme::kDonorOnly, norm::BackpropScheme::kNeither};
        std::vector<std::vector<float>> outs;
        for (const auto sch : schemes) {
            norm::PAdaINConfig c2 = cfg;
            c2.scheme = sch;
            RngStream s = RngStream::derive(kSuiteSeed, StreamDomain::kVerify, 34);
            outs.push_back(*norm::padain_forward(x, c2, s, true).y.store);
        }
        double diff = 0.0;
        for (std::size_t k = 1; k < outs.size(); ++k) {
            for (std::size_t i = 0; i < outs[k].size(); ++i) {
                diff = std::max(diff, std::fabs(static_cast<double>(outs[k][i]) -
                                                static_cast<double>(outs[0][i])));
            }
        }
        out.push_back(le_row("stats", "forward_invariant_across_schemes", diff, 0.0,
                             "backprop scheme must not change forward values"));
    }

    {
        // Random-stats source: achieved output moments vs the drawn targets.
        const double eps = 1e-7;
        norm::PAdaINConfig cfg;
        cfg.p = 1.0;
        cfg.eps = eps;
        cfg.stats_source = norm::StatsSource::kRandomNormal;
        double worst = 0.0;
        for (int t = 0; t < 20; ++t) {
            auto x = plane_varied<float>({3, 4, 6, 6}, g);
            RngStream s = RngStream::derive(kSuiteSeed, StreamDomain::kVerify, 35,
                                            static_cast<std::uint64_t>(t));
            auto res = norm::padain_forward(x, cfg, s, true);
            const std::size_t plane = x.shape.plane();
            for (int nc = 0; nc < 12; ++nc) {
                double mu, sig;
                two_pass(res.y.data() + static_cast<std::size_t>(nc) * plane, plane, eps,
                         &mu, &sig);
                worst = std::max(
                    {worst,
                     std::fabs(mu - static_cast<double>((*res.mu_donor.store)[
                                        static_cast<std::size_t>(nc)])),
                     std::fabs(sig - static_cast<double>((*res.sigma_donor.store)[
                                         static_cast<std::size_t>(nc)]))});
            }
        }
        out.push_back(le_row("stats", "random_stats_targets_achieved", worst, 1e-4,
                             "output moments match the drawn target moments"));
    }

    {
        // Donor with a different spatial extent still hands over its moments.
        double worst = 0.0;
        for (int t = 0; t < 20; ++t) {
            auto a = plane_varied<float>({2, 3, 6, 6}, g);
            auto b = plane_varied<float>({2, 3, 3, 3}, g);
            auto y = norm::adain(a, b, 1e-7);
            const std::size_t pa = a.shape.plane(), pb = b.shape.plane();
            for (int nc = 0; nc < 6; ++nc) {
                double mu_y, sig_y, mu_b, sig_b;
                two_pass(y.data() + static_cast<std::size_t>(nc) * pa, pa, 1e-7, &mu_y,
                         &sig_y);
                two_pass(b.data() + static_cast<std::size_t>(nc) * pb, pb, 1e-7, &mu_b,
                         &sig_b);
                worst = std::max(
                    {worst, std::fabs(mu_y - mu_b), std::fabs(sig_y - sig_b)});
            }
        }
        out.push_back(le_row("stats", "adain_cross_size_transfer", worst, 1e-5,
                             "3x3 donor restyles a 6x6 content map"));
    }
}

// ===================== bn-interaction suite =====================

// Per-plane renormalization to the donor plane's moments, double precision.
TensorT<double> force_swap(const TensorT<double>& x, const std::vector<int>& pi,
                           double eps) {
    const auto st = norm::channel_stats(x, eps);
    const int N = x.shape.n, C = x.shape.c;
    const std::size_t plane = x.shape.plane();
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
    return y;
}

void bn_suite(std::vector<CheckResult>& out) {
    RngStream g = RngStream::derive(kSuiteSeed, StreamDomain::kVerify, 3);

    {
        double worst_mu = 0.0, worst_sig = 0.0;
        for (int t = 0; t < 100; ++t) {
            const int N = 3 + t % 4;
            const int C = 2 + t % 3;
            const int S = 4 + t % 2;
            auto x = plane_varied<double>({N, C, S, S}, g);
            std::vector<double> gamma(static_cast<std::size_t>(C));
            std::vector<double> beta(static_cast<std::size_t>(C));
            for (int c = 0; c < C; ++c) {
                gamma[static_cast<std::size_t>(c)] = 0.5 + g.next_uniform();
                beta[static_cast<std::size_t>(c)] = -0.5 + g.next_uniform();
            }
            const std::vector<int> pi = g.permutation(N);
            const auto res = norm::verify_bn_interaction(x, pi, gamma, beta, 1e-9);
            worst_mu = std::max(worst_mu, res.max_mu_residual);
            worst_sig = std::max(worst_sig, res.max_sigma_residual);
        }
        if (fault("bn-residual")) worst_mu += 1e-3;
        out.push_back(le_row("bn-interaction", "post_bn_mean_closed_form", worst_mu, 1e-4,
                             "100 random trials, per-sample means after train-mode BN"));
        out.push_back(le_row("bn-interaction", "post_bn_std_closed_form", worst_sig, 1e-4,
                             "100 random trials, per-sample stds after train-mode BN"));
    }

    {
        // The swap permutes the multiset of per-sample moments, so batch-wide
        // moments are unchanged; this is what lets BN's effect be written in
        // terms of the unswapped batch statistics.
        double worst = 0.0;
        for (int t = 0; t < 50; ++t) {
            const int N = 4 + t % 3;
            auto x = plane_varied<double>({N, 3, 5, 5}, g);
            auto y = force_swap(x, g.permutation(N), 1e-12);
            const std::size_t plane = x.shape.plane();
            const double m = static_cast<double>(N) * static_cast<double>(plane);
            for (int c = 0; c < 3; ++c) {
                double sx = 0.0, qx = 0.0, sy = 0.0, qy = 0.0;
                for (int n = 0; n < N; ++n) {
                    const std::size_t off = (static_cast<std::size_t>(n) * 3 + c) * plane;
                    for (std::size_t i = 0; i < plane; ++i) {
                        const double vx = (*x.store)[off + i];
                        const double vy = (*y.store)[off + i];
                        sx += vx;
                        qx += vx * vx;
                        sy += vy;
                        qy += vy * vy;
                    }
                }
                const double mux = sx / m, muy = sy / m;
                const double vax = qx / m - mux * mux, vay = qy / m - muy * muy;
                worst = std::max({worst, std::fabs(mux - muy), std::fabs(vax - vay)});
            }
        }
        out.push_back(le_row("bn-interaction", "batch_moments_swap_invariant", worst, 1e-8,
                             "batch mean and variance unchanged by the swap"));
    }

    {
        // Same closed form, but through the actual training BN op.
        double worst = 0.0;
        for (int t = 0; t < 20; ++t) {
            const int N = 4, C = 3;
            auto x = plane_varied<double>({N, C, 5, 5}, g);
            auto gamma = urand<double>({1, C, 1, 1}, g, 0.5, 1.5);
            auto beta = urand<double>({1, C, 1, 1}, g, -0.5, 0.5);
            const std::vector<int> pi = g.permutation(N);
            const double eps = 1e-9;
            auto y = force_swap(x, pi, eps);
            auto bn = ops::batch_norm_train(y, gamma, beta, eps);
            const auto st_x = norm::channel_stats(x, eps);
            const auto st_z = norm::channel_stats(bn.y, 0.0);
            const std::size_t plane = x.shape.plane();
            const double m = static_cast<double>(N) * static_cast<double>(plane);
            for (int c = 0; c < C; ++c) {
                double s = 0.0, q = 0.0;
                for (int n = 0; n < N; ++n) {
                    const std::size_t off = (static_cast<std::size_t>(n) * C + c) * plane;
                    for (std::size_t i = 0; i < plane; ++i) {
                        s += (*x.store)[off + i];
                        q += (*x.store)[off + i] * (*x.store)[off + i];
                    }
                }
                const double mu_b = s / m;
                const double sig_b = std::sqrt(std::max(q / m - mu_b * mu_b, 0.0) + eps);
                const double gc = (*gamma.store)[static_cast<std::size_t>(c)];
                const double bc = (*beta.store)[static_cast<std::size_t>(c)];
                for (int n = 0; n < N; ++n) {
                    const int d = pi[static_cast<std::size_t>(n)];
                    const double mu_hat = gc * (st_x.mu_at(d, c) - mu_b) / sig_b + bc;
                    const double raw = std::sqrt(std::max(
                        st_x.sigma_at(d, c) * st_x.sigma_at(d, c) - eps, 0.0));
                    const double sig_hat = gc * raw / sig_b;
                    worst = std::max({worst, std::fabs(st_z.mu_at(n, c) - mu_hat),
                                      std::fabs(st_z.sigma_at(n, c) - sig_hat)});
                }
            }
        }
        out.push_back(le_row("bn-interaction", "bn_train_op_closed_form", worst, 1e-4,
                             "library BN op output moments vs the closed form"));
    }
}

// ===================== perm suite =====================

void perm_suite(std::vector<CheckResult>& out) {
    {
        // Application frequency of the layer itself at p=0.05.
        norm::PAdaINConfig cfg;
        cfg.p = 0.05;
        auto x = make_tensor<float>(Shape4{2, 1, 2, 2}, 1.0f);
        (*x.store)[0] = 2.0f;
        int applied = 0;
        const int trials = 20000;
        for (int t = 0; t < trials; ++t) {
            RngStream s = RngStream::derive(kSuiteSeed, StreamDomain::kVerify, 40,
                                            static_cast<std::uint64_t>(t));
            if (norm::padain_forward(x, cfg, s, true).applied) ++applied;
        }
        const double rate = static_cast<double>(applied) / trials;
        const double sigma3 = 3.0 * std::sqrt(0.05 * 0.95 / trials);
        out.push_back(le_row("perm", "coin_rate_3sigma", std::fabs(rate - 0.05), sigma3,
                             "application rate over 20000 draws at p=0.05"));
    }

    {
        // Frequency test over all n! permutations, one row per batch size.
        struct Case {
            int n;
            int draws;
        };
        const Case cases[] = {{2, 4000}, {3, 6000}, {4, 12000}};
        for (const Case& cs : cases) {
            double fact = 1.0;
            for (int k = 2; k <= cs.n; ++k) fact *= k;
            std::map<std::vector<int>, int> counts;
            RngStream s = RngStream::derive(kSuiteSeed, StreamDomain::kVerify, 41,
                                            static_cast<std::uint64_t>(cs.n));
            for (int t = 0; t < cs.draws; ++t) ++counts[s.permutation(cs.n)];
            const double expected = cs.draws / fact;
            double worst = expected;  // a never-seen cell counts as full deviation
            if (static_cast<double>(counts.size()) == fact) {
                worst = 0.0;
                for (const auto& [pi, cnt] : counts) {
                    worst = std::max(worst, std::fabs(cnt - expected));
                }
            }
            const double sigma3 =
                3.0 * std::sqrt(cs.draws * (1.0 / fact) * (1.0 - 1.0 / fact));
            if (cs.n == 4 && fault("perm-bias")) worst += 1000.0;
            out.push_back(le_row("perm", "uniformity_3sigma_n" + std::to_string(cs.n),
                                 worst, sigma3,
                                 std::to_string(cs.draws) + " draws over " +
                                     std::to_string(static_cast<int>(fact)) + " cells"));
        }
    }

    {
        // Fixed-permutation policy: one permutation per batch size for the
        // whole run, regardless of which site or step asks.
        norm::PAdaINConfig cfg;
        cfg.p = 1.0;
        cfg.perm_policy = norm::PermPolicy::kFixedPerRun;
        cfg.fixed_perm_seed = 99;
        RngStream xg = RngStream::derive(kSuiteSeed, StreamDomain::kVerify, 42);
        auto x = plane_varied<float>({6, 2, 3, 3}, xg);
        const std::vector<int> expected =
            RngStream::derive(99, StreamDomain::kFixedPerm, 6).permutation(6);
        int mismatches = 0;
        for (int site = 0; site < 5; ++site) {
            for (int step = 0; step < 10; ++step) {
                RngStream s = RngStream::derive(kSuiteSeed, StreamDomain::kVerify, 43,
                                                static_cast<std::uint64_t>(site * 100 + step));
                auto res = norm::padain_forward(x, cfg, s, true);
                if (res.pi != expected) ++mismatches;
            }
        }
        out.push_back(le_row("perm", "fixed_policy_single_permutation",
                             static_cast<double>(mismatches), 0.0,
                             "same permutation across 5 sites and 10 steps"));

        norm::PAdaINConfig re = cfg;
        re.perm_policy = norm::PermPolicy::kResample;
        std::map<std::vector<int>, int> distinct;
        for (int t = 0; t < 50; ++t) {
            RngStream s = RngStream::derive(kSuiteSeed, StreamDomain::kVerify, 44,
                                            static_cast<std::uint64_t>(t));
            ++distinct[norm::padain_forward(x, re, s, true).pi];
        }
        out.push_back(ge_row("perm", "resample_policy_varies",
                             static_cast<double>(distinct.size()), 10.0,
                             "distinct permutations across 50 resampled applications"));
    }

    {
        // Keyed substreams: consuming one stream never shifts another, and
        // different keys give different sequences.
        RngStream burn = RngStream::derive(kSuiteSeed, StreamDomain::kPadainCoin, 3, 7);
        RngStream a0 = RngStream::derive(kSuiteSeed, StreamDomain::kShuffle, 5);
        std::vector<std::uint64_t> before(64);
        for (auto& v : before) v = a0.next_u64();
        for (int i = 0; i < 1000; ++i) (void)burn.next_u64();
        RngStream a1 = RngStream::derive(kSuiteSeed, StreamDomain::kShuffle, 5);
        int mismatches = 0;
        for (const auto& v : before) {
            if (a1.next_u64() != v) ++mismatches;
        }
        out.push_back(le_row("perm", "stream_isolation", static_cast<double>(mismatches),
                             0.0, "shuffle stream identical before and after 1000 coin draws"));

        RngStream k1 = RngStream::derive(kSuiteSeed, StreamDomain::kPadainCoin, 1, 0);
        RngStream k2 = RngStream::derive(kSuiteSeed, StreamDomain::kPadainCoin, 2, 0);
        int equal = 0;
        for (int i = 0; i < 8; ++i) {
            if (k1.next_u64() == k2.next_u64()) ++equal;
        }
        out.push_back(le_row("perm", "derived_streams_differ", static_cast<double>(equal),
                             0.0, "neighboring keys give unrelated draws"));
    }
}

}  // namespace

std::vector<CheckResult> run_suite(const std::string& suite) {
    std::vector<CheckResult> rows;
    if (suite == "grad") {
        grad_suite(rows);
    } else if (suite == "stats") {
        stats_suite(rows);
    } else if (suite == "bn-interaction") {
        bn_suite(rows);
    } else if (suite == "perm") {
        perm_suite(rows);
    } else if (suite == "all") {
        grad_suite(rows);
        stats_suite(rows);
        bn_suite(rows);
        perm_suite(rows);
    } else {
        throw UsageError("unknown verify suite '" + suite +
                         "' (expected grad, stats, bn-interaction, perm, all)");
    }
    return rows;
}

bool all_pass(const std::vector<CheckResult>& rows) {
    for (const CheckResult& r : rows) {
        if (!r.pass) return false;
    }
    return true;
}

void print_report(const std::vector<CheckResult>& rows, std::ostream& os) {
    int failed = 0;
    for (const CheckResult& r : rows) {
        std::ostringstream line;
        line << (r.pass ? "[PASS] " : "[FAIL] ") << r.suite << "/" << r.name;
        std::string head = line.str();
        if (head.size() < 52) head.resize(52, ' ');
        os << head << " measured=" << r.measured << (r.at_most ? " <= " : " >= ")
           << r.threshold;
        if (!r.detail.empty()) os << "  (" << r.detail << ")";
        os << "\n";
        if (!r.pass) ++failed;
    }
    os << rows.size() << " checks, " << (rows.size() - static_cast<std::size_t>(failed))
       << " passed, " << failed << " failed\n";
}

}  // namespace padain::verify
