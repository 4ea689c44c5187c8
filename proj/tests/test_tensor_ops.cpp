#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "padain/gradcheck.hpp"
#include "padain/ops.hpp"
#include "padain/rng.hpp"
#include "padain/shape.hpp"
#include "padain/tensor.hpp"

using padain::gradient_check;
using padain::RngStream;
using padain::Shape4;
using padain::StreamDomain;
using padain::Tape;
using padain::TensorT;
namespace ops = padain::ops;

namespace {

template <typename T>
TensorT<T> rand_tensor(Shape4 s, RngStream& r, double lo = -1.0, double hi = 1.0) {
    TensorT<T> t = padain::make_tensor<T>(s);
    for (auto& v : *t.store) {
        v = static_cast<T>(lo + (hi - lo) * r.next_uniform());
    }
    return t;
}

// Values bounded away from 0 so relu kinks and divisions stay out of finite
// difference windows.
template <typename T>
TensorT<T> rand_signed(Shape4 s, RngStream& r, double margin = 0.1) {
    TensorT<T> t = padain::make_tensor<T>(s);
    for (auto& v : *t.store) {
        const double mag = margin + (1.0 - margin) * r.next_uniform();
        v = static_cast<T>(r.next_bernoulli(0.5) ? mag : -mag);
    }
    return t;
}

// Independent 7-loop convolution oracle, double precision, NCHW and
// (OutC, InC, kH, kW) weights.
TensorT<double> conv_oracle(const TensorT<double>& x, const TensorT<double>& w,
                            const TensorT<double>& b, int stride, int pad) {
    const int N = x.shape.n, C = x.shape.c, H = x.shape.h, W = x.shape.w;
    const int OC = w.shape.n, kH = w.shape.h, kW = w.shape.w;
    const int OH = (H + 2 * pad - kH) / stride + 1;
    const int OW = (W + 2 * pad - kW) / stride + 1;
    TensorT<double> y = padain::make_tensor<double>({N, OC, OH, OW});
    for (int n = 0; n < N; ++n) {
        for (int oc = 0; oc < OC; ++oc) {
            for (int oh = 0; oh < OH; ++oh) {
                for (int ow = 0; ow < OW; ++ow) {
                    double acc = b.at(0, oc, 0, 0);
                    for (int c = 0; c < C; ++c) {
                        for (int r = 0; r < kH; ++r) {
                            for (int s = 0; s < kW; ++s) {
                                const int ih = oh * stride - pad + r;
                                const int iw = ow * stride - pad + s;
                                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                                acc += x.at(n, c, ih, iw) * w.at(oc, c, r, s);
                            }
                        }
                    }
                    y.at(n, oc, oh, ow) = acc;
                }
            }
        }
    }
    return y;
}

// Transposed convolution oracle by scattering: the adjoint of conv_oracle
// with (InC, OutC, kH, kW) weights.
TensorT<double> convt_oracle(const TensorT<double>& x, const TensorT<double>& w,
                             const TensorT<double>& b, int stride, int pad,
                             int out_pad) {
    const int N = x.shape.n, C = x.shape.c, H = x.shape.h, W = x.shape.w;
    const int OC = w.shape.c, kH = w.shape.h, kW = w.shape.w;
    const int OH = (H - 1) * stride - 2 * pad + kH + out_pad;
    const int OW = (W - 1) * stride - 2 * pad + kW + out_pad;
    TensorT<double> y = padain::make_tensor<double>({N, OC, OH, OW});
    for (int n = 0; n < N; ++n) {
        for (int oc = 0; oc < OC; ++oc) {
            for (int oh = 0; oh < OH; ++oh) {
                for (int ow = 0; ow < OW; ++ow) y.at(n, oc, oh, ow) = b.at(0, oc, 0, 0);
            }
        }
        for (int c = 0; c < C; ++c) {
            for (int ih = 0; ih < H; ++ih) {
                for (int iw = 0; iw < W; ++iw) {
                    for (int oc = 0; oc < OC; ++oc) {
                        for (int r = 0; r < kH; ++r) {
                            for (int s = 0; s < kW; ++s) {
                                const int oh = ih * stride - pad + r;
                                const int ow = iw * stride - pad + s;
                                if (oh < 0 || oh >= OH || ow < 0 || ow >= OW) continue;
                                y.at(n, oc, oh, ow) +=
                                    x.at(n, c, ih, iw) * w.at(c, oc, r, s);
                            }
                        }
                    }
                }
            }
        }
    }
    return y;
}

double max_abs_diff(const TensorT<float>& a, const TensorT<double>& b) {
    REQUIRE(a.shape == b.shape);
    double worst = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        worst = std::max(worst, std::fabs(static_cast<double>((*a.store)[i]) -
                                          (*b.store)[i]));
    }
    return worst;
}

TensorT<double> widen(const TensorT<float>& x) {
    TensorT<double> y = padain::make_tensor<double>(x.shape);
    for (std::size_t i = 0; i < x.numel(); ++i) {
        (*y.store)[i] = static_cast<double>((*x.store)[i]);
    }
    return y;
}

// Fixed-coefficient probe so every output element influences the loss with a
// distinct weight; catches transposed or misrouted gradients.
template <typename T>
TensorT<T> probe(const TensorT<T>& y) {
    TensorT<T> mask = padain::make_tensor<T>(y.shape);
    for (std::size_t i = 0; i < mask.numel(); ++i) {
        (*mask.store)[i] = static_cast<T>(0.3 + 0.05 * static_cast<double>(i % 17));
    }
    return ops::sum_all(ops::mul(y, mask));
}

}  // namespace

TEST_CASE("conv2d forward matches the 7-loop oracle") {
    RngStream r = RngStream::derive(11, StreamDomain::kVerify, 1);
    for (const auto& [stride, pad] : {std::pair{1, 0}, {1, 1}, {2, 1}, {2, 0}}) {
        const TensorT<float> x = rand_tensor<float>({2, 3, 7, 6}, r);
        const TensorT<float> w = rand_tensor<float>({4, 3, 3, 3}, r);
        const TensorT<float> b = rand_tensor<float>({1, 4, 1, 1}, r);
        const TensorT<float> y = ops::conv2d(x, w, b, stride, pad);
        const TensorT<double> ref =
            conv_oracle(widen(x), widen(w), widen(b), stride, pad);
        CHECK(max_abs_diff(y, ref) < 1e-5);
    }
    // 1x1 kernel degenerate case.
    const TensorT<float> x = rand_tensor<float>({1, 2, 4, 4}, r);
    const TensorT<float> w = rand_tensor<float>({3, 2, 1, 1}, r);
    const TensorT<float> b = rand_tensor<float>({1, 3, 1, 1}, r);
    CHECK(max_abs_diff(ops::conv2d(x, w, b, 1, 0),
                       conv_oracle(widen(x), widen(w), widen(b), 1, 0)) < 1e-5);
}

TEST_CASE("conv2d rejects inconsistent shapes") {
    RngStream r = RngStream::derive(11, StreamDomain::kVerify, 2);
    const TensorT<float> x = rand_tensor<float>({1, 3, 5, 5}, r);
    const TensorT<float> w = rand_tensor<float>({4, 2, 3, 3}, r);  // wrong InC
    const TensorT<float> b = rand_tensor<float>({1, 4, 1, 1}, r);
    CHECK_THROWS_AS((void)ops::conv2d(x, w, b, 1, 1), padain::DimError);
    const TensorT<float> w2 = rand_tensor<float>({4, 3, 9, 9}, r);  // kernel too big
    const TensorT<float> b2 = rand_tensor<float>({1, 4, 1, 1}, r);
    CHECK_THROWS_AS((void)ops::conv2d(x, w2, b2, 1, 1), padain::DimError);
}

TEST_CASE("conv_transpose2d forward matches the scatter oracle") {
    RngStream r = RngStream::derive(11, StreamDomain::kVerify, 3);
    for (const auto& [stride, pad, out_pad] :
         {std::tuple{1, 1, 0}, {2, 1, 1}, {2, 0, 0}}) {
        const TensorT<float> x = rand_tensor<float>({2, 3, 5, 4}, r);
        const TensorT<float> w = rand_tensor<float>({3, 2, 3, 3}, r);
        const TensorT<float> b = rand_tensor<float>({1, 2, 1, 1}, r);
        const TensorT<float> y = ops::conv_transpose2d(x, w, b, stride, pad, out_pad);
        const TensorT<double> ref =
            convt_oracle(widen(x), widen(w), widen(b), stride, pad, out_pad);
        CHECK(max_abs_diff(y, ref) < 1e-5);
    }
}

TEST_CASE("linear matches a direct product") {
    RngStream r = RngStream::derive(11, StreamDomain::kVerify, 4);
    const TensorT<float> x = rand_tensor<float>({3, 5, 1, 1}, r);
    const TensorT<float> w = rand_tensor<float>({4, 5, 1, 1}, r);
    const TensorT<float> b = rand_tensor<float>({1, 4, 1, 1}, r);
    const TensorT<float> y = ops::linear(x, w, b);
    REQUIRE(y.shape == Shape4{3, 4, 1, 1});
    for (int n = 0; n < 3; ++n) {
        for (int o = 0; o < 4; ++o) {
            double acc = b.at(0, o, 0, 0);
            for (int i = 0; i < 5; ++i) {
                acc += static_cast<double>(x.at(n, i, 0, 0)) * w.at(o, i, 0, 0);
            }
            CHECK(std::fabs(y.at(n, o, 0, 0) - acc) < 1e-5);
        }
    }
}

TEST_CASE("max_pool2d picks plane maxima") {
    TensorT<float> x = padain::make_tensor<float>({1, 1, 4, 4});
    for (int i = 0; i < 16; ++i) (*x.store)[static_cast<std::size_t>(i)] = i * 0.125f;
    const TensorT<float> y = ops::max_pool2d(x, 2, 2);
    REQUIRE(y.shape == Shape4{1, 1, 2, 2});
    CHECK(y.at(0, 0, 0, 0) == x.at(0, 0, 1, 1));
    CHECK(y.at(0, 0, 1, 1) == x.at(0, 0, 3, 3));
}

TEST_CASE("reshape and flatten alias the same storage") {
    RngStream r = RngStream::derive(11, StreamDomain::kVerify, 5);
    const TensorT<float> x = rand_tensor<float>({2, 3, 2, 2}, r);
    const TensorT<float> f = ops::flatten(x);
    CHECK(f.shape == Shape4{2, 12, 1, 1});
    CHECK(f.store == x.store);
    const TensorT<float> back = ops::reshape(f, {2, 3, 2, 2});
    CHECK(back.store == x.store);
    CHECK_THROWS_AS((void)ops::reshape(x, Shape4{2, 3, 2, 3}), padain::DimError);
}

TEST_CASE("batch_permute validates and reorders samples") {
    RngStream r = RngStream::derive(11, StreamDomain::kVerify, 6);
    const TensorT<float> x = rand_tensor<float>({3, 2, 2, 2}, r);
    const TensorT<float> y = ops::batch_permute(x, {2, 0, 1});
    for (int c = 0; c < 2; ++c) {
        CHECK(y.at(0, c, 1, 1) == x.at(2, c, 1, 1));
        CHECK(y.at(1, c, 0, 1) == x.at(0, c, 0, 1));
        CHECK(y.at(2, c, 1, 0) == x.at(1, c, 1, 0));
    }
    CHECK_THROWS_AS((void)ops::batch_permute(x, {0, 1}), padain::InputError);
    CHECK_THROWS_AS((void)ops::batch_permute(x, {0, 0, 1}), padain::InputError);
}

TEST_CASE("softmax_cross_entropy matches a log-sum-exp evaluation") {
    const TensorT<double> z = padain::make_tensor<double>(
        {2, 3, 1, 1}, std::vector<double>{1.0, 2.0, -0.5, 0.0, 0.25, 4.0});
    const std::vector<int> y{1, 2};
    const TensorT<double> loss = ops::softmax_cross_entropy(z, y);
    double expect = 0.0;
    for (int n = 0; n < 2; ++n) {
        double m = -1e300, lse = 0.0;
        for (int c = 0; c < 3; ++c) m = std::max(m, z.at(n, c, 0, 0));
        for (int c = 0; c < 3; ++c) lse += std::exp(z.at(n, c, 0, 0) - m);
        expect += m + std::log(lse) - z.at(n, y[static_cast<std::size_t>(n)], 0, 0);
    }
    expect /= 2.0;
    CHECK(std::fabs((*loss.store)[0] - expect) < 1e-12);
    CHECK_THROWS_AS((void)ops::softmax_cross_entropy(z, std::vector<int>{1}),
                    padain::InputError);
    CHECK_THROWS_AS((void)ops::softmax_cross_entropy(z, std::vector<int>{1, 3}),
                    padain::InputError);
}

TEST_CASE("elementwise and broadcast gradients pass finite differences") {
    RngStream r = RngStream::derive(11, StreamDomain::kVerify, 7);
    const TensorT<double> a = rand_signed<double>({2, 3, 3, 2}, r, 0.5);
    const TensorT<double> b = rand_signed<double>({2, 3, 3, 2}, r, 0.5);
    const TensorT<double> s = rand_signed<double>({2, 3, 1, 1}, r, 0.5);
    const TensorT<double> c1 = rand_signed<double>({1, 3, 1, 1}, r, 0.5);

    const auto check2 = [&](auto fn, const TensorT<double>& u, const TensorT<double>& v) {
        const auto res = gradient_check(
            [&](Tape<double>&, std::vector<TensorT<double>>& p) {
                return probe(fn(p[0], p[1]));
            },
            {u, v});
        CHECK(res.pass);
    };
    check2([](auto& u, auto& v) { return ops::add(u, v); }, a, b);
    check2([](auto& u, auto& v) { return ops::sub(u, v); }, a, b);
    check2([](auto& u, auto& v) { return ops::mul(u, v); }, a, b);
    check2([](auto& u, auto& v) { return ops::div_el(u, v); }, a, b);
    check2([](auto& u, auto& v) { return ops::add_nc(u, v); }, a, s);
    check2([](auto& u, auto& v) { return ops::sub_nc(u, v); }, a, s);
    check2([](auto& u, auto& v) { return ops::mul_nc(u, v); }, a, s);
    check2([](auto& u, auto& v) { return ops::div_nc(u, v); }, a, s);
    check2([](auto& u, auto& v) { return ops::mul_nc(u, v); }, a, c1);

    const auto res1 = gradient_check(
        [&](Tape<double>&, std::vector<TensorT<double>>& p) {
            return probe(ops::sqrt_el(ops::add_scalar(ops::square(p[0]), 0.5)));
        },
        {a});
    CHECK(res1.pass);
    const auto res2 = gradient_check(
        [&](Tape<double>&, std::vector<TensorT<double>>& p) {
            return ops::mean_all(ops::mul_scalar(ops::square(p[0]), 1.7));
        },
        {a});
    CHECK(res2.pass);
}

TEST_CASE("structural op gradients pass finite differences") {
    RngStream r = RngStream::derive(11, StreamDomain::kVerify, 8);
    const TensorT<double> x = rand_signed<double>({2, 2, 4, 4}, r, 0.15);

    const auto conv = gradient_check(
        [&](Tape<double>&, std::vector<TensorT<double>>& p) {
            return probe(ops::conv2d(p[0], p[1], p[2], 2, 1));
        },
        {x, rand_tensor<double>({3, 2, 3, 3}, r), rand_tensor<double>({1, 3, 1, 1}, r)});
    CHECK(conv.pass);

    const auto convt = gradient_check(
        [&](Tape<double>&, std::vector<TensorT<double>>& p) {
            return probe(ops::conv_transpose2d(p[0], p[1], p[2], 2, 1, 1));
        },
        {x, rand_tensor<double>({2, 3, 3, 3}, r), rand_tensor<double>({1, 3, 1, 1}, r)});
    CHECK(convt.pass);

    const auto lin = gradient_check(
        [&](Tape<double>&, std::vector<TensorT<double>>& p) {
            return probe(ops::linear(ops::flatten(p[0]), p[1], p[2]));
        },
        {x, rand_tensor<double>({3, 32, 1, 1}, r), rand_tensor<double>({1, 3, 1, 1}, r)});
    CHECK(lin.pass);

    const auto rl = gradient_check(
        [&](Tape<double>&, std::vector<TensorT<double>>& p) {
            return probe(ops::relu(p[0]));
        },
        {rand_signed<double>({2, 3, 4, 4}, r, 0.1)});
    CHECK(rl.pass);

    // Strictly separated values keep the pool argmax stable under fd steps.
    TensorT<double> gapped = padain::make_tensor<double>({1, 2, 4, 4});
    std::vector<int> order(32);
    for (int i = 0; i < 32; ++i) order[static_cast<std::size_t>(i)] = i;
    for (int i = 31; i > 0; --i) {
        std::swap(order[static_cast<std::size_t>(i)],
                  order[static_cast<std::size_t>(r.next_below(
                      static_cast<std::uint64_t>(i) + 1))]);
    }
    for (int i = 0; i < 32; ++i) {
        (*gapped.store)[static_cast<std::size_t>(i)] =
            -0.16 + 0.01 * order[static_cast<std::size_t>(i)];
    }
    const auto mp = gradient_check(
        [&](Tape<double>&, std::vector<TensorT<double>>& p) {
            return probe(ops::max_pool2d(p[0], 2, 2));
        },
        {gapped});
    CHECK(mp.pass);

    const auto sm = gradient_check(
        [&](Tape<double>&, std::vector<TensorT<double>>& p) {
            const TensorT<double> mu = ops::spatial_mean(p[0]);
            return probe(ops::spatial_std(p[0], mu, 1e-3));
        },
        {rand_tensor<double>({2, 3, 4, 4}, r)});
    CHECK(sm.pass);

    const auto bp = gradient_check(
        [&](Tape<double>&, std::vector<TensorT<double>>& p) {
            return probe(ops::batch_permute(p[0], {1, 2, 0}));
        },
        {rand_tensor<double>({3, 2, 3, 3}, r)});
    CHECK(bp.pass);

    const auto xent = gradient_check(
        [&](Tape<double>&, std::vector<TensorT<double>>& p) {
            return ops::softmax_cross_entropy(p[0], {0, 2, 1});
        },
        {rand_tensor<double>({3, 4, 1, 1}, r, -2.0, 2.0)});
    CHECK(xent.pass);

    const auto bn = gradient_check(
        [&](Tape<double>&, std::vector<TensorT<double>>& p) {
            return probe(ops::batch_norm_train(p[0], p[1], p[2], 1e-5).y);
        },
        {rand_tensor<double>({3, 2, 3, 3}, r), rand_tensor<double>({1, 2, 1, 1}, r, 0.5, 1.5),
         rand_tensor<double>({1, 2, 1, 1}, r, -0.3, 0.3)});
    CHECK(bn.pass);
}

TEST_CASE("detach blocks gradient flow and keeps values") {
    RngStream r = RngStream::derive(11, StreamDomain::kVerify, 9);
    const TensorT<double> x0 = rand_signed<double>({2, 2, 2, 2}, r, 0.4);
    Tape<double> tape;
    TensorT<double> x = tape.leaf(x0);
    const TensorT<double> d = ops::detach(x);
    for (std::size_t i = 0; i < d.numel(); ++i) CHECK((*d.store)[i] == (*x.store)[i]);
    // y = x * detach(x): gradient must be exactly detach(x), not 2x.
    const TensorT<double> loss = ops::sum_all(ops::mul(x, d));
    tape.backward(loss);
    const std::vector<double>* g = x.grad();
    REQUIRE(g != nullptr);
    for (std::size_t i = 0; i < g->size(); ++i) CHECK((*g)[i] == (*x.store)[i]);
}

TEST_CASE("batch_norm_train reports population batch moments") {
    RngStream r = RngStream::derive(11, StreamDomain::kVerify, 10);
    const TensorT<double> x = rand_tensor<double>({4, 3, 5, 5}, r);
    const TensorT<double> gamma = padain::make_tensor<double>({1, 3, 1, 1}, 1.0);
    const TensorT<double> beta = padain::make_tensor<double>({1, 3, 1, 1}, 0.0);
    const auto res = ops::batch_norm_train(x, gamma, beta, 1e-5);
    for (int c = 0; c < 3; ++c) {
        double sum = 0.0, sumsq = 0.0;
        int count = 0;
        for (int n = 0; n < 4; ++n) {
            for (int h = 0; h < 5; ++h) {
                for (int w = 0; w < 5; ++w) {
                    sum += x.at(n, c, h, w);
                    sumsq += x.at(n, c, h, w) * x.at(n, c, h, w);
                    ++count;
                }
            }
        }
        const double mu = sum / count;
        const double var = sumsq / count - mu * mu;
        CHECK(std::fabs(res.mu[static_cast<std::size_t>(c)] - mu) < 1e-12);
        CHECK(std::fabs(res.var[static_cast<std::size_t>(c)] - var) < 1e-12);
    }
    // Normalized output has zero mean and unit variance per channel.
    for (int c = 0; c < 3; ++c) {
        double sum = 0.0, sumsq = 0.0;
        for (int n = 0; n < 4; ++n) {
            for (int h = 0; h < 5; ++h) {
                for (int w = 0; w < 5; ++w) {
                    sum += res.y.at(n, c, h, w);
                    sumsq += res.y.at(n, c, h, w) * res.y.at(n, c, h, w);
                }
            }
        }
        CHECK(std::fabs(sum / 100.0) < 1e-12);
        CHECK(std::fabs(sumsq / 100.0 - 1.0) < 1e-4);
    }
}
