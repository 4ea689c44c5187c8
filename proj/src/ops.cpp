#include "padain/ops.hpp"

#include <cmath>
#include <cstring>
#include <memory>

#include "padain/kernels.hpp"

namespace padain::ops {

namespace {

// ===================== recording helpers =====================

template <typename T>
Tape<T>* common_tape(std::initializer_list<const TensorT<T>*> inputs) {
    Tape<T>* tape = nullptr;
    for (const TensorT<T>* in : inputs) {
        if (!in->attached()) continue;
        if (tape != nullptr && tape != in->tape) {
            throw UsageError("op inputs are recorded on different tapes");
        }
        tape = in->tape;
    }
    return tape;
}

template <typename T>
TensorT<T> record(Shape4 shape, std::shared_ptr<std::vector<T>> store,
                  std::initializer_list<const TensorT<T>*> inputs,
                  typename Tape<T>::BackwardFn bw) {
    Tape<T>* tape = common_tape<T>(inputs);
    if (tape == nullptr) return TensorT<T>(shape, std::move(store));
    const int id = tape->add_node(shape, store, std::move(bw));
    return TensorT<T>(shape, std::move(store), tape, id);
}

template <typename T>
std::shared_ptr<std::vector<T>> alloc(Shape4 s, T fill = T(0)) {
    return std::make_shared<std::vector<T>>(s.numel(), fill);
}

// ===================== im2col =====================

// col is (C*kh*kw) x (OH*OW); row index r = (c*kh + ky)*kw + kx.
template <typename T>
void im2col(const T* x, int C, int H, int W, int kh, int kw, int stride, int pad,
            int OH, int OW, T* col) {
    const std::size_t npix = static_cast<std::size_t>(OH) * OW;
    std::size_t r = 0;
    for (int c = 0; c < C; ++c) {
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx, ++r) {
                T* crow = col + r * npix;
                for (int oy = 0; oy < OH; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= H) {
                        for (int ox = 0; ox < OW; ++ox) crow[oy * OW + ox] = T(0);
                        continue;
                    }
                    const T* xrow = x + (static_cast<std::size_t>(c) * H + iy) * W;
                    for (int ox = 0; ox < OW; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        crow[oy * OW + ox] = (ix >= 0 && ix < W) ? xrow[ix] : T(0);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* col, int C, int H, int W, int kh, int kw, int stride, int pad,
                int OH, int OW, T* x) {
    const std::size_t npix = static_cast<std::size_t>(OH) * OW;
    std::size_t r = 0;
    for (int c = 0; c < C; ++c) {
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx, ++r) {
                const T* crow = col + r * npix;
                for (int oy = 0; oy < OH; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= H) continue;
                    T* xrow = x + (static_cast<std::size_t>(c) * H + iy) * W;
                    for (int ox = 0; ox < OW; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < W) xrow[ix] += crow[oy * OW + ox];
                    }
                }
            }
        }
    }
}

int conv_out_dim(int in, int k, int stride, int pad, const char* op) {
    const int out = (in + 2 * pad - k) / stride + 1;
    if (in + 2 * pad < k || out < 1) {
        throw DimError(std::string(op) + ": kernel " + std::to_string(k) +
                       " with pad " + std::to_string(pad) + " exceeds input extent " +
                       std::to_string(in));
    }
    return out;
}

void check_stride_pad(int stride, int pad, const char* op) {
    if (stride < 1) throw InputError(std::string(op) + ": stride must be >= 1");
    if (pad < 0) throw InputError(std::string(op) + ": pad must be >= 0");
}

template <typename T>
void check_bias(const TensorT<T>& b, int oc, const char* op) {
    if (!(b.shape == Shape4{1, oc, 1, 1})) {
        throw DimError(std::string(op) + ": bias shape " + to_string(b.shape) +
                       ", expected (1, " + std::to_string(oc) + ", 1, 1)");
    }
}

// s is (N, C, 1, 1) or (1, C, 1, 1) against x of (N, C, H, W).
template <typename T>
void check_nc(const TensorT<T>& x, const TensorT<T>& s, const char* op) {
    if (s.shape.h != 1 || s.shape.w != 1 || s.shape.c != x.shape.c ||
        (s.shape.n != 1 && s.shape.n != x.shape.n)) {
        throw DimError(std::string(op) + ": stats shape " + to_string(s.shape) +
                       " does not broadcast over " + to_string(x.shape));
    }
}

inline std::size_t nc_index(const Shape4& s, int n, int c) {
    return static_cast<std::size_t>(s.n == 1 ? c : n * s.c + c);
}

}  // namespace

// ===================== convolution =====================

template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                  int stride, int pad) {
    check_stride_pad(stride, pad, "conv2d");
    if (w.shape.c != x.shape.c) {
        throw DimError("conv2d: weight expects " + std::to_string(w.shape.c) +
                       " input channels, input has " + std::to_string(x.shape.c));
    }
    const int N = x.shape.n, IC = x.shape.c, H = x.shape.h, W = x.shape.w;
    const int OC = w.shape.n, kh = w.shape.h, kw = w.shape.w;
    check_bias(b, OC, "conv2d");
    const int OH = conv_out_dim(H, kh, stride, pad, "conv2d");
    const int OW = conv_out_dim(W, kw, stride, pad, "conv2d");
    const Shape4 oshape{N, OC, OH, OW};
    const int kcol = IC * kh * kw;
    const std::size_t npix = static_cast<std::size_t>(OH) * OW;

    auto out = alloc<T>(oshape);
    const bool unit = (kh == 1 && kw == 1 && stride == 1 && pad == 0);
    std::vector<T> col(unit ? 0 : static_cast<std::size_t>(kcol) * npix);
    for (int n = 0; n < N; ++n) {
        const T* xn = x.data() + static_cast<std::size_t>(n) * IC * H * W;
        T* on = out->data() + static_cast<std::size_t>(n) * OC * npix;
        // 1x1 stride-1 convolutions skip the im2col copy: x is already the
        // (IC x npix) matrix.
        const T* mat = unit ? xn : col.data();
        if (!unit) im2col(xn, IC, H, W, kh, kw, stride, pad, OH, OW, col.data());
        kernels::gemm_nn<T>(OC, kcol, static_cast<int>(npix), w.data(), mat, on, false);
        for (int oc = 0; oc < OC; ++oc) {
            const T bias = (*b.store)[static_cast<std::size_t>(oc)];
            T* row = on + static_cast<std::size_t>(oc) * npix;
            for (std::size_t i = 0; i < npix; ++i) row[i] += bias;
        }
    }

    const int xa = x.node, wa = w.node, ba = b.node;
    auto bw = [x, w, b, xa, wa, ba, stride, pad, N, IC, H, W, OC, kh, kw, OH, OW, kcol,
               npix, unit](Tape<T>& tp, int self) {
        const std::vector<T>& gout = tp.grad_buf(self);
        std::vector<T> col(unit ? 0 : static_cast<std::size_t>(kcol) * npix);
        std::vector<T> dcol(xa >= 0 && !unit ? static_cast<std::size_t>(kcol) * npix : 0);
        std::vector<T>* gx = xa >= 0 ? &tp.grad_buf(xa) : nullptr;
        std::vector<T>* gw = wa >= 0 ? &tp.grad_buf(wa) : nullptr;
        std::vector<T>* gb = ba >= 0 ? &tp.grad_buf(ba) : nullptr;
        for (int n = 0; n < N; ++n) {
            const T* gon = gout.data() + static_cast<std::size_t>(n) * OC * npix;
            const T* xn = x.data() + static_cast<std::size_t>(n) * IC * H * W;
            if (gw != nullptr) {
                const T* mat = unit ? xn : col.data();
                if (!unit) im2col(xn, IC, H, W, kh, kw, stride, pad, OH, OW, col.data());
                kernels::gemm_nt<T>(OC, static_cast<int>(npix), kcol, gon, mat,
                                    gw->data(), true);
            }
            if (gb != nullptr) {
                for (int oc = 0; oc < OC; ++oc) {
                    double s = 0.0;
                    const T* row = gon + static_cast<std::size_t>(oc) * npix;
                    for (std::size_t i = 0; i < npix; ++i) s += static_cast<double>(row[i]);
                    (*gb)[static_cast<std::size_t>(oc)] += static_cast<T>(s);
                }
            }
            if (gx != nullptr) {
                T* gxn = gx->data() + static_cast<std::size_t>(n) * IC * H * W;
                if (unit) {
                    kernels::gemm_tn<T>(kcol, OC, static_cast<int>(npix), w.data(), gon,
                                        gxn, true);
                } else {
                    kernels::gemm_tn<T>(kcol, OC, static_cast<int>(npix), w.data(), gon,
                                        dcol.data(), false);
                    col2im_add(dcol.data(), IC, H, W, kh, kw, stride, pad, OH, OW, gxn);
                }
            }
        }
    };
    return record<T>(oshape, std::move(out), {&x, &w, &b}, std::move(bw));
}

template <typename T>
TensorT<T> conv_transpose2d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                            int stride, int pad, int out_pad) {
    check_stride_pad(stride, pad, "conv_transpose2d");
    if (out_pad < 0 || out_pad >= stride) {
        throw InputError("conv_transpose2d: out_pad must be in [0, stride)");
    }
    if (w.shape.n != x.shape.c) {
        throw DimError("conv_transpose2d: weight expects " + std::to_string(w.shape.n) +
                       " input channels, input has " + std::to_string(x.shape.c));
    }
    const int N = x.shape.n, IC = x.shape.c, H = x.shape.h, W = x.shape.w;
    const int OC = w.shape.c, kh = w.shape.h, kw = w.shape.w;
    check_bias(b, OC, "conv_transpose2d");
    const int OH = (H - 1) * stride - 2 * pad + kh + out_pad;
    const int OW = (W - 1) * stride - 2 * pad + kw + out_pad;
    if (OH < 1 || OW < 1) {
        throw DimError("conv_transpose2d: output extent is empty for input " +
                       to_string(x.shape));
    }
    const Shape4 oshape{N, OC, OH, OW};
    const int kcol = OC * kh * kw;
    const std::size_t npix_in = static_cast<std::size_t>(H) * W;

    auto out = alloc<T>(oshape);
    std::vector<T> cols(static_cast<std::size_t>(kcol) * npix_in);
    for (int n = 0; n < N; ++n) {
        const T* xn = x.data() + static_cast<std::size_t>(n) * IC * npix_in;
        T* on = out->data() + static_cast<std::size_t>(n) * OC * OH * OW;
        kernels::gemm_tn<T>(kcol, IC, static_cast<int>(npix_in), w.data(), xn,
                            cols.data(), false);
        col2im_add(cols.data(), OC, OH, OW, kh, kw, stride, pad, H, W, on);
        const std::size_t oplane = static_cast<std::size_t>(OH) * OW;
        for (int oc = 0; oc < OC; ++oc) {
            const T bias = (*b.store)[static_cast<std::size_t>(oc)];
            T* row = on + static_cast<std::size_t>(oc) * oplane;
            for (std::size_t i = 0; i < oplane; ++i) row[i] += bias;
        }
    }

    const int xa = x.node, wa = w.node, ba = b.node;
    auto bw = [x, w, b, xa, wa, ba, stride, pad, N, IC, H, W, OC, kh, kw, OH, OW, kcol,
               npix_in](Tape<T>& tp, int self) {
        const std::vector<T>& gout = tp.grad_buf(self);
        std::vector<T> dcols(static_cast<std::size_t>(kcol) * npix_in);
        std::vector<T>* gx = xa >= 0 ? &tp.grad_buf(xa) : nullptr;
        std::vector<T>* gw = wa >= 0 ? &tp.grad_buf(wa) : nullptr;
        std::vector<T>* gb = ba >= 0 ? &tp.grad_buf(ba) : nullptr;
        const std::size_t oplane = static_cast<std::size_t>(OH) * OW;
        for (int n = 0; n < N; ++n) {
            const T* gon = gout.data() + static_cast<std::size_t>(n) * OC * oplane;
            const T* xn = x.data() + static_cast<std::size_t>(n) * IC * npix_in;
            im2col(gon, OC, OH, OW, kh, kw, stride, pad, H, W, dcols.data());
            if (gx != nullptr) {
                kernels::gemm_nn<T>(IC, kcol, static_cast<int>(npix_in), w.data(),
                                    dcols.data(),
                                    gx->data() + static_cast<std::size_t>(n) * IC * npix_in,
                                    true);
            }
            if (gw != nullptr) {
                kernels::gemm_nt<T>(IC, static_cast<int>(npix_in), kcol, xn, dcols.data(),
                                    gw->data(), true);
            }
            if (gb != nullptr) {
                for (int oc = 0; oc < OC; ++oc) {
                    double s = 0.0;
                    const T* row = gon + static_cast<std::size_t>(oc) * oplane;
                    for (std::size_t i = 0; i < oplane; ++i) s += static_cast<double>(row[i]);
                    (*gb)[static_cast<std::size_t>(oc)] += static_cast<T>(s);
                }
            }
        }
    };
    return record<T>(oshape, std::move(out), {&x, &w, &b}, std::move(bw));
}

// ===================== linear =====================

template <typename T>
TensorT<T> linear(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
    if (x.shape.h != 1 || x.shape.w != 1) {
        throw DimError("linear: input must be (N, F, 1, 1), got " + to_string(x.shape));
    }
    if (w.shape.h != 1 || w.shape.w != 1 || w.shape.c != x.shape.c) {
        throw DimError("linear: weight " + to_string(w.shape) + " does not match input " +
                       to_string(x.shape));
    }
    const int N = x.shape.n, F = x.shape.c, O = w.shape.n;
    check_bias(b, O, "linear");
    const Shape4 oshape{N, O, 1, 1};
    auto out = alloc<T>(oshape);
    kernels::gemm_nt<T>(N, F, O, x.data(), w.data(), out->data(), false);
    for (int n = 0; n < N; ++n) {
        T* row = out->data() + static_cast<std::size_t>(n) * O;
        for (int o = 0; o < O; ++o) row[o] += (*b.store)[static_cast<std::size_t>(o)];
    }

    const int xa = x.node, wa = w.node, ba = b.node;
    auto bw = [x, w, xa, wa, ba, N, F, O](Tape<T>& tp, int self) {
        const std::vector<T>& gout = tp.grad_buf(self);
        if (xa >= 0) {
            kernels::gemm_nn<T>(N, O, F, gout.data(), w.data(), tp.grad_buf(xa).data(),
                                true);
        }
        if (wa >= 0) {
            kernels::gemm_tn<T>(O, N, F, gout.data(), x.data(), tp.grad_buf(wa).data(),
                                true);
        }
        if (ba >= 0) {
            std::vector<T>& gb = tp.grad_buf(ba);
            for (int o = 0; o < O; ++o) {
                double s = 0.0;
                for (int n = 0; n < N; ++n) {
                    s += static_cast<double>(gout[static_cast<std::size_t>(n) * O + o]);
                }
                gb[static_cast<std::size_t>(o)] += static_cast<T>(s);
            }
        }
    };
    return record<T>(oshape, std::move(out), {&x, &w, &b}, std::move(bw));
}

// ===================== relu / pooling =====================

template <typename T>
TensorT<T> relu(const TensorT<T>& x) {
    auto out = alloc<T>(x.shape);
    kernels::relu_fwd<T>(x.data(), out->data(), x.numel());
    const int xa = x.node;
    auto bw = [x, xa](Tape<T>& tp, int self) {
        if (xa < 0) return;
        const std::vector<T>& gout = tp.grad_buf(self);
        kernels::relu_bwd<T>(x.data(), gout.data(), tp.grad_buf(xa).data(), x.numel());
    };
    return record<T>(x.shape, std::move(out), {&x}, std::move(bw));
}

template <typename T>
TensorT<T> max_pool2d(const TensorT<T>& x, int k, int stride) {
    if (k < 1 || stride < 1) throw InputError("max_pool2d: k and stride must be >= 1");
    if (x.shape.h < k || x.shape.w < k) {
        throw DimError("max_pool2d: window " + std::to_string(k) + " exceeds input " +
                       to_string(x.shape));
    }
    const int N = x.shape.n, C = x.shape.c, H = x.shape.h, W = x.shape.w;
    const int OH = (H - k) / stride + 1;
    const int OW = (W - k) / stride + 1;
    const Shape4 oshape{N, C, OH, OW};
    auto out = alloc<T>(oshape);
    auto argmax = std::make_shared<std::vector<std::size_t>>(oshape.numel());
    std::size_t o = 0;
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const T* plane = x.data() + (static_cast<std::size_t>(n) * C + c) * H * W;
            const std::size_t base = (static_cast<std::size_t>(n) * C + c) * H * W;
            for (int oy = 0; oy < OH; ++oy) {
                for (int ox = 0; ox < OW; ++ox, ++o) {
                    T best{};
                    std::size_t besti = 0;
                    bool first = true;
                    for (int ky = 0; ky < k; ++ky) {
                        const int iy = oy * stride + ky;
                        for (int kx = 0; kx < k; ++kx) {
                            const int ix = ox * stride + kx;
                            const T v = plane[static_cast<std::size_t>(iy) * W + ix];
                            if (first || v > best) {
                                best = v;
                                besti = base + static_cast<std::size_t>(iy) * W + ix;
                                first = false;
                            }
                        }
                    }
                    (*out)[o] = best;
                    (*argmax)[o] = besti;
                }
            }
        }
    }
    const int xa = x.node;
    auto bw = [argmax, xa](Tape<T>& tp, int self) {
        if (xa < 0) return;
        const std::vector<T>& gout = tp.grad_buf(self);
        std::vector<T>& gx = tp.grad_buf(xa);
        for (std::size_t i = 0; i < gout.size(); ++i) gx[(*argmax)[i]] += gout[i];
    };
    return record<T>(oshape, std::move(out), {&x}, std::move(bw));
}

// ===================== spatial moments =====================

template <typename T>
TensorT<T> spatial_mean(const TensorT<T>& x) {
    const int N = x.shape.n, C = x.shape.c;
    const std::size_t plane = x.shape.plane();
    const Shape4 oshape{N, C, 1, 1};
    auto out = alloc<T>(oshape);
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            double s, sq;
            kernels::plane_sums<T>(x.data() + (static_cast<std::size_t>(n) * C + c) * plane,
                                   plane, &s, &sq);
            (*out)[static_cast<std::size_t>(n) * C + c] =
                static_cast<T>(s / static_cast<double>(plane));
        }
    }
    const int xa = x.node;
    auto bw = [xa, N, C, plane](Tape<T>& tp, int self) {
        if (xa < 0) return;
        const std::vector<T>& gout = tp.grad_buf(self);
        std::vector<T>& gx = tp.grad_buf(xa);
        for (int nc = 0; nc < N * C; ++nc) {
            const T g = static_cast<T>(static_cast<double>(gout[static_cast<std::size_t>(nc)]) /
                                       static_cast<double>(plane));
            T* row = gx.data() + static_cast<std::size_t>(nc) * plane;
            for (std::size_t i = 0; i < plane; ++i) row[i] += g;
        }
    };
    return record<T>(oshape, std::move(out), {&x}, std::move(bw));
}

template <typename T>
TensorT<T> spatial_std(const TensorT<T>& x, const TensorT<T>& mu, double eps) {
    const int N = x.shape.n, C = x.shape.c;
    if (!(mu.shape == Shape4{N, C, 1, 1})) {
        throw DimError("spatial_std: mu shape " + to_string(mu.shape) + ", expected (" +
                        std::to_string(N) + ", " + std::to_string(C) + ", 1, 1)");
    }
    if (eps < 0.0) throw InputError("spatial_std: eps must be >= 0");
    const std::size_t plane = x.shape.plane();
    const Shape4 oshape{N, C, 1, 1};
    auto out = alloc<T>(oshape);
    auto sums = std::make_shared<std::vector<double>>(static_cast<std::size_t>(N) * C);
    for (int nc = 0; nc < N * C; ++nc) {
        double s, sq;
        kernels::plane_sums<T>(x.data() + static_cast<std::size_t>(nc) * plane, plane,
                               &s, &sq);
        (*sums)[static_cast<std::size_t>(nc)] = s;
        const double m = static_cast<double>((*mu.store)[static_cast<std::size_t>(nc)]);
        const double var =
            sq / static_cast<double>(plane) - 2.0 * m * s / static_cast<double>(plane) + m * m;
        (*out)[static_cast<std::size_t>(nc)] =
            static_cast<T>(std::sqrt(std::max(var, 0.0) + eps));
    }
    const int xa = x.node, ma = mu.node;
    auto sigma = out;  // backward reads the forward result
    auto bw = [x, mu, sums, sigma, xa, ma, N, C, plane](Tape<T>& tp, int self) {
        const std::vector<T>& gout = tp.grad_buf(self);
        std::vector<T>* gx = xa >= 0 ? &tp.grad_buf(xa) : nullptr;
        std::vector<T>* gm = ma >= 0 ? &tp.grad_buf(ma) : nullptr;
        for (int nc = 0; nc < N * C; ++nc) {
            const double g = static_cast<double>(gout[static_cast<std::size_t>(nc)]);
            if (g == 0.0) continue;
            const double sg = static_cast<double>((*sigma)[static_cast<std::size_t>(nc)]);
            const double m = static_cast<double>((*mu.store)[static_cast<std::size_t>(nc)]);
            if (gx != nullptr) {
                const T coef = static_cast<T>(g / (static_cast<double>(plane) * sg));
                const T* xr = x.data() + static_cast<std::size_t>(nc) * plane;
                T* gr = gx->data() + static_cast<std::size_t>(nc) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    gr[i] += coef * (xr[i] - static_cast<T>(m));
                }
            }
            if (gm != nullptr) {
                const double xbar =
                    (*sums)[static_cast<std::size_t>(nc)] / static_cast<double>(plane);
                (*gm)[static_cast<std::size_t>(nc)] +=
                    static_cast<T>(-g * (xbar - m) / sg);
            }
        }
    };
    return record<T>(oshape, std::move(out), {&x, &mu}, std::move(bw));
}

// ===================== permutation / detach =====================

template <typename T>
TensorT<T> batch_permute(const TensorT<T>& x, const std::vector<int>& pi) {
    const int N = x.shape.n;
    if (static_cast<int>(pi.size()) != N) {
        throw InputError("batch_permute: permutation length " + std::to_string(pi.size()) +
                         " for batch of " + std::to_string(N));
    }
    std::vector<bool> seen(static_cast<std::size_t>(N), false);
    for (const int p : pi) {
        if (p < 0 || p >= N || seen[static_cast<std::size_t>(p)]) {
            throw InputError("batch_permute: not a permutation of 0.." +
                             std::to_string(N - 1));
        }
        seen[static_cast<std::size_t>(p)] = true;
    }
    const std::size_t row = x.numel() / static_cast<std::size_t>(N);
    auto out = alloc<T>(x.shape);
    for (int i = 0; i < N; ++i) {
        std::memcpy(out->data() + static_cast<std::size_t>(i) * row,
                    x.data() + static_cast<std::size_t>(pi[static_cast<std::size_t>(i)]) * row,
                    row * sizeof(T));
    }
    const int xa = x.node;
    auto bw = [pi, xa, N, row](Tape<T>& tp, int self) {
        if (xa < 0) return;
        const std::vector<T>& gout = tp.grad_buf(self);
        std::vector<T>& gx = tp.grad_buf(xa);
        for (int i = 0; i < N; ++i) {
            kernels::axpy<T>(T(1), gout.data() + static_cast<std::size_t>(i) * row,
                             gx.data() + static_cast<std::size_t>(pi[static_cast<std::size_t>(i)]) * row,
                             row);
        }
    };
    return record<T>(x.shape, std::move(out), {&x}, std::move(bw));
}

template <typename T>
TensorT<T> detach(const TensorT<T>& x) {
    return TensorT<T>(x.shape, x.store);
}

// ===================== elementwise =====================

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
    require_same_shape(a.shape, b.shape, "add");
    auto out = alloc<T>(a.shape);
    kernels::add<T>(a.data(), b.data(), out->data(), a.numel());
    const int aa = a.node, ba = b.node;
    auto bw = [aa, ba](Tape<T>& tp, int self) {
        const std::vector<T>& gout = tp.grad_buf(self);
        if (aa >= 0) kernels::axpy<T>(T(1), gout.data(), tp.grad_buf(aa).data(), gout.size());
        if (ba >= 0) kernels::axpy<T>(T(1), gout.data(), tp.grad_buf(ba).data(), gout.size());
    };
    return record<T>(a.shape, std::move(out), {&a, &b}, std::move(bw));
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
    require_same_shape(a.shape, b.shape, "sub");
    auto out = alloc<T>(a.shape);
    const T* pa = a.data();
    const T* pb = b.data();
    for (std::size_t i = 0; i < out->size(); ++i) (*out)[i] = pa[i] - pb[i];
    const int aa = a.node, ba = b.node;
    auto bw = [aa, ba](Tape<T>& tp, int self) {
        const std::vector<T>& gout = tp.grad_buf(self);
        if (aa >= 0) kernels::axpy<T>(T(1), gout.data(), tp.grad_buf(aa).data(), gout.size());
        if (ba >= 0) kernels::axpy<T>(T(-1), gout.data(), tp.grad_buf(ba).data(), gout.size());
    };
    return record<T>(a.shape, std::move(out), {&a, &b}, std::move(bw));
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
    require_same_shape(a.shape, b.shape, "mul");
    auto out = alloc<T>(a.shape);
    const T* pa = a.data();
    const T* pb = b.data();
    for (std::size_t i = 0; i < out->size(); ++i) (*out)[i] = pa[i] * pb[i];
    const int aa = a.node, ba = b.node;
    auto bw = [a, b, aa, ba](Tape<T>& tp, int self) {
        const std::vector<T>& gout = tp.grad_buf(self);
        if (aa >= 0) {
            std::vector<T>& ga = tp.grad_buf(aa);
            const T* pb = b.data();
            for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i] * pb[i];
        }
        if (ba >= 0) {
            std::vector<T>& gb = tp.grad_buf(ba);
            const T* pa = a.data();
            for (std::size_t i = 0; i < gout.size(); ++i) gb[i] += gout[i] * pa[i];
        }
    };
    return record<T>(a.shape, std::move(out), {&a, &b}, std::move(bw));
}

template <typename T>
TensorT<T> div_el(const TensorT<T>& a, const TensorT<T>& b) {
    require_same_shape(a.shape, b.shape, "div");
    auto out = alloc<T>(a.shape);
    const T* pa = a.data();
    const T* pb = b.data();
    for (std::size_t i = 0; i < out->size(); ++i) (*out)[i] = pa[i] / pb[i];
    const int aa = a.node, ba = b.node;
    auto q = out;
    auto bw = [b, q, aa, ba](Tape<T>& tp, int self) {
        const std::vector<T>& gout = tp.grad_buf(self);
        const T* pb = b.data();
        if (aa >= 0) {
            std::vector<T>& ga = tp.grad_buf(aa);
            for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i] / pb[i];
        }
        if (ba >= 0) {
            std::vector<T>& gb = tp.grad_buf(ba);
            for (std::size_t i = 0; i < gout.size(); ++i) {
                gb[i] -= gout[i] * (*q)[i] / pb[i];
            }
        }
    };
    return record<T>(a.shape, std::move(out), {&a, &b}, std::move(bw));
}

template <typename T>
TensorT<T> add_scalar(const TensorT<T>& x, double c) {
    auto out = alloc<T>(x.shape);
    kernels::plane_affine<T>(x.data(), T(1), static_cast<T>(c), out->data(), x.numel());
    const int xa = x.node;
    auto bw = [xa](Tape<T>& tp, int self) {
        if (xa < 0) return;
        const std::vector<T>& gout = tp.grad_buf(self);
        kernels::axpy<T>(T(1), gout.data(), tp.grad_buf(xa).data(), gout.size());
    };
    return record<T>(x.shape, std::move(out), {&x}, std::move(bw));
}

template <typename T>
TensorT<T> mul_scalar(const TensorT<T>& x, double c) {
    auto out = alloc<T>(x.shape);
    kernels::plane_affine<T>(x.data(), static_cast<T>(c), T(0), out->data(), x.numel());
    const int xa = x.node;
    auto bw = [xa, c](Tape<T>& tp, int self) {
        if (xa < 0) return;
        const std::vector<T>& gout = tp.grad_buf(self);
        kernels::axpy<T>(static_cast<T>(c), gout.data(), tp.grad_buf(xa).data(), gout.size());
    };
    return record<T>(x.shape, std::move(out), {&x}, std::move(bw));
}

// ===================== (n, c) broadcast =====================

template <typename T>
TensorT<T> add_nc(const TensorT<T>& x, const TensorT<T>& s) {
    check_nc(x, s, "add_nc");
    const int N = x.shape.n, C = x.shape.c;
    const std::size_t plane = x.shape.plane();
    auto out = alloc<T>(x.shape);
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const std::size_t off = (static_cast<std::size_t>(n) * C + c) * plane;
            kernels::plane_affine<T>(x.data() + off, T(1),
                                     (*s.store)[nc_index(s.shape, n, c)],
                                     out->data() + off, plane);
        }
    }
    const int xa = x.node, sa = s.node;
    const Shape4 ss = s.shape;
    auto bw = [xa, sa, ss, N, C, plane](Tape<T>& tp, int self) {
        const std::vector<T>& gout = tp.grad_buf(self);
        if (xa >= 0) kernels::axpy<T>(T(1), gout.data(), tp.grad_buf(xa).data(), gout.size());
        if (sa >= 0) {
            std::vector<T>& gs = tp.grad_buf(sa);
            for (int n = 0; n < N; ++n) {
                for (int c = 0; c < C; ++c) {
                    double sm, sq;
                    kernels::plane_sums<T>(
                        gout.data() + (static_cast<std::size_t>(n) * C + c) * plane, plane,
                        &sm, &sq);
                    gs[nc_index(ss, n, c)] += static_cast<T>(sm);
                }
            }
        }
    };
    return record<T>(x.shape, std::move(out), {&x, &s}, std::move(bw));
}

template <typename T>
TensorT<T> sub_nc(const TensorT<T>& x, const TensorT<T>& s) {
    check_nc(x, s, "sub_nc");
    const int N = x.shape.n, C = x.shape.c;
    const std::size_t plane = x.shape.plane();
    auto out = alloc<T>(x.shape);
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const std::size_t off = (static_cast<std::size_t>(n) * C + c) * plane;
            kernels::plane_affine<T>(x.data() + off, T(1),
                                     -(*s.store)[nc_index(s.shape, n, c)],
                                     out->data() + off, plane);
        }
    }
    const int xa = x.node, sa = s.node;
    const Shape4 ss = s.shape;
    auto bw = [xa, sa, ss, N, C, plane](Tape<T>& tp, int self) {
        const std::vector<T>& gout = tp.grad_buf(self);
        if (xa >= 0) kernels::axpy<T>(T(1), gout.data(), tp.grad_buf(xa).data(), gout.size());
        if (sa >= 0) {
            std::vector<T>& gs = tp.grad_buf(sa);
            for (int n = 0; n < N; ++n) {
                for (int c = 0; c < C; ++c) {
                    double sm, sq;
                    kernels::plane_sums<T>(
                        gout.data() + (static_cast<std::size_t>(n) * C + c) * plane, plane,
                        &sm, &sq);
                    gs[nc_index(ss, n, c)] -= static_cast<T>(sm);
                }
            }
        }
    };
    return record<T>(x.shape, std::move(out), {&x, &s}, std::move(bw));
}

template <typename T>
TensorT<T> mul_nc(const TensorT<T>& x, const TensorT<T>& s) {
    check_nc(x, s, "mul_nc");
    const int N = x.shape.n, C = x.shape.c;
    const std::size_t plane = x.shape.plane();
    auto out = alloc<T>(x.shape);
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const std::size_t off = (static_cast<std::size_t>(n) * C + c) * plane;
            kernels::plane_affine<T>(x.data() + off, (*s.store)[nc_index(s.shape, n, c)],
                                     T(0), out->data() + off, plane);
        }
    }
    const int xa = x.node, sa = s.node;
    auto bw = [x, s, xa, sa, N, C, plane](Tape<T>& tp, int self) {
        const std::vector<T>& gout = tp.grad_buf(self);
        if (xa >= 0) {
            std::vector<T>& gx = tp.grad_buf(xa);
            for (int n = 0; n < N; ++n) {
                for (int c = 0; c < C; ++c) {
                    const std::size_t off = (static_cast<std::size_t>(n) * C + c) * plane;
                    kernels::axpy<T>((*s.store)[nc_index(s.shape, n, c)], gout.data() + off,
                                     gx.data() + off, plane);
                }
            }
        }
        if (sa >= 0) {
            std::vector<T>& gs = tp.grad_buf(sa);
            for (int n = 0; n < N; ++n) {
                for (int c = 0; c < C; ++c) {
                    const std::size_t off = (static_cast<std::size_t>(n) * C + c) * plane;
                    const T* gr = gout.data() + off;
                    const T* xr = x.data() + off;
                    double acc = 0.0;
                    for (std::size_t i = 0; i < plane; ++i) {
                        acc += static_cast<double>(gr[i]) * static_cast<double>(xr[i]);
                    }
                    gs[nc_index(s.shape, n, c)] += static_cast<T>(acc);
                }
            }
        }
    };
    return record<T>(x.shape, std::move(out), {&x, &s}, std::move(bw));
}

template <typename T>
TensorT<T> div_nc(const TensorT<T>& x, const TensorT<T>& s) {
    check_nc(x, s, "div_nc");
    const int N = x.shape.n, C = x.shape.c;
    const std::size_t plane = x.shape.plane();
    auto out = alloc<T>(x.shape);
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const std::size_t off = (static_cast<std::size_t>(n) * C + c) * plane;
            const T sv = (*s.store)[nc_index(s.shape, n, c)];
            const T* xr = x.data() + off;
            T* orow = out->data() + off;
            for (std::size_t i = 0; i < plane; ++i) orow[i] = xr[i] / sv;
        }
    }
    const int xa = x.node, sa = s.node;
    auto bw = [x, s, xa, sa, N, C, plane](Tape<T>& tp, int self) {
        const std::vector<T>& gout = tp.grad_buf(self);
        for (int n = 0; n < N; ++n) {
            for (int c = 0; c < C; ++c) {
                const std::size_t off = (static_cast<std::size_t>(n) * C + c) * plane;
                const double sv =
                    static_cast<double>((*s.store)[nc_index(s.shape, n, c)]);
                if (xa >= 0) {
                    kernels::axpy<T>(static_cast<T>(1.0 / sv), gout.data() + off,
                                     tp.grad_buf(xa).data() + off, plane);
                }
                if (sa >= 0) {
                    const T* gr = gout.data() + off;
                    const T* xr = x.data() + off;
                    double acc = 0.0;
                    for (std::size_t i = 0; i < plane; ++i) {
                        acc += static_cast<double>(gr[i]) * static_cast<double>(xr[i]);
                    }
                    tp.grad_buf(sa)[nc_index(s.shape, n, c)] +=
                        static_cast<T>(-acc / (sv * sv));
                }
            }
        }
    };
    return record<T>(x.shape, std::move(out), {&x, &s}, std::move(bw));
}

// ===================== unary math =====================

template <typename T>
TensorT<T> sqrt_el(const TensorT<T>& x) {
    auto out = alloc<T>(x.shape);
    const T* px = x.data();
    for (std::size_t i = 0; i < out->size(); ++i) (*out)[i] = std::sqrt(px[i]);
    const int xa = x.node;
    auto r = out;
    auto bw = [r, xa](Tape<T>& tp, int self) {
        if (xa < 0) return;
        const std::vector<T>& gout = tp.grad_buf(self);
        std::vector<T>& gx = tp.grad_buf(xa);
        for (std::size_t i = 0; i < gout.size(); ++i) gx[i] += gout[i] / (T(2) * (*r)[i]);
    };
    return record<T>(x.shape, std::move(out), {&x}, std::move(bw));
}

template <typename T>
TensorT<T> square(const TensorT<T>& x) {
    auto out = alloc<T>(x.shape);
    const T* px = x.data();
    for (std::size_t i = 0; i < out->size(); ++i) (*out)[i] = px[i] * px[i];
    const int xa = x.node;
    auto bw = [x, xa](Tape<T>& tp, int self) {
        if (xa < 0) return;
        const std::vector<T>& gout = tp.grad_buf(self);
        std::vector<T>& gx = tp.grad_buf(xa);
        const T* px = x.data();
        for (std::size_t i = 0; i < gout.size(); ++i) gx[i] += T(2) * px[i] * gout[i];
    };
    return record<T>(x.shape, std::move(out), {&x}, std::move(bw));
}

// ===================== reductions =====================

template <typename T>
TensorT<T> sum_all(const TensorT<T>& x) {
    double s, sq;
    kernels::plane_sums<T>(x.data(), x.numel(), &s, &sq);
    auto out = std::make_shared<std::vector<T>>(1, static_cast<T>(s));
    const int xa = x.node;
    auto bw = [xa](Tape<T>& tp, int self) {
        if (xa < 0) return;
        const T g = tp.grad_buf(self)[0];
        std::vector<T>& gx = tp.grad_buf(xa);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
    };
    return record<T>(Shape4{1, 1, 1, 1}, std::move(out), {&x}, std::move(bw));
}

template <typename T>
TensorT<T> mean_all(const TensorT<T>& x) {
    double s, sq;
    const std::size_t count = x.numel();
    kernels::plane_sums<T>(x.data(), count, &s, &sq);
    auto out = std::make_shared<std::vector<T>>(1, static_cast<T>(s / static_cast<double>(count)));
    const int xa = x.node;
    auto bw = [xa, count](Tape<T>& tp, int self) {
        if (xa < 0) return;
        const T g = static_cast<T>(static_cast<double>(tp.grad_buf(self)[0]) /
                                   static_cast<double>(count));
        std::vector<T>& gx = tp.grad_buf(xa);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
    };
    return record<T>(Shape4{1, 1, 1, 1}, std::move(out), {&x}, std::move(bw));
}

// ===================== reshape =====================

template <typename T>
TensorT<T> reshape(const TensorT<T>& x, Shape4 s) {
    if (s.numel() != x.numel()) {
        throw DimError("reshape: cannot view " + to_string(x.shape) + " as " + to_string(s));
    }
    const int xa = x.node;
    auto bw = [xa](Tape<T>& tp, int self) {
        if (xa < 0) return;
        const std::vector<T>& gout = tp.grad_buf(self);
        kernels::axpy<T>(T(1), gout.data(), tp.grad_buf(xa).data(), gout.size());
    };
    return record<T>(s, x.store, {&x}, std::move(bw));
}

template <typename T>
TensorT<T> flatten(const TensorT<T>& x) {
    return reshape(x, Shape4{x.shape.n, x.shape.c * x.shape.h * x.shape.w, 1, 1});
}

// ===================== softmax cross-entropy =====================

template <typename T>
TensorT<T> softmax_cross_entropy(const TensorT<T>& logits, const std::vector<int>& labels) {
    if (logits.shape.h != 1 || logits.shape.w != 1) {
        throw DimError("softmax_cross_entropy: logits must be (N, K, 1, 1), got " +
                       to_string(logits.shape));
    }
    const int N = logits.shape.n, K = logits.shape.c;
    if (static_cast<int>(labels.size()) != N) {
        throw InputError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for batch of " + std::to_string(N));
    }
    auto probs = std::make_shared<std::vector<T>>(static_cast<std::size_t>(N) * K);
    double total = 0.0;
    for (int n = 0; n < N; ++n) {
        const int y = labels[static_cast<std::size_t>(n)];
        if (y < 0 || y >= K) {
            throw InputError("softmax_cross_entropy: label " + std::to_string(y) +
                             " out of range [0, " + std::to_string(K) + ")");
        }
        const T* row = logits.data() + static_cast<std::size_t>(n) * K;
        double mx = static_cast<double>(row[0]);
        for (int k = 1; k < K; ++k) mx = std::max(mx, static_cast<double>(row[k]));
        double z = 0.0;
        for (int k = 0; k < K; ++k) z += std::exp(static_cast<double>(row[k]) - mx);
        for (int k = 0; k < K; ++k) {
            (*probs)[static_cast<std::size_t>(n) * K + k] =
                static_cast<T>(std::exp(static_cast<double>(row[k]) - mx) / z);
        }
        total -= (static_cast<double>(row[y]) - mx) - std::log(z);
    }
    auto out = std::make_shared<std::vector<T>>(1, static_cast<T>(total / N));
    const int xa = logits.node;
    auto lab = labels;
    auto bw = [probs, lab, xa, N, K](Tape<T>& tp, int self) {
        if (xa < 0) return;
        const T g = tp.grad_buf(self)[0];
        std::vector<T>& gx = tp.grad_buf(xa);
        const T invn = static_cast<T>(1.0 / static_cast<double>(N));
        for (int n = 0; n < N; ++n) {
            const int y = lab[static_cast<std::size_t>(n)];
            for (int k = 0; k < K; ++k) {
                const std::size_t i = static_cast<std::size_t>(n) * K + k;
                const T ind = (k == y) ? T(1) : T(0);
                gx[i] += g * ((*probs)[i] - ind) * invn;
            }
        }
    };
    return record<T>(Shape4{1, 1, 1, 1}, std::move(out), {&logits}, std::move(bw));
}

// ===================== batch normalization =====================

template <typename T>
BnResult<T> batch_norm_train(const TensorT<T>& x, const TensorT<T>& gamma,
                             const TensorT<T>& beta, double eps) {
    const int N = x.shape.n, C = x.shape.c;
    if (!(gamma.shape == Shape4{1, C, 1, 1}) || !(beta.shape == Shape4{1, C, 1, 1})) {
        throw DimError("batch_norm: gamma/beta must be (1, " + std::to_string(C) +
                       ", 1, 1), got " + to_string(gamma.shape) + " and " +
                       to_string(beta.shape));
    }
    if (eps <= 0.0) throw InputError("batch_norm: eps must be > 0");
    const std::size_t plane = x.shape.plane();
    const double m = static_cast<double>(N) * static_cast<double>(plane);

    auto mu = std::make_shared<std::vector<double>>(static_cast<std::size_t>(C));
    auto var = std::make_shared<std::vector<double>>(static_cast<std::size_t>(C));
    for (int c = 0; c < C; ++c) {
        double s = 0.0, sq = 0.0;
        for (int n = 0; n < N; ++n) {
            double ps, pq;
            kernels::plane_sums<T>(x.data() + (static_cast<std::size_t>(n) * C + c) * plane,
                                   plane, &ps, &pq);
            s += ps;
            sq += pq;
        }
        const double mean = s / m;
        (*mu)[static_cast<std::size_t>(c)] = mean;
        (*var)[static_cast<std::size_t>(c)] = std::max(sq / m - mean * mean, 0.0);
    }

    auto out = alloc<T>(x.shape);
    for (int c = 0; c < C; ++c) {
        const double sigma = std::sqrt((*var)[static_cast<std::size_t>(c)] + eps);
        const double g = static_cast<double>((*gamma.store)[static_cast<std::size_t>(c)]);
        const double scale = g / sigma;
        const double shift = static_cast<double>((*beta.store)[static_cast<std::size_t>(c)]) -
                             (*mu)[static_cast<std::size_t>(c)] * scale;
        for (int n = 0; n < N; ++n) {
            const std::size_t off = (static_cast<std::size_t>(n) * C + c) * plane;
            kernels::plane_affine<T>(x.data() + off, static_cast<T>(scale),
                                     static_cast<T>(shift), out->data() + off, plane);
        }
    }

    const int xa = x.node, ga = gamma.node, ba = beta.node;
    auto bw = [x, gamma, mu, var, eps, xa, ga, ba, N, C, plane, m](Tape<T>& tp, int self) {
        const std::vector<T>& gout = tp.grad_buf(self);
        std::vector<T>* gx = xa >= 0 ? &tp.grad_buf(xa) : nullptr;
        for (int c = 0; c < C; ++c) {
            const double mean = (*mu)[static_cast<std::size_t>(c)];
            const double sigma = std::sqrt((*var)[static_cast<std::size_t>(c)] + eps);
            // Channel reductions first: sg = sum(dy), sgx = sum(dy * xhat).
            double sg = 0.0, sgx = 0.0;
            for (int n = 0; n < N; ++n) {
                const std::size_t off = (static_cast<std::size_t>(n) * C + c) * plane;
                const T* gr = gout.data() + off;
                const T* xr = x.data() + off;
                for (std::size_t i = 0; i < plane; ++i) {
                    const double dy = static_cast<double>(gr[i]);
                    sg += dy;
                    sgx += dy * (static_cast<double>(xr[i]) - mean) / sigma;
                }
            }
            if (ga >= 0) tp.grad_buf(ga)[static_cast<std::size_t>(c)] += static_cast<T>(sgx);
            if (ba >= 0) tp.grad_buf(ba)[static_cast<std::size_t>(c)] += static_cast<T>(sg);
            if (gx != nullptr) {
                const double gam =
                    static_cast<double>((*gamma.store)[static_cast<std::size_t>(c)]);
                const double coef = gam / sigma;
                const double mean_dy = sg / m;
                const double mean_dyx = sgx / m;
                for (int n = 0; n < N; ++n) {
                    const std::size_t off = (static_cast<std::size_t>(n) * C + c) * plane;
                    const T* gr = gout.data() + off;
                    const T* xr = x.data() + off;
                    T* gxr = gx->data() + off;
                    for (std::size_t i = 0; i < plane; ++i) {
                        const double xhat = (static_cast<double>(xr[i]) - mean) / sigma;
                        gxr[i] += static_cast<T>(
                            coef * (static_cast<double>(gr[i]) - mean_dy - xhat * mean_dyx));
                    }
                }
            }
        }
    };
    TensorT<T> y = record<T>(x.shape, std::move(out), {&x, &gamma, &beta}, std::move(bw));
    return BnResult<T>{std::move(y), *mu, *var};
}

// ===================== explicit instantiations =====================

#define PADAIN_INSTANTIATE_OPS(T)                                                        \
    template TensorT<T> conv2d<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&, \
                                  int, int);                                             \
    template TensorT<T> conv_transpose2d<T>(const TensorT<T>&, const TensorT<T>&,        \
                                            const TensorT<T>&, int, int, int);           \
    template TensorT<T> linear<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&); \
    template TensorT<T> relu<T>(const TensorT<T>&);                                      \
    template TensorT<T> max_pool2d<T>(const TensorT<T>&, int, int);                      \
    template TensorT<T> spatial_mean<T>(const TensorT<T>&);                              \
    template TensorT<T> spatial_std<T>(const TensorT<T>&, const TensorT<T>&, double);    \
    template TensorT<T> batch_permute<T>(const TensorT<T>&, const std::vector<int>&);    \
    template TensorT<T> detach<T>(const TensorT<T>&);                                    \
    template TensorT<T> add<T>(const TensorT<T>&, const TensorT<T>&);                    \
    template TensorT<T> sub<T>(const TensorT<T>&, const TensorT<T>&);                    \
    template TensorT<T> mul<T>(const TensorT<T>&, const TensorT<T>&);                    \
    template TensorT<T> div_el<T>(const TensorT<T>&, const TensorT<T>&);                 \
    template TensorT<T> add_scalar<T>(const TensorT<T>&, double);                        \
    template TensorT<T> mul_scalar<T>(const TensorT<T>&, double);                        \
    template TensorT<T> add_nc<T>(const TensorT<T>&, const TensorT<T>&);                 \
    template TensorT<T> sub_nc<T>(const TensorT<T>&, const TensorT<T>&);                 \
    template TensorT<T> mul_nc<T>(const TensorT<T>&, const TensorT<T>&);                 \
    template TensorT<T> div_nc<T>(const TensorT<T>&, const TensorT<T>&);                 \
    template TensorT<T> sqrt_el<T>(const TensorT<T>&);                                   \
    template TensorT<T> square<T>(const TensorT<T>&);                                    \
    template TensorT<T> sum_all<T>(const TensorT<T>&);                                   \
    template TensorT<T> mean_all<T>(const TensorT<T>&);                                  \
    template TensorT<T> reshape<T>(const TensorT<T>&, Shape4);                           \
    template TensorT<T> flatten<T>(const TensorT<T>&);                                   \
    template TensorT<T> softmax_cross_entropy<T>(const TensorT<T>&, const std::vector<int>&); \
    template BnResult<T> batch_norm_train<T>(const TensorT<T>&, const TensorT<T>&,       \
                                             const TensorT<T>&, double);

PADAIN_INSTANTIATE_OPS(float)
PADAIN_INSTANTIATE_OPS(double)

#undef PADAIN_INSTANTIATE_OPS

}  // namespace padain::ops
