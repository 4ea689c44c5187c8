#include "padain/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "padain/ops.hpp"

namespace padain::model {

bool PadainMask::has(int block) const {
    return std::find(blocks.begin(), blocks.end(), block) != blocks.end();
}

std::size_t Model::param_count() const {
    std::size_t total = 0;
    for (const Param& p : params) total += p.shape.numel();
    return total;
}

namespace {

// ===================== builders =====================

struct Build {
    Model& m;
    RngStream& rng;
    int conv_id = 0;
    int bn_id = 0;
    int fc_id = 0;

    int add_param(const std::string& name, Shape4 s, bool he, double fan_in) {
        auto store = std::make_shared<std::vector<float>>(s.numel(), 0.0f);
        if (he) {
            const double std = std::sqrt(2.0 / fan_in);
            for (float& v : *store) v = static_cast<float>(rng.next_normal() * std);
        }
        m.params.push_back(Param{name, s, std::move(store)});
        return static_cast<int>(m.params.size()) - 1;
    }

    int add_const_param(const std::string& name, Shape4 s, float fill) {
        auto store = std::make_shared<std::vector<float>>(s.numel(), fill);
        m.params.push_back(Param{name, s, std::move(store)});
        return static_cast<int>(m.params.size()) - 1;
    }

    void conv(int ic, int oc, int k, int stride, int pad, int block) {
        Layer ly;
        ly.kind = LayerKind::kConv;
        ly.block = block;
        const std::string tag = "conv" + std::to_string(conv_id++);
        ly.w = add_param(tag + ".w", Shape4{oc, ic, k, k}, true,
                         static_cast<double>(ic) * k * k);
        ly.b = add_const_param(tag + ".b", Shape4{1, oc, 1, 1}, 0.0f);
        ly.stride = stride;
        ly.pad = pad;
        m.layers.push_back(ly);
    }

    void conv_transpose(int ic, int oc, int k, int stride, int pad, int out_pad, int block) {
        Layer ly;
        ly.kind = LayerKind::kConvTranspose;
        ly.block = block;
        const std::string tag = "conv" + std::to_string(conv_id++);
        ly.w = add_param(tag + ".w", Shape4{ic, oc, k, k}, true,
                         static_cast<double>(oc) * k * k);
        ly.b = add_const_param(tag + ".b", Shape4{1, oc, 1, 1}, 0.0f);
        ly.stride = stride;
        ly.pad = pad;
        ly.out_pad = out_pad;
        m.layers.push_back(ly);
    }

    void padain_site(int block) {
        if (!m.mask.has(block)) return;
        Layer ly;
        ly.kind = LayerKind::kPadain;
        ly.block = block;
        ly.padain_id = m.padain_sites++;
        m.layers.push_back(ly);
    }

    void bn(int c, int block) {
        Layer ly;
        ly.kind = LayerKind::kBatchNorm;
        ly.block = block;
        const std::string tag = "bn" + std::to_string(bn_id++);
        ly.gamma = add_const_param(tag + ".gamma", Shape4{1, c, 1, 1}, 1.0f);
        ly.beta = add_const_param(tag + ".beta", Shape4{1, c, 1, 1}, 0.0f);
        m.bn.push_back(BnState{tag, std::vector<float>(static_cast<std::size_t>(c), 0.0f),
                               std::vector<float>(static_cast<std::size_t>(c), 1.0f)});
        ly.bn = static_cast<int>(m.bn.size()) - 1;
        m.layers.push_back(ly);
    }

    void relu() { m.layers.push_back(Layer{.kind = LayerKind::kRelu}); }

    void maxpool(int k, int stride) {
        Layer ly;
        ly.kind = LayerKind::kMaxPool;
        ly.pool_k = k;
        ly.pool_stride = stride;
        m.layers.push_back(ly);
    }

    void gap() { m.layers.push_back(Layer{.kind = LayerKind::kGlobalAvgPool}); }
    void flatten() { m.layers.push_back(Layer{.kind = LayerKind::kFlatten}); }

    void fc(int in, int out) {
        Layer ly;
        ly.kind = LayerKind::kLinear;
        const std::string tag = "fc" + std::to_string(fc_id++);
        ly.w = add_param(tag + ".w", Shape4{out, in, 1, 1}, true, static_cast<double>(in));
        ly.b = add_const_param(tag + ".b", Shape4{1, out, 1, 1}, 0.0f);
        m.layers.push_back(ly);
    }

    // conv -> optional pAdaIN site -> bn (the site must sit between them).
    void conv_pn_bn(int ic, int oc, int k, int stride, int pad, int block) {
        conv(ic, oc, k, stride, pad, block);
        padain_site(block);
        bn(oc, block);
    }

    void residual_block(int ic, int oc, int stride, int block) {
        m.layers.push_back(Layer{.kind = LayerKind::kResidualSave});
        conv_pn_bn(ic, oc, 3, stride, 1, block);
        relu();
        conv_pn_bn(oc, oc, 3, 1, 1, block);

        Layer join;
        join.kind = LayerKind::kResidualAdd;
        join.block = block;
        if (ic != oc || stride != 1) {
            const std::string tag = "proj" + std::to_string(block);
            join.proj_w = add_param(tag + ".w", Shape4{oc, ic, 1, 1}, true,
                                    static_cast<double>(ic));
            join.proj_b = add_const_param(tag + ".b", Shape4{1, oc, 1, 1}, 0.0f);
            join.proj_stride = stride;
            if (m.mask.has(block) && m.mask.on_projection) {
                join.proj_padain_id = m.padain_sites++;
            }
            join.proj_gamma = add_const_param(tag + ".bn.gamma", Shape4{1, oc, 1, 1}, 1.0f);
            join.proj_beta = add_const_param(tag + ".bn.beta", Shape4{1, oc, 1, 1}, 0.0f);
            m.bn.push_back(BnState{tag + ".bn",
                                   std::vector<float>(static_cast<std::size_t>(oc), 0.0f),
                                   std::vector<float>(static_cast<std::size_t>(oc), 1.0f)});
            join.proj_bn = static_cast<int>(m.bn.size()) - 1;
        }
        m.layers.push_back(join);
        relu();
    }
};

void check_image_size(int image_size, int factor, const char* arch) {
    if (image_size < factor || image_size % factor != 0) {
        throw InputError(std::string(arch) + ": image_size must be a positive multiple of " +
                         std::to_string(factor) + ", got " + std::to_string(image_size));
    }
}

}  // namespace

Model make_small_vgg(int in_channels, int image_size, int num_classes,
                     const PadainMask& mask, RngStream& init) {
    check_image_size(image_size, 8, "small_vgg");
    if (num_classes < 2) throw InputError("small_vgg: num_classes must be >= 2");
    for (const int b : mask.blocks) {
        if (b < 0 || b > 2) throw InputError("small_vgg: mask blocks must be in 0..2");
    }
    Model m;
    m.arch = "small_vgg";
    m.in_channels = in_channels;
    m.image_size = image_size;
    m.num_classes = num_classes;
    m.mask = mask;
    Build b{m, init};
    const int widths[3] = {32, 64, 128};
    int ic = in_channels;
    for (int blk = 0; blk < 3; ++blk) {
        const int oc = widths[blk];
        b.conv_pn_bn(ic, oc, 3, 1, 1, blk);
        b.relu();
        b.conv_pn_bn(oc, oc, 3, 1, 1, blk);
        b.relu();
        b.maxpool(2, 2);
        ic = oc;
    }
    const int side = image_size / 8;
    b.flatten();
    b.fc(128 * side * side, num_classes);
    return m;
}

Model make_small_resnet(int in_channels, int image_size, int num_classes,
                        const PadainMask& mask, RngStream& init) {
    check_image_size(image_size, 4, "small_resnet");
    if (num_classes < 2) throw InputError("small_resnet: num_classes must be >= 2");
    for (const int blk : mask.blocks) {
        if (blk < 0 || blk > 4) throw InputError("small_resnet: mask blocks must be in 0..4");
    }
    Model m;
    m.arch = "small_resnet";
    m.in_channels = in_channels;
    m.image_size = image_size;
    m.num_classes = num_classes;
    m.mask = mask;
    Build b{m, init};
    b.conv_pn_bn(in_channels, 32, 3, 1, 1, 0);  // stem is mask unit 0
    b.relu();
    b.residual_block(32, 32, 1, 1);
    b.residual_block(32, 64, 2, 2);
    b.residual_block(64, 64, 1, 3);
    b.residual_block(64, 128, 2, 4);
    b.gap();
    b.fc(128, num_classes);
    return m;
}

Model make_autoencoder(int in_channels, int image_size, const PadainMask& mask,
                       RngStream& init) {
    check_image_size(image_size, 4, "conv_autoencoder");
    for (const int blk : mask.blocks) {
        if (blk < 0 || blk > 4) {
            throw InputError("conv_autoencoder: mask blocks must be in 0..4");
        }
    }
    Model m;
    m.arch = "conv_autoencoder";
    m.in_channels = in_channels;
    m.image_size = image_size;
    m.num_classes = 0;
    m.mask = mask;
    Build b{m, init};
    // Five encoder stages, one swap site after each conv; two of them halve
    // the grid so a 16x16 input bottlenecks at 4x4.
    const int enc[6] = {in_channels, 16, 32, 32, 64, 64};
    const int enc_stride[5] = {1, 2, 1, 2, 1};
    for (int blk = 0; blk < 5; ++blk) {
        b.conv_pn_bn(enc[blk], enc[blk + 1], 3, enc_stride[blk], 1, blk);
        b.relu();
    }
    for (int blk = 4; blk >= 1; --blk) {
        const int s = enc_stride[blk];
        b.conv_transpose(enc[blk + 1], enc[blk], 3, s, 1, s - 1, -1);
        b.bn(enc[blk], -1);
        b.relu();
    }
    b.conv_transpose(enc[1], in_channels, 3, 1, 1, 0, -1);
    return m;
}

Model make_model(const std::string& arch, int in_channels, int image_size,
                 int num_classes, const PadainMask& mask, std::uint64_t seed) {
    RngStream init = RngStream::derive(seed, StreamDomain::kParamInit);
    if (arch == "small_vgg") {
        return make_small_vgg(in_channels, image_size, num_classes, mask, init);
    }
    if (arch == "small_resnet") {
        return make_small_resnet(in_channels, image_size, num_classes, mask, init);
    }
    if (arch == "conv_autoencoder") {
        return make_autoencoder(in_channels, image_size, mask, init);
    }
    throw InputError("unknown arch '" + arch +
                     "' (expected small_vgg|small_resnet|conv_autoencoder)");
}

// ===================== forward =====================

namespace {

Tensor apply_padain(const Tensor& x, int site, const ForwardOptions& opt) {
    if (opt.padain == nullptr) return x;
    RngStream stream = RngStream::derive(opt.seed, StreamDomain::kPadainCoin,
                                         static_cast<std::uint64_t>(site), opt.step);
    norm::PadainResult<float> r =
        norm::padain_forward(x, *opt.padain, stream, opt.training);
    Tensor y = r.y;
    if (opt.padain_trace != nullptr) opt.padain_trace->push_back(std::move(r));
    return y;
}

Tensor apply_bn(const Tensor& x, int gamma, int beta, int bn_idx, Model& m,
                const std::vector<Tensor>& bound, bool training) {
    BnState& st = m.bn[static_cast<std::size_t>(bn_idx)];
    const int C = x.shape.c;
    if (training) {
        ops::BnResult<float> r = ops::batch_norm_train(
            x, bound[static_cast<std::size_t>(gamma)], bound[static_cast<std::size_t>(beta)],
            m.bn_eps);
        const float mom = static_cast<float>(m.bn_momentum);
        for (int c = 0; c < C; ++c) {
            st.running_mu[static_cast<std::size_t>(c)] =
                (1.0f - mom) * st.running_mu[static_cast<std::size_t>(c)] +
                mom * static_cast<float>(r.mu[static_cast<std::size_t>(c)]);
            st.running_var[static_cast<std::size_t>(c)] =
                (1.0f - mom) * st.running_var[static_cast<std::size_t>(c)] +
                mom * static_cast<float>(r.var[static_cast<std::size_t>(c)]);
        }
        return r.y;
    }
    // Eval folds running stats into one affine map per channel.
    Tensor scale = make_tensor<float>(Shape4{1, C, 1, 1});
    Tensor shift = make_tensor<float>(Shape4{1, C, 1, 1});
    const std::vector<float>& g = *m.params[static_cast<std::size_t>(gamma)].value;
    const std::vector<float>& be = *m.params[static_cast<std::size_t>(beta)].value;
    for (int c = 0; c < C; ++c) {
        const std::size_t ci = static_cast<std::size_t>(c);
        const double s = static_cast<double>(g[ci]) /
                         std::sqrt(static_cast<double>(st.running_var[ci]) + m.bn_eps);
        (*scale.store)[ci] = static_cast<float>(s);
        (*shift.store)[ci] =
            static_cast<float>(static_cast<double>(be[ci]) - st.running_mu[ci] * s);
    }
    return ops::add_nc(ops::mul_nc(x, scale), shift);
}

}  // namespace

ForwardResult forward(Model& m, const Tensor& x, TapeF* tape, const ForwardOptions& opt) {
    if (x.shape.c != m.in_channels || x.shape.h != m.image_size ||
        x.shape.w != m.image_size) {
        throw DimError("forward: input " + to_string(x.shape) + " does not match " +
                       m.arch + " (C=" + std::to_string(m.in_channels) +
                       ", HxW=" + std::to_string(m.image_size) + ")");
    }
    ForwardResult res;
    res.bound.reserve(m.params.size());
    for (Param& p : m.params) {
        Tensor view(p.shape, p.value);
        res.bound.push_back(tape != nullptr ? tape->leaf(view) : view);
    }
    const std::vector<Tensor>& bound = res.bound;

    Tensor cur = x;
    std::vector<Tensor> saved;
    for (const Layer& ly : m.layers) {
        switch (ly.kind) {
            case LayerKind::kConv:
                cur = ops::conv2d(cur, bound[static_cast<std::size_t>(ly.w)],
                                  bound[static_cast<std::size_t>(ly.b)], ly.stride, ly.pad);
                break;
            case LayerKind::kConvTranspose:
                cur = ops::conv_transpose2d(cur, bound[static_cast<std::size_t>(ly.w)],
                                            bound[static_cast<std::size_t>(ly.b)], ly.stride,
                                            ly.pad, ly.out_pad);
                break;
            case LayerKind::kPadain:
                cur = apply_padain(cur, ly.padain_id, opt);
                break;
            case LayerKind::kBatchNorm:
                cur = apply_bn(cur, ly.gamma, ly.beta, ly.bn, m, bound, opt.training);
                break;
            case LayerKind::kRelu:
                cur = ops::relu(cur);
                break;
            case LayerKind::kMaxPool:
                cur = ops::max_pool2d(cur, ly.pool_k, ly.pool_stride);
                break;
            case LayerKind::kGlobalAvgPool:
                cur = ops::spatial_mean(cur);
                break;
            case LayerKind::kFlatten:
                cur = ops::flatten(cur);
                break;
            case LayerKind::kLinear:
                cur = ops::linear(cur, bound[static_cast<std::size_t>(ly.w)],
                                  bound[static_cast<std::size_t>(ly.b)]);
                break;
            case LayerKind::kResidualSave:
                saved.push_back(cur);
                break;
            case LayerKind::kResidualAdd: {
                if (saved.empty()) throw UsageError("forward: residual join without save");
                Tensor path = saved.back();
                saved.pop_back();
                if (ly.proj_w >= 0) {
                    path = ops::conv2d(path, bound[static_cast<std::size_t>(ly.proj_w)],
                                       bound[static_cast<std::size_t>(ly.proj_b)],
                                       ly.proj_stride, 0);
                    if (ly.proj_padain_id >= 0) {
                        path = apply_padain(path, ly.proj_padain_id, opt);
                    }
                    path = apply_bn(path, ly.proj_gamma, ly.proj_beta, ly.proj_bn, m, bound,
                                    opt.training);
                }
                cur = ops::add(cur, path);
                break;
            }
        }
    }
    res.out = cur;
    return res;
}

// ===================== description / audit =====================

std::vector<std::string> describe(const Model& m) {
    std::vector<std::string> lines;
    for (const Layer& ly : m.layers) {
        std::ostringstream os;
        switch (ly.kind) {
            case LayerKind::kConv: {
                const Shape4& s = m.params[static_cast<std::size_t>(ly.w)].shape;
                os << "conv " << s.c << "->" << s.n << " k" << s.h << " s" << ly.stride
                   << " p" << ly.pad;
                if (ly.block >= 0) os << " [block " << ly.block << "]";
                break;
            }
            case LayerKind::kConvTranspose: {
                const Shape4& s = m.params[static_cast<std::size_t>(ly.w)].shape;
                os << "conv_t " << s.n << "->" << s.c << " k" << s.h << " s" << ly.stride
                   << " p" << ly.pad << " op" << ly.out_pad;
                break;
            }
            case LayerKind::kPadain:
                os << "padain site " << ly.padain_id << " [block " << ly.block << "]";
                break;
            case LayerKind::kBatchNorm:
                os << m.bn[static_cast<std::size_t>(ly.bn)].name;
                break;
            case LayerKind::kRelu:
                os << "relu";
                break;
            case LayerKind::kMaxPool:
                os << "maxpool k" << ly.pool_k << " s" << ly.pool_stride;
                break;
            case LayerKind::kGlobalAvgPool:
                os << "global_avg_pool";
                break;
            case LayerKind::kFlatten:
                os << "flatten";
                break;
            case LayerKind::kLinear: {
                const Shape4& s = m.params[static_cast<std::size_t>(ly.w)].shape;
                os << "fc " << s.c << "->" << s.n;
                break;
            }
            case LayerKind::kResidualSave:
                os << "residual_save";
                break;
            case LayerKind::kResidualAdd:
                if (ly.proj_w >= 0) {
                    const Shape4& s = m.params[static_cast<std::size_t>(ly.proj_w)].shape;
                    os << "residual_add proj " << s.c << "->" << s.n << " s"
                       << ly.proj_stride;
                    if (ly.proj_padain_id >= 0) {
                        os << " (padain site " << ly.proj_padain_id << ")";
                    }
                } else {
                    os << "residual_add";
                }
                break;
        }
        lines.push_back(os.str());
    }
    return lines;
}

std::vector<int> padain_layer_indices(const Model& m) {
    std::vector<int> idx;
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        if (m.layers[i].kind == LayerKind::kPadain) idx.push_back(static_cast<int>(i));
    }
    return idx;
}

// ===================== stats swap =====================

namespace {

// Eval-mode execution of layers [begin, end); pAdaIN sites pass through.
Tensor run_layer_range(Model& m, const Tensor& x, std::size_t begin, std::size_t end) {
    Tensor cur = x;
    std::vector<Tensor> saved;
    std::vector<Tensor> views;
    views.reserve(m.params.size());
    for (Param& p : m.params) views.emplace_back(p.shape, p.value);
    for (std::size_t i = begin; i < end; ++i) {
        const Layer& ly = m.layers[i];
        switch (ly.kind) {
            case LayerKind::kConv:
                cur = ops::conv2d(cur, views[static_cast<std::size_t>(ly.w)],
                                  views[static_cast<std::size_t>(ly.b)], ly.stride, ly.pad);
                break;
            case LayerKind::kConvTranspose:
                cur = ops::conv_transpose2d(cur, views[static_cast<std::size_t>(ly.w)],
                                            views[static_cast<std::size_t>(ly.b)], ly.stride,
                                            ly.pad, ly.out_pad);
                break;
            case LayerKind::kPadain:
                break;
            case LayerKind::kBatchNorm:
                cur = apply_bn(cur, ly.gamma, ly.beta, ly.bn, m, views, false);
                break;
            case LayerKind::kRelu:
                cur = ops::relu(cur);
                break;
            case LayerKind::kMaxPool:
                cur = ops::max_pool2d(cur, ly.pool_k, ly.pool_stride);
                break;
            case LayerKind::kGlobalAvgPool:
                cur = ops::spatial_mean(cur);
                break;
            case LayerKind::kFlatten:
                cur = ops::flatten(cur);
                break;
            case LayerKind::kLinear:
                cur = ops::linear(cur, views[static_cast<std::size_t>(ly.w)],
                                  views[static_cast<std::size_t>(ly.b)]);
                break;
            case LayerKind::kResidualSave:
                saved.push_back(cur);
                break;
            case LayerKind::kResidualAdd: {
                Tensor path = saved.back();
                saved.pop_back();
                if (ly.proj_w >= 0) {
                    path = ops::conv2d(path, views[static_cast<std::size_t>(ly.proj_w)],
                                       views[static_cast<std::size_t>(ly.proj_b)],
                                       ly.proj_stride, 0);
                    path = apply_bn(path, ly.proj_gamma, ly.proj_beta, ly.proj_bn, m, views,
                                    false);
                }
                cur = ops::add(cur, path);
                break;
            }
        }
    }
    return cur;
}

}  // namespace

std::vector<StatSwapStep> stats_swap_inference(Model& m, const Tensor& content,
                                               const Tensor& donor, int site,
                                               const std::vector<double>& blends) {
    const std::vector<int> sites = padain_layer_indices(m);
    if (site < 0 || site >= static_cast<int>(sites.size())) {
        throw InputError("stats_swap_inference: site " + std::to_string(site) +
                         " out of range, model has " + std::to_string(sites.size()) +
                         " pAdaIN sites");
    }
    require_same_shape(content.shape, donor.shape, "stats_swap_inference");
    const std::size_t cut = static_cast<std::size_t>(sites[static_cast<std::size_t>(site)]);

    const Tensor act_c = run_layer_range(m, content, 0, cut);
    const Tensor act_d = run_layer_range(m, donor, 0, cut);
    // Activations here are raw conv outputs (pre-BN, pre-relu), so plane
    // variance is safely nonzero; the tiny eps only guards the division.
    const double eps = 1e-12;
    const norm::ChannelStats st_c = norm::channel_stats(act_c, eps);
    const norm::ChannelStats st_d = norm::channel_stats(act_d, eps);

    const int N = act_c.shape.n, C = act_c.shape.c;
    const std::size_t plane = act_c.shape.plane();
    std::vector<StatSwapStep> steps;
    for (const double lam : blends) {
        if (lam < 0.0 || lam > 1.0) {
            throw InputError("stats_swap_inference: blend weights must be in [0, 1]");
        }
        StatSwapStep step;
        step.blend = lam;
        step.target.n = N;
        step.target.c = C;
        step.target.mu.resize(static_cast<std::size_t>(N) * C);
        step.target.sigma.resize(static_cast<std::size_t>(N) * C);
        Tensor blended = make_tensor<float>(act_c.shape);
        for (int n = 0; n < N; ++n) {
            for (int c = 0; c < C; ++c) {
                const std::size_t nc = static_cast<std::size_t>(n) * C + c;
                const double mu_t = (1.0 - lam) * st_c.mu[nc] + lam * st_d.mu[nc];
                const double sig_t = (1.0 - lam) * st_c.sigma[nc] + lam * st_d.sigma[nc];
                step.target.mu[nc] = static_cast<float>(mu_t);
                step.target.sigma[nc] = static_cast<float>(sig_t);
                const float r = static_cast<float>(sig_t) / st_c.sigma[nc];
                const float shift = static_cast<float>(mu_t) - r * st_c.mu[nc];
                const std::size_t off = nc * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    (*blended.store)[off + i] = (*act_c.store)[off + i] * r + shift;
                }
            }
        }
        step.achieved = norm::channel_stats(blended, 0.0);
        step.output = run_layer_range(m, blended, cut + 1, m.layers.size());
        steps.push_back(std::move(step));
    }
    return steps;
}

MultiSwapResult stats_swap_layers(Model& m, const Tensor& content, const Tensor& donor,
                                  const std::vector<int>& sites) {
    const std::vector<int> site_layers = padain_layer_indices(m);
    std::vector<int> chosen(sites);
    std::sort(chosen.begin(), chosen.end());
    chosen.erase(std::unique(chosen.begin(), chosen.end()), chosen.end());
    for (const int s : chosen) {
        if (s < 0 || s >= static_cast<int>(site_layers.size())) {
            throw InputError("stats_swap_layers: site " + std::to_string(s) +
                             " out of range, model has " +
                             std::to_string(site_layers.size()) + " pAdaIN sites");
        }
    }
    require_same_shape(content.shape, donor.shape, "stats_swap_layers");

    MultiSwapResult res;
    Tensor cur_c = content;
    Tensor cur_d = donor;
    std::size_t pos = 0;
    const double eps = 1e-12;
    for (const int s : chosen) {
        const std::size_t cut = static_cast<std::size_t>(site_layers[static_cast<std::size_t>(s)]);
        cur_c = run_layer_range(m, cur_c, pos, cut);
        cur_d = run_layer_range(m, cur_d, pos, cut);
        const norm::ChannelStats st_c = norm::channel_stats(cur_c, eps);
        const norm::ChannelStats st_d = norm::channel_stats(cur_d, eps);
        const int N = cur_c.shape.n, C = cur_c.shape.c;
        const std::size_t plane = cur_c.shape.plane();
        Tensor swapped = make_tensor<float>(cur_c.shape);
        for (int n = 0; n < N; ++n) {
            for (int c = 0; c < C; ++c) {
                const std::size_t nc = static_cast<std::size_t>(n) * C + c;
                // Content keeps donor == content bitwise: r is exactly 1 and
                // the shift exactly 0 when the two stats coincide.
                const float r = st_d.sigma[nc] / st_c.sigma[nc];
                const float shift = st_d.mu[nc] - r * st_c.mu[nc];
                const std::size_t off = nc * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    (*swapped.store)[off + i] = (*cur_c.store)[off + i] * r + shift;
                }
            }
        }
        const norm::ChannelStats ach = norm::channel_stats(swapped, eps);
        LayerSwapReport rep;
        rep.site = s;
        for (std::size_t nc = 0; nc < ach.mu.size(); ++nc) {
            rep.max_mu_residual =
                std::max(rep.max_mu_residual,
                         std::fabs(static_cast<double>(ach.mu[nc]) -
                                   static_cast<double>(st_d.mu[nc])));
            rep.max_sigma_residual =
                std::max(rep.max_sigma_residual,
                         std::fabs(static_cast<double>(ach.sigma[nc]) -
                                   static_cast<double>(st_d.sigma[nc])));
        }
        res.sites.push_back(rep);
        cur_c = swapped;
        pos = cut + 1;
    }
    res.output = run_layer_range(m, cur_c, pos, m.layers.size());
    return res;
}

// ===================== checkpoint i/o =====================

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is, const std::string& path) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) {
        throw IngestError("checkpoint '" + path + "': truncated");
    }
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

void put_string(std::ostream& os, const std::string& s) {
    put_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is, const std::string& path) {
    const std::uint32_t len = get_u32(is, path);
    if (len > (1u << 20)) throw IngestError("checkpoint '" + path + "': oversized string");
    std::string s(len, '\0');
    if (!is.read(s.data(), len)) throw IngestError("checkpoint '" + path + "': truncated");
    return s;
}

void put_array(std::ostream& os, const std::string& name, Shape4 shape,
               const float* data) {
    put_string(os, name);
    put_u32(os, static_cast<std::uint32_t>(shape.n));
    put_u32(os, static_cast<std::uint32_t>(shape.c));
    put_u32(os, static_cast<std::uint32_t>(shape.h));
    put_u32(os, static_cast<std::uint32_t>(shape.w));
    static_assert(sizeof(float) == 4);
    os.write(reinterpret_cast<const char*>(data),
             static_cast<std::streamsize>(shape.numel() * 4));
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string join_ints(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i > 0) s += ',';
        s += std::to_string(v[i]);
    }
    return s;
}

std::vector<int> split_ints(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) out.push_back(std::stoi(tok));
    }
    return out;
}

}  // namespace

void save_checkpoint(const Model& m, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IngestError("checkpoint: cannot open '" + tmp + "' for writing");
        os.write("PDLB", 4);
        put_u32(os, 1);
        std::ostringstream meta;
        meta << "arch=" << m.arch << '\n'
             << "in_channels=" << m.in_channels << '\n'
             << "image_size=" << m.image_size << '\n'
             << "num_classes=" << m.num_classes << '\n'
             << "mask=" << join_ints(m.mask.blocks) << '\n'
             << "on_projection=" << (m.mask.on_projection ? 1 : 0) << '\n'
             << "bn_eps=" << fmt_double(m.bn_eps) << '\n'
             << "bn_momentum=" << fmt_double(m.bn_momentum) << '\n';
        put_string(os, meta.str());
        put_u32(os, static_cast<std::uint32_t>(m.params.size() + 2 * m.bn.size()));
        for (const Param& p : m.params) put_array(os, p.name, p.shape, p.value->data());
        for (const BnState& st : m.bn) {
            const int c = static_cast<int>(st.running_mu.size());
            put_array(os, st.name + ".running_mu", Shape4{1, c, 1, 1},
                      st.running_mu.data());
            put_array(os, st.name + ".running_var", Shape4{1, c, 1, 1},
                      st.running_var.data());
        }
        if (!os) throw IngestError("checkpoint: write to '" + tmp + "' failed");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw IngestError("checkpoint: cannot rename '" + tmp + "' to '" + path + "'");
    }
}

Model load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IngestError("checkpoint '" + path + "': cannot open");
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "PDLB", 4) != 0) {
        throw IngestError("checkpoint '" + path + "': bad magic");
    }
    const std::uint32_t version = get_u32(is, path);
    if (version != 1) {
        throw IngestError("checkpoint '" + path + "': unsupported version " +
                          std::to_string(version));
    }
    std::map<std::string, std::string> meta;
    {
        std::stringstream ms(get_string(is, path));
        std::string line;
        while (std::getline(ms, line)) {
            const std::size_t eq = line.find('=');
            if (eq != std::string::npos) meta[line.substr(0, eq)] = line.substr(eq + 1);
        }
    }
    for (const char* key : {"arch", "in_channels", "image_size", "num_classes", "mask",
                            "on_projection", "bn_eps", "bn_momentum"}) {
        if (meta.find(key) == meta.end()) {
            throw IngestError("checkpoint '" + path + "': missing metadata key '" +
                              std::string(key) + "'");
        }
    }
    PadainMask mask;
    mask.blocks = split_ints(meta["mask"]);
    mask.on_projection = meta["on_projection"] == "1";
    Model m = make_model(meta["arch"], std::stoi(meta["in_channels"]),
                         std::stoi(meta["image_size"]), std::stoi(meta["num_classes"]),
                         mask, 0);
    m.bn_eps = std::stod(meta["bn_eps"]);
    m.bn_momentum = std::stod(meta["bn_momentum"]);

    std::map<std::string, Param*> by_name;
    for (Param& p : m.params) by_name[p.name] = &p;
    std::map<std::string, std::vector<float>*> bn_by_name;
    for (BnState& st : m.bn) {
        bn_by_name[st.name + ".running_mu"] = &st.running_mu;
        bn_by_name[st.name + ".running_var"] = &st.running_var;
    }
    const std::uint32_t count = get_u32(is, path);
    if (count != m.params.size() + 2 * m.bn.size()) {
        throw IngestError("checkpoint '" + path + "': holds " + std::to_string(count) +
                          " arrays, architecture needs " +
                          std::to_string(m.params.size() + 2 * m.bn.size()));
    }
    std::size_t filled = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = get_string(is, path);
        Shape4 s;
        s.n = static_cast<int>(get_u32(is, path));
        s.c = static_cast<int>(get_u32(is, path));
        s.h = static_cast<int>(get_u32(is, path));
        s.w = static_cast<int>(get_u32(is, path));
        const std::size_t numel = s.numel();
        std::vector<float> data(numel);
        if (!is.read(reinterpret_cast<char*>(data.data()),
                     static_cast<std::streamsize>(numel * 4))) {
            throw IngestError("checkpoint '" + path + "': truncated array '" + name + "'");
        }
        if (auto it = by_name.find(name); it != by_name.end()) {
            if (!(it->second->shape == s)) {
                throw IngestError("checkpoint '" + path + "': array '" + name + "' has shape " +
                                  to_string(s) + ", expected " + to_string(it->second->shape));
            }
            *it->second->value = std::move(data);
            ++filled;
        } else if (auto bt = bn_by_name.find(name); bt != bn_by_name.end()) {
            if (bt->second->size() != numel) {
                throw IngestError("checkpoint '" + path + "': array '" + name +
                                  "' has wrong length");
            }
            *bt->second = std::move(data);
            ++filled;
        } else {
            throw IngestError("checkpoint '" + path + "': unknown array '" + name + "'");
        }
    }
    if (filled != m.params.size() + 2 * m.bn.size()) {
        throw IngestError("checkpoint '" + path + "': duplicate or missing arrays");
    }
    return m;
}

}  // namespace padain::model
