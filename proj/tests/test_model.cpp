#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "padain/model.hpp"
#include "padain/norm.hpp"
#include "padain/rng.hpp"
#include "padain/tensor.hpp"

using padain::RngStream;
using padain::Shape4;
using padain::StreamDomain;
using padain::Tensor;
using padain::TensorT;
namespace model = padain::model;
namespace norm = padain::norm;

namespace {

Tensor rand_image_batch(int n, int c, int s, std::uint64_t seed) {
    RngStream r = RngStream::derive(seed, StreamDomain::kVerify, 40);
    Tensor t = padain::make_tensor<float>({n, c, s, s});
    for (auto& v : *t.store) v = static_cast<float>(r.next_uniform());
    return t;
}

bool same_floats(const std::vector<float>& a, const std::vector<float>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

bool params_bitwise_equal(const model::Model& a, const model::Model& b) {
    if (a.params.size() != b.params.size()) return false;
    for (std::size_t i = 0; i < a.params.size(); ++i) {
        if (a.params[i].name != b.params[i].name) return false;
        if (!(a.params[i].shape == b.params[i].shape)) return false;
        if (!same_floats(*a.params[i].value, *b.params[i].value)) return false;
    }
    return true;
}

int count_layers(const model::Model& m, model::LayerKind k) {
    int n = 0;
    for (const auto& l : m.layers) {
        if (l.kind == k) ++n;
    }
    return n;
}

model::PadainMask mask_of(std::vector<int> blocks, bool on_projection = true) {
    model::PadainMask mk;
    mk.blocks = std::move(blocks);
    mk.on_projection = on_projection;
    return mk;
}

}  // namespace

TEST_CASE("masks control where renormalization sites are inserted") {
    const auto vgg_all = model::make_model("small_vgg", 3, 16, 4, mask_of({0, 1, 2}), 7);
    const auto vgg_none = model::make_model("small_vgg", 3, 16, 4, mask_of({}), 7);
    CHECK(vgg_none.padain_sites == 0);
    CHECK(count_layers(vgg_none, model::LayerKind::kPadain) == 0);
    // Every convolution in a masked block gets exactly one site.
    CHECK(vgg_all.padain_sites == count_layers(vgg_all, model::LayerKind::kConv));
    CHECK(count_layers(vgg_all, model::LayerKind::kPadain) == vgg_all.padain_sites);

    const auto indices = model::padain_layer_indices(vgg_all);
    REQUIRE(static_cast<int>(indices.size()) == vgg_all.padain_sites);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto& l = vgg_all.layers[static_cast<std::size_t>(indices[i])];
        CHECK(l.kind == model::LayerKind::kPadain);
        CHECK(l.padain_id == static_cast<int>(i));
        // A site renormalizes the activation its convolution just produced.
        REQUIRE(indices[i] > 0);
        CHECK(vgg_all.layers[static_cast<std::size_t>(indices[i]) - 1].kind ==
              model::LayerKind::kConv);
    }

    const auto vgg_b1 = model::make_model("small_vgg", 3, 16, 4, mask_of({1}), 7);
    CHECK(vgg_b1.padain_sites > 0);
    CHECK(vgg_b1.padain_sites < vgg_all.padain_sites);
    for (const int idx : model::padain_layer_indices(vgg_b1)) {
        CHECK(vgg_b1.layers[static_cast<std::size_t>(idx)].block == 1);
    }

    // Residual projections contribute sites only when requested.
    const auto rn_proj =
        model::make_model("small_resnet", 3, 16, 4, mask_of({0, 1, 2, 3, 4}, true), 7);
    const auto rn_noproj =
        model::make_model("small_resnet", 3, 16, 4, mask_of({0, 1, 2, 3, 4}, false), 7);
    CHECK(rn_proj.padain_sites > rn_noproj.padain_sites);

    const auto lines = model::describe(vgg_all);
    CHECK(lines.size() == vgg_all.layers.size());
}

TEST_CASE("parameter initialization is independent of the mask") {
    const auto a = model::make_model("small_vgg", 3, 16, 4, mask_of({0, 1, 2}), 11);
    const auto b = model::make_model("small_vgg", 3, 16, 4, mask_of({}), 11);
    CHECK(params_bitwise_equal(a, b));
    const auto c = model::make_model("small_vgg", 3, 16, 4, mask_of({}), 12);
    CHECK_FALSE(params_bitwise_equal(a, c));

    const auto r1 = model::make_model("small_resnet", 3, 16, 4, mask_of({1, 3}), 11);
    const auto r2 = model::make_model("small_resnet", 3, 16, 4, mask_of({}, false), 11);
    CHECK(params_bitwise_equal(r1, r2));

    const auto e1 = model::make_model("conv_autoencoder", 3, 16, 0, mask_of({0, 4}), 11);
    const auto e2 = model::make_model("conv_autoencoder", 3, 16, 0, mask_of({}), 11);
    CHECK(params_bitwise_equal(e1, e2));
}

TEST_CASE("builders validate their inputs") {
    CHECK_THROWS_AS((void)model::make_model("mlp", 3, 16, 4, mask_of({}), 1),
                    padain::InputError);
    // small_vgg pools three times: sizes must be positive multiples of 8.
    CHECK_THROWS_AS((void)model::make_model("small_vgg", 3, 12, 4, mask_of({}), 1),
                    padain::InputError);
    CHECK_THROWS_AS((void)model::make_model("small_resnet", 3, 18, 4, mask_of({}), 1),
                    padain::InputError);
    CHECK_THROWS_AS((void)model::make_model("conv_autoencoder", 3, 18, 0, mask_of({}), 1),
                    padain::InputError);
    CHECK_THROWS_AS((void)model::make_model("small_vgg", 3, 16, 1, mask_of({}), 1),
                    padain::InputError);
    CHECK_THROWS_AS((void)model::make_model("small_vgg", 3, 16, 4, mask_of({3}), 1),
                    padain::InputError);
    CHECK_THROWS_AS((void)model::make_model("small_resnet", 3, 16, 4, mask_of({5}), 1),
                    padain::InputError);
}

TEST_CASE("classifier and autoencoder forwards have the right shapes") {
    auto vgg = model::make_model("small_vgg", 3, 16, 4, mask_of({0, 1, 2}), 3);
    const Tensor x = rand_image_batch(2, 3, 16, 5);
    model::ForwardOptions opt;
    const auto out = model::forward(vgg, x, nullptr, opt);
    CHECK(out.out.shape == Shape4{2, 4, 1, 1});

    auto rn = model::make_model("small_resnet", 3, 16, 4, mask_of({0, 1, 2, 3, 4}), 3);
    CHECK(model::forward(rn, x, nullptr, opt).out.shape == Shape4{2, 4, 1, 1});

    auto ae = model::make_model("conv_autoencoder", 3, 16, 0, mask_of({0, 1, 2, 3, 4}), 3);
    CHECK(model::forward(ae, x, nullptr, opt).out.shape == x.shape);

    const Tensor bad = rand_image_batch(2, 3, 32, 5);
    CHECK_THROWS_AS((void)model::forward(vgg, bad, nullptr, opt), padain::DimError);
}

TEST_CASE("masked sites are transparent when the layer is disabled") {
    // Same seed, different masks: identical parameters, and with no pAdaIN
    // config the graphs must produce bitwise-identical activations.
    auto masked = model::make_model("small_resnet", 3, 16, 4, mask_of({0, 1, 2, 3, 4}), 9);
    auto plain = model::make_model("small_resnet", 3, 16, 4, mask_of({}, false), 9);
    const Tensor x = rand_image_batch(3, 3, 16, 6);
    model::ForwardOptions opt;
    const auto y1 = model::forward(masked, x, nullptr, opt);
    const auto y2 = model::forward(plain, x, nullptr, opt);
    CHECK(same_floats(*y1.out.store, *y2.out.store));

    // Training mode with the layer enabled but p = 0 is equally transparent.
    model::ForwardOptions topt;
    topt.training = true;
    topt.seed = 4;
    norm::PAdaINConfig cfg;
    cfg.p = 0.0;
    topt.padain = &cfg;
    const auto t1 = model::forward(masked, x, nullptr, topt);
    model::ForwardOptions topt2 = topt;
    topt2.padain = nullptr;
    const auto t2 = model::forward(plain, x, nullptr, topt2);
    CHECK(same_floats(*t1.out.store, *t2.out.store));
}

TEST_CASE("train-mode forwards update BN state, eval forwards do not") {
    auto m = model::make_model("small_vgg", 3, 16, 4, mask_of({0, 1, 2}), 13);
    const Tensor x = rand_image_batch(4, 3, 16, 7);
    const auto before_mu = m.bn[0].running_mu;

    model::ForwardOptions eval_opt;
    const auto e1 = model::forward(m, x, nullptr, eval_opt);
    CHECK(same_floats(m.bn[0].running_mu, before_mu));
    const auto e2 = model::forward(m, x, nullptr, eval_opt);
    CHECK(same_floats(*e1.out.store, *e2.out.store));

    model::ForwardOptions train_opt;
    train_opt.training = true;
    (void)model::forward(m, x, nullptr, train_opt);
    CHECK_FALSE(same_floats(m.bn[0].running_mu, before_mu));
}

TEST_CASE("pAdaIN trace reports the applied permutation per site") {
    auto m = model::make_model("small_vgg", 3, 16, 4, mask_of({0, 1, 2}), 15);
    const Tensor x = rand_image_batch(4, 3, 16, 8);
    norm::PAdaINConfig cfg;
    cfg.p = 1.0;
    std::vector<norm::PadainResult<float>> trace;
    model::ForwardOptions opt;
    opt.training = true;
    opt.seed = 21;
    opt.padain = &cfg;
    opt.padain_trace = &trace;
    (void)model::forward(m, x, nullptr, opt);
    REQUIRE(static_cast<int>(trace.size()) == m.padain_sites);
    for (const auto& t : trace) {
        CHECK(t.applied);
        CHECK(t.pi.size() == 4);
    }
    // Eval mode never applies, regardless of p.
    trace.clear();
    opt.training = false;
    (void)model::forward(m, x, nullptr, opt);
    for (const auto& t : trace) CHECK_FALSE(t.applied);
}

TEST_CASE("checkpoints round-trip bitwise and reject damage") {
    auto m = model::make_model("small_resnet", 3, 16, 4, mask_of({0, 2, 4}), 17);
    // Touch BN running stats so the saved state is not all defaults.
    model::ForwardOptions opt;
    opt.training = true;
    (void)model::forward(m, rand_image_batch(4, 3, 16, 9), nullptr, opt);

    const std::string path = "test_model_ckpt.pdlb";
    model::save_checkpoint(m, path);
    auto loaded = model::load_checkpoint(path);
    CHECK(loaded.arch == m.arch);
    CHECK(loaded.image_size == m.image_size);
    CHECK(loaded.num_classes == m.num_classes);
    CHECK(loaded.mask.blocks == m.mask.blocks);
    CHECK(loaded.mask.on_projection == m.mask.on_projection);
    CHECK(loaded.padain_sites == m.padain_sites);
    CHECK(params_bitwise_equal(loaded, m));
    REQUIRE(loaded.bn.size() == m.bn.size());
    for (std::size_t i = 0; i < m.bn.size(); ++i) {
        CHECK(same_floats(loaded.bn[i].running_mu, m.bn[i].running_mu));
        CHECK(same_floats(loaded.bn[i].running_var, m.bn[i].running_var));
    }
    // The reloaded model computes the same function.
    const Tensor x = rand_image_batch(2, 3, 16, 10);
    model::ForwardOptions eval_opt;
    CHECK(same_floats(*model::forward(m, x, nullptr, eval_opt).out.store,
                      *model::forward(loaded, x, nullptr, eval_opt).out.store));

    CHECK_THROWS_AS((void)model::load_checkpoint("no_such_file.pdlb"),
                    padain::IngestError);
    // Truncation must be detected.
    {
        std::ifstream in(path, std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
        std::ofstream out("test_model_trunc.pdlb", std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    CHECK_THROWS_AS((void)model::load_checkpoint("test_model_trunc.pdlb"),
                    padain::IngestError);
    // Corrupted magic must be detected.
    {
        std::ifstream in(path, std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
        bytes[0] = 'X';
        std::ofstream out("test_model_magic.pdlb", std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_AS((void)model::load_checkpoint("test_model_magic.pdlb"),
                    padain::IngestError);
    std::remove(path.c_str());
    std::remove("test_model_trunc.pdlb");
    std::remove("test_model_magic.pdlb");
}

TEST_CASE("stat swaps onto the batch itself are exact no-ops") {
    auto ae = model::make_model("conv_autoencoder", 3, 16, 0, mask_of({0, 1, 2, 3, 4}), 19);
    const Tensor x = rand_image_batch(2, 3, 16, 11);
    std::vector<int> all_sites;
    for (int s = 0; s < ae.padain_sites; ++s) all_sites.push_back(s);
    REQUIRE(all_sites.size() >= 2);

    const auto plain = model::stats_swap_layers(ae, x, x, {});
    const auto swapped = model::stats_swap_layers(ae, x, x, all_sites);
    CHECK(same_floats(*plain.output.store, *swapped.output.store));
    for (const auto& site : swapped.sites) {
        CHECK(site.max_mu_residual < 1e-6);
        CHECK(site.max_sigma_residual < 1e-6);
    }
    CHECK_THROWS_AS(
        (void)model::stats_swap_layers(ae, x, x, {ae.padain_sites}),
        padain::InputError);
}

TEST_CASE("stat swaps onto a donor hit the requested stats") {
    auto ae = model::make_model("conv_autoencoder", 3, 16, 0, mask_of({0, 1, 2, 3, 4}), 19);
    const Tensor content = rand_image_batch(2, 3, 16, 12);
    const Tensor donor = rand_image_batch(2, 3, 16, 13);

    const auto multi = model::stats_swap_layers(ae, content, donor, {0, 1, 2});
    REQUIRE(multi.sites.size() == 3);
    for (const auto& site : multi.sites) {
        CHECK(site.max_mu_residual < 1e-4);
        CHECK(site.max_sigma_residual < 1e-4);
    }

    const auto steps = model::stats_swap_inference(ae, content, donor, 0, {0.0, 0.5, 1.0});
    REQUIRE(steps.size() == 3);
    for (const auto& st : steps) {
        REQUIRE(st.achieved.mu.size() == st.target.mu.size());
        for (std::size_t i = 0; i < st.achieved.mu.size(); ++i) {
            CHECK(std::fabs(st.achieved.mu[i] - st.target.mu[i]) < 1e-4);
            CHECK(std::fabs(st.achieved.sigma[i] - st.target.sigma[i]) < 1e-4);
        }
    }
    CHECK_THROWS_AS(
        (void)model::stats_swap_inference(ae, content, donor, -1, {0.5}),
        padain::InputError);
    CHECK_THROWS_AS(
        (void)model::stats_swap_inference(ae, content, donor, 0, {1.5}),
        padain::InputError);
}
