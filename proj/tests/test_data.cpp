#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "padain/data.hpp"
#include "padain/rng.hpp"
#include "padain/tensor.hpp"
#include "support/probe.hpp"

using padain::RngStream;
using padain::Shape4;
using padain::StreamDomain;
using padain::Tensor;
namespace data = padain::data;

namespace {

data::SynthConfig small_cfg(std::uint64_t seed) {
    data::SynthConfig cfg;
    cfg.num_classes = 4;
    cfg.image_size = 16;
    cfg.train_per_class = 60;
    cfg.test_per_class = 30;
    cfg.seed = seed;
    return cfg;
}

bool same_floats(const std::vector<float>& a, const std::vector<float>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

}  // namespace

TEST_CASE("synthetic generation is deterministic in the seed") {
    const auto a = data::make_synthetic(small_cfg(5));
    const auto b = data::make_synthetic(small_cfg(5));
    CHECK(same_floats(a.train.images, b.train.images));
    CHECK(same_floats(a.test.images, b.test.images));
    CHECK(a.train.labels == b.train.labels);
    const auto c = data::make_synthetic(small_cfg(6));
    CHECK_FALSE(same_floats(a.train.images, c.train.images));
    // Train and test splits are themselves distinct streams.
    CHECK_FALSE(same_floats(a.train.images, a.test.images));
}

TEST_CASE("synthetic splits have the documented shape and range") {
    const auto pair = data::make_synthetic(small_cfg(7));
    CHECK(pair.train.size() == 240);
    CHECK(pair.test.size() == 120);
    CHECK(pair.train.image_floats() == 3u * 16 * 16);
    std::vector<int> counts(4, 0);
    for (const int l : pair.train.labels) {
        REQUIRE(l >= 0);
        REQUIRE(l < 4);
        ++counts[static_cast<std::size_t>(l)];
    }
    for (const int c : counts) CHECK(c == 60);
    for (const float v : pair.train.images) {
        REQUIRE(v >= 0.0f);
        REQUIRE(v <= 1.0f);
    }

    auto bad = small_cfg(7);
    bad.num_classes = 9;
    CHECK_THROWS_AS((void)data::make_synthetic(bad), padain::InputError);
    bad = small_cfg(7);
    bad.image_size = 4;
    CHECK_THROWS_AS((void)data::make_synthetic(bad), padain::InputError);
    bad = small_cfg(7);
    bad.train_confound = 1.5;
    CHECK_THROWS_AS((void)data::make_synthetic(bad), padain::InputError);
}

TEST_CASE("channel means predict the label exactly as the confound dictates") {
    // Tint always matches the class: a linear probe on channel means alone
    // must classify nearly perfectly.
    auto cfg = small_cfg(11);
    cfg.train_per_class = 120;
    cfg.test_per_class = 60;
    cfg.train_confound = 1.0;
    cfg.test_confound = 1.0 / cfg.num_classes;
    const auto pair = data::make_synthetic(cfg);
    CHECK(testsupport::color_probe_accuracy(pair.train) > 0.90);
    // Tint drawn uniformly: the probe has no signal beyond class priors.
    CHECK(testsupport::color_probe_accuracy(pair.test) < 0.45);

    // The production setting sits close to its hit rate: 0.95 plus the
    // 1-in-num_classes chance that a miss still lands on the class color.
    cfg.train_confound = 0.95;
    const auto prod = data::make_synthetic(cfg);
    const double acc = testsupport::color_probe_accuracy(prod.train);
    CHECK(acc > 0.90);
    CHECK(acc <= 1.0);
}

TEST_CASE("gather copies rows bitwise with aligned labels") {
    const auto pair = data::make_synthetic(small_cfg(13));
    Tensor x;
    std::vector<int> y;
    pair.train.gather({5, 0, 17}, &x, &y);
    REQUIRE(x.shape == Shape4{3, 3, 16, 16});
    REQUIRE(y.size() == 3);
    const std::size_t row = pair.train.image_floats();
    const int picks[3] = {5, 0, 17};
    for (int i = 0; i < 3; ++i) {
        CHECK(y[static_cast<std::size_t>(i)] ==
              pair.train.labels[static_cast<std::size_t>(picks[i])]);
        CHECK(std::memcmp(x.data() + static_cast<std::size_t>(i) * row,
                          pair.train.images.data() +
                              static_cast<std::size_t>(picks[i]) * row,
                          row * sizeof(float)) == 0);
    }
    CHECK_THROWS_AS(pair.train.gather({0, 9999}, &x, &y), padain::InputError);
    CHECK_THROWS_AS(pair.train.gather({-1}, &x, &y), padain::InputError);
}

TEST_CASE("binary export and reload quantize once then round-trip") {
    const auto pair = data::make_synthetic(small_cfg(17));
    const std::string dir = "test_data_synth_dir";
    data::export_synth(pair, small_cfg(17), dir);
    const auto back = data::load_synth_dir(dir);
    CHECK(back.train.num_classes == 4);
    CHECK(back.train.image_size == 16);
    CHECK(back.train.labels == pair.train.labels);
    CHECK(back.test.labels == pair.test.labels);
    // First reload sits within one quantization step of the floats.
    REQUIRE(back.train.images.size() == pair.train.images.size());
    float worst = 0.0f;
    for (std::size_t i = 0; i < back.train.images.size(); ++i) {
        worst = std::max(worst, std::fabs(back.train.images[i] - pair.train.images[i]));
    }
    CHECK(worst <= 0.5f / 255.0f + 1e-6f);
    // Byte-sourced data round-trips losslessly from then on.
    data::export_binary(back.train, dir + "/again.bin");
    const auto again = data::load_binary(dir + "/again.bin", 16, 3, 4);
    CHECK(same_floats(again.images, back.train.images));
    CHECK(again.labels == back.train.labels);
    std::filesystem::remove_all(dir);
}

TEST_CASE("binary loaders validate record structure") {
    const std::string path = "test_data_crafted.bin";
    // Two records, 2x2 single... channels=3 here: 1 + 3*4 = 13 bytes each.
    {
        std::ofstream os(path, std::ios::binary);
        unsigned char rec[13] = {1, 0, 51, 102, 153, 204, 255, 10, 20, 30, 40, 50, 60};
        os.write(reinterpret_cast<char*>(rec), 13);
        rec[0] = 0;
        os.write(reinterpret_cast<char*>(rec), 13);
    }
    const auto d = data::load_binary(path, 2, 3, 4);
    REQUIRE(d.size() == 2);
    CHECK(d.labels[0] == 1);
    CHECK(d.labels[1] == 0);
    CHECK(d.images[0] == 0.0f);
    CHECK(d.images[1] == 51.0f / 255.0f);
    CHECK(d.images[5] == 255.0f / 255.0f);

    // A label outside [0, num_classes) is rejected.
    CHECK_THROWS_AS((void)data::load_binary(path, 2, 3, 1), padain::IngestError);
    // A file that is not a whole number of records is rejected.
    {
        std::ofstream os(path, std::ios::binary | std::ios::app);
        os.put(0);
    }
    CHECK_THROWS_AS((void)data::load_binary(path, 2, 3, 4), padain::IngestError);
    CHECK_THROWS_AS((void)data::load_binary("no_such.bin", 2, 3, 4),
                    padain::IngestError);
    CHECK_THROWS_AS((void)data::load_cifar10("no_such_dir", true), padain::IngestError);
    std::remove(path.c_str());
}

TEST_CASE("augmentation with no transforms is the identity and draws nothing") {
    const auto pair = data::make_synthetic(small_cfg(19));
    Tensor x;
    std::vector<int> y;
    pair.train.gather({0, 1, 2, 3}, &x, &y);
    RngStream s = RngStream::derive(3, StreamDomain::kAugment, 0);
    RngStream mirror = s;
    const Tensor out = data::augment_batch(x, s, 0, 0.0, false);
    CHECK(same_floats(*out.store, *x.store));
    CHECK(s.next_uniform() == mirror.next_uniform());
}

TEST_CASE("augmentation is deterministic given the stream state") {
    const auto pair = data::make_synthetic(small_cfg(19));
    Tensor x;
    std::vector<int> y;
    pair.train.gather({4, 5, 6}, &x, &y);
    RngStream s1 = RngStream::derive(5, StreamDomain::kAugment, 1);
    RngStream s2 = RngStream::derive(5, StreamDomain::kAugment, 1);
    const Tensor a = data::augment_batch(x, s1, 2, 15.0, true);
    const Tensor b = data::augment_batch(x, s2, 2, 15.0, true);
    CHECK(same_floats(*a.store, *b.store));
    RngStream s3 = RngStream::derive(5, StreamDomain::kAugment, 2);
    const Tensor c = data::augment_batch(x, s3, 2, 15.0, true);
    CHECK_FALSE(same_floats(*a.store, *c.store));
    CHECK_THROWS_AS((void)data::augment_batch(x, s1, -1, 0.0, false),
                    padain::InputError);
    CHECK_THROWS_AS((void)data::augment_batch(x, s1, 0, -1.0, false),
                    padain::InputError);
}

TEST_CASE("horizontal flips mirror pixels exactly when the coin fires") {
    Tensor x = padain::make_tensor<float>({1, 1, 2, 4});
    for (int i = 0; i < 8; ++i) {
        (*x.store)[static_cast<std::size_t>(i)] = 0.1f * static_cast<float>(i);
    }
    // Find a stream state whose first coin fires, and one whose does not.
    for (const bool want : {true, false}) {
        std::uint64_t idx = 0;
        RngStream probe = RngStream::derive(9, StreamDomain::kAugment, idx);
        while (probe.next_bernoulli(0.5) != want) {
            ++idx;
            probe = RngStream::derive(9, StreamDomain::kAugment, idx);
        }
        RngStream s = RngStream::derive(9, StreamDomain::kAugment, idx);
        const Tensor out = data::augment_batch(x, s, 0, 0.0, true);
        for (int h = 0; h < 2; ++h) {
            for (int w = 0; w < 4; ++w) {
                const float expect = want ? x.at(0, 0, h, 3 - w) : x.at(0, 0, h, w);
                CHECK(out.at(0, 0, h, w) == expect);
            }
        }
    }
}

TEST_CASE("ppm files round-trip through write and read") {
    const auto pair = data::make_synthetic(small_cfg(23));
    const float* img = pair.train.images.data();
    const std::string path = "test_data_img.ppm";
    data::write_ppm(path, img, 16, 16);
    const Tensor back = data::read_ppm(path);
    REQUIRE(back.shape == Shape4{1, 3, 16, 16});
    const std::size_t plane = 16 * 16;
    for (std::size_t p = 0; p < plane * 3; ++p) {
        const float v = std::clamp(img[p], 0.0f, 1.0f);
        const float q = static_cast<float>(std::lround(v * 255.0f)) / 255.0f;
        CHECK(std::fabs((*back.store)[p] - q) < 1e-6f);
    }
    // A rewrite of the reloaded image is byte-identical.
    data::write_ppm("test_data_img2.ppm", back.data(), 16, 16);
    std::ifstream f1(path, std::ios::binary), f2("test_data_img2.ppm", std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)),
                         std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)),
                         std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
    std::remove(path.c_str());
    std::remove("test_data_img2.ppm");

    {
        std::ofstream os("test_data_bad.ppm", std::ios::binary);
        os << "P5\n2 2\n255\n";
        os.write("abcd", 4);
    }
    CHECK_THROWS_AS((void)data::read_ppm("test_data_bad.ppm"), padain::IngestError);
    std::remove("test_data_bad.ppm");
    CHECK_THROWS_AS((void)data::read_ppm("no_such.ppm"), padain::IngestError);
}

TEST_CASE("image_channel_means reduces one image of a batch") {
    Tensor x = padain::make_tensor<float>({2, 3, 2, 2});
    for (std::size_t i = 0; i < x.numel(); ++i) {
        (*x.store)[i] = static_cast<float>(i) * 0.01f;
    }
    const auto m = data::image_channel_means(x, 1);
    REQUIRE(m.size() == 3);
    for (int c = 0; c < 3; ++c) {
        double s = 0.0;
        for (int h = 0; h < 2; ++h) {
            for (int w = 0; w < 2; ++w) s += x.at(1, c, h, w);
        }
        CHECK(std::fabs(m[static_cast<std::size_t>(c)] - s / 4.0) < 1e-12);
    }
    CHECK_THROWS_AS((void)data::image_channel_means(x, 2), padain::InputError);
    CHECK_THROWS_AS((void)data::image_channel_means(x, -1), padain::InputError);
}
