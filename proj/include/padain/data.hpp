#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "padain/rng.hpp"
#include "padain/tensor.hpp"

namespace padain::data {

// In-memory image classification dataset. Pixels are floats in [0, 1], stored
// NCHW with channel-planar layout per image (CIFAR convention).
struct Dataset {
    int image_size = 0;
    int channels = 3;
    int num_classes = 0;
    std::vector<float> images;  // size() * channels * image_size^2
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
    std::size_t image_floats() const {
        return static_cast<std::size_t>(channels) * image_size * image_size;
    }
    // Gather rows into a batch tensor plus aligned labels.
    void gather(const std::vector<int>& idx, Tensor* x, std::vector<int>* y) const;
};

// Confounded synthetic task: the label is carried by a local glyph shape, and
// a global color tint correlates with the label at `train_confound` on the
// train split but only `test_confound` at test time. A tint "hit" copies the
// class palette color; a miss draws a palette color uniformly over all
// classes, so confound = 0 makes color carry no label information at all.
struct SynthConfig {
    int num_classes = 4;
    int image_size = 16;
    int train_per_class = 500;
    int test_per_class = 250;
    double train_confound = 0.95;
    double test_confound = 0.05;
    double noise_std = 0.05;
    std::uint64_t seed = 0;
};

struct SynthPair {
    Dataset train;
    Dataset test;
};

SynthPair make_synthetic(const SynthConfig& cfg);

// CIFAR-10 binary layout: per record, 1 label byte then channels*S*S pixel
// bytes, channel-planar. Loading divides by 255; exporting multiplies back,
// which round-trips losslessly for byte-sourced data.
Dataset load_cifar10(const std::string& dir, bool train);
Dataset load_binary(const std::string& path, int image_size, int channels,
                    int num_classes);
void export_binary(const Dataset& d, const std::string& path);

// Synthetic export: same record layout plus a sidecar synth_meta.txt holding
// the SynthConfig and seed so the split can be reloaded or regenerated.
void export_synth(const SynthPair& pair, const SynthConfig& cfg, const std::string& dir);
SynthPair load_synth_dir(const std::string& dir);

// Zero-pad by `pad`, random crop back to the original size, rotate by a
// uniform angle in [-max_rot_deg, +max_rot_deg] (bilinear, zero fill), and
// optionally mirror horizontally. Draw order per sample: crop y, crop x,
// angle, then the flip coin when enabled.
Tensor augment_batch(const Tensor& x, RngStream& stream, int pad, double max_rot_deg,
                     bool hflip);

// Binary PPM (P6, maxval 255); img points at channel-planar RGB floats.
void write_ppm(const std::string& path, const float* img, int h, int w);
Tensor read_ppm(const std::string& path);

// Per-channel spatial means of one image in a batch tensor; used by the
// stats-swap drift report.
std::vector<double> image_channel_means(const Tensor& batch, int index);

}  // namespace padain::data
