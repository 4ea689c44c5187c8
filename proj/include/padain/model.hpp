#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "padain/norm.hpp"
#include "padain/tensor.hpp"

namespace padain::model {

struct Param {
    std::string name;
    Shape4 shape;
    std::shared_ptr<std::vector<float>> value;
};

struct BnState {
    std::string name;
    std::vector<float> running_mu;
    std::vector<float> running_var;  // before eps, initialized to 1
};

enum class LayerKind {
    kConv,
    kConvTranspose,
    kPadain,
    kBatchNorm,
    kRelu,
    kMaxPool,
    kGlobalAvgPool,
    kFlatten,
    kLinear,
    kResidualSave,
    kResidualAdd,
};

struct Layer {
    LayerKind kind{};
    int w = -1, b = -1;            // conv / linear param indices
    int stride = 1, pad = 0, out_pad = 0;
    int pool_k = 2, pool_stride = 2;
    int gamma = -1, beta = -1, bn = -1;
    int padain_id = -1;            // stable id feeding the rng stream derivation
    int block = -1;                // mask unit this layer belongs to
    // Projection path of a residual join (1x1 conv + bn on the saved input).
    int proj_w = -1, proj_b = -1, proj_gamma = -1, proj_beta = -1, proj_bn = -1;
    int proj_stride = 1;
    int proj_padain_id = -1;
};

// Which mask units (stem / blocks) get a pAdaIN site after each of their
// convolutions. on_projection extends that to residual projection convs.
struct PadainMask {
    std::vector<int> blocks;
    bool on_projection = true;

    bool has(int block) const;
};

struct Model {
    std::string arch;
    int in_channels = 3;
    int image_size = 16;
    int num_classes = 0;           // 0 for the autoencoder
    PadainMask mask;
    double bn_eps = 1e-5;
    double bn_momentum = 0.1;

    std::vector<Param> params;
    std::vector<BnState> bn;
    std::vector<Layer> layers;
    int padain_sites = 0;

    std::size_t param_count() const;
};

// Builders draw initialization from `init` in layer order (He fan-in normals
// for conv/linear weights, zero biases, unit gammas). pAdaIN sites carry no
// parameters, so the draw sequence is mask-independent: a masked build and an
// unmasked build from equal seeds hold bitwise-equal parameters.
Model make_small_vgg(int in_channels, int image_size, int num_classes,
                     const PadainMask& mask, RngStream& init);
Model make_small_resnet(int in_channels, int image_size, int num_classes,
                        const PadainMask& mask, RngStream& init);
Model make_autoencoder(int in_channels, int image_size, const PadainMask& mask,
                       RngStream& init);
Model make_model(const std::string& arch, int in_channels, int image_size,
                 int num_classes, const PadainMask& mask, std::uint64_t seed);

struct ForwardOptions {
    bool training = false;
    std::uint64_t seed = 0;  // run seed; pAdaIN streams derive from (seed, site, step)
    std::uint64_t step = 0;
    const norm::PAdaINConfig* padain = nullptr;  // null: sites are pass-through
    std::vector<norm::PadainResult<float>>* padain_trace = nullptr;
};

struct ForwardResult {
    Tensor out;
    std::vector<Tensor> bound;  // tape-bound views of model params, index-aligned
};

// Runs the layer graph. With a tape, binds every parameter as a leaf first so
// the caller can read gradients after backward; train-mode BN updates running
// statistics in place.
ForwardResult forward(Model& m, const Tensor& x, TapeF* tape, const ForwardOptions& opt);

// One line per layer, in execution order; used by the insertion-audit checks.
std::vector<std::string> describe(const Model& m);

// Indices into m.layers of every pAdaIN site, in execution order.
std::vector<int> padain_layer_indices(const Model& m);

// Autoencoder demo: run content and donor up to the given pAdaIN site, move
// the content activation's per-channel stats toward the donor's by each blend
// weight (0 keeps content stats, 1 adopts donor stats), decode, and report the
// achieved stats at the swap point.
struct StatSwapStep {
    double blend = 0.0;
    Tensor output;                       // decoded image batch
    norm::ChannelStats achieved;         // stats of the blended activation
    norm::ChannelStats target;           // blended stats it was asked to match
};
std::vector<StatSwapStep> stats_swap_inference(Model& m, const Tensor& content,
                                               const Tensor& donor, int site,
                                               const std::vector<double>& blends);

// Cumulative variant: the content batch fully adopts the donor batch's
// per-channel stats at every listed site (donor activations stay unmodified),
// then decodes. Reports per-site worst residual between the stats achieved
// after the swap and the donor's stats at that depth.
struct LayerSwapReport {
    int site = 0;
    double max_mu_residual = 0.0;
    double max_sigma_residual = 0.0;
};
struct MultiSwapResult {
    Tensor output;
    std::vector<LayerSwapReport> sites;
};
MultiSwapResult stats_swap_layers(Model& m, const Tensor& content, const Tensor& donor,
                                  const std::vector<int>& sites);

// Checkpoint container: little-endian, magic "PDLB", versioned, named f32
// arrays for parameters and BN running stats. save_checkpoint writes to a
// temporary path and renames. load_checkpoint rebuilds the architecture from
// the stored metadata and fails with IngestError on any mismatch.
void save_checkpoint(const Model& m, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace padain::model
