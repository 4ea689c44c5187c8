#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "padain/data.hpp"
#include "padain/model.hpp"
#include "padain/norm.hpp"

namespace padain::train {

struct OptimConfig {
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::vector<int> milestones;  // epochs at which lr is multiplied by gamma
    double gamma = 0.2;
};

// Step schedule: base lr times gamma once per milestone already reached.
double lr_at_epoch(const OptimConfig& cfg, int epoch);

struct TrainConfig {
    std::string arch = "small_vgg";
    int epochs = 10;
    int batch_size = 128;
    std::uint64_t seed = 0;
    int eval_every = 1;  // test-set pass every k epochs (the last epoch always)
    OptimConfig optim;
    norm::PAdaINConfig padain;
    model::PadainMask mask;
    bool augment = true;
    int aug_pad = 2;
    double aug_rot_deg = 15.0;
    bool aug_hflip = false;
    double bn_eps = 1e-5;
    double bn_momentum = 0.1;
    std::string checkpoint_path;       // empty: no final checkpoint written
    std::string best_checkpoint_path;  // empty: no best-accuracy checkpoint
    std::string metrics_path;          // empty: no csv written
    // Observer called once per epoch after the row is final; for progress
    // output only, it must not mutate training state.
    std::function<void(const struct MetricsRow&)> on_epoch;
};

// One row per epoch. wall_seconds/eval_seconds are wall-clock and excluded
// from the bit-exact reproducibility contract; every other number, including
// rng_hash, is a deterministic function of the config and seed.
struct MetricsRow {
    int epoch = 0;
    std::uint64_t steps = 0;  // cumulative optimizer steps
    double lr = 0.0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    bool evaluated = false;  // test columns valid only when true
    double test_loss = 0.0;
    double test_acc = 0.0;
    std::uint64_t padain_applied = 0;  // coin fires this epoch, summed over sites
    double wall_seconds = 0.0;         // batch loop only
    double eval_seconds = 0.0;
    std::uint64_t rng_hash = 0;  // running transcript fingerprint, see train()
};

struct TrainResult {
    model::Model net;
    std::vector<MetricsRow> rows;
    bool diverged = false;
    int completed_epochs = 0;
    double final_train_acc = 0.0;
    double final_test_acc = 0.0;
    double final_test_loss = 0.0;
    double best_test_acc = 0.0;
    int best_epoch = -1;
    double mean_epoch_seconds = 0.0;
};

struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;           // 0 for the autoencoder
    std::vector<int> predictions;    // empty for the autoencoder
};

// Eval-mode pass over the whole dataset in fixed order. Classifier models get
// mean cross-entropy and accuracy; the autoencoder gets mean squared
// reconstruction error.
EvalResult evaluate(model::Model& m, const data::Dataset& d, int batch_size);

// SGD with heavy-ball momentum and coupled weight decay. On a non-finite loss
// the epoch stops before the offending update, the last finite state is kept,
// and the result is marked diverged.
TrainResult train(const TrainConfig& cfg, const data::Dataset& train_set,
                  const data::Dataset& test_set);

// CSV with header epoch,split,loss,accuracy,lr,wall_time_s,rng_hash: a train
// row per epoch plus a test row for evaluated epochs. wall_time_s is the one
// column allowed to differ between reruns.
void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path);

}  // namespace padain::train
