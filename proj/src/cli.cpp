#include "padain/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "padain/data.hpp"
#include "padain/kernels.hpp"
#include "padain/model.hpp"
#include "padain/norm.hpp"
#include "padain/shape.hpp"
#include "padain/train.hpp"
#include "padain/verify.hpp"

namespace padain::cli {

namespace fs = std::filesystem;
using config::Config;

namespace {

// Default synthetic seed; pinned so bare `train`/`gen-synth` runs are
// reproducible without any flags.
constexpr std::uint64_t kSynthSeedDefault = 12345;

const char* usage_text() {
    return
        "usage: padain-lab <command> [--config FILE] [--key value ...]\n"
        "\n"
        "commands\n"
        "  train       train a model; writes metrics.csv, final.pdlb, best.pdlb\n"
        "  eval        evaluate a checkpoint on a dataset split\n"
        "  verify      run property suites: grad | stats | bn-interaction | perm | all\n"
        "  sweep-p     train over sweep.p_values x sweep.seeds; writes long + summary CSV\n"
        "  ablate      variant tables: blocks | backprop | random-stats | fixed-perm\n"
        "  statswap    autoencoder demo: re-normalize image a to image b's stats\n"
        "  gen-synth   generate the confounded synthetic dataset to disk\n"
        "\n"
        "Keys use dotted names (padain.p, optim.lr, synth.seed, ...); `--key value`\n"
        "and `--key=value` are equivalent, flags override the config file. `verify`\n"
        "and `ablate` also accept their selector as a bare word (`verify grad`).\n"
        "Outputs land in out_dir (default runs/<timestamp>-<confighash>) along with\n"
        "config.txt, the fully resolved snapshot that replays the run bit-exactly.\n"
        "\n"
        "exit codes: 0 ok, 1 check failed or run diverged, 2 usage error, 3 missing data\n";
}

std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_short(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

std::string join_ints(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(v[i]);
    }
    return out;
}

std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 1469598103934665603ull) {
    for (const char ch : s) {
        h ^= static_cast<unsigned char>(ch);
        h *= 1099511628211ull;
    }
    return h;
}

// Hash of every resolved key=value pair except out_dir (which would make the
// name depend on itself) — used to name the default run directory.
std::string config_hash8(const Config& cfg) {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& [k, v] : cfg.items()) {
        if (k == "out_dir") continue;
        h = fnv1a(v, fnv1a("=", fnv1a(k, h)));
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%08x", static_cast<unsigned>(h ^ (h >> 32)));
    return buf;
}

std::string timestamp_utc() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm);
    return buf;
}

// Ensures out_dir and command are pinned in the config, creates the
// directory, and returns it.
std::string resolve_out_dir(Config& cfg, const std::string& command) {
    cfg.set("command", command);
    if (!cfg.has("out_dir")) {
        cfg.set("out_dir", "runs/" + timestamp_utc() + "-" + config_hash8(cfg));
    }
    const std::string dir = cfg.get_str("out_dir", "");
    fs::create_directories(dir);
    return dir;
}

void write_snapshot(const Config& cfg, const std::string& dir) {
    const std::string path = dir + "/config.txt";
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IngestError("cannot write '" + path + "'");
    for (const auto& [k, v] : cfg.items()) os << k << " = " << v << '\n';
}

void write_kv_file(const std::string& path,
                   const std::vector<std::pair<std::string, std::string>>& rows) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IngestError("cannot write '" + path + "'");
    for (const auto& [k, v] : rows) os << k << " = " << v << '\n';
}

// "none" (or an empty value) disables an artifact path.
std::string path_or_none(const Config& cfg, const std::string& key,
                         const std::string& def) {
    const std::string v = cfg.get_str(key, def);
    return v == "none" ? std::string() : v;
}

void apply_kernel_choice(const Config& cfg) {
    if (cfg.has("kernels")) kernels::select(cfg.get_str("kernels", "auto"));
}

data::SynthConfig synth_config(const Config& cfg) {
    data::SynthConfig sc;
    sc.num_classes = cfg.get_int("synth.num_classes", sc.num_classes);
    sc.image_size = cfg.get_int("synth.image_size", sc.image_size);
    sc.train_per_class = cfg.get_int("synth.train_per_class", sc.train_per_class);
    sc.test_per_class = cfg.get_int("synth.test_per_class", sc.test_per_class);
    sc.train_confound = cfg.get_double("synth.train_confound", sc.train_confound);
    sc.test_confound = cfg.get_double("synth.test_confound", sc.test_confound);
    sc.noise_std = cfg.get_double("synth.noise_std", sc.noise_std);
    sc.seed = cfg.get_u64("synth.seed", kSynthSeedDefault);
    return sc;
}

std::string resolve_data_dir(const Config& cfg) {
    if (cfg.has("data_dir")) return cfg.get_str("data_dir", "");
    if (const char* env = std::getenv("PADAIN_DATA_DIR")) {
        if (*env != '\0') return env;
    }
    throw IngestError("no dataset directory: set data_dir or PADAIN_DATA_DIR");
}

data::SynthPair load_dataset(const Config& cfg) {
    const std::string name = cfg.get_str("dataset", "synth");
    if (name == "synth") return data::make_synthetic(synth_config(cfg));
    if (name == "synth-dir") return data::load_synth_dir(resolve_data_dir(cfg));
    if (name == "cifar10") {
        const std::string dir = resolve_data_dir(cfg);
        data::SynthPair pair;
        pair.train = data::load_cifar10(dir, true);
        pair.test = data::load_cifar10(dir, false);
        return pair;
    }
    throw UsageError("config key 'dataset': unknown dataset '" + name +
                     "' (expected synth, synth-dir, or cifar10)");
}

int mask_units(const std::string& arch) {
    if (arch == "small_vgg") return 3;
    if (arch == "small_resnet" || arch == "conv_autoencoder") return 5;
    throw UsageError("config key 'arch': unknown architecture '" + arch +
                     "' (expected small_vgg, small_resnet, or conv_autoencoder)");
}

model::PadainMask parse_mask(const Config& cfg, const std::string& arch) {
    model::PadainMask mask;
    mask.on_projection = cfg.get_bool("padain.on_projection", true);
    const std::string spec = cfg.get_str("padain.mask", "all");
    if (spec == "all") {
        for (int b = 0; b < mask_units(arch); ++b) mask.blocks.push_back(b);
    } else if (spec != "none" && !spec.empty()) {
        mask.blocks = cfg.get_int_list("padain.mask", {});
    }
    return mask;
}

norm::BackpropScheme parse_scheme(const std::string& v) {
    if (v == "own-only") return norm::BackpropScheme::kOwnOnly;
    if (v == "both") return norm::BackpropScheme::kBoth;
    if (v == "donor-only") return norm::BackpropScheme::kDonorOnly;
    if (v == "neither") return norm::BackpropScheme::kNeither;
    throw UsageError("config key 'padain.scheme': unknown scheme '" + v +
                     "' (expected own-only, both, donor-only, or neither)");
}

norm::PAdaINConfig parse_padain(const Config& cfg, std::uint64_t run_seed) {
    norm::PAdaINConfig pc;
    pc.p = cfg.get_double("padain.p", pc.p);
    if (!(pc.p >= 0.0 && pc.p <= 1.0)) {
        throw UsageError("config key 'padain.p': " + fmt_short(pc.p) +
                         " is out of range [0, 1]");
    }
    pc.eps = cfg.get_double("padain.eps", pc.eps);
    if (!(pc.eps >= 0.0)) {
        throw UsageError("config key 'padain.eps': must be >= 0");
    }
    pc.scheme = parse_scheme(cfg.get_str("padain.scheme", "own-only"));
    const std::string perm = cfg.get_str("padain.perm", "resample");
    if (perm == "resample") {
        pc.perm_policy = norm::PermPolicy::kResample;
    } else if (perm == "fixed-per-run") {
        pc.perm_policy = norm::PermPolicy::kFixedPerRun;
    } else {
        throw UsageError("config key 'padain.perm': unknown policy '" + perm +
                         "' (expected resample or fixed-per-run)");
    }
    const std::string stats = cfg.get_str("padain.stats", "permuted");
    if (stats == "permuted") {
        pc.stats_source = norm::StatsSource::kPermuted;
    } else if (stats == "random-normal") {
        pc.stats_source = norm::StatsSource::kRandomNormal;
    } else {
        throw UsageError("config key 'padain.stats': unknown source '" + stats +
                         "' (expected permuted or random-normal)");
    }
    pc.random_sigma_floor = cfg.get_double("padain.sigma_floor", pc.random_sigma_floor);
    if (!(pc.random_sigma_floor > 0.0)) {
        throw UsageError("config key 'padain.sigma_floor': must be > 0");
    }
    // The per-run fixed permutation keys off the run seed so reruns replay it.
    pc.fixed_perm_seed = run_seed;
    return pc;
}

// Milestones default to [epochs/2, 3*epochs/4], dropping entries that fall
// outside [1, epochs) or collide at tiny epoch counts.
std::vector<int> default_milestones(int epochs) {
    std::vector<int> out;
    for (const int m : {epochs / 2, 3 * epochs / 4}) {
        if (m >= 1 && m < epochs && (out.empty() || m > out.back())) out.push_back(m);
    }
    return out;
}

train::TrainConfig make_train_config(const Config& cfg) {
    train::TrainConfig tc;
    tc.arch = cfg.get_str("arch", "small_vgg");
    mask_units(tc.arch);  // validates the name before anything heavy runs
    tc.epochs = cfg.get_int("epochs", 40);
    if (tc.epochs < 1) throw UsageError("config key 'epochs': must be >= 1");
    tc.batch_size = cfg.get_int("batch_size", 128);
    if (tc.batch_size < 1) throw UsageError("config key 'batch_size': must be >= 1");
    tc.seed = cfg.get_u64("seed", 1);
    tc.eval_every = cfg.get_int("eval_every", 1);
    if (tc.eval_every < 1) throw UsageError("config key 'eval_every': must be >= 1");
    tc.optim.lr = cfg.get_double("optim.lr", 0.1);
    tc.optim.momentum = cfg.get_double("optim.momentum", 0.9);
    tc.optim.weight_decay = cfg.get_double("optim.weight_decay", 5e-4);
    tc.optim.gamma = cfg.get_double("optim.gamma", 0.2);
    tc.optim.milestones =
        cfg.get_int_list("optim.milestones", default_milestones(tc.epochs));
    tc.padain = parse_padain(cfg, tc.seed);
    tc.mask = parse_mask(cfg, tc.arch);
    tc.augment = cfg.get_bool("aug.enabled", true);
    tc.aug_pad = cfg.get_int("aug.pad", 2);
    tc.aug_rot_deg = cfg.get_double("aug.rot_deg", 15.0);
    tc.aug_hflip = cfg.get_bool("aug.hflip", false);
    tc.bn_eps = cfg.get_double("bn.eps", 1e-5);
    tc.bn_momentum = cfg.get_double("bn.momentum", 0.1);
    return tc;
}

// Writes every effective training key back into the config so the snapshot is
// fully resolved: loading it reproduces the run with no defaults involved.
void materialize_train_keys(Config& cfg, const train::TrainConfig& tc) {
    cfg.set("arch", tc.arch);
    cfg.set("dataset", cfg.get_str("dataset", "synth"));
    cfg.set("epochs", std::to_string(tc.epochs));
    cfg.set("batch_size", std::to_string(tc.batch_size));
    cfg.set("seed", std::to_string(tc.seed));
    cfg.set("eval_every", std::to_string(tc.eval_every));
    cfg.set("kernels", kernels::active_name());
    cfg.set("optim.lr", fmt_g(tc.optim.lr));
    cfg.set("optim.momentum", fmt_g(tc.optim.momentum));
    cfg.set("optim.weight_decay", fmt_g(tc.optim.weight_decay));
    cfg.set("optim.gamma", fmt_g(tc.optim.gamma));
    cfg.set("optim.milestones", join_ints(tc.optim.milestones));
    cfg.set("padain.p", fmt_g(tc.padain.p));
    cfg.set("padain.eps", fmt_g(tc.padain.eps));
    cfg.set("padain.scheme", cfg.get_str("padain.scheme", "own-only"));
    cfg.set("padain.perm", cfg.get_str("padain.perm", "resample"));
    cfg.set("padain.stats", cfg.get_str("padain.stats", "permuted"));
    cfg.set("padain.sigma_floor", fmt_g(tc.padain.random_sigma_floor));
    cfg.set("padain.mask",
            tc.mask.blocks.empty() ? "none" : join_ints(tc.mask.blocks));
    cfg.set("padain.on_projection", tc.mask.on_projection ? "true" : "false");
    cfg.set("aug.enabled", tc.augment ? "true" : "false");
    cfg.set("aug.pad", std::to_string(tc.aug_pad));
    cfg.set("aug.rot_deg", fmt_g(tc.aug_rot_deg));
    cfg.set("aug.hflip", tc.aug_hflip ? "true" : "false");
    cfg.set("bn.eps", fmt_g(tc.bn_eps));
    cfg.set("bn.momentum", fmt_g(tc.bn_momentum));
    if (cfg.get_str("dataset", "synth") == "synth") {
        const data::SynthConfig sc = synth_config(cfg);
        cfg.set("synth.seed", std::to_string(sc.seed));
        cfg.set("synth.num_classes", std::to_string(sc.num_classes));
        cfg.set("synth.image_size", std::to_string(sc.image_size));
        cfg.set("synth.train_per_class", std::to_string(sc.train_per_class));
        cfg.set("synth.test_per_class", std::to_string(sc.test_per_class));
        cfg.set("synth.train_confound", fmt_g(sc.train_confound));
        cfg.set("synth.test_confound", fmt_g(sc.test_confound));
        cfg.set("synth.noise_std", fmt_g(sc.noise_std));
    }
}

void print_epoch(const train::MetricsRow& row) {
    char buf[256];
    if (row.evaluated) {
        std::snprintf(buf, sizeof(buf),
                      "epoch %3d  lr %-8g train loss %-10.6g acc %-8.4f test loss "
                      "%-10.6g acc %-8.4f %.1fs\n",
                      row.epoch, row.lr, row.train_loss, row.train_acc, row.test_loss,
                      row.test_acc, row.wall_seconds + row.eval_seconds);
    } else {
        std::snprintf(buf, sizeof(buf),
                      "epoch %3d  lr %-8g train loss %-10.6g acc %-8.4f %.1fs\n",
                      row.epoch, row.lr, row.train_loss, row.train_acc,
                      row.wall_seconds);
    }
    std::cout << buf << std::flush;
}

struct RunOutcome {
    train::TrainResult result;
    std::string dir;
};

// Shared by train / sweep-p / ablate: resolves the run directory, loads the
// dataset, trains, and writes metrics + summary + resolved snapshot.
RunOutcome run_training(Config cfg, bool want_checkpoints, bool echo_epochs) {
    RunOutcome out;
    out.dir = resolve_out_dir(cfg, "train");
    const data::SynthPair ds = load_dataset(cfg);
    train::TrainConfig tc = make_train_config(cfg);
    tc.metrics_path = path_or_none(cfg, "metrics", out.dir + "/metrics.csv");
    if (want_checkpoints) {
        tc.checkpoint_path = path_or_none(cfg, "checkpoint", out.dir + "/final.pdlb");
        tc.best_checkpoint_path = out.dir + "/best.pdlb";
    }
    if (echo_epochs) tc.on_epoch = print_epoch;

    materialize_train_keys(cfg, tc);
    write_snapshot(cfg, out.dir);

    if (echo_epochs) {
        std::cout << "train: arch " << tc.arch << ", " << ds.train.size() << "/"
                  << ds.test.size() << " train/test images, p "
                  << fmt_short(tc.padain.p) << ", kernels "
                  << kernels::active_name() << ", out " << out.dir << "\n";
    }
    out.result = train::train(tc, ds.train, ds.test);

    std::uint64_t applied = 0;
    for (const train::MetricsRow& r : out.result.rows) applied += r.padain_applied;
    char hash[20];
    std::snprintf(hash, sizeof(hash), "%016llx",
                  static_cast<unsigned long long>(
                      out.result.rows.empty() ? 0 : out.result.rows.back().rng_hash));
    write_kv_file(
        out.dir + "/summary.txt",
        {{"command", "train"},
         {"final_train_accuracy", fmt_g(out.result.final_train_acc)},
         {"final_test_accuracy", fmt_g(out.result.final_test_acc)},
         {"final_test_loss", fmt_g(out.result.final_test_loss)},
         {"best_test_accuracy", fmt_g(out.result.best_test_acc)},
         {"best_epoch", std::to_string(out.result.best_epoch)},
         {"completed_epochs", std::to_string(out.result.completed_epochs)},
         {"diverged", out.result.diverged ? "1" : "0"},
         {"padain_applied_total", std::to_string(applied)},
         {"mean_epoch_seconds", fmt_g(out.result.mean_epoch_seconds)},
         {"rng_hash", hash}});
    return out;
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (const double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Sample standard deviation; 0 for fewer than two points.
double std_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (const double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

struct MemberRow {
    std::string label;
    double p = 0.0;
    int seed = 0;
    double final_acc = 0.0;
    double best_acc = 0.0;
    double final_loss = 0.0;
    bool diverged = false;
    std::string dir;
};

// One training per (override-set, seed) member of a sweep or ablation.
MemberRow run_member(const Config& base, const std::string& member_dir,
                     const std::vector<std::pair<std::string, std::string>>& overrides,
                     int seed) {
    Config cfg = base;
    cfg.set("out_dir", member_dir);
    cfg.set("seed", std::to_string(seed));
    for (const auto& [k, v] : overrides) cfg.set(k, v);
    const RunOutcome out = run_training(std::move(cfg), false, true);
    MemberRow row;
    row.seed = seed;
    row.final_acc = out.result.final_test_acc;
    row.best_acc = out.result.best_test_acc;
    row.final_loss = out.result.final_test_loss;
    row.diverged = out.result.diverged;
    row.dir = out.dir;
    return row;
}

void write_member_summary_csv(const std::string& path,
                              const std::vector<MemberRow>& rows,
                              const std::vector<std::string>& label_order) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IngestError("cannot write '" + path + "'");
    os << "label,n,mean_accuracy,std_accuracy,mean_best,std_best\n";
    for (const std::string& label : label_order) {
        std::vector<double> fin, best;
        for (const MemberRow& r : rows) {
            if (r.label == label) {
                fin.push_back(r.final_acc);
                best.push_back(r.best_acc);
            }
        }
        os << label << ',' << fin.size() << ',' << fmt_g(mean_of(fin)) << ','
           << fmt_g(std_of(fin)) << ',' << fmt_g(mean_of(best)) << ','
           << fmt_g(std_of(best)) << '\n';
    }
}

}  // namespace

Config parse_args(const std::string& command, const std::vector<std::string>& args) {
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides;
    std::vector<std::string> positionals;
    for (std::size_t i = 0; i < args.size(); ++i) {
        const std::string& a = args[i];
        if (a.rfind("--", 0) == 0) {
            std::string key = a.substr(2);
            std::string value;
            const std::size_t eq = key.find('=');
            if (eq != std::string::npos) {
                value = key.substr(eq + 1);
                key = key.substr(0, eq);
            } else {
                if (++i >= args.size()) {
                    throw UsageError("flag '--" + key + "' expects a value");
                }
                value = args[i];
            }
            if (key.empty()) throw UsageError("empty flag name");
            if (key == "config") {
                config_path = value;
            } else {
                overrides.emplace_back(key, value);
            }
        } else {
            positionals.push_back(a);
        }
    }

    Config cfg;
    if (!config_path.empty()) cfg = Config::from_file(config_path);
    if (!positionals.empty()) {
        std::string key;
        if (command == "verify") {
            key = "suite";
        } else if (command == "ablate") {
            key = "ablate.variant";
        } else {
            throw UsageError("unexpected argument '" + positionals[0] + "'");
        }
        if (positionals.size() > 1) {
            throw UsageError("unexpected argument '" + positionals[1] + "'");
        }
        cfg.set(key, positionals[0]);
    }
    for (const auto& [k, v] : overrides) cfg.set(k, v);
    return cfg;
}

int cmd_train(Config cfg) {
    apply_kernel_choice(cfg);
    const RunOutcome out = run_training(std::move(cfg), true, true);
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "final test accuracy %.4f (best %.4f at epoch %d)\n",
                  out.result.final_test_acc, out.result.best_test_acc,
                  out.result.best_epoch);
    std::cout << buf << "artifacts in " << out.dir << "\n";
    if (out.result.diverged) {
        std::cerr << "error: training diverged (non-finite loss) after "
                  << out.result.completed_epochs << " epochs\n";
        return kCheckFailed;
    }
    return kOk;
}

int cmd_eval(Config cfg) {
    apply_kernel_choice(cfg);
    if (!cfg.has("checkpoint")) {
        throw UsageError("eval requires --checkpoint <file>");
    }
    const std::string split = cfg.get_str("eval.split", "test");
    if (split != "train" && split != "test") {
        throw UsageError("config key 'eval.split': expected train or test");
    }
    model::Model m = model::load_checkpoint(cfg.get_str("checkpoint", ""));
    m.bn_eps = cfg.get_double("bn.eps", m.bn_eps);
    const data::SynthPair ds = load_dataset(cfg);
    const data::Dataset& d = split == "train" ? ds.train : ds.test;
    const int batch = cfg.get_int("batch_size", 128);
    if (batch < 1) throw UsageError("config key 'batch_size': must be >= 1");
    const train::EvalResult ev = train::evaluate(m, d, batch);

    const std::string dir = resolve_out_dir(cfg, "eval");
    write_snapshot(cfg, dir);
    write_kv_file(dir + "/summary.txt", {{"command", "eval"},
                                         {"split", split},
                                         {"examples", std::to_string(d.size())},
                                         {"loss", fmt_g(ev.loss)},
                                         {"accuracy", fmt_g(ev.accuracy)}});
    char buf[120];
    std::snprintf(buf, sizeof(buf), "eval %s: loss %.6g accuracy %.4f (%zu examples)\n",
                  split.c_str(), ev.loss, ev.accuracy, d.size());
    std::cout << buf;
    return kOk;
}

int cmd_verify(Config cfg) {
    apply_kernel_choice(cfg);
    const std::string suite = cfg.get_str("suite", "all");
    const std::vector<verify::CheckResult> rows = verify::run_suite(suite);
    verify::print_report(rows, std::cout);
    int failed = 0;
    for (const verify::CheckResult& r : rows) {
        if (!r.pass) ++failed;
    }
    std::cout << "verify " << suite << ": " << rows.size() << " checks, " << failed
              << " failed\n";
    if (cfg.has("out_dir")) {
        const std::string dir = resolve_out_dir(cfg, "verify");
        write_snapshot(cfg, dir);
        std::ofstream os(dir + "/report.txt", std::ios::trunc);
        verify::print_report(rows, os);
    }
    return failed == 0 ? kOk : kCheckFailed;
}

int cmd_sweep_p(Config cfg) {
    apply_kernel_choice(cfg);
    const std::vector<double> values =
        cfg.get_double_list("sweep.p_values", {0.0, 0.01, 0.05, 0.1});
    if (values.empty()) {
        throw UsageError("config key 'sweep.p_values': must list at least one value");
    }
    for (const double p : values) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw UsageError("config key 'sweep.p_values': " + fmt_short(p) +
                             " is out of range [0, 1]");
        }
    }
    const std::vector<int> seeds = cfg.get_int_list("sweep.seeds", {1, 2, 3});
    if (seeds.empty()) {
        throw UsageError("config key 'sweep.seeds': must list at least one seed");
    }

    const std::string dir = resolve_out_dir(cfg, "sweep-p");
    write_snapshot(cfg, dir);
    std::vector<MemberRow> rows;
    std::vector<std::string> order;
    for (const double p : values) {
        order.push_back(fmt_short(p));
        for (const int seed : seeds) {
            const std::string member =
                dir + "/p" + fmt_short(p) + "-s" + std::to_string(seed);
            std::cout << "sweep member p=" << fmt_short(p) << " seed=" << seed
                      << "\n";
            MemberRow row =
                run_member(cfg, member, {{"padain.p", fmt_g(p)}}, seed);
            row.label = fmt_short(p);
            row.p = p;
            rows.push_back(row);
        }
    }

    std::ofstream os(dir + "/sweep.csv", std::ios::trunc);
    if (!os) throw IngestError("cannot write '" + dir + "/sweep.csv'");
    os << "p,seed,final_accuracy,best_accuracy,final_loss,diverged,run_dir\n";
    for (const MemberRow& r : rows) {
        os << fmt_g(r.p) << ',' << r.seed << ',' << fmt_g(r.final_acc) << ','
           << fmt_g(r.best_acc) << ',' << fmt_g(r.final_loss) << ','
           << (r.diverged ? 1 : 0) << ',' << r.dir << '\n';
    }
    os.close();
    write_member_summary_csv(dir + "/sweep_summary.csv", rows, order);

    bool any_diverged = false;
    std::cout << "p          mean_acc   std_acc\n";
    for (const std::string& label : order) {
        std::vector<double> fin;
        for (const MemberRow& r : rows) {
            if (r.label == label) fin.push_back(r.final_acc);
            if (r.label == label && r.diverged) any_diverged = true;
        }
        char buf[100];
        std::snprintf(buf, sizeof(buf), "%-10s %-10.4f %-10.4f\n", label.c_str(),
                      mean_of(fin), std_of(fin));
        std::cout << buf;
    }
    std::cout << "tables in " << dir << "\n";
    if (any_diverged) {
        std::cerr << "error: at least one sweep member diverged\n";
        return kCheckFailed;
    }
    return kOk;
}

int cmd_ablate(Config cfg) {
    apply_kernel_choice(cfg);
    if (!cfg.has("ablate.variant")) {
        throw UsageError(
            "ablate requires a variant: blocks, backprop, random-stats, or fixed-perm");
    }
    const std::string variant = cfg.get_str("ablate.variant", "");
    using Overrides = std::vector<std::pair<std::string, std::string>>;
    std::vector<std::pair<std::string, Overrides>> arms;
    if (variant == "blocks") {
        // Single blocks, the 1-3 band, the deep pair, and the full mask on the
        // residual architecture (stem is unit 0, residual stages are 1..4).
        if (!cfg.has("arch")) cfg.set("arch", "small_resnet");
        const std::pair<const char*, const char*> block_arms[] = {
            {"0", "0"},     {"1", "1"},     {"2", "2"},       {"3", "3"},
            {"1-3", "1,2,3"}, {"4", "4"},   {"3-4", "3,4"},   {"all", "all"},
        };
        for (const auto& [label, mask] : block_arms) {
            arms.emplace_back(label, Overrides{{"padain.mask", mask}});
        }
    } else if (variant == "backprop") {
        arms.emplace_back("baseline", Overrides{{"padain.p", "0"}});
        for (const char* s : {"own-only", "both", "donor-only", "neither"}) {
            arms.emplace_back(s, Overrides{{"padain.scheme", s}});
        }
    } else if (variant == "random-stats") {
        arms.emplace_back("baseline", Overrides{{"padain.p", "0"}});
        arms.emplace_back("permuted", Overrides{{"padain.stats", "permuted"}});
        arms.emplace_back("random-normal",
                          Overrides{{"padain.stats", "random-normal"}});
    } else if (variant == "fixed-perm") {
        arms.emplace_back("baseline", Overrides{{"padain.p", "0"}});
        arms.emplace_back("resample", Overrides{{"padain.perm", "resample"}});
        arms.emplace_back("fixed-per-run",
                          Overrides{{"padain.perm", "fixed-per-run"}});
    } else {
        throw UsageError("config key 'ablate.variant': unknown variant '" + variant +
                         "' (expected blocks, backprop, random-stats, or fixed-perm)");
    }

    const std::vector<int> seeds = cfg.get_int_list("ablate.seeds", {1, 2, 3});
    if (seeds.empty()) {
        throw UsageError("config key 'ablate.seeds': must list at least one seed");
    }

    const std::string dir = resolve_out_dir(cfg, "ablate");
    write_snapshot(cfg, dir);
    std::vector<MemberRow> rows;
    std::vector<std::string> order;
    for (const auto& [label, overrides] : arms) {
        order.push_back(label);
        for (const int seed : seeds) {
            std::cout << "ablate " << variant << " arm=" << label << " seed=" << seed
                      << "\n";
            MemberRow row = run_member(
                cfg, dir + "/" + label + "-s" + std::to_string(seed), overrides, seed);
            row.label = label;
            rows.push_back(row);
        }
    }

    std::ofstream os(dir + "/ablate.csv", std::ios::trunc);
    if (!os) throw IngestError("cannot write '" + dir + "/ablate.csv'");
    os << "variant,label,seed,final_accuracy,best_accuracy,diverged,run_dir\n";
    for (const MemberRow& r : rows) {
        os << variant << ',' << r.label << ',' << r.seed << ',' << fmt_g(r.final_acc)
           << ',' << fmt_g(r.best_acc) << ',' << (r.diverged ? 1 : 0) << ',' << r.dir
           << '\n';
    }
    os.close();
    write_member_summary_csv(dir + "/ablate_summary.csv", rows, order);

    bool any_diverged = false;
    std::cout << "label           mean_acc   std_acc\n";
    for (const std::string& label : order) {
        std::vector<double> fin;
        for (const MemberRow& r : rows) {
            if (r.label == label) fin.push_back(r.final_acc);
            if (r.label == label && r.diverged) any_diverged = true;
        }
        char buf[100];
        std::snprintf(buf, sizeof(buf), "%-15s %-10.4f %-10.4f\n", label.c_str(),
                      mean_of(fin), std_of(fin));
        std::cout << buf;
    }
    std::cout << "tables in " << dir << "\n";
    if (any_diverged) {
        std::cerr << "error: at least one ablation member diverged\n";
        return kCheckFailed;
    }
    return kOk;
}

int cmd_statswap(Config cfg) {
    apply_kernel_choice(cfg);
    if (!cfg.has("checkpoint")) {
        throw UsageError("statswap requires --checkpoint <autoencoder file>");
    }
    for (const char* key : {"statswap.image_a", "statswap.image_b"}) {
        if (!cfg.has(key)) {
            throw UsageError(std::string("statswap requires --") + key + " <ppm file>");
        }
    }
    model::Model m = model::load_checkpoint(cfg.get_str("checkpoint", ""));
    if (m.num_classes != 0) {
        throw UsageError("statswap requires an autoencoder checkpoint, got arch '" +
                         m.arch + "'");
    }
    const Tensor a = data::read_ppm(cfg.get_str("statswap.image_a", ""));
    const Tensor b = data::read_ppm(cfg.get_str("statswap.image_b", ""));
    for (const Tensor* t : {&a, &b}) {
        if (t->shape.c != m.in_channels || t->shape.h != m.image_size ||
            t->shape.w != m.image_size) {
            throw InputError("statswap: image is " + std::to_string(t->shape.h) + "x" +
                             std::to_string(t->shape.w) + "x" +
                             std::to_string(t->shape.c) + ", model expects " +
                             std::to_string(m.image_size) + "x" +
                             std::to_string(m.image_size) + "x" +
                             std::to_string(m.in_channels));
        }
    }

    std::vector<int> sites;
    const std::string spec = cfg.get_str("statswap.layers", "all");
    if (spec == "all") {
        for (int s = 0; s < m.padain_sites; ++s) sites.push_back(s);
    } else if (spec != "none" && !spec.empty()) {
        sites = cfg.get_int_list("statswap.layers", {});
    }
    for (const int s : sites) {
        if (s < 0 || s >= m.padain_sites) {
            throw UsageError("config key 'statswap.layers': site " + std::to_string(s) +
                             " out of range [0, " + std::to_string(m.padain_sites) +
                             ")");
        }
    }

    const std::string dir = resolve_out_dir(cfg, "statswap");
    write_snapshot(cfg, dir);
    const model::MultiSwapResult swap = model::stats_swap_layers(m, a, b, sites);
    const model::MultiSwapResult plain = model::stats_swap_layers(m, a, b, {});
    data::write_ppm(dir + "/swap.ppm", swap.output.data(), m.image_size, m.image_size);
    data::write_ppm(dir + "/recon.ppm", plain.output.data(), m.image_size,
                    m.image_size);

    const std::vector<double> mean_a = data::image_channel_means(a, 0);
    const std::vector<double> mean_swap = data::image_channel_means(swap.output, 0);
    const std::vector<double> mean_plain = data::image_channel_means(plain.output, 0);
    auto dist = [](const std::vector<double>& u, const std::vector<double>& v) {
        double s = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) s += (u[i] - v[i]) * (u[i] - v[i]);
        return std::sqrt(s);
    };
    std::vector<std::pair<std::string, std::string>> report;
    report.emplace_back("sites", sites.empty() ? "none" : join_ints(sites));
    for (const model::LayerSwapReport& r : swap.sites) {
        report.emplace_back("site" + std::to_string(r.site) + "_mu_residual",
                            fmt_g(r.max_mu_residual));
        report.emplace_back("site" + std::to_string(r.site) + "_sigma_residual",
                            fmt_g(r.max_sigma_residual));
    }
    report.emplace_back("mean_color_distance_swap_vs_content",
                        fmt_g(dist(mean_swap, mean_a)));
    report.emplace_back("mean_color_distance_recon_vs_content",
                        fmt_g(dist(mean_plain, mean_a)));
    write_kv_file(dir + "/report.txt", report);
    for (const auto& [k, v] : report) std::cout << k << " = " << v << "\n";
    std::cout << "images in " << dir << "\n";
    return kOk;
}

int cmd_gen_synth(Config cfg) {
    const data::SynthConfig sc = synth_config(cfg);
    std::string dir;
    if (cfg.has("data_dir")) {
        dir = cfg.get_str("data_dir", "");
        cfg.set("command", "gen-synth");
        fs::create_directories(dir);
    } else {
        dir = resolve_out_dir(cfg, "gen-synth");
    }
    const data::SynthPair pair = data::make_synthetic(sc);
    data::export_synth(pair, sc, dir);
    cfg.set("synth.seed", std::to_string(sc.seed));
    write_snapshot(cfg, dir);
    std::cout << "gen-synth: " << pair.train.size() << " train / " << pair.test.size()
              << " test images (" << sc.num_classes << " classes, "
              << sc.image_size << "x" << sc.image_size << ") in " << dir << "\n";
    return kOk;
}

int run(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    if (args.empty()) {
        std::cerr << usage_text();
        return kUsage;
    }
    if (args[0] == "--help" || args[0] == "-h" || args[0] == "help") {
        std::cout << usage_text();
        return kOk;
    }
    const std::string command = args[0];
    const std::vector<std::string> rest(args.begin() + 1, args.end());
    try {
        Config cfg = parse_args(command, rest);
        if (command == "train") return cmd_train(std::move(cfg));
        if (command == "eval") return cmd_eval(std::move(cfg));
        if (command == "verify") return cmd_verify(std::move(cfg));
        if (command == "sweep-p") return cmd_sweep_p(std::move(cfg));
        if (command == "ablate") return cmd_ablate(std::move(cfg));
        if (command == "statswap") return cmd_statswap(std::move(cfg));
        if (command == "gen-synth") return cmd_gen_synth(std::move(cfg));
        throw UsageError("unknown command '" + command + "'");
    } catch (const IngestError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kMissingData;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const DimError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    }
}

}  // namespace padain::cli
