#include "padain/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "padain/shape.hpp"

namespace padain::config {

namespace {

std::string trim(const std::string& s) {
    const std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

const std::vector<std::string>& Config::known_keys() {
    static const std::vector<std::string> keys = {
        "arch", "dataset", "data_dir", "out_dir", "seed", "epochs", "batch_size",
        "eval_every", "kernels", "checkpoint", "metrics", "suite", "command",
        "optim.lr", "optim.momentum", "optim.weight_decay", "optim.milestones",
        "optim.gamma",
        "padain.p", "padain.eps", "padain.scheme", "padain.perm", "padain.stats",
        "padain.sigma_floor", "padain.mask", "padain.on_projection",
        "aug.enabled", "aug.pad", "aug.rot_deg", "aug.hflip",
        "bn.eps", "bn.momentum",
        "synth.seed", "synth.num_classes", "synth.image_size", "synth.train_per_class",
        "synth.test_per_class", "synth.train_confound", "synth.test_confound",
        "synth.noise_std",
        "sweep.p_values", "sweep.seeds",
        "ablate.variant", "ablate.seeds",
        "statswap.image_a", "statswap.image_b", "statswap.layers",
        "eval.split",
    };
    return keys;
}

void Config::set(const std::string& key, const std::string& value) {
    const auto& known = known_keys();
    if (std::find(known.begin(), known.end(), key) == known.end()) {
        throw UsageError("unknown config key '" + key + "'");
    }
    kv_[key] = value;
}

bool Config::has(const std::string& key) const { return kv_.count(key) > 0; }

Config Config::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IngestError("cannot open config file '" + path + "'");
    Config cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw UsageError("config '" + path + "' line " + std::to_string(lineno) +
                             ": expected key = value");
        }
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

std::string Config::get_str(const std::string& key, const std::string& def) const {
    const auto it = kv_.find(key);
    return it == kv_.end() ? def : it->second;
}

int Config::get_int(const std::string& key, int def) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    try {
        std::size_t pos = 0;
        const int v = std::stoi(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw UsageError("config key '" + key + "': '" + it->second + "' is not an integer");
    }
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t def) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    try {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw UsageError("config key '" + key + "': '" + it->second +
                         "' is not a non-negative integer");
    }
}

double Config::get_double(const std::string& key, double def) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    try {
        std::size_t pos = 0;
        const double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw UsageError("config key '" + key + "': '" + it->second + "' is not a number");
    }
}

bool Config::get_bool(const std::string& key, bool def) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    const std::string& v = it->second;
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw UsageError("config key '" + key + "': '" + v + "' is not a boolean");
}

std::vector<int> Config::get_int_list(const std::string& key,
                                      const std::vector<int>& def) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    std::vector<int> out;
    std::stringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (tok.empty()) continue;
        try {
            out.push_back(std::stoi(tok));
        } catch (const std::exception&) {
            throw UsageError("config key '" + key + "': '" + tok + "' is not an integer");
        }
    }
    return out;
}

std::vector<double> Config::get_double_list(const std::string& key,
                                            const std::vector<double>& def) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    std::vector<double> out;
    std::stringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (tok.empty()) continue;
        try {
            out.push_back(std::stod(tok));
        } catch (const std::exception&) {
            throw UsageError("config key '" + key + "': '" + tok + "' is not a number");
        }
    }
    return out;
}

}  // namespace padain::config
