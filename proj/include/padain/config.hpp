#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace padain::config {

// Dotted-key configuration: `key = value` lines in a file, '#' comments,
// overridden by --key value pairs on the command line. Every key must be in
// the known-key registry; anything else is a usage error, not a silent ignore.
class Config {
public:
    static Config from_file(const std::string& path);

    void set(const std::string& key, const std::string& value);  // validates key
    bool has(const std::string& key) const;

    std::string get_str(const std::string& key, const std::string& def) const;
    int get_int(const std::string& key, int def) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t def) const;
    double get_double(const std::string& key, double def) const;
    bool get_bool(const std::string& key, bool def) const;
    std::vector<int> get_int_list(const std::string& key,
                                  const std::vector<int>& def) const;
    std::vector<double> get_double_list(const std::string& key,
                                        const std::vector<double>& def) const;

    static const std::vector<std::string>& known_keys();

    // Sorted view of everything set; used for snapshots and config hashing.
    const std::map<std::string, std::string>& items() const { return kv_; }

private:
    std::map<std::string, std::string> kv_;
};

}  // namespace padain::config
