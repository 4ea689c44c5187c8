#pragma once

#include <string>
#include <vector>

#include "padain/config.hpp"

namespace padain::cli {

// Exit codes shared by every command; a stable contract for scripts and CI.
enum ExitCode : int {
    kOk = 0,
    kCheckFailed = 1,  // a verification or property check was out of tolerance
    kUsage = 2,        // bad command, flag, key, or value
    kMissingData = 3,  // dataset / checkpoint / image file absent or unreadable
};

// Parses arguments after the command name: an optional bare positional that
// maps to a command-specific key (verify: suite, ablate: ablate.variant),
// "--config FILE" (loaded first so explicit flags always win), and
// "--key value" or "--key=value" overrides.
config::Config parse_args(const std::string& command,
                          const std::vector<std::string>& args);

// Commands; each returns an ExitCode value. They throw on errors; run() maps
// exception families to exit codes at the top level.
int cmd_train(config::Config cfg);
int cmd_eval(config::Config cfg);
int cmd_verify(config::Config cfg);
int cmd_sweep_p(config::Config cfg);
int cmd_ablate(config::Config cfg);
int cmd_statswap(config::Config cfg);
int cmd_gen_synth(config::Config cfg);

// Full dispatcher: `padain-lab <command> [--config FILE] [--key value ...]`.
// UsageError/InputError/DimError map to exit 2, IngestError to exit 3.
int run(int argc, const char* const* argv);

}  // namespace padain::cli
