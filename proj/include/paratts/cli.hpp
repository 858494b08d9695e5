#pragma once

// The paratts command: gen-corpus, stats, extract, train, synth, eval and
// analyze. Exit codes: 0 success, 1 usage error, 2 invalid input, 3 runtime
// failure; diagnostics go to `err`.

#include <ostream>
#include <string>
#include <vector>

namespace paratts {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitRuntime = 3;

// Environment variable naming the config file used when --config is absent.
inline constexpr const char* kConfigEnv = "PARATTS_CONFIG";

// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace paratts
