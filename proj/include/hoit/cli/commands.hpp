#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace hoit::cli {

// Process exit codes.
constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;    // bad flags, config, inputs or checkpoint mismatch
constexpr int kExitRuntime = 3;  // training abort or other runtime failure

// Runs `hoit <subcommand> ...`; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hoit::cli
