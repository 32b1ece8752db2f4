#pragma once

#include <string>
#include <vector>

namespace mstack {

inline constexpr const char* kVersion = "0.1.0";

// Exit status mapping.
enum ExitCode : int {
  kExitOk = 0,
  kExitNotConverged = 1,
  kExitConfig = 2,
  kExitData = 3,
};

// Subcommands: fit, simulate, reproduce, replay. Arguments exclude the program name.
int run_cli(const std::vector<std::string>& args);
int run_cli(int argc, char** argv);

}  // namespace mstack
