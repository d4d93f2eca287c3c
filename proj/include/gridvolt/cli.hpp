#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace gridvolt {

inline constexpr const char* kVersion = "0.3.0";

enum ExitCode : int {
  kExitOk = 0,
  kExitValidation = 1,
  kExitUsage = 2,
};

/// Entry point of the `gridvolt` tool. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Sweep worker count: GRIDVOLT_THREADS if set and positive, else hardware concurrency.
int sweep_threads_from_env();

}  // namespace gridvolt
