#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace aequiv::cli {

inline constexpr const char* kToolName = "aequiv";
inline constexpr const char* kToolVersion = "0.1.0";

// Entry point behind the `aequiv` binary. `args` excludes the program name.
// Returns 0 on success, 1 usage, 2 I/O, 3 validation, 4 bridge failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace aequiv::cli
