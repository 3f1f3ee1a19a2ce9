#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace repsim::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitIo = 2;

/// Runs one toolkit subcommand. `args` excludes the program name.
/// Returns 0 on success, 1 on usage or validation errors, 2 on IO errors.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace repsim::cli
