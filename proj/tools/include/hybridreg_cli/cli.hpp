#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hybridreg::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;      // I/O, parsing or validation failure
inline constexpr int kExitNumerical = 2;  // numerical abort or failed numerical check

// Runs `hybridreg <args...>` (args exclude the program name). Normal output
// goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hybridreg::cli
