#ifndef GMLEVEL_CLI_HPP
#define GMLEVEL_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

#include "gmlevel/error.hpp"

namespace gmlevel::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

int exit_code(ErrorCategory category);

/// Runs one subcommand. Errors are printed to `err` as a one-line JSON object
/// and mapped to the exit codes above.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
/// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gmlevel::cli

#endif  // GMLEVEL_CLI_HPP
