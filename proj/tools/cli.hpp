#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace angiogan::cli {

/// Parses `args` (args[0] is the program name) and runs one subcommand.
/// Returns 0 on success, 2 on a usage error and 1 on a runtime failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// "10784" -> "10,784".
std::string group_thousands(std::size_t n);

}  // namespace angiogan::cli
