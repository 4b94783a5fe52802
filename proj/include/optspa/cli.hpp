#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace optspa {

inline constexpr unsigned long long kDefaultSeed = 1234;

// Runs one subcommand. args excludes the program name. Returns the process
// exit status: 0 on success, 1 on runtime/file errors, 2 on usage errors.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace optspa
