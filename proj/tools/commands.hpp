#ifndef ADACBM_TOOLS_COMMANDS_HPP_
#define ADACBM_TOOLS_COMMANDS_HPP_

#include <iosfwd>
#include <string>
#include <vector>

namespace adacbm::tools {

// Entry point of the `adacbm` executable. `args` excludes the program name.
// Subcommands: synth, select, train, eval, explain, serve. Returns the process
// exit code; diagnostics go to `err`, reports to `out`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace adacbm::tools

#endif  // ADACBM_TOOLS_COMMANDS_HPP_
