#ifndef MMFW_CLI_APP_HPP
#define MMFW_CLI_APP_HPP

#include <string>
#include <vector>

namespace mmfw::cli {

// Runs one subcommand. Returns 0 on success, 2 on usage errors, 1 on
// runtime failures. Output files are written atomically.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);  // args[0] = program name

}  // namespace mmfw::cli

#endif  // MMFW_CLI_APP_HPP
