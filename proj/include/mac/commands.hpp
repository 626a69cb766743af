#pragma once

#include <exception>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

namespace mac {

/// Process exit codes of the `mac` tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumerical = 4,
};

/// Maps an exception onto the exit-code contract.
int exit_code_for(const std::exception& e);

/// Flat `key = value` settings; '#' starts a comment. Throws ConfigError on
/// malformed lines or duplicate keys.
std::map<std::string, std::string> parse_settings(std::istream& in);
std::map<std::string, std::string> load_settings(const std::filesystem::path& path);

/// Entry point of the command-line tool. Diagnostics go to `err`, summaries
/// to `out`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mac
