#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace synthdet::cli {

struct CommandResult {
  int exit_code = 0;  // 0 ok, 1 runtime error, 2 usage error
  std::vector<std::filesystem::path> artifacts_written;
  std::string summary;
};

/// Runs one subcommand. `args` excludes the program name.
CommandResult run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace synthdet::cli
