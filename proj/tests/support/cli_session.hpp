#pragma once

// Drives the command line in-process against the files in fixtures/cli.

#include <filesystem>
#include <string>
#include <vector>

namespace sla::testing {

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

/// args exclude the program name.
CliResult run_cli(const std::vector<std::string>& args);

class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Scripted session over every subcommand. Returns one line per mismatch
/// against the expected exit codes and golden files; empty means pass.
std::vector<std::string> cli_session(const std::filesystem::path& fixtures);

}  // namespace sla::testing
