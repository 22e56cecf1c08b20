#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sla::cli {

/// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kFindings = 1;
inline constexpr int kIoOrMalformed = 2;
inline constexpr int kUsage = 3;

/// Runs one command line. args[0] is the program name. Data goes to `out`,
/// diagnostics to `err`. The default mode comes from SLA_MODE when set.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sla::cli
