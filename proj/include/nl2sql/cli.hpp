#pragma once

#include <iosfwd>

namespace nl2sql {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitStageErrors = 3,
};

// Entry point behind the nl2sql binary. Never throws.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nl2sql
