#pragma once

#include <exception>
#include <ostream>

namespace l2g {

enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitConfig = 2,
  kExitNumeric = 3,
  kExitIo = 4,
};

// Entry point of the `l2g` tool: gen-data, train, eval, plot,
// export-embeddings and gradcheck. Never throws; returns the exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

int exit_code_for(const std::exception& error);

}  // namespace l2g
