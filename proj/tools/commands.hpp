// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace srnn::cli {

enum ExitCode : int {
  kOk = 0,
  kConfigError = 2,
  kIoError = 3,
  kContractError = 4,
};

/// Entry point of the sparse-rnn tool; returns the process exit code.
int run_cli(int argc, const char* const* argv);
/// Same, with argv[0] supplied.
int run_cli(const std::vector<std::string>& args);

}  // namespace srnn::cli
