// SPDX-License-Identifier: Apache-2.0
//
// Entry point of the nmt command-line tool, callable in-process.
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace nmt::cli {

enum ExitCode : int { kOk = 0, kUsageError = 1, kDataError = 2 };

/// `args` excludes the program name. Data goes to `out` unless an output file
/// is given; progress and diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace nmt::cli
