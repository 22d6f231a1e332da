// Copyright 2026 The callprep Authors
// SPDX-License-Identifier: Apache-2.0

// The `callprep` command line: ingest, stats, segment, train, generate,
// predict, evaluate, report.

#ifndef CALLPREP_CLI_H_
#define CALLPREP_CLI_H_

#include <ostream>
#include <string>
#include <vector>

namespace callprep {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

// `args` excludes the program name.
int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace callprep

#endif  // CALLPREP_CLI_H_
