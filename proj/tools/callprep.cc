// Copyright 2026 The callprep Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <string>
#include <vector>

#include "callprep/cli.h"
#include "callprep/log.h"

int main(int argc, char** argv) {
  callprep::InitLogging();
  std::vector<std::string> args(argv + 1, argv + argc);
  return callprep::RunCli(args, std::cout, std::cerr);
}
