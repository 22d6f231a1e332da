// Copyright 2026 The callprep Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef CALLPREP_LOG_H_
#define CALLPREP_LOG_H_

#include <spdlog/spdlog.h>

namespace callprep {

// Applies CALLPREP_LOG (error|info|debug) to the default logger; defaults to
// info. Unknown values fall back to info.
void InitLogging();

}  // namespace callprep

#endif  // CALLPREP_LOG_H_
