// Copyright 2026 The callprep Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef CALLPREP_ERRORS_H_
#define CALLPREP_ERRORS_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace callprep {

enum class ErrorKind {
  kMissingPresentation,
  kMalformedTurn,
  kEmptyCorpus,
  kIoFailure,
  kSchemaViolation,
  kEmptySegments,
  kBackendFailure,
  kContextOverflow,
  kEmptyTarget,
  kEmptySelection,
  kNonFiniteGradient,
  kShapeMismatch,
  kLengthMismatch,
  kTooFewQuestions,
  kAlignmentError,
  kConfigInvalid,
  kParseError,
  kCheckpointCorrupt,
};

std::string_view ErrorKindName(ErrorKind kind);

// All library failures surface as Error; `kind` lets callers branch without
// string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(ErrorKindName(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace callprep

#endif  // CALLPREP_ERRORS_H_
