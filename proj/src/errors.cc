// Copyright 2026 The callprep Authors
// SPDX-License-Identifier: Apache-2.0

#include "callprep/errors.h"

namespace callprep {

std::string_view ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kMissingPresentation: return "MissingPresentation";
    case ErrorKind::kMalformedTurn: return "MalformedTurn";
    case ErrorKind::kEmptyCorpus: return "EmptyCorpus";
    case ErrorKind::kIoFailure: return "IoFailure";
    case ErrorKind::kSchemaViolation: return "SchemaViolation";
    case ErrorKind::kEmptySegments: return "EmptySegments";
    case ErrorKind::kBackendFailure: return "BackendFailure";
    case ErrorKind::kContextOverflow: return "ContextOverflow";
    case ErrorKind::kEmptyTarget: return "EmptyTarget";
    case ErrorKind::kEmptySelection: return "EmptySelection";
    case ErrorKind::kNonFiniteGradient: return "NonFiniteGradient";
    case ErrorKind::kShapeMismatch: return "ShapeMismatch";
    case ErrorKind::kLengthMismatch: return "LengthMismatch";
    case ErrorKind::kTooFewQuestions: return "TooFewQuestions";
    case ErrorKind::kAlignmentError: return "AlignmentError";
    case ErrorKind::kConfigInvalid: return "ConfigInvalid";
    case ErrorKind::kParseError: return "ParseError";
    case ErrorKind::kCheckpointCorrupt: return "CheckpointCorrupt";
  }
  return "Unknown";
}

}  // namespace callprep
