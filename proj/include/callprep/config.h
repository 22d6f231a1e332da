// Copyright 2026 The callprep Authors
// SPDX-License-Identifier: Apache-2.0

// Run configuration: one JSON document, every field optional.

#ifndef CALLPREP_CONFIG_H_
#define CALLPREP_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "callprep/generator.h"
#include "callprep/metrics.h"
#include "callprep/training.h"
#include "json.hpp"

namespace callprep {

struct RunPaths {
  std::filesystem::path raw;          // directory of raw transcripts (ingest)
  std::filesystem::path corpus;       // corpus JSONL
  std::filesystem::path questions;    // reference question JSONL
  std::filesystem::path segments;     // segment JSONL
  std::filesystem::path checkpoints;  // training output directory
  std::filesystem::path reports;      // evaluation output directory
};

struct RunConfig {
  uint64_t seed = 0;
  RunPaths paths;
  TrainConfig train;  // train.retriever / top_k / seed mirror the top level
  DecodeParams decode;
  int num_questions = 5;
  int topics = kDefaultTopicCount;

  // Throws ConfigInvalid naming the offending field path.
  void Validate() const;
};

// Parses a config document; an empty or whitespace-only text yields the
// defaults. Throws ParseError (with line and column) on malformed JSON and
// ConfigInvalid on unknown keys or wrongly typed values.
RunConfig ParseRunConfig(std::string_view text);
RunConfig LoadConfig(const std::filesystem::path& path);

nlohmann::ordered_json RunConfigToJson(const RunConfig& config);

}  // namespace callprep

#endif  // CALLPREP_CONFIG_H_
