// Copyright 2026 The callprep Authors
// SPDX-License-Identifier: Apache-2.0

// Versioned tensor file:
//   8 bytes  magic "CPRPCKPT"
//   u32 LE   format version (1)
//   u32 LE   header length in bytes
//   header   JSON {"meta": {...}, "tensors": [{"name", "shape": [r, c]}, ...]}
//   payload  each tensor's values as little-endian float32, in header order

#ifndef CALLPREP_CHECKPOINT_H_
#define CALLPREP_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "callprep/tensor.h"
#include "json.hpp"

namespace callprep {

inline constexpr uint32_t kCheckpointVersion = 1;

struct TensorFile {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Matrix>> tensors;
};

std::string SerializeTensorFile(const TensorFile& file);
TensorFile ParseTensorFile(const std::string& bytes);

void WriteTensorFile(const std::filesystem::path& path, const TensorFile& file);
TensorFile ReadTensorFile(const std::filesystem::path& path);

void AppendTensors(TensorFile& file, std::span<const ConstParamRef> params,
                   const std::string& prefix = "");
// Copies tensors named `prefix + ref.name` into `params`; shapes must match.
void ExtractTensors(const TensorFile& file, std::span<const ParamRef> params,
                    const std::string& prefix = "");

}  // namespace callprep

#endif  // CALLPREP_CHECKPOINT_H_
