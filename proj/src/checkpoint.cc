// Copyright 2026 The callprep Authors
// SPDX-License-Identifier: Apache-2.0

#include "callprep/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <unordered_map>

#include "callprep/errors.h"

namespace callprep {
namespace {

constexpr char kMagic[8] = {'C', 'P', 'R', 'P', 'C', 'K', 'P', 'T'};

void PutU32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint32_t GetU32(const std::string& in, size_t pos) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  return v;
}

[[noreturn]] void Corrupt(const std::string& what) {
  throw Error(ErrorKind::kCheckpointCorrupt, what);
}

}  // namespace

std::string SerializeTensorFile(const TensorFile& file) {
  nlohmann::json header;
  header["meta"] = file.meta;
  header["tensors"] = nlohmann::json::array();
  for (const auto& [name, m] : file.tensors) {
    header["tensors"].push_back({{"name", name}, {"shape", {m.rows, m.cols}}});
  }
  const std::string header_text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  PutU32(out, kCheckpointVersion);
  PutU32(out, static_cast<uint32_t>(header_text.size()));
  out += header_text;
  for (const auto& [name, m] : file.tensors) {
    for (double v : m.data) PutU32(out, std::bit_cast<uint32_t>(static_cast<float>(v)));
  }
  return out;
}

TensorFile ParseTensorFile(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    Corrupt("bad magic");
  }
  const uint32_t version = GetU32(bytes, 8);
  if (version != kCheckpointVersion) Corrupt("unsupported version " + std::to_string(version));
  const uint32_t header_len = GetU32(bytes, 12);
  if (16 + static_cast<size_t>(header_len) > bytes.size()) Corrupt("truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, header_len));
  } catch (const nlohmann::json::exception& e) {
    Corrupt(std::string("header: ") + e.what());
  }
  TensorFile file;
  file.meta = header.value("meta", nlohmann::json::object());
  size_t pos = 16 + header_len;
  for (const auto& t : header.at("tensors")) {
    const int rows = t.at("shape").at(0).get<int>();
    const int cols = t.at("shape").at(1).get<int>();
    if (rows < 0 || cols < 0) Corrupt("negative shape");
    Matrix m(rows, cols);
    if (pos + 4 * m.size() > bytes.size()) Corrupt("truncated payload");
    for (double& v : m.data) {
      v = static_cast<double>(std::bit_cast<float>(GetU32(bytes, pos)));
      pos += 4;
    }
    file.tensors.emplace_back(t.at("name").get<std::string>(), std::move(m));
  }
  if (pos != bytes.size()) Corrupt("trailing bytes");
  return file;
}

void WriteTensorFile(const std::filesystem::path& path, const TensorFile& file) {
  const std::string bytes = SerializeTensorFile(file);
  // Write-then-rename so an interrupted run never leaves a torn checkpoint.
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::kIoFailure, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::kIoFailure, "write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

TensorFile ReadTensorFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIoFailure, "cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return ParseTensorFile(bytes);
}

void AppendTensors(TensorFile& file, std::span<const ConstParamRef> params,
                   const std::string& prefix) {
  for (const auto& p : params) file.tensors.emplace_back(prefix + p.name, *p.tensor);
}

void ExtractTensors(const TensorFile& file, std::span<const ParamRef> params,
                    const std::string& prefix) {
  std::unordered_map<std::string, const Matrix*> by_name;
  for (const auto& [name, m] : file.tensors) by_name[name] = &m;
  for (const auto& p : params) {
    auto it = by_name.find(prefix + p.name);
    if (it == by_name.end()) Corrupt("missing tensor " + prefix + p.name);
    const Matrix& src = *it->second;
    if (src.rows != p.tensor->rows || src.cols != p.tensor->cols) {
      throw Error(ErrorKind::kShapeMismatch, "checkpoint shape mismatch for " + p.name);
    }
    *p.tensor = src;
  }
}

}  // namespace callprep
