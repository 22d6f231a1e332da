// Copyright 2026 The callprep Authors
// SPDX-License-Identifier: Apache-2.0

#include "callprep/tensor.h"

#include <cmath>

#include "callprep/errors.h"

namespace callprep {

double GlobalNorm(std::span<const ConstParamRef> params) {
  double sum = 0.0;
  for (const auto& p : params) {
    for (double v : p.tensor->data) sum += v * v;
  }
  return std::sqrt(sum);
}

void ScaleAll(std::span<const ParamRef> params, double factor) {
  for (const auto& p : params) {
    for (double& v : p.tensor->data) v *= factor;
  }
}

void ZeroAll(std::span<const ParamRef> params) {
  for (const auto& p : params) std::fill(p.tensor->data.begin(), p.tensor->data.end(), 0.0);
}

void AddInto(std::span<const ParamRef> dst, std::span<const ConstParamRef> src) {
  if (dst.size() != src.size()) {
    throw Error(ErrorKind::kShapeMismatch, "parameter lists differ in length");
  }
  for (size_t i = 0; i < dst.size(); ++i) {
    Matrix& d = *dst[i].tensor;
    const Matrix& s = *src[i].tensor;
    if (d.rows != s.rows || d.cols != s.cols) {
      throw Error(ErrorKind::kShapeMismatch, "shape mismatch for " + dst[i].name);
    }
    for (size_t j = 0; j < d.data.size(); ++j) d.data[j] += s.data[j];
  }
}

bool AllFinite(std::span<const ConstParamRef> params) {
  for (const auto& p : params) {
    for (double v : p.tensor->data) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

void SnapToFloat(std::span<const ParamRef> params) {
  for (const auto& p : params) {
    for (double& v : p.tensor->data) v = static_cast<double>(static_cast<float>(v));
  }
}

std::vector<ConstParamRef> AsConst(std::span<const ParamRef> params) {
  std::vector<ConstParamRef> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back({p.name, p.tensor});
  return out;
}

}  // namespace callprep
