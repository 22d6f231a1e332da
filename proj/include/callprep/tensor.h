// Copyright 2026 The callprep Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef CALLPREP_TENSOR_H_
#define CALLPREP_TENSOR_H_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace callprep {

// Dense row-major matrix of doubles. Vectors are 1 x n.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

  double& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double operator()(int r, int c) const {
    return data[static_cast<size_t>(r) * cols + c];
  }
  std::span<double> Row(int r) {
    return {data.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)};
  }
  std::span<const double> Row(int r) const {
    return {data.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)};
  }
  size_t size() const { return data.size(); }

  bool operator==(const Matrix&) const = default;
};

// Non-owning view of one named parameter tensor. Optimizers, clipping and
// checkpointing all operate on lists of these.
struct ParamRef {
  std::string name;
  Matrix* tensor;
};

struct ConstParamRef {
  std::string name;
  const Matrix* tensor;
};

double GlobalNorm(std::span<const ConstParamRef> params);
void ScaleAll(std::span<const ParamRef> params, double factor);
void ZeroAll(std::span<const ParamRef> params);
// dst += src, elementwise; shapes must match.
void AddInto(std::span<const ParamRef> dst, std::span<const ConstParamRef> src);
bool AllFinite(std::span<const ConstParamRef> params);
// Rounds every value to the nearest float32 so checkpoints stay lossless.
void SnapToFloat(std::span<const ParamRef> params);

std::vector<ConstParamRef> AsConst(std::span<const ParamRef> params);

}  // namespace callprep

#endif  // CALLPREP_TENSOR_H_
