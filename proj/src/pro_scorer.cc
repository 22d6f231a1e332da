// Copyright 2026 The callprep Authors
// SPDX-License-Identifier: Apache-2.0

#include "callprep/pro_scorer.h"

#include <algorithm>
#include <cmath>

#include "callprep/checkpoint.h"
#include "callprep/errors.h"

namespace callprep {

std::vector<ParamRef> ScorerParams::Refs() {
  return {{"label_weights", &label_weights}, {"label_bias", &label_bias}};
}

std::vector<ConstParamRef> ScorerParams::Refs() const {
  return {{"label_weights", &label_weights}, {"label_bias", &label_bias}};
}

ScorerParams ZeroScorerParams(int d_model) { return {Matrix(3, d_model), Matrix(1, 3)}; }

EmbeddingMatchScorer::EmbeddingMatchScorer(const GeneratorState& generator,
                                           const Vocab& vocab, double match_scale)
    : generator_(generator),
      vocab_(vocab),
      match_scale_(match_scale > 0.0 ? match_scale : generator.config.d_model),
      params_(ZeroScorerParams(generator.config.d_model)) {}

Matrix EmbeddingMatchScorer::TokenVectors(std::span<const int> ids) const {
  const Matrix& e = generator_.params.token_embedding;
  std::vector<int> kept;
  for (int id : ids) {
    if (id >= kNumReserved && id < e.rows) kept.push_back(id);
  }
  Matrix out(static_cast<int>(kept.size()), e.cols);
  for (size_t i = 0; i < kept.size(); ++i) {
    const auto src = e.Row(kept[i]);
    auto dst = out.Row(static_cast<int>(i));
    double norm = 0.0;
    for (int a = 0; a < e.cols; ++a) norm += src[a] * src[a];
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    for (int a = 0; a < e.cols; ++a) dst[a] = src[a] / norm;
  }
  return out;
}

std::vector<double> EmbeddingMatchScorer::MatchFeatures(const Matrix& segment_vectors,
                                                        const Matrix& question_vectors) const {
  const int d = generator_.config.d_model;
  std::vector<double> f(static_cast<size_t>(d), 0.0);
  if (segment_vectors.rows == 0 || question_vectors.rows == 0) return f;
  for (int t = 0; t < question_vectors.rows; ++t) {
    const auto q = question_vectors.Row(t);
    int best = 0;
    double best_cos = -2.0;
    for (int j = 0; j < segment_vectors.rows; ++j) {
      const auto s = segment_vectors.Row(j);
      double cos = 0.0;
      for (int a = 0; a < d; ++a) cos += q[a] * s[a];
      if (cos > best_cos) {
        best_cos = cos;
        best = j;
      }
    }
    const auto s = segment_vectors.Row(best);
    for (int a = 0; a < d; ++a) f[a] += q[a] * s[a];
  }
  const double scale = match_scale_ / question_vectors.rows;
  for (double& v : f) v *= scale;
  return f;
}

std::array<double, 3> EmbeddingMatchScorer::LabelLogits(std::span<const double> features) const {
  std::array<double, 3> logits{};
  for (int c = 0; c < 3; ++c) {
    double sum = params_.label_bias.data[c];
    const auto w = params_.label_weights.Row(c);
    for (size_t a = 0; a < features.size(); ++a) sum += w[a] * features[a];
    logits[c] = sum;
  }
  return logits;
}

RelevanceJudgment EmbeddingMatchScorer::JudgeFeatures(std::span<const double> features) const {
  const auto l = LabelLogits(features);
  const double mx = std::max({l[0], l[1], l[2]});
  const double e0 = std::exp(l[0] - mx);
  const double e1 = std::exp(l[1] - mx);
  const double e2 = std::exp(l[2] - mx);
  const double z = e0 + e1 + e2;
  return MakeJudgment(e0 / z, e1 / z, e2 / z);
}

RelevanceJudgment EmbeddingMatchScorer::Judge(std::string_view segment_text,
                                              std::string_view question_text) {
  return JudgeFeatures(MatchFeatures(TokenVectors(vocab_.Encode(segment_text)),
                                    TokenVectors(vocab_.Encode(question_text))));
}

void EmbeddingMatchScorer::AccumulateScoreGradient(std::span<const double> features,
                                                   const RelevanceJudgment& j, double d_score,
                                                   ScorerParams& grads) const {
  // score = 1 - 2 p_not, so d score / d logit_c = -2 p_not (1[c = not] - p_c).
  const std::array<double, 3> p = {j.p_highly, j.p_partially, j.p_not};
  for (int c = 0; c < 3; ++c) {
    const double d_logit = d_score * -2.0 * j.p_not * ((c == 2 ? 1.0 : 0.0) - p[c]);
    grads.label_bias.data[c] += d_logit;
    auto w = grads.label_weights.Row(c);
    for (size_t a = 0; a < features.size(); ++a) w[a] += d_logit * features[a];
  }
}

void LoadScorerParams(const std::filesystem::path& path, EmbeddingMatchScorer& scorer) {
  const TensorFile file = ReadTensorFile(path);
  if (file.meta.value("kind", "") != "retriever") {
    throw Error(ErrorKind::kCheckpointCorrupt, path.string() + " is not a retriever checkpoint");
  }
  ExtractTensors(file, scorer.params().Refs());
}

}  // namespace callprep
