// Copyright 2026 The callprep Authors
// SPDX-License-Identifier: Apache-2.0

// Trainable reference relevance judge over the generator's token embeddings
// (read only). Every question token t is paired with its most similar
// segment token s(t) by cosine; the label logits are a diagonal bilinear
// form of those pairs:
//
//   f[a]    = scale / |q| * sum_t u_t[a] * u_s(t)[a]     (u = unit embedding)
//   logit_c = sum_a w[c][a] * f[a] + bias[c]
//
// with labels ordered (highly, partially, not).

#ifndef CALLPREP_PRO_SCORER_H_
#define CALLPREP_PRO_SCORER_H_

#include <array>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "callprep/generator.h"
#include "callprep/retrieval.h"
#include "callprep/tensor.h"

namespace callprep {

struct ScorerParams {
  Matrix label_weights;  // 3 x d
  Matrix label_bias;     // 1 x 3

  std::vector<ParamRef> Refs();
  std::vector<ConstParamRef> Refs() const;
};

ScorerParams ZeroScorerParams(int d_model);

class EmbeddingMatchScorer : public RelevanceScorer {
 public:
  // `generator` and `vocab` must outlive the scorer. A non-positive
  // `match_scale` selects d_model.
  EmbeddingMatchScorer(const GeneratorState& generator, const Vocab& vocab,
                       double match_scale = 0.0);

  RelevanceJudgment Judge(std::string_view segment_text,
                          std::string_view question_text) override;

  // Unit-length embedding rows of the non-reserved ids.
  Matrix TokenVectors(std::span<const int> ids) const;
  // f above; all zero when either side has no tokens.
  std::vector<double> MatchFeatures(const Matrix& segment_vectors,
                                    const Matrix& question_vectors) const;
  std::array<double, 3> LabelLogits(std::span<const double> features) const;
  RelevanceJudgment JudgeFeatures(std::span<const double> features) const;

  // grads += d_score * d(score)/d(params) at the given features.
  void AccumulateScoreGradient(std::span<const double> features,
                               const RelevanceJudgment& judgment, double d_score,
                               ScorerParams& grads) const;

  ScorerParams& params() { return params_; }
  const ScorerParams& params() const { return params_; }
  double match_scale() const { return match_scale_; }

 private:
  const GeneratorState& generator_;
  const Vocab& vocab_;
  double match_scale_;
  ScorerParams params_;
};

// Reads judge weights from a retriever checkpoint written by training.
void LoadScorerParams(const std::filesystem::path& path, EmbeddingMatchScorer& scorer);

}  // namespace callprep

#endif  // CALLPREP_PRO_SCORER_H_
