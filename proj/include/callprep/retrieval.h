// Copyright 2026 The callprep Authors
// SPDX-License-Identifier: Apache-2.0

// Segment retrieval: random and BM25 baselines, the prompt-based relevance
// scoring contract, and ordered top-k selection.

#ifndef CALLPREP_RETRIEVAL_H_
#define CALLPREP_RETRIEVAL_H_

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "callprep/textseg.h"

namespace callprep {

inline constexpr int kDefaultTopK = 6;
inline constexpr int kRetrieverInputBudget = 512;

struct RelevanceJudgment {
  double p_highly = 0.0;
  double p_partially = 0.0;
  double p_not = 0.0;
  double score = 0.0;
};

// Validates the label distribution and applies
// score = P(highly) + P(partially) - P(not).
RelevanceJudgment MakeJudgment(double p_highly, double p_partially, double p_not);

// Softmax over the three label log-probabilities.
RelevanceJudgment JudgmentFromLogprobs(double lp_highly, double lp_partially,
                                       double lp_not);

struct RetrievalResult {
  std::vector<int> segment_indices;  // strictly increasing
  std::vector<double> scores;        // parallel to segment_indices

  bool operator==(const RetrievalResult&) const = default;
};

RetrievalResult RandomRetrieve(int n_segments, int k, uint64_t seed);

// Keeps the k highest scores (ties: lower index first), then returns the
// chosen indices in presentation order.
RetrievalResult TopKSelect(std::span<const std::pair<int, double>> judgments,
                           int k = kDefaultTopK);

struct Posting {
  int segment = 0;
  int term_frequency = 0;

  bool operator==(const Posting&) const = default;
};

struct Bm25Index {
  std::map<std::string, int> doc_freqs;
  std::vector<int> doc_lens;
  double avg_doc_len = 0.0;
  int n_docs = 0;
  std::map<std::string, std::vector<Posting>> postings;
  double k1 = 1.2;
  double b = 0.75;

  int DocFreq(const std::string& term) const;
};

// Lowercased non-punctuation tokens; the term unit for BM25.
std::vector<std::string> Bm25Terms(std::string_view text);

Bm25Index Bm25Build(std::span<const Segment> segments, double k1 = 1.2,
                    double b = 0.75);

// All documents, score descending, ties by ascending segment index.
std::vector<std::pair<int, double>> Bm25Score(const Bm25Index& index,
                                              std::string_view query);

// Fills the relevance template's two slots and nothing else.
std::string RenderRelevancePrompt(std::string_view presentation_text,
                                  std::string_view question_text);

extern const std::string_view kRelevanceTemplate;

// Backend contract for relevance judges.
class RelevanceScorer {
 public:
  virtual ~RelevanceScorer() = default;
  virtual RelevanceJudgment Judge(std::string_view segment_text,
                                  std::string_view question_text) = 0;
};

RelevanceJudgment ScoreSegment(RelevanceScorer& scorer, const Segment& segment,
                               std::string_view question);

// Truncates the segment from the tail until the rendered prompt fits in
// `budget` tokens. Returns the (possibly shortened) segment text.
std::string FitSegmentToPrompt(std::string_view segment_text,
                               std::string_view question_text,
                               int budget = kRetrieverInputBudget);

// HTTP judge: POST {"prompt": ...} to `url` + `path`, expects
// {"label_logprobs": {"highly": x, "partially": y, "not": z}}.
class RemoteScorer : public RelevanceScorer {
 public:
  RemoteScorer(std::string base_url, std::string path = "/judge",
               int timeout_seconds = 30);

  RelevanceJudgment Judge(std::string_view segment_text,
                          std::string_view question_text) override;

 private:
  std::string base_url_;
  std::string path_;
  int timeout_seconds_;
};

// Parses a remote-judge response body; throws BackendFailure when malformed.
RelevanceJudgment ParseJudgeResponse(std::string_view body);

}  // namespace callprep

#endif  // CALLPREP_RETRIEVAL_H_
