// Copyright 2026 The callprep Authors
// SPDX-License-Identifier: Apache-2.0

// Correctness metrics over lowercased word/punctuation tokens, the topic
// model behind semantic entropy, and run-level report assembly.

#ifndef CALLPREP_METRICS_H_
#define CALLPREP_METRICS_H_

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "callprep/corpus.h"
#include "json.hpp"

namespace callprep {

// Tokens the metrics compare: textseg tokens, lowercased.
std::vector<std::string> MetricTokens(std::string_view text);

// Corpus BLEU-4 over parallel lists; unsmoothed, uniform weights.
double Bleu4(std::span<const std::string> hypotheses, std::span<const std::string> references);
double Bleu4Tokens(std::span<const std::vector<std::string>> hypotheses,
                   std::span<const std::vector<std::string>> references);
// Per-sentence BLEU-4 with add-one smoothing on 2..4-gram counts.
double SentenceBleu4(std::span<const std::string> hypothesis,
                     std::span<const std::string> reference);

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

Prf RougeN(std::span<const std::string> hypothesis, std::span<const std::string> reference,
           int n);
size_t LcsLength(std::span<const std::string> a, std::span<const std::string> b);
// `f1` holds the beta-weighted F measure.
Prf RougeL(std::span<const std::string> hypothesis, std::span<const std::string> reference,
           double beta = 1.2);

// Rule-based suffix stripper for the METEOR stem stage.
std::string Stem(std::string_view word);

struct MeteorParams {
  double alpha = 0.9;
  double gamma = 0.5;
  double beta = 3.0;
};

struct MeteorAlignment {
  std::vector<std::pair<int, int>> matches;  // (hyp index, ref index), by hyp index
  int chunks = 0;
};

// Exact stage then stem stage; each hypothesis token takes the leftmost
// still-unmatched reference token.
MeteorAlignment MeteorAlign(std::span<const std::string> hypothesis,
                            std::span<const std::string> reference);
double MeteorLite(std::span<const std::string> hypothesis, std::span<const std::string> reference,
                  const MeteorParams& params = {});

class TokenEmbedder {
 public:
  virtual ~TokenEmbedder() = default;
  // Unit-norm (or all-zero) vector.
  virtual std::vector<double> Embed(std::string_view token) const = 0;
};

// Character-trigram counts of "<token>" hashed (FNV-1a) into `dims` buckets.
class HashedNgramEmbedder : public TokenEmbedder {
 public:
  explicit HashedNgramEmbedder(int dims = 256, int n = 3) : dims_(dims), n_(n) {}
  std::vector<double> Embed(std::string_view token) const override;

 private:
  int dims_;
  int n_;
};

double EmbedF1(std::span<const std::string> hypothesis, std::span<const std::string> reference,
               const TokenEmbedder& embedder);

constexpr int kDefaultTopicCount = 8;

struct TopicModel {
  int k = 0;
  uint64_t seed = 0;
  std::map<std::string, int> terms;
  std::vector<double> idf;
  std::vector<std::vector<double>> centroids;
  int iterations = 0;
};

// Unit-length tf-idf vector; terms unseen at fit time are dropped.
std::vector<double> TopicVector(const TopicModel& model, std::string_view text);

// Seeded k-means++ on tf-idf vectors: 10 restarts of at most 100 Lloyd
// iterations each, keeping the lowest-inertia clustering.
TopicModel FitTopicModel(std::span<const std::string> questions, int k, uint64_t seed);
// Nearest centroid of each input, for inspection.
std::vector<int> AssignTopics(const TopicModel& model, std::span<const std::string> texts);

// softmax(-distance to each centroid) of a single text.
std::vector<double> TextTopicDistribution(const TopicModel& model, std::string_view text);
// Mean of the per-sentence distributions and the whole-text distribution.
std::vector<double> TopicDistribution(const TopicModel& model, std::string_view question);

// Natural-log entropy with 0 ln 0 = 0.
double Entropy(std::span<const double> distribution);
double SemEnt(const TopicModel& model, std::span<const std::string> questions);

struct EvalRow {
  std::string transcript_id;
  std::string question_id;
  std::string generated;
  std::string reference;
  double bleu4 = 0.0;  // smoothed sentence BLEU
  double rouge2 = 0.0;
  double rougeL = 0.0;
  double meteor = 0.0;
  double embed_f1 = 0.0;
};

struct PresentationDiversity {
  std::string transcript_id;
  std::string company;
  int n_questions = 0;
  int topics = 0;  // 0 when no topic model could be fitted
  double sem_ent = 0.0;
};

struct EvalReport {
  double bleu4 = 0.0;
  double rouge2 = 0.0;
  double rougeL = 0.0;
  double meteor = 0.0;
  double embed_f1 = 0.0;
  double sem_ent = 0.0;
  int n_questions = 0;
  std::vector<EvalRow> rows;
  std::vector<PresentationDiversity> presentations;
};

struct EvalOptions {
  int topics = kDefaultTopicCount;
  uint64_t seed = 0;
  // transcript id -> company; transcripts missing here are their own company.
  std::map<std::string, std::string> companies;
  std::shared_ptr<const TokenEmbedder> embedder;  // null: HashedNgramEmbedder
};

// Pairs generated and reference questions on (transcript_id, question_id).
EvalReport EvaluateRun(const std::vector<QuestionRecord>& generated,
                       const std::vector<QuestionRecord>& references,
                       const EvalOptions& options = {});

nlohmann::ordered_json ReportToJson(const EvalReport& report);
EvalReport ReportFromJson(const nlohmann::json& json);
// One row per run; correctness columns x100, Sem-Ent as is.
std::string RenderReportTable(std::span<const std::pair<std::string, EvalReport>> runs);
std::string RenderReportTable(const EvalReport& report, std::string_view label = "run");

}  // namespace callprep

#endif  // CALLPREP_METRICS_H_
