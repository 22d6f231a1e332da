// Copyright 2026 The callprep Authors
// SPDX-License-Identifier: Apache-2.0

// Co-training of the relevance judge and the question generator.
//
// Each micro-step: judge every segment against the reference question,
// select k segments, compute the generator loss on (selection, question) and
// accumulate gradients. Every `accumulation_steps` micro-steps the generator
// takes a clipped AdamW step and the judge takes a REINFORCE step with
// reward -loss minus a baseline.

#ifndef CALLPREP_TRAINING_H_
#define CALLPREP_TRAINING_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "callprep/corpus.h"
#include "callprep/generator.h"
#include "callprep/pro_scorer.h"
#include "callprep/retrieval.h"
#include "callprep/rng.h"
#include "callprep/tensor.h"

namespace callprep {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct OptimState {
  AdamWConfig hp;
  int64_t step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;

  std::vector<ParamRef> Refs();
};

OptimState InitOptim(std::span<const ConstParamRef> params, const AdamWConfig& hp = {});

// Decoupled weight decay, bias-corrected moments; increments opt.step.
void AdamWStep(std::span<const ParamRef> params, std::span<const ConstParamRef> grads,
               OptimState& opt, double lr);

// Linear 0 -> peak over ceil(warmup_ratio * total) steps, then linear -> 0.
double LrAt(int64_t step, int64_t total_steps, double peak_lr, double warmup_ratio);

// Scales grads so their global L2 norm is at most max_norm; returns the
// factor applied (1 when already within bounds).
double ClipGradNorm(std::span<const ParamRef> grads, double max_norm);

// Sums micro-step gradients; Mean() is what an optimizer step consumes.
class GradientAccumulator {
 public:
  explicit GradientAccumulator(GeneratorParams zero) : sum_(std::move(zero)) {}
  void Add(const GeneratorParams& grads);
  GeneratorParams& sum() { return sum_; }
  int count() const { return count_; }
  void AddCount(int n) { count_ += n; }
  GeneratorParams Mean() const;
  void Reset();

 private:
  GeneratorParams sum_;
  int count_ = 0;
};

enum class RetrieverKind { kRandom, kBm25, kPro };

std::string_view RetrieverKindName(RetrieverKind kind);
std::optional<RetrieverKind> ParseRetrieverKind(std::string_view name);

struct TrainConfig {
  int epochs = 3;
  double warmup_ratio = 0.1;
  double max_grad_norm = 1.0;
  int accumulation_steps = 32;
  int micro_batch = 1;
  int top_k = kDefaultTopK;
  double learning_rate = 2e-4;
  double retriever_learning_rate = 2e-4;
  AdamWConfig adamw;
  RetrieverKind retriever = RetrieverKind::kPro;
  bool train_retriever = true;
  double selection_temperature = 1.0;  // Plackett-Luce temperature on scores
  double baseline_decay = 0.9;
  // Selections drawn per micro-step while training the judge; with more than
  // one, each is baselined by the mean reward of the others.
  int selection_samples = 4;
  int input_budget = kDefaultInputBudget;
  int max_target_tokens = 200;
  double bm25_k1 = 1.2;
  double bm25_b = 0.75;
  GeneratorConfig model;  // vocab_size filled in from the corpus
  double init_std = 0.02;
  uint64_t seed = 0;
  std::filesystem::path checkpoint_dir;
  int resume_epoch = -1;  // >= 0 resumes from epoch-<n> checkpoints

  void Validate() const;
};

// A transcript's segments with their token ids under the generator vocab.
struct PreparedDocument {
  std::string transcript_id;
  std::vector<Segment> segments;
  std::vector<std::vector<int>> segment_ids;
  std::optional<Bm25Index> bm25;
};

struct PreparedExample {
  int document = 0;
  std::string question_id;
  std::string question_text;
  std::vector<int> question_ids;  // without EOS
};

struct TrainingSet {
  std::vector<PreparedDocument> documents;
  std::vector<PreparedExample> examples;
};

TrainingSet PrepareTrainingSet(const std::vector<Transcript>& corpus,
                               const std::vector<QuestionRecord>& questions,
                               const Vocab& vocab, const TrainConfig& config);

std::vector<std::string> VocabularyTexts(const std::vector<Transcript>& corpus,
                                         const std::vector<QuestionRecord>& questions);

struct StepRecord {
  int64_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
  std::vector<std::vector<int>> chosen_indices;

  std::string ToJson() const;
  bool operator==(const StepRecord&) const = default;
};

struct MicroStepResult {
  double loss = 0.0;           // mean over the drawn selections
  RetrievalResult selection;   // the first drawn selection
  std::optional<StepRecord> update;  // set when this micro-step closed a window
};

// Plackett-Luce sample of k indices without replacement from softmax(logits);
// returns the draw order and d(log prob)/d(logits).
struct PlackettLuceDraw {
  std::vector<int> order;
  std::vector<double> grad_log_prob;
  double log_prob = 0.0;
};
PlackettLuceDraw SamplePlackettLuce(std::span<const double> logits, int k, Rng& rng);

class CoTrainer {
 public:
  CoTrainer(const TrainConfig& config, GeneratorState generator, Vocab vocab);
  // The judge holds references into this object.
  CoTrainer(const CoTrainer&) = delete;
  CoTrainer& operator=(const CoTrainer&) = delete;

  // One micro-step on a (document, question) pair; `micro_index` keys the
  // selection RNG stream so replays are exact.
  MicroStepResult Step(const PreparedDocument& doc, const PreparedExample& example,
                       int64_t epoch, int64_t micro_index);
  // Applies a pending partial window, if any.
  std::optional<StepRecord> Flush();

  // Deterministic top-k under the current judge (no sampling).
  RetrievalResult SelectForEval(const PreparedDocument& doc,
                                const PreparedExample& example) const;
  std::vector<RelevanceJudgment> JudgeAll(const PreparedDocument& doc,
                                          const PreparedExample& example) const;
  double EvalLoss(const PreparedDocument& doc, const PreparedExample& example,
                  const RetrievalResult& selection) const;

  void set_total_steps(int64_t total) { total_steps_ = total; }
  int64_t total_steps() const { return total_steps_; }

  const GeneratorState& generator() const { return generator_; }
  GeneratorState& generator() { return generator_; }
  const Vocab& vocab() const { return vocab_; }
  EmbeddingMatchScorer& scorer() { return scorer_; }
  const EmbeddingMatchScorer& scorer() const { return scorer_; }
  OptimState& generator_optim() { return gen_opt_; }
  OptimState& scorer_optim() { return scorer_opt_; }
  double baseline() const { return baseline_; }
  bool baseline_set() const { return baseline_set_; }

  void SaveCheckpoints(const std::filesystem::path& dir, int epoch) const;
  void LoadCheckpoints(const std::filesystem::path& dir, int epoch);

 private:
  std::vector<int> TargetIds(const PreparedExample& example) const;
  std::vector<int> InputIds(const PreparedDocument& doc, const RetrievalResult& selection,
                            size_t target_len) const;
  StepRecord ApplyUpdate();

  TrainConfig config_;
  GeneratorState generator_;
  Vocab vocab_;
  EmbeddingMatchScorer scorer_;
  OptimState gen_opt_;
  OptimState scorer_opt_;
  GradientAccumulator gen_grads_;
  ScorerParams scorer_grads_;
  double baseline_ = 0.0;
  bool baseline_set_ = false;
  int window_micro_steps_ = 0;
  int64_t total_steps_ = 1;
  double window_loss_ = 0.0;
  std::vector<std::vector<int>> window_chosen_;
};

struct TrainResult {
  std::vector<StepRecord> log;
  GeneratorState generator;
  Vocab vocab;
  ScorerParams scorer;
};

// Runs epochs x examples, logging to <checkpoint_dir>/metrics.jsonl and
// writing epoch-<n>.ckpt / optim-<n>.ckpt / retriever-<n>.ckpt after each
// epoch, plus generator.ckpt and retriever.ckpt at the end.
TrainResult Train(const std::vector<Transcript>& corpus,
                  const std::vector<QuestionRecord>& questions, const TrainConfig& config);

// Planted-relevance verification corpus. Each document plants
// 2 * questions_per_doc distinct keywords, each twice in its own paragraph;
// every question names the keywords of one pair of planted paragraphs.
struct SyntheticCorpus {
  std::vector<Transcript> transcripts;
  std::vector<QuestionRecord> questions;
  std::map<std::pair<std::string, std::string>, std::vector<int>> planted;
  std::map<std::pair<std::string, std::string>, std::vector<std::string>> keywords;
};

SyntheticCorpus MakeSyntheticCorpus(int n_docs, int n_segments_per_doc, int questions_per_doc,
                                    uint64_t seed);

// Fraction of planted indices present in `selection`.
double PlantedRecall(const RetrievalResult& selection, std::span<const int> planted);

}  // namespace callprep

#endif  // CALLPREP_TRAINING_H_
