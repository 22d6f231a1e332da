// Copyright 2026 The callprep Authors
// SPDX-License-Identifier: Apache-2.0

// Reference question generator: a small causal self-attention language model
// with tied input/output embeddings, exact backpropagation, and
// greedy / temperature + nucleus decoding.
//
// Block (no normalization layers):
//   x   = E[id] + P[pos]
//   x  += MultiHeadCausalAttention(x) Wo
//   x  += GELU(x W1 + b1) W2 + b2
//   logits = x E^T

#ifndef CALLPREP_GENERATOR_H_
#define CALLPREP_GENERATOR_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "callprep/retrieval.h"
#include "callprep/rng.h"
#include "callprep/tensor.h"
#include "callprep/textseg.h"

namespace callprep {

inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kUnkId = 3;
inline constexpr int kSepId = 4;
inline constexpr int kNumReserved = 5;
inline constexpr int kDefaultInputBudget = 1400;

// Case-folded token vocabulary. Tokens seen fewer than `min_freq` times map
// to UNK.
class Vocab {
 public:
  Vocab();
  static Vocab Build(std::span<const std::string> texts, int min_freq = 2);
  static Vocab FromTokens(std::vector<std::string> tokens);

  int size() const { return static_cast<int>(tokens_.size()); }
  int Id(std::string_view token) const;
  const std::string& Token(int id) const { return tokens_.at(static_cast<size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> Encode(std::string_view text) const;
  std::vector<int> EncodeTokens(std::span<const callprep::Token> tokens) const;
  // Drops PAD/BOS/EOS/SEP; UNK renders as "<unk>".
  std::string DecodeIds(std::span<const int> ids) const;

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

struct GeneratorConfig {
  int vocab_size = 0;
  int d_model = 64;
  int layers = 2;
  int heads = 2;
  int context = 512;
  int ffn_mult = 4;

  int head_dim() const { return d_model / heads; }
  int ffn_dim() const { return d_model * ffn_mult; }
  bool operator==(const GeneratorConfig&) const = default;
};

struct TransformerLayer {
  Matrix wq, wk, wv, wo;  // d x d
  Matrix w1, b1;          // d x 4d, 1 x 4d
  Matrix w2, b2;          // 4d x d, 1 x d
};

struct GeneratorParams {
  Matrix token_embedding;     // V x d, also the output projection
  Matrix position_embedding;  // L x d
  std::vector<TransformerLayer> layers;

  std::vector<ParamRef> Refs();
  std::vector<ConstParamRef> Refs() const;
};

struct GeneratorState {
  GeneratorConfig config;
  GeneratorParams params;
};

void ValidateConfig(const GeneratorConfig& config);
GeneratorParams ZeroParams(const GeneratorConfig& config);
// N(0, init_std) weights, zero biases.
GeneratorState InitGenerator(const GeneratorConfig& config, uint64_t seed,
                             double init_std = 0.02);

// Full logits, |ids| x V.
Matrix Forward(const GeneratorState& state, std::span<const int> ids);

// Mean negative log-likelihood of `target_ids` following `input_ids`.
double Loss(const GeneratorState& state, std::span<const int> input_ids,
            std::span<const int> target_ids);

// Adds d(loss)/d(params) into `grads` and returns the loss.
double AccumulateGradients(const GeneratorState& state, std::span<const int> input_ids,
                           std::span<const int> target_ids, GeneratorParams& grads);

GeneratorParams Gradients(const GeneratorState& state, std::span<const int> input_ids,
                          std::span<const int> target_ids, double* loss = nullptr);

enum class DecodeStrategy { kGreedy, kSample };

struct DecodeParams {
  DecodeStrategy strategy = DecodeStrategy::kSample;
  double temperature = 0.7;
  double top_p = 0.9;
  int max_new_tokens = 200;
  uint64_t seed = 0;
};

void ValidateDecodeParams(const DecodeParams& params);

// softmax(logits / temperature), max-shifted.
std::vector<double> SoftmaxWithTemperature(std::span<const double> logits,
                                           double temperature);

struct NucleusEntry {
  int token = 0;
  double prob = 0.0;
};

// Smallest prefix of the descending-probability order (ties by token id)
// whose mass reaches top_p, renormalized to sum to 1.
std::vector<NucleusEntry> NucleusFilter(std::span<const double> probs, double top_p);

int GreedyToken(std::span<const double> logits);
int SampleToken(std::span<const double> logits, const DecodeParams& params, Rng& rng);

// Incremental decoder with cached keys/values; logits match Forward().
class DecodeSession {
 public:
  explicit DecodeSession(const GeneratorState& state);
  // Appends one token and returns the next-token logits.
  std::span<const double> Push(int id);
  int length() const { return length_; }

 private:
  const GeneratorState& state_;
  int length_ = 0;
  std::vector<std::vector<double>> keys_;    // per layer, L x d
  std::vector<std::vector<double>> values_;  // per layer, L x d
  std::vector<double> logits_;
};

// Generated ids, EOS excluded. Stops at EOS, max_new_tokens, or a full
// context window.
std::vector<int> Decode(const GeneratorState& state, std::span<const int> input_ids,
                        const DecodeParams& params);

// BOS, then each selected segment's ids followed by SEP, in presentation
// order; tail-truncated to min(budget, context).
std::vector<int> BuildInput(const RetrievalResult& result, std::span<const Segment> segments,
                            const Vocab& vocab, int budget = kDefaultInputBudget,
                            int context = 0);

std::string GenerateQuestion(const GeneratorState& state, const Vocab& vocab,
                             std::span<const Segment> segments,
                             const RetrievalResult& result, const DecodeParams& params);

// Generator backend contract; never sees a relevance scorer.
class QuestionGenerator {
 public:
  virtual ~QuestionGenerator() = default;
  virtual std::string Generate(std::span<const Segment> segments,
                               const RetrievalResult& selection,
                               const DecodeParams& params) = 0;
};

class ReferenceGenerator : public QuestionGenerator {
 public:
  ReferenceGenerator(const GeneratorState& state, const Vocab& vocab)
      : state_(state), vocab_(vocab) {}
  std::string Generate(std::span<const Segment> segments, const RetrievalResult& selection,
                       const DecodeParams& params) override;

 private:
  const GeneratorState& state_;
  const Vocab& vocab_;
};

// POST {"prompt": ..., "decode": {...}} -> {"question": ...}.
class RemoteGenerator : public QuestionGenerator {
 public:
  explicit RemoteGenerator(std::string base_url, std::string path = "/generate",
                           int timeout_seconds = 120);
  std::string Generate(std::span<const Segment> segments, const RetrievalResult& selection,
                       const DecodeParams& params) override;

 private:
  std::string base_url_;
  std::string path_;
  int timeout_seconds_;
};

// Selected segment texts in presentation order, blank-line separated.
std::string RenderGeneratorPrompt(std::span<const Segment> segments,
                                  const RetrievalResult& selection);

void SaveGenerator(const std::filesystem::path& path, const GeneratorState& state,
                   const Vocab& vocab);
void LoadGenerator(const std::filesystem::path& path, GeneratorState& state, Vocab& vocab);

}  // namespace callprep

#endif  // CALLPREP_GENERATOR_H_
