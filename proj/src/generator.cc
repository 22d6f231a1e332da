// Copyright 2026 The callprep Authors
// SPDX-License-Identifier: Apache-2.0

#include "callprep/generator.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "callprep/checkpoint.h"
#include "callprep/errors.h"
#include "httplib.h"
#include "json.hpp"

namespace callprep {
namespace {

const std::vector<std::string>& ReservedTokens() {
  static const std::vector<std::string> reserved = {"<pad>", "<bos>", "<eos>", "<unk>",
                                                    "<sep>"};
  return reserved;
}

// C[m x n] += A[m x k] * B[k x n]
void MatMulAdd(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    double* ci = c + static_cast<size_t>(i) * n;
    const double* ai = a + static_cast<size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C[k x n] += A[m x k]^T * B[m x n]
void MatMulTransAAdd(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<size_t>(i) * k;
    const double* bi = b + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      double* cp = c + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

// C[m x k] += A[m x n] * B[k x n]^T
void MatMulTransBAdd(const double* a, const double* b, double* c, int m, int n, int k) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<size_t>(i) * n;
    double* ci = c + static_cast<size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double* bp = b + static_cast<size_t>(p) * n;
      double sum = 0.0;
      for (int j = 0; j < n; ++j) sum += ai[j] * bp[j];
      ci[p] += sum;
    }
  }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

double Gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
}

double GeluGrad(double x) {
  const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

struct LayerCache {
  std::vector<double> x_in, q, k, v, attn, ctx, x_mid, h_pre, h_act;
};

struct ForwardCache {
  int length = 0;
  std::vector<LayerCache> layers;
  std::vector<double> x_out;
};

void CheckIds(const GeneratorState& state, std::span<const int> ids) {
  const auto& cfg = state.config;
  if (static_cast<int>(ids.size()) > cfg.context) {
    throw Error(ErrorKind::kContextOverflow, std::to_string(ids.size()) +
                                                 " tokens exceed context " +
                                                 std::to_string(cfg.context));
  }
  for (int id : ids) {
    if (id < 0 || id >= cfg.vocab_size) {
      throw Error(ErrorKind::kShapeMismatch, "token id " + std::to_string(id) +
                                                 " outside vocabulary");
    }
  }
}

void RunForward(const GeneratorState& state, std::span<const int> ids, ForwardCache& cache) {
  CheckIds(state, ids);
  const auto& cfg = state.config;
  const auto& params = state.params;
  const int t_len = static_cast<int>(ids.size());
  const int d = cfg.d_model;
  const int f = cfg.ffn_dim();
  const int dh = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const size_t td = static_cast<size_t>(t_len) * d;

  cache.length = t_len;
  cache.layers.assign(static_cast<size_t>(cfg.layers), {});
  std::vector<double> x(td);
  for (int t = 0; t < t_len; ++t) {
    const auto e = params.token_embedding.Row(ids[t]);
    const auto p = params.position_embedding.Row(t);
    for (int a = 0; a < d; ++a) x[static_cast<size_t>(t) * d + a] = e[a] + p[a];
  }

  for (int l = 0; l < cfg.layers; ++l) {
    const TransformerLayer& w = params.layers[l];
    LayerCache& c = cache.layers[l];
    c.x_in = x;
    c.q.assign(td, 0.0);
    c.k.assign(td, 0.0);
    c.v.assign(td, 0.0);
    MatMulAdd(x.data(), w.wq.data.data(), c.q.data(), t_len, d, d);
    MatMulAdd(x.data(), w.wk.data.data(), c.k.data(), t_len, d, d);
    MatMulAdd(x.data(), w.wv.data.data(), c.v.data(), t_len, d, d);

    c.attn.assign(static_cast<size_t>(cfg.heads) * t_len * t_len, 0.0);
    c.ctx.assign(td, 0.0);
    for (int h = 0; h < cfg.heads; ++h) {
      const int off = h * dh;
      for (int t = 0; t < t_len; ++t) {
        double* row = c.attn.data() + (static_cast<size_t>(h) * t_len + t) * t_len;
        const double* qt = c.q.data() + static_cast<size_t>(t) * d + off;
        double mx = -INFINITY;
        for (int s = 0; s <= t; ++s) {
          const double* ks = c.k.data() + static_cast<size_t>(s) * d + off;
          double dot = 0.0;
          for (int a = 0; a < dh; ++a) dot += qt[a] * ks[a];
          row[s] = dot * scale;
          mx = std::max(mx, row[s]);
        }
        double z = 0.0;
        for (int s = 0; s <= t; ++s) {
          row[s] = std::exp(row[s] - mx);
          z += row[s];
        }
        double* ct = c.ctx.data() + static_cast<size_t>(t) * d + off;
        for (int s = 0; s <= t; ++s) {
          row[s] /= z;
          const double* vs = c.v.data() + static_cast<size_t>(s) * d + off;
          for (int a = 0; a < dh; ++a) ct[a] += row[s] * vs[a];
        }
      }
    }

    c.x_mid = x;
    MatMulAdd(c.ctx.data(), w.wo.data.data(), c.x_mid.data(), t_len, d, d);

    const size_t tf = static_cast<size_t>(t_len) * f;
    c.h_pre.assign(tf, 0.0);
    for (int t = 0; t < t_len; ++t) {
      std::copy(w.b1.data.begin(), w.b1.data.end(), c.h_pre.begin() + static_cast<size_t>(t) * f);
    }
    MatMulAdd(c.x_mid.data(), w.w1.data.data(), c.h_pre.data(), t_len, d, f);
    c.h_act.resize(tf);
    for (size_t i = 0; i < tf; ++i) c.h_act[i] = Gelu(c.h_pre[i]);

    x = c.x_mid;
    for (int t = 0; t < t_len; ++t) {
      for (int a = 0; a < d; ++a) x[static_cast<size_t>(t) * d + a] += w.b2.data[a];
    }
    MatMulAdd(c.h_act.data(), w.w2.data.data(), x.data(), t_len, f, d);
  }
  cache.x_out = std::move(x);
}

// Next-token logits for one hidden row.
void RowLogits(const GeneratorState& state, const double* x, double* out) {
  const Matrix& e = state.params.token_embedding;
  for (int v = 0; v < e.rows; ++v) {
    const double* ev = e.data.data() + static_cast<size_t>(v) * e.cols;
    double sum = 0.0;
    for (int a = 0; a < e.cols; ++a) sum += x[a] * ev[a];
    out[v] = sum;
  }
}

void CheckLossInputs(std::span<const int> input_ids, std::span<const int> target_ids) {
  if (target_ids.empty()) throw Error(ErrorKind::kEmptyTarget, "target sequence is empty");
  if (input_ids.empty()) {
    throw Error(ErrorKind::kShapeMismatch, "input must contain at least one token");
  }
}

std::vector<int> ConcatForLoss(std::span<const int> input_ids, std::span<const int> target_ids) {
  // The final target is predicted, never fed.
  std::vector<int> seq(input_ids.begin(), input_ids.end());
  seq.insert(seq.end(), target_ids.begin(), target_ids.end() - 1);
  return seq;
}

double LossImpl(const GeneratorState& state, std::span<const int> input_ids,
                std::span<const int> target_ids, GeneratorParams* grads) {
  CheckLossInputs(input_ids, target_ids);
  for (int id : target_ids) {
    if (id < 0 || id >= state.config.vocab_size) {
      throw Error(ErrorKind::kShapeMismatch, "target id outside vocabulary");
    }
  }
  const std::vector<int> seq = ConcatForLoss(input_ids, target_ids);
  ForwardCache cache;
  RunForward(state, seq, cache);

  const auto& cfg = state.config;
  const int d = cfg.d_model;
  const int vsize = cfg.vocab_size;
  const int t_len = cache.length;
  const int m = static_cast<int>(target_ids.size());
  const int first = static_cast<int>(input_ids.size()) - 1;

  std::vector<double> dx(grads ? static_cast<size_t>(t_len) * d : 0, 0.0);
  std::vector<double> logits(static_cast<size_t>(vsize));
  double total = 0.0;
  for (int j = 0; j < m; ++j) {
    const int pos = first + j;
    const double* x = cache.x_out.data() + static_cast<size_t>(pos) * d;
    RowLogits(state, x, logits.data());
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - mx);
    const double log_z = mx + std::log(z);
    total += log_z - logits[target_ids[j]];
    if (!grads) continue;
    // dL/dlogits = (softmax - onehot) / m
    Matrix& de = grads->token_embedding;
    double* dxp = dx.data() + static_cast<size_t>(pos) * d;
    for (int v = 0; v < vsize; ++v) {
      double g = std::exp(logits[v] - log_z);
      if (v == target_ids[j]) g -= 1.0;
      g /= m;
      if (g == 0.0) continue;
      const double* ev = state.params.token_embedding.data.data() + static_cast<size_t>(v) * d;
      double* dev = de.data.data() + static_cast<size_t>(v) * d;
      for (int a = 0; a < d; ++a) {
        dxp[a] += g * ev[a];
        dev[a] += g * x[a];
      }
    }
  }
  const double loss = total / m;
  if (!grads) return loss;

  const int f = cfg.ffn_dim();
  const int dh = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const size_t td = static_cast<size_t>(t_len) * d;
  const size_t tf = static_cast<size_t>(t_len) * f;

  for (int l = cfg.layers - 1; l >= 0; --l) {
    const TransformerLayer& w = state.params.layers[l];
    TransformerLayer& g = grads->layers[l];
    const LayerCache& c = cache.layers[l];

    // Feed-forward residual branch.
    for (int t = 0; t < t_len; ++t) {
      for (int a = 0; a < d; ++a) g.b2.data[a] += dx[static_cast<size_t>(t) * d + a];
    }
    MatMulTransAAdd(c.h_act.data(), dx.data(), g.w2.data.data(), t_len, f, d);
    std::vector<double> dh_pre(tf, 0.0);
    MatMulTransBAdd(dx.data(), w.w2.data.data(), dh_pre.data(), t_len, d, f);
    for (size_t i = 0; i < tf; ++i) dh_pre[i] *= GeluGrad(c.h_pre[i]);
    for (int t = 0; t < t_len; ++t) {
      for (int u = 0; u < f; ++u) g.b1.data[u] += dh_pre[static_cast<size_t>(t) * f + u];
    }
    MatMulTransAAdd(c.x_mid.data(), dh_pre.data(), g.w1.data.data(), t_len, d, f);
    std::vector<double> dx_mid = dx;
    MatMulTransBAdd(dh_pre.data(), w.w1.data.data(), dx_mid.data(), t_len, f, d);

    // Attention residual branch.
    MatMulTransAAdd(c.ctx.data(), dx_mid.data(), g.wo.data.data(), t_len, d, d);
    std::vector<double> dctx(td, 0.0);
    MatMulTransBAdd(dx_mid.data(), w.wo.data.data(), dctx.data(), t_len, d, d);

    std::vector<double> dq(td, 0.0), dk(td, 0.0), dv(td, 0.0);
    std::vector<double> da(static_cast<size_t>(t_len));
    for (int h = 0; h < cfg.heads; ++h) {
      const int off = h * dh;
      for (int t = 0; t < t_len; ++t) {
        const double* row = c.attn.data() + (static_cast<size_t>(h) * t_len + t) * t_len;
        const double* dct = dctx.data() + static_cast<size_t>(t) * d + off;
        double weighted = 0.0;
        for (int s = 0; s <= t; ++s) {
          const double* vs = c.v.data() + static_cast<size_t>(s) * d + off;
          double* dvs = dv.data() + static_cast<size_t>(s) * d + off;
          double dot = 0.0;
          for (int a = 0; a < dh; ++a) {
            dot += dct[a] * vs[a];
            dvs[a] += row[s] * dct[a];
          }
          da[s] = dot;
          weighted += row[s] * dot;
        }
        const double* qt = c.q.data() + static_cast<size_t>(t) * d + off;
        double* dqt = dq.data() + static_cast<size_t>(t) * d + off;
        for (int s = 0; s <= t; ++s) {
          const double ds = row[s] * (da[s] - weighted) * scale;
          if (ds == 0.0) continue;
          const double* ks = c.k.data() + static_cast<size_t>(s) * d + off;
          double* dks = dk.data() + static_cast<size_t>(s) * d + off;
          for (int a = 0; a < dh; ++a) {
            dqt[a] += ds * ks[a];
            dks[a] += ds * qt[a];
          }
        }
      }
    }
    MatMulTransAAdd(c.x_in.data(), dq.data(), g.wq.data.data(), t_len, d, d);
    MatMulTransAAdd(c.x_in.data(), dk.data(), g.wk.data.data(), t_len, d, d);
    MatMulTransAAdd(c.x_in.data(), dv.data(), g.wv.data.data(), t_len, d, d);
    dx = std::move(dx_mid);
    MatMulTransBAdd(dq.data(), w.wq.data.data(), dx.data(), t_len, d, d);
    MatMulTransBAdd(dk.data(), w.wk.data.data(), dx.data(), t_len, d, d);
    MatMulTransBAdd(dv.data(), w.wv.data.data(), dx.data(), t_len, d, d);
  }

  for (int t = 0; t < t_len; ++t) {
    double* de = grads->token_embedding.data.data() + static_cast<size_t>(seq[t]) * d;
    double* dp = grads->position_embedding.data.data() + static_cast<size_t>(t) * d;
    const double* src = dx.data() + static_cast<size_t>(t) * d;
    for (int a = 0; a < d; ++a) {
      de[a] += src[a];
      dp[a] += src[a];
    }
  }
  return loss;
}

}  // namespace

// ---------------------------------------------------------------------------
// Vocab

Vocab::Vocab() : tokens_(ReservedTokens()) {
  for (size_t i = 0; i < tokens_.size(); ++i) ids_.emplace(tokens_[i], static_cast<int>(i));
}

Vocab Vocab::FromTokens(std::vector<std::string> tokens) {
  if (tokens.size() < static_cast<size_t>(kNumReserved) ||
      !std::equal(ReservedTokens().begin(), ReservedTokens().end(), tokens.begin())) {
    throw Error(ErrorKind::kSchemaViolation, "vocabulary must start with the reserved tokens");
  }
  Vocab v;
  v.tokens_ = std::move(tokens);
  v.ids_.clear();
  for (size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.ids_.emplace(v.tokens_[i], static_cast<int>(i)).second) {
      throw Error(ErrorKind::kSchemaViolation, "duplicate vocabulary entry " + v.tokens_[i]);
    }
  }
  return v;
}

Vocab Vocab::Build(std::span<const std::string> texts, int min_freq) {
  std::map<std::string, int> counts;
  for (const auto& text : texts) {
    for (const auto& t : Tokenize(text)) ++counts[ToLower(t.text)];
  }
  std::vector<std::pair<std::string, int>> kept;
  for (auto& [token, n] : counts) {
    if (n >= min_freq) kept.emplace_back(token, n);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens = ReservedTokens();
  for (auto& [token, n] : kept) {
    if (std::find(tokens.begin(), tokens.end(), token) == tokens.end()) tokens.push_back(token);
  }
  return FromTokens(std::move(tokens));
}

int Vocab::Id(std::string_view token) const {
  auto it = ids_.find(ToLower(token));
  return it == ids_.end() ? kUnkId : it->second;
}

std::vector<int> Vocab::EncodeTokens(std::span<const callprep::Token> tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(Id(t.text));
  return ids;
}

std::vector<int> Vocab::Encode(std::string_view text) const {
  return EncodeTokens(Tokenize(text));
}

std::string Vocab::DecodeIds(std::span<const int> ids) const {
  std::vector<std::string> words;
  for (int id : ids) {
    if (id == kPadId || id == kBosId || id == kEosId || id == kSepId) continue;
    words.push_back(Token(id));
  }
  return Detokenize(std::span<const std::string>(words));
}

// ---------------------------------------------------------------------------
// Parameters

std::vector<ParamRef> GeneratorParams::Refs() {
  std::vector<ParamRef> refs = {{"token_embedding", &token_embedding},
                                {"position_embedding", &position_embedding}};
  for (size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    auto& L = layers[l];
    refs.push_back({p + "wq", &L.wq});
    refs.push_back({p + "wk", &L.wk});
    refs.push_back({p + "wv", &L.wv});
    refs.push_back({p + "wo", &L.wo});
    refs.push_back({p + "w1", &L.w1});
    refs.push_back({p + "b1", &L.b1});
    refs.push_back({p + "w2", &L.w2});
    refs.push_back({p + "b2", &L.b2});
  }
  return refs;
}

std::vector<ConstParamRef> GeneratorParams::Refs() const {
  auto refs = const_cast<GeneratorParams*>(this)->Refs();
  return AsConst(refs);
}

void ValidateConfig(const GeneratorConfig& c) {
  if (c.vocab_size < kNumReserved || c.d_model < 1 || c.layers < 1 || c.heads < 1 ||
      c.context < 1 || c.ffn_mult < 1 || c.d_model % c.heads != 0) {
    throw Error(ErrorKind::kConfigInvalid,
                "generator config needs vocab_size >= 5 and d_model divisible by heads");
  }
}

GeneratorParams ZeroParams(const GeneratorConfig& c) {
  ValidateConfig(c);
  GeneratorParams p;
  p.token_embedding = Matrix(c.vocab_size, c.d_model);
  p.position_embedding = Matrix(c.context, c.d_model);
  const int d = c.d_model;
  const int f = c.ffn_dim();
  for (int l = 0; l < c.layers; ++l) {
    p.layers.push_back({Matrix(d, d), Matrix(d, d), Matrix(d, d), Matrix(d, d), Matrix(d, f),
                        Matrix(1, f), Matrix(f, d), Matrix(1, d)});
  }
  return p;
}

GeneratorState InitGenerator(const GeneratorConfig& config, uint64_t seed, double init_std) {
  GeneratorState state{config, ZeroParams(config)};
  Rng rng(seed);
  for (auto& ref : state.params.Refs()) {
    if (ref.tensor->rows == 1) continue;  // biases start at zero
    for (double& v : ref.tensor->data) v = rng.Normal(0.0, init_std);
  }
  SnapToFloat(state.params.Refs());
  return state;
}

// ---------------------------------------------------------------------------
// Forward / loss / gradients

Matrix Forward(const GeneratorState& state, std::span<const int> ids) {
  ForwardCache cache;
  RunForward(state, ids, cache);
  Matrix logits(cache.length, state.config.vocab_size);
  for (int t = 0; t < cache.length; ++t) {
    RowLogits(state, cache.x_out.data() + static_cast<size_t>(t) * state.config.d_model,
              logits.Row(t).data());
  }
  return logits;
}

double Loss(const GeneratorState& state, std::span<const int> input_ids,
            std::span<const int> target_ids) {
  return LossImpl(state, input_ids, target_ids, nullptr);
}

double AccumulateGradients(const GeneratorState& state, std::span<const int> input_ids,
                           std::span<const int> target_ids, GeneratorParams& grads) {
  return LossImpl(state, input_ids, target_ids, &grads);
}

GeneratorParams Gradients(const GeneratorState& state, std::span<const int> input_ids,
                          std::span<const int> target_ids, double* loss) {
  GeneratorParams grads = ZeroParams(state.config);
  const double l = LossImpl(state, input_ids, target_ids, &grads);
  if (loss) *loss = l;
  return grads;
}

// ---------------------------------------------------------------------------
// Decoding

void ValidateDecodeParams(const DecodeParams& p) {
  if (!(p.temperature > 0.0) || !std::isfinite(p.temperature)) {
    throw Error(ErrorKind::kConfigInvalid, "decode.temperature must be > 0");
  }
  if (!(p.top_p > 0.0 && p.top_p <= 1.0)) {
    throw Error(ErrorKind::kConfigInvalid, "decode.top_p must be in (0, 1]");
  }
  if (p.max_new_tokens < 0) {
    throw Error(ErrorKind::kConfigInvalid, "decode.max_new_tokens must be >= 0");
  }
}

std::vector<double> SoftmaxWithTemperature(std::span<const double> logits, double temperature) {
  std::vector<double> probs(logits.size());
  if (logits.empty()) return probs;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp((logits[i] - mx) / temperature);
    z += probs[i];
  }
  for (double& p : probs) p /= z;
  return probs;
}

std::vector<NucleusEntry> NucleusFilter(std::span<const double> probs, double top_p) {
  std::vector<NucleusEntry> order;
  order.reserve(probs.size());
  for (size_t i = 0; i < probs.size(); ++i) order.push_back({static_cast<int>(i), probs[i]});
  std::stable_sort(order.begin(), order.end(), [](const NucleusEntry& a, const NucleusEntry& b) {
    return a.prob > b.prob;
  });
  double mass = 0.0;
  size_t keep = 0;
  while (keep < order.size()) {
    mass += order[keep].prob;
    ++keep;
    if (mass >= top_p) break;
  }
  order.resize(keep);
  double z = 0.0;
  for (const auto& e : order) z += e.prob;
  for (auto& e : order) e.prob /= z;
  return order;
}

int GreedyToken(std::span<const double> logits) {
  return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

int SampleToken(std::span<const double> logits, const DecodeParams& params, Rng& rng) {
  if (params.strategy == DecodeStrategy::kGreedy) return GreedyToken(logits);
  const auto nucleus = NucleusFilter(SoftmaxWithTemperature(logits, params.temperature),
                                     params.top_p);
  const double u = rng.Uniform();
  double cum = 0.0;
  for (const auto& e : nucleus) {
    cum += e.prob;
    if (u < cum) return e.token;
  }
  return nucleus.back().token;
}

DecodeSession::DecodeSession(const GeneratorState& state)
    : state_(state),
      keys_(static_cast<size_t>(state.config.layers)),
      values_(static_cast<size_t>(state.config.layers)),
      logits_(static_cast<size_t>(state.config.vocab_size)) {}

std::span<const double> DecodeSession::Push(int id) {
  const auto& cfg = state_.config;
  if (length_ >= cfg.context) {
    throw Error(ErrorKind::kContextOverflow, "decode session is at full context");
  }
  if (id < 0 || id >= cfg.vocab_size) {
    throw Error(ErrorKind::kShapeMismatch, "token id outside vocabulary");
  }
  const int d = cfg.d_model;
  const int f = cfg.ffn_dim();
  const int dh = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const int t = length_;

  std::vector<double> x(static_cast<size_t>(d));
  const auto e = state_.params.token_embedding.Row(id);
  const auto p = state_.params.position_embedding.Row(t);
  for (int a = 0; a < d; ++a) x[a] = e[a] + p[a];

  std::vector<double> q(d), k(d), v(d), ctx(d), h(f), scores(static_cast<size_t>(t) + 1);
  for (int l = 0; l < cfg.layers; ++l) {
    const TransformerLayer& w = state_.params.layers[l];
    std::fill(q.begin(), q.end(), 0.0);
    std::fill(k.begin(), k.end(), 0.0);
    std::fill(v.begin(), v.end(), 0.0);
    MatMulAdd(x.data(), w.wq.data.data(), q.data(), 1, d, d);
    MatMulAdd(x.data(), w.wk.data.data(), k.data(), 1, d, d);
    MatMulAdd(x.data(), w.wv.data.data(), v.data(), 1, d, d);
    keys_[l].insert(keys_[l].end(), k.begin(), k.end());
    values_[l].insert(values_[l].end(), v.begin(), v.end());

    std::fill(ctx.begin(), ctx.end(), 0.0);
    for (int hh = 0; hh < cfg.heads; ++hh) {
      const int off = hh * dh;
      double mx = -INFINITY;
      for (int s = 0; s <= t; ++s) {
        const double* ks = keys_[l].data() + static_cast<size_t>(s) * d + off;
        double dot = 0.0;
        for (int a = 0; a < dh; ++a) dot += q[off + a] * ks[a];
        scores[s] = dot * scale;
        mx = std::max(mx, scores[s]);
      }
      double z = 0.0;
      for (int s = 0; s <= t; ++s) {
        scores[s] = std::exp(scores[s] - mx);
        z += scores[s];
      }
      for (int s = 0; s <= t; ++s) {
        const double wgt = scores[s] / z;
        const double* vs = values_[l].data() + static_cast<size_t>(s) * d + off;
        for (int a = 0; a < dh; ++a) ctx[off + a] += wgt * vs[a];
      }
    }
    MatMulAdd(ctx.data(), w.wo.data.data(), x.data(), 1, d, d);
    std::copy(w.b1.data.begin(), w.b1.data.end(), h.begin());
    MatMulAdd(x.data(), w.w1.data.data(), h.data(), 1, d, f);
    for (double& u : h) u = Gelu(u);
    for (int a = 0; a < d; ++a) x[a] += w.b2.data[a];
    MatMulAdd(h.data(), w.w2.data.data(), x.data(), 1, f, d);
  }
  RowLogits(state_, x.data(), logits_.data());
  ++length_;
  return logits_;
}

std::vector<int> Decode(const GeneratorState& state, std::span<const int> input_ids,
                        const DecodeParams& params) {
  ValidateDecodeParams(params);
  if (input_ids.empty()) throw Error(ErrorKind::kEmptySelection, "decode needs a prompt");
  CheckIds(state, input_ids);
  Rng rng(params.seed);
  DecodeSession session(state);
  std::span<const double> logits;
  for (int id : input_ids) logits = session.Push(id);
  std::vector<int> out;
  while (static_cast<int>(out.size()) < params.max_new_tokens) {
    const int next = SampleToken(logits, params, rng);
    if (next == kEosId) break;
    out.push_back(next);
    if (session.length() >= state.config.context) break;
    logits = session.Push(next);
  }
  return out;
}

std::vector<int> BuildInput(const RetrievalResult& result, std::span<const Segment> segments,
                            const Vocab& vocab, int budget, int context) {
  int limit = budget;
  if (context > 0) limit = std::min(limit, context);
  std::vector<int> ids = {kBosId};
  for (int index : result.segment_indices) {
    if (index < 0 || index >= static_cast<int>(segments.size())) {
      throw Error(ErrorKind::kShapeMismatch, "segment index out of range");
    }
    const auto seg_ids = vocab.EncodeTokens(segments[index].tokens);
    ids.insert(ids.end(), seg_ids.begin(), seg_ids.end());
    ids.push_back(kSepId);
  }
  if (static_cast<int>(ids.size()) > limit) ids.resize(static_cast<size_t>(std::max(limit, 0)));
  return ids;
}

std::string GenerateQuestion(const GeneratorState& state, const Vocab& vocab,
                             std::span<const Segment> segments, const RetrievalResult& result,
                             const DecodeParams& params) {
  if (result.segment_indices.empty()) {
    throw Error(ErrorKind::kEmptySelection, "no segments selected");
  }
  // Leave room for at least one generated token.
  const std::vector<int> input =
      BuildInput(result, segments, vocab, kDefaultInputBudget, state.config.context - 1);
  return vocab.DecodeIds(Decode(state, input, params));
}

std::string ReferenceGenerator::Generate(std::span<const Segment> segments,
                                         const RetrievalResult& selection,
                                         const DecodeParams& params) {
  return GenerateQuestion(state_, vocab_, segments, selection, params);
}

std::string RenderGeneratorPrompt(std::span<const Segment> segments,
                                  const RetrievalResult& selection) {
  std::string prompt;
  for (int index : selection.segment_indices) {
    if (index < 0 || index >= static_cast<int>(segments.size())) {
      throw Error(ErrorKind::kShapeMismatch, "segment index out of range");
    }
    if (!prompt.empty()) prompt += "\n\n";
    prompt += segments[index].text;
  }
  return prompt;
}

RemoteGenerator::RemoteGenerator(std::string base_url, std::string path, int timeout_seconds)
    : base_url_(std::move(base_url)), path_(std::move(path)), timeout_seconds_(timeout_seconds) {}

std::string RemoteGenerator::Generate(std::span<const Segment> segments,
                                      const RetrievalResult& selection,
                                      const DecodeParams& params) {
  if (selection.segment_indices.empty()) {
    throw Error(ErrorKind::kEmptySelection, "no segments selected");
  }
  ValidateDecodeParams(params);
  const nlohmann::json request = {
      {"prompt", RenderGeneratorPrompt(segments, selection)},
      {"decode",
       {{"strategy", params.strategy == DecodeStrategy::kGreedy ? "greedy" : "sample"},
        {"temperature", params.temperature},
        {"top_p", params.top_p},
        {"max_new_tokens", params.max_new_tokens},
        {"seed", params.seed}}}};
  httplib::Client client(base_url_);
  client.set_connection_timeout(timeout_seconds_);
  client.set_read_timeout(timeout_seconds_);
  auto response = client.Post(path_, request.dump(), "application/json");
  if (!response) {
    throw Error(ErrorKind::kBackendFailure,
                "generator unreachable at " + base_url_ + ": " + httplib::to_string(response.error()));
  }
  if (response->status != 200) {
    throw Error(ErrorKind::kBackendFailure,
                "generator returned HTTP " + std::to_string(response->status));
  }
  try {
    return nlohmann::json::parse(response->body).at("question").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kBackendFailure, std::string("malformed generator response: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

void SaveGenerator(const std::filesystem::path& path, const GeneratorState& state,
                   const Vocab& vocab) {
  TensorFile file;
  const auto& c = state.config;
  file.meta = {{"kind", "generator"},
               {"config",
                {{"vocab_size", c.vocab_size},
                 {"d_model", c.d_model},
                 {"layers", c.layers},
                 {"heads", c.heads},
                 {"context", c.context},
                 {"ffn_mult", c.ffn_mult}}},
               {"vocab", vocab.tokens()}};
  AppendTensors(file, state.params.Refs());
  WriteTensorFile(path, file);
}

void LoadGenerator(const std::filesystem::path& path, GeneratorState& state, Vocab& vocab) {
  const TensorFile file = ReadTensorFile(path);
  try {
    if (file.meta.at("kind") != "generator") {
      throw Error(ErrorKind::kCheckpointCorrupt, path.string() + " is not a generator checkpoint");
    }
    const auto& j = file.meta.at("config");
    GeneratorConfig c;
    c.vocab_size = j.at("vocab_size").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.layers = j.at("layers").get<int>();
    c.heads = j.at("heads").get<int>();
    c.context = j.at("context").get<int>();
    c.ffn_mult = j.at("ffn_mult").get<int>();
    Vocab v = Vocab::FromTokens(file.meta.at("vocab").get<std::vector<std::string>>());
    if (v.size() != c.vocab_size) {
      throw Error(ErrorKind::kCheckpointCorrupt, "vocabulary size disagrees with config");
    }
    GeneratorState s{c, ZeroParams(c)};
    ExtractTensors(file, s.params.Refs());
    state = std::move(s);
    vocab = std::move(v);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kCheckpointCorrupt, std::string("generator metadata: ") + e.what());
  }
}

}  // namespace callprep
