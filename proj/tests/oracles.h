// Copyright 2026 The callprep Authors
// SPDX-License-Identifier: Apache-2.0

// Deliberately naive reference implementations used to cross-check the
// library. None of these share code with src/.

#ifndef CALLPREP_TESTS_ORACLES_H_
#define CALLPREP_TESTS_ORACLES_H_

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "callprep/generator.h"

namespace callprep::oracles {

// Okapi BM25 straight from the formula, one document at a time.
inline std::vector<double> Bm25(const std::vector<std::vector<std::string>>& docs,
                                const std::vector<std::string>& query, double k1, double b) {
  const double n = static_cast<double>(docs.size());
  double avg = 0.0;
  for (const auto& d : docs) avg += static_cast<double>(d.size());
  avg /= n;
  std::vector<double> scores(docs.size(), 0.0);
  for (size_t i = 0; i < docs.size(); ++i) {
    for (const auto& t : query) {
      double df = 0.0;
      for (const auto& d : docs)
        if (std::find(d.begin(), d.end(), t) != d.end()) df += 1.0;
      const double tf = static_cast<double>(std::count(docs[i].begin(), docs[i].end(), t));
      if (tf == 0.0) continue;
      const double idf = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
      const double len = avg > 0.0 ? docs[i].size() / avg : 0.0;
      scores[i] += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len));
    }
  }
  return scores;
}

inline std::map<std::vector<std::string>, int> NgramCounts(const std::vector<std::string>& toks,
                                                           int n) {
  std::map<std::vector<std::string>, int> counts;
  for (int i = 0; i + n <= static_cast<int>(toks.size()); ++i)
    ++counts[std::vector<std::string>(toks.begin() + i, toks.begin() + i + n)];
  return counts;
}

// Corpus BLEU-4, single reference, no smoothing.
inline double CorpusBleu4(const std::vector<std::vector<std::string>>& hyps,
                          const std::vector<std::vector<std::string>>& refs) {
  double log_p = 0.0;
  double hyp_len = 0.0, ref_len = 0.0;
  for (size_t i = 0; i < hyps.size(); ++i) {
    hyp_len += static_cast<double>(hyps[i].size());
    ref_len += static_cast<double>(refs[i].size());
  }
  for (int n = 1; n <= 4; ++n) {
    double match = 0.0, total = 0.0;
    for (size_t i = 0; i < hyps.size(); ++i) {
      const auto h = NgramCounts(hyps[i], n);
      const auto r = NgramCounts(refs[i], n);
      for (const auto& [g, c] : h) {
        total += c;
        auto it = r.find(g);
        if (it != r.end()) match += std::min(c, it->second);
      }
    }
    if (match == 0.0) return 0.0;
    log_p += 0.25 * std::log(match / total);
  }
  const double bp = hyp_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / hyp_len);
  return bp * std::exp(log_p);
}

inline bool IsSubsequence(const std::vector<std::string>& sub,
                          const std::vector<std::string>& seq) {
  size_t j = 0;
  for (size_t i = 0; i < seq.size() && j < sub.size(); ++i)
    if (seq[i] == sub[j]) ++j;
  return j == sub.size();
}

// Longest common subsequence by enumerating every subsequence of `a`.
inline size_t LcsBruteForce(const std::vector<std::string>& a,
                            const std::vector<std::string>& b) {
  size_t best = 0;
  const size_t n = a.size();
  for (unsigned long mask = 0; mask < (1UL << n); ++mask) {
    std::vector<std::string> sub;
    for (size_t i = 0; i < n; ++i)
      if (mask & (1UL << i)) sub.push_back(a[i]);
    if (sub.size() > best && IsSubsequence(sub, b)) best = sub.size();
  }
  return best;
}

inline double Gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (x + 0.044715 * x * x * x)));
}

// Transformer forward pass written position by position with no caching.
inline std::vector<std::vector<double>> Forward(const GeneratorState& s,
                                                const std::vector<int>& ids) {
  const auto& c = s.config;
  const auto& p = s.params;
  const int d = c.d_model, dh = d / c.heads, f = c.d_model * c.ffn_mult;
  const int len = static_cast<int>(ids.size());
  std::vector<std::vector<double>> x(len, std::vector<double>(d));
  for (int t = 0; t < len; ++t)
    for (int a = 0; a < d; ++a)
      x[t][a] = p.token_embedding(ids[t], a) + p.position_embedding(t, a);

  auto matvec = [](const std::vector<double>& v, const Matrix& m) {
    std::vector<double> out(m.cols, 0.0);
    for (int j = 0; j < m.cols; ++j)
      for (int i = 0; i < m.rows; ++i) out[j] += v[i] * m(i, j);
    return out;
  };

  for (const auto& layer : p.layers) {
    std::vector<std::vector<double>> q(len), k(len), v(len);
    for (int t = 0; t < len; ++t) {
      q[t] = matvec(x[t], layer.wq);
      k[t] = matvec(x[t], layer.wk);
      v[t] = matvec(x[t], layer.wv);
    }
    std::vector<std::vector<double>> ctx(len, std::vector<double>(d, 0.0));
    for (int h = 0; h < c.heads; ++h) {
      for (int t = 0; t < len; ++t) {
        std::vector<double> w(t + 1);
        for (int u = 0; u <= t; ++u) {
          double dot = 0.0;
          for (int a = h * dh; a < (h + 1) * dh; ++a) dot += q[t][a] * k[u][a];
          w[u] = dot / std::sqrt(static_cast<double>(dh));
        }
        const double mx = *std::max_element(w.begin(), w.end());
        double z = 0.0;
        for (auto& e : w) z += (e = std::exp(e - mx));
        for (int u = 0; u <= t; ++u)
          for (int a = h * dh; a < (h + 1) * dh; ++a) ctx[t][a] += w[u] / z * v[u][a];
      }
    }
    for (int t = 0; t < len; ++t) {
      const auto attn = matvec(ctx[t], layer.wo);
      for (int a = 0; a < d; ++a) x[t][a] += attn[a];
      auto hid = matvec(x[t], layer.w1);
      for (int j = 0; j < f; ++j) hid[j] = Gelu(hid[j] + layer.b1(0, j));
      const auto out = matvec(hid, layer.w2);
      for (int a = 0; a < d; ++a) x[t][a] += out[a] + layer.b2(0, a);
    }
  }

  std::vector<std::vector<double>> logits(len, std::vector<double>(c.vocab_size, 0.0));
  for (int t = 0; t < len; ++t)
    for (int vi = 0; vi < c.vocab_size; ++vi)
      for (int a = 0; a < d; ++a) logits[t][vi] += x[t][a] * p.token_embedding(vi, a);
  return logits;
}

// Mean NLL of target given input, recomputed from the oracle forward pass.
inline double Loss(const GeneratorState& s, const std::vector<int>& input,
                   const std::vector<int>& target) {
  std::vector<int> seq = input;
  seq.insert(seq.end(), target.begin(), target.end() - 1);
  const auto logits = Forward(s, seq);
  double total = 0.0;
  for (size_t j = 0; j < target.size(); ++j) {
    const auto& row = logits[input.size() - 1 + j];
    double z = 0.0;
    for (double l : row) z += std::exp(l);
    total += std::log(z) - row[target[j]];
  }
  return total / static_cast<double>(target.size());
}

// One AdamW update of a flat parameter vector, textbook form.
struct AdamWOracle {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8, weight_decay = 0.0;
  std::vector<double> m, v;
  int t = 0;

  void Step(std::vector<double>& theta, const std::vector<double>& g, double lr) {
    if (m.empty()) {
      m.assign(theta.size(), 0.0);
      v.assign(theta.size(), 0.0);
    }
    ++t;
    for (size_t i = 0; i < theta.size(); ++i) {
      m[i] = beta1 * m[i] + (1 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1 - beta2) * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(beta1, t));
      const double vh = v[i] / (1 - std::pow(beta2, t));
      theta[i] = theta[i] - lr * weight_decay * theta[i] - lr * mh / (std::sqrt(vh) + eps);
    }
  }
};

// Longest common subsequence, classic table over two character strings.
inline int LcsTable(const std::string& a, const std::string& b) {
  std::vector<std::vector<int>> t(a.size() + 1, std::vector<int>(b.size() + 1, 0));
  for (size_t i = 1; i <= a.size(); ++i)
    for (size_t j = 1; j <= b.size(); ++j)
      t[i][j] = a[i - 1] == b[j - 1] ? t[i - 1][j - 1] + 1 : std::max(t[i - 1][j], t[i][j - 1]);
  return t[a.size()][b.size()];
}

struct Scores {
  double p = 0.0, r = 0.0, f = 0.0;
};

inline Scores RougeN(const std::vector<std::string>& hyp, const std::vector<std::string>& ref,
                     int n) {
  const auto h = NgramCounts(hyp, n);
  const auto r = NgramCounts(ref, n);
  double overlap = 0.0, nh = 0.0, nr = 0.0;
  for (const auto& [g, c] : h) {
    nh += c;
    if (r.count(g)) overlap += std::min(c, r.at(g));
  }
  for (const auto& [g, c] : r) nr += c;
  Scores s;
  s.p = nh > 0 ? overlap / nh : 0.0;
  s.r = nr > 0 ? overlap / nr : 0.0;
  s.f = s.p + s.r > 0 ? 2 * s.p * s.r / (s.p + s.r) : 0.0;
  return s;
}

inline Scores RougeL(const std::vector<std::string>& hyp, const std::vector<std::string>& ref,
                     double beta = 1.2) {
  Scores s;
  if (hyp.empty() || ref.empty()) return s;
  const double lcs = static_cast<double>(LcsBruteForce(hyp, ref));
  s.p = lcs / hyp.size();
  s.r = lcs / ref.size();
  if (lcs > 0) s.f = (1 + beta * beta) * s.p * s.r / (s.r + beta * beta * s.p);
  return s;
}

// Sentence BLEU-4, add-one smoothing on orders 2..4.
inline double SentenceBleu4(const std::vector<std::string>& hyp,
                            const std::vector<std::string>& ref) {
  if (hyp.empty()) return 0.0;
  double log_p = 0.0;
  for (int n = 1; n <= 4; ++n) {
    const auto h = NgramCounts(hyp, n);
    const auto r = NgramCounts(ref, n);
    double match = 0.0, total = 0.0;
    for (const auto& [g, c] : h) {
      total += c;
      if (r.count(g)) match += std::min(c, r.at(g));
    }
    if (n == 1 && match == 0.0) return 0.0;
    log_p += n == 1 ? std::log(match / total) : std::log((match + 1) / (total + 1));
  }
  const double c = hyp.size(), rl = ref.size();
  return (c < rl ? std::exp(1 - rl / c) : 1.0) * std::exp(log_p / 4);
}

// METEOR with exact then stem matching. `stem` is passed in so the oracle
// checks the alignment and scoring logic, not the stemmer.
template <typename StemFn>
double Meteor(const std::vector<std::string>& hyp, const std::vector<std::string>& ref,
              StemFn stem, double alpha = 0.9, double gamma = 0.5, double beta = 3.0) {
  if (hyp.empty() || ref.empty()) return 0.0;
  std::vector<int> link(hyp.size(), -1);
  std::vector<int> taken(ref.size(), 0);
  for (int pass = 0; pass < 2; ++pass) {
    for (size_t i = 0; i < hyp.size(); ++i) {
      if (link[i] != -1) continue;
      for (size_t j = 0; j < ref.size(); ++j) {
        const bool same = pass == 0 ? hyp[i] == ref[j] : stem(hyp[i]) == stem(ref[j]);
        if (!taken[j] && same) {
          link[i] = static_cast<int>(j);
          taken[j] = 1;
          break;
        }
      }
    }
  }
  double m = 0.0, chunks = 0.0;
  int prev_h = -2, prev_r = -2;
  for (size_t i = 0; i < hyp.size(); ++i) {
    if (link[i] == -1) continue;
    m += 1;
    if (!(static_cast<int>(i) == prev_h + 1 && link[i] == prev_r + 1)) chunks += 1;
    prev_h = static_cast<int>(i);
    prev_r = link[i];
  }
  if (m == 0.0) return 0.0;
  const double p = m / hyp.size(), r = m / ref.size();
  const double fmean = 1.0 / (alpha / r + (1 - alpha) / p);
  return fmean * (1 - gamma * std::pow(chunks / m, beta));
}

// Greedy cosine matching of every token against every other.
template <typename EmbedFn>
double EmbedF1(const std::vector<std::string>& hyp, const std::vector<std::string>& ref,
               EmbedFn embed) {
  if (hyp.empty() || ref.empty()) return 0.0;
  auto cosine = [&](const std::string& a, const std::string& b) {
    const auto x = embed(a), y = embed(b);
    double dot = 0.0, nx = 0.0, ny = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
      dot += x[i] * y[i];
      nx += x[i] * x[i];
      ny += y[i] * y[i];
    }
    return nx > 0 && ny > 0 ? dot / std::sqrt(nx * ny) : 0.0;
  };
  double p = 0.0, r = 0.0;
  for (const auto& h : hyp) {
    double best = 0.0;
    for (const auto& t : ref) best = std::max(best, cosine(h, t));
    p += best;
  }
  for (const auto& t : ref) {
    double best = 0.0;
    for (const auto& h : hyp) best = std::max(best, cosine(h, t));
    r += best;
  }
  p /= hyp.size();
  r /= ref.size();
  return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
}

inline double Entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double x : p)
    if (x > 0) h -= x * std::log(x);
  return h;
}

}  // namespace callprep::oracles

#endif  // CALLPREP_TESTS_ORACLES_H_
