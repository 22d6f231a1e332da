// Copyright 2026 The callprep Authors
// SPDX-License-Identifier: Apache-2.0

#include "callprep/metrics.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <tuple>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "callprep/errors.h"
#include "callprep/rng.h"
#include "callprep/textseg.h"

namespace callprep {
namespace {

using NgramCounts = std::map<std::vector<std::string>, int>;

NgramCounts CountNgrams(std::span<const std::string> tokens, int n) {
  NgramCounts counts;
  if (n <= 0 || tokens.size() < static_cast<size_t>(n)) return counts;
  for (size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[std::vector<std::string>(tokens.begin() + i, tokens.begin() + i + n)];
  }
  return counts;
}

// (clipped matches, hypothesis n-gram total)
std::pair<int64_t, int64_t> ClippedMatches(std::span<const std::string> hyp,
                                           std::span<const std::string> ref, int n) {
  const auto h = CountNgrams(hyp, n);
  const auto r = CountNgrams(ref, n);
  int64_t matched = 0;
  int64_t total = 0;
  for (const auto& [gram, c] : h) {
    total += c;
    auto it = r.find(gram);
    if (it != r.end()) matched += std::min(c, it->second);
  }
  return {matched, total};
}

double F1(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

bool IsWordToken(std::string_view token) { return !IsPunctuationToken(token); }

std::vector<double> Softmax(std::vector<double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double& v : logits) {
    v = std::exp(v - mx);
    z += v;
  }
  for (double& v : logits) v /= z;
  return logits;
}

double SquaredDistance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

// Lowest index wins ties.
int NearestCentroid(std::span<const double> point,
                    const std::vector<std::vector<double>>& centroids) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (size_t c = 0; c < centroids.size(); ++c) {
    const double d = SquaredDistance(point, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

constexpr int kTopicRestarts = 10;

}  // namespace

std::vector<std::string> MetricTokens(std::string_view text) {
  auto tokens = TokenTexts(text);
  for (auto& t : tokens) t = ToLower(t);
  return tokens;
}

// ---------------------------------------------------------------------------
// BLEU

double Bleu4Tokens(std::span<const std::vector<std::string>> hypotheses,
                   std::span<const std::vector<std::string>> references) {
  if (hypotheses.size() != references.size()) {
    throw Error(ErrorKind::kLengthMismatch,
                fmt::format("{} hypotheses vs {} references", hypotheses.size(),
                            references.size()));
  }
  if (hypotheses.empty()) {
    throw Error(ErrorKind::kLengthMismatch, "BLEU needs at least one pair");
  }
  int64_t hyp_len = 0;
  int64_t ref_len = 0;
  std::array<int64_t, 4> matched{};
  std::array<int64_t, 4> total{};
  for (size_t i = 0; i < hypotheses.size(); ++i) {
    hyp_len += static_cast<int64_t>(hypotheses[i].size());
    ref_len += static_cast<int64_t>(references[i].size());
    for (int n = 1; n <= 4; ++n) {
      const auto [m, t] = ClippedMatches(hypotheses[i], references[i], n);
      matched[n - 1] += m;
      total[n - 1] += t;
    }
  }
  double log_sum = 0.0;
  for (int n = 0; n < 4; ++n) {
    if (matched[n] == 0 || total[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(matched[n]) / static_cast<double>(total[n]));
  }
  const double bp =
      hyp_len < ref_len ? std::exp(1.0 - static_cast<double>(ref_len) / hyp_len) : 1.0;
  return bp * std::exp(log_sum / 4.0);
}

double Bleu4(std::span<const std::string> hypotheses, std::span<const std::string> references) {
  std::vector<std::vector<std::string>> h, r;
  for (const auto& s : hypotheses) h.push_back(MetricTokens(s));
  for (const auto& s : references) r.push_back(MetricTokens(s));
  return Bleu4Tokens(h, r);
}

double SentenceBleu4(std::span<const std::string> hypothesis,
                     std::span<const std::string> reference) {
  if (hypothesis.empty()) return 0.0;
  double log_sum = 0.0;
  for (int n = 1; n <= 4; ++n) {
    auto [m, t] = ClippedMatches(hypothesis, reference, n);
    double p;
    if (n == 1) {
      if (m == 0) return 0.0;
      p = static_cast<double>(m) / static_cast<double>(t);
    } else {
      p = static_cast<double>(m + 1) / static_cast<double>(t + 1);
    }
    log_sum += std::log(p);
  }
  const double c = static_cast<double>(hypothesis.size());
  const double r = static_cast<double>(reference.size());
  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  return bp * std::exp(log_sum / 4.0);
}

// ---------------------------------------------------------------------------
// ROUGE

Prf RougeN(std::span<const std::string> hypothesis, std::span<const std::string> reference,
           int n) {
  if (n < 1) throw Error(ErrorKind::kConfigInvalid, "rouge n must be >= 1");
  const auto h = CountNgrams(hypothesis, n);
  const auto r = CountNgrams(reference, n);
  int64_t overlap = 0, h_total = 0, r_total = 0;
  for (const auto& [g, c] : h) {
    h_total += c;
    auto it = r.find(g);
    if (it != r.end()) overlap += std::min(c, it->second);
  }
  for (const auto& [g, c] : r) r_total += c;
  Prf out;
  if (h_total > 0) out.precision = static_cast<double>(overlap) / static_cast<double>(h_total);
  if (r_total > 0) out.recall = static_cast<double>(overlap) / static_cast<double>(r_total);
  out.f1 = F1(out.precision, out.recall);
  return out;
}

size_t LcsLength(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (size_t i = 1; i <= a.size(); ++i) {
    for (size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

Prf RougeL(std::span<const std::string> hypothesis, std::span<const std::string> reference,
           double beta) {
  Prf out;
  if (hypothesis.empty() || reference.empty()) return out;
  const double lcs = static_cast<double>(LcsLength(hypothesis, reference));
  out.precision = lcs / static_cast<double>(hypothesis.size());
  out.recall = lcs / static_cast<double>(reference.size());
  const double b2 = beta * beta;
  const double denom = out.recall + b2 * out.precision;
  out.f1 = denom > 0.0 ? (1.0 + b2) * out.precision * out.recall / denom : 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// METEOR-lite

std::string Stem(std::string_view word) {
  std::string w = ToLower(word);
  auto ends = [&](std::string_view suffix) {
    return w.size() >= suffix.size() && w.compare(w.size() - suffix.size(), suffix.size(),
                                                  suffix) == 0;
  };
  // (suffix, replacement, minimum stem length left)
  static const std::tuple<std::string_view, std::string_view, size_t> kRules[] = {
      {"sses", "ss", 2}, {"ies", "y", 2},  {"ational", "ate", 3}, {"ization", "ize", 3},
      {"fulness", "ful", 3}, {"ments", "", 4}, {"ment", "", 4}, {"ness", "", 3},
      {"ingly", "", 3}, {"edly", "", 3}, {"ing", "", 3}, {"ed", "", 3},  {"ly", "", 3},
      {"es", "", 3},   {"s", "", 3}};
  for (const auto& [suffix, replacement, min_stem] : kRules) {
    if (!ends(suffix)) continue;
    const size_t stem_len = w.size() - suffix.size();
    if (stem_len < min_stem) continue;
    if (suffix == "s" && (ends("ss") || ends("us") || ends("is"))) continue;
    w = w.substr(0, stem_len) + std::string(replacement);
    break;
  }
  return w;
}

MeteorAlignment MeteorAlign(std::span<const std::string> hypothesis,
                            std::span<const std::string> reference) {
  std::vector<int> hyp_to_ref(hypothesis.size(), -1);
  std::vector<bool> ref_used(reference.size(), false);
  auto stage = [&](auto&& key) {
    std::vector<std::string> ref_keys;
    for (const auto& r : reference) ref_keys.push_back(key(r));
    for (size_t i = 0; i < hypothesis.size(); ++i) {
      if (hyp_to_ref[i] >= 0) continue;
      const std::string k = key(hypothesis[i]);
      for (size_t j = 0; j < reference.size(); ++j) {
        if (!ref_used[j] && ref_keys[j] == k) {
          hyp_to_ref[i] = static_cast<int>(j);
          ref_used[j] = true;
          break;
        }
      }
    }
  };
  stage([](const std::string& s) { return s; });
  stage([](const std::string& s) { return Stem(s); });

  MeteorAlignment out;
  for (size_t i = 0; i < hypothesis.size(); ++i) {
    if (hyp_to_ref[i] >= 0) out.matches.emplace_back(static_cast<int>(i), hyp_to_ref[i]);
  }
  for (size_t m = 0; m < out.matches.size(); ++m) {
    if (m == 0 || out.matches[m].first != out.matches[m - 1].first + 1 ||
        out.matches[m].second != out.matches[m - 1].second + 1) {
      ++out.chunks;
    }
  }
  return out;
}

double MeteorLite(std::span<const std::string> hypothesis, std::span<const std::string> reference,
                  const MeteorParams& params) {
  if (hypothesis.empty() || reference.empty()) return 0.0;
  const auto alignment = MeteorAlign(hypothesis, reference);
  const double m = static_cast<double>(alignment.matches.size());
  if (m == 0.0) return 0.0;
  const double p = m / static_cast<double>(hypothesis.size());
  const double r = m / static_cast<double>(reference.size());
  const double f_mean = p * r / (params.alpha * p + (1.0 - params.alpha) * r);
  const double penalty = params.gamma * std::pow(alignment.chunks / m, params.beta);
  return f_mean * (1.0 - penalty);
}

// ---------------------------------------------------------------------------
// Embedding F1

std::vector<double> HashedNgramEmbedder::Embed(std::string_view token) const {
  std::vector<double> v(static_cast<size_t>(dims_), 0.0);
  const std::string padded = "<" + ToLower(token) + ">";
  const size_t n = std::min<size_t>(static_cast<size_t>(n_), padded.size());
  for (size_t i = 0; i + n <= padded.size(); ++i) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (size_t j = i; j < i + n; ++j) {
      h ^= static_cast<unsigned char>(padded[j]);
      h *= 0x100000001b3ULL;
    }
    v[h % static_cast<uint64_t>(dims_)] += 1.0;
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (double& x : v) x /= norm;
  }
  return v;
}

double EmbedF1(std::span<const std::string> hypothesis, std::span<const std::string> reference,
               const TokenEmbedder& embedder) {
  if (hypothesis.empty() || reference.empty()) return 0.0;
  std::vector<std::vector<double>> h, r;
  for (const auto& t : hypothesis) h.push_back(embedder.Embed(t));
  for (const auto& t : reference) r.push_back(embedder.Embed(t));
  std::vector<double> best_h(h.size(), 0.0), best_r(r.size(), 0.0);
  for (size_t i = 0; i < h.size(); ++i) {
    for (size_t j = 0; j < r.size(); ++j) {
      double cos = 0.0;
      for (size_t a = 0; a < h[i].size(); ++a) cos += h[i][a] * r[j][a];
      cos = std::clamp(cos, -1.0, 1.0);
      best_h[i] = std::max(best_h[i], cos);
      best_r[j] = std::max(best_r[j], cos);
    }
  }
  double p = 0.0, rc = 0.0;
  for (double v : best_h) p += v;
  for (double v : best_r) rc += v;
  p /= static_cast<double>(h.size());
  rc /= static_cast<double>(r.size());
  return std::clamp(F1(p, rc), 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Topic model

std::vector<double> TopicVector(const TopicModel& model, std::string_view text) {
  std::vector<double> v(model.terms.size(), 0.0);
  for (const auto& t : MetricTokens(text)) {
    auto it = model.terms.find(t);
    if (it != model.terms.end()) v[it->second] += 1.0;
  }
  double norm = 0.0;
  for (size_t i = 0; i < v.size(); ++i) {
    v[i] *= model.idf[i];
    norm += v[i] * v[i];
  }
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (double& x : v) x /= norm;
  }
  return v;
}

TopicModel FitTopicModel(std::span<const std::string> questions, int k, uint64_t seed) {
  if (k < 2) throw Error(ErrorKind::kConfigInvalid, "metrics.topics: must be >= 2");
  if (questions.size() < static_cast<size_t>(k)) {
    throw Error(ErrorKind::kTooFewQuestions,
                fmt::format("{} questions for {} topics", questions.size(), k));
  }
  TopicModel model;
  model.k = k;
  model.seed = seed;
  std::map<std::string, int> df;
  for (const auto& q : questions) {
    std::set<std::string> seen;
    for (auto& t : MetricTokens(q)) {
      if (IsWordToken(t)) seen.insert(std::move(t));
    }
    for (const auto& t : seen) ++df[t];
  }
  const double n = static_cast<double>(questions.size());
  for (const auto& [term, count] : df) {
    model.terms.emplace(term, static_cast<int>(model.idf.size()));
    model.idf.push_back(std::log((1.0 + n) / (1.0 + count)) + 1.0);
  }

  std::vector<std::vector<double>> points;
  for (const auto& q : questions) points.push_back(TopicVector(model, q));
  std::vector<std::vector<double>> distinct = points;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < static_cast<size_t>(k)) {
    throw Error(ErrorKind::kTooFewQuestions,
                fmt::format("{} distinct questions for {} topics", distinct.size(), k));
  }

  // Seeded k-means++ restarts; the run with the lowest inertia wins.
  Rng rng(seed);
  const size_t dims = model.terms.size();
  double best_inertia = std::numeric_limits<double>::infinity();
  for (int restart = 0; restart < kTopicRestarts; ++restart) {
    std::vector<std::vector<double>> centroids;
    centroids.push_back(distinct[rng.UniformInt(distinct.size())]);
    std::vector<double> d2(distinct.size());
    while (centroids.size() < static_cast<size_t>(k)) {
      double total = 0.0;
      for (size_t i = 0; i < distinct.size(); ++i) {
        d2[i] = std::numeric_limits<double>::infinity();
        for (const auto& c : centroids) d2[i] = std::min(d2[i], SquaredDistance(distinct[i], c));
        total += d2[i];
      }
      double u = rng.Uniform() * total;
      size_t pick = distinct.size();
      for (size_t i = 0; i < distinct.size(); ++i) {
        if (d2[i] <= 0.0) continue;
        pick = i;
        u -= d2[i];
        if (u < 0.0) break;
      }
      centroids.push_back(distinct[pick]);
    }

    std::vector<int> assignment(points.size(), -1);
    int iterations = 0;
    for (; iterations < 100; ++iterations) {
      bool changed = false;
      for (size_t i = 0; i < points.size(); ++i) {
        const int best = NearestCentroid(points[i], centroids);
        if (assignment[i] != best) {
          assignment[i] = best;
          changed = true;
        }
      }
      if (!changed) break;
      std::vector<std::vector<double>> sums(k, std::vector<double>(dims, 0.0));
      std::vector<int> counts(k, 0);
      for (size_t i = 0; i < points.size(); ++i) {
        ++counts[assignment[i]];
        for (size_t a = 0; a < dims; ++a) sums[assignment[i]][a] += points[i][a];
      }
      for (int c = 0; c < k; ++c) {
        if (counts[c] == 0) continue;  // empty cluster keeps its centroid
        for (size_t a = 0; a < dims; ++a) centroids[c][a] = sums[c][a] / counts[c];
      }
    }
    double inertia = 0.0;
    for (const auto& p : points) {
      inertia += SquaredDistance(p, centroids[NearestCentroid(p, centroids)]);
    }
    if (inertia < best_inertia) {
      best_inertia = inertia;
      model.centroids = std::move(centroids);
      model.iterations = iterations;
    }
  }
  return model;
}

std::vector<int> AssignTopics(const TopicModel& model, std::span<const std::string> texts) {
  std::vector<int> out;
  for (const auto& t : texts) {
    out.push_back(NearestCentroid(TopicVector(model, t), model.centroids));
  }
  return out;
}

std::vector<double> TextTopicDistribution(const TopicModel& model, std::string_view text) {
  const auto v = TopicVector(model, text);
  std::vector<double> logits;
  for (const auto& c : model.centroids) logits.push_back(-std::sqrt(SquaredDistance(v, c)));
  return Softmax(std::move(logits));
}

std::vector<double> TopicDistribution(const TopicModel& model, std::string_view question) {
  std::vector<double> mean = TextTopicDistribution(model, question);
  const auto sentences = SplitSentences(question);
  for (const auto& s : sentences) {
    const auto d = TextTopicDistribution(model, s);
    for (size_t j = 0; j < mean.size(); ++j) mean[j] += d[j];
  }
  for (double& p : mean) p /= static_cast<double>(sentences.size() + 1);
  return mean;
}

double Entropy(std::span<const double> distribution) {
  double h = 0.0;
  for (double p : distribution) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

double SemEnt(const TopicModel& model, std::span<const std::string> questions) {
  if (questions.empty()) return 0.0;
  std::vector<double> aggregate(static_cast<size_t>(model.k), 0.0);
  for (const auto& q : questions) {
    const auto d = TopicDistribution(model, q);
    for (size_t j = 0; j < aggregate.size(); ++j) aggregate[j] += d[j];
  }
  for (double& p : aggregate) p /= static_cast<double>(questions.size());
  return std::clamp(Entropy(aggregate), 0.0, std::log(static_cast<double>(model.k)));
}

// ---------------------------------------------------------------------------
// Run evaluation

EvalReport EvaluateRun(const std::vector<QuestionRecord>& generated,
                       const std::vector<QuestionRecord>& references,
                       const EvalOptions& options) {
  using Key = std::pair<std::string, std::string>;
  auto index = [](const std::vector<QuestionRecord>& records, const char* what) {
    std::map<Key, const QuestionRecord*> out;
    for (const auto& r : records) {
      if (!out.emplace(Key{r.transcript_id, r.question_id}, &r).second) {
        throw Error(ErrorKind::kAlignmentError, fmt::format("duplicate {} id {}/{}", what,
                                                            r.transcript_id, r.question_id));
      }
    }
    return out;
  };
  const auto gen = index(generated, "generated");
  const auto ref = index(references, "reference");
  std::vector<std::string> unmatched;
  for (const auto& [key, r] : gen) {
    if (!ref.count(key)) unmatched.push_back("generated:" + key.first + "/" + key.second);
  }
  for (const auto& [key, r] : ref) {
    if (!gen.count(key)) unmatched.push_back("reference:" + key.first + "/" + key.second);
  }
  if (!unmatched.empty()) {
    throw Error(ErrorKind::kAlignmentError,
                fmt::format("unmatched ids: {}", fmt::join(unmatched, ", ")));
  }
  if (gen.empty()) throw Error(ErrorKind::kAlignmentError, "no questions to evaluate");

  const std::shared_ptr<const TokenEmbedder> embedder =
      options.embedder ? options.embedder : std::make_shared<HashedNgramEmbedder>();
  EvalReport report;
  std::vector<std::vector<std::string>> hyp_tokens, ref_tokens;
  for (const auto& [key, g] : gen) {
    const QuestionRecord& r = *ref.at(key);
    auto h = MetricTokens(g->text);
    auto rt = MetricTokens(r.text);
    EvalRow row;
    row.transcript_id = key.first;
    row.question_id = key.second;
    row.generated = g->text;
    row.reference = r.text;
    row.bleu4 = SentenceBleu4(h, rt);
    row.rouge2 = RougeN(h, rt, 2).f1;
    row.rougeL = RougeL(h, rt).f1;
    row.meteor = MeteorLite(h, rt);
    row.embed_f1 = EmbedF1(h, rt, *embedder);
    report.rouge2 += row.rouge2;
    report.rougeL += row.rougeL;
    report.meteor += row.meteor;
    report.embed_f1 += row.embed_f1;
    hyp_tokens.push_back(std::move(h));
    ref_tokens.push_back(std::move(rt));
    report.rows.push_back(std::move(row));
  }
  const double n = static_cast<double>(report.rows.size());
  report.n_questions = static_cast<int>(report.rows.size());
  report.bleu4 = Bleu4Tokens(hyp_tokens, ref_tokens);
  report.rouge2 /= n;
  report.rougeL /= n;
  report.meteor /= n;
  report.embed_f1 /= n;

  // Per-company topic models over the reference questions.
  auto company_of = [&](const std::string& tid) {
    auto it = options.companies.find(tid);
    return it == options.companies.end() ? tid : it->second;
  };
  std::map<std::string, std::vector<std::string>> company_refs, company_gen;
  std::map<std::string, std::vector<std::string>> by_transcript;
  for (const auto& row : report.rows) {
    company_refs[company_of(row.transcript_id)].push_back(row.reference);
    company_gen[company_of(row.transcript_id)].push_back(row.generated);
    by_transcript[row.transcript_id].push_back(row.generated);
  }
  std::map<std::string, std::optional<TopicModel>> models;
  for (const auto& [company, refs] : company_refs) {
    std::vector<std::string> pool = refs;
    std::optional<TopicModel> model;
    for (int attempt = 0; attempt < 2 && !model; ++attempt) {
      if (attempt == 1) {
        pool.insert(pool.end(), company_gen[company].begin(), company_gen[company].end());
      }
      for (int k = options.topics; k >= 2 && !model; --k) {
        try {
          model = FitTopicModel(pool, k, options.seed);
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::kTooFewQuestions) throw;
        }
      }
    }
    if (!model) spdlog::warn("company {}: too few distinct questions for a topic model", company);
    models[company] = std::move(model);
  }
  for (const auto& [tid, questions] : by_transcript) {
    PresentationDiversity d;
    d.transcript_id = tid;
    d.company = company_of(tid);
    d.n_questions = static_cast<int>(questions.size());
    if (const auto& model = models.at(d.company)) {
      d.topics = model->k;
      d.sem_ent = SemEnt(*model, questions);
    }
    report.sem_ent += d.sem_ent;
    report.presentations.push_back(std::move(d));
  }
  report.sem_ent /= static_cast<double>(report.presentations.size());
  return report;
}

nlohmann::ordered_json ReportToJson(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["bleu4"] = report.bleu4;
  j["rouge2"] = report.rouge2;
  j["rougeL"] = report.rougeL;
  j["meteor"] = report.meteor;
  j["embed_f1"] = report.embed_f1;
  j["sem_ent"] = report.sem_ent;
  j["n_questions"] = report.n_questions;
  j["presentations"] = nlohmann::ordered_json::array();
  for (const auto& p : report.presentations) {
    j["presentations"].push_back({{"transcript_id", p.transcript_id},
                                  {"company", p.company},
                                  {"n_questions", p.n_questions},
                                  {"topics", p.topics},
                                  {"sem_ent", p.sem_ent}});
  }
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : report.rows) {
    j["rows"].push_back({{"transcript_id", r.transcript_id},
                         {"question_id", r.question_id},
                         {"generated", r.generated},
                         {"reference", r.reference},
                         {"bleu4", r.bleu4},
                         {"rouge2", r.rouge2},
                         {"rougeL", r.rougeL},
                         {"meteor", r.meteor},
                         {"embed_f1", r.embed_f1}});
  }
  return j;
}

EvalReport ReportFromJson(const nlohmann::json& j) {
  EvalReport report;
  try {
    report.bleu4 = j.at("bleu4").get<double>();
    report.rouge2 = j.at("rouge2").get<double>();
    report.rougeL = j.at("rougeL").get<double>();
    report.meteor = j.at("meteor").get<double>();
    report.embed_f1 = j.at("embed_f1").get<double>();
    report.sem_ent = j.at("sem_ent").get<double>();
    report.n_questions = j.at("n_questions").get<int>();
    for (const auto& p : j.value("presentations", nlohmann::json::array())) {
      report.presentations.push_back({p.at("transcript_id").get<std::string>(),
                                      p.at("company").get<std::string>(),
                                      p.at("n_questions").get<int>(), p.at("topics").get<int>(),
                                      p.at("sem_ent").get<double>()});
    }
    for (const auto& r : j.value("rows", nlohmann::json::array())) {
      report.rows.push_back({r.at("transcript_id").get<std::string>(),
                             r.at("question_id").get<std::string>(),
                             r.at("generated").get<std::string>(),
                             r.at("reference").get<std::string>(), r.at("bleu4").get<double>(),
                             r.at("rouge2").get<double>(), r.at("rougeL").get<double>(),
                             r.at("meteor").get<double>(), r.at("embed_f1").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kSchemaViolation, std::string("report: ") + e.what());
  }
  return report;
}

std::string RenderReportTable(std::span<const std::pair<std::string, EvalReport>> runs) {
  size_t width = 6;
  for (const auto& [label, r] : runs) width = std::max(width, label.size());
  std::string out = fmt::format("{:<{}}  {:>8}  {:>8}  {:>8}  {:>8}  {:>8}  {:>8}  {:>5}\n",
                                "run", width, "BLEU-4", "ROUGE-2", "ROUGE-L", "METEOR",
                                "embed_f1", "Sem-Ent", "n");
  for (const auto& [label, r] : runs) {
    out += fmt::format("{:<{}}  {:>8.3f}  {:>8.3f}  {:>8.3f}  {:>8.3f}  {:>8.3f}  {:>8.3f}  {:>5}\n",
                       label, width, 100 * r.bleu4, 100 * r.rouge2, 100 * r.rougeL,
                       100 * r.meteor, 100 * r.embed_f1, r.sem_ent, r.n_questions);
  }
  return out;
}

std::string RenderReportTable(const EvalReport& report, std::string_view label) {
  const std::pair<std::string, EvalReport> run{std::string(label), report};
  return RenderReportTable(std::span(&run, 1));
}

}  // namespace callprep
