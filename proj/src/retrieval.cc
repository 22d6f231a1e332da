// Copyright 2026 The callprep Authors
// SPDX-License-Identifier: Apache-2.0

#include "callprep/retrieval.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "callprep/errors.h"
#include "callprep/log.h"
#include "callprep/rng.h"
#include "httplib.h"
#include "json.hpp"

namespace callprep {

const std::string_view kRelevanceTemplate =
    "Given a manager's presentation transcript during an earnings call and an "
    "analyst's query, discern if the query is deeply anchored, tangentially "
    "connected, or aloof from the manager's discourse? (\"Highly Related\"/"
    "\"Partially Related\"/\"Not Related\") Transcript: ${presentation} "
    "Question: ${question} Assistant: The assessment is [MASK]";

namespace {

constexpr double kDistributionTolerance = 1e-9;
constexpr std::string_view kPresentationSlot = "${presentation}";
constexpr std::string_view kQuestionSlot = "${question}";

}  // namespace

RelevanceJudgment MakeJudgment(double p_highly, double p_partially, double p_not) {
  for (double p : {p_highly, p_partially, p_not}) {
    if (!std::isfinite(p) || p < -kDistributionTolerance ||
        p > 1.0 + kDistributionTolerance) {
      throw Error(ErrorKind::kBackendFailure, "label probability out of [0,1]");
    }
  }
  if (std::abs(p_highly + p_partially + p_not - 1.0) > kDistributionTolerance) {
    throw Error(ErrorKind::kBackendFailure, "label probabilities do not sum to 1");
  }
  return {p_highly, p_partially, p_not, p_highly + p_partially - p_not};
}

RelevanceJudgment JudgmentFromLogprobs(double lp_highly, double lp_partially,
                                       double lp_not) {
  for (double lp : {lp_highly, lp_partially, lp_not}) {
    if (std::isnan(lp) || lp == std::numeric_limits<double>::infinity()) {
      throw Error(ErrorKind::kBackendFailure, "invalid label log-probability");
    }
  }
  const double m = std::max({lp_highly, lp_partially, lp_not});
  if (!std::isfinite(m)) {
    throw Error(ErrorKind::kBackendFailure, "all label log-probabilities are -inf");
  }
  const double eh = std::exp(lp_highly - m);
  const double ep = std::exp(lp_partially - m);
  const double en = std::exp(lp_not - m);
  const double z = eh + ep + en;
  return MakeJudgment(eh / z, ep / z, en / z);
}

RetrievalResult RandomRetrieve(int n_segments, int k, uint64_t seed) {
  const int take = std::max(0, std::min(k, n_segments));
  std::vector<int> pool(static_cast<size_t>(std::max(0, n_segments)));
  std::iota(pool.begin(), pool.end(), 0);
  Rng rng(seed);
  // Partial Fisher-Yates: the first `take` slots are a uniform sample.
  for (int i = 0; i < take; ++i) {
    const auto j = i + static_cast<int>(rng.UniformInt(static_cast<uint64_t>(n_segments - i)));
    std::swap(pool[i], pool[j]);
  }
  RetrievalResult result;
  result.segment_indices.assign(pool.begin(), pool.begin() + take);
  std::sort(result.segment_indices.begin(), result.segment_indices.end());
  result.scores.assign(result.segment_indices.size(), 0.0);
  return result;
}

RetrievalResult TopKSelect(std::span<const std::pair<int, double>> judgments, int k) {
  std::vector<std::pair<int, double>> ranked(judgments.begin(), judgments.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  ranked.resize(std::min(ranked.size(), static_cast<size_t>(std::max(k, 0))));
  std::sort(ranked.begin(), ranked.end());
  RetrievalResult result;
  for (const auto& [index, score] : ranked) {
    result.segment_indices.push_back(index);
    result.scores.push_back(score);
  }
  return result;
}

int Bm25Index::DocFreq(const std::string& term) const {
  auto it = doc_freqs.find(term);
  return it == doc_freqs.end() ? 0 : it->second;
}

std::vector<std::string> Bm25Terms(std::string_view text) {
  std::vector<std::string> terms;
  for (const auto& t : Tokenize(text)) {
    if (!IsPunctuationToken(t.text)) terms.push_back(ToLower(t.text));
  }
  return terms;
}

Bm25Index Bm25Build(std::span<const Segment> segments, double k1, double b) {
  if (segments.empty()) throw Error(ErrorKind::kEmptySegments, "no segments to index");
  if (!(k1 > 0.0) || b < 0.0 || b > 1.0) {
    throw Error(ErrorKind::kConfigInvalid, "bm25 requires k1 > 0 and 0 <= b <= 1");
  }
  Bm25Index index;
  index.k1 = k1;
  index.b = b;
  index.n_docs = static_cast<int>(segments.size());
  double total = 0.0;
  for (int d = 0; d < index.n_docs; ++d) {
    std::map<std::string, int> tf;
    int len = 0;
    for (const auto& t : segments[d].tokens) {
      if (IsPunctuationToken(t.text)) continue;
      ++tf[ToLower(t.text)];
      ++len;
    }
    index.doc_lens.push_back(len);
    total += len;
    for (const auto& [term, count] : tf) {
      ++index.doc_freqs[term];
      index.postings[term].push_back({d, count});
    }
  }
  index.avg_doc_len = total / index.n_docs;
  return index;
}

std::vector<std::pair<int, double>> Bm25Score(const Bm25Index& index,
                                              std::string_view query) {
  std::vector<double> scores(static_cast<size_t>(index.n_docs), 0.0);
  const double n = index.n_docs;
  for (const auto& term : Bm25Terms(query)) {
    auto it = index.postings.find(term);
    if (it == index.postings.end()) continue;
    const double df = static_cast<double>(it->second.size());
    const double idf = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
    for (const auto& posting : it->second) {
      const double tf = posting.term_frequency;
      const double len_norm =
          index.avg_doc_len > 0.0 ? index.doc_lens[posting.segment] / index.avg_doc_len
                                  : 0.0;
      const double denom = tf + index.k1 * (1.0 - index.b + index.b * len_norm);
      scores[posting.segment] += idf * tf * (index.k1 + 1.0) / denom;
    }
  }
  std::vector<std::pair<int, double>> ranked;
  ranked.reserve(scores.size());
  for (int d = 0; d < index.n_docs; ++d) ranked.emplace_back(d, scores[d]);
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) {
    if (x.second != y.second) return x.second > y.second;
    return x.first < y.first;
  });
  return ranked;
}

std::string RenderRelevancePrompt(std::string_view presentation_text,
                                  std::string_view question_text) {
  const std::string_view tpl = kRelevanceTemplate;
  const size_t p = tpl.find(kPresentationSlot);
  const size_t q = tpl.find(kQuestionSlot);
  std::string out;
  out.reserve(tpl.size() + presentation_text.size() + question_text.size());
  out.append(tpl.substr(0, p));
  out.append(presentation_text);
  out.append(tpl.substr(p + kPresentationSlot.size(), q - p - kPresentationSlot.size()));
  out.append(question_text);
  out.append(tpl.substr(q + kQuestionSlot.size()));
  return out;
}

RelevanceJudgment ScoreSegment(RelevanceScorer& scorer, const Segment& segment,
                               std::string_view question) {
  const RelevanceJudgment j = scorer.Judge(segment.text, question);
  // Re-validate whatever the backend produced.
  return MakeJudgment(j.p_highly, j.p_partially, j.p_not);
}

std::string FitSegmentToPrompt(std::string_view segment_text,
                               std::string_view question_text, int budget) {
  const auto overhead =
      static_cast<int>(Tokenize(RenderRelevancePrompt("", question_text)).size());
  const std::vector<Token> tokens = Tokenize(segment_text);
  const int allowed = std::max(0, budget - overhead);
  if (static_cast<int>(tokens.size()) <= allowed) return std::string(segment_text);
  spdlog::debug("retriever prompt over {} tokens; segment cut from {} to {} tokens",
                budget, tokens.size(), allowed);
  return Detokenize(std::span<const Token>(tokens).first(static_cast<size_t>(allowed)));
}

RelevanceJudgment ParseJudgeResponse(std::string_view body) {
  try {
    const auto j = nlohmann::json::parse(body);
    const auto& lp = j.at("label_logprobs");
    return JudgmentFromLogprobs(lp.at("highly").get<double>(),
                                lp.at("partially").get<double>(),
                                lp.at("not").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kBackendFailure, std::string("malformed judge response: ") + e.what());
  }
}

RemoteScorer::RemoteScorer(std::string base_url, std::string path, int timeout_seconds)
    : base_url_(std::move(base_url)), path_(std::move(path)), timeout_seconds_(timeout_seconds) {}

RelevanceJudgment RemoteScorer::Judge(std::string_view segment_text,
                                      std::string_view question_text) {
  httplib::Client client(base_url_);
  client.set_connection_timeout(timeout_seconds_);
  client.set_read_timeout(timeout_seconds_);
  const std::string fitted = FitSegmentToPrompt(segment_text, question_text);
  const nlohmann::json request = {{"prompt", RenderRelevancePrompt(fitted, question_text)}};
  auto response = client.Post(path_, request.dump(), "application/json");
  if (!response) {
    throw Error(ErrorKind::kBackendFailure,
                "judge unreachable at " + base_url_ + ": " + httplib::to_string(response.error()));
  }
  if (response->status != 200) {
    throw Error(ErrorKind::kBackendFailure,
                "judge returned HTTP " + std::to_string(response->status));
  }
  return ParseJudgeResponse(response->body);
}

}  // namespace callprep
