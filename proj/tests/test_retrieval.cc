// Copyright 2026 The callprep Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "callprep/errors.h"
#include "callprep/retrieval.h"
#include "callprep/textseg.h"
#include "doctest.h"
#include "fake_server.h"
#include "oracles.h"

namespace callprep {
namespace {

std::vector<Segment> MakeSegments(const std::vector<std::string>& texts) {
  std::vector<Segment> segs;
  for (size_t i = 0; i < texts.size(); ++i) {
    Segment s;
    s.transcript_id = "t";
    s.index = static_cast<int>(i);
    s.tokens = Tokenize(texts[i]);
    s.text = texts[i];
    segs.push_back(std::move(s));
  }
  return segs;
}

std::vector<int> Indices(const RetrievalResult& r) { return r.segment_indices; }

TEST_CASE("random retrieval clamps, sorts and is reproducible") {
  CHECK(Indices(RandomRetrieve(3, 6, 1)) == std::vector<int>{0, 1, 2});
  CHECK(RandomRetrieve(100, 6, 42) == RandomRetrieve(100, 6, 42));
  const auto r = RandomRetrieve(100, 6, 42);
  CHECK(r.segment_indices.size() == 6);
  CHECK(std::is_sorted(r.segment_indices.begin(), r.segment_indices.end()));
  CHECK(std::adjacent_find(r.segment_indices.begin(), r.segment_indices.end()) ==
        r.segment_indices.end());
}

TEST_CASE("random retrieval is uniform") {
  std::vector<int> counts(10, 0);
  const int trials = 10000;
  for (int t = 0; t < trials; ++t)
    for (int i : RandomRetrieve(10, 6, static_cast<uint64_t>(t) * 7919 + 1).segment_indices)
      ++counts[i];
  for (int c : counts) CHECK(std::abs(c / double(trials) - 0.6) <= 0.02);
}

TEST_CASE("bm25 index by hand") {
  const auto segs = MakeSegments({"Cash flow improved.", "Cash, cash and more cash", "Margins"});
  const Bm25Index idx = Bm25Build(segs);
  CHECK(idx.n_docs == 3);
  CHECK(idx.doc_lens == std::vector<int>{3, 5, 1});
  CHECK(idx.avg_doc_len == doctest::Approx(3.0));
  CHECK(idx.DocFreq("cash") == 2);
  CHECK(idx.DocFreq("revenue") == 0);
  CHECK(idx.postings.at("cash") == std::vector<Posting>{{0, 1}, {1, 3}});
  CHECK(idx.postings.at("margins") == std::vector<Posting>{{2, 1}});

  const Bm25Index one = Bm25Build(MakeSegments({"alpha beta gamma"}));
  CHECK(one.avg_doc_len == 3.0);
  CHECK_THROWS_AS(Bm25Build(std::vector<Segment>{}), Error);
}

TEST_CASE("bm25 scores match the brute-force oracle") {
  const std::vector<std::string> docs = {"cash flow grew strongly", "margin margin pressure",
                                         "cash margin outlook for the year"};
  const auto segs = MakeSegments(docs);
  const Bm25Index idx = Bm25Build(segs);
  const auto ranked = Bm25Score(idx, "cash margin");
  std::vector<std::vector<std::string>> doc_terms;
  for (const auto& d : docs) doc_terms.push_back(Bm25Terms(d));
  const auto expected = oracles::Bm25(doc_terms, Bm25Terms("cash margin"), 1.2, 0.75);
  REQUIRE(ranked.size() == 3);
  for (const auto& [d, s] : ranked) CHECK(std::abs(s - expected[d]) <= 1e-9);
  for (size_t i = 1; i < ranked.size(); ++i) CHECK(ranked[i - 1].second >= ranked[i].second);

  for (const auto& [d, s] : Bm25Score(idx, "revenue")) CHECK(s == 0.0);
  for (const auto& [d, s] : Bm25Score(idx, "")) CHECK(s == 0.0);
  CHECK(Bm25Score(Bm25Build(MakeSegments({"gross margin"})), "gross margin")[0].second > 0.0);
}

TEST_CASE("bm25 equals the oracle on random small corpora") {
  std::mt19937 rng(23);
  std::uniform_int_distribution<int> n_docs(1, 10), n_len(0, 12), n_query(0, 6);
  std::vector<std::string> vocab;
  for (int i = 0; i < 20; ++i) vocab.push_back("w" + std::to_string(i));
  std::uniform_int_distribution<int> pick(0, 19);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::string> docs;
    std::vector<std::vector<std::string>> doc_terms;
    const int nd = n_docs(rng);
    for (int d = 0; d < nd; ++d) {
      std::vector<std::string> terms;
      const int len = n_len(rng);
      for (int i = 0; i < len; ++i) terms.push_back(vocab[pick(rng)]);
      std::string text;
      for (const auto& t : terms) text += (text.empty() ? "" : " ") + t;
      docs.push_back(text);
      doc_terms.push_back(terms);
    }
    std::vector<std::string> query;
    const int nq = n_query(rng);
    for (int i = 0; i < nq; ++i) query.push_back(vocab[pick(rng)]);
    std::string qtext;
    for (const auto& t : query) qtext += " " + t;

    const auto ranked = Bm25Score(Bm25Build(MakeSegments(docs)), qtext);
    const auto expected = oracles::Bm25(doc_terms, query, 1.2, 0.75);
    for (const auto& [d, s] : ranked) CHECK(std::abs(s - expected[d]) <= 1e-9);

    // Reordering the query terms changes nothing.
    std::reverse(query.begin(), query.end());
    std::string reversed;
    for (const auto& t : query) reversed += " " + t;
    const auto again = Bm25Score(Bm25Build(MakeSegments(docs)), reversed);
    for (size_t i = 0; i < ranked.size(); ++i) {
      CHECK(again[i].first == ranked[i].first);
      CHECK(std::abs(again[i].second - ranked[i].second) <= 1e-12);
    }
  }
}

TEST_CASE("relevance prompt template") {
  const std::string p = RenderRelevancePrompt("P", "Q");
  CHECK(p.find("Transcript: P Question: Q") != std::string::npos);
  CHECK(p ==
        "Given a manager's presentation transcript during an earnings call and an "
        "analyst's query, discern if the query is deeply anchored, tangentially "
        "connected, or aloof from the manager's discourse? (\"Highly Related\"/"
        "\"Partially Related\"/\"Not Related\") Transcript: P Question: Q "
        "Assistant: The assessment is [MASK]");
  CHECK(RenderRelevancePrompt("a b", "c") != RenderRelevancePrompt("a", "b c"));
}

TEST_CASE("judgment score formula and invariants") {
  CHECK(MakeJudgment(1, 0, 0).score == 1.0);
  CHECK(MakeJudgment(0, 0, 1).score == -1.0);
  CHECK(MakeJudgment(0.5, 0.3, 0.2).score == doctest::Approx(0.6).epsilon(1e-12));
  CHECK_THROWS_AS(MakeJudgment(0.5, 0.5, 0.5), Error);
  CHECK_THROWS_AS(MakeJudgment(-0.1, 0.6, 0.5), Error);

  const auto j = JudgmentFromLogprobs(std::log(0.5), std::log(0.3), std::log(0.2));
  CHECK(j.p_highly == doctest::Approx(0.5));
  CHECK(j.p_highly + j.p_partially + j.p_not == doctest::Approx(1.0).epsilon(1e-12));
  // Moving mass from highly to not strictly lowers the score.
  double prev = 2.0;
  for (double x = 0.0; x <= 0.8; x += 0.1) {
    const double s = MakeJudgment(0.8 - x, 0.2, x).score;
    CHECK(s < prev);
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
    prev = s;
  }
}

TEST_CASE("top-k selection") {
  const std::vector<std::pair<int, double>> j = {{0, .1}, {1, .9}, {2, .5}, {3, .8}};
  CHECK(Indices(TopKSelect(j, 2)) == std::vector<int>{1, 3});
  CHECK(TopKSelect(j, 2).scores == std::vector<double>{.9, .8});
  CHECK(Indices(TopKSelect(j, 10)) == std::vector<int>{0, 1, 2, 3});
  const std::vector<std::pair<int, double>> flat = {{0, .3}, {1, .3}, {2, .3}};
  CHECK(Indices(TopKSelect(flat, 2)) == std::vector<int>{0, 1});
}

TEST_CASE("top-k indices are increasing for random scores") {
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::pair<int, double>> j;
    for (int i = 0; i < 20; ++i) j.emplace_back(i, std::round(u(rng) * 4) / 4);
    std::vector<std::pair<int, double>> shuffled = j;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto r = TopKSelect(shuffled, 6);
    CHECK(r == TopKSelect(j, 6));
    REQUIRE(r.segment_indices.size() == 6);
    CHECK(std::is_sorted(r.segment_indices.begin(), r.segment_indices.end()));
    // Every chosen score beats every unchosen one, or ties with a higher index.
    for (const auto& [i, s] : j) {
      const bool chosen = std::count(r.segment_indices.begin(), r.segment_indices.end(), i);
      if (chosen) continue;
      for (int c : r.segment_indices) {
        const double sc = j[c].second;
        CHECK((sc > s || (sc == s && c < i)));
      }
    }
  }
}

TEST_CASE("prompt fitting truncates only the segment tail") {
  std::string long_seg;
  for (int i = 0; i < 600; ++i) long_seg += "word ";
  const std::string fitted = FitSegmentToPrompt(long_seg, "What next?", 512);
  CHECK(Tokenize(RenderRelevancePrompt(fitted, "What next?")).size() == 512);
  CHECK(FitSegmentToPrompt("short text", "q", 512) == "short text");
}

using testing::FakeJsonServer;

TEST_CASE("remote scorer maps label log-probabilities through a softmax") {
  FakeJsonServer server(
      "/judge",
      R"({"label_logprobs": {"highly": -0.6931471805599453, "partially": -1.2039728043259361,)"
      R"( "not": -1.6094379124341003}})");
  RemoteScorer scorer(server.url());
  const auto segs = MakeSegments({"Margins expanded."});
  const auto j = ScoreSegment(scorer, segs[0], "How are margins?");
  CHECK(j.p_highly == doctest::Approx(0.5));
  CHECK(j.score == doctest::Approx(0.6));
  CHECK(server.last_request().at("prompt") == RenderRelevancePrompt("Margins expanded.", "How are margins?"));
}

TEST_CASE("remote scorer failures") {
  SUBCASE("malformed body") {
    FakeJsonServer server("/judge", R"({"label_logprobs": {"highly": 0}})");
    RemoteScorer scorer(server.url());
    try {
      scorer.Judge("a", "b");
      FAIL("expected BackendFailure");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kBackendFailure);
    }
  }
  SUBCASE("unreachable") {
    RemoteScorer scorer("http://127.0.0.1:1", "/judge", 1);
    try {
      scorer.Judge("a", "b");
      FAIL("expected BackendFailure");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kBackendFailure);
    }
  }
  CHECK_THROWS_AS(ParseJudgeResponse("not json"), Error);
}

}  // namespace
}  // namespace callprep
