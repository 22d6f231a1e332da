// Copyright 2026 The callprep Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "callprep/corpus.h"
#include "callprep/errors.h"
#include "callprep/metrics.h"
#include "doctest.h"
#include "json.hpp"
#include "oracles.h"

namespace callprep {
namespace {

using Tokens = std::vector<std::string>;

Tokens Split(const std::string& s) {
  Tokens out;
  size_t i = 0;
  while (i < s.size()) {
    const size_t j = s.find(' ', i);
    out.push_back(s.substr(i, j == std::string::npos ? std::string::npos : j - i));
    if (j == std::string::npos) break;
    i = j + 1;
  }
  return out;
}

Tokens RandomTokens(std::mt19937& rng, int min_len, int max_len) {
  static const Tokens kWords = {"margin", "margins", "grow",  "grows", "growing", "growth",
                                "the",    "a",       "cash",  "flow",  "reported", "reports",
                                "strong", "strongly", "demand", "price"};
  std::uniform_int_distribution<int> len(min_len, max_len);
  std::uniform_int_distribution<size_t> pick(0, kWords.size() - 1);
  Tokens t(len(rng));
  for (auto& w : t) w = kWords[pick(rng)];
  return t;
}

QuestionRecord Q(std::string tid, std::string qid, std::string text) {
  QuestionRecord r;
  r.transcript_id = std::move(tid);
  r.question_id = std::move(qid);
  r.text = std::move(text);
  r.word_count = CountWords(r.text);
  return r;
}

// k one-term topics, each term sitting exactly on its centroid.
TopicModel OneHotModel(int k) {
  TopicModel m;
  m.k = k;
  for (int i = 0; i < k; ++i) {
    m.terms.emplace("t" + std::to_string(i), i);
    m.idf.push_back(1.0);
    std::vector<double> c(k, 0.0);
    c[i] = 1.0;
    m.centroids.push_back(c);
  }
  return m;
}

TEST_CASE("metric tokens are lowercased text tokens") {
  CHECK(MetricTokens("Revenue grew 8%.") == Tokens{"revenue", "grew", "8", "%", "."});
}

TEST_CASE("bleu") {
  const std::vector<std::string> same = {"the margin grew strongly this year"};
  CHECK(Bleu4(same, same) == doctest::Approx(1.0).epsilon(1e-12));
  const std::vector<std::string> a = {"alpha beta gamma delta"}, b = {"one two three four"};
  CHECK(Bleu4(a, b) == 0.0);
  CHECK_THROWS_AS(Bleu4(a, std::vector<std::string>{"x", "y"}), Error);

  const std::vector<Tokens> hyps = {Split("the cat sat on the mat today"),
                                    Split("a quick brown fox jumps over")};
  const std::vector<Tokens> refs = {Split("the cat is sitting on the mat today"),
                                    Split("the quick brown fox jumps over the dog")};
  CHECK(std::abs(Bleu4Tokens(hyps, refs) - oracles::CorpusBleu4(hyps, refs)) <= 1e-9);
  CHECK(Bleu4Tokens(hyps, refs) > 0.0);
}

TEST_CASE("rouge hand cases") {
  const Prf l = RougeL(Split("a c d"), Split("a b c d"));
  CHECK(l.precision == 1.0);
  CHECK(l.recall == 0.75);
  CHECK(l.f1 == doctest::Approx(2.44 * 0.75 / (0.75 + 1.44)).epsilon(1e-12));
  CHECK(LcsLength(Split("a c d"), Split("a b c d")) == 3);
  CHECK(RougeL(Split("x y z"), Split("x y z")).f1 == doctest::Approx(1.0));
  CHECK(RougeN(Split("x y z"), Split("x y z"), 2).f1 == doctest::Approx(1.0));
  CHECK(RougeN(Split("a b c"), Split("b a c"), 2).f1 == 0.0);
  CHECK(RougeN(Tokens{}, Split("a b"), 1).f1 == 0.0);
  CHECK_THROWS_AS(RougeN(Split("a"), Split("a"), 0), Error);
}

TEST_CASE("lcs equals the table oracle on all short strings") {
  // Every pair of strings over {a, b, c} with combined length <= 8.
  std::vector<std::vector<std::string>> by_len(9);
  by_len[0].push_back("");
  for (int n = 1; n <= 8; ++n)
    for (const auto& s : by_len[n - 1])
      for (char c : {'a', 'b', 'c'}) by_len[n].push_back(s + c);
  Tokens x, y;
  auto to_tokens = [](const std::string& s, Tokens& out) {
    out.resize(s.size());
    for (size_t i = 0; i < s.size(); ++i) out[i].assign(1, s[i]);
  };
  long pairs = 0;
  for (int la = 0; la <= 8; ++la) {
    for (int lb = 0; la + lb <= 8; ++lb) {
      for (const auto& a : by_len[la]) {
        to_tokens(a, x);
        for (const auto& b : by_len[lb]) {
          to_tokens(b, y);
          if (LcsLength(x, y) != static_cast<size_t>(oracles::LcsTable(a, b))) {
            FAIL("lcs mismatch for " << a << " / " << b);
          }
          ++pairs;
        }
      }
    }
  }
  CHECK(pairs > 0);
}

TEST_CASE("correctness metrics match the oracles on random pairs") {
  std::mt19937 rng(31);
  HashedNgramEmbedder embedder;
  auto embed = [&](const std::string& t) { return embedder.Embed(t); };
  for (int trial = 0; trial < 200; ++trial) {
    const Tokens h = RandomTokens(rng, 1, 10);
    const Tokens r = RandomTokens(rng, 1, 10);
    const Prf r2 = RougeN(h, r, 2);
    const auto o2 = oracles::RougeN(h, r, 2);
    CHECK(std::abs(r2.precision - o2.p) <= 1e-12);
    CHECK(std::abs(r2.recall - o2.r) <= 1e-12);
    CHECK(std::abs(r2.f1 - o2.f) <= 1e-9);
    const Prf rl = RougeL(h, r);
    const auto ol = oracles::RougeL(h, r);
    CHECK(std::abs(rl.f1 - ol.f) <= 1e-9);
    CHECK(std::abs(SentenceBleu4(h, r) - oracles::SentenceBleu4(h, r)) <= 1e-9);
    CHECK(std::abs(MeteorLite(h, r) - oracles::Meteor(h, r, Stem)) <= 1e-9);
    CHECK(std::abs(EmbedF1(h, r, embedder) - oracles::EmbedF1(h, r, embed)) <= 1e-9);
    for (double v : {r2.f1, rl.f1, SentenceBleu4(h, r), MeteorLite(h, r), EmbedF1(h, r, embedder)}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("stemmer") {
  CHECK(Stem("reported") == "report");
  CHECK(Stem("reports") == "report");
  CHECK(Stem("margins") == "margin");
  CHECK(Stem("strongly") == "strong");
  CHECK(Stem("companies") == "company");
  CHECK(Stem("class") == "class");
  CHECK(Stem("is") == "is");
  CHECK(Stem("Growing") == "grow");
}

TEST_CASE("meteor hand cases") {
  const Tokens five = Split("the firm reported strong growth");
  // One chunk of m matches: 1 - 0.5 (1/m)^3.
  CHECK(std::abs(MeteorLite(five, five) - (1.0 - 0.5 * std::pow(1.0 / 5.0, 3))) <= 1e-12);
  CHECK(MeteorLite(Split("a b"), Split("c d")) == 0.0);

  // firm, strong, growth match exactly; reported/reports only by stem.
  const Tokens hyp = Split("firm reported strong growth today");
  const Tokens ref = Split("the firm reports growth strong");
  const auto al = MeteorAlign(hyp, ref);
  CHECK(al.matches == std::vector<std::pair<int, int>>{{0, 1}, {1, 2}, {2, 4}, {3, 3}});
  CHECK(al.chunks == 3);
  // P = R = 0.8, F = 0.8, penalty 0.5 * (3/4)^3.
  CHECK(std::abs(MeteorLite(hyp, ref) - 0.8 * (1.0 - 0.5 * 0.421875)) <= 1e-9);
}

TEST_CASE("embed f1") {
  HashedNgramEmbedder e;
  const auto v = e.Embed("ab");
  double norm = 0.0;
  int nonzero = 0;
  for (double x : v) {
    norm += x * x;
    nonzero += x != 0.0;
  }
  CHECK(norm == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(nonzero <= 2);  // "<ab" and "ab>"
  CHECK(e.Embed("Margin") == e.Embed("margin"));
  CHECK(EmbedF1(Split("cash flow grew"), Split("cash flow grew"), e) ==
        doctest::Approx(1.0).epsilon(1e-12));

  // Orthogonal embeddings for disjoint tokens give zero.
  struct OneHot : TokenEmbedder {
    std::vector<double> Embed(std::string_view t) const override {
      std::vector<double> out(4, 0.0);
      out[static_cast<size_t>(t[0] - 'a')] = 1.0;
      return out;
    }
  } onehot;
  CHECK(EmbedF1(Split("a b"), Split("c d"), onehot) == 0.0);
  CHECK(EmbedF1(Split("a b"), Split("a d"), onehot) == doctest::Approx(0.5));
}

TEST_CASE("entropy and sem-ent bounds") {
  CHECK(Entropy(std::vector<double>{0.5, 0.5, 0.0, 0.0}) == doctest::Approx(std::log(2.0)));
  CHECK(Entropy(std::vector<double>{1.0, 0.0}) == 0.0);

  for (int k : {2, 3, 5, 8}) {
    const TopicModel m = OneHotModel(k);
    std::vector<std::string> qs;
    for (int i = 0; i < k; ++i) qs.push_back("t" + std::to_string(i));
    // By symmetry the aggregate is uniform.
    CHECK(std::abs(SemEnt(m, qs) - std::log(static_cast<double>(k))) <= 1e-9);
  }

  TopicModel one = OneHotModel(1);
  CHECK(SemEnt(one, std::vector<std::string>{"t0", "t0 t0", "other"}) == 0.0);

  const TopicModel m = OneHotModel(4);
  std::vector<std::string> qs = {"t0", "t1 t1", "t2. T3 here.", "t0 t3", "nothing"};
  const double base = SemEnt(m, qs);
  CHECK(base >= 0.0);
  CHECK(base <= std::log(4.0));
  std::mt19937 rng(3);
  for (int i = 0; i < 20; ++i) {
    std::shuffle(qs.begin(), qs.end(), rng);
    CHECK(std::abs(SemEnt(m, qs) - base) <= 1e-12);
  }
  qs.push_back(qs.front());
  CHECK(SemEnt(m, qs) <= std::log(4.0));
}

TEST_CASE("topic distributions") {
  const TopicModel m = OneHotModel(3);
  // Single sentence: the mean of two identical distributions.
  const auto single = TopicDistribution(m, "t1 here");
  const auto text = TextTopicDistribution(m, "t1 here");
  for (int j = 0; j < 3; ++j) CHECK(single[j] == doctest::Approx(text[j]).epsilon(1e-15));

  // Two sentences: (d(s1) + d(s2) + d(whole)) / 3.
  const std::string q = "Is t0 up? What about t2?";
  const auto d1 = TextTopicDistribution(m, "Is t0 up?");
  const auto d2 = TextTopicDistribution(m, "What about t2?");
  const auto dw = TextTopicDistribution(m, q);
  const auto got = TopicDistribution(m, q);
  for (int j = 0; j < 3; ++j) CHECK(std::abs(got[j] - (d1[j] + d2[j] + dw[j]) / 3.0) <= 1e-12);

  // softmax(-distance): t0 sits on centroid 0 and is sqrt(2) from the others.
  const auto at0 = TextTopicDistribution(m, "t0");
  const double e = std::exp(-std::sqrt(2.0));
  CHECK(at0[0] == doctest::Approx(1.0 / (1.0 + 2.0 * e)).epsilon(1e-12));

  // Far-away centroids push the distribution toward one-hot.
  TopicModel far = OneHotModel(2);
  far.centroids[1] = {0.0, 60.0};
  CHECK(TextTopicDistribution(far, "t0")[0] > 1.0 - 1e-12);

  std::mt19937 rng(5);
  for (int i = 0; i < 100; ++i) {
    std::string s;
    for (const auto& t : RandomTokens(rng, 0, 12)) s += t + (rng() % 4 == 0 ? ". " : " ");
    s += "t" + std::to_string(rng() % 3);
    const auto d = TopicDistribution(m, s);
    double sum = 0.0;
    for (double p : d) {
      CHECK(p >= 0.0);
      sum += p;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("topic model fitting") {
  // Two groups with disjoint vocabularies.
  const std::vector<std::string> qs = {
      "Margin pricing pressure outlook?", "Pricing margin pressure trend?",
      "Margin pressure pricing risk?",    "Dividend buyback capital plan?",
      "Buyback dividend capital policy?", "Capital dividend buyback timing?"};
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const TopicModel fit = FitTopicModel(qs, 2, seed);
    const auto topics = AssignTopics(fit, qs);
    CHECK(topics[0] == topics[1]);
    CHECK(topics[1] == topics[2]);
    CHECK(topics[3] == topics[4]);
    CHECK(topics[4] == topics[5]);
    CHECK(topics[0] != topics[3]);
    CHECK(fit.iterations <= 100);
  }
  const TopicModel m = FitTopicModel(qs, 2, 7);

  const TopicModel again = FitTopicModel(qs, 2, 7);
  CHECK(again.centroids == m.centroids);

  try {
    FitTopicModel(qs, 7, 1);
    FAIL("expected TooFewQuestions");
  } catch (const Error& err) {
    CHECK(err.kind() == ErrorKind::kTooFewQuestions);
  }
  const std::vector<std::string> dup = {"same words", "same words", "same words"};
  CHECK_THROWS_AS(FitTopicModel(dup, 2, 1), Error);
  CHECK_THROWS_AS(FitTopicModel(qs, 1, 1), Error);
}

TEST_CASE("evaluate run") {
  const std::vector<QuestionRecord> refs = {
      Q("t1", "q0", "How is margin pressure affecting pricing this year?"),
      Q("t1", "q1", "Will the dividend grow with buybacks?"),
      Q("t2", "q0", "What drove the freight cost decline?"),
      Q("t2", "q1", "Can you discuss inventory levels in retail?")};

  SUBCASE("identical runs score one") {
    const EvalReport r = EvaluateRun(refs, refs);
    CHECK(r.bleu4 == doctest::Approx(1.0));
    CHECK(r.rouge2 == doctest::Approx(1.0));
    CHECK(r.rougeL == doctest::Approx(1.0));
    CHECK(r.embed_f1 == doctest::Approx(1.0));
    CHECK(r.n_questions == 4);
  }

  SUBCASE("four-question fixture equals the per-metric oracles") {
    std::vector<QuestionRecord> gen = {
        Q("t2", "q1", "Could you discuss retail inventory levels?"),
        Q("t1", "q0", "How is pricing affecting margin this quarter?"),
        Q("t2", "q0", "What drove freight costs?"),
        Q("t1", "q1", "Will dividends grow?")};
    const EvalReport r = EvaluateRun(gen, refs);
    HashedNgramEmbedder embedder;
    auto embed = [&](const std::string& t) { return embedder.Embed(t); };
    std::vector<Tokens> hs, rs;
    double r2 = 0, rl = 0, met = 0, emb = 0;
    for (const auto& ref : refs) {
      const auto g = std::find_if(gen.begin(), gen.end(), [&](const QuestionRecord& x) {
        return x.transcript_id == ref.transcript_id && x.question_id == ref.question_id;
      });
      const Tokens h = MetricTokens(g->text), t = MetricTokens(ref.text);
      hs.push_back(h);
      rs.push_back(t);
      r2 += oracles::RougeN(h, t, 2).f;
      rl += oracles::RougeL(h, t).f;
      met += oracles::Meteor(h, t, Stem);
      emb += oracles::EmbedF1(h, t, embed);
    }
    CHECK(std::abs(r.bleu4 - oracles::CorpusBleu4(hs, rs)) <= 1e-9);
    CHECK(std::abs(r.rouge2 - r2 / 4) <= 1e-9);
    CHECK(std::abs(r.rougeL - rl / 4) <= 1e-9);
    CHECK(std::abs(r.meteor - met / 4) <= 1e-9);
    CHECK(std::abs(r.embed_f1 - emb / 4) <= 1e-9);
    REQUIRE(r.rows.size() == 4);
    CHECK(r.rows[0].transcript_id == "t1");
    CHECK(r.rows[0].question_id == "q0");
    CHECK(r.rows[3].transcript_id == "t2");
    CHECK(r.rows[3].question_id == "q1");
    REQUIRE(r.presentations.size() == 2);
    CHECK(r.sem_ent == doctest::Approx((r.presentations[0].sem_ent + r.presentations[1].sem_ent) / 2));

    const EvalReport back = ReportFromJson(nlohmann::json::parse(ReportToJson(r).dump()));
    CHECK(back.bleu4 == r.bleu4);
    CHECK(back.sem_ent == r.sem_ent);
    CHECK(back.rows.size() == 4);
    CHECK(back.rows[2].meteor == r.rows[2].meteor);
    CHECK(back.presentations.size() == 2);

    const std::string table = RenderReportTable(r, "pro");
    for (const char* col : {"run", "BLEU-4", "ROUGE-2", "ROUGE-L", "METEOR", "embed_f1", "Sem-Ent"})
      CHECK(table.find(col) != std::string::npos);
    CHECK(table.find("pro") != std::string::npos);
  }

  SUBCASE("alignment errors") {
    std::vector<QuestionRecord> gen = refs;
    gen.pop_back();
    try {
      EvaluateRun(gen, refs);
      FAIL("expected AlignmentError");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kAlignmentError);
      CHECK(std::string(e.what()).find("t2/q1") != std::string::npos);
    }
    gen = refs;
    gen.push_back(refs.front());
    CHECK_THROWS_AS(EvaluateRun(gen, refs), Error);
  }
}

}  // namespace
}  // namespace callprep
