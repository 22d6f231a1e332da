// Copyright 2026 The callprep Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "callprep/corpus.h"
#include "callprep/errors.h"
#include "doctest.h"
#include "test_util.h"

namespace callprep {
namespace {

std::string Words(int n, const std::string& word = "word") {
  std::string s;
  for (int i = 0; i < n; ++i) s += (i ? " " : "") + word + std::to_string(i);
  return s;
}

Transcript MakeTranscript(std::string id, std::vector<std::string> presentation,
                          std::vector<QaTurn> turns) {
  Transcript t;
  t.id = std::move(id);
  t.company = "Acme";
  t.date = "2023-04-01";
  t.presentation = std::move(presentation);
  t.qa_turns = std::move(turns);
  return t;
}

const char* kSmallRaw = R"(company: Acme Corp
date: 2023-04-27

== PRESENTATION ==

Good morning and welcome to the call.
Revenue grew this quarter.

Our margin outlook is unchanged.

== QA ==

-- Jane Roe (Analyst) --
How is margin trending this quarter?

-- John Doe (Manager) --
Margins are stable.
)";

TEST_CASE("parse keeps presentation paragraphs and turns in order") {
  const Transcript t = ParseTranscript(kSmallRaw, "acme-q1");
  CHECK(t.id == "acme-q1");
  CHECK(t.company == "Acme Corp");
  CHECK(t.date == "2023-04-27");
  REQUIRE(t.presentation.size() == 2);
  CHECK(t.presentation[0] == "Good morning and welcome to the call. Revenue grew this quarter.");
  CHECK(t.presentation[1] == "Our margin outlook is unchanged.");
  REQUIRE(t.qa_turns.size() == 2);
  CHECK(t.qa_turns[0].speaker_role == SpeakerRole::kAnalyst);
  CHECK(t.qa_turns[0].text == "How is margin trending this quarter?");
  CHECK(t.qa_turns[1].speaker_role == SpeakerRole::kManager);
}

TEST_CASE("missing Q&A region gives no turns") {
  const Transcript t = ParseTranscript("== PRESENTATION ==\nOnly remarks.\n", "x");
  CHECK(t.presentation.size() == 1);
  CHECK(t.qa_turns.empty());
}

TEST_CASE("ten-turn fixture with operator lines matches hand labels") {
  const char* raw = R"(== PRESENTATION ==
Remarks.

== QA ==
-- Operator (Operator) --
First question please.
-- A. Analyst (Analyst) --
Question one?
-- CFO (Manager) --
Answer one.
-- Operator (Operator) --
Next.
-- B. Analyst (analyst) --
Question two?

Follow-up paragraph?
-- CEO (Manager) --
Answer two.
-- CFO (Manager) --
Adding to that.
-- Operator (Operator) --
Next.
-- C. Analyst (Analyst) --
Question three?
-- Host (Moderator) --
Unknown role maps to operator.
)";
  const Transcript t = ParseTranscript(raw, "ten");
  const std::vector<SpeakerRole> expected = {
      SpeakerRole::kOperator, SpeakerRole::kAnalyst, SpeakerRole::kManager,
      SpeakerRole::kOperator, SpeakerRole::kAnalyst, SpeakerRole::kManager,
      SpeakerRole::kManager,  SpeakerRole::kOperator, SpeakerRole::kAnalyst,
      SpeakerRole::kOperator};
  REQUIRE(t.qa_turns.size() == expected.size());
  for (size_t i = 0; i < expected.size(); ++i) {
    CHECK(t.qa_turns[i].speaker_role == expected[i]);
  }
  CHECK(t.qa_turns[4].text == "Question two?\nFollow-up paragraph?");
  const auto questions = ExtractQuestions(t);
  REQUIRE(questions.size() == 3);
  CHECK(questions[0].text == "Question one?");
  CHECK(questions[1].question_id == "q1");
  CHECK(questions[2].text == "Question three?");
}

TEST_CASE("parse errors") {
  CHECK_THROWS_AS(ParseTranscript("company: X\n== QA ==\n-- A (Analyst) --\nQ?\n", "x"), Error);
  try {
    ParseTranscript("== QA ==\n-- A (Analyst) --\nQ?\n", "x");
    FAIL("expected MissingPresentation");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kMissingPresentation);
  }
  try {
    ParseTranscript("== PRESENTATION ==\nHi.\n== QA ==\nstray text\n", "x");
    FAIL("expected MalformedTurn");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kMalformedTurn);
  }
}

TEST_CASE("extract questions") {
  auto none = MakeTranscript("a", {"p"}, {{SpeakerRole::kManager, "Hello."}});
  CHECK(ExtractQuestions(none).empty());

  auto three = MakeTranscript("b", {"p"},
                              {{SpeakerRole::kAnalyst, "First?"},
                               {SpeakerRole::kManager, "A."},
                               {SpeakerRole::kAnalyst, "Second?"},
                               {SpeakerRole::kOperator, "Next."},
                               {SpeakerRole::kAnalyst, "Third?"}});
  const auto q = ExtractQuestions(three);
  REQUIRE(q.size() == 3);
  CHECK(q[0].text == "First?");
  CHECK(q[1].text == "Second?");
  CHECK(q[2].text == "Third?");
  CHECK_FALSE(q[0].control_code.has_value());

  auto margin = MakeTranscript("c", {"p"}, {{SpeakerRole::kAnalyst,
                                             "How is margin trending this quarter?"}});
  CHECK(ExtractQuestions(margin)[0].word_count == 6);
}

TEST_CASE("corpus stats on the hand fixture") {
  // 100-word presentation split over two paragraphs; questions of 10 and 20.
  auto t = MakeTranscript("fx", {Words(60), Words(40)},
                          {{SpeakerRole::kAnalyst, Words(10, "q")},
                           {SpeakerRole::kManager, Words(7, "a")},
                           {SpeakerRole::kAnalyst, Words(20, "r")}});
  const CorpusStats s = ComputeCorpusStats({t});
  CHECK(s.n_transcripts == 1);
  CHECK(s.n_questions == 2);
  CHECK(s.avg_presentation_len == 100.0);
  CHECK(s.avg_question_len == 15.0);
  CHECK(s.avg_questions_per_transcript == 2.0);
  CHECK(s.q95_question_len == 20);
  CHECK(s.max_presentation_len == 100);

  // Identical copies leave the averages unchanged.
  auto u = t;
  u.id = "fy";
  const CorpusStats d = ComputeCorpusStats({t, u});
  CHECK(d.avg_presentation_len == s.avg_presentation_len);
  CHECK(d.avg_question_len == s.avg_question_len);
  CHECK(d.avg_questions_per_transcript == s.avg_questions_per_transcript);

  CHECK_THROWS_AS(ComputeCorpusStats({}), Error);
}

TEST_CASE("corpus stats are permutation invariant") {
  std::mt19937 gen(3);
  std::vector<Transcript> corpus;
  for (int i = 0; i < 12; ++i) {
    std::vector<QaTurn> turns;
    for (int q = 0; q < static_cast<int>(gen() % 4); ++q) {
      turns.push_back({SpeakerRole::kAnalyst, Words(1 + static_cast<int>(gen() % 30))});
    }
    corpus.push_back(MakeTranscript("t" + std::to_string(i),
                                    {Words(1 + static_cast<int>(gen() % 200))}, turns));
  }
  const CorpusStats base = ComputeCorpusStats(corpus);
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(corpus.begin(), corpus.end(), gen);
    const CorpusStats s = ComputeCorpusStats(corpus);
    CHECK(s.n_questions == base.n_questions);
    CHECK(s.avg_presentation_len == base.avg_presentation_len);
    CHECK(s.avg_question_len == base.avg_question_len);
    CHECK(s.q95_question_len == base.q95_question_len);
    CHECK(s.max_presentation_len == base.max_presentation_len);
  }
}

TEST_CASE("q95 is the minimal value covering 95 percent") {
  std::mt19937 gen(11);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<int64_t> v(1 + gen() % 60);
    for (auto& x : v) x = 1 + static_cast<int64_t>(gen() % 50);
    const int64_t q = NearestRankPercentile(v, 0.95);
    auto covered = [&](int64_t w) {
      return 20 * std::count_if(v.begin(), v.end(), [w](int64_t x) { return x <= w; }) >=
             19 * static_cast<int64_t>(v.size());
    };
    // Brute force: smallest w in [0, 50] with the coverage property.
    int64_t oracle = 0;
    while (!covered(oracle)) ++oracle;
    CHECK(q == oracle);
  }
  CHECK(NearestRankPercentile(std::vector<int64_t>(20, 7), 0.95) == 7);
}

TEST_CASE("corpus JSONL round trip and schema errors") {
  testing::TempDir dir;
  std::vector<Transcript> corpus = {
      MakeTranscript("a", {"One.", "Two."}, {{SpeakerRole::kAnalyst, "Why?"}}),
      MakeTranscript("b", {"Three \"quoted\" text."}, {}),
      MakeTranscript("c", {"Unicode \xc3\xa9t\xc3\xa9."},
                     {{SpeakerRole::kOperator, "Next."}, {SpeakerRole::kManager, "A\nB"}})};
  WriteCorpus(corpus, dir / "c.jsonl");
  CHECK(ReadCorpus(dir / "c.jsonl") == corpus);

  testing::WriteFile(dir / "bad.jsonl",
                     "{\"id\":\"a\",\"presentation\":[\"x\"]}\n{\"id\":\"b\",\"qa\":[]}\n");
  try {
    ReadCorpus(dir / "bad.jsonl");
    FAIL("expected SchemaViolation");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kSchemaViolation);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }

  testing::WriteFile(dir / "dup.jsonl",
                     "{\"id\":\"a\",\"presentation\":[\"x\"]}\n{\"id\":\"a\",\"presentation\":[\"y\"]}\n");
  CHECK_THROWS_AS(ReadCorpus(dir / "dup.jsonl"), Error);

  try {
    ReadCorpus(dir / "missing.jsonl");
    FAIL("expected IoFailure");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kIoFailure);
  }
}

TEST_CASE("question JSONL round trip keeps control codes") {
  testing::TempDir dir;
  std::vector<QuestionRecord> qs(2);
  qs[0] = {"t", "q0", "How are margins?", 3, std::nullopt};
  qs[1] = {"t", "q1", "And pricing?", 2, std::string("pricing")};
  WriteQuestions(qs, dir / "q.jsonl");
  CHECK(ReadQuestions(dir / "q.jsonl") == qs);
}

TEST_CASE("rendered raw transcripts parse back") {
  auto t = MakeTranscript("r", {"First paragraph.", "Second one."},
                          {{SpeakerRole::kOperator, "Welcome."},
                           {SpeakerRole::kAnalyst, "Question?\nMore detail?"},
                           {SpeakerRole::kManager, "Answer."}});
  CHECK(ParseTranscript(RenderRawTranscript(t), "r") == t);
}

}  // namespace
}  // namespace callprep
