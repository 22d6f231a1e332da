// Copyright 2026 The callprep Authors
// SPDX-License-Identifier: Apache-2.0

// Earnings-call transcripts: raw-text parsing, analyst question extraction,
// dataset statistics and the JSONL corpus/question formats.

#ifndef CALLPREP_CORPUS_H_
#define CALLPREP_CORPUS_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace callprep {

enum class SpeakerRole { kAnalyst, kManager, kOperator };

std::string_view SpeakerRoleName(SpeakerRole role);
// Case-insensitive; anything unrecognised is an operator.
SpeakerRole ParseSpeakerRole(std::string_view tag);

struct QaTurn {
  SpeakerRole speaker_role = SpeakerRole::kOperator;
  std::string text;

  bool operator==(const QaTurn&) const = default;
};

struct Transcript {
  std::string id;
  std::string company;
  std::string date;                       // ISO-8601, may be empty
  std::vector<std::string> presentation;  // prepared-remarks paragraphs
  std::vector<QaTurn> qa_turns;

  bool operator==(const Transcript&) const = default;
};

struct QuestionRecord {
  std::string transcript_id;
  std::string question_id;
  std::string text;
  int word_count = 0;
  std::optional<std::string> control_code;  // opaque, never interpreted

  bool operator==(const QuestionRecord&) const = default;
};

struct CorpusStats {
  int64_t n_transcripts = 0;
  int64_t n_questions = 0;
  double avg_presentation_len = 0.0;
  double avg_question_len = 0.0;
  double avg_questions_per_transcript = 0.0;
  int64_t q95_question_len = 0;
  int64_t max_presentation_len = 0;
};

// Raw format:
//   optional `company: ...` / `date: ...` header lines
//   `== PRESENTATION ==`   paragraphs separated by blank lines
//   `== QA ==`             turns opened by `-- <name> (<Role>) --`
Transcript ParseTranscript(std::string_view raw, std::string id);

// Inverse of ParseTranscript for transcripts whose paragraphs are single
// trimmed lines.
std::string RenderRawTranscript(const Transcript& transcript);

// One record per analyst turn, ids "q0", "q1", ... in turn order.
std::vector<QuestionRecord> ExtractQuestions(const Transcript& transcript);

CorpusStats ComputeCorpusStats(const std::vector<Transcript>& corpus);

// Smallest w such that at least `fraction` of the values are <= w.
int64_t NearestRankPercentile(std::vector<int64_t> values, double fraction);

int64_t PresentationWordCount(const Transcript& transcript);

// Whole-presentation text, paragraphs joined by '\n'.
std::string PresentationText(const Transcript& transcript);

std::vector<Transcript> ReadCorpus(const std::filesystem::path& path);
void WriteCorpus(const std::vector<Transcript>& corpus,
                 const std::filesystem::path& path);

// Parses one JSONL line; `line_number` is only used for error messages.
Transcript TranscriptFromJson(std::string_view line, int64_t line_number);
std::string TranscriptToJson(const Transcript& transcript);

// Generated questions may legitimately be empty; references may not.
std::vector<QuestionRecord> ReadQuestions(const std::filesystem::path& path,
                                          bool allow_empty_text = false);
void WriteQuestions(const std::vector<QuestionRecord>& questions,
                    const std::filesystem::path& path);

}  // namespace callprep

#endif  // CALLPREP_CORPUS_H_
