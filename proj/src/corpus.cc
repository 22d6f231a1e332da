// Copyright 2026 The callprep Authors
// SPDX-License-Identifier: Apache-2.0

#include "callprep/corpus.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <regex>
#include <set>
#include <sstream>
#include <unordered_set>

#include "callprep/errors.h"
#include "callprep/textseg.h"
#include "json.hpp"

namespace callprep {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view Trim(std::string_view s) {
  const auto is_space = [](char c) {
    return std::isspace(static_cast<unsigned char>(c)) != 0;
  };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> SplitLines(std::string_view raw) {
  std::vector<std::string_view> lines;
  size_t start = 0;
  while (start <= raw.size()) {
    size_t nl = raw.find('\n', start);
    if (nl == std::string_view::npos) nl = raw.size();
    std::string_view line = raw.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = nl + 1;
  }
  return lines;
}

// Accumulates lines into blank-line separated paragraphs.
class ParagraphBuilder {
 public:
  void Add(std::string_view line) {
    line = Trim(line);
    if (line.empty()) {
      Break();
      return;
    }
    if (!current_.empty()) current_.push_back(' ');
    current_.append(line);
  }

  void Break() {
    if (!current_.empty()) paragraphs_.push_back(std::move(current_));
    current_.clear();
  }

  std::vector<std::string> Take() {
    Break();
    return std::move(paragraphs_);
  }

 private:
  std::string current_;
  std::vector<std::string> paragraphs_;
};

const std::regex& SpeakerLinePattern() {
  static const std::regex pattern(R"(^--\s+(.+?)\s+\(([^()]+)\)\s+--$)");
  return pattern;
}

[[noreturn]] void SchemaError(int64_t line, const std::string& what) {
  throw Error(ErrorKind::kSchemaViolation,
              "line " + std::to_string(line) + ": " + what);
}

const json& Require(const json& obj, const char* key, int64_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) SchemaError(line, std::string("missing key \"") + key + "\"");
  return *it;
}

std::string RequireString(const json& obj, const char* key, int64_t line) {
  const json& v = Require(obj, key, line);
  if (!v.is_string()) SchemaError(line, std::string("\"") + key + "\" must be a string");
  return v.get<std::string>();
}

std::string StringOr(const json& obj, const char* key, int64_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return {};
  if (!it->is_string()) SchemaError(line, std::string("\"") + key + "\" must be a string");
  return it->get<std::string>();
}

template <typename Fn>
void ForEachLine(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIoFailure, "cannot open " + path.string());
  std::string line;
  int64_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (Trim(line).empty()) continue;
    fn(line, number);
  }
  if (in.bad()) throw Error(ErrorKind::kIoFailure, "read failed: " + path.string());
}

void WriteLines(const std::filesystem::path& path,
                const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIoFailure, "cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
  out.flush();
  if (!out) throw Error(ErrorKind::kIoFailure, "write failed: " + path.string());
}

}  // namespace

std::string_view SpeakerRoleName(SpeakerRole role) {
  switch (role) {
    case SpeakerRole::kAnalyst: return "analyst";
    case SpeakerRole::kManager: return "manager";
    case SpeakerRole::kOperator: return "operator";
  }
  return "operator";
}

SpeakerRole ParseSpeakerRole(std::string_view tag) {
  const std::string lower = ToLower(Trim(tag));
  if (lower == "analyst") return SpeakerRole::kAnalyst;
  if (lower == "manager") return SpeakerRole::kManager;
  return SpeakerRole::kOperator;
}

Transcript ParseTranscript(std::string_view raw, std::string id) {
  enum class Region { kHeader, kPresentation, kQa };
  Transcript t;
  t.id = std::move(id);

  Region region = Region::kHeader;
  bool saw_presentation = false;
  ParagraphBuilder presentation;
  std::optional<QaTurn> turn;
  ParagraphBuilder turn_text;
  auto close_turn = [&] {
    if (!turn) return;
    const auto paragraphs = turn_text.Take();
    std::string text;
    for (const auto& p : paragraphs) {
      if (!text.empty()) text += "\n";
      text += p;
    }
    turn->text = std::move(text);
    if (!turn->text.empty()) t.qa_turns.push_back(std::move(*turn));
    turn.reset();
  };

  int line_number = 0;
  for (std::string_view line : SplitLines(raw)) {
    ++line_number;
    const std::string_view trimmed = Trim(line);
    if (trimmed == "== PRESENTATION ==") {
      region = Region::kPresentation;
      saw_presentation = true;
      continue;
    }
    if (trimmed == "== QA ==") {
      region = Region::kQa;
      continue;
    }
    switch (region) {
      case Region::kHeader: {
        const size_t colon = trimmed.find(':');
        if (colon == std::string_view::npos) break;
        const std::string key = ToLower(Trim(trimmed.substr(0, colon)));
        const std::string value(Trim(trimmed.substr(colon + 1)));
        if (key == "company") t.company = value;
        if (key == "date") t.date = value;
        break;
      }
      case Region::kPresentation:
        presentation.Add(line);
        break;
      case Region::kQa: {
        std::match_results<std::string_view::const_iterator> m;
        if (std::regex_match(trimmed.begin(), trimmed.end(), m,
                             SpeakerLinePattern())) {
          close_turn();
          turn = QaTurn{ParseSpeakerRole(m[2].str()), {}};
          break;
        }
        if (trimmed.empty()) {
          if (turn) turn_text.Break();
          break;
        }
        if (!turn) {
          throw Error(ErrorKind::kMalformedTurn,
                      t.id + " line " + std::to_string(line_number) +
                          ": Q&A text before any speaker marker");
        }
        turn_text.Add(line);
        break;
      }
    }
  }
  close_turn();
  t.presentation = presentation.Take();
  if (!saw_presentation || t.presentation.empty()) {
    throw Error(ErrorKind::kMissingPresentation, t.id + ": no prepared remarks");
  }
  return t;
}

std::string RenderRawTranscript(const Transcript& transcript) {
  std::string out;
  if (!transcript.company.empty()) out += "company: " + transcript.company + "\n";
  if (!transcript.date.empty()) out += "date: " + transcript.date + "\n";
  out += "\n== PRESENTATION ==\n";
  for (const auto& p : transcript.presentation) out += "\n" + p + "\n";
  if (transcript.qa_turns.empty()) return out;
  out += "\n== QA ==\n";
  int speaker = 0;
  for (const auto& turn : transcript.qa_turns) {
    std::string role(SpeakerRoleName(turn.speaker_role));
    role[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(role[0])));
    out += "\n-- Speaker " + std::to_string(++speaker) + " (" + role + ") --\n";
    size_t start = 0;
    while (start <= turn.text.size()) {
      const size_t nl = turn.text.find('\n', start);
      const size_t end = nl == std::string::npos ? turn.text.size() : nl;
      if (start > 0) out += "\n";
      out += turn.text.substr(start, end - start) + "\n";
      if (nl == std::string::npos) break;
      start = nl + 1;
    }
  }
  return out;
}

std::vector<QuestionRecord> ExtractQuestions(const Transcript& transcript) {
  std::vector<QuestionRecord> out;
  for (const auto& turn : transcript.qa_turns) {
    if (turn.speaker_role != SpeakerRole::kAnalyst) continue;
    QuestionRecord r;
    r.transcript_id = transcript.id;
    r.question_id = "q" + std::to_string(out.size());
    r.text = turn.text;
    r.word_count = CountWords(turn.text);
    out.push_back(std::move(r));
  }
  return out;
}

int64_t PresentationWordCount(const Transcript& transcript) {
  int64_t n = 0;
  for (const auto& p : transcript.presentation) n += CountWords(p);
  return n;
}

std::string PresentationText(const Transcript& transcript) {
  std::string out;
  for (size_t i = 0; i < transcript.presentation.size(); ++i) {
    if (i > 0) out.push_back('\n');
    out += transcript.presentation[i];
  }
  return out;
}

int64_t NearestRankPercentile(std::vector<int64_t> values, double fraction) {
  if (values.empty()) return 0;
  std::sort(values.begin(), values.end());
  // Integer arithmetic for the rank so 0.95 * 20 does not round up to 20.000001.
  const auto n = static_cast<int64_t>(values.size());
  const auto permille = static_cast<int64_t>(std::llround(fraction * 1000.0));
  int64_t rank = (permille * n + 999) / 1000;
  rank = std::clamp<int64_t>(rank, 1, n);
  return values[rank - 1];
}

CorpusStats ComputeCorpusStats(const std::vector<Transcript>& corpus) {
  if (corpus.empty()) throw Error(ErrorKind::kEmptyCorpus, "corpus has no transcripts");
  CorpusStats s;
  s.n_transcripts = static_cast<int64_t>(corpus.size());
  int64_t presentation_words = 0;
  int64_t question_words = 0;
  std::vector<int64_t> question_lens;
  for (const auto& t : corpus) {
    const int64_t len = PresentationWordCount(t);
    presentation_words += len;
    s.max_presentation_len = std::max(s.max_presentation_len, len);
    for (const auto& q : ExtractQuestions(t)) {
      question_words += q.word_count;
      question_lens.push_back(q.word_count);
    }
  }
  s.n_questions = static_cast<int64_t>(question_lens.size());
  s.avg_presentation_len =
      static_cast<double>(presentation_words) / static_cast<double>(s.n_transcripts);
  s.avg_question_len = s.n_questions == 0 ? 0.0
                                          : static_cast<double>(question_words) /
                                                static_cast<double>(s.n_questions);
  s.avg_questions_per_transcript =
      static_cast<double>(s.n_questions) / static_cast<double>(s.n_transcripts);
  s.q95_question_len = NearestRankPercentile(std::move(question_lens), 0.95);
  return s;
}

Transcript TranscriptFromJson(std::string_view line, int64_t line_number) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    SchemaError(line_number, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) SchemaError(line_number, "expected an object");
  Transcript t;
  t.id = RequireString(j, "id", line_number);
  if (t.id.empty()) SchemaError(line_number, "empty id");
  t.company = StringOr(j, "company", line_number);
  t.date = StringOr(j, "date", line_number);
  const json& pres = Require(j, "presentation", line_number);
  if (!pres.is_array() || pres.empty()) {
    SchemaError(line_number, "\"presentation\" must be a non-empty array");
  }
  for (const auto& p : pres) {
    if (!p.is_string() || Trim(p.get_ref<const std::string&>()).empty()) {
      SchemaError(line_number, "presentation paragraphs must be non-empty strings");
    }
    t.presentation.push_back(p.get<std::string>());
  }
  if (auto it = j.find("qa"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) SchemaError(line_number, "\"qa\" must be an array");
    for (const auto& turn : *it) {
      if (!turn.is_object()) SchemaError(line_number, "qa entries must be objects");
      const std::string role = RequireString(turn, "role", line_number);
      QaTurn q{ParseSpeakerRole(role), RequireString(turn, "text", line_number)};
      if (q.text.empty()) SchemaError(line_number, "empty qa text");
      t.qa_turns.push_back(std::move(q));
    }
  }
  return t;
}

std::string TranscriptToJson(const Transcript& t) {
  ordered_json j;
  j["id"] = t.id;
  j["company"] = t.company;
  j["date"] = t.date;
  j["presentation"] = t.presentation;
  j["qa"] = ordered_json::array();
  for (const auto& turn : t.qa_turns) {
    j["qa"].push_back({{"role", SpeakerRoleName(turn.speaker_role)}, {"text", turn.text}});
  }
  return j.dump();
}

std::vector<Transcript> ReadCorpus(const std::filesystem::path& path) {
  std::vector<Transcript> corpus;
  std::unordered_set<std::string> ids;
  ForEachLine(path, [&](const std::string& line, int64_t number) {
    Transcript t = TranscriptFromJson(line, number);
    if (!ids.insert(t.id).second) SchemaError(number, "duplicate transcript id " + t.id);
    corpus.push_back(std::move(t));
  });
  return corpus;
}

void WriteCorpus(const std::vector<Transcript>& corpus,
                 const std::filesystem::path& path) {
  std::vector<std::string> lines;
  lines.reserve(corpus.size());
  for (const auto& t : corpus) lines.push_back(TranscriptToJson(t));
  WriteLines(path, lines);
}

std::vector<QuestionRecord> ReadQuestions(const std::filesystem::path& path,
                                          bool allow_empty_text) {
  std::vector<QuestionRecord> out;
  std::set<std::pair<std::string, std::string>> seen;
  ForEachLine(path, [&](const std::string& line, int64_t number) {
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      SchemaError(number, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) SchemaError(number, "expected an object");
    QuestionRecord q;
    q.transcript_id = RequireString(j, "transcript_id", number);
    q.question_id = RequireString(j, "question_id", number);
    q.text = RequireString(j, "text", number);
    q.word_count = CountWords(q.text);
    if (q.word_count < 1 && !allow_empty_text) SchemaError(number, "empty question text");
    if (auto it = j.find("control_code"); it != j.end() && !it->is_null()) {
      if (!it->is_string()) SchemaError(number, "\"control_code\" must be a string");
      q.control_code = it->get<std::string>();
    }
    if (!seen.emplace(q.transcript_id, q.question_id).second) {
      SchemaError(number, "duplicate question id " + q.question_id);
    }
    out.push_back(std::move(q));
  });
  return out;
}

void WriteQuestions(const std::vector<QuestionRecord>& questions,
                    const std::filesystem::path& path) {
  std::vector<std::string> lines;
  for (const auto& q : questions) {
    ordered_json j;
    j["transcript_id"] = q.transcript_id;
    j["question_id"] = q.question_id;
    j["text"] = q.text;
    if (q.control_code) j["control_code"] = *q.control_code;
    lines.push_back(j.dump());
  }
  WriteLines(path, lines);
}

}  // namespace callprep
