// Copyright 2026 The callprep Authors
// SPDX-License-Identifier: Apache-2.0

#include "callprep/textseg.h"

#include <cctype>

#include "json.hpp"

namespace callprep {
namespace {

bool IsSpace(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool IsWordByte(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u >= 0x80 || std::isalnum(u) != 0;
}

bool IsSentenceEnd(char c) { return c == '.' || c == '!' || c == '?'; }

void AppendPacked(std::vector<Token>& current, std::span<const Token> tokens) {
  current.insert(current.end(), tokens.begin(), tokens.end());
}

}  // namespace

std::vector<Token> Tokenize(std::string_view text) {
  std::vector<Token> tokens;
  size_t i = 0;
  while (i < text.size()) {
    if (IsSpace(text[i])) {
      ++i;
    } else if (IsWordByte(text[i])) {
      size_t j = i;
      while (j < text.size() && IsWordByte(text[j])) ++j;
      tokens.push_back({std::string(text.substr(i, j - i)), i, j});
      i = j;
    } else {
      tokens.push_back({std::string(1, text[i]), i, i + 1});
      ++i;
    }
  }
  return tokens;
}

std::vector<std::string> TokenTexts(std::string_view text) {
  std::vector<std::string> out;
  for (auto& t : Tokenize(text)) out.push_back(std::move(t.text));
  return out;
}

bool IsPunctuationToken(std::string_view token) {
  return token.size() == 1 && !IsWordByte(token[0]) && !IsSpace(token[0]);
}

std::string Detokenize(std::span<const std::string> tokens) {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0 && !IsPunctuationToken(tokens[i])) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

std::string Detokenize(std::span<const Token> tokens) {
  std::vector<std::string> texts;
  texts.reserve(tokens.size());
  for (const auto& t : tokens) texts.push_back(t.text);
  return Detokenize(std::span<const std::string>(texts));
}

int CountWords(std::string_view text) {
  int count = 0;
  bool in_word = false;
  for (char c : text) {
    if (IsSpace(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++count;
    }
  }
  return count;
}

std::string ToLower(std::string_view text) {
  std::string out(text);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::pair<size_t, size_t>> SentenceSpans(std::string_view text) {
  std::vector<std::pair<size_t, size_t>> spans;
  auto emit = [&](size_t begin, size_t end) {
    while (begin < end && IsSpace(text[begin])) ++begin;
    while (end > begin && IsSpace(text[end - 1])) --end;
    if (begin < end) spans.emplace_back(begin, end);
  };
  size_t start = 0;
  for (size_t i = 0; i < text.size(); ++i) {
    if (!IsSentenceEnd(text[i])) continue;
    size_t next = i + 1;
    if (next < text.size() && !IsSpace(text[next])) continue;
    while (next < text.size() && IsSpace(text[next])) ++next;
    if (next == text.size() ||
        std::isupper(static_cast<unsigned char>(text[next])) != 0) {
      emit(start, i + 1);
      start = next;
      i = next == 0 ? 0 : next - 1;
    }
  }
  emit(start, text.size());
  return spans;
}

std::vector<std::string> SplitSentences(std::string_view text) {
  std::vector<std::string> out;
  for (auto [b, e] : SentenceSpans(text)) out.emplace_back(text.substr(b, e - b));
  return out;
}

std::vector<Segment> SegmentPresentation(const Transcript& transcript) {
  std::vector<Segment> segments;
  std::vector<Token> current;
  auto flush = [&] {
    if (current.empty()) return;
    Segment seg;
    seg.transcript_id = transcript.id;
    seg.index = static_cast<int>(segments.size());
    seg.text = Detokenize(current);
    seg.tokens = std::move(current);
    segments.push_back(std::move(seg));
    current.clear();
  };

  size_t offset = 0;
  for (const auto& paragraph : transcript.presentation) {
    for (auto [b, e] : SentenceSpans(paragraph)) {
      std::vector<Token> sentence =
          Tokenize(std::string_view(paragraph).substr(b, e - b));
      for (auto& t : sentence) {
        t.begin += offset + b;
        t.end += offset + b;
      }
      std::span<const Token> rest(sentence);
      if (current.size() + rest.size() <= kMaxSegmentTokens) {
        AppendPacked(current, rest);
        continue;
      }
      flush();
      // Pathologically long sentence: hard cuts every kMaxSegmentTokens.
      while (rest.size() > kMaxSegmentTokens) {
        AppendPacked(current, rest.first(kMaxSegmentTokens));
        flush();
        rest = rest.subspan(kMaxSegmentTokens);
      }
      AppendPacked(current, rest);
    }
    // Segments never straddle paragraphs.
    flush();
    offset += paragraph.size() + 1;
  }
  return segments;
}

std::string SegmentToJson(const Segment& segment) {
  nlohmann::ordered_json j;
  j["transcript_id"] = segment.transcript_id;
  j["index"] = segment.index;
  j["text"] = segment.text;
  j["n_tokens"] = segment.tokens.size();
  return j.dump();
}

}  // namespace callprep
