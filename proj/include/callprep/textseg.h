// Copyright 2026 The callprep Authors
// SPDX-License-Identifier: Apache-2.0

// Tokenization, presentation segmentation and sentence splitting.
//
// A token is a maximal run of alphanumeric characters or a single
// punctuation character. Bytes >= 0x80 count as alphanumeric so UTF-8
// sequences stay inside one token.

#ifndef CALLPREP_TEXTSEG_H_
#define CALLPREP_TEXTSEG_H_

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "callprep/corpus.h"

namespace callprep {

inline constexpr int kMaxSegmentTokens = 128;

struct Token {
  std::string text;
  size_t begin = 0;  // byte offsets into the tokenized source
  size_t end = 0;

  bool operator==(const Token&) const = default;
};

struct Segment {
  std::string transcript_id;
  int index = 0;
  std::vector<Token> tokens;
  std::string text;
};

std::vector<Token> Tokenize(std::string_view text);
std::vector<std::string> TokenTexts(std::string_view text);

// Single spaces between tokens, none before punctuation tokens.
std::string Detokenize(std::span<const Token> tokens);
std::string Detokenize(std::span<const std::string> tokens);

bool IsPunctuationToken(std::string_view token);

// Whitespace-delimited word count; used for all corpus statistics.
int CountWords(std::string_view text);

std::string ToLower(std::string_view text);

// Splits after `.`, `!` or `?` when followed by whitespace and an uppercase
// letter, or by end of text. Returned sentences are trimmed.
std::vector<std::string> SplitSentences(std::string_view text);
// Same rule, as [begin, end) byte ranges (trimmed) into `text`.
std::vector<std::pair<size_t, size_t>> SentenceSpans(std::string_view text);

// Greedy sentence packing within each paragraph; spans refer to
// PresentationText(transcript).
std::vector<Segment> SegmentPresentation(const Transcript& transcript);

std::string SegmentToJson(const Segment& segment);

}  // namespace callprep

#endif  // CALLPREP_TEXTSEG_H_
