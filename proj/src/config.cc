// Copyright 2026 The callprep Authors
// SPDX-License-Identifier: Apache-2.0

#include "callprep/config.h"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

#include <fmt/format.h>

#include "callprep/errors.h"

namespace callprep {
namespace {

using Json = nlohmann::json;

[[noreturn]] void Invalid(const std::string& path, const std::string& why) {
  throw Error(ErrorKind::kConfigInvalid, path + ": " + why);
}

// Walks one JSON object, handing each known key to its reader and rejecting
// the rest.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) Invalid(path_.empty() ? "<root>" : path_, "expected an object");
  }

  template <typename T>
  ObjectReader& Number(const std::string& key, T& out) {
    seen_.push_back(key);
    if (auto it = j_.find(key); it != j_.end()) {
      if (!it->is_number()) Invalid(Path(key), "expected a number");
      if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) Invalid(Path(key), "expected an integer");
        if (std::is_unsigned_v<T> && it->is_number_integer() && !it->is_number_unsigned() &&
            it->template get<int64_t>() < 0) {
          Invalid(Path(key), "expected a non-negative integer");
        }
      }
      out = it->template get<T>();
    }
    return *this;
  }

  ObjectReader& Bool(const std::string& key, bool& out) {
    seen_.push_back(key);
    if (auto it = j_.find(key); it != j_.end()) {
      if (!it->is_boolean()) Invalid(Path(key), "expected true or false");
      out = it->get<bool>();
    }
    return *this;
  }

  ObjectReader& String(const std::string& key, std::function<void(const std::string&)> set) {
    seen_.push_back(key);
    if (auto it = j_.find(key); it != j_.end()) {
      if (!it->is_string()) Invalid(Path(key), "expected a string");
      set(it->get<std::string>());
    }
    return *this;
  }

  ObjectReader& Path(const std::string& key, std::filesystem::path& out) {
    return String(key, [&out](const std::string& s) { out = s; });
  }

  ObjectReader& Object(const std::string& key, std::function<void(ObjectReader&)> read) {
    seen_.push_back(key);
    if (auto it = j_.find(key); it != j_.end()) {
      ObjectReader child(*it, Path(key));
      read(child);
      child.Finish();
    }
    return *this;
  }

  void Finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) {
        Invalid(Path(key), "unknown field");
      }
    }
  }

  std::string Path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  const Json& j_;
  std::string path_;
  std::vector<std::string> seen_;
};

std::pair<int, int> LineColumn(std::string_view text, size_t byte) {
  int line = 1;
  int column = 1;
  for (size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return {line, column};
}

std::string_view DecodeStrategyName(DecodeStrategy s) {
  return s == DecodeStrategy::kGreedy ? "greedy" : "sample";
}

}  // namespace

void RunConfig::Validate() const {
  train.Validate();
  if (train.seed != seed) Invalid("seed", "train seed out of sync");
  try {
    ValidateDecodeParams(decode);
  } catch (const Error& e) {
    Invalid("decode", e.what());
  }
  if (num_questions < 1) Invalid("num_questions", "must be >= 1");
  if (topics < 2) Invalid("metrics.topics", "must be >= 2");
  const std::vector<std::pair<std::string, std::filesystem::path>> named = {
      {"paths.raw", paths.raw},           {"paths.corpus", paths.corpus},
      {"paths.questions", paths.questions}, {"paths.segments", paths.segments},
      {"paths.checkpoints", paths.checkpoints}, {"paths.reports", paths.reports}};
  for (size_t i = 0; i < named.size(); ++i) {
    for (size_t j = i + 1; j < named.size(); ++j) {
      if (!named[i].second.empty() &&
          named[i].second.lexically_normal() == named[j].second.lexically_normal()) {
        Invalid(named[j].first, "same path as " + named[i].first);
      }
    }
  }
}

RunConfig ParseRunConfig(std::string_view text) {
  RunConfig config;
  if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) return config;
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    const auto [line, column] = LineColumn(text, e.byte > 0 ? e.byte - 1 : 0);
    throw Error(ErrorKind::kParseError,
                fmt::format("line {}, column {}: {}", line, column, e.what()));
  }

  auto& t = config.train;
  auto& m = t.model;
  ObjectReader root(j, "");
  root.Number("seed", config.seed)
      .String("retriever",
              [&](const std::string& s) {
                auto kind = ParseRetrieverKind(s);
                if (!kind) Invalid("retriever", "unknown retriever '" + s + "' (random|bm25|pro)");
                t.retriever = *kind;
              })
      .Number("top_k", t.top_k)
      .Number("num_questions", config.num_questions)
      .Object("paths",
              [&](ObjectReader& r) {
                r.Path("raw", config.paths.raw)
                    .Path("corpus", config.paths.corpus)
                    .Path("questions", config.paths.questions)
                    .Path("segments", config.paths.segments)
                    .Path("checkpoints", config.paths.checkpoints)
                    .Path("reports", config.paths.reports);
              })
      .Object("train",
              [&](ObjectReader& r) {
                r.Number("epochs", t.epochs)
                    .Number("learning_rate", t.learning_rate)
                    .Number("retriever_learning_rate", t.retriever_learning_rate)
                    .Number("warmup_ratio", t.warmup_ratio)
                    .Number("max_grad_norm", t.max_grad_norm)
                    .Number("accumulation_steps", t.accumulation_steps)
                    .Number("micro_batch", t.micro_batch)
                    .Number("weight_decay", t.adamw.weight_decay)
                    .Number("beta1", t.adamw.beta1)
                    .Number("beta2", t.adamw.beta2)
                    .Number("eps", t.adamw.eps)
                    .Bool("train_retriever", t.train_retriever)
                    .Number("selection_temperature", t.selection_temperature)
                    .Number("baseline_decay", t.baseline_decay)
                    .Number("selection_samples", t.selection_samples)
                    .Number("input_budget", t.input_budget)
                    .Number("max_target_tokens", t.max_target_tokens)
                    .Number("init_std", t.init_std)
                    .Number("resume_epoch", t.resume_epoch)
                    .Object("model", [&](ObjectReader& mr) {
                      mr.Number("d_model", m.d_model)
                          .Number("layers", m.layers)
                          .Number("heads", m.heads)
                          .Number("context", m.context)
                          .Number("ffn_mult", m.ffn_mult);
                    });
              })
      .Object("decode",
              [&](ObjectReader& r) {
                r.String("strategy",
                         [&](const std::string& s) {
                           if (s == "greedy") {
                             config.decode.strategy = DecodeStrategy::kGreedy;
                           } else if (s == "sample") {
                             config.decode.strategy = DecodeStrategy::kSample;
                           } else {
                             Invalid("decode.strategy", "unknown strategy '" + s + "'");
                           }
                         })
                    .Number("temperature", config.decode.temperature)
                    .Number("top_p", config.decode.top_p)
                    .Number("max_new_tokens", config.decode.max_new_tokens);
              })
      .Object("bm25",
              [&](ObjectReader& r) { r.Number("k1", t.bm25_k1).Number("b", t.bm25_b); })
      .Object("metrics", [&](ObjectReader& r) { r.Number("topics", config.topics); });
  root.Finish();
  t.seed = config.seed;
  t.checkpoint_dir = config.paths.checkpoints;
  config.decode.seed = config.seed;
  return config;
}

RunConfig LoadConfig(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIoFailure, "cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ParseRunConfig(ss.str());
}

nlohmann::ordered_json RunConfigToJson(const RunConfig& config) {
  const auto& t = config.train;
  const auto& m = t.model;
  nlohmann::ordered_json j;
  j["seed"] = config.seed;
  j["retriever"] = RetrieverKindName(t.retriever);
  j["top_k"] = t.top_k;
  j["num_questions"] = config.num_questions;
  j["paths"] = {{"raw", config.paths.raw.string()},
                {"corpus", config.paths.corpus.string()},
                {"questions", config.paths.questions.string()},
                {"segments", config.paths.segments.string()},
                {"checkpoints", config.paths.checkpoints.string()},
                {"reports", config.paths.reports.string()}};
  j["train"] = {{"epochs", t.epochs},
                {"learning_rate", t.learning_rate},
                {"retriever_learning_rate", t.retriever_learning_rate},
                {"warmup_ratio", t.warmup_ratio},
                {"max_grad_norm", t.max_grad_norm},
                {"accumulation_steps", t.accumulation_steps},
                {"micro_batch", t.micro_batch},
                {"weight_decay", t.adamw.weight_decay},
                {"beta1", t.adamw.beta1},
                {"beta2", t.adamw.beta2},
                {"eps", t.adamw.eps},
                {"train_retriever", t.train_retriever},
                {"selection_temperature", t.selection_temperature},
                {"baseline_decay", t.baseline_decay},
                {"selection_samples", t.selection_samples},
                {"input_budget", t.input_budget},
                {"max_target_tokens", t.max_target_tokens},
                {"init_std", t.init_std},
                {"resume_epoch", t.resume_epoch},
                {"model",
                 {{"d_model", m.d_model},
                  {"layers", m.layers},
                  {"heads", m.heads},
                  {"context", m.context},
                  {"ffn_mult", m.ffn_mult}}}};
  j["decode"] = {{"strategy", DecodeStrategyName(config.decode.strategy)},
                 {"temperature", config.decode.temperature},
                 {"top_p", config.decode.top_p},
                 {"max_new_tokens", config.decode.max_new_tokens}};
  j["bm25"] = {{"k1", t.bm25_k1}, {"b", t.bm25_b}};
  j["metrics"] = {{"topics", config.topics}};
  return j;
}

}  // namespace callprep
