// Copyright 2026 The callprep Authors
// SPDX-License-Identifier: Apache-2.0

#include "callprep/cli.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "callprep/config.h"
#include "callprep/corpus.h"
#include "callprep/errors.h"
#include "callprep/generator.h"
#include "callprep/metrics.h"
#include "callprep/pro_scorer.h"
#include "callprep/retrieval.h"
#include "callprep/rng.h"
#include "callprep/textseg.h"
#include "callprep/training.h"

namespace callprep {
namespace {

namespace fs = std::filesystem;

struct Flags {
  std::string config;
  std::optional<uint64_t> seed;
  std::optional<std::string> retriever;
  std::optional<int> top_k;
  std::optional<int> num_questions;
  std::optional<int> epochs;
  std::string segments;
  std::string out;
  std::string raw;
  std::string corpus;
  std::string questions;
  std::string checkpoints;
  std::string transcript;
  std::string generated;
  std::vector<std::string> reports;
  int docs = 20;
  int doc_segments = 12;
  int doc_questions = 2;
};

[[noreturn]] void Invalid(const std::string& field, const std::string& why) {
  throw Error(ErrorKind::kConfigInvalid, field + ": " + why);
}

RunConfig ResolveConfig(const Flags& flags) {
  RunConfig config = flags.config.empty() ? RunConfig{} : LoadConfig(flags.config);
  if (flags.seed) config.seed = *flags.seed;
  if (flags.retriever) {
    auto kind = ParseRetrieverKind(*flags.retriever);
    if (!kind) Invalid("retriever", "unknown retriever '" + *flags.retriever + "' (random|bm25|pro)");
    config.train.retriever = *kind;
  }
  if (flags.top_k) config.train.top_k = *flags.top_k;
  if (flags.num_questions) config.num_questions = *flags.num_questions;
  if (flags.epochs) config.train.epochs = *flags.epochs;
  if (!flags.raw.empty()) config.paths.raw = flags.raw;
  if (!flags.corpus.empty()) config.paths.corpus = flags.corpus;
  if (!flags.questions.empty()) config.paths.questions = flags.questions;
  if (!flags.checkpoints.empty()) config.paths.checkpoints = flags.checkpoints;
  config.train.seed = config.seed;
  config.train.checkpoint_dir = config.paths.checkpoints;
  config.decode.seed = config.seed;
  config.Validate();
  return config;
}

const fs::path& Require(const fs::path& path, const std::string& field) {
  if (path.empty()) Invalid(field, "required for this command");
  return path;
}

fs::path QuestionsPath(const RunConfig& config) {
  if (!config.paths.questions.empty()) return config.paths.questions;
  return Require(config.paths.corpus, "paths.corpus").parent_path() / "questions.jsonl";
}

void WriteText(const fs::path& path, const std::string& text) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::kIoFailure, "cannot write " + path.string());
  f << text;
}

const Transcript& FindTranscript(const std::vector<Transcript>& corpus, const std::string& id) {
  for (const auto& t : corpus) {
    if (t.id == id) return t;
  }
  Invalid("transcript", "no transcript with id '" + id + "'");
}

std::vector<int> ParseIndexList(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || v < 0) Invalid("segments", "bad index '" + item + "'");
    out.push_back(v);
  }
  return out;
}

struct LoadedGenerator {
  GeneratorState state;
  Vocab vocab;
};

LoadedGenerator LoadTrainedGenerator(const RunConfig& config) {
  LoadedGenerator g;
  LoadGenerator(Require(config.paths.checkpoints, "paths.checkpoints") / "generator.ckpt",
                g.state, g.vocab);
  return g;
}

// ---------------------------------------------------------------------------
// Commands

void CmdIngest(const RunConfig& config, const Flags& flags, std::ostream& out) {
  const fs::path raw_dir = Require(config.paths.raw, "paths.raw");
  const fs::path corpus_path = flags.out.empty() ? Require(config.paths.corpus, "paths.corpus")
                                                 : fs::path(flags.out);
  if (!fs::is_directory(raw_dir)) {
    throw Error(ErrorKind::kIoFailure, raw_dir.string() + " is not a directory");
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(raw_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Transcript> corpus;
  std::vector<QuestionRecord> questions;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    Transcript t = ParseTranscript(ss.str(), f.stem().string());
    for (auto& q : ExtractQuestions(t)) questions.push_back(std::move(q));
    corpus.push_back(std::move(t));
  }
  if (corpus.empty()) throw Error(ErrorKind::kEmptyCorpus, "no .txt transcripts in " + raw_dir.string());
  if (!corpus_path.parent_path().empty()) fs::create_directories(corpus_path.parent_path());
  WriteCorpus(corpus, corpus_path);
  fs::path questions_path = config.paths.questions;
  if (questions_path.empty()) questions_path = corpus_path.parent_path() / "questions.jsonl";
  WriteQuestions(questions, questions_path);
  out << fmt::format("ingested {} transcripts, {} questions -> {}, {}\n", corpus.size(),
                     questions.size(), corpus_path.string(), questions_path.string());
}

void CmdSynth(const RunConfig& config, const Flags& flags, std::ostream& out) {
  const fs::path raw_dir = Require(config.paths.raw, "paths.raw");
  if (flags.docs < 1) Invalid("docs", "must be >= 1");
  const SyntheticCorpus synth = MakeSyntheticCorpus(flags.docs, flags.doc_segments, flags.doc_questions, config.seed);
  fs::create_directories(raw_dir);
  for (const auto& t : synth.transcripts) {
    WriteText(raw_dir / (t.id + ".txt"), RenderRawTranscript(t));
  }
  out << fmt::format("wrote {} synthetic transcripts -> {}\n", synth.transcripts.size(),
                     raw_dir.string());
}

void CmdStats(const RunConfig& config, const Flags& flags, std::ostream& out) {
  const auto corpus = ReadCorpus(Require(config.paths.corpus, "paths.corpus"));
  const CorpusStats s = ComputeCorpusStats(corpus);
  nlohmann::ordered_json j;
  j["n_transcripts"] = s.n_transcripts;
  j["n_questions"] = s.n_questions;
  j["avg_presentation_len"] = s.avg_presentation_len;
  j["avg_question_len"] = s.avg_question_len;
  j["avg_questions_per_transcript"] = s.avg_questions_per_transcript;
  j["q95_question_len"] = s.q95_question_len;
  j["max_presentation_len"] = s.max_presentation_len;
  for (const auto& [key, value] : j.items()) out << key << ": " << value.dump() << "\n";
  if (!flags.out.empty()) WriteText(flags.out, j.dump(2) + "\n");
}

void CmdSegment(const RunConfig& config, const Flags& flags, std::ostream& out) {
  const auto corpus = ReadCorpus(Require(config.paths.corpus, "paths.corpus"));
  const fs::path path = flags.out.empty() ? Require(config.paths.segments, "paths.segments")
                                          : fs::path(flags.out);
  std::string text;
  size_t n = 0;
  for (const auto& t : corpus) {
    for (const auto& s : SegmentPresentation(t)) {
      text += SegmentToJson(s) + "\n";
      ++n;
    }
  }
  WriteText(path, text);
  out << fmt::format("wrote {} segments from {} transcripts -> {}\n", n, corpus.size(),
                     path.string());
}

void CmdTrain(const RunConfig& config, const Flags&, std::ostream& out) {
  Require(config.paths.checkpoints, "paths.checkpoints");
  const auto corpus = ReadCorpus(Require(config.paths.corpus, "paths.corpus"));
  const auto questions = ReadQuestions(QuestionsPath(config));
  const TrainResult result = Train(corpus, questions, config.train);
  out << fmt::format("trained {} optimizer steps with the {} retriever", result.log.size(),
                     RetrieverKindName(config.train.retriever));
  if (!result.log.empty()) out << fmt::format("; final window loss {:.4f}", result.log.back().loss);
  out << fmt::format(" -> {}\n", config.paths.checkpoints.string());
}

void CmdGenerate(const RunConfig& config, const Flags& flags, std::ostream& out) {
  if (flags.transcript.empty()) Invalid("transcript", "required for generate");
  if (flags.segments.empty()) Invalid("segments", "required for generate");
  const auto corpus = ReadCorpus(Require(config.paths.corpus, "paths.corpus"));
  const Transcript& t = FindTranscript(corpus, flags.transcript);
  const auto segments = SegmentPresentation(t);
  auto indices = ParseIndexList(flags.segments);
  std::sort(indices.begin(), indices.end());
  indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
  if (indices.empty()) throw Error(ErrorKind::kEmptySelection, "no segments selected");
  for (int i : indices) {
    if (i >= static_cast<int>(segments.size())) {
      Invalid("segments", fmt::format("index {} out of range ({} segments)", i, segments.size()));
    }
  }
  RetrievalResult selection;
  selection.segment_indices = indices;
  selection.scores.assign(indices.size(), 0.0);

  const LoadedGenerator g = LoadTrainedGenerator(config);
  ReferenceGenerator generator(g.state, g.vocab);
  std::vector<QuestionRecord> records;
  for (int i = 0; i < config.num_questions; ++i) {
    DecodeParams params = config.decode;
    params.seed = config.seed + static_cast<uint64_t>(i);
    QuestionRecord r;
    r.transcript_id = t.id;
    r.question_id = "g" + std::to_string(i);
    r.text = generator.Generate(segments, selection, params);
    r.word_count = CountWords(r.text);
    records.push_back(std::move(r));
  }
  if (flags.out.empty()) {
    for (const auto& r : records) out << r.text << "\n";
  } else {
    if (fs::path(flags.out).has_parent_path()) fs::create_directories(fs::path(flags.out).parent_path());
    WriteQuestions(records, flags.out);
    out << fmt::format("wrote {} questions -> {}\n", records.size(), flags.out);
  }
}

// Generates one question per reference question, choosing segments with the
// configured retriever keyed on the reference text.
void CmdPredict(const RunConfig& config, const Flags& flags, std::ostream& out) {
  const auto corpus = ReadCorpus(Require(config.paths.corpus, "paths.corpus"));
  const auto references = ReadQuestions(QuestionsPath(config));
  const fs::path path =
      !flags.out.empty() ? fs::path(flags.out)
                         : Require(config.paths.reports, "paths.reports") /
                               fmt::format("generated-{}.jsonl",
                                           RetrieverKindName(config.train.retriever));
  const LoadedGenerator g = LoadTrainedGenerator(config);
  ReferenceGenerator generator(g.state, g.vocab);
  std::optional<EmbeddingMatchScorer> scorer;
  if (config.train.retriever == RetrieverKind::kPro) {
    scorer.emplace(g.state, g.vocab);
    LoadScorerParams(config.paths.checkpoints / "retriever.ckpt", *scorer);
  }
  std::map<std::string, std::vector<Segment>> segments_of;
  std::map<std::string, Bm25Index> bm25_of;
  for (const auto& t : corpus) {
    segments_of[t.id] = SegmentPresentation(t);
    if (config.train.retriever == RetrieverKind::kBm25) {
      bm25_of.emplace(t.id, Bm25Build(segments_of[t.id], config.train.bm25_k1, config.train.bm25_b));
    }
  }
  std::vector<QuestionRecord> records;
  for (size_t qi = 0; qi < references.size(); ++qi) {
    const auto& ref = references[qi];
    auto it = segments_of.find(ref.transcript_id);
    if (it == segments_of.end()) {
      throw Error(ErrorKind::kSchemaViolation, "question " + ref.transcript_id + "/" +
                                                   ref.question_id + " has no transcript");
    }
    const auto& segments = it->second;
    const int n = static_cast<int>(segments.size());
    const int k = std::min(config.train.top_k, n);
    RetrievalResult selection;
    switch (config.train.retriever) {
      case RetrieverKind::kRandom:
        selection = RandomRetrieve(n, k, Rng::Derive(config.seed, {7, qi}).NextU64());
        break;
      case RetrieverKind::kBm25:
        selection = TopKSelect(Bm25Score(bm25_of.at(ref.transcript_id), ref.text), k);
        break;
      case RetrieverKind::kPro: {
        std::vector<std::pair<int, double>> scored;
        for (int i = 0; i < n; ++i) {
          scored.emplace_back(i, ScoreSegment(*scorer, segments[i], ref.text).score);
        }
        selection = TopKSelect(scored, k);
        break;
      }
    }
    DecodeParams params = config.decode;
    params.seed = config.seed + qi;
    QuestionRecord r;
    r.transcript_id = ref.transcript_id;
    r.question_id = ref.question_id;
    r.text = generator.Generate(segments, selection, params);
    r.word_count = CountWords(r.text);
    records.push_back(std::move(r));
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  WriteQuestions(records, path);
  out << fmt::format("wrote {} predictions ({} retriever) -> {}\n", records.size(),
                     RetrieverKindName(config.train.retriever), path.string());
}

void CmdEvaluate(const RunConfig& config, const Flags& flags, std::ostream& out) {
  if (flags.generated.empty()) Invalid("generated", "required for evaluate");
  const auto generated = ReadQuestions(flags.generated, /*allow_empty_text=*/true);
  const auto references = ReadQuestions(QuestionsPath(config));
  EvalOptions options;
  options.topics = config.topics;
  options.seed = config.seed;
  if (!config.paths.corpus.empty() && fs::exists(config.paths.corpus)) {
    for (const auto& t : ReadCorpus(config.paths.corpus)) options.companies[t.id] = t.company;
  }
  const EvalReport report = EvaluateRun(generated, references, options);
  const fs::path path = !flags.out.empty()
                            ? fs::path(flags.out)
                            : Require(config.paths.reports, "paths.reports") / "report.json";
  WriteText(path, ReportToJson(report).dump(2) + "\n");
  out << RenderReportTable(report, fs::path(flags.generated).stem().string());
  out << fmt::format("report -> {}\n", path.string());
}

void CmdReport(const RunConfig& config, const Flags& flags, std::ostream& out) {
  std::vector<std::string> files = flags.reports;
  if (files.empty()) {
    files.push_back((Require(config.paths.reports, "paths.reports") / "report.json").string());
  }
  std::vector<std::pair<std::string, EvalReport>> runs;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    if (!in) throw Error(ErrorKind::kIoFailure, "cannot read " + f);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorKind::kParseError, f + ": " + e.what());
    }
    runs.emplace_back(fs::path(f).stem().string(), ReportFromJson(j));
  }
  const std::string table = RenderReportTable(runs);
  out << table;
  if (!flags.out.empty()) WriteText(flags.out, table);
}

bool IsValidationError(ErrorKind kind) {
  return kind == ErrorKind::kConfigInvalid || kind == ErrorKind::kParseError;
}

}  // namespace

int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Retrieval-augmented question generation for earnings-call presentations",
               "callprep"};
  app.require_subcommand(1);
  Flags flags;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config, "JSON run configuration");
    sub->add_option("--seed", flags.seed, "Global seed");
    sub->add_option("--corpus", flags.corpus, "Corpus JSONL (overrides paths.corpus)");
    sub->add_option("--questions", flags.questions,
                    "Question JSONL (overrides paths.questions)");
    sub->add_option("--checkpoints", flags.checkpoints,
                    "Checkpoint directory (overrides paths.checkpoints)");
    sub->add_option("--out", flags.out, "Output path");
  };
  using Handler = void (*)(const RunConfig&, const Flags&, std::ostream&);
  std::vector<std::pair<CLI::App*, Handler>> commands;

  auto* ingest = app.add_subcommand("ingest", "Parse raw transcripts into corpus/question JSONL");
  common(ingest);
  ingest->add_option("--raw", flags.raw, "Directory of raw .txt transcripts");
  commands.emplace_back(ingest, CmdIngest);

  auto* synth = app.add_subcommand("synth", "Write a planted-relevance synthetic raw corpus");
  common(synth);
  synth->add_option("--raw", flags.raw, "Output directory for raw .txt transcripts");
  synth->add_option("--docs", flags.docs, "Number of transcripts");
  synth->add_option("--doc-segments", flags.doc_segments, "Presentation paragraphs per transcript");
  synth->add_option("--doc-questions", flags.doc_questions, "Analyst questions per transcript");
  commands.emplace_back(synth, CmdSynth);

  auto* stats = app.add_subcommand("stats", "Print corpus statistics");
  common(stats);
  commands.emplace_back(stats, CmdStats);

  auto* segment = app.add_subcommand("segment", "Write presentation segments as JSONL");
  common(segment);
  commands.emplace_back(segment, CmdSegment);

  auto* train = app.add_subcommand("train", "Co-train the retriever and generator");
  common(train);
  train->add_option("--retriever", flags.retriever, "random|bm25|pro");
  train->add_option("--top-k", flags.top_k, "Segments per input");
  train->add_option("--epochs", flags.epochs, "Training epochs");
  commands.emplace_back(train, CmdTrain);

  auto* generate = app.add_subcommand("generate", "Generate questions from chosen segments");
  common(generate);
  generate->add_option("--transcript", flags.transcript, "Transcript id")->required();
  generate->add_option("--segments", flags.segments, "Comma-separated segment indices")
      ->required();
  generate->add_option("--num-questions", flags.num_questions, "Questions to sample");
  commands.emplace_back(generate, CmdGenerate);

  auto* predict = app.add_subcommand(
      "predict", "Generate one question per reference question for evaluation");
  common(predict);
  predict->add_option("--retriever", flags.retriever, "random|bm25|pro");
  predict->add_option("--top-k", flags.top_k, "Segments per input");
  commands.emplace_back(predict, CmdPredict);

  auto* evaluate = app.add_subcommand("evaluate", "Score generated questions against references");
  common(evaluate);
  evaluate->add_option("--generated", flags.generated, "Generated question JSONL")->required();
  commands.emplace_back(evaluate, CmdEvaluate);

  auto* report = app.add_subcommand("report", "Render evaluation reports as a table");
  common(report);
  report->add_option("reports", flags.reports, "Report JSON files");
  commands.emplace_back(report, CmdReport);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    const RunConfig config = ResolveConfig(flags);
    for (const auto& [sub, handler] : commands) {
      if (sub->parsed()) handler(config, flags, out);
    }
    return kExitOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return IsValidationError(e.kind()) ? kExitValidation : kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace callprep
