// Copyright 2026 The callprep Authors
// SPDX-License-Identifier: Apache-2.0

#include "callprep/training.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>
#include <utility>

#include <fmt/format.h>

#include "callprep/checkpoint.h"
#include "callprep/errors.h"
#include "callprep/log.h"
#include "callprep/rng.h"
#include "json.hpp"

namespace callprep {
namespace {

// RNG stream tags.
constexpr uint64_t kInitStream = 0;
constexpr uint64_t kShuffleStream = 1;
constexpr uint64_t kSelectStream = 2;

std::vector<Matrix> ZerosLike(std::span<const ConstParamRef> params) {
  std::vector<Matrix> out;
  out.reserve(params.size());
  for (const auto& p : params) out.emplace_back(p.tensor->rows, p.tensor->cols);
  return out;
}

nlohmann::json AdamWToJson(const AdamWConfig& hp) {
  return {{"beta1", hp.beta1}, {"beta2", hp.beta2}, {"eps", hp.eps},
          {"weight_decay", hp.weight_decay}};
}

AdamWConfig AdamWFromJson(const nlohmann::json& j) {
  return {j.at("beta1").get<double>(), j.at("beta2").get<double>(), j.at("eps").get<double>(),
          j.at("weight_decay").get<double>()};
}

void AppendOptim(TensorFile& file, const OptimState& opt, std::span<const ConstParamRef> params) {
  for (size_t i = 0; i < params.size(); ++i) {
    file.tensors.emplace_back("m." + params[i].name, opt.first_moment[i]);
    file.tensors.emplace_back("v." + params[i].name, opt.second_moment[i]);
  }
}

void ExtractOptim(const TensorFile& file, OptimState& opt, std::span<const ConstParamRef> params) {
  opt.first_moment = ZerosLike(params);
  opt.second_moment = ZerosLike(params);
  std::vector<ParamRef> m_refs, v_refs;
  for (size_t i = 0; i < params.size(); ++i) {
    m_refs.push_back({params[i].name, &opt.first_moment[i]});
    v_refs.push_back({params[i].name, &opt.second_moment[i]});
  }
  ExtractTensors(file, m_refs, "m.");
  ExtractTensors(file, v_refs, "v.");
}

}  // namespace

// ---------------------------------------------------------------------------
// Optimizer primitives

std::vector<ParamRef> OptimState::Refs() {
  std::vector<ParamRef> refs;
  for (size_t i = 0; i < first_moment.size(); ++i) {
    refs.push_back({"m." + std::to_string(i), &first_moment[i]});
    refs.push_back({"v." + std::to_string(i), &second_moment[i]});
  }
  return refs;
}

OptimState InitOptim(std::span<const ConstParamRef> params, const AdamWConfig& hp) {
  OptimState opt;
  opt.hp = hp;
  opt.first_moment = ZerosLike(params);
  opt.second_moment = ZerosLike(params);
  return opt;
}

void AdamWStep(std::span<const ParamRef> params, std::span<const ConstParamRef> grads,
               OptimState& opt, double lr) {
  if (params.size() != grads.size() || params.size() != opt.first_moment.size()) {
    throw Error(ErrorKind::kShapeMismatch, "optimizer, parameter and gradient lists differ");
  }
  for (size_t i = 0; i < params.size(); ++i) {
    const Matrix& p = *params[i].tensor;
    const Matrix& g = *grads[i].tensor;
    if (p.rows != g.rows || p.cols != g.cols || opt.first_moment[i].rows != p.rows ||
        opt.first_moment[i].cols != p.cols) {
      throw Error(ErrorKind::kShapeMismatch, "shape mismatch for " + params[i].name);
    }
  }
  opt.step += 1;
  const auto& hp = opt.hp;
  const double t = static_cast<double>(opt.step);
  const double bias1 = 1.0 - std::pow(hp.beta1, t);
  const double bias2 = 1.0 - std::pow(hp.beta2, t);
  for (size_t i = 0; i < params.size(); ++i) {
    auto& theta = params[i].tensor->data;
    const auto& g = grads[i].tensor->data;
    auto& m = opt.first_moment[i].data;
    auto& v = opt.second_moment[i].data;
    for (size_t j = 0; j < theta.size(); ++j) {
      m[j] = hp.beta1 * m[j] + (1.0 - hp.beta1) * g[j];
      v[j] = hp.beta2 * v[j] + (1.0 - hp.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bias1;
      const double v_hat = v[j] / bias2;
      theta[j] -= lr * hp.weight_decay * theta[j];
      theta[j] -= lr * m_hat / (std::sqrt(v_hat) + hp.eps);
    }
  }
}

double LrAt(int64_t step, int64_t total_steps, double peak_lr, double warmup_ratio) {
  if (total_steps <= 0) return 0.0;
  step = std::clamp<int64_t>(step, 0, total_steps);
  const auto warmup = static_cast<int64_t>(
      std::ceil(warmup_ratio * static_cast<double>(total_steps) - 1e-9));
  if (step < warmup) {
    return peak_lr * (static_cast<double>(step) / static_cast<double>(warmup));
  }
  if (total_steps == warmup) return peak_lr;
  // Ratio first so the warmup boundary yields exactly peak_lr.
  return peak_lr * (static_cast<double>(total_steps - step) /
                    static_cast<double>(total_steps - warmup));
}

double ClipGradNorm(std::span<const ParamRef> grads, double max_norm) {
  const auto view = AsConst(grads);
  const double norm = GlobalNorm(view);
  if (!std::isfinite(norm)) {
    throw Error(ErrorKind::kNonFiniteGradient, "gradient norm is not finite");
  }
  if (norm <= max_norm) return 1.0;
  const double factor = max_norm / norm;
  ScaleAll(grads, factor);
  return factor;
}

void GradientAccumulator::Add(const GeneratorParams& grads) {
  AddInto(sum_.Refs(), grads.Refs());
  ++count_;
}

GeneratorParams GradientAccumulator::Mean() const {
  GeneratorParams mean = sum_;
  if (count_ > 0) ScaleAll(mean.Refs(), 1.0 / count_);
  return mean;
}

void GradientAccumulator::Reset() {
  ZeroAll(sum_.Refs());
  count_ = 0;
}

std::string_view RetrieverKindName(RetrieverKind kind) {
  switch (kind) {
    case RetrieverKind::kRandom: return "random";
    case RetrieverKind::kBm25: return "bm25";
    case RetrieverKind::kPro: return "pro";
  }
  return "pro";
}

std::optional<RetrieverKind> ParseRetrieverKind(std::string_view name) {
  if (name == "random") return RetrieverKind::kRandom;
  if (name == "bm25") return RetrieverKind::kBm25;
  if (name == "pro") return RetrieverKind::kPro;
  return std::nullopt;
}

void TrainConfig::Validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw Error(ErrorKind::kConfigInvalid, "train." + field + ": " + why);
  };
  if (epochs < 0) fail("epochs", "must be >= 0");
  if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) fail("warmup_ratio", "must be in [0, 1)");
  if (!(max_grad_norm > 0.0)) fail("max_grad_norm", "must be > 0");
  if (accumulation_steps < 1) fail("accumulation_steps", "must be >= 1");
  if (micro_batch < 1) fail("micro_batch", "must be >= 1");
  if (top_k < 1) fail("top_k", "must be >= 1");
  if (!(learning_rate >= 0.0)) fail("learning_rate", "must be >= 0");
  if (!(retriever_learning_rate >= 0.0)) fail("retriever_learning_rate", "must be >= 0");
  if (!(selection_temperature > 0.0)) fail("selection_temperature", "must be > 0");
  if (selection_samples < 1) fail("selection_samples", "must be >= 1");
  if (!(baseline_decay >= 0.0 && baseline_decay < 1.0)) fail("baseline_decay", "must be in [0, 1)");
  if (input_budget < 1) fail("input_budget", "must be >= 1");
  if (max_target_tokens < 1) fail("max_target_tokens", "must be >= 1");
}

// ---------------------------------------------------------------------------
// Data preparation

std::vector<std::string> VocabularyTexts(const std::vector<Transcript>& corpus,
                                         const std::vector<QuestionRecord>& questions) {
  std::vector<std::string> texts;
  for (const auto& t : corpus) texts.insert(texts.end(), t.presentation.begin(), t.presentation.end());
  for (const auto& q : questions) texts.push_back(q.text);
  return texts;
}

TrainingSet PrepareTrainingSet(const std::vector<Transcript>& corpus,
                               const std::vector<QuestionRecord>& questions,
                               const Vocab& vocab, const TrainConfig& config) {
  TrainingSet set;
  std::unordered_map<std::string, int> by_id;
  for (const auto& t : corpus) {
    PreparedDocument doc;
    doc.transcript_id = t.id;
    doc.segments = SegmentPresentation(t);
    for (const auto& s : doc.segments) doc.segment_ids.push_back(vocab.EncodeTokens(s.tokens));
    if (config.retriever == RetrieverKind::kBm25 && !doc.segments.empty()) {
      doc.bm25 = Bm25Build(doc.segments, config.bm25_k1, config.bm25_b);
    }
    by_id[t.id] = static_cast<int>(set.documents.size());
    set.documents.push_back(std::move(doc));
  }
  for (const auto& q : questions) {
    auto it = by_id.find(q.transcript_id);
    if (it == by_id.end()) {
      spdlog::warn("question {}/{} has no transcript; skipped", q.transcript_id, q.question_id);
      continue;
    }
    if (set.documents[it->second].segments.empty()) continue;
    PreparedExample ex;
    ex.document = it->second;
    ex.question_id = q.question_id;
    ex.question_text = q.text;
    ex.question_ids = vocab.Encode(q.text);
    if (ex.question_ids.empty()) continue;
    set.examples.push_back(std::move(ex));
  }
  return set;
}

std::string StepRecord::ToJson() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["loss"] = loss;
  j["lr"] = lr;
  j["grad_norm"] = grad_norm;
  j["chosen_indices"] = chosen_indices;
  return j.dump();
}

// ---------------------------------------------------------------------------
// Selection sampling

PlackettLuceDraw SamplePlackettLuce(std::span<const double> logits, int k, Rng& rng) {
  const int n = static_cast<int>(logits.size());
  k = std::clamp(k, 0, n);
  PlackettLuceDraw draw;
  draw.grad_log_prob.assign(static_cast<size_t>(n), 0.0);
  std::vector<bool> taken(static_cast<size_t>(n), false);
  std::vector<double> probs(static_cast<size_t>(n));
  for (int j = 0; j < k; ++j) {
    double mx = -INFINITY;
    for (int i = 0; i < n; ++i) {
      if (!taken[i]) mx = std::max(mx, logits[i]);
    }
    double z = 0.0;
    for (int i = 0; i < n; ++i) {
      probs[i] = taken[i] ? 0.0 : std::exp(logits[i] - mx);
      z += probs[i];
    }
    for (double& p : probs) p /= z;
    const double u = rng.Uniform();
    double cum = 0.0;
    int pick = -1;
    for (int i = 0; i < n; ++i) {
      if (taken[i]) continue;
      pick = i;
      cum += probs[i];
      if (u < cum) break;
    }
    draw.order.push_back(pick);
    draw.log_prob += std::log(probs[pick]);
    for (int i = 0; i < n; ++i) draw.grad_log_prob[i] -= probs[i];
    draw.grad_log_prob[pick] += 1.0;
    taken[pick] = true;
  }
  return draw;
}

// ---------------------------------------------------------------------------
// CoTrainer

CoTrainer::CoTrainer(const TrainConfig& config, GeneratorState generator, Vocab vocab)
    : config_(config),
      generator_(std::move(generator)),
      vocab_(std::move(vocab)),
      scorer_(generator_, vocab_),
      gen_opt_(InitOptim(std::as_const(generator_.params).Refs(), config.adamw)),
      scorer_opt_(InitOptim(std::as_const(scorer_).params().Refs(), config.adamw)),
      gen_grads_(ZeroParams(generator_.config)),
      scorer_grads_(ZeroScorerParams(generator_.config.d_model)) {
  config_.Validate();
}

std::vector<int> CoTrainer::TargetIds(const PreparedExample& example) const {
  const int cap = std::max(1, std::min(config_.max_target_tokens, generator_.config.context - 2));
  std::vector<int> target(example.question_ids.begin(),
                          example.question_ids.begin() +
                              std::min<size_t>(example.question_ids.size(), static_cast<size_t>(cap)));
  target.push_back(kEosId);
  return target;
}

std::vector<int> CoTrainer::InputIds(const PreparedDocument& doc, const RetrievalResult& selection,
                                     size_t target_len) const {
  const int room = generator_.config.context - static_cast<int>(target_len) + 1;
  return BuildInput(selection, doc.segments, vocab_, std::min(config_.input_budget, room));
}

std::vector<RelevanceJudgment> CoTrainer::JudgeAll(const PreparedDocument& doc,
                                                   const PreparedExample& example) const {
  const Matrix q = scorer_.TokenVectors(example.question_ids);
  std::vector<RelevanceJudgment> out;
  for (const auto& ids : doc.segment_ids) {
    out.push_back(scorer_.JudgeFeatures(scorer_.MatchFeatures(scorer_.TokenVectors(ids), q)));
  }
  return out;
}

RetrievalResult CoTrainer::SelectForEval(const PreparedDocument& doc,
                                         const PreparedExample& example) const {
  std::vector<std::pair<int, double>> scored;
  const auto judgments = JudgeAll(doc, example);
  for (size_t i = 0; i < judgments.size(); ++i) {
    scored.emplace_back(static_cast<int>(i), judgments[i].score);
  }
  return TopKSelect(scored, config_.top_k);
}

double CoTrainer::EvalLoss(const PreparedDocument& doc, const PreparedExample& example,
                           const RetrievalResult& selection) const {
  const auto target = TargetIds(example);
  return Loss(generator_, InputIds(doc, selection, target.size()), target);
}

MicroStepResult CoTrainer::Step(const PreparedDocument& doc, const PreparedExample& example,
                                int64_t epoch, int64_t micro_index) {
  const int n = static_cast<int>(doc.segments.size());
  const int k = std::min(config_.top_k, n);
  Rng rng = Rng::Derive(config_.seed, {kSelectStream, static_cast<uint64_t>(epoch),
                                       static_cast<uint64_t>(micro_index)});
  MicroStepResult result;
  const auto target = TargetIds(example);
  auto generator_loss = [&](const RetrievalResult& selection) {
    const auto input = InputIds(doc, selection, target.size());
    const double loss = AccumulateGradients(generator_, input, target, gen_grads_.sum());
    gen_grads_.AddCount(1);
    return loss;
  };

  if (config_.retriever == RetrieverKind::kPro && config_.train_retriever) {
    const Matrix q = scorer_.TokenVectors(example.question_ids);
    std::vector<std::vector<double>> features;
    std::vector<RelevanceJudgment> judgments;
    std::vector<double> logits;
    for (int i = 0; i < n; ++i) {
      features.push_back(scorer_.MatchFeatures(scorer_.TokenVectors(doc.segment_ids[i]), q));
      judgments.push_back(scorer_.JudgeFeatures(features.back()));
      logits.push_back(judgments.back().score / config_.selection_temperature);
    }
    const int samples = config_.selection_samples;
    std::vector<PlackettLuceDraw> draws;
    std::vector<double> rewards;
    for (int s = 0; s < samples; ++s) {
      draws.push_back(SamplePlackettLuce(logits, k, rng));
      RetrievalResult selection;
      selection.segment_indices = draws.back().order;
      std::sort(selection.segment_indices.begin(), selection.segment_indices.end());
      for (int i : selection.segment_indices) selection.scores.push_back(judgments[i].score);
      const double loss = generator_loss(selection);
      rewards.push_back(-loss);
      result.loss += loss / samples;
      if (s == 0) result.selection = std::move(selection);
    }
    // Descent on -advantage * log pi(selection), averaged over the samples.
    // A single sample is compared with the running mean reward; several are
    // compared with the mean of the others.
    std::vector<double> advantages(samples);
    if (samples == 1) {
      if (!baseline_set_) {
        baseline_ = rewards[0];
        baseline_set_ = true;
      }
      advantages[0] = rewards[0] - baseline_;
      baseline_ = config_.baseline_decay * baseline_ + (1.0 - config_.baseline_decay) * rewards[0];
    } else {
      double total = 0.0;
      for (double r : rewards) total += r;
      for (int s = 0; s < samples; ++s) {
        advantages[s] = rewards[s] - (total - rewards[s]) / (samples - 1);
      }
    }
    for (int i = 0; i < n; ++i) {
      double d_score = 0.0;
      for (int s = 0; s < samples; ++s) d_score -= advantages[s] * draws[s].grad_log_prob[i];
      d_score /= samples * config_.selection_temperature;
      if (d_score != 0.0) {
        scorer_.AccumulateScoreGradient(features[i], judgments[i], d_score, scorer_grads_);
      }
    }
  } else {
    switch (config_.retriever) {
      case RetrieverKind::kRandom:
        result.selection = RandomRetrieve(n, k, rng.NextU64());
        break;
      case RetrieverKind::kBm25:
        if (!doc.bm25) throw Error(ErrorKind::kEmptySegments, "document has no BM25 index");
        result.selection = TopKSelect(Bm25Score(*doc.bm25, example.question_text), k);
        break;
      case RetrieverKind::kPro:
        result.selection = SelectForEval(doc, example);
        break;
    }
    result.loss = generator_loss(result.selection);
  }

  ++window_micro_steps_;
  window_loss_ += result.loss;
  window_chosen_.push_back(result.selection.segment_indices);
  if (window_micro_steps_ >= config_.accumulation_steps * config_.micro_batch) {
    result.update = ApplyUpdate();
  }
  return result;
}

std::optional<StepRecord> CoTrainer::Flush() {
  if (window_micro_steps_ == 0) return std::nullopt;
  return ApplyUpdate();
}

StepRecord CoTrainer::ApplyUpdate() {
  const int n = window_micro_steps_;
  auto grads = gen_grads_.sum().Refs();
  ScaleAll(grads, 1.0 / gen_grads_.count());
  const double grad_norm = GlobalNorm(AsConst(grads));
  ClipGradNorm(grads, config_.max_grad_norm);
  const double lr = LrAt(gen_opt_.step, total_steps_, config_.learning_rate, config_.warmup_ratio);
  auto params = generator_.params.Refs();
  AdamWStep(params, AsConst(grads), gen_opt_, lr);
  SnapToFloat(params);
  SnapToFloat(gen_opt_.Refs());

  if (config_.retriever == RetrieverKind::kPro && config_.train_retriever) {
    auto sgrads = scorer_grads_.Refs();
    ScaleAll(sgrads, 1.0 / n);
    ClipGradNorm(sgrads, config_.max_grad_norm);
    const double rlr = LrAt(scorer_opt_.step, total_steps_, config_.retriever_learning_rate,
                            config_.warmup_ratio);
    auto sparams = scorer_.params().Refs();
    AdamWStep(sparams, AsConst(sgrads), scorer_opt_, rlr);
    SnapToFloat(sparams);
    SnapToFloat(scorer_opt_.Refs());
  }

  StepRecord record;
  record.step = gen_opt_.step;
  record.loss = window_loss_ / n;
  record.lr = lr;
  record.grad_norm = grad_norm;
  record.chosen_indices = std::move(window_chosen_);

  gen_grads_.Reset();
  ZeroAll(scorer_grads_.Refs());
  window_loss_ = 0.0;
  window_micro_steps_ = 0;
  window_chosen_.clear();
  spdlog::debug("step {} loss {:.5f} lr {:.3e} grad_norm {:.4f}", record.step, record.loss,
                record.lr, record.grad_norm);
  return record;
}

void CoTrainer::SaveCheckpoints(const std::filesystem::path& dir, int epoch) const {
  const std::string n = std::to_string(epoch);
  SaveGenerator(dir / ("epoch-" + n + ".ckpt"), generator_, vocab_);

  TensorFile optim;
  optim.meta = {{"kind", "optim"},
                {"epoch", epoch},
                {"step", gen_opt_.step},
                {"adamw", AdamWToJson(gen_opt_.hp)},
                {"baseline", baseline_},
                {"baseline_set", baseline_set_},
                {"total_steps", total_steps_}};
  AppendOptim(optim, gen_opt_, generator_.params.Refs());
  WriteTensorFile(dir / ("optim-" + n + ".ckpt"), optim);

  TensorFile retriever;
  retriever.meta = {{"kind", "retriever"},
                    {"training_only", true},
                    {"epoch", epoch},
                    {"match_scale", scorer_.match_scale()},
                    {"step", scorer_opt_.step},
                    {"adamw", AdamWToJson(scorer_opt_.hp)}};
  AppendTensors(retriever, scorer_.params().Refs());
  AppendOptim(retriever, scorer_opt_, scorer_.params().Refs());
  WriteTensorFile(dir / ("retriever-" + n + ".ckpt"), retriever);
}

void CoTrainer::LoadCheckpoints(const std::filesystem::path& dir, int epoch) {
  const std::string n = std::to_string(epoch);
  LoadGenerator(dir / ("epoch-" + n + ".ckpt"), generator_, vocab_);
  gen_grads_ = GradientAccumulator(ZeroParams(generator_.config));
  try {
    const TensorFile optim = ReadTensorFile(dir / ("optim-" + n + ".ckpt"));
    gen_opt_.hp = AdamWFromJson(optim.meta.at("adamw"));
    gen_opt_.step = optim.meta.at("step").get<int64_t>();
    baseline_ = optim.meta.at("baseline").get<double>();
    baseline_set_ = optim.meta.at("baseline_set").get<bool>();
    ExtractOptim(optim, gen_opt_, std::as_const(generator_.params).Refs());

    const TensorFile retriever = ReadTensorFile(dir / ("retriever-" + n + ".ckpt"));
    scorer_.params() = ZeroScorerParams(generator_.config.d_model);
    ExtractTensors(retriever, scorer_.params().Refs());
    scorer_opt_.hp = AdamWFromJson(retriever.meta.at("adamw"));
    scorer_opt_.step = retriever.meta.at("step").get<int64_t>();
    ExtractOptim(retriever, scorer_opt_, std::as_const(scorer_).params().Refs());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kCheckpointCorrupt, std::string("optimizer metadata: ") + e.what());
  }
  scorer_grads_ = ZeroScorerParams(generator_.config.d_model);
  window_loss_ = 0.0;
  window_micro_steps_ = 0;
  window_chosen_.clear();
}

// ---------------------------------------------------------------------------
// Training driver

TrainResult Train(const std::vector<Transcript>& corpus,
                  const std::vector<QuestionRecord>& questions, const TrainConfig& config) {
  config.Validate();
  if (config.checkpoint_dir.empty()) {
    throw Error(ErrorKind::kConfigInvalid, "paths.checkpoints: required for training");
  }
  std::filesystem::create_directories(config.checkpoint_dir);
  const bool resume = config.resume_epoch >= 0;

  Vocab vocab;
  GeneratorState initial;
  if (resume) {
    LoadGenerator(config.checkpoint_dir / ("epoch-" + std::to_string(config.resume_epoch) + ".ckpt"),
                  initial, vocab);
  } else {
    vocab = Vocab::Build(VocabularyTexts(corpus, questions));
    GeneratorConfig model = config.model;
    model.vocab_size = vocab.size();
    initial = InitGenerator(model, Rng::Derive(config.seed, {kInitStream}).NextU64(),
                            config.init_std);
  }
  auto trainer = std::make_unique<CoTrainer>(config, std::move(initial), vocab);
  if (resume) trainer->LoadCheckpoints(config.checkpoint_dir, config.resume_epoch);

  const TrainingSet set = PrepareTrainingSet(corpus, questions, trainer->vocab(), config);
  if (set.examples.empty()) {
    throw Error(ErrorKind::kEmptyCorpus, "no (transcript, question) pairs to train on");
  }
  const int64_t window = static_cast<int64_t>(config.accumulation_steps) * config.micro_batch;
  const auto n_examples = static_cast<int64_t>(set.examples.size());
  const int64_t windows_per_epoch = (n_examples + window - 1) / window;
  trainer->set_total_steps(std::max<int64_t>(1, windows_per_epoch * config.epochs));

  const std::filesystem::path metrics_path = config.checkpoint_dir / "metrics.jsonl";
  std::vector<std::string> kept_lines;
  if (resume) {
    std::ifstream in(metrics_path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (nlohmann::json::parse(line).at("step").get<int64_t>() <= trainer->generator_optim().step) {
        kept_lines.push_back(line);
      }
    }
  }
  std::ofstream metrics(metrics_path, std::ios::trunc);
  if (!metrics) throw Error(ErrorKind::kIoFailure, "cannot write " + metrics_path.string());
  for (const auto& l : kept_lines) metrics << l << '\n';

  if (!resume) trainer->SaveCheckpoints(config.checkpoint_dir, 0);

  TrainResult result;
  auto record = [&](const StepRecord& r) {
    metrics << r.ToJson() << '\n';
    metrics.flush();
    result.log.push_back(r);
  };
  const int start_epoch = resume ? config.resume_epoch : 0;
  for (int epoch = start_epoch; epoch < config.epochs; ++epoch) {
    std::vector<size_t> order(set.examples.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle = Rng::Derive(config.seed, {kShuffleStream, static_cast<uint64_t>(epoch)});
    for (size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle.UniformInt(i)]);
    }
    double epoch_loss = 0.0;
    for (size_t i = 0; i < order.size(); ++i) {
      const auto& ex = set.examples[order[i]];
      auto step = trainer->Step(set.documents[ex.document], ex, epoch, static_cast<int64_t>(i));
      epoch_loss += step.loss;
      if (step.update) record(*step.update);
    }
    if (auto tail = trainer->Flush()) record(*tail);
    trainer->SaveCheckpoints(config.checkpoint_dir, epoch + 1);
    spdlog::info("epoch {} done: mean loss {:.4f}, optimizer step {}", epoch + 1,
                 epoch_loss / static_cast<double>(order.size()), trainer->generator_optim().step);
  }

  SaveGenerator(config.checkpoint_dir / "generator.ckpt", trainer->generator(), trainer->vocab());
  const int last = std::max(config.epochs, start_epoch);
  std::filesystem::copy_file(config.checkpoint_dir / ("retriever-" + std::to_string(last) + ".ckpt"),
                             config.checkpoint_dir / "retriever.ckpt",
                             std::filesystem::copy_options::overwrite_existing);
  result.generator = trainer->generator();
  result.vocab = trainer->vocab();
  result.scorer = trainer->scorer().params();
  return result;
}

// ---------------------------------------------------------------------------
// Synthetic planted-relevance corpus

namespace {

const std::vector<std::string>& KeywordPool() {
  static const std::vector<std::string> pool = {
      "margin",    "inventory", "pricing",   "backlog",  "churn",     "dividend",  "leverage",
      "freight",   "tariffs",   "payroll",   "licensing", "cloud",    "wholesale", "hedging",
      "royalties", "subscriptions", "capex", "semiconductors", "insurance", "mortgage",
      "advertising", "logistics", "pharmacy", "refining", "lithium",  "aviation",  "hotels",
      "software",  "storage",   "broadband", "fertilizer", "steel",   "apparel",   "gaming",
      "robotics",  "solar",     "wireless",  "cement",   "dairy",     "uranium"};
  return pool;
}

const std::vector<std::string>& FillerWords() {
  static const std::vector<std::string> words = {
      "results",  "improved",   "across",   "our",       "business", "during",    "quarter",
      "teams",    "delivered",  "solid",    "execution", "customers", "remained", "engaged",
      "operating", "trends",    "stayed",   "consistent", "with",    "plans",     "volumes",
      "grew",     "steadily",   "while",    "costs",     "declined", "modestly",  "cash",
      "flow",     "was",        "healthy",  "balance",   "sheet",    "remains",   "strong",
      "execution", "priorities", "unchanged", "demand",   "held",     "firm",      "regions",
      "performed", "well",      "growth",   "continued", "momentum", "efficiency", "gains",
      "supported", "earnings",  "strategy", "progressed", "initiatives", "advanced", "overall"};
  return words;
}

const std::vector<std::string>& SentenceStarts() {
  static const std::vector<std::string> starts = {"Our", "Overall", "This", "Management",
                                                  "Recently", "Again"};
  return starts;
}

std::string Pick(const std::vector<std::string>& words, Rng& rng) {
  return words[rng.UniformInt(words.size())];
}

std::string MakeSentence(Rng& rng, const std::string* keyword) {
  std::vector<std::string> words;
  const int n = 3 + static_cast<int>(rng.UniformInt(3));
  for (int i = 0; i < n; ++i) words.push_back(Pick(FillerWords(), rng));
  if (keyword) {
    // Two mentions at distinct interior positions.
    const auto a = static_cast<size_t>(rng.UniformInt(words.size()));
    words.insert(words.begin() + static_cast<std::ptrdiff_t>(a), *keyword);
    const auto b = static_cast<size_t>(rng.UniformInt(words.size() + 1));
    words.insert(words.begin() + static_cast<std::ptrdiff_t>(b), *keyword);
  }
  std::string s = Pick(SentenceStarts(), rng);
  for (const auto& w : words) s += " " + w;
  s += ".";
  return s;
}

std::string MakeQuestion(Rng& rng, const std::string& a, const std::string& b) {
  switch (rng.UniformInt(3)) {
    case 0: return "What is the outlook for " + a + " and " + b + "?";
    case 1: return "Can you discuss " + a + " and how it relates to " + b + "?";
    default: return "How should we think about " + a + " versus " + b + " next year?";
  }
}

}  // namespace

SyntheticCorpus MakeSyntheticCorpus(int n_docs, int n_segments_per_doc, int questions_per_doc,
                                    uint64_t seed) {
  const auto& pool = KeywordPool();
  if (questions_per_doc < 1 || 2 * questions_per_doc > n_segments_per_doc ||
      2 * questions_per_doc > static_cast<int>(pool.size())) {
    throw Error(ErrorKind::kConfigInvalid,
                "synthetic corpus needs 1 <= 2 * questions_per_doc <= segments per doc");
  }
  SyntheticCorpus out;
  Rng rng(seed);
  auto sample = [&rng](int n, int k) {
    std::vector<int> idx(static_cast<size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < k; ++i) {
      const int j = i + static_cast<int>(rng.UniformInt(static_cast<uint64_t>(n - i)));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(static_cast<size_t>(k));
    return idx;
  };
  const int n_planted = 2 * questions_per_doc;
  for (int d = 0; d < n_docs; ++d) {
    Transcript t;
    t.id = "syn-" + std::to_string(d);
    t.company = "Synthetic Holdings " + std::to_string(d % 5);
    t.date = fmt::format("2023-01-{:02d}", d % 28 + 1);

    // Planted segment p_i carries keyword kw_i; questions pair them up.
    const auto keywords = sample(static_cast<int>(pool.size()), n_planted);
    const auto segments = sample(n_segments_per_doc, n_planted);
    std::map<int, const std::string*> keyword_at;
    for (int i = 0; i < n_planted; ++i) keyword_at[segments[i]] = &pool[keywords[i]];
    for (int s = 0; s < n_segments_per_doc; ++s) {
      auto it = keyword_at.find(s);
      t.presentation.push_back(MakeSentence(rng, it == keyword_at.end() ? nullptr : it->second));
    }

    t.qa_turns.push_back({SpeakerRole::kOperator, "Our first question comes from the line."});
    std::vector<std::pair<std::vector<int>, std::vector<std::string>>> truth;
    for (int q = 0; q < questions_per_doc; ++q) {
      int a = segments[2 * q];
      int b = segments[2 * q + 1];
      if (a > b) std::swap(a, b);
      t.qa_turns.push_back({SpeakerRole::kAnalyst, MakeQuestion(rng, *keyword_at[a], *keyword_at[b])});
      t.qa_turns.push_back({SpeakerRole::kManager, "Thanks for the question."});
      truth.push_back({{a, b}, {*keyword_at[a], *keyword_at[b]}});
    }
    auto questions = ExtractQuestions(t);
    for (size_t q = 0; q < questions.size(); ++q) {
      const auto key = std::make_pair(questions[q].transcript_id, questions[q].question_id);
      out.planted[key] = truth[q].first;
      out.keywords[key] = truth[q].second;
      out.questions.push_back(std::move(questions[q]));
    }
    out.transcripts.push_back(std::move(t));
  }
  return out;
}

double PlantedRecall(const RetrievalResult& selection, std::span<const int> planted) {
  if (planted.empty()) return 1.0;
  int hit = 0;
  for (int p : planted) {
    if (std::find(selection.segment_indices.begin(), selection.segment_indices.end(), p) !=
        selection.segment_indices.end()) {
      ++hit;
    }
  }
  return static_cast<double>(hit) / static_cast<double>(planted.size());
}

}  // namespace callprep
