#include "stlab/trainer.hpp"

#include <chrono>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "stlab/error.hpp"
#include "stlab/losses.hpp"
#include "stlab/rng.hpp"

namespace stlab {

using nlohmann::json;

namespace {

constexpr std::uint64_t kSubsetSalt = 0x5b5e7;
constexpr std::uint64_t kBatchSalt = 0xba7c4;
constexpr std::uint64_t kNoiseSalt = 0x4015e;

const std::pair<Task, const char*> kTaskNames[] = {
    {Task::kAsrCtc, "asr_ctc"},   {Task::kMtXent, "mt_xent"},
    {Task::kMtCopy, "mt_copy"},   {Task::kMtMulti, "mt_multi"},   {Task::kE2eXent, "e2e_xent"},
    {Task::kE2eSimilarity, "e2e_similarity"},
};

const std::pair<FreezePreset, const char*> kFreezeNames[] = {
    {FreezePreset::kAll, "ALL"},
    {FreezePreset::kAsrOnly, "ASR_ONLY"},
    {FreezePreset::kMtOnly, "MT_ONLY"},
    {FreezePreset::kMtEncoderOnly, "MT_ENCODER_ONLY"},
    {FreezePreset::kAdapterOnly, "ADAPTER_ONLY"},
    {FreezePreset::kNone, "NONE"},
};

bool is_e2e(Task t) { return t == Task::kE2eXent || t == Task::kE2eSimilarity; }

std::vector<std::size_t> words_to_ids(const TokenVocab& tokens, const std::string& text) {
  return tokens.encode_words(split_words(text));
}

Var sequence_xent(Tape& tape, const MtModule& mt, Var encoded, std::size_t start,
                  std::span<const std::size_t> ids) {
  const auto input = decoder_input(start, ids);
  const auto target = decoder_target(ids);
  return cross_entropy(mt.decode_teacher_forced(tape, encoded, input), target);
}

// Recognizer output for one example, kept as plain tensors so a frozen ASR
// runs once per example and stage.
struct CachedView {
  Tensor hidden;
  std::vector<std::size_t> path;
};

// Text path of the similarity loss, tagged with its own language.
std::vector<std::size_t> similarity_text(const SpeechTranslationModel& model, const SyntheticExample& ex) {
  if (model.flags.text_path_source) {
    return text_encoder_input(model, words_to_ids(model.tokens, ex.transcript), TokenVocab::kSourceTag);
  }
  return text_encoder_input(model, words_to_ids(model.tokens, ex.translation), TokenVocab::kTargetTag);
}

Var loss_from_view(Tape& tape, const SpeechTranslationModel& model, Task task, const SyntheticExample& ex,
                   const AsrView& view, double similarity_weight) {
  const auto target = words_to_ids(model.tokens, ex.translation);
  if (task == Task::kE2eSimilarity) {
    const PooledPair pools = similarity_pools(tape, model, view, similarity_text(model, ex));
    return similarity_loss(pools.audio, pools.text);
  }
  const auto input = decoder_input(model.decoder_start(), target);
  Var loss = cross_entropy(e2e_forward(tape, model, view, input), decoder_target(target));
  if (similarity_weight != 0.0) {
    const PooledPair pools = similarity_pools(tape, model, view, similarity_text(model, ex));
    loss = add(loss, scale(similarity_loss(pools.audio, pools.text), similarity_weight));
  }
  return loss;
}

std::vector<Parameter*> all_params(std::vector<ParameterGroup>& groups) {
  std::vector<Parameter*> out;
  for (auto& g : groups) {
    for (Parameter* p : g.params()) out.push_back(p);
  }
  return out;
}

std::string hex_double(double v) { return encode_hex_doubles(std::span<const double>(&v, 1)); }

}  // namespace

std::string to_string(Task task) {
  for (const auto& [t, name] : kTaskNames) {
    if (t == task) return name;
  }
  return "?";
}

Task task_from_string(const std::string& name) {
  for (const auto& [t, n] : kTaskNames) {
    if (name == n) return t;
  }
  throw ConfigError("unknown task '" + name + "'");
}

std::string to_string(FreezePreset preset) {
  for (const auto& [p, name] : kFreezeNames) {
    if (p == preset) return name;
  }
  return "?";
}

FreezePreset freeze_preset_from_string(const std::string& name) {
  for (const auto& [p, n] : kFreezeNames) {
    if (name == n) return p;
  }
  throw ConfigError("unknown freeze spec '" + name + "'");
}

FreezeSpec FreezeSpec::resolve(FreezePreset preset, const std::vector<std::string>& group_names) {
  std::set<std::string> on;
  switch (preset) {
    case FreezePreset::kAll:
      on.insert(group_names.begin(), group_names.end());
      break;
    case FreezePreset::kAsrOnly:
      on = {"asr"};
      break;
    case FreezePreset::kMtOnly:
      on = {"mt.embedding", "mt.encoder", "mt.decoder"};
      break;
    case FreezePreset::kMtEncoderOnly:
      on = {"mt.encoder"};
      break;
    case FreezePreset::kAdapterOnly:
      on = {"adapter"};
      break;
    case FreezePreset::kNone:
      break;
  }
  std::map<std::string, bool> flags;
  for (const auto& g : group_names) flags[g] = on.erase(g) > 0;
  if (!on.empty()) {
    throw ConfigError("freeze spec " + to_string(preset) + " needs group '" + *on.begin() +
                      "' which the model does not have");
  }
  return FreezeSpec(std::move(flags));
}

void FreezeSpec::apply(SpeechTranslationModel& model) const {
  auto groups = model.groups();
  if (groups.size() != trainable_.size()) {
    throw ConfigError("freeze spec covers " + std::to_string(trainable_.size()) + " groups, model has " +
                      std::to_string(groups.size()));
  }
  for (auto& g : groups) {
    const auto it = trainable_.find(g.name());
    if (it == trainable_.end()) throw ConfigError("freeze spec does not cover group '" + g.name() + "'");
    g.set_trainable(it->second);
  }
}

void adam_step(std::span<Parameter* const> params, AdamState& state, double lr, std::size_t step,
               const AdamConfig& config) {
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), {});
    state.v.assign(params.size(), {});
  }
  for (const Parameter* p : params) {
    if (!p->trainable) continue;
    if (p->grad.shape() != p->value.shape()) throw DimensionError("gradient shape mismatch for " + p->name);
    for (double g : p->grad.values()) {
      if (!std::isfinite(g)) {
        throw NumericError("non-finite gradient in " + p->name + " at step " + std::to_string(step));
      }
    }
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (!p.trainable) continue;
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.empty()) {
      m.assign(p.value.size(), 0.0);
      v.assign(p.value.size(), 0.0);
    }
    auto w = p.value.values();
    auto g = p.grad.values();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g[k];
      v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * g[k] * g[k];
      w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + config.eps);
    }
  }
}

double clip_grad_norm(std::span<Parameter* const> params, double max_norm) {
  double sq = 0.0;
  for (const Parameter* p : params) {
    if (!p->trainable) continue;
    for (double g : p->grad.values()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (Parameter* p : params) {
      if (!p->trainable) continue;
      for (double& g : p->grad.values()) g *= f;
    }
  }
  return norm;
}

void StagePlan::validate() const {
  if (stages.empty()) throw ConfigError("stage plan is empty");
  for (const auto& s : stages) {
    const std::string where = "stage '" + s.name + "': ";
    if (!(s.portion > 0.0 && s.portion <= 1.0)) throw ConfigError(where + "portion must be in (0, 1]");
    if (s.batch == 0) throw ConfigError(where + "batch must be positive");
    if (!(s.lr > 0.0) || !std::isfinite(s.lr)) throw ConfigError(where + "lr must be positive");
    if (s.clip < 0.0) throw ConfigError(where + "clip must be >= 0");
    if (s.task == Task::kE2eSimilarity && s.freeze != FreezePreset::kAdapterOnly) {
      throw ConfigError(where + "similarity training is restricted to ADAPTER_ONLY");
    }
  }
}

void TrainReport::append(const TrainReport& other) {
  const std::size_t offset = stages.size();
  for (StepRecord r : other.curve) {
    r.stage += offset;
    curve.push_back(r);
  }
  stages.insert(stages.end(), other.stages.begin(), other.stages.end());
  for (const auto& g : other.census) {
    bool found = false;
    for (const auto& c : census) found = found || c.group == g.group;
    if (!found) {
      census.push_back(g);
      census_total += g.count;
    }
  }
  wall_seconds += other.wall_seconds;
}

std::string TrainReport::to_jsonl(bool include_timing) const {
  std::ostringstream out;
  for (const auto& r : curve) {
    out << json{{"stage", r.stage}, {"step", r.step}, {"loss", r.loss}, {"loss_hex", hex_double(r.loss)}}.dump()
        << '\n';
  }
  json summary;
  summary["seed"] = seed;
  json stage_list = json::array();
  for (const auto& s : stages) {
    json groups = json::object();
    for (const auto& g : s.trainable) groups[g.group] = g.count;
    stage_list.push_back(json{{"name", s.name},
                              {"task", s.task},
                              {"freeze", s.freeze},
                              {"steps", s.steps},
                              {"examples", s.examples},
                              {"trainable", groups},
                              {"trainable_count", s.trainable_count},
                              {"first_loss", s.first_loss},
                              {"final_loss", s.final_loss}});
  }
  summary["stages"] = stage_list;
  json census_json = json::object();
  for (const auto& g : census) census_json[g.group] = g.count;
  summary["census"] = census_json;
  summary["census_total"] = census_total;
  summary["metrics"] = metrics;
  if (include_timing) summary["wall_seconds"] = wall_seconds;
  out << json{{"summary", summary}}.dump() << '\n';
  return out.str();
}

std::vector<std::size_t> subset_indices(std::size_t n, double portion, std::uint64_t seed) {
  if (!(portion > 0.0 && portion <= 1.0)) {
    throw ConfigError("portion " + std::to_string(portion) + " is outside (0, 1]");
  }
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (portion == 1.0) return idx;
  Rng rng(derive_seed(seed, kSubsetSalt));
  rng.shuffle(idx);
  idx.resize(static_cast<std::size_t>(std::llround(portion * static_cast<double>(n))));
  return idx;
}

std::vector<SyntheticExample> subset_data(std::span<const SyntheticExample> data, double portion,
                                          std::uint64_t seed) {
  std::vector<SyntheticExample> out;
  for (std::size_t i : subset_indices(data.size(), portion, seed)) out.push_back(data[i]);
  return out;
}

std::vector<std::size_t> decoder_input(std::size_t start, std::span<const std::size_t> ids) {
  std::vector<std::size_t> out{start};
  out.insert(out.end(), ids.begin(), ids.end());
  return out;
}

std::vector<std::size_t> decoder_target(std::span<const std::size_t> ids) {
  std::vector<std::size_t> out(ids.begin(), ids.end());
  out.push_back(TokenVocab::kEos);
  return out;
}

PooledPair similarity_pools(Tape& tape, const SpeechTranslationModel& model, const AsrView& asr,
                            std::span<const std::size_t> text_ids) {
  const FrontEnd front = e2e_front_end(tape, model, asr, true);
  Var audio = model.mt.encode_states(tape, front.encoder_input);
  if (model.flags.pool_excludes_tag && audio.rows() > front.tag_rows) {
    audio = slice_rows(audio, front.tag_rows, audio.rows());
  }
  Var text = model.mt.encode(tape, text_ids);
  return {pool_encoder_states(audio, audio.rows()), pool_encoder_states(text, text.rows())};
}

std::vector<std::size_t> insert_fillers(std::span<const std::size_t> ids, std::size_t fill, Rng& rng) {
  std::vector<std::size_t> out;
  for (std::size_t id : ids) {
    out.push_back(id);
    const auto n = static_cast<std::size_t>(rng.between(0, static_cast<std::int64_t>(fill)));
    out.insert(out.end(), n, TokenVocab::kPad);
  }
  return out;
}

Var example_loss(Tape& tape, const SpeechTranslationModel& model, Task task, const SyntheticExample& ex,
                 const LossOptions& options) {
  switch (task) {
    case Task::kAsrCtc: {
      const auto out = model.asr.forward(tape, ex.features);
      try {
        return ctc_loss(out.log_probs, model.chars.encode(ex.transcript));
      } catch (const InfeasibleAlignmentError& e) {
        throw InfeasibleAlignmentError("example " + ex.id + ": " + e.what());
      }
    }
    case Task::kMtXent: {
      const auto src = transcript_to_source_ids(model.tokens, ex.transcript);
      const auto tgt = words_to_ids(model.tokens, ex.translation);
      const auto input = text_encoder_input(model, src, TokenVocab::kTargetTag);
      return sequence_xent(tape, model.mt, model.mt.encode(tape, input), model.decoder_start(), tgt);
    }
    case Task::kMtCopy: {
      // Monolingual reconstruction of both sides; the decoder start names the
      // language being produced.
      const bool tag = model.flags.decoder_starts_with_tag;
      const auto src = words_to_ids(model.tokens, ex.transcript);
      const auto tgt = words_to_ids(model.tokens, ex.translation);
      auto noisy = [&](const std::vector<std::size_t>& ids) {
        if (options.copy_fill == 0) return ids;
        if (options.noise == nullptr) throw ConfigError("copy_fill needs a noise stream");
        return insert_fillers(ids, options.copy_fill, *options.noise);
      };
      Var a = sequence_xent(tape, model.mt,
                            model.mt.encode(tape, text_encoder_input(model, noisy(src), TokenVocab::kSourceTag)),
                            tag ? TokenVocab::kSourceTag : TokenVocab::kBos, src);
      Var b = sequence_xent(tape, model.mt,
                            model.mt.encode(tape, text_encoder_input(model, noisy(tgt), TokenVocab::kTargetTag)),
                            tag ? TokenVocab::kTargetTag : TokenVocab::kBos, tgt);
      return add(a, b);
    }
    case Task::kMtMulti: {
      // Translation plus reconstruction of the source side; the output
      // language is named by the encoder tag or the decoder start.
      const auto src = transcript_to_source_ids(model.tokens, ex.transcript);
      const auto tgt = words_to_ids(model.tokens, ex.translation);
      const bool tag = model.flags.decoder_starts_with_tag;
      Var enc = model.mt.encode(tape, text_encoder_input(model, src, TokenVocab::kTargetTag));
      Var a = sequence_xent(tape, model.mt, enc, model.decoder_start(), tgt);
      if (model.flags.encoder_language_tag) enc = model.mt.encode(tape, text_encoder_input(model, src, TokenVocab::kSourceTag));
      Var b = sequence_xent(tape, model.mt, enc, tag ? TokenVocab::kSourceTag : TokenVocab::kBos, src);
      return add(a, b);
    }
    case Task::kE2eXent:
    case Task::kE2eSimilarity:
      return loss_from_view(tape, model, task, ex, run_asr(tape, model, ex.features), options.similarity_weight);
  }
  throw ConfigError("unhandled task");
}

void check_stage_data(const Stage& stage, const SpeechTranslationModel& model,
                      std::span<const SyntheticExample> data) {
  if (data.empty()) throw ConfigError("stage '" + stage.name + "' has no training data");
  for (const auto& ex : data) {
    const std::string where = "stage '" + stage.name + "', example " + ex.id + ": ";
    try {
      if (stage.task == Task::kAsrCtc || is_e2e(stage.task)) {
        if (ex.features.cols() != model.asr.feature_dim) {
          throw ConfigError("feature width " + std::to_string(ex.features.cols()) + " does not match the recognizer");
        }
        if (ex.features.rows() == 0) throw ConfigError("no frames");
      }
      if (stage.task == Task::kAsrCtc) {
        const auto labels = model.chars.encode(ex.transcript);
        if (ctc_min_frames(labels) > ex.features.rows()) {
          throw InfeasibleAlignmentError("transcript needs " + std::to_string(ctc_min_frames(labels)) +
                                         " frames, example has " + std::to_string(ex.features.rows()));
        }
      }
      if (stage.task != Task::kAsrCtc) {
        const auto tgt = words_to_ids(model.tokens, ex.translation);
        if (tgt.empty()) throw ConfigError("empty translation");
        for (std::size_t id : tgt) {
          if (model.tokens.kind(id) != TokenKind::kTarget) throw ConfigError("translation word outside the target lexicon");
        }
      }
      if (stage.task == Task::kMtCopy || stage.task == Task::kMtMulti || (stage.task == Task::kE2eSimilarity && model.flags.text_path_source)) {
        if (split_words(ex.transcript).empty()) throw ConfigError("empty transcript");
        words_to_ids(model.tokens, ex.transcript);
      }
    } catch (const InfeasibleAlignmentError& e) {
      throw InfeasibleAlignmentError(where + e.what());
    } catch (const Error& e) {
      throw ConfigError(where + e.what());
    }
  }
}

namespace {

TrainReport run_stage(const Stage& stage, std::size_t stage_index, SpeechTranslationModel& model,
                      std::span<const SyntheticExample> data, std::uint64_t seed) {
  const auto started = std::chrono::steady_clock::now();
  auto groups = model.groups();
  FreezeSpec::resolve(stage.freeze, model.group_names()).apply(model);

  TrainReport report;
  report.seed = seed;
  StageSummary summary;
  summary.name = stage.name;
  summary.task = to_string(stage.task);
  summary.freeze = to_string(stage.freeze);
  for (auto& g : groups) {
    if (g.trainable()) {
      summary.trainable.push_back({g.name(), g.count()});
      summary.trainable_count += g.count();
    }
  }
  if (stage.report) {
    report.census = summary.trainable;
    report.census_total = summary.trainable_count;
  }

  const auto idx = subset_indices(data.size(), stage.portion, seed);
  summary.examples = idx.size();
  auto params = all_params(groups);
  for (Parameter* p : params) p->zero_grad();

  if (summary.trainable_count > 0 && stage.steps > 0) {
    const bool cache_asr = is_e2e(stage.task) && !groups.front().trainable();
    std::vector<std::optional<CachedView>> views(cache_asr ? idx.size() : 0);
    AdamState adam;
    // Streams follow the stage name, so a stage replays identically whatever
    // plan it appears in.
    Rng rng(derive_seed(derive_seed(seed, kBatchSalt), fnv1a(stage.name)));
    Rng noise(derive_seed(derive_seed(seed, kNoiseSalt), fnv1a(stage.name)));
    const LossOptions options{stage.similarity_weight, stage.copy_fill, &noise};
    std::vector<std::size_t> order(idx.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::size_t cursor = order.size();
    const double inv_batch = 1.0 / static_cast<double>(stage.batch);

    for (std::size_t step = 0; step < stage.steps; ++step) {
      double total = 0.0;
      for (std::size_t b = 0; b < stage.batch; ++b) {
        if (cursor == order.size()) {
          rng.shuffle(order);
          cursor = 0;
        }
        const std::size_t k = order[cursor++];
        const SyntheticExample& ex = data[idx[k]];
        Tape tape;
        Var loss;
        if (cache_asr) {
          if (!views[k]) {
            Tape asr_tape;
            const AsrView v = run_asr(asr_tape, model, ex.features);
            views[k] = CachedView{v.hidden.value(), v.path};
          }
          const AsrView view{tape.constant(views[k]->hidden), views[k]->path};
          loss = loss_from_view(tape, model, stage.task, ex, view, stage.similarity_weight);
        } else {
          loss = example_loss(tape, model, stage.task, ex, options);
        }
        const double value = loss.value()(0, 0);
        if (!std::isfinite(value)) {
          throw NumericError("non-finite loss on example " + ex.id + " at step " + std::to_string(step));
        }
        total += value;
        tape.backward(loss);
      }
      for (Parameter* p : params) {
        if (!p->trainable) continue;
        for (double& g : p->grad.values()) g *= inv_batch;
      }
      if (stage.clip > 0.0) clip_grad_norm(params, stage.clip);
      adam_step(params, adam, stage.lr, step);
      for (Parameter* p : params) p->zero_grad();
      report.curve.push_back({stage_index, step, total * inv_batch});
    }
    summary.steps = stage.steps;
    summary.first_loss = report.curve.front().loss;
    summary.final_loss = report.curve.back().loss;
  }
  report.stages.push_back(std::move(summary));
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

}  // namespace

TrainReport run_plan(const StagePlan& plan, SpeechTranslationModel& model,
                     std::span<const SyntheticExample> data, std::uint64_t seed) {
  plan.validate();
  for (const auto& s : plan.stages) {
    FreezeSpec::resolve(s.freeze, model.group_names());
    if (s.task == Task::kE2eSimilarity && !(model.adapter && model.flags.use_adapter)) {
      throw ConfigError("stage '" + s.name + "' needs an adapter");
    }
    check_stage_data(s, model, data);
  }
  TrainReport report;
  report.seed = seed;
  for (std::size_t i = 0; i < plan.stages.size(); ++i) {
    TrainReport r = run_stage(plan.stages[i], i, model, data, seed);
    report.append(r);
  }
  return report;
}

TrainReport similarity_phase(SpeechTranslationModel& model, std::span<const SyntheticExample> data,
                             std::size_t steps, double lr, std::uint64_t seed, std::size_t batch) {
  if (!model.adapter || !model.flags.use_adapter) throw ConfigError("similarity training needs an adapter");
  Stage s;
  s.name = "similarity";
  s.task = Task::kE2eSimilarity;
  s.freeze = FreezePreset::kAdapterOnly;
  s.steps = steps;
  s.lr = lr;
  s.batch = batch;
  return run_plan(StagePlan{{s}}, model, data, seed);
}

}  // namespace stlab
