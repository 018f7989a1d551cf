#include "stlab/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "stlab/error.hpp"
#include "stlab/losses.hpp"
#include "stlab/rng.hpp"

namespace stlab {

using nlohmann::json;

namespace {

// Walks one JSON object, consuming known keys. Whatever is left afterwards is
// an unknown key.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config key '" + where() + "' must be an object");
    for (const auto& [k, v] : j_.items()) left_.insert(k);
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!j_.contains(key)) return;
    left_.erase(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key '" + join(key) + "' has the wrong type");
    }
  }

  void range(const std::string& key, Range& out) {
    if (!j_.contains(key)) return;
    std::vector<std::size_t> v;
    get(key, v);
    if (v.size() != 2) throw ConfigError("config key '" + join(key) + "' must be a [lo, hi] pair");
    out = {v[0], v[1]};
  }

  void object(const std::string& key, const std::function<void(Reader&)>& body) {
    if (!j_.contains(key)) return;
    left_.erase(key);
    Reader sub(j_.at(key), join(key));
    body(sub);
    sub.finish();
  }

  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    if (!left_.empty()) throw ConfigError("unknown config key '" + join(*left_.begin()) + "'");
  }

 private:
  std::string where() const { return path_.empty() ? "<root>" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> left_;
};

Init init_from(const std::string& s, const std::string& key) {
  if (s == "PT") return Init::kPretrained;
  if (s == "FT") return Init::kFinetuned;
  throw ConfigError("config key '" + key + "' must be \"PT\" or \"FT\"");
}

std::string init_name(Init i) { return i == Init::kPretrained ? "PT" : "FT"; }

SecondStage second_from(const std::string& s, const std::string& key) {
  if (s == "none") return SecondStage::kNone;
  if (s == "mt_encoder") return SecondStage::kMtEncoder;
  if (s == "adapter") return SecondStage::kAdapter;
  throw ConfigError("config key '" + key + "' must be none, mt_encoder or adapter");
}

std::string second_name(SecondStage s) {
  switch (s) {
    case SecondStage::kNone: return "none";
    case SecondStage::kMtEncoder: return "mt_encoder";
    case SecondStage::kAdapter: return "adapter";
  }
  return "?";
}

void read_stage(Reader& r, const std::string& key, StageSettings& s) {
  r.object(key, [&](Reader& o) {
    o.get("steps", s.steps);
    o.get("lr", s.lr);
    o.get("batch", s.batch);
    o.get("clip", s.clip);
  });
}

json stage_json(const StageSettings& s) {
  return json{{"steps", s.steps}, {"lr", s.lr}, {"batch", s.batch}, {"clip", s.clip}};
}

std::string format(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

std::string percent_label(double portion) { return format("%g", portion * 100.0); }

const std::vector<std::string> kPresetNames = {"C1",     "C2",     "C3",     "C4",     "C5",      "E1",
                                               "E2",     "E3",     "E4",     "E5",     "E6",      "E7",
                                               "SIM-0",  "SIM-10", "SIM-15", "SIM-20", "SIM-100", "CUSTOM"};

Stage make_stage(const std::string& name, Task task, FreezePreset freeze, const StageSettings& s,
                 double portion = 1.0) {
  Stage st;
  st.name = name;
  st.task = task;
  st.freeze = freeze;
  st.portion = portion;
  st.steps = s.steps;
  st.lr = s.lr;
  st.batch = s.batch;
  st.clip = s.clip;
  return st;
}

std::string stage_line(const Stage& s) {
  std::ostringstream out;
  out << s.name << ": task=" << to_string(s.task) << " freeze=" << to_string(s.freeze) << " steps=" << s.steps
      << " lr=" << format("%g", s.lr) << " batch=" << s.batch << " clip=" << format("%g", s.clip)
      << " portion=" << format("%g", s.portion);
  return out.str();
}

std::string flags_line(const PipelineFlags& f) {
  auto on = [](bool b) { return b ? "on" : "off"; };
  std::ostringstream out;
  out << "compression=" << on(f.use_compression) << " adapter=" << on(f.use_adapter)
      << " target_forcing=" << on(f.use_target_forcing) << " drop_blank_segments=" << on(f.drop_blank_segments)
      << " decoder_starts_with_tag=" << on(f.decoder_starts_with_tag)
      << " encoder_language_tag=" << on(f.encoder_language_tag) << " pool_excludes_tag=" << on(f.pool_excludes_tag)
      << " text_path_language=" << (f.text_path_source ? "source" : "target");
  return out.str();
}

std::size_t group_count(SpeechTranslationModel& model, const std::vector<std::string>& names) {
  std::size_t n = 0;
  for (auto& g : model.groups()) {
    for (const auto& name : names) {
      if (g.name() == name) n += g.count();
    }
  }
  return n;
}

std::vector<GroupCount> group_counts(SpeechTranslationModel& model, const std::vector<std::string>& names) {
  std::vector<GroupCount> out;
  for (auto& g : model.groups()) {
    for (const auto& name : names) {
      if (g.name() == name) out.push_back({g.name(), g.count()});
    }
  }
  return out;
}

const std::vector<std::string> kMtGroups = {"mt.embedding", "mt.encoder", "mt.decoder"};

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  Reader r(doc, "");
  r.get("seed", c.seed);
  r.object("data", [&](Reader& o) {
    o.get("n_examples", c.data.n_examples);
    o.get("n_test", c.data.n_test);
    o.get("seed", c.data.seed);
    o.get("n_words", c.data.n_words);
    o.range("word_len_range", c.data.word_len_range);
    o.range("sentence_len_range", c.data.sentence_len_range);
    o.range("dur_range", c.data.dur_range);
    o.get("noise_sigma", c.data.noise_sigma);
    o.get("alphabet", c.data.alphabet);
    o.get("zipf_exponent", c.data.zipf_exponent);
  });
  r.object("model", [&](Reader& o) {
    o.get("hidden", c.model.hidden);
    o.get("asr_layers", c.model.asr_layers);
    o.get("mt_encoder_layers", c.model.mt_encoder_layers);
    std::string kind = to_string(c.model.mt_encoder);
    o.get("mt_encoder", kind);
    c.model.mt_encoder = encoder_kind_from_string(kind);
    o.get("adapter_layers", c.model.adapter_layers);
    o.get("tie_output", c.model.tie_output);
    o.get("init_scale", c.model.init_scale);
  });
  r.object("flags", [&](Reader& o) {
    o.get("use_compression", c.flags.use_compression);
    o.get("use_target_forcing", c.flags.use_target_forcing);
    o.get("drop_blank_segments", c.flags.drop_blank_segments);
    o.get("decoder_starts_with_tag", c.flags.decoder_starts_with_tag);
    o.get("encoder_language_tag", c.flags.encoder_language_tag);
    o.get("pool_excludes_tag", c.flags.pool_excludes_tag);
    std::string lang = c.flags.text_path_source ? "source" : "target";
    o.get("text_path_language", lang);
    if (lang != "source" && lang != "target") {
      throw ConfigError("config key 'flags.text_path_language' must be \"source\" or \"target\"");
    }
    c.flags.text_path_source = lang == "source";
  });
  r.object("pretrain", [&](Reader& o) {
    o.get("n_examples", c.pretrain.n_examples);
    o.range("sentence_len_range", c.pretrain.sentence_len_range);
    o.get("zipf_exponent", c.pretrain.zipf_exponent);
  });
  r.object("stages", [&](Reader& o) {
    read_stage(o, "asr_finetune", c.asr_finetune);
    read_stage(o, "mt_pretrain", c.mt_pretrain);
    read_stage(o, "mt_finetune", c.mt_finetune);
    read_stage(o, "mt_encoder_finetune", c.mt_encoder_finetune);
    read_stage(o, "e2e_encoder", c.e2e_encoder);
    read_stage(o, "e2e_adapter", c.e2e_adapter);
    read_stage(o, "similarity", c.similarity);
  });
  r.object("custom", [&](Reader& o) {
    o.get("cascaded", c.custom.cascaded);
    std::string s = init_name(c.custom.asr);
    o.get("asr", s);
    c.custom.asr = init_from(s, "custom.asr");
    s = init_name(c.custom.mt);
    o.get("mt", s);
    c.custom.mt = init_from(s, "custom.mt");
    o.get("mt_encoder_only", c.custom.mt_encoder_only);
    s = second_name(c.custom.second);
    o.get("second_stage", s);
    c.custom.second = second_from(s, "custom.second_stage");
    o.get("similarity", c.custom.similarity);
  });
  r.object("eval", [&](Reader& o) { o.get("max_len", c.max_len); });
  r.finish();
  c.data.validate();
  if (c.max_len == 0) throw ConfigError("config key 'eval.max_len' must be positive");
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_experiment_config(buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string experiment_config_to_json(const ExperimentConfig& c) {
  const auto& d = c.data;
  const auto& f = c.flags;
  json doc{
      {"seed", c.seed},
      {"data",
       {{"n_examples", d.n_examples},
        {"n_test", d.n_test},
        {"seed", d.seed},
        {"n_words", d.n_words},
        {"word_len_range", {d.word_len_range.first, d.word_len_range.second}},
        {"sentence_len_range", {d.sentence_len_range.first, d.sentence_len_range.second}},
        {"dur_range", {d.dur_range.first, d.dur_range.second}},
        {"noise_sigma", d.noise_sigma},
        {"alphabet", d.alphabet},
        {"zipf_exponent", d.zipf_exponent}}},
      {"model",
       {{"hidden", c.model.hidden},
        {"asr_layers", c.model.asr_layers},
        {"mt_encoder_layers", c.model.mt_encoder_layers},
        {"mt_encoder", to_string(c.model.mt_encoder)},
        {"adapter_layers", c.model.adapter_layers},
        {"tie_output", c.model.tie_output},
        {"init_scale", c.model.init_scale}}},
      {"flags",
       {{"use_compression", f.use_compression},
        {"use_target_forcing", f.use_target_forcing},
        {"drop_blank_segments", f.drop_blank_segments},
        {"decoder_starts_with_tag", f.decoder_starts_with_tag},
        {"encoder_language_tag", f.encoder_language_tag},
        {"pool_excludes_tag", f.pool_excludes_tag},
        {"text_path_language", f.text_path_source ? "source" : "target"}}},
      {"pretrain",
       {{"n_examples", c.pretrain.n_examples},
        {"sentence_len_range", {c.pretrain.sentence_len_range.first, c.pretrain.sentence_len_range.second}},
        {"zipf_exponent", c.pretrain.zipf_exponent}}},
      {"stages",
       {{"asr_finetune", stage_json(c.asr_finetune)},
        {"mt_pretrain", stage_json(c.mt_pretrain)},
        {"mt_finetune", stage_json(c.mt_finetune)},
        {"mt_encoder_finetune", stage_json(c.mt_encoder_finetune)},
        {"e2e_encoder", stage_json(c.e2e_encoder)},
        {"e2e_adapter", stage_json(c.e2e_adapter)},
        {"similarity", stage_json(c.similarity)}}},
      {"custom",
       {{"cascaded", c.custom.cascaded},
        {"asr", init_name(c.custom.asr)},
        {"mt", init_name(c.custom.mt)},
        {"mt_encoder_only", c.custom.mt_encoder_only},
        {"second_stage", second_name(c.custom.second)},
        {"similarity", c.custom.similarity}}},
      {"eval", {{"max_len", c.max_len}}}};
  return doc.dump(2) + "\n";
}

const std::vector<std::string>& preset_names() { return kPresetNames; }

Preset resolve_preset(const std::string& name, const ExperimentConfig& config, std::optional<double> portion) {
  Preset p;
  p.name = name;
  const Init PT = Init::kPretrained;
  const Init FT = Init::kFinetuned;
  auto cascade = [&](Init asr, Init mt, bool encoder_only) {
    p.cascaded = true;
    p.asr = asr;
    p.mt = mt;
    p.mt_encoder_only = encoder_only;
  };
  auto e2e = [&](Init asr, Init mt, SecondStage second) {
    p.asr = asr;
    p.mt = mt;
    p.second = second;
  };
  std::optional<double> fixed_portion;
  if (name == "C1") cascade(PT, PT, false);
  else if (name == "C2") cascade(FT, PT, false);
  else if (name == "C3") cascade(PT, FT, false);
  else if (name == "C4") cascade(FT, FT, false);
  else if (name == "C5") cascade(FT, PT, true);
  else if (name == "E1") e2e(PT, PT, SecondStage::kNone);
  else if (name == "E2") e2e(FT, PT, SecondStage::kNone);
  else if (name == "E3") e2e(PT, FT, SecondStage::kNone);
  else if (name == "E4") e2e(FT, PT, SecondStage::kMtEncoder);
  else if (name == "E5") e2e(PT, PT, SecondStage::kMtEncoder);
  else if (name == "E6") e2e(FT, FT, SecondStage::kMtEncoder);
  else if (name == "E7") e2e(FT, PT, SecondStage::kAdapter);
  else if (name.rfind("SIM-", 0) == 0 &&
           std::find(kPresetNames.begin(), kPresetNames.end(), name) != kPresetNames.end()) {
    const int pct = std::stoi(name.substr(4));
    e2e(FT, PT, pct == 0 ? SecondStage::kNone : SecondStage::kAdapter);
    p.similarity = true;
    fixed_portion = pct == 0 ? 1.0 : pct / 100.0;
  } else if (name == "CUSTOM") {
    const CustomPreset& c = config.custom;
    p.cascaded = c.cascaded;
    p.asr = c.asr;
    p.mt = c.mt;
    p.mt_encoder_only = c.mt_encoder_only;
    p.second = c.second;
    p.similarity = c.similarity;
    if (c.cascaded && (c.second != SecondStage::kNone || c.similarity)) {
      throw ConfigError("a cascaded CUSTOM preset cannot have end-to-end training");
    }
  } else {
    std::string valid;
    for (const auto& n : kPresetNames) valid += (valid.empty() ? "" : ", ") + n;
    throw ConfigError("unknown preset '" + name + "'; valid presets: " + valid);
  }

  p.portion = fixed_portion.value_or(1.0);
  p.label = name;
  if (portion) {
    if (fixed_portion) throw ConfigError("preset " + name + " fixes its own data portion");
    if (p.second == SecondStage::kNone) {
      throw ConfigError("preset " + name + " has no end-to-end training to take a portion of");
    }
    if (!(*portion > 0.0 && *portion <= 1.0)) throw ConfigError("portion must be in (0, 1]");
    p.portion = *portion;
    if (*portion != 1.0) p.label = name + "@" + percent_label(*portion);
  }

  p.flags = config.flags;
  p.flags.use_adapter = p.second == SecondStage::kAdapter || p.similarity;
  if (p.similarity) {
    p.plan.stages.push_back(make_stage("similarity", Task::kE2eSimilarity, FreezePreset::kAdapterOnly,
                                       config.similarity));
  }
  if (p.second == SecondStage::kMtEncoder) {
    p.plan.stages.push_back(make_stage("e2e_encoder", Task::kE2eXent, FreezePreset::kMtEncoderOnly,
                                       config.e2e_encoder, p.portion));
  } else if (p.second == SecondStage::kAdapter) {
    p.plan.stages.push_back(make_stage("e2e_adapter", Task::kE2eXent, FreezePreset::kAdapterOnly,
                                       config.e2e_adapter, p.portion));
  }
  return p;
}

std::string describe_preset(const Preset& p, const ExperimentConfig& c) {
  std::ostringstream out;
  out << "preset " << p.label << " (" << (p.cascaded ? "cascaded" : "end-to-end") << ", seed " << c.seed << ")\n";
  out << "data: " << c.data.n_examples - c.data.n_test << " train / " << c.data.n_test << " test, "
      << c.data.n_words << " words, sentence length " << c.data.sentence_len_range.first << "-"
      << c.data.sentence_len_range.second << ", noise " << format("%g", c.data.noise_sigma) << "\n";
  out << "model: hidden " << c.model.hidden << ", asr layers " << c.model.asr_layers << ", mt encoder "
      << to_string(c.model.mt_encoder) << " x" << c.model.mt_encoder_layers << ", adapter layers "
      << c.model.adapter_layers << ", init scale " << format("%g", c.model.init_scale) << "\n";
  out << "flags: " << flags_line(p.flags) << "\n";
  auto stage = [&](const std::string& name, Task task, FreezePreset freeze, const StageSettings& s) {
    return stage_line(make_stage(name, task, freeze, s));
  };
  out << "asr init: " << init_name(p.asr);
  if (p.asr == Init::kFinetuned) out << " <- " << stage("asr_finetune", Task::kAsrCtc, FreezePreset::kAsrOnly, c.asr_finetune);
  out << "\n";
  const std::string pretrain = stage("mt_pretrain", Task::kMtMulti, FreezePreset::kMtOnly, c.mt_pretrain) +
                               " on " + std::to_string(c.pretrain.n_examples) + " out-of-domain pairs (length " +
                               std::to_string(c.pretrain.sentence_len_range.first) + "-" +
                               std::to_string(c.pretrain.sentence_len_range.second) + ", zipf " +
                               format("%g", c.pretrain.zipf_exponent) + ")";
  out << "mt init: " << init_name(p.mt) << " <- " << pretrain;
  if (p.mt == Init::kFinetuned) {
    out << " -> " << stage("mt_finetune", Task::kMtXent, FreezePreset::kMtOnly, c.mt_finetune);
  }
  if (p.mt_encoder_only) {
    out << " -> " << stage("mt_encoder_finetune", Task::kMtXent, FreezePreset::kMtEncoderOnly, c.mt_encoder_finetune);
  }
  out << "\n";
  if (p.plan.stages.empty()) {
    out << "second stage: none\n";
  } else {
    for (const auto& s : p.plan.stages) out << "second stage: " << stage_line(s) << "\n";
  }
  out << "eval: " << (p.cascaded ? "ASR WER, MT BLEU, ST BLEU (cascade)" : "ST BLEU, ST SRC_FRAC (end-to-end)")
      << ", max_len " << c.max_len << "\n";
  return out.str();
}

std::string results_timestamp() {
  std::time_t t = 0;
  if (const char* env = std::getenv("SOURCE_DATE_EPOCH")) {
    char* end = nullptr;
    const long long v = std::strtoll(env, &end, 10);
    if (end == env || *end != '\0' || v < 0) throw ConfigError("SOURCE_DATE_EPOCH is not a non-negative integer");
    t = static_cast<std::time_t>(v);
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace {

const char* const kCsvHeader = "preset,task,metric,value,params,seed,timestamp";

}  // namespace

std::string results_csv(const std::vector<ResultsRow>& rows) {
  std::ostringstream out;
  out << kCsvHeader << "\n";
  for (const auto& r : rows) {
    out << r.preset << ',' << r.task << ',' << r.metric << ',' << format("%.4f", r.value) << ',' << r.params << ','
        << r.seed << ',' << r.timestamp << "\n";
  }
  return out.str();
}

std::vector<ResultsRow> parse_results_csv(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  auto fail = [&](const std::string& msg) { return IoError(source + ":" + std::to_string(n) + ": " + msg); };
  std::vector<ResultsRow> rows;
  while (std::getline(in, line)) {
    ++n;
    if (n == 1) {
      if (line != kCsvHeader) throw fail("unexpected header '" + line + "'");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 7) throw fail("expected 7 fields, found " + std::to_string(f.size()));
    ResultsRow r;
    r.preset = f[0];
    r.task = f[1];
    r.metric = f[2];
    try {
      std::size_t used = 0;
      r.value = std::stod(f[3], &used);
      if (used != f[3].size()) throw std::invalid_argument("value");
      r.params = std::stoull(f[4], &used);
      if (used != f[4].size()) throw std::invalid_argument("params");
      r.seed = std::stoull(f[5], &used);
      if (used != f[5].size()) throw std::invalid_argument("seed");
    } catch (const std::exception&) {
      throw fail("malformed number");
    }
    r.timestamp = f[6];
    rows.push_back(std::move(r));
  }
  if (n == 0) throw fail("empty results file");
  return rows;
}

double asr_wer_percent(const SpeechTranslationModel& model, std::span<const SyntheticExample> test) {
  std::size_t edits = 0, words = 0;
  for (const auto& ex : test) {
    const auto ref = split_words(ex.transcript);
    const auto hyp = split_words(recognize(model, ex.features));
    edits += edit_distance(ref, hyp);
    words += ref.size();
  }
  if (words == 0) throw DomainError("WER needs at least one reference word");
  return 100.0 * static_cast<double>(edits) / static_cast<double>(words);
}

namespace {

template <typename Translate>
StMetrics score(const SpeechTranslationModel& model, std::span<const SyntheticExample> test, Translate translate) {
  std::vector<std::vector<std::string>> refs, hyps;
  StMetrics m;
  std::size_t source = 0;
  for (const auto& ex : test) {
    const std::vector<std::size_t> ids = translate(ex);
    for (std::size_t id : ids) {
      ++m.tokens;
      if (model.tokens.kind(id) == TokenKind::kSource) ++source;
    }
    hyps.push_back(model.tokens.decode_words(ids));
    refs.push_back(split_words(ex.translation));
  }
  m.bleu = bleu(refs, hyps);
  m.source_fraction = m.tokens ? static_cast<double>(source) / static_cast<double>(m.tokens) : 0.0;
  return m;
}

}  // namespace

double mt_bleu(const SpeechTranslationModel& model, std::span<const SyntheticExample> test, std::size_t max_len) {
  return score(model, test, [&](const SyntheticExample& ex) {
           return translate_text(model, transcript_to_source_ids(model.tokens, ex.transcript), max_len);
         }).bleu;
}

StMetrics cascade_metrics(const SpeechTranslationModel& model, std::span<const SyntheticExample> test,
                          std::size_t max_len) {
  return score(model, test,
               [&](const SyntheticExample& ex) { return cascade_translate(model, ex.features, max_len).translation; });
}

StMetrics e2e_metrics(const SpeechTranslationModel& model, std::span<const SyntheticExample> test,
                      std::size_t max_len) {
  return score(model, test, [&](const SyntheticExample& ex) { return e2e_translate(model, ex.features, max_len); });
}

std::string dump_alignments(const SpeechTranslationModel& model, std::span<const SyntheticExample> test) {
  std::ostringstream out;
  for (const auto& ex : test) {
    Tape tape;
    const AsrView view = run_asr(tape, model, ex.features);
    out << ex.id << '\t' << segment(view.path).to_string() << '\n';
  }
  return out.str();
}

std::vector<ResultsRow> evaluate(const SpeechTranslationModel& model, bool cascaded, const std::string& label,
                                 std::size_t params, std::uint64_t seed, std::span<const SyntheticExample> test,
                                 std::size_t max_len) {
  const std::string stamp = results_timestamp();
  auto row = [&](const std::string& task, const std::string& metric, double value) {
    return ResultsRow{label, task, metric, value, params, seed, stamp};
  };
  std::vector<ResultsRow> rows;
  if (cascaded) {
    rows.push_back(row("ASR", "WER", asr_wer_percent(model, test)));
    rows.push_back(row("MT", "BLEU", mt_bleu(model, test, max_len)));
    rows.push_back(row("ST", "BLEU", cascade_metrics(model, test, max_len).bleu));
  } else {
    const StMetrics m = e2e_metrics(model, test, max_len);
    rows.push_back(row("ST", "BLEU", m.bleu));
    rows.push_back(row("ST", "SRC_FRAC", m.source_fraction));
  }
  return rows;
}

Experiment::Experiment(ExperimentConfig config, Corpus corpus)
    : config_(std::move(config)), corpus_(std::move(corpus)) {}

const Experiment::Artifact& Experiment::artifact(const std::string& name) {
  if (auto it = cache_.find(name); it != cache_.end()) return it->second;
  const std::uint64_t seed = config_.seed;
  auto fresh = [&] {
    PipelineFlags flags = config_.flags;
    flags.use_adapter = false;
    return SpeechTranslationModel::create(config_.model, flags, corpus_.feature_dim(), corpus_.char_vocab(),
                                          corpus_.token_vocab(), seed);
  };
  Artifact a;
  if (name == "asr_finetune") {
    a.model = fresh();
    const Stage s = make_stage(name, Task::kAsrCtc, FreezePreset::kAsrOnly, config_.asr_finetune);
    a.report = run_plan(StagePlan{{s}}, a.model, corpus_.train(), seed);
  } else if (name == "mt_pretrain") {
    CorpusConfig oc = corpus_.config;
    oc.n_examples = config_.pretrain.n_examples;
    oc.n_test = 0;
    oc.sentence_len_range = config_.pretrain.sentence_len_range;
    oc.zipf_exponent = config_.pretrain.zipf_exponent;
    oc.seed = derive_seed(seed, fnv1a(name));
    const Corpus text = resample_corpus(corpus_, oc);
    a.model = fresh();
    const Stage s = make_stage(name, Task::kMtMulti, FreezePreset::kMtOnly, config_.mt_pretrain);
    a.report = run_plan(StagePlan{{s}}, a.model, text.train(), seed);
  } else if (name == "mt_finetune" || name == "mt_encoder_finetune") {
    const Artifact& base = artifact("mt_pretrain");
    a.model = base.model;
    a.report = base.report;
    const bool encoder = name == "mt_encoder_finetune";
    const Stage s = make_stage(name, Task::kMtXent, encoder ? FreezePreset::kMtEncoderOnly : FreezePreset::kMtOnly,
                               encoder ? config_.mt_encoder_finetune : config_.mt_finetune);
    a.report.append(run_plan(StagePlan{{s}}, a.model, corpus_.train(), seed));
  } else {
    throw ConfigError("unknown first-stage artifact '" + name + "'");
  }
  return cache_.emplace(name, std::move(a)).first->second;
}

PresetRun Experiment::run(const Preset& preset) {
  const std::uint64_t seed = config_.seed;
  PresetRun out{preset,
                SpeechTranslationModel::create(config_.model, preset.flags, corpus_.feature_dim(),
                                               corpus_.char_vocab(), corpus_.token_vocab(), seed),
                {},
                {}};
  SpeechTranslationModel& model = out.model;
  out.report.seed = seed;
  auto take = [&](const Artifact& a) {
    TrainReport r = a.report;
    r.census.clear();
    r.census_total = 0;
    out.report.append(r);
  };
  if (preset.asr == Init::kFinetuned) {
    const Artifact& a = artifact("asr_finetune");
    model.asr = a.model.asr;
    take(a);
  }
  const std::string mt_source = preset.mt_encoder_only        ? "mt_encoder_finetune"
                                : preset.mt == Init::kFinetuned ? "mt_finetune"
                                                                : "mt_pretrain";
  {
    const Artifact& a = artifact(mt_source);
    model.mt = a.model.mt;
    take(a);
  }
  model.validate();

  if (preset.cascaded) {
    // The fine-tuned parameter count of a cascade: the recognizer when it
    // was fine-tuned, plus the translator or only its encoder.
    std::vector<std::string> tuned;
    if (preset.asr == Init::kFinetuned && !preset.mt_encoder_only) tuned.push_back("asr");
    if (preset.mt_encoder_only) {
      tuned.push_back("mt.encoder");
    } else if (preset.mt == Init::kFinetuned) {
      tuned.insert(tuned.end(), kMtGroups.begin(), kMtGroups.end());
    }
    out.report.census = group_counts(model, tuned);
    out.report.census_total = group_count(model, tuned);
  }
  if (!preset.plan.stages.empty()) {
    out.report.append(run_plan(preset.plan, model, corpus_.train(), seed));
  }
  out.rows = evaluate(model, preset.cascaded, preset.label, out.report.census_total, seed, corpus_.test(),
                      config_.max_len);
  for (const auto& r : out.rows) out.report.metrics[r.task + "." + r.metric] = r.value;
  return out;
}

namespace {

struct Cell {
  std::string preset, task, metric;
};

std::string cell_text(const std::map<std::tuple<std::string, std::string, std::string>, const SourcedRow*>& index,
                      const Cell& c, bool params = false) {
  const auto it = index.find({c.preset, c.task, c.metric});
  if (it == index.end()) return "-";
  if (params) return it->second->row.params == 0 ? "-" : std::to_string(it->second->row.params);
  return format("%.2f", it->second->row.value);
}

std::string md_row(const std::vector<std::string>& cells) {
  std::string s = "|";
  for (const auto& c : cells) s += " " + c + " |";
  return s + "\n";
}

std::string md_rule(std::size_t n) {
  std::string s = "|";
  for (std::size_t i = 0; i < n; ++i) s += " --- |";
  return s + "\n";
}

}  // namespace

Tables build_tables(const std::vector<SourcedRow>& rows) {
  std::map<std::tuple<std::string, std::string, std::string>, const SourcedRow*> index;
  for (const auto& r : rows) {
    const auto key = std::make_tuple(r.row.preset, r.row.task, r.row.metric);
    const auto [it, inserted] = index.emplace(key, &r);
    if (!inserted) {
      throw ConfigError("duplicate result " + r.row.preset + "/" + r.row.task + "/" + r.row.metric + " in " +
                        it->second->source + " and " + r.source);
    }
  }
  std::ostringstream md, csv;
  csv << "table,row,column,value\n";
  auto emit = [&](const std::string& table, const std::string& title, const std::vector<std::string>& header,
                  const std::vector<std::vector<std::string>>& body) {
    md << "### " << title << "\n\n" << md_row(header) << md_rule(header.size());
    for (const auto& r : body) {
      md << md_row(r);
      for (std::size_t i = 1; i < r.size(); ++i) csv << table << ',' << r[0] << ',' << header[i] << ',' << r[i] << "\n";
    }
    md << "\n";
  };

  const std::vector<std::pair<std::string, std::string>> cascaded = {{"C1", "Baseline"},
                                                                     {"C2", "FT ASR"},
                                                                     {"C3", "FT MT"},
                                                                     {"C4", "FT both"},
                                                                     {"C5", "FT MT encoder"}};
  std::vector<std::vector<std::string>> body;
  for (const auto& [p, title] : cascaded) {
    body.push_back({p + " " + title, cell_text(index, {p, "ASR", "WER"}), cell_text(index, {p, "MT", "BLEU"}),
                    cell_text(index, {p, "ST", "BLEU"}), cell_text(index, {p, "ST", "BLEU"}, true)});
  }
  emit("cascaded", "Cascaded", {"Experiment", "ASR WER", "MT BLEU", "ST BLEU", "#params"}, body);

  struct E {
    const char* name;
    const char* asr;
    const char* mt;
    const char* enc;
    const char* adapter;
  };
  const E e2e[] = {{"E1", "PT", "PT", "-", "-"},   {"E2", "FT", "PT", "-", "-"},   {"E3", "PT", "FT", "-", "-"},
                   {"E4", "FT", "PT", "Yes", "-"}, {"E5", "PT", "PT", "Yes", "-"}, {"E6", "FT", "FT", "Yes", "-"},
                   {"E7", "FT", "PT", "-", "Yes"}};
  body.clear();
  for (const auto& e : e2e) {
    body.push_back({e.name, e.asr, e.mt, e.enc, e.adapter, cell_text(index, {e.name, "ST", "BLEU"}, true),
                    cell_text(index, {e.name, "ST", "BLEU"}), cell_text(index, {e.name, "ST", "SRC_FRAC"})});
  }
  emit("model", "End-to-end", {"Experiment", "ASR", "MT", "MT encoder", "Adapter", "#params", "ST BLEU", "Source tokens"},
       body);

  const std::vector<std::string> columns = {"Without", "10%", "15%", "20%", "All"};
  const std::vector<std::string> original = {"", "E7@10", "E7@15", "E7@20", "E7"};
  const std::vector<std::string> similarity = {"SIM-0", "SIM-10", "SIM-15", "SIM-20", "SIM-100"};
  body.clear();
  std::vector<std::string> r1{"Original loss"}, r2{"Similarity loss"};
  for (std::size_t i = 0; i < columns.size(); ++i) {
    r1.push_back(original[i].empty() ? "-" : cell_text(index, {original[i], "ST", "BLEU"}));
    r2.push_back(cell_text(index, {similarity[i], "ST", "BLEU"}));
  }
  body = {r1, r2};
  std::vector<std::string> header{"Experiment"};
  header.insert(header.end(), columns.begin(), columns.end());
  emit("loss", "Similarity loss", header, body);
  return {md.str(), csv.str()};
}

}  // namespace stlab
