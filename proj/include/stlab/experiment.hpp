#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stlab/bridge.hpp"
#include "stlab/corpus.hpp"
#include "stlab/trainer.hpp"

namespace stlab {

struct StageSettings {
  std::size_t steps = 0;
  double lr = 3e-3;
  std::size_t batch = 8;
  double clip = 5.0;
};

// Out-of-domain text used to pre-train the translator: fresh sentences over
// the task lexicons with a different word-frequency profile.
struct PretrainCorpus {
  std::size_t n_examples = 1000;
  Range sentence_len_range{3, 6};
  double zipf_exponent = 0.5;
};

enum class Init { kPretrained, kFinetuned };
enum class SecondStage { kNone, kMtEncoder, kAdapter };

// Structure of the CUSTOM preset.
struct CustomPreset {
  bool cascaded = false;
  Init asr = Init::kPretrained;
  Init mt = Init::kPretrained;
  bool mt_encoder_only = false;
  SecondStage second = SecondStage::kNone;
  bool similarity = false;
};

// Everything a preset needs besides its name. Stage settings are shared by
// all presets that run the stage.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  CorpusConfig data;
  ModelConfig model;
  PipelineFlags flags;  // use_adapter is decided by the preset
  PretrainCorpus pretrain;
  StageSettings asr_finetune;
  StageSettings mt_pretrain;
  StageSettings mt_finetune;
  StageSettings mt_encoder_finetune;
  StageSettings e2e_encoder;
  StageSettings e2e_adapter;
  StageSettings similarity;
  CustomPreset custom;
  std::size_t max_len = 16;  // greedy decoding bound
};

// Parses a JSON document over the defaults. Unknown keys and wrong types are
// ConfigErrors naming the key path.
ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
std::string experiment_config_to_json(const ExperimentConfig& config);

// One row of the result tables, resolved against a config.
struct Preset {
  std::string name;   // C1..C5, E1..E7, SIM-0..SIM-100, CUSTOM
  std::string label;  // name, plus "@<percent>" for a portion override
  bool cascaded = false;
  Init asr = Init::kPretrained;
  Init mt = Init::kPretrained;
  bool mt_encoder_only = false;  // C5: text fine-tuning of the MT encoder only
  SecondStage second = SecondStage::kNone;
  bool similarity = false;
  double portion = 1.0;  // share of the end-to-end training data
  PipelineFlags flags;
  StagePlan plan;  // second-stage plan, empty when nothing is trained
};

// Preset names in table order.
const std::vector<std::string>& preset_names();

// Throws ConfigError listing the valid names for an unknown preset, and for a
// portion on a preset without end-to-end training.
Preset resolve_preset(const std::string& name, const ExperimentConfig& config,
                      std::optional<double> portion = std::nullopt);

// Human-readable plan: flags, initialization recipes, second stage and the
// metrics that will be reported. Pure function of its inputs.
std::string describe_preset(const Preset& preset, const ExperimentConfig& config);

struct ResultsRow {
  std::string preset;
  std::string task;    // ASR, MT or ST
  std::string metric;  // WER (percent), BLEU, SRC_FRAC
  double value = 0.0;
  std::size_t params = 0;
  std::uint64_t seed = 0;
  std::string timestamp;
};

// SOURCE_DATE_EPOCH when set, else the epoch, as ISO 8601 UTC. Reruns get
// identical CSV files.
std::string results_timestamp();

std::string results_csv(const std::vector<ResultsRow>& rows);
// Throws IoError naming the file and line.
std::vector<ResultsRow> parse_results_csv(const std::string& text, const std::string& source);

struct StMetrics {
  double bleu = 0.0;
  double source_fraction = 0.0;  // emitted tokens from the source lexicon
  std::size_t tokens = 0;
};

// Corpus-level WER in percent: total word edits over total reference words.
double asr_wer_percent(const SpeechTranslationModel& model, std::span<const SyntheticExample> test);
double mt_bleu(const SpeechTranslationModel& model, std::span<const SyntheticExample> test, std::size_t max_len);
StMetrics cascade_metrics(const SpeechTranslationModel& model, std::span<const SyntheticExample> test,
                          std::size_t max_len);
StMetrics e2e_metrics(const SpeechTranslationModel& model, std::span<const SyntheticExample> test,
                      std::size_t max_len);

// Greedy-path segment map of every test example, one "id<TAB>map" line each.
std::string dump_alignments(const SpeechTranslationModel& model, std::span<const SyntheticExample> test);

std::vector<ResultsRow> evaluate(const SpeechTranslationModel& model, bool cascaded, const std::string& label,
                                 std::size_t params, std::uint64_t seed, std::span<const SyntheticExample> test,
                                 std::size_t max_len);

struct PresetRun {
  Preset preset;
  SpeechTranslationModel model;
  TrainReport report;
  std::vector<ResultsRow> rows;
};

// Runs presets on one corpus. First-stage models (fine-tuned ASR,
// pre-trained and fine-tuned MT) are trained once per seed and reused.
class Experiment {
 public:
  Experiment(ExperimentConfig config, Corpus corpus);

  PresetRun run(const Preset& preset);
  const ExperimentConfig& config() const { return config_; }
  const Corpus& corpus() const { return corpus_; }

 private:
  struct Artifact {
    SpeechTranslationModel model;
    TrainReport report;
  };
  const Artifact& artifact(const std::string& name);

  ExperimentConfig config_;
  Corpus corpus_;
  std::map<std::string, Artifact> cache_;
};

// Markdown and CSV renderings of the cascaded, model and loss tables. Cells
// without a result are "-". Throws ConfigError when two rows share
// (preset, task, metric), citing both sources.
struct SourcedRow {
  ResultsRow row;
  std::string source;
};
struct Tables {
  std::string markdown;
  std::string csv;
};
Tables build_tables(const std::vector<SourcedRow>& rows);

}  // namespace stlab
