#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stlab/bridge.hpp"
#include "stlab/corpus.hpp"

namespace stlab {

enum class Task { kAsrCtc, kMtXent, kMtCopy, kMtMulti, kE2eXent, kE2eSimilarity };

std::string to_string(Task task);
Task task_from_string(const std::string& name);  // throws ConfigError

enum class FreezePreset { kAll, kAsrOnly, kMtOnly, kMtEncoderOnly, kAdapterOnly, kNone };

std::string to_string(FreezePreset preset);
FreezePreset freeze_preset_from_string(const std::string& name);  // throws ConfigError

// Trainable flag per parameter group.
class FreezeSpec {
 public:
  FreezeSpec() = default;
  explicit FreezeSpec(std::map<std::string, bool> trainable) : trainable_(std::move(trainable)) {}

  // Resolves a named preset against the groups a model actually has. A preset
  // that names a missing group (ADAPTER_ONLY without an adapter) is a ConfigError.
  static FreezeSpec resolve(FreezePreset preset, const std::vector<std::string>& group_names);

  // Sets the trainable flag of every group. Throws ConfigError unless the
  // spec covers exactly the model's groups.
  void apply(SpeechTranslationModel& model) const;

  const std::map<std::string, bool>& trainable() const { return trainable_; }

 private:
  std::map<std::string, bool> trainable_;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First and second moment estimates for one parameter list.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t t = 0;
};

// One Adam update over `params`. Frozen parameters are skipped without being
// read or written. Throws NumericError naming `step` on a non-finite gradient.
void adam_step(std::span<Parameter* const> params, AdamState& state, double lr, std::size_t step,
               const AdamConfig& config = {});

// Scales trainable gradients so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_grad_norm(std::span<Parameter* const> params, double max_norm);

struct Stage {
  std::string name;
  Task task = Task::kAsrCtc;
  FreezePreset freeze = FreezePreset::kAll;
  double portion = 1.0;
  std::size_t steps = 0;
  double lr = 1e-3;
  std::size_t batch = 8;
  double clip = 5.0;  // global gradient norm bound, 0 disables
  // Adds weight * similarity_loss to each e2e_xent example loss.
  double similarity_weight = 0.0;
  // mt_copy denoising: up to this many <pad> fillers are inserted after each
  // input word; the decoder still reconstructs the clean sentence.
  std::size_t copy_fill = 0;
  // Counted in the trainable-parameter census.
  bool report = true;
};

struct StagePlan {
  std::vector<Stage> stages;

  // Throws ConfigError for an empty plan, a portion outside (0, 1], a zero
  // batch, a non-positive rate, or a similarity stage not frozen to ADAPTER_ONLY.
  void validate() const;
};

struct StepRecord {
  std::size_t stage = 0;
  std::size_t step = 0;
  double loss = 0.0;
};

struct GroupCount {
  std::string group;
  std::size_t count = 0;
  bool operator==(const GroupCount&) const = default;
};

struct StageSummary {
  std::string name;
  std::string task;
  std::string freeze;
  std::size_t steps = 0;
  std::size_t examples = 0;
  std::vector<GroupCount> trainable;
  std::size_t trainable_count = 0;
  double first_loss = 0.0;
  double final_loss = 0.0;
};

struct TrainReport {
  std::uint64_t seed = 0;
  std::vector<StepRecord> curve;
  std::vector<StageSummary> stages;
  // Union of the trainable groups over the reported stages.
  std::vector<GroupCount> census;
  std::size_t census_total = 0;
  std::map<std::string, double> metrics;
  double wall_seconds = 0.0;

  void append(const TrainReport& other);
  // One JSON object per step, then a summary object on the last line.
  // Timing is left out when include_timing is false so reruns compare equal.
  std::string to_jsonl(bool include_timing = true) const;
};

// Deterministic sample of round(portion * N) examples without replacement.
// One seeded permutation is cut at the requested size, so smaller portions
// are prefixes of larger ones. portion 1 returns the data in its original
// order. Throws ConfigError unless 0 < portion <= 1.
std::vector<std::size_t> subset_indices(std::size_t n, double portion, std::uint64_t seed);
std::vector<SyntheticExample> subset_data(std::span<const SyntheticExample> data, double portion, std::uint64_t seed);

// Checks that every example can feed the stage's task for this model (known
// characters and words, CTC-feasible lengths). Throws ConfigError naming the
// example.
void check_stage_data(const Stage& stage, const SpeechTranslationModel& model,
                      std::span<const SyntheticExample> data);

// Runs the stages in order on the training data. Each stage gets a fresh
// Adam state and batch and noise streams derived from the seed and the stage
// name. Subsets depend on the seed alone, so portions nest across stages.
TrainReport run_plan(const StagePlan& plan, SpeechTranslationModel& model,
                     std::span<const SyntheticExample> data, std::uint64_t seed);

// Similarity-only training of the adapter. The freeze spec is always
// ADAPTER_ONLY and target forcing is always on for the audio path.
// Throws ConfigError when the model has no adapter.
TrainReport similarity_phase(SpeechTranslationModel& model, std::span<const SyntheticExample> data,
                             std::size_t steps, double lr, std::uint64_t seed, std::size_t batch = 8);

struct LossOptions {
  double similarity_weight = 0.0;
  std::size_t copy_fill = 0;
  Rng* noise = nullptr;  // required when copy_fill > 0
};

// Loss of one example for the given task, recorded on `tape`.
Var example_loss(Tape& tape, const SpeechTranslationModel& model, Task task, const SyntheticExample& example,
                 const LossOptions& options = {});

// Inserts between 0 and `fill` <pad> ids after every id.
std::vector<std::size_t> insert_fillers(std::span<const std::size_t> ids, std::size_t fill, Rng& rng);

// Audio-path and text-path pooled encoder states for the similarity loss.
struct PooledPair {
  Var audio;
  Var text;
};
PooledPair similarity_pools(Tape& tape, const SpeechTranslationModel& model, const AsrView& asr,
                            std::span<const std::size_t> text_ids);

// Decoder input and targets for a token sequence: [start] + ids and ids + [EOS].
std::vector<std::size_t> decoder_input(std::size_t start, std::span<const std::size_t> ids);
std::vector<std::size_t> decoder_target(std::span<const std::size_t> ids);

}  // namespace stlab
