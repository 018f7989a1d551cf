#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stlab/checkpoint.hpp"
#include "stlab/corpus.hpp"
#include "stlab/error.hpp"
#include "stlab/experiment.hpp"

namespace fs = std::filesystem;
using namespace stlab;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

ExperimentConfig load_config(const std::string& path) {
  return load_experiment_config(path.empty() ? fs::path(STLAB_DEFAULT_CONFIG) : fs::path(path));
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

Corpus load_data(const std::string& path, const ExperimentConfig& config) {
  return path.empty() ? generate_corpus(config.data) : load_manifest(path);
}

struct Options {
  std::string config;
  std::string out;
  std::string data;
  std::string checkpoint;
  std::string mode = "e2e";
  std::string label;
  std::vector<std::string> presets;
  std::vector<std::string> inputs;
  std::optional<std::uint64_t> seed;
  std::optional<double> portion;
  bool dry_run = false;
  bool dump_alignments = false;
};

int cmd_generate(const Options& o) {
  ExperimentConfig config = load_config(o.config);
  if (o.seed) config.data.seed = *o.seed;
  const Corpus corpus = generate_corpus(config.data);
  save_manifest(corpus, o.out);
  std::cerr << "wrote " << corpus.examples.size() << " examples to " << o.out << "\n";
  return 0;
}

int cmd_run(const Options& o) {
  ExperimentConfig config = load_config(o.config);
  if (o.seed) config.seed = *o.seed;
  std::vector<Preset> presets;
  for (const auto& name : o.presets) presets.push_back(resolve_preset(name, config, o.portion));
  if (o.dry_run) {
    for (const auto& p : presets) std::cout << describe_preset(p, config);
    return 0;
  }
  if (o.out.empty()) throw ConfigError("run needs --out unless --dry-run is given");
  Experiment experiment(config, load_data(o.data, config));
  for (const auto& p : presets) {
    const auto started = std::chrono::steady_clock::now();
    const PresetRun run = experiment.run(p);
    const fs::path dir = fs::path(o.out) / p.label;
    fs::create_directories(dir);
    write_file(dir / "results.csv", results_csv(run.rows));
    write_file(dir / "report.jsonl", run.report.to_jsonl());
    save_checkpoint(run.model, dir / "checkpoint.json");
    if (o.dump_alignments) write_file(dir / "alignments.txt", dump_alignments(run.model, experiment.corpus().test()));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    std::cerr << p.label << ":";
    for (const auto& r : run.rows) std::cerr << " " << r.task << " " << r.metric << " " << r.value;
    std::cerr << " (#params " << run.report.census_total << ", " << secs << " s)\n";
  }
  return 0;
}

int cmd_eval(const Options& o) {
  if (o.mode != "e2e" && o.mode != "cascade") throw ConfigError("--mode must be e2e or cascade");
  const ExperimentConfig config = load_config(o.config);
  const SpeechTranslationModel model = load_checkpoint(o.checkpoint);
  const Corpus corpus = load_data(o.data, config);
  const std::string label = o.label.empty() ? "CUSTOM" : o.label;
  const auto rows =
      evaluate(model, o.mode == "cascade", label, 0, o.seed.value_or(config.seed), corpus.test(), config.max_len);
  const std::string csv = results_csv(rows);
  if (o.out.empty()) {
    std::cout << csv;
  } else {
    fs::create_directories(o.out);
    write_file(fs::path(o.out) / "results.csv", csv);
    if (o.dump_alignments) write_file(fs::path(o.out) / "alignments.txt", dump_alignments(model, corpus.test()));
  }
  if (o.dump_alignments && o.out.empty()) std::cout << dump_alignments(model, corpus.test());
  return 0;
}

int cmd_table(const Options& o) {
  std::vector<fs::path> files;
  for (const auto& in : o.inputs) {
    if (fs::is_directory(in)) {
      for (const auto& e : fs::recursive_directory_iterator(in)) {
        if (e.is_regular_file() && e.path().filename() == "results.csv") files.push_back(e.path());
      }
    } else if (fs::is_regular_file(in)) {
      files.emplace_back(in);
    } else {
      throw IoError("no such results file or directory: " + in);
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no results.csv files found");
  std::vector<SourcedRow> rows;
  for (const auto& f : files) {
    for (auto& r : parse_results_csv(read_file(f), f.string())) rows.push_back({std::move(r), f.string()});
  }
  const Tables t = build_tables(rows);
  std::cout << t.markdown;
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    write_file(fs::path(o.out) / "tables.md", t.markdown);
    write_file(fs::path(o.out) / "tables.csv", t.csv);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speech translation lab: synthetic data, model presets, evaluation and tables"};
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed = 0;
  double portion = 1.0;

  auto* gen = app.add_subcommand("generate", "write a synthetic corpus manifest");
  gen->add_option("--config", o.config, "experiment config (JSON)");
  gen->add_option("--out", o.out, "manifest path")->required();
  gen->add_option("--seed", seed, "corpus seed");

  auto* run = app.add_subcommand("run", "train and evaluate presets");
  run->add_option("--config", o.config, "experiment config (JSON)");
  run->add_option("--preset", o.presets, "preset name, repeatable")->required();
  run->add_option("--data", o.data, "manifest; generated from the config when omitted");
  run->add_option("--seed", seed, "experiment seed");
  run->add_option("--portion", portion, "share of the end-to-end training data");
  run->add_option("--out", o.out, "output directory, one subdirectory per preset");
  run->add_flag("--dry-run", o.dry_run, "print the resolved plans and exit");
  run->add_flag("--dump-alignments", o.dump_alignments, "write greedy CTC segment maps of the test set");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  ev->add_option("--config", o.config, "experiment config (JSON)");
  ev->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  ev->add_option("--data", o.data, "manifest; generated from the config when omitted");
  ev->add_option("--mode", o.mode, "e2e or cascade");
  ev->add_option("--preset", o.label, "label for the results rows");
  ev->add_option("--seed", seed, "seed recorded in the results rows");
  ev->add_option("--out", o.out, "output directory; stdout when omitted");
  ev->add_flag("--dump-alignments", o.dump_alignments, "write greedy CTC segment maps of the test set");

  auto* tab = app.add_subcommand("table", "render result tables");
  tab->add_option("inputs", o.inputs, "results.csv files or directories")->required();
  tab->add_option("--out", o.out, "directory for tables.md and tables.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }
  for (auto* sub : {gen, run, ev}) {
    if (sub->parsed() && sub->count("--seed") > 0) o.seed = seed;
  }
  if (run->parsed() && run->count("--portion") > 0) o.portion = portion;

  try {
    if (run->parsed()) {
      for (const auto& name : o.presets) {
        const auto& names = preset_names();
        if (std::find(names.begin(), names.end(), name) == names.end()) {
          std::string valid;
          for (const auto& n : names) valid += " " + n;
          std::cerr << "error: unknown preset '" << name << "'\nvalid presets:" << valid << "\n";
          return kExitUsage;
        }
      }
      return cmd_run(o);
    }
    if (gen->parsed()) return cmd_generate(o);
    if (ev->parsed()) return cmd_eval(o);
    return cmd_table(o);
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
}
