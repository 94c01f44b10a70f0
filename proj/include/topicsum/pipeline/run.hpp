#pragma once

// Run configuration and the artifact-writing pipeline behind the CLI.
//
// One JSON document holds every module section:
//   {"data": {"train": ..., "test": ..., "stopwords": ...},
//    "synth": {...}, "test_fraction": 0.2, "min_count": 1,
//    "lda": {...}, "select": {"candidates": [...]}, "ffn": {...},
//    "model": {...}, "train": {...}, "decode": {...},
//    "guidance": {"train_mode": "controlled", "test_modes": ["controlled", "ffn"]},
//    "use_prompts": false, "seed": 1, "output_dir": "runs/x"}
// The run seed drives LDA, the FFN, model initialization and shuffling; the
// per-section seed fields are overwritten with it.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "topicsum/pipeline/experiment.hpp"

namespace topicsum::pipeline {

// Invalid configuration; the message names the offending field.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what);
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct RunConfig {
  std::optional<std::filesystem::path> train_path;
  std::optional<std::filesystem::path> test_path;
  std::optional<std::filesystem::path> stopwords_path;  // default list when unset
  std::optional<corpus::SynthConfig> synth;             // used when no dataset is given
  double test_fraction = 0.2;
  std::size_t min_count = 1;
  lda::LdaConfig lda;
  std::vector<std::size_t> select_candidates;  // non-empty: choose K among these
  guidance::FfnConfig ffn;
  model::ModelConfig model;
  model::TrainConfig train;
  decode::DecodeConfig decode;
  guidance::Mode train_mode = guidance::Mode::kControlled;
  std::vector<guidance::Mode> test_modes = {guidance::Mode::kControlled, guidance::Mode::kFfn};
  bool use_prompts = false;
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "run";

  // Relative paths resolve against base_dir. Unknown keys and wrong types
  // throw ConfigError.
  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  nlohmann::json to_json() const;
  void set_seed(std::uint64_t s);
  // FNV-1a of to_json() without output_dir.
  std::uint64_t hash() const;
  // Checks dataset paths and module sections.
  void validate() const;
  corpus::Stopwords stopwords() const;
};

// Reads a config file; relative paths resolve against its directory.
RunConfig load_run_config(const std::filesystem::path& path);

// {"config_hash": hex, "seed": n}, embedded in every artifact.
nlohmann::json provenance(const RunConfig& cfg);

// Hex FNV-1a of a file's bytes.
std::string file_hash(const std::filesystem::path& path);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

// Generated summaries as JSONL {id, summary, logprob, normalized_score}.
void write_generated(const std::filesystem::path& path, std::span<const decode::Hypothesis> hyps,
                     std::span<const model::ModelInput> inputs, const corpus::Vocabulary& vocab);
// id and summary of each line.
std::vector<corpus::TextExample> read_generated(const std::filesystem::path& path);

// Label map sidecar written next to an LDA checkpoint.
void write_labels(const std::filesystem::path& path, std::span<const std::size_t> label_map, const nlohmann::json& meta);
std::vector<std::size_t> read_labels(const std::filesystem::path& path);

// Training and test splits of the configured dataset, synthesizing (and
// writing under dir/corpus) when the config has no dataset paths.
std::pair<std::vector<corpus::TextExample>, std::vector<corpus::TextExample>> load_corpus(
    const RunConfig& cfg, const std::filesystem::path& dir);

// LDA on the training sources (with K selection when candidates are set),
// aligned to the corpus labels. `selection` receives the per-K table.
TopicStage fit_topics(const RunConfig& cfg, const PreparedCorpus& data, nlohmann::json* selection = nullptr);

struct ModeReport {
  guidance::Mode mode;
  metrics::MetricReport report;
};

struct PipelineResult {
  metrics::MetricReport baseline;
  std::vector<ModeReport> topical;  // one per test mode
  nlohmann::json manifest;
};

// corpus -> vocab -> topics -> ffn -> baseline/topical training -> generate
// -> evaluate, writing every artifact and manifest.json under
// cfg.output_dir. Failures throw StageError; finished artifacts stay.
PipelineResult run_pipeline(const RunConfig& cfg, const std::function<void(const std::string&)>& log = {});

}  // namespace topicsum::pipeline
