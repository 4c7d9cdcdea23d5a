#pragma once

#include <optional>
#include <string>
#include <vector>

#include "seq2d/builders.hpp"
#include "seq2d/mnist.hpp"
#include "seq2d/train.hpp"

namespace seq2d {

/// Everything one training/comparison experiment needs; mirrors the JSON
/// config schema and is serialized next to the outputs for provenance.
struct ExperimentConfig {
  std::vector<int> dims;
  int tile = 100;
  int iterations = 0;  // 0 -> default to the number of layers
  std::string architecture = "layered";  // layered | random
  int n_runs = 1;

  // data source: either IDX files or the synthetic corpus
  std::string images_path;
  std::string labels_path;
  int synthetic_count = 0;
  uint64_t synthetic_seed = 0;

  // preprocessing (resize -> erase -> perspective noop -> normalize)
  int resize_h = 0, resize_w = 0;  // 0 -> keep size
  bool erase = false;
  double erase_lo = 0.02, erase_hi = 0.05;
  uint64_t erase_seed = 0;
  bool do_normalize = true;
  double normalize_mean = 0.1307, normalize_std = 0.3081;

  SplitSpec split;
  TrainConfig train_cfg;
  int layered_runs = 0;  // compare mode
  int random_runs = 0;
  std::string output_dir = "out";

  int effective_iterations() const {
    return iterations > 0 ? iterations : static_cast<int>(dims.size()) - 1;
  }

  void validate() const;
  bool long_running() const;

  std::string to_json_text() const;
  static ExperimentConfig from_json_text(const std::string& text);
  static ExperimentConfig from_file(const std::string& path);
};

struct RunResult {
  std::string run_id;
  std::string model;  // layered | random
  uint64_t seed = 0;
  TrainingLog log;
  double final_test_accuracy = 0.0;
  double final_test_loss = 0.0;
  std::string map_document;  // serialized trained map
};

struct CompareSummary {
  std::vector<RunResult> runs;
  double layered_mean = 0.0, layered_std = 0.0;
  double random_mean = 0.0, random_std = 0.0;
  double mean_accuracy_abs_delta = 0.0;
  double max_pairwise_abs_delta = 0.0;
  std::string to_json_text() const;
};

/// Pool -> pipeline -> splits -> datasets, per the config.
struct PreparedData {
  Dataset train;
  Dataset val;
  Dataset test;
};
PreparedData prepare_data(const ExperimentConfig& cfg);

/// One seeded training run of the configured architecture.
RunResult run_single(const ExperimentConfig& cfg, const PreparedData& data,
                     const std::string& architecture, uint64_t seed);

/// `train` subcommand: n_runs of one architecture. Writes per-run CSV and
/// map documents plus the config used into output_dir.
std::vector<RunResult> run_training(const ExperimentConfig& cfg);

/// `compare` subcommand: layered_runs + random_runs with matched trainable
/// budgets; writes one combined CSV and a summary JSON. Honors the
/// SEQ2D_THREADS cap for parallel runs.
CompareSummary run_compare(const ExperimentConfig& cfg);

/// CSV rows (header + one row per epoch/split), ordered by
/// (run_id, epoch, split).
std::string to_csv(const std::vector<RunResult>& runs);

void write_text_atomic(const std::string& path, const std::string& text);

}  // namespace seq2d
