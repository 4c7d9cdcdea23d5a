#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "seq2d/dynamics.hpp"
#include "seq2d/experiments.hpp"
#include "seq2d/map_io.hpp"
#include "seq2d/verify.hpp"

namespace {

using nlohmann::json;
using namespace seq2d;

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailure = 1;
constexpr int kExitConfigError = 2;
constexpr int kExitNumericError = 3;

int cmd_verify(const std::string& filter, bool inject_fault) {
  verify::Options opts;
  opts.filter = filter;
  opts.inject_fault = inject_fault;
  const auto results = verify::run_all(opts);
  if (results.empty()) {
    std::cerr << "no checks match filter '" << filter << "'\n";
    return kExitConfigError;
  }
  size_t name_width = 0;
  for (const auto& r : results) name_width = std::max(name_width, r.name.size());
  bool all_pass = true;
  for (const auto& r : results) {
    all_pass = all_pass && r.pass;
    std::printf("%-*s  %s  %s\n", static_cast<int>(name_width), r.name.c_str(),
                r.pass ? "PASS" : "FAIL", r.detail.c_str());
  }
  std::printf("%zu/%zu checks passed\n",
              static_cast<size_t>(std::count_if(results.begin(), results.end(),
                                                [](const auto& r) { return r.pass; })),
              results.size());
  return all_pass ? kExitOk : kExitVerifyFailure;
}

Vec parse_h0(const std::string& text, int dim) {
  if (text.empty()) return Vec::Ones(dim);
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) values.push_back(std::stod(item));
  if (static_cast<int>(values.size()) != dim)
    throw std::invalid_argument("--h0 needs " + std::to_string(dim) + " entries");
  return Eigen::Map<Vec>(values.data(), static_cast<Eigen::Index>(values.size()));
}

const char* impulse_name(ImpulseKind kind) {
  switch (kind) {
    case ImpulseKind::finite: return "finite";
    case ImpulseKind::infinite: return "infinite";
    case ImpulseKind::asymptotically_finite: return "asymptotically_finite";
  }
  return "infinite";
}

int cmd_analyze(const std::string& path, const std::string& h0_text, int horizon, double tol) {
  BlockMap map;
  try {
    map = load_map(path);
  } catch (const std::exception& e) {
    std::cerr << "analyze: " << e.what() << "\n";
    return kExitConfigError;
  }

  try {
    const Vec h0 = parse_h0(h0_text, map.partition().size(0));
    if (horizon <= 0) horizon = 2 * map.blocks();

    json report;
    try {
      FixedPointReport fp =
          find_fixed_point(map, StateVector::from_input(map.partition(), h0), horizon, tol);
      report["fixed_point"] = {
          {"reached", fp.reached}, {"at_iteration", fp.at_iteration}, {"residual", fp.residual}};
    } catch (const std::runtime_error& e) {
      report["fixed_point"] = {{"reached", false}, {"error", e.what()}};
    }

    std::vector<StateVector> probes;
    probes.push_back(StateVector::from_input(map.partition(), h0));
    probes.push_back(StateVector::from_input(map.partition(), Vec(h0.array() + 1.0)));
    probes.push_back(StateVector::from_input(map.partition(), Vec(h0.array() - 1.0)));
    ImpulseReport impulse = classify_impulse(map, probes, horizon, tol);
    report["class"] = impulse_name(impulse.kind);
    report["at_iteration"] = impulse.at_iteration;
    report["residuals"] = impulse.deviations;
    if (impulse.kind == ImpulseKind::asymptotically_finite) {
      report["decay_ratio"] = impulse.decay_ratio;
      report["fit_r2"] = impulse.fit_r2;
    }
    std::cout << report.dump(2) << "\n";
    return kExitOk;
  } catch (const std::runtime_error& e) {
    std::cerr << "analyze: " << e.what() << "\n";
    return kExitNumericError;
  } catch (const std::exception& e) {
    std::cerr << "analyze: " << e.what() << "\n";
    return kExitConfigError;
  }
}

int cmd_train(const std::string& config_path) {
  ExperimentConfig cfg;
  try {
    cfg = ExperimentConfig::from_file(config_path);
    cfg.validate();
  } catch (const std::exception& e) {
    std::cerr << "train: " << e.what() << "\n";
    return kExitConfigError;
  }
  if (cfg.long_running())
    std::cerr << "warning: long-running configuration (" << cfg.split.train << " examples x "
              << cfg.train_cfg.epochs << " epochs)\n";
  try {
    const auto runs = run_training(cfg);
    for (const auto& run : runs)
      std::printf("%s: final test accuracy %.4f (%s/%s.csv)\n", run.run_id.c_str(),
                  run.final_test_accuracy, cfg.output_dir.c_str(), run.run_id.c_str());
    return kExitOk;
  } catch (const std::runtime_error& e) {
    std::cerr << "train: " << e.what() << "\n";
    return kExitNumericError;
  } catch (const std::exception& e) {
    std::cerr << "train: " << e.what() << "\n";
    return kExitConfigError;
  }
}

int cmd_compare(const std::string& config_path) {
  ExperimentConfig cfg;
  try {
    cfg = ExperimentConfig::from_file(config_path);
    cfg.validate();
    if (cfg.layered_runs < 1 || cfg.random_runs < 1)
      throw std::invalid_argument("compare config needs compare.layered_runs and random_runs");
  } catch (const std::exception& e) {
    std::cerr << "compare: " << e.what() << "\n";
    return kExitConfigError;
  }
  if (cfg.long_running())
    std::cerr << "warning: long-running configuration (" << cfg.split.train << " examples x "
              << cfg.train_cfg.epochs << " epochs)\n";
  try {
    const CompareSummary summary = run_compare(cfg);
    std::printf("layered mean test accuracy %.4f (std %.4f)\n", summary.layered_mean,
                summary.layered_std);
    std::printf("random  mean test accuracy %.4f (std %.4f)\n", summary.random_mean,
                summary.random_std);
    std::printf("|mean delta| = %.4f\n", summary.mean_accuracy_abs_delta);
    std::printf("outputs in %s\n", cfg.output_dir.c_str());
    return kExitOk;
  } catch (const std::runtime_error& e) {
    std::cerr << "compare: " << e.what() << "\n";
    return kExitNumericError;
  } catch (const std::exception& e) {
    std::cerr << "compare: " << e.what() << "\n";
    return kExitConfigError;
  }
}

int cmd_make_data(const std::string& out_dir, int count, int height, int width, uint64_t seed) {
  try {
    std::filesystem::create_directories(out_dir);
    ImageSet set = synth_digits(count, height, width, seed);
    const std::string images = out_dir + "/images-idx3-ubyte";
    const std::string labels = out_dir + "/labels-idx1-ubyte";
    write_idx(set, images, labels);
    std::printf("wrote %d %dx%d images to %s and %s\n", count, height, width, images.c_str(),
                labels.c_str());
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "make-data: " << e.what() << "\n";
    return kExitConfigError;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"seq2d: iterated block map construction, analysis, and training"};
  app.require_subcommand(1);

  auto* verify_cmd = app.add_subcommand("verify", "run the invariant suite");
  std::string filter;
  bool inject_fault = false;
  verify_cmd->add_option("--filter", filter, "run only checks whose name contains this");
  verify_cmd->add_flag("--inject-fault", inject_fault,
                       "perturb a golden map so the equivalence check must fail");

  auto* analyze_cmd = app.add_subcommand("analyze", "classify a map document");
  std::string map_path, h0_text;
  int horizon = 0;
  double tol = 1e-12;
  analyze_cmd->add_option("map", map_path, "map document (JSON)")->required();
  analyze_cmd->add_option("--h0", h0_text, "comma-separated block-0 input (default: ones)");
  analyze_cmd->add_option("--horizon", horizon, "probe horizon (default: 2x block count)");
  analyze_cmd->add_option("--tol", tol, "agreement tolerance");

  auto* train_cmd = app.add_subcommand("train", "train one architecture from a config");
  std::string train_config;
  train_cmd->add_option("config", train_config, "experiment config (JSON)")->required();

  auto* compare_cmd = app.add_subcommand("compare", "layered vs random comparison runs");
  std::string compare_config;
  compare_cmd->add_option("config", compare_config, "experiment config (JSON)")->required();

  auto* data_cmd = app.add_subcommand("make-data", "write a synthetic digit corpus as IDX files");
  std::string out_dir = "data";
  int count = 4096, height = 28, width = 28;
  uint64_t seed = 7;
  data_cmd->add_option("--out", out_dir, "output directory");
  data_cmd->add_option("--count", count, "number of images");
  data_cmd->add_option("--height", height, "image height");
  data_cmd->add_option("--width", width, "image width");
  data_cmd->add_option("--seed", seed, "generator seed");

  CLI11_PARSE(app, argc, argv);

  if (verify_cmd->parsed()) return cmd_verify(filter, inject_fault);
  if (analyze_cmd->parsed()) return cmd_analyze(map_path, h0_text, horizon, tol);
  if (train_cmd->parsed()) return cmd_train(train_config);
  if (compare_cmd->parsed()) return cmd_compare(compare_config);
  if (data_cmd->parsed()) return cmd_make_data(out_dir, count, height, width, seed);
  return kExitConfigError;
}
