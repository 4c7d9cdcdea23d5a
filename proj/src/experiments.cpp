#include "seq2d/experiments.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "seq2d/map_io.hpp"

namespace seq2d {

using nlohmann::json;
namespace fs = std::filesystem;

void ExperimentConfig::validate() const {
  if (dims.size() < 2) throw std::invalid_argument("config: dims must name at least one layer");
  for (int d : dims)
    if (d < 1) throw std::invalid_argument("config: dims must be positive");
  if (tile < 1) throw std::invalid_argument("config: tile must be >= 1");
  if (architecture != "layered" && architecture != "random")
    throw std::invalid_argument("config: architecture must be layered or random");
  if (n_runs < 1) throw std::invalid_argument("config: n_runs must be >= 1");
  const bool has_files = !images_path.empty() && !labels_path.empty();
  const bool has_synth = synthetic_count > 0;
  if (has_files == has_synth)
    throw std::invalid_argument("config: provide either data files or a synthetic count");
  if (split.train < 1 || split.test < 1)
    throw std::invalid_argument("config: split needs train and test examples");
  train_cfg.validate();
  if (erase && !(0.0 < erase_lo && erase_lo <= erase_hi && erase_hi < 1.0))
    throw std::invalid_argument("config: erase range must satisfy 0 < lo <= hi < 1");
}

bool ExperimentConfig::long_running() const {
  const long work = static_cast<long>(split.train) * train_cfg.epochs;
  return work > 200000 || dims.front() >= 2500;
}

std::string ExperimentConfig::to_json_text() const {
  json doc;
  doc["dims"] = dims;
  doc["tile"] = tile;
  doc["iterations"] = iterations;
  doc["architecture"] = architecture;
  doc["n_runs"] = n_runs;
  json data;
  if (!images_path.empty()) {
    data["images"] = images_path;
    data["labels"] = labels_path;
  } else {
    data["synthetic"] = {{"count", synthetic_count}, {"seed", synthetic_seed}};
  }
  doc["data"] = std::move(data);
  json pre;
  if (resize_h > 0) pre["resize"] = {resize_h, resize_w};
  if (erase) pre["erase"] = {{"lo", erase_lo}, {"hi", erase_hi}, {"seed", erase_seed}};
  if (do_normalize) pre["normalize"] = {{"mean", normalize_mean}, {"std", normalize_std}};
  doc["preprocess"] = std::move(pre);
  doc["split"] = {{"train", split.train}, {"val", split.val}, {"test", split.test},
                  {"seed", split.seed}};
  json tr;
  tr["epochs"] = train_cfg.epochs;
  tr["batch_size"] = train_cfg.batch_size;
  tr["seed"] = train_cfg.seed;
  tr["adam"] = {{"lr", train_cfg.adam.lr},
                {"beta1", train_cfg.adam.beta1},
                {"beta2", train_cfg.adam.beta2},
                {"eps", train_cfg.adam.eps}};
  if (train_cfg.continuation) {
    tr["continuation"] = {
        {"param",
         train_cfg.continuation->param == ContinuationSpec::Param::epsilon ? "epsilon" : "eta"},
        {"start", train_cfg.continuation->start},
        {"end", train_cfg.continuation->end}};
  }
  doc["train"] = std::move(tr);
  if (layered_runs > 0 || random_runs > 0)
    doc["compare"] = {{"layered_runs", layered_runs}, {"random_runs", random_runs}};
  doc["output_dir"] = output_dir;
  return doc.dump(2);
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  try {
    cfg.dims = doc.at("dims").get<std::vector<int>>();
    cfg.tile = doc.value("tile", 100);
    cfg.iterations = doc.value("iterations", 0);
    cfg.architecture = doc.value("architecture", std::string("layered"));
    cfg.n_runs = doc.value("n_runs", 1);

    const json& data = doc.at("data");
    if (data.contains("synthetic")) {
      cfg.synthetic_count = data["synthetic"].value("count", 0);
      cfg.synthetic_seed = data["synthetic"].value("seed", uint64_t{0});
    } else {
      cfg.images_path = data.at("images").get<std::string>();
      cfg.labels_path = data.at("labels").get<std::string>();
    }

    if (doc.contains("preprocess")) {
      const json& pre = doc["preprocess"];
      if (pre.contains("resize")) {
        cfg.resize_h = pre["resize"][0].get<int>();
        cfg.resize_w = pre["resize"][1].get<int>();
      }
      if (pre.contains("erase")) {
        cfg.erase = true;
        cfg.erase_lo = pre["erase"].value("lo", 0.02);
        cfg.erase_hi = pre["erase"].value("hi", 0.05);
        cfg.erase_seed = pre["erase"].value("seed", uint64_t{0});
      }
      cfg.do_normalize = pre.contains("normalize");
      if (cfg.do_normalize) {
        cfg.normalize_mean = pre["normalize"].value("mean", 0.1307);
        cfg.normalize_std = pre["normalize"].value("std", 0.3081);
      }
    }

    const json& sp = doc.at("split");
    cfg.split.train = sp.value("train", 0);
    cfg.split.val = sp.value("val", 0);
    cfg.split.test = sp.value("test", 0);
    cfg.split.seed = sp.value("seed", uint64_t{0});

    const json& tr = doc.at("train");
    cfg.train_cfg.epochs = tr.value("epochs", 1);
    cfg.train_cfg.batch_size = tr.value("batch_size", 64);
    cfg.train_cfg.seed = tr.value("seed", uint64_t{0});
    if (tr.contains("adam")) {
      cfg.train_cfg.adam.lr = tr["adam"].value("lr", 1e-3);
      cfg.train_cfg.adam.beta1 = tr["adam"].value("beta1", 0.9);
      cfg.train_cfg.adam.beta2 = tr["adam"].value("beta2", 0.999);
      cfg.train_cfg.adam.eps = tr["adam"].value("eps", 1e-8);
    }
    if (tr.contains("continuation") && !tr["continuation"].is_null()) {
      ContinuationSpec cont;
      const std::string param = tr["continuation"].value("param", std::string("epsilon"));
      cont.param = param == "eta" ? ContinuationSpec::Param::eta
                                  : ContinuationSpec::Param::epsilon;
      cont.start = tr["continuation"].value("start", 1.0);
      cont.end = tr["continuation"].value("end", 0.0);
      cfg.train_cfg.continuation = cont;
    }

    if (doc.contains("compare")) {
      cfg.layered_runs = doc["compare"].value("layered_runs", 0);
      cfg.random_runs = doc["compare"].value("random_runs", 0);
    }
    cfg.output_dir = doc.value("output_dir", std::string("out"));
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open config: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json_text(text);
}

PreparedData prepare_data(const ExperimentConfig& cfg) {
  ImageSet pool = cfg.synthetic_count > 0
                      ? synth_digits(cfg.synthetic_count, 28, 28, cfg.synthetic_seed)
                      : load_idx(cfg.images_path, cfg.labels_path);
  if (cfg.resize_h > 0) pool = resize_bilinear(pool, cfg.resize_h, cfg.resize_w);
  if (cfg.erase) pool = random_erase(pool, cfg.erase_lo, cfg.erase_hi, cfg.erase_seed);
  pool = perspective_noop(pool);
  if (cfg.do_normalize) pool = normalize(pool, cfg.normalize_mean, cfg.normalize_std);

  const int image_dim = pool.height * pool.width;
  if (image_dim != cfg.dims.front())
    throw std::invalid_argument("config: dims[0] = " + std::to_string(cfg.dims.front()) +
                                " does not match the image size " + std::to_string(image_dim));

  Splits splits = split(pool, cfg.split);
  return PreparedData{to_dataset(splits.train), to_dataset(splits.val), to_dataset(splits.test)};
}

namespace {

struct BuiltModel {
  BlockMap map;
  ParamIndex index;
};

BuiltModel build_model(const ExperimentConfig& cfg, const std::string& architecture,
                       uint64_t seed) {
  if (architecture == "layered") {
    // plain layer chain, bias-free so the trainable budget matches the tiled
    // architecture exactly; the final layer stays linear to emit logits
    BlockMap map{BlockPartition(cfg.dims)};
    map.set_cell(0, 0, Cell::scaled_identity(1.0));
    const size_t layers = cfg.dims.size() - 1;
    for (size_t i = 0; i < layers; ++i) {
      Mat w = he_uniform(cfg.dims[i + 1], cfg.dims[i], seed, static_cast<uint64_t>(i + 1),
                         static_cast<uint64_t>(i));
      const Activation act = i + 1 < layers ? Activation::relu : Activation::identity;
      map.set_cell(static_cast<int>(i + 1), static_cast<int>(i),
                   Cell::affine(std::move(w), act));
    }
    ParamIndex index = ParamIndex::build_all_affine(map);
    return {std::move(map), std::move(index)};
  }
  const TileGrid layered = make_layered_tiling(cfg.dims, cfg.tile);
  TileGrid grid = make_random_tiling(cfg.dims, cfg.tile, layered.trainable_tiles(), seed);
  BlockMap map = make_tiled_map(grid, Activation::relu, seed);
  ParamIndex index = ParamIndex::build(map, grid.mask);
  return {std::move(map), std::move(index)};
}

// Draws whose output rows read nothing but the frozen input copy leave the
// rest of the parameters without a gradient path; such seeds are skipped
// deterministically (stride keeps replacements clear of other runs' seeds).
uint64_t resolve_random_seed(const ExperimentConfig& cfg, uint64_t seed) {
  const TileGrid layered = make_layered_tiling(cfg.dims, cfg.tile);
  for (int attempt = 0; attempt < 64; ++attempt) {
    const uint64_t candidate = seed + static_cast<uint64_t>(attempt) * 1000;
    TileGrid grid = make_random_tiling(cfg.dims, cfg.tile, layered.trainable_tiles(), candidate);
    if (tiling_reaches_output(grid, cfg.effective_iterations())) return candidate;
  }
  throw std::runtime_error("no depth-reachable random tiling near seed " + std::to_string(seed));
}

double final_metric(const TrainingLog& log, const std::string& split, bool want_accuracy) {
  for (auto it = log.rows.rbegin(); it != log.rows.rend(); ++it)
    if (it->split == split) return want_accuracy ? it->accuracy : it->loss;
  return 0.0;
}

}  // namespace

RunResult run_single(const ExperimentConfig& cfg, const PreparedData& data,
                     const std::string& architecture, uint64_t seed) {
  if (architecture == "random") seed = resolve_random_seed(cfg, seed);
  BuiltModel model = build_model(cfg, architecture, seed);
  TrainConfig tc = cfg.train_cfg;
  tc.seed = seed;
  tc.iterations = cfg.effective_iterations();

  RunResult result;
  result.model = architecture;
  result.seed = seed;
  result.run_id = architecture + "-" + std::to_string(seed);
  result.log = train(model.map, model.index, data.train, data.val, data.test, tc,
                     cfg.dims.back());
  result.final_test_accuracy = final_metric(result.log, "test", true);
  result.final_test_loss = final_metric(result.log, "test", false);
  result.map_document = serialize(model.map);
  return result;
}

std::string to_csv(const std::vector<RunResult>& runs) {
  std::string csv = "run_id,model,seed,epoch,split,loss,accuracy\n";
  char line[256];
  for (const RunResult& run : runs) {
    for (const TrainingLog::Row& row : run.log.rows) {
      std::snprintf(line, sizeof(line), "%s,%s,%llu,%d,%s,%.17g,%.17g\n", run.run_id.c_str(),
                    run.model.c_str(), static_cast<unsigned long long>(run.seed), row.epoch,
                    row.split.c_str(), row.loss, row.accuracy);
      csv += line;
    }
  }
  return csv;
}

void write_text_atomic(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + tmp);
    out << text;
  }
  fs::rename(tmp, path);
}

namespace {

int thread_cap(int n_runs) {
  int cap = static_cast<int>(std::thread::hardware_concurrency());
  if (cap < 1) cap = 1;
  if (const char* env = std::getenv("SEQ2D_THREADS")) {
    const int requested = std::atoi(env);
    if (requested >= 1) cap = requested;
  }
  return std::min(cap, n_runs);
}

// runs fn(i) for i in [0, n) on up to thread_cap(n) workers
template <typename Fn>
void parallel_runs(int n, Fn&& fn) {
  const int workers = thread_cap(n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
      } catch (...) {
        errors[static_cast<size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

void write_provenance(const ExperimentConfig& cfg, const std::vector<RunResult>& runs) {
  fs::create_directories(cfg.output_dir);
  write_text_atomic(cfg.output_dir + "/config.json", cfg.to_json_text());
  json seeds = json::array();
  for (const RunResult& r : runs)
    seeds.push_back({{"run_id", r.run_id}, {"model", r.model}, {"seed", r.seed}});
  write_text_atomic(cfg.output_dir + "/seeds.json", json(seeds).dump(2));
}

}  // namespace

std::vector<RunResult> run_training(const ExperimentConfig& cfg) {
  cfg.validate();
  PreparedData data = prepare_data(cfg);
  std::vector<RunResult> runs(static_cast<size_t>(cfg.n_runs));
  parallel_runs(cfg.n_runs, [&](int i) {
    runs[static_cast<size_t>(i)] =
        run_single(cfg, data, cfg.architecture, cfg.train_cfg.seed + static_cast<uint64_t>(i));
  });
  write_provenance(cfg, runs);
  for (const RunResult& run : runs) {
    write_text_atomic(cfg.output_dir + "/" + run.run_id + ".csv", to_csv({run}));
    write_text_atomic(cfg.output_dir + "/" + run.run_id + ".map.json", run.map_document);
  }
  return runs;
}

std::string CompareSummary::to_json_text() const {
  json doc;
  json layered_acc = json::array(), random_acc = json::array();
  for (const RunResult& r : runs)
    (r.model == "layered" ? layered_acc : random_acc).push_back(r.final_test_accuracy);
  doc["layered"] = {{"mean_test_accuracy", layered_mean},
                    {"std_test_accuracy", layered_std},
                    {"final_test_accuracies", layered_acc}};
  doc["random"] = {{"mean_test_accuracy", random_mean},
                   {"std_test_accuracy", random_std},
                   {"final_test_accuracies", random_acc}};
  doc["mean_accuracy_abs_delta"] = mean_accuracy_abs_delta;
  doc["max_pairwise_abs_delta"] = max_pairwise_abs_delta;
  return doc.dump(2);
}

CompareSummary run_compare(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.layered_runs < 1 || cfg.random_runs < 1)
    throw std::invalid_argument("config: compare needs layered_runs and random_runs");
  PreparedData data = prepare_data(cfg);

  const int total = cfg.layered_runs + cfg.random_runs;
  CompareSummary summary;
  summary.runs.resize(static_cast<size_t>(total));
  parallel_runs(total, [&](int i) {
    const bool layered = i < cfg.layered_runs;
    const int ordinal = layered ? i : i - cfg.layered_runs;
    summary.runs[static_cast<size_t>(i)] =
        run_single(cfg, data, layered ? "layered" : "random",
                   cfg.train_cfg.seed + static_cast<uint64_t>(ordinal));
  });

  auto stats = [&](const std::string& model, double& mean, double& stddev) {
    std::vector<double> acc;
    for (const RunResult& r : summary.runs)
      if (r.model == model) acc.push_back(r.final_test_accuracy);
    double sum = 0.0;
    for (double a : acc) sum += a;
    mean = sum / static_cast<double>(acc.size());
    double var = 0.0;
    for (double a : acc) var += (a - mean) * (a - mean);
    stddev = std::sqrt(var / static_cast<double>(acc.size()));
  };
  stats("layered", summary.layered_mean, summary.layered_std);
  stats("random", summary.random_mean, summary.random_std);
  summary.mean_accuracy_abs_delta = std::abs(summary.layered_mean - summary.random_mean);
  for (const RunResult& a : summary.runs)
    for (const RunResult& b : summary.runs)
      if (a.model == "layered" && b.model == "random")
        summary.max_pairwise_abs_delta =
            std::max(summary.max_pairwise_abs_delta,
                     std::abs(a.final_test_accuracy - b.final_test_accuracy));

  write_provenance(cfg, summary.runs);
  write_text_atomic(cfg.output_dir + "/combined.csv", to_csv(summary.runs));
  write_text_atomic(cfg.output_dir + "/summary.json", summary.to_json_text());
  return summary;
}

}  // namespace seq2d
