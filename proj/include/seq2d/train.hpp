#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "seq2d/block_map.hpp"

namespace seq2d {

enum class ParamRole { weight, bias, scale };

struct ParamEntry {
  int row = 0;
  int col = 0;
  ParamRole role = ParamRole::weight;
  long offset = 0;
  int rows = 0;  // weight shape; bias/scale use rows only
  int cols = 0;
};

/// Flattening of the trainable cells of a map into one parameter vector.
/// Cells outside the mask never appear in the index.
struct ParamIndex {
  std::vector<ParamEntry> entries;
  long size = 0;

  static ParamIndex build(const BlockMap& map, const std::vector<std::vector<bool>>& mask);

  /// Mask covering every non-zero cell except ScaledIdentity ones (those are
  /// frozen structure: identity corners and continuation scales).
  static ParamIndex build_all_affine(const BlockMap& map);
};

Vec pack(const BlockMap& map, const ParamIndex& index);
void unpack(const Vec& params, const ParamIndex& index, BlockMap& map);

/// Everything the reverse sweep needs from one unrolled forward pass:
/// the state after every iteration plus, for affine cells with a
/// non-identity activation, the cell outputs (activation derivatives are
/// recovered from outputs).
struct ForwardTape {
  const BlockMap* map = nullptr;
  int iterations = 0;
  std::vector<Mat> states;                       // iterations + 1 entries
  std::vector<std::vector<Mat>> cell_outputs;    // [iteration][row * n + col]
};

/// Runs `iterations` applications of the map on a batch whose leading
/// input rows hold the data and whose remaining blocks are zero
/// (precondition). `input_rows` must cover a whole-block prefix; the
/// default -1 means block 0. Throws with the iteration index if
/// activations leave the finite range.
ForwardTape forward_unrolled(const BlockMap& map, const StateBatch& input, int iterations,
                             int input_rows = -1);

/// The last out_dim rows of the final state.
Mat logits_of(const ForwardTape& tape, int out_dim);

/// Reverse sweep. `upstream` is dLoss/dlogits over the trailing rows of the
/// final state; contributions of every iteration of each shared cell are
/// accumulated into one gradient.
Vec backward(const ForwardTape& tape, const Mat& upstream, const ParamIndex& index);

/// Same sweep, but gradients are kept in per-iteration buckets (the
/// unrolled-copies view); their sum equals the shared gradient.
std::vector<Vec> backward_per_iteration(const ForwardTape& tape, const Mat& upstream,
                                        const ParamIndex& index);

/// Mean softmax cross-entropy over batch columns; labels in [0, classes).
double loss_xent(const Mat& logits, const std::vector<int>& labels);
Mat loss_xent_grad(const Mat& logits, const std::vector<int>& labels);

/// Fraction of columns whose argmax matches the label; ties break toward
/// the lowest class index.
double accuracy(const Mat& logits, const std::vector<int>& labels);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Vec m;
  Vec v;
  long t = 0;

  static AdamState zero(long size) { return AdamState{Vec::Zero(size), Vec::Zero(size), 0}; }
};

void adam_step(Vec& params, const Vec& grad, AdamState& state, const AdamConfig& cfg);

struct ContinuationSpec {
  enum class Param { epsilon, eta };
  Param param = Param::epsilon;
  double start = 1.0;
  double end = 0.0;
};

struct TrainConfig {
  int iterations = 1;
  int batch_size = 64;
  int epochs = 1;
  uint64_t seed = 0;
  AdamConfig adam;
  std::optional<ContinuationSpec> continuation;

  void validate() const;
};

/// Column-per-example dataset feeding block 0 of the state.
struct Dataset {
  Mat inputs;  // input_dim x count
  std::vector<int> labels;

  int count() const { return static_cast<int>(inputs.cols()); }
};

struct TrainingLog {
  struct Row {
    int epoch;
    std::string split;  // ordered train < val < test within an epoch
    double loss;
    double accuracy;
  };
  std::vector<Row> rows;
  std::vector<double> continuation_values;  // one per epoch when scheduled
};

/// Seeded minibatch training of the masked cells; evaluation rows are
/// appended per epoch for every non-empty split. The continuation schedule,
/// when present, rescales the designated cell at each epoch boundary
/// (epsilon: corner scale; eta: skip cell at (last, 0)).
TrainingLog train(BlockMap& map, const ParamIndex& index, const Dataset& train_set,
                  const Dataset& val_set, const Dataset& test_set, const TrainConfig& cfg,
                  int out_dim);

/// Loss/accuracy of the map on one dataset (no parameter updates).
TrainingLog::Row evaluate(const BlockMap& map, const Dataset& data, int iterations, int out_dim,
                          int batch_size, int epoch, const std::string& split);

}  // namespace seq2d
