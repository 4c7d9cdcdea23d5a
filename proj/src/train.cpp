#include "seq2d/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "seq2d/rng.hpp"

namespace seq2d {

ParamIndex ParamIndex::build(const BlockMap& map, const std::vector<std::vector<bool>>& mask) {
  const int n = map.blocks();
  if (static_cast<int>(mask.size()) != n)
    throw std::invalid_argument("ParamIndex: mask shape does not match the cell grid");
  ParamIndex index;
  for (int r = 0; r < n; ++r) {
    if (static_cast<int>(mask[static_cast<size_t>(r)].size()) != n)
      throw std::invalid_argument("ParamIndex: mask shape does not match the cell grid");
    for (int c = 0; c < n; ++c) {
      if (!mask[static_cast<size_t>(r)][static_cast<size_t>(c)]) continue;
      const Cell& cell = map.cell(r, c);
      switch (cell.kind()) {
        case CellKind::zero:
          throw std::invalid_argument("ParamIndex: mask marks a zero cell at (" +
                                      std::to_string(r) + "," + std::to_string(c) + ")");
        case CellKind::scaled_identity:
          index.entries.push_back({r, c, ParamRole::scale, index.size, 1, 1});
          index.size += 1;
          break;
        case CellKind::affine: {
          const long w = static_cast<long>(cell.weight().size());
          index.entries.push_back({r, c, ParamRole::weight, index.size,
                                   static_cast<int>(cell.weight().rows()),
                                   static_cast<int>(cell.weight().cols())});
          index.size += w;
          if (cell.has_bias()) {
            index.entries.push_back({r, c, ParamRole::bias, index.size,
                                     static_cast<int>(cell.bias().size()), 1});
            index.size += cell.bias().size();
          }
          break;
        }
      }
    }
  }
  return index;
}

ParamIndex ParamIndex::build_all_affine(const BlockMap& map) {
  const int n = map.blocks();
  std::vector<std::vector<bool>> mask(static_cast<size_t>(n),
                                      std::vector<bool>(static_cast<size_t>(n), false));
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      if (map.cell(r, c).kind() == CellKind::affine)
        mask[static_cast<size_t>(r)][static_cast<size_t>(c)] = true;
  return build(map, mask);
}

Vec pack(const BlockMap& map, const ParamIndex& index) {
  Vec params(index.size);
  for (const ParamEntry& e : index.entries) {
    const Cell& cell = map.cell(e.row, e.col);
    switch (e.role) {
      case ParamRole::weight:
        params.segment(e.offset, static_cast<long>(e.rows) * e.cols) =
            Eigen::Map<const Vec>(cell.weight().data(), cell.weight().size());
        break;
      case ParamRole::bias:
        params.segment(e.offset, e.rows) = cell.bias();
        break;
      case ParamRole::scale:
        params(e.offset) = cell.scale();
        break;
    }
  }
  return params;
}

void unpack(const Vec& params, const ParamIndex& index, BlockMap& map) {
  if (params.size() != index.size)
    throw std::invalid_argument("unpack: parameter vector length does not match the index");
  for (const ParamEntry& e : index.entries) {
    const Cell& cell = map.cell(e.row, e.col);
    switch (e.role) {
      case ParamRole::weight: {
        Mat w = Eigen::Map<const Mat>(params.data() + e.offset, e.rows, e.cols);
        Cell next = cell.has_bias() ? Cell::affine(std::move(w), cell.bias(), cell.act())
                                    : Cell::affine(std::move(w), cell.act());
        map.set_cell(e.row, e.col, std::move(next));
        break;
      }
      case ParamRole::bias: {
        Vec b = params.segment(e.offset, e.rows);
        map.set_cell(e.row, e.col, Cell::affine(cell.weight(), std::move(b), cell.act()));
        break;
      }
      case ParamRole::scale:
        map.set_cell(e.row, e.col, Cell::scaled_identity(params(e.offset)));
        break;
    }
  }
}

ForwardTape forward_unrolled(const BlockMap& map, const StateBatch& input, int iterations,
                             int input_rows) {
  if (iterations < 1) throw std::invalid_argument("forward_unrolled: iterations must be >= 1");
  if (input.partition != map.partition())
    throw std::invalid_argument("forward_unrolled: batch partition mismatch");
  const BlockPartition& p = map.partition();
  if (input_rows < 0) input_rows = p.size(0);
  int prefix = 0;
  for (int b = 0; b < p.blocks() && prefix < input_rows; ++b) prefix += p.size(b);
  if (prefix != input_rows)
    throw std::invalid_argument("forward_unrolled: input rows must cover whole blocks");
  const long tail = p.total() - input_rows;
  if (tail > 0 && input.data.bottomRows(tail).cwiseAbs().maxCoeff() != 0.0)
    throw std::invalid_argument("forward_unrolled: blocks past the input must start at zero");

  const int n = p.blocks();
  ForwardTape tape;
  tape.map = &map;
  tape.iterations = iterations;
  tape.states.reserve(static_cast<size_t>(iterations) + 1);
  tape.states.push_back(input.data);
  tape.cell_outputs.resize(static_cast<size_t>(iterations));

  for (int t = 0; t < iterations; ++t) {
    const Mat& prev = tape.states.back();
    Mat next(p.total(), prev.cols());
    auto& outputs = tape.cell_outputs[static_cast<size_t>(t)];
    outputs.resize(static_cast<size_t>(n) * n);

    for (int i = 0; i < n; ++i) {
      Mat acc = Mat::Zero(p.size(i), prev.cols());
      for (int j = 0; j < n; ++j) {
        const Cell& cell = map.cell(i, j);
        if (cell.is_zero()) continue;
        const auto in = prev.middleRows(p.offset(j), p.size(j));
        switch (cell.kind()) {
          case CellKind::scaled_identity:
            acc.noalias() += cell.scale() * in;
            break;
          case CellKind::affine: {
            Mat u(cell.weight().rows(), in.cols());
            for (Eigen::Index cidx = 0; cidx < in.cols(); ++cidx)
              u.col(cidx).noalias() = cell.weight() * in.col(cidx);
            if (cell.has_bias()) u.colwise() += cell.bias();
            activate_in_place(cell.act(), u);
            acc += u;
            if (cell.act() != Activation::identity)
              outputs[static_cast<size_t>(i) * n + j] = std::move(u);
            break;
          }
          case CellKind::zero:
            break;
        }
      }
      activate_in_place(map.post_act(i), acc);
      next.middleRows(p.offset(i), p.size(i)) = acc;
    }
    if (!next.allFinite())
      throw std::runtime_error("forward_unrolled: non-finite activations at iteration " +
                               std::to_string(t + 1));
    tape.states.push_back(std::move(next));
  }
  return tape;
}

Mat logits_of(const ForwardTape& tape, int out_dim) {
  const Mat& final_state = tape.states.back();
  if (out_dim < 1 || out_dim > final_state.rows())
    throw std::invalid_argument("logits_of: out_dim does not fit the state");
  return final_state.bottomRows(out_dim);
}

namespace {

void derivative_from_output_in_place(Activation a, Mat& y) {
  for (Eigen::Index c = 0; c < y.cols(); ++c)
    for (Eigen::Index r = 0; r < y.rows(); ++r)
      y(r, c) = activation_derivative_from_output(a, y(r, c));
}

// One reverse sweep; sink(t, entry_index, contribution) receives each
// iteration's gradient contribution for each indexed parameter block.
template <typename Sink>
void reverse_sweep(const ForwardTape& tape, const Mat& upstream, const ParamIndex& index,
                   Sink&& sink) {
  const BlockMap& map = *tape.map;
  const BlockPartition& p = map.partition();
  const int n = p.blocks();
  const Eigen::Index batch = tape.states.front().cols();
  if (upstream.cols() != batch)
    throw std::invalid_argument("backward: upstream batch width does not match the tape");
  if (upstream.rows() > p.total())
    throw std::invalid_argument("backward: upstream is taller than the state");

  // entry lookup per cell: (weight entry, bias entry, scale entry)
  std::vector<int> weight_entry(static_cast<size_t>(n) * n, -1);
  std::vector<int> bias_entry(static_cast<size_t>(n) * n, -1);
  std::vector<int> scale_entry(static_cast<size_t>(n) * n, -1);
  for (size_t e = 0; e < index.entries.size(); ++e) {
    const ParamEntry& entry = index.entries[e];
    const size_t flat = static_cast<size_t>(entry.row) * n + entry.col;
    switch (entry.role) {
      case ParamRole::weight: weight_entry[flat] = static_cast<int>(e); break;
      case ParamRole::bias: bias_entry[flat] = static_cast<int>(e); break;
      case ParamRole::scale: scale_entry[flat] = static_cast<int>(e); break;
    }
  }

  Mat ds = Mat::Zero(p.total(), batch);
  ds.bottomRows(upstream.rows()) = upstream;

  for (int t = tape.iterations - 1; t >= 0; --t) {
    const Mat& prev = tape.states[static_cast<size_t>(t)];
    const Mat& next = tape.states[static_cast<size_t>(t) + 1];
    const auto& outputs = tape.cell_outputs[static_cast<size_t>(t)];
    Mat ds_prev = Mat::Zero(p.total(), batch);

    for (int i = 0; i < n; ++i) {
      Mat g = ds.middleRows(p.offset(i), p.size(i));
      if (g.isZero(0.0)) continue;
      if (map.post_act(i) != Activation::identity) {
        Mat dpost = next.middleRows(p.offset(i), p.size(i));
        derivative_from_output_in_place(map.post_act(i), dpost);
        g = g.cwiseProduct(dpost);
      }

      for (int j = 0; j < n; ++j) {
        const Cell& cell = map.cell(i, j);
        if (cell.is_zero()) continue;
        const size_t flat = static_cast<size_t>(i) * n + j;
        const auto in = prev.middleRows(p.offset(j), p.size(j));

        switch (cell.kind()) {
          case CellKind::scaled_identity: {
            if (scale_entry[flat] >= 0) {
              Mat contribution(1, 1);
              contribution(0, 0) = (g.cwiseProduct(in)).sum();
              sink(t, scale_entry[flat], contribution);
            }
            ds_prev.middleRows(p.offset(j), p.size(j)).noalias() += cell.scale() * g;
            break;
          }
          case CellKind::affine: {
            Mat dpre = g;
            if (cell.act() != Activation::identity) {
              Mat dact = outputs[flat];
              derivative_from_output_in_place(cell.act(), dact);
              dpre = dpre.cwiseProduct(dact);
            }
            if (weight_entry[flat] >= 0) {
              Mat gw = dpre * in.transpose();
              sink(t, weight_entry[flat], gw);
            }
            if (bias_entry[flat] >= 0) {
              Mat gb = dpre.rowwise().sum();
              sink(t, bias_entry[flat], gb);
            }
            ds_prev.middleRows(p.offset(j), p.size(j)).noalias() +=
                cell.weight().transpose() * dpre;
            break;
          }
          case CellKind::zero:
            break;
        }
      }
    }
    ds = std::move(ds_prev);
  }
}

void add_contribution(Vec& grad, const ParamEntry& entry, const Mat& contribution) {
  switch (entry.role) {
    case ParamRole::weight:
      grad.segment(entry.offset, static_cast<long>(entry.rows) * entry.cols) +=
          Eigen::Map<const Vec>(contribution.data(), contribution.size());
      break;
    case ParamRole::bias:
      grad.segment(entry.offset, entry.rows) += contribution.col(0);
      break;
    case ParamRole::scale:
      grad(entry.offset) += contribution(0, 0);
      break;
  }
}

}  // namespace

Vec backward(const ForwardTape& tape, const Mat& upstream, const ParamIndex& index) {
  Vec grad = Vec::Zero(index.size);
  reverse_sweep(tape, upstream, index, [&](int, int e, const Mat& c) {
    add_contribution(grad, index.entries[static_cast<size_t>(e)], c);
  });
  return grad;
}

std::vector<Vec> backward_per_iteration(const ForwardTape& tape, const Mat& upstream,
                                        const ParamIndex& index) {
  std::vector<Vec> buckets(static_cast<size_t>(tape.iterations), Vec::Zero(index.size));
  reverse_sweep(tape, upstream, index, [&](int t, int e, const Mat& c) {
    add_contribution(buckets[static_cast<size_t>(t)], index.entries[static_cast<size_t>(e)], c);
  });
  return buckets;
}

double loss_xent(const Mat& logits, const std::vector<int>& labels) {
  if (static_cast<size_t>(logits.cols()) != labels.size())
    throw std::invalid_argument("loss_xent: one label per column required");
  double total = 0.0;
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const int label = labels[static_cast<size_t>(c)];
    if (label < 0 || label >= logits.rows())
      throw std::invalid_argument("loss_xent: label out of range");
    const double peak = logits.col(c).maxCoeff();
    const double lse = peak + std::log((logits.col(c).array() - peak).exp().sum());
    total += lse - logits(label, c);
  }
  return total / static_cast<double>(logits.cols());
}

Mat loss_xent_grad(const Mat& logits, const std::vector<int>& labels) {
  if (static_cast<size_t>(logits.cols()) != labels.size())
    throw std::invalid_argument("loss_xent_grad: one label per column required");
  Mat grad(logits.rows(), logits.cols());
  const double inv = 1.0 / static_cast<double>(logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const int label = labels[static_cast<size_t>(c)];
    if (label < 0 || label >= logits.rows())
      throw std::invalid_argument("loss_xent_grad: label out of range");
    const double peak = logits.col(c).maxCoeff();
    Vec ex = (logits.col(c).array() - peak).exp().matrix();
    grad.col(c) = ex / ex.sum();
    grad(label, c) -= 1.0;
    grad.col(c) *= inv;
  }
  return grad;
}

double accuracy(const Mat& logits, const std::vector<int>& labels) {
  if (static_cast<size_t>(logits.cols()) != labels.size())
    throw std::invalid_argument("accuracy: one label per column required");
  if (logits.cols() == 0) return 0.0;
  int hits = 0;
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    int best = 0;
    for (Eigen::Index r = 1; r < logits.rows(); ++r)
      if (logits(r, c) > logits(best, c)) best = static_cast<int>(r);
    if (best == labels[static_cast<size_t>(c)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(logits.cols());
}

void adam_step(Vec& params, const Vec& grad, AdamState& state, const AdamConfig& cfg) {
  if (params.size() != grad.size() || params.size() != state.m.size() ||
      params.size() != state.v.size())
    throw std::invalid_argument("adam_step: shape mismatch");
  state.t += 1;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad;
  state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  const double mc = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double vc = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  params.array() -=
      cfg.lr * (state.m.array() / mc) / ((state.v.array() / vc).sqrt() + cfg.eps);
}

void TrainConfig::validate() const {
  if (iterations < 1) throw std::invalid_argument("TrainConfig: iterations must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  if (adam.lr <= 0.0) throw std::invalid_argument("TrainConfig: learning rate must be positive");
}

namespace {

StateBatch input_batch(const BlockPartition& p, const Mat& inputs, const std::vector<int>& idx,
                       int begin, int end) {
  Mat data = Mat::Zero(p.total(), end - begin);
  for (int c = begin; c < end; ++c)
    data.col(c - begin).head(inputs.rows()) = inputs.col(idx[static_cast<size_t>(c)]);
  return StateBatch(p, std::move(data));
}

void apply_continuation(BlockMap& map, const ContinuationSpec& spec, double value,
                        const Cell& eta_base) {
  if (spec.param == ContinuationSpec::Param::epsilon) {
    map.set_cell(0, 0, Cell::scaled_identity(value));
  } else {
    Cell scaled;
    switch (eta_base.kind()) {
      case CellKind::zero: scaled = Cell::zero(); break;
      case CellKind::scaled_identity:
        scaled = Cell::scaled_identity(value * eta_base.scale());
        break;
      case CellKind::affine:
        scaled = eta_base.has_bias()
                     ? Cell::affine(value * eta_base.weight(), value * eta_base.bias(),
                                    eta_base.act())
                     : Cell::affine(value * eta_base.weight(), eta_base.act());
        break;
    }
    map.set_cell(map.blocks() - 1, 0, std::move(scaled));
  }
}

}  // namespace

TrainingLog::Row evaluate(const BlockMap& map, const Dataset& data, int iterations, int out_dim,
                          int batch_size, int epoch, const std::string& split) {
  const BlockPartition& p = map.partition();
  const int count = data.count();
  std::vector<int> idx(static_cast<size_t>(count));
  std::iota(idx.begin(), idx.end(), 0);

  double loss_sum = 0.0;
  double hit_sum = 0.0;
  for (int begin = 0; begin < count; begin += batch_size) {
    const int end = std::min(begin + batch_size, count);
    StateBatch batch = input_batch(p, data.inputs, idx, begin, end);
    std::vector<int> labels(data.labels.begin() + begin, data.labels.begin() + end);
    ForwardTape tape = forward_unrolled(map, batch, iterations, static_cast<int>(data.inputs.rows()));
    Mat logits = logits_of(tape, out_dim);
    loss_sum += loss_xent(logits, labels) * (end - begin);
    hit_sum += accuracy(logits, labels) * (end - begin);
  }
  return {epoch, split, loss_sum / count, hit_sum / count};
}

TrainingLog train(BlockMap& map, const ParamIndex& index, const Dataset& train_set,
                  const Dataset& val_set, const Dataset& test_set, const TrainConfig& cfg,
                  int out_dim) {
  cfg.validate();
  if (train_set.count() == 0) throw std::invalid_argument("train: training set is empty");
  const BlockPartition& p = map.partition();

  // base value of the eta-scaled cell, captured before any rescaling
  Cell eta_base;
  if (cfg.continuation && cfg.continuation->param == ContinuationSpec::Param::eta)
    eta_base = map.cell(map.blocks() - 1, 0);

  Vec params = pack(map, index);
  AdamState opt = AdamState::zero(index.size);
  TrainingLog log;

  std::vector<int> order(static_cast<size_t>(train_set.count()));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.continuation) {
      const double span = cfg.epochs > 1 ? static_cast<double>(epoch) / (cfg.epochs - 1) : 1.0;
      const double value =
          cfg.continuation->start + (cfg.continuation->end - cfg.continuation->start) * span;
      apply_continuation(map, *cfg.continuation, value, eta_base);
      log.continuation_values.push_back(value);
    }

    Rng shuffler = Rng::derive(cfg.seed, 0x5a31, static_cast<uint64_t>(epoch));
    shuffler.shuffle(order);

    for (int begin = 0; begin < train_set.count(); begin += cfg.batch_size) {
      const int end = std::min(begin + cfg.batch_size, train_set.count());
      StateBatch batch = input_batch(p, train_set.inputs, order, begin, end);
      std::vector<int> labels(static_cast<size_t>(end - begin));
      for (int c = begin; c < end; ++c)
        labels[static_cast<size_t>(c - begin)] =
            train_set.labels[static_cast<size_t>(order[static_cast<size_t>(c)])];

      ForwardTape tape = forward_unrolled(map, batch, cfg.iterations, static_cast<int>(train_set.inputs.rows()));
      Mat logits = logits_of(tape, out_dim);
      const double batch_loss = loss_xent(logits, labels);
      if (!std::isfinite(batch_loss))
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch));
      Vec grad = backward(tape, loss_xent_grad(logits, labels), index);
      adam_step(params, grad, opt, cfg.adam);
      unpack(params, index, map);
    }

    log.rows.push_back(evaluate(map, train_set, cfg.iterations, out_dim, cfg.batch_size, epoch,
                                "train"));
    if (val_set.count() > 0)
      log.rows.push_back(evaluate(map, val_set, cfg.iterations, out_dim, cfg.batch_size, epoch,
                                  "val"));
    if (test_set.count() > 0)
      log.rows.push_back(evaluate(map, test_set, cfg.iterations, out_dim, cfg.batch_size, epoch,
                                  "test"));
  }
  return log;
}

}  // namespace seq2d
