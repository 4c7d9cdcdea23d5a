#include "seq2d/block_map.hpp"

#include <stdexcept>
#include <string>

namespace seq2d {

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
  }
  return "identity";
}

Activation activation_from_name(const std::string& name) {
  if (name == "identity") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "sigmoid") return Activation::sigmoid;
  throw std::invalid_argument("unknown activation: " + name);
}

void BlockMap::set_cell(int row, int col, Cell c) {
  const size_t idx = index(row, col);
  const int out_dim = partition_.size(row);
  const int in_dim = partition_.size(col);
  const std::string at = "(" + std::to_string(row) + "," + std::to_string(col) + ")";
  switch (c.kind()) {
    case CellKind::zero:
      break;
    case CellKind::scaled_identity:
      if (out_dim != in_dim)
        throw std::invalid_argument("scaled identity at non-square cell " + at);
      break;
    case CellKind::affine:
      if (c.weight().rows() != out_dim || c.weight().cols() != in_dim)
        throw std::invalid_argument(
            "weight shape mismatch at cell " + at + ": got " +
            std::to_string(c.weight().rows()) + "x" + std::to_string(c.weight().cols()) +
            ", expected " + std::to_string(out_dim) + "x" + std::to_string(in_dim));
      break;
  }
  cells_[idx] = std::move(c);
}

bool BlockMap::structurally_equal(const BlockMap& other) const {
  if (partition_ != other.partition_) return false;
  if (post_act_ != other.post_act_) return false;
  for (size_t i = 0; i < cells_.size(); ++i)
    if (!(cells_[i] == other.cells_[i])) return false;
  return true;
}

MapStructure structure_of(const BlockMap& map) {
  for (int i = 0; i < map.blocks(); ++i)
    for (int j = 1; j < map.blocks(); ++j)
      if (!map.cell(i, j).is_zero()) return MapStructure::sequential2d;
  return MapStructure::sequential1d;
}

namespace {

// Accumulates cell(in) into acc, one column at a time so that batch columns
// see exactly the ops a lone vector would.
void accumulate_cell(const Cell& cell, const Eigen::Ref<const Mat>& in, Mat& acc) {
  switch (cell.kind()) {
    case CellKind::zero:
      return;
    case CellKind::scaled_identity:
      acc.noalias() += cell.scale() * in;
      return;
    case CellKind::affine: {
      Mat u(cell.weight().rows(), in.cols());
      for (Eigen::Index c = 0; c < in.cols(); ++c) u.col(c).noalias() = cell.weight() * in.col(c);
      if (cell.has_bias()) u.colwise() += cell.bias();
      activate_in_place(cell.act(), u);
      acc += u;
      return;
    }
  }
}

Mat apply_columns(const BlockMap& map, const Mat& in) {
  const BlockPartition& p = map.partition();
  Mat out(p.total(), in.cols());
  for (int i = 0; i < p.blocks(); ++i) {
    Mat acc = Mat::Zero(p.size(i), in.cols());
    for (int j = 0; j < p.blocks(); ++j) {
      const Cell& cell = map.cell(i, j);
      if (cell.is_zero()) continue;
      accumulate_cell(cell, in.middleRows(p.offset(j), p.size(j)), acc);
    }
    activate_in_place(map.post_act(i), acc);
    out.middleRows(p.offset(i), p.size(i)) = acc;
  }
  return out;
}

}  // namespace

StateVector apply(const BlockMap& map, const StateVector& v) {
  if (v.partition != map.partition())
    throw std::invalid_argument("apply: state partition does not match map partition");
  return StateVector(map.partition(), apply_columns(map, v.data));
}

StateBatch apply_batch(const BlockMap& map, const StateBatch& b) {
  if (b.partition != map.partition())
    throw std::invalid_argument("apply_batch: batch partition does not match map partition");
  return StateBatch(map.partition(), apply_columns(map, b.data));
}

std::vector<StateVector> iterate(const BlockMap& map, const StateVector& v0, int k) {
  if (k < 0) throw std::invalid_argument("iterate: k must be >= 0");
  std::vector<StateVector> result;
  result.reserve(static_cast<size_t>(k) + 1);
  result.push_back(v0);
  for (int t = 0; t < k; ++t) result.push_back(apply(map, result.back()));
  return result;
}

}  // namespace seq2d
