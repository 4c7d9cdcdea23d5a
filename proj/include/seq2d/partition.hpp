#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <string>
#include <vector>

namespace seq2d {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Ordered list of block sizes partitioning a vector dimension.
/// Two partitions are compatible for a square map iff they are identical.
class BlockPartition {
public:
  BlockPartition() = default;

  explicit BlockPartition(std::vector<int> sizes) : sizes_(std::move(sizes)) {
    offsets_.reserve(sizes_.size());
    for (int s : sizes_) {
      if (s < 1) throw std::invalid_argument("BlockPartition: every block size must be >= 1");
      offsets_.push_back(total_);
      total_ += s;
    }
  }

  int blocks() const { return static_cast<int>(sizes_.size()); }
  int size(int i) const { return sizes_.at(static_cast<size_t>(i)); }
  int offset(int i) const { return offsets_.at(static_cast<size_t>(i)); }
  int total() const { return total_; }
  const std::vector<int>& sizes() const { return sizes_; }

  friend bool operator==(const BlockPartition& a, const BlockPartition& b) {
    return a.sizes_ == b.sizes_;
  }
  friend bool operator!=(const BlockPartition& a, const BlockPartition& b) { return !(a == b); }

private:
  std::vector<int> sizes_;
  std::vector<int> offsets_;
  int total_ = 0;
};

/// Flat vector whose entries are grouped into the contiguous, non-overlapping
/// blocks of a BlockPartition.
struct StateVector {
  BlockPartition partition;
  Vec data;

  StateVector() = default;

  StateVector(BlockPartition p, Vec d) : partition(std::move(p)), data(std::move(d)) {
    if (data.size() != partition.total())
      throw std::invalid_argument("StateVector: data length does not match partition total");
  }

  static StateVector zero(const BlockPartition& p) {
    return StateVector(p, Vec::Zero(p.total()));
  }

  /// State with block 0 set to `h0` and all other blocks zero.
  static StateVector from_input(const BlockPartition& p, const Vec& h0) {
    if (p.blocks() == 0 || h0.size() != p.size(0))
      throw std::invalid_argument("StateVector: input does not match block 0");
    Vec d = Vec::Zero(p.total());
    d.head(h0.size()) = h0;
    return StateVector(p, std::move(d));
  }

  auto block(int i) { return data.segment(partition.offset(i), partition.size(i)); }
  auto block(int i) const { return data.segment(partition.offset(i), partition.size(i)); }
};

/// Column-batch of states: column k behaves exactly like a StateVector.
struct StateBatch {
  BlockPartition partition;
  Mat data;  // partition.total() x n

  StateBatch() = default;

  StateBatch(BlockPartition p, Mat d) : partition(std::move(p)), data(std::move(d)) {
    if (data.rows() != partition.total())
      throw std::invalid_argument("StateBatch: row count does not match partition total");
  }

  static StateBatch zero(const BlockPartition& p, int columns) {
    return StateBatch(p, Mat::Zero(p.total(), columns));
  }

  int columns() const { return static_cast<int>(data.cols()); }

  auto block(int i) { return data.middleRows(partition.offset(i), partition.size(i)); }
  auto block(int i) const { return data.middleRows(partition.offset(i), partition.size(i)); }

  StateVector column(int k) const { return StateVector(partition, data.col(k)); }
};

}  // namespace seq2d
