#pragma once

#include <vector>

#include "seq2d/cell.hpp"
#include "seq2d/partition.hpp"

namespace seq2d {

/// Square grid of cells over a BlockPartition, with an optional elementwise
/// post-activation per row. Acting on a partitioned vector, row i produces
/// post_act[i]( sum_j cells[i][j](v_j) ), cells summed left to right.
///
/// Immutable after construction in all evaluation paths; apply/apply_batch
/// are pure and safe to call concurrently.
class BlockMap {
public:
  BlockMap() = default;

  explicit BlockMap(BlockPartition partition)
      : partition_(std::move(partition)),
        cells_(static_cast<size_t>(partition_.blocks()) * partition_.blocks()),
        post_act_(static_cast<size_t>(partition_.blocks()), Activation::identity) {}

  const BlockPartition& partition() const { return partition_; }
  int blocks() const { return partition_.blocks(); }

  const Cell& cell(int row, int col) const { return cells_[index(row, col)]; }

  /// Validates that the cell maps dimension partition[col] -> partition[row].
  void set_cell(int row, int col, Cell c);

  Activation post_act(int row) const { return post_act_.at(static_cast<size_t>(row)); }
  void set_post_act(int row, Activation a) { post_act_.at(static_cast<size_t>(row)) = a; }

  bool structurally_equal(const BlockMap& other) const;

private:
  size_t index(int row, int col) const {
    if (row < 0 || col < 0 || row >= blocks() || col >= blocks())
      throw std::out_of_range("BlockMap: cell index out of range");
    return static_cast<size_t>(row) * blocks() + col;
  }

  BlockPartition partition_;
  std::vector<Cell> cells_;
  std::vector<Activation> post_act_;
};

enum class MapStructure { sequential1d, sequential2d };

/// Sequential1D iff every nonzero cell lies in column 0; any nonzero cell
/// elsewhere makes the map Sequential2D.
MapStructure structure_of(const BlockMap& map);

StateVector apply(const BlockMap& map, const StateVector& v);

/// Columnwise action; column k of the result is bit-identical to
/// apply(map, column k).
StateBatch apply_batch(const BlockMap& map, const StateBatch& b);

/// States [v0, M(v0), ..., M^k(v0)], length k+1.
std::vector<StateVector> iterate(const BlockMap& map, const StateVector& v0, int k);

}  // namespace seq2d
