#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "seq2d/block_map.hpp"

namespace seq2d {

/// Layer chain of an MLP: dims = [d_0, d_1, ..., d_T] with d_0 the input
/// dimension, weight W_i of shape d_i x d_{i-1} and optional bias b_i.
struct MlpLayerSpec {
  std::vector<int> dims;
  Activation act = Activation::relu;
  std::vector<Mat> weights;
  std::vector<Vec> biases;  // empty entries mean zero bias

  int layer_count() const { return static_cast<int>(dims.size()) - 1; }

  void validate() const;

  /// He-uniform random layers; biases drawn uniformly in [-0.1, 0.1] when
  /// requested, absent otherwise.
  static MlpLayerSpec random(std::vector<int> dims, Activation act, uint64_t seed,
                             bool with_bias = true);

  /// Scalar linear chain (1x1 identity-activation cells), e.g. gains {2,3,5}.
  static MlpLayerSpec scalar_chain(const std::vector<double>& gains);
};

enum class CornerKind { zero, identity };

/// (T+1)-block map with the layer functions on the first subdiagonal and the
/// corner cell at (0,0) either Zero or the identity.
BlockMap make_mlp_map(const MlpLayerSpec& spec, CornerKind corner);

/// A recurrent step h_{t+1} = act(W_x x_{t+1} + W_h h_t + b) with forcing
/// sequence x_1..x_T.
struct RnnSpec {
  Mat w_x;
  Mat w_h;
  Vec b;
  Activation act = Activation::tanh;
  std::vector<Vec> forcing;

  int steps() const { return static_cast<int>(forcing.size()); }
  void validate() const;
};

/// Lifts the recurrence onto a fixed (T+1)-block map over [n, n, ..., n];
/// subdiagonal cell t carries W_h with the forcing folded into its bias
/// (b + W_x x_t), so the map itself is autonomous.
BlockMap make_rnn_map(const RnnSpec& spec);

/// MLP map whose corner is ScaledIdentity(epsilon), 0 <= epsilon <= 1.
BlockMap make_epsilon_map(const MlpLayerSpec& spec, double epsilon);

/// Identity-corner MLP map plus an eta-scaled skip cell at (last, 0).
/// The scaling is folded into the skip cell's weights/scale, so the stored
/// map has no separate runtime multiplier.
BlockMap make_skip_map(const MlpLayerSpec& spec, const Cell& skip, double eta);

/// Identity-corner MLP map with the extra cell s at (1, 2), above the
/// diagonal; requires a spec with at least 3 layers.
BlockMap make_above_map(const MlpLayerSpec& spec, const Cell& s);

/// 4-block map: identity corner, f1/f2/f3 on the subdiagonal, s at (1,1).
/// Block dimensions are inferred from the affine cells.
BlockMap make_diag_map(const Cell& f1, const Cell& f2, const Cell& f3, const Cell& s);

/// 4-block map: identity corner, f1/f2/f3 on the subdiagonal, s at (1,2).
BlockMap make_superdiag_map(const Cell& f1, const Cell& f2, const Cell& f3, const Cell& s);

/// Decomposition of a layered block structure into square tiles of side
/// `tile` (ragged final row/column chunks), with a boolean grid marking the
/// trainable tiles.
struct TileGrid {
  std::vector<int> dims;  // layer dims the tiling was derived from
  int tile = 100;
  BlockPartition partition;  // tiled partition of the full state dimension
  std::vector<std::vector<bool>> mask;
  uint64_t seed = 0;

  int grid_size() const { return partition.blocks(); }
  int trainable_tiles() const;
  long trainable_scalars() const;

  /// Number of tile chunks covering layer block 0 (the frozen identity rows).
  int input_chunks() const;

  std::string to_json_text() const;
  static TileGrid from_json_text(const std::string& text);
};

/// Chunk sizes covering one dimension: tile, tile, ..., remainder.
std::vector<int> tile_chunks(int dim, int tile);

/// Mask covering exactly the first-subdiagonal layer blocks.
TileGrid make_layered_tiling(const std::vector<int>& dims, int tile);

/// Mask with `budget` trainable tiles drawn without replacement from the
/// eligible positions (everything below the frozen identity rows). Draws are
/// stratified by tile shape, with per-shape quotas taken from the layered
/// tiling, so equal budgets give equal trainable scalar counts.
TileGrid make_random_tiling(const std::vector<int>& dims, int tile, int budget, uint64_t seed);

/// Realizes a tile grid as a runnable map: identity tiles down the diagonal
/// of the input rows, one bias-free linear cell per trainable tile
/// (He-uniform init from a per-cell stream of `seed`, scaled to the row
/// fan-in), `act` applied to each hidden row's summed output, and linear
/// output rows. Everything else is zero.
BlockMap make_tiled_map(const TileGrid& grid, Activation act, uint64_t seed);

/// True when the output rows receive input through at least one trainable
/// intermediate row within `max_hops` applications. Draws that fail this
/// leave most parameters without any gradient path to the loss.
bool tiling_reaches_output(const TileGrid& grid, int max_hops);

/// He-uniform matrix with bound sqrt(6 / fan_in); fan_in defaults to
/// in_dim, and callers whose rows sum several cells pass the row's total
/// fan-in so the summed pre-activation keeps the usual scale.
Mat he_uniform(int out_dim, int in_dim, uint64_t seed, uint64_t row, uint64_t col,
               int fan_in = 0);

}  // namespace seq2d
