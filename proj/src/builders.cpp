#include "seq2d/builders.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "seq2d/rng.hpp"

namespace seq2d {

using nlohmann::json;

void MlpLayerSpec::validate() const {
  if (dims.size() < 2) throw std::invalid_argument("MlpLayerSpec: need at least one layer");
  if (weights.size() != dims.size() - 1)
    throw std::invalid_argument("MlpLayerSpec: expected one weight per layer");
  if (!biases.empty() && biases.size() != weights.size())
    throw std::invalid_argument("MlpLayerSpec: biases must be absent or one per layer");
  for (size_t i = 0; i < weights.size(); ++i) {
    if (weights[i].rows() != dims[i + 1] || weights[i].cols() != dims[i])
      throw std::invalid_argument("MlpLayerSpec: weight " + std::to_string(i + 1) +
                                  " does not chain " + std::to_string(dims[i]) + " -> " +
                                  std::to_string(dims[i + 1]));
    if (!biases.empty() && biases[i].size() != 0 && biases[i].size() != dims[i + 1])
      throw std::invalid_argument("MlpLayerSpec: bias " + std::to_string(i + 1) +
                                  " has wrong length");
  }
}

MlpLayerSpec MlpLayerSpec::random(std::vector<int> dims, Activation act, uint64_t seed,
                                  bool with_bias) {
  MlpLayerSpec spec;
  spec.dims = std::move(dims);
  spec.act = act;
  for (size_t i = 0; i + 1 < spec.dims.size(); ++i) {
    spec.weights.push_back(
        he_uniform(spec.dims[i + 1], spec.dims[i], seed, static_cast<uint64_t>(i + 1), 0));
    if (with_bias) {
      Rng rng = Rng::derive(seed, static_cast<uint64_t>(i + 1), 1);
      Vec b(spec.dims[i + 1]);
      for (Eigen::Index k = 0; k < b.size(); ++k) b(k) = rng.uniform(-0.1, 0.1);
      spec.biases.push_back(std::move(b));
    }
  }
  spec.validate();
  return spec;
}

MlpLayerSpec MlpLayerSpec::scalar_chain(const std::vector<double>& gains) {
  MlpLayerSpec spec;
  spec.dims.assign(gains.size() + 1, 1);
  spec.act = Activation::identity;
  for (double g : gains) spec.weights.push_back(Mat::Constant(1, 1, g));
  spec.validate();
  return spec;
}

namespace {

Cell layer_cell(const MlpLayerSpec& spec, size_t i) {
  if (i < spec.biases.size() && spec.biases[i].size() != 0)
    return Cell::affine(spec.weights[i], spec.biases[i], spec.act);
  return Cell::affine(spec.weights[i], spec.act);
}

BlockMap subdiagonal_map(const MlpLayerSpec& spec) {
  spec.validate();
  BlockMap map{BlockPartition(spec.dims)};
  for (size_t i = 0; i < spec.weights.size(); ++i)
    map.set_cell(static_cast<int>(i + 1), static_cast<int>(i), layer_cell(spec, i));
  return map;
}

}  // namespace

BlockMap make_mlp_map(const MlpLayerSpec& spec, CornerKind corner) {
  BlockMap map = subdiagonal_map(spec);
  if (corner == CornerKind::identity) map.set_cell(0, 0, Cell::scaled_identity(1.0));
  return map;
}

void RnnSpec::validate() const {
  if (forcing.empty()) throw std::invalid_argument("RnnSpec: forcing sequence must be non-empty");
  const int n = static_cast<int>(w_h.rows());
  if (w_h.cols() != n) throw std::invalid_argument("RnnSpec: W_h must be square");
  if (w_x.rows() != n) throw std::invalid_argument("RnnSpec: W_x row count must match W_h");
  if (b.size() != n) throw std::invalid_argument("RnnSpec: bias length must match state size");
  for (const Vec& x : forcing)
    if (x.size() != w_x.cols())
      throw std::invalid_argument("RnnSpec: forcing vector does not match W_x columns");
}

BlockMap make_rnn_map(const RnnSpec& spec) {
  spec.validate();
  const int n = static_cast<int>(spec.w_h.rows());
  const int T = spec.steps();
  BlockMap map{BlockPartition(std::vector<int>(static_cast<size_t>(T) + 1, n))};
  for (int t = 0; t < T; ++t) {
    Vec folded = spec.b + spec.w_x * spec.forcing[static_cast<size_t>(t)];
    map.set_cell(t + 1, t, Cell::affine(spec.w_h, std::move(folded), spec.act));
  }
  return map;
}

BlockMap make_epsilon_map(const MlpLayerSpec& spec, double epsilon) {
  if (epsilon < 0.0 || epsilon > 1.0)
    throw std::invalid_argument("make_epsilon_map: epsilon must lie in [0, 1]");
  BlockMap map = subdiagonal_map(spec);
  map.set_cell(0, 0, Cell::scaled_identity(epsilon));
  return map;
}

namespace {

Cell scale_cell(const Cell& c, double eta) {
  switch (c.kind()) {
    case CellKind::zero: return Cell::zero();
    case CellKind::scaled_identity: return Cell::scaled_identity(eta * c.scale());
    case CellKind::affine:
      if (c.has_bias()) return Cell::affine(eta * c.weight(), eta * c.bias(), c.act());
      return Cell::affine(eta * c.weight(), c.act());
  }
  return Cell::zero();
}

}  // namespace

BlockMap make_skip_map(const MlpLayerSpec& spec, const Cell& skip, double eta) {
  BlockMap map = make_mlp_map(spec, CornerKind::identity);
  // scaling the skip's weights realizes the eta multiplier; exact for the
  // linear skip cells used here
  map.set_cell(map.blocks() - 1, 0, scale_cell(skip, eta));
  return map;
}

BlockMap make_above_map(const MlpLayerSpec& spec, const Cell& s) {
  if (spec.layer_count() < 3)
    throw std::invalid_argument("make_above_map: need at least three layers");
  BlockMap map = make_mlp_map(spec, CornerKind::identity);
  map.set_cell(1, 2, s);
  return map;
}

namespace {

int cell_in_dim(const Cell& c) {
  return c.kind() == CellKind::affine ? static_cast<int>(c.weight().cols()) : -1;
}

int cell_out_dim(const Cell& c) {
  return c.kind() == CellKind::affine ? static_cast<int>(c.weight().rows()) : -1;
}

// Infers the 4-block partition [d0,d1,d2,d3] from the chain f1,f2,f3.
BlockPartition chain_partition(const Cell& f1, const Cell& f2, const Cell& f3) {
  const int d0 = cell_in_dim(f1);
  const int d1 = cell_out_dim(f1) >= 0 ? cell_out_dim(f1) : cell_in_dim(f2);
  const int d2 = cell_out_dim(f2) >= 0 ? cell_out_dim(f2) : cell_in_dim(f3);
  const int d3 = cell_out_dim(f3);
  if (d0 < 1 || d1 < 1 || d2 < 1 || d3 < 1)
    throw std::invalid_argument("cannot infer block dimensions; pass affine chain cells");
  return BlockPartition({d0, d1, d2, d3});
}

}  // namespace

BlockMap make_diag_map(const Cell& f1, const Cell& f2, const Cell& f3, const Cell& s) {
  BlockMap map{chain_partition(f1, f2, f3)};
  map.set_cell(0, 0, Cell::scaled_identity(1.0));
  map.set_cell(1, 0, f1);
  map.set_cell(2, 1, f2);
  map.set_cell(3, 2, f3);
  map.set_cell(1, 1, s);
  return map;
}

BlockMap make_superdiag_map(const Cell& f1, const Cell& f2, const Cell& f3, const Cell& s) {
  BlockMap map{chain_partition(f1, f2, f3)};
  map.set_cell(0, 0, Cell::scaled_identity(1.0));
  map.set_cell(1, 0, f1);
  map.set_cell(2, 1, f2);
  map.set_cell(3, 2, f3);
  map.set_cell(1, 2, s);
  return map;
}

std::vector<int> tile_chunks(int dim, int tile) {
  if (dim < 1 || tile < 1) throw std::invalid_argument("tile_chunks: dim and tile must be >= 1");
  std::vector<int> chunks;
  for (int off = 0; off < dim; off += tile) chunks.push_back(std::min(tile, dim - off));
  return chunks;
}

namespace {

struct TiledLayout {
  BlockPartition partition;
  std::vector<int> chunk_of_layer_start;  // first chunk index of each layer block
  std::vector<int> chunk_of_layer_count;  // chunks covering each layer block
};

TiledLayout tiled_layout(const std::vector<int>& dims, int tile) {
  TiledLayout layout;
  std::vector<int> sizes;
  for (int d : dims) {
    layout.chunk_of_layer_start.push_back(static_cast<int>(sizes.size()));
    std::vector<int> chunks = tile_chunks(d, tile);
    layout.chunk_of_layer_count.push_back(static_cast<int>(chunks.size()));
    sizes.insert(sizes.end(), chunks.begin(), chunks.end());
  }
  layout.partition = BlockPartition(sizes);
  return layout;
}

}  // namespace

int TileGrid::trainable_tiles() const {
  int count = 0;
  for (const auto& row : mask)
    for (bool b : row) count += b ? 1 : 0;
  return count;
}

long TileGrid::trainable_scalars() const {
  long count = 0;
  for (int r = 0; r < grid_size(); ++r)
    for (int c = 0; c < grid_size(); ++c)
      if (mask[static_cast<size_t>(r)][static_cast<size_t>(c)])
        count += static_cast<long>(partition.size(r)) * partition.size(c);
  return count;
}

int TileGrid::input_chunks() const {
  return static_cast<int>(tile_chunks(dims.at(0), tile).size());
}

std::string TileGrid::to_json_text() const {
  json doc;
  doc["dims"] = dims;
  doc["tile"] = tile;
  doc["seed"] = seed;
  json m = json::array();
  for (const auto& row : mask) m.push_back(row);
  doc["mask"] = std::move(m);
  return doc.dump();
}

TileGrid TileGrid::from_json_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("tile grid document is not valid JSON: ") + e.what());
  }
  TileGrid grid;
  grid.dims = doc.at("dims").get<std::vector<int>>();
  grid.tile = doc.at("tile").get<int>();
  grid.seed = doc.value("seed", uint64_t{0});
  grid.partition = tiled_layout(grid.dims, grid.tile).partition;
  const int n = grid.partition.blocks();
  const auto& m = doc.at("mask");
  if (static_cast<int>(m.size()) != n)
    throw std::invalid_argument("tile grid mask shape does not match the tiled partition");
  for (const auto& row : m) {
    if (static_cast<int>(row.size()) != n)
      throw std::invalid_argument("tile grid mask shape does not match the tiled partition");
    grid.mask.push_back(row.get<std::vector<bool>>());
  }
  return grid;
}

TileGrid make_layered_tiling(const std::vector<int>& dims, int tile) {
  if (dims.size() < 2) throw std::invalid_argument("make_layered_tiling: need at least one layer");
  TiledLayout layout = tiled_layout(dims, tile);
  TileGrid grid;
  grid.dims = dims;
  grid.tile = tile;
  grid.partition = layout.partition;
  const int n = grid.partition.blocks();
  grid.mask.assign(static_cast<size_t>(n), std::vector<bool>(static_cast<size_t>(n), false));
  for (size_t layer = 0; layer + 1 < dims.size(); ++layer) {
    const int r0 = layout.chunk_of_layer_start[layer + 1];
    const int rn = layout.chunk_of_layer_count[layer + 1];
    const int c0 = layout.chunk_of_layer_start[layer];
    const int cn = layout.chunk_of_layer_count[layer];
    for (int r = r0; r < r0 + rn; ++r)
      for (int c = c0; c < c0 + cn; ++c) grid.mask[static_cast<size_t>(r)][static_cast<size_t>(c)] = true;
  }
  return grid;
}

TileGrid make_random_tiling(const std::vector<int>& dims, int tile, int budget, uint64_t seed) {
  TileGrid layered = make_layered_tiling(dims, tile);
  const int n = layered.grid_size();
  const int frozen_rows = layered.input_chunks();

  // positions and layered quotas per tile shape
  using Shape = std::pair<int, int>;
  std::map<Shape, std::vector<std::pair<int, int>>> eligible;
  std::map<Shape, int> quota;
  int eligible_total = 0;
  for (int r = frozen_rows; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const Shape shape{layered.partition.size(r), layered.partition.size(c)};
      eligible[shape].emplace_back(r, c);
      ++eligible_total;
      if (layered.mask[static_cast<size_t>(r)][static_cast<size_t>(c)]) quota[shape] += 1;
    }
  }
  if (budget > eligible_total)
    throw std::invalid_argument("make_random_tiling: budget exceeds eligible tile count");

  const int layered_budget = layered.trainable_tiles();
  std::map<Shape, int> draw = quota;
  if (budget != layered_budget) {
    // apportion the requested budget across shapes in the layered proportions
    // (largest remainder), so scalar counts stay comparable
    int assigned = 0;
    std::vector<std::pair<double, Shape>> remainders;
    for (auto& [shape, q] : draw) {
      const double exact = layered_budget > 0
                               ? static_cast<double>(q) * budget / layered_budget
                               : 0.0;
      q = static_cast<int>(exact);
      assigned += q;
      remainders.emplace_back(exact - q, shape);
    }
    std::sort(remainders.begin(), remainders.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });
    for (size_t i = 0; assigned < budget && i < remainders.size(); ++i, ++assigned)
      draw[remainders[i].second] += 1;
  }

  TileGrid grid;
  grid.dims = dims;
  grid.tile = tile;
  grid.partition = layered.partition;
  grid.seed = seed;
  grid.mask.assign(static_cast<size_t>(n), std::vector<bool>(static_cast<size_t>(n), false));

  Rng rng = Rng::derive(seed, 0x7115, 0);
  for (auto& [shape, positions] : eligible) {
    const int want = draw.count(shape) ? draw[shape] : 0;
    if (want > static_cast<int>(positions.size()))
      throw std::invalid_argument("make_random_tiling: budget exceeds eligible tiles of shape " +
                                  std::to_string(shape.first) + "x" + std::to_string(shape.second));
    rng.shuffle(positions);
    for (int i = 0; i < want; ++i)
      grid.mask[static_cast<size_t>(positions[static_cast<size_t>(i)].first)]
               [static_cast<size_t>(positions[static_cast<size_t>(i)].second)] = true;
  }
  return grid;
}

bool tiling_reaches_output(const TileGrid& grid, int max_hops) {
  const int n = grid.grid_size();
  const int frozen = grid.input_chunks();
  const int output_rows = static_cast<int>(tile_chunks(grid.dims.back(), grid.tile).size());
  // hop-by-hop propagation: frozen rows stay live (identity corner), hidden
  // rows light up when they read a live block, and the output counts only
  // when fed through at least one hidden row
  std::vector<char> live(static_cast<size_t>(n), 0);
  std::vector<char> deep(static_cast<size_t>(n), 0);
  for (int r = 0; r < frozen; ++r) live[static_cast<size_t>(r)] = 1;
  for (int hop = 0; hop < max_hops; ++hop) {
    std::vector<char> next_live = live;
    std::vector<char> next_deep = deep;
    for (int r = frozen; r < n; ++r) {
      for (int c = 0; c < n; ++c) {
        if (!grid.mask[static_cast<size_t>(r)][static_cast<size_t>(c)]) continue;
        if (live[static_cast<size_t>(c)]) next_live[static_cast<size_t>(r)] = 1;
        const bool via_hidden = c >= frozen && live[static_cast<size_t>(c)];
        if (via_hidden || deep[static_cast<size_t>(c)]) next_deep[static_cast<size_t>(r)] = 1;
      }
    }
    live.swap(next_live);
    deep.swap(next_deep);
  }
  for (int r = n - output_rows; r < n; ++r)
    if (!deep[static_cast<size_t>(r)]) return false;
  return true;
}

Mat he_uniform(int out_dim, int in_dim, uint64_t seed, uint64_t row, uint64_t col, int fan_in) {
  Rng rng = Rng::derive(seed, row, col);
  const double bound = std::sqrt(6.0 / (fan_in > 0 ? fan_in : in_dim));
  Mat w(out_dim, in_dim);
  for (Eigen::Index c = 0; c < w.cols(); ++c)
    for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = rng.uniform(-bound, bound);
  return w;
}

BlockMap make_tiled_map(const TileGrid& grid, Activation act, uint64_t seed) {
  BlockMap map{grid.partition};
  const int frozen_rows = grid.input_chunks();
  const int output_rows = static_cast<int>(tile_chunks(grid.dims.back(), grid.tile).size());
  for (int r = 0; r < frozen_rows; ++r) map.set_cell(r, r, Cell::scaled_identity(1.0));
  for (int r = 0; r < grid.grid_size(); ++r) {
    // a row applies act to the sum of its tiles, like a layer over the
    // concatenated inputs; output rows stay linear so logits carry sign
    if (r >= frozen_rows && r < grid.grid_size() - output_rows) map.set_post_act(r, act);
    int fan_in = 0;
    for (int c = 0; c < grid.grid_size(); ++c)
      if (grid.mask[static_cast<size_t>(r)][static_cast<size_t>(c)])
        fan_in += grid.partition.size(c);
    for (int c = 0; c < grid.grid_size(); ++c) {
      if (!grid.mask[static_cast<size_t>(r)][static_cast<size_t>(c)]) continue;
      if (r < frozen_rows)
        throw std::invalid_argument("make_tiled_map: mask marks a tile in the frozen input rows");
      Mat w = he_uniform(grid.partition.size(r), grid.partition.size(c), seed,
                         static_cast<uint64_t>(r), static_cast<uint64_t>(c), fan_in);
      map.set_cell(r, c, Cell::affine(std::move(w)));
    }
  }
  return map;
}

}  // namespace seq2d
