#include <doctest.h>

#include <set>

#include "oracles.hpp"
#include "seq2d/builders.hpp"

using namespace seq2d;

namespace {

std::vector<StateVector> run(const BlockMap& map, const Vec& h0, int k) {
  return iterate(map, StateVector::from_input(map.partition(), h0), k);
}

bool states_equal(const StateVector& a, const StateVector& b) {
  return (a.data.array() == b.data.array()).all();
}

}  // namespace

TEST_CASE("make_mlp_map: scalar chain output and dimension chain errors") {
  MlpLayerSpec chain = MlpLayerSpec::scalar_chain({2, 3, 5});
  BlockMap map = make_mlp_map(chain, CornerKind::zero);
  auto states = run(map, Vec::Ones(1), 3);
  CHECK(states[3].data(3) == doctest::Approx(30.0).epsilon(1e-14));

  MlpLayerSpec broken = chain;
  broken.weights[1] = Mat::Ones(2, 2);  // breaks the 1 -> 1 chain
  CHECK_THROWS_AS(make_mlp_map(broken, CornerKind::zero), std::invalid_argument);
}

TEST_CASE("make_mlp_map: identity corner turns the terminal state into a fixed point") {
  BlockMap map = make_mlp_map(MlpLayerSpec::scalar_chain({2, 3, 5}), CornerKind::identity);
  auto states = run(map, Vec::Ones(1), 4);
  CHECK(states_equal(states[4], states[3]));
}

TEST_CASE("make_mlp_map: four-layer layout matches the experiment shape") {
  MlpLayerSpec spec = MlpLayerSpec::random({2500, 500, 200, 100, 10}, Activation::relu, 1,
                                           /*with_bias=*/true);
  BlockMap map = make_mlp_map(spec, CornerKind::identity);
  CHECK(map.blocks() == 5);
  CHECK(map.partition().sizes() == std::vector<int>{2500, 500, 200, 100, 10});
  CHECK(map.cell(0, 0).kind() == CellKind::scaled_identity);
  for (int i = 1; i < 5; ++i) CHECK(map.cell(i, i - 1).kind() == CellKind::affine);
  CHECK(map.cell(0, 1).is_zero());
}

TEST_CASE("make_rnn_map: unit-gain counting recurrence") {
  RnnSpec spec;
  spec.w_x = Mat::Ones(1, 1);
  spec.w_h = Mat::Ones(1, 1);
  spec.b = Vec::Zero(1);
  spec.act = Activation::identity;
  spec.forcing = {Vec::Ones(1), Vec::Ones(1), Vec::Ones(1)};

  BlockMap map = make_rnn_map(spec);
  auto states = run(map, Vec::Zero(1), 3);
  CHECK(states[3].data(3) == doctest::Approx(3.0).epsilon(1e-14));

  // one extra iteration replays the recurrence from h0 = 0
  auto longer = run(map, 5.0 * Vec::Ones(1), 4);
  CHECK(longer[4].data(3) == doctest::Approx(3.0).epsilon(1e-14));
}

TEST_CASE("make_rnn_map: lifted map reproduces the recurrence on random specs") {
  Rng rng(20);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    RnnSpec spec;
    const int n = 1 + static_cast<int>(rng.uniform_index(3));
    const int m = 1 + static_cast<int>(rng.uniform_index(3));
    const int T = 1 + static_cast<int>(rng.uniform_index(4));
    spec.w_x = oracles::random_mat(rng, n, m);
    spec.w_h = oracles::random_mat(rng, n, n);
    spec.b = oracles::random_vec(rng, n, -0.5, 0.5);
    spec.act = rng.uniform() < 0.5 ? Activation::tanh : Activation::identity;
    for (int k = 0; k < T; ++k) spec.forcing.push_back(oracles::random_vec(rng, m));

    const Vec h0 = oracles::random_vec(rng, n);
    BlockMap map = make_rnn_map(spec);
    auto states = run(map, h0, T);
    worst = std::max(worst, oracles::mixed_error(states.back().block(map.blocks() - 1),
                                                 oracles::rnn_recurrence(spec, h0)));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("make_rnn_map: shape mismatches are rejected") {
  RnnSpec spec;
  spec.w_x = Mat::Ones(2, 1);
  spec.w_h = Mat::Ones(2, 2);
  spec.b = Vec::Zero(1);  // wrong length
  spec.forcing = {Vec::Ones(1)};
  CHECK_THROWS_AS(make_rnn_map(spec), std::invalid_argument);
}

TEST_CASE("make_epsilon_map: endpoints and the half-way decay value") {
  MlpLayerSpec chain = MlpLayerSpec::scalar_chain({2, 3, 5});
  CHECK(make_epsilon_map(chain, 1.0).structurally_equal(
      make_mlp_map(chain, CornerKind::identity)));

  // eps = 0 is stored as a zero-scale identity and behaves like the zero corner
  BlockMap eps0 = make_epsilon_map(chain, 0.0);
  CHECK(eps0.cell(0, 0).kind() == CellKind::scaled_identity);
  BlockMap corner0 = make_mlp_map(chain, CornerKind::zero);
  auto a = run(eps0, Vec::Ones(1), 5);
  auto b = run(corner0, Vec::Ones(1), 5);
  for (size_t k = 0; k < a.size(); ++k) CHECK(states_equal(a[k], b[k]));

  auto half = run(make_epsilon_map(chain, 0.5), Vec::Ones(1), 3);
  CHECK(half[3].data(0) == doctest::Approx(0.125).epsilon(1e-14));

  CHECK_THROWS_AS(make_epsilon_map(chain, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(make_epsilon_map(chain, -0.1), std::invalid_argument);
}

TEST_CASE("make_skip_map: skip value, fixed point, and eta = 0 degeneration") {
  MlpLayerSpec chain = MlpLayerSpec::scalar_chain({2, 3, 5});
  BlockMap sk = make_skip_map(chain, Cell::scalar(7.0), 1.0);
  auto states = run(sk, Vec::Ones(1), 4);
  CHECK(states[3].data(3) == doctest::Approx(37.0).epsilon(1e-14));  // 7 + 30
  CHECK(states_equal(states[4], states[3]));

  BlockMap sk0 = make_skip_map(chain, Cell::scalar(7.0), 0.0);
  BlockMap plain = make_mlp_map(chain, CornerKind::identity);
  auto a = run(sk0, Vec::Ones(1), 4);
  auto b = run(plain, Vec::Ones(1), 4);
  for (size_t k = 0; k < a.size(); ++k) CHECK(states_equal(a[k], b[k]));

  CHECK_THROWS_AS(make_skip_map(chain, Cell::affine(Mat::Ones(2, 1)), 1.0),
                  std::invalid_argument);
}

TEST_CASE("make_above_map: zero S restores the fixed point, nonzero S breaks it") {
  MlpLayerSpec chain = MlpLayerSpec::scalar_chain({2, 3, 5});

  BlockMap plain = make_above_map(chain, Cell::zero());
  auto a = run(plain, Vec::Ones(1), 4);
  CHECK(states_equal(a[4], a[3]));

  BlockMap above = make_above_map(chain, Cell::scalar(1.0));
  auto states = run(above, Vec::Ones(1), 4);
  CHECK_FALSE(states_equal(states[4], states[3]));
  // hand iteration: (1,2,0,0), (1,2,6,0), (1,8,6,30), (1,8,24,30)
  CHECK(states[3].data(1) == doctest::Approx(8.0).epsilon(1e-14));
  CHECK(states[4].data(2) == doctest::Approx(24.0).epsilon(1e-14));

  // the k=4 state depends on the initial q2
  StateVector with_q2 = StateVector::from_input(above.partition(), Vec::Ones(1));
  with_q2.block(2)(0) = 1.0;
  auto q_states = iterate(above, with_q2, 4);
  CHECK((q_states[4].data - states[4].data).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("make_diag_map: hand-checked feedback sums") {
  BlockMap diag = make_diag_map(Cell::scalar(2.0), Cell::scalar(3.0), Cell::scalar(5.0),
                                Cell::scalar(0.5));
  auto states = run(diag, Vec::Ones(1), 4);
  CHECK(states[3].data(1) == doctest::Approx(3.5).epsilon(1e-14));   // 2*(1+0.5+0.25)
  CHECK(states[4].data(1) == doctest::Approx(3.75).epsilon(1e-14));  // 2*(1+0.5+0.25+0.125)

  // degenerate S: identical trajectories to the plain identity-corner map
  BlockMap degenerate = make_diag_map(Cell::scalar(2.0), Cell::scalar(3.0), Cell::scalar(5.0),
                                      Cell::zero());
  BlockMap plain = make_mlp_map(MlpLayerSpec::scalar_chain({2, 3, 5}), CornerKind::identity);
  auto a = run(degenerate, Vec::Ones(1), 5);
  auto b = run(plain, Vec::Ones(1), 5);
  for (size_t k = 0; k < a.size(); ++k) CHECK(states_equal(a[k], b[k]));
}

TEST_CASE("make_superdiag_map: hand-checked feedback sums") {
  BlockMap sup = make_superdiag_map(Cell::scalar(2.0), Cell::scalar(3.0), Cell::scalar(5.0),
                                    Cell::scalar(0.5));
  auto states = run(sup, Vec::Ones(1), 5);
  CHECK(states[3].data(1) == doctest::Approx(5.0).epsilon(1e-14));  // 2*(1+1.5)
  CHECK(states[5].data(1) == doctest::Approx(9.5).epsilon(1e-14));  // 2*(1+1.5+2.25)

  BlockMap degenerate = make_superdiag_map(Cell::scalar(2.0), Cell::scalar(3.0),
                                           Cell::scalar(5.0), Cell::zero());
  auto d = run(degenerate, Vec::Ones(1), 6);
  for (int k = 1; k <= 6; ++k)
    CHECK(d[static_cast<size_t>(k)].data(1) == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("make_layered_tiling: tile counts for the full-scale layout") {
  TileGrid grid = make_layered_tiling({2500, 500, 200, 100, 10}, 100);
  // 5x25 + 2x5 + 1x2 + 1x1 tiles over the four layer blocks
  CHECK(grid.trainable_tiles() == 125 + 10 + 2 + 1);
  CHECK(grid.trainable_scalars() == 500L * 2500 + 200L * 500 + 100L * 200 + 10L * 100);
  CHECK(grid.input_chunks() == 25);
}

TEST_CASE("make_layered_tiling: ragged desk-scale layout") {
  TileGrid grid = make_layered_tiling({784, 128, 64, 10}, 32);
  // 784 -> 24 full chunks + one 16-wide chunk
  CHECK(grid.input_chunks() == 25);
  CHECK(grid.trainable_tiles() == 4 * 25 + 2 * 4 + 1 * 2);
  CHECK(grid.trainable_scalars() == 128L * 784 + 64L * 128 + 10L * 64);
}

TEST_CASE("make_random_tiling: matched budgets, determinism, frozen rows") {
  const std::vector<int> dims{784, 128, 64, 10};
  TileGrid layered = make_layered_tiling(dims, 32);
  TileGrid random_grid = make_random_tiling(dims, 32, layered.trainable_tiles(), 9);

  CHECK(random_grid.trainable_tiles() == layered.trainable_tiles());
  CHECK(random_grid.trainable_scalars() == layered.trainable_scalars());

  TileGrid again = make_random_tiling(dims, 32, layered.trainable_tiles(), 9);
  CHECK(again.mask == random_grid.mask);
  TileGrid other = make_random_tiling(dims, 32, layered.trainable_tiles(), 10);
  CHECK(other.mask != random_grid.mask);

  for (int r = 0; r < random_grid.input_chunks(); ++r)
    for (int c = 0; c < random_grid.grid_size(); ++c)
      CHECK_FALSE(random_grid.mask[static_cast<size_t>(r)][static_cast<size_t>(c)]);

  CHECK_THROWS_AS(make_random_tiling(dims, 32, 100000, 1), std::invalid_argument);
}

TEST_CASE("TileGrid: JSON document round trip") {
  TileGrid grid = make_random_tiling({784, 128, 64, 10}, 32, 110, 3);
  TileGrid back = TileGrid::from_json_text(grid.to_json_text());
  CHECK(back.dims == grid.dims);
  CHECK(back.tile == grid.tile);
  CHECK(back.mask == grid.mask);
  CHECK(back.seed == grid.seed);
}

TEST_CASE("make_tiled_map: structure follows the mask") {
  TileGrid grid = make_random_tiling({64, 16, 10}, 8, 12, 5);
  BlockMap map = make_tiled_map(grid, Activation::relu, 5);
  CHECK(map.partition() == grid.partition);
  for (int r = 0; r < grid.grid_size(); ++r) {
    for (int c = 0; c < grid.grid_size(); ++c) {
      if (r < grid.input_chunks()) {
        if (r == c)
          CHECK(map.cell(r, c).kind() == CellKind::scaled_identity);
        else
          CHECK(map.cell(r, c).is_zero());
      } else if (grid.mask[static_cast<size_t>(r)][static_cast<size_t>(c)]) {
        CHECK(map.cell(r, c).kind() == CellKind::affine);
        CHECK_FALSE(map.cell(r, c).has_bias());
      } else {
        CHECK(map.cell(r, c).is_zero());
      }
    }
  }
  // per-cell seeding: same seed reproduces the same weights
  BlockMap again = make_tiled_map(grid, Activation::relu, 5);
  CHECK(again.structurally_equal(map));
}
