#include <doctest.h>

#include "oracles.hpp"
#include "seq2d/train.hpp"

using namespace seq2d;

namespace {

// trainable scalar chain with the subdiagonal masked in
struct ChainFixture {
  BlockMap map;
  ParamIndex index;

  explicit ChainFixture(std::vector<double> gains, Activation act = Activation::identity) {
    MlpLayerSpec spec = MlpLayerSpec::scalar_chain(gains);
    spec.act = act;
    map = make_mlp_map(spec, CornerKind::zero);
    index = ParamIndex::build_all_affine(map);
  }
};

StateBatch single_input(const BlockMap& map, double x) {
  Mat data = Mat::Zero(map.partition().total(), 1);
  data(0, 0) = x;
  return StateBatch(map.partition(), std::move(data));
}

}  // namespace

TEST_CASE("pack/unpack: bit-exact round trip") {
  Rng rng(40);
  BlockMap map{BlockPartition({2, 3, 1})};
  map.set_cell(0, 0, Cell::scaled_identity(0.75));
  map.set_cell(1, 0, Cell::affine(oracles::random_mat(rng, 3, 2),
                                  oracles::random_vec(rng, 3), Activation::tanh));
  map.set_cell(2, 1, Cell::affine(oracles::random_mat(rng, 1, 3), Activation::relu));
  std::vector<std::vector<bool>> mask{{true, false, false},
                                      {true, false, false},
                                      {false, true, false}};
  ParamIndex index = ParamIndex::build(map, mask);
  CHECK(index.size == 1 + (6 + 3) + 3);

  Vec params = pack(map, index);
  BlockMap copy = map;
  unpack(params, index, copy);
  CHECK(copy.structurally_equal(map));
  CHECK((pack(copy, index).array() == params.array()).all());

  // untrainable cells never enter the index
  std::vector<std::vector<bool>> none{{false, false, false},
                                      {false, false, false},
                                      {false, false, false}};
  CHECK(ParamIndex::build(map, none).size == 0);
}

TEST_CASE("backward: hand chain rule on a linear scalar chain") {
  ChainFixture fx({2.0, 3.0, 5.0});
  const double x = 1.5, target = 4.0;
  ForwardTape tape = forward_unrolled(fx.map, single_input(fx.map, x), 3);
  Mat logits = logits_of(tape, 1);
  const double y = logits(0, 0);
  CHECK(y == doctest::Approx(30.0 * x).epsilon(1e-14));

  // L = 0.5 (y - t)^2, upstream = y - t
  Mat upstream(1, 1);
  upstream(0, 0) = y - target;
  Vec grad = backward(tape, upstream, fx.index);

  // y = w3 w2 w1 x: dL/dw1 = (y-t) w3 w2 x, dL/dw2 = (y-t) w3 w1 x, dL/dw3 = (y-t) w2 w1 x
  const double d = y - target;
  REQUIRE(grad.size() == 3);
  CHECK(grad(0) == doctest::Approx(d * 15.0 * x).epsilon(1e-12));
  CHECK(grad(1) == doctest::Approx(d * 10.0 * x).epsilon(1e-12));
  CHECK(grad(2) == doctest::Approx(d * 6.0 * x).epsilon(1e-12));
}

TEST_CASE("backward: dead relu cells get zero gradient") {
  ChainFixture fx({-2.0, 3.0, 5.0}, Activation::relu);
  ForwardTape tape = forward_unrolled(fx.map, single_input(fx.map, 1.0), 3);
  Mat upstream = Mat::Ones(1, 1);
  Vec grad = backward(tape, upstream, fx.index);
  // first layer output is relu(-2) = 0, so everything upstream is dead
  CHECK(grad.isZero(0.0));
}

TEST_CASE("backward: finite differences agree on random smooth instances") {
  Rng rng(41);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const int n = 2 + static_cast<int>(rng.uniform_index(3));
    std::vector<int> sizes;
    for (int i = 0; i < n; ++i) sizes.push_back(1 + static_cast<int>(rng.uniform_index(3)));
    BlockMap map{BlockPartition(sizes)};
    auto act = [&]() {
      const double u = rng.uniform();
      return u < 0.34 ? Activation::identity : (u < 0.67 ? Activation::tanh : Activation::sigmoid);
    };
    for (int i = 0; i + 1 < n; ++i) {
      Mat w = oracles::random_mat(rng, sizes[static_cast<size_t>(i) + 1],
                                  sizes[static_cast<size_t>(i)]);
      if (rng.uniform() < 0.5)
        map.set_cell(i + 1, i, Cell::affine(std::move(w),
                                            oracles::random_vec(rng,
                                                                sizes[static_cast<size_t>(i) + 1],
                                                                -0.5, 0.5),
                                            act()));
      else
        map.set_cell(i + 1, i, Cell::affine(std::move(w), act()));
    }
    if (rng.uniform() < 0.5) map.set_cell(0, 0, Cell::scaled_identity(1.0));
    if (n >= 3 && rng.uniform() < 0.4) {
      const int r = 1 + static_cast<int>(rng.uniform_index(static_cast<uint64_t>(n - 1)));
      const int c = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(n)));
      map.set_cell(r, c, Cell::affine(oracles::random_mat(rng, sizes[static_cast<size_t>(r)],
                                                          sizes[static_cast<size_t>(c)]),
                                      act()));
    }

    ParamIndex index = ParamIndex::build_all_affine(map);
    if (index.size == 0 || index.size > 100) {
      --t;
      continue;
    }
    const int iterations = 1 + static_cast<int>(rng.uniform_index(static_cast<uint64_t>(n)));
    const int batch = 1 + static_cast<int>(rng.uniform_index(3));
    Mat data = Mat::Zero(map.partition().total(), batch);
    for (int b = 0; b < batch; ++b)
      data.col(b).head(sizes[0]) = oracles::random_vec(rng, sizes[0]);
    StateBatch input(map.partition(), std::move(data));
    std::vector<int> labels;
    for (int b = 0; b < batch; ++b)
      labels.push_back(static_cast<int>(rng.uniform_index(static_cast<uint64_t>(sizes.back()))));

    ForwardTape tape = forward_unrolled(map, input, iterations);
    Vec grad = backward(tape, loss_xent_grad(logits_of(tape, sizes.back()), labels), index);

    Vec params = pack(map, index);
    BlockMap probe = map;
    const double h = 1e-6;
    for (long i = 0; i < index.size; ++i) {
      Vec p = params;
      p(i) += h;
      unpack(p, index, probe);
      const double up =
          loss_xent(logits_of(forward_unrolled(probe, input, iterations), sizes.back()), labels);
      p(i) -= 2 * h;
      unpack(p, index, probe);
      const double down =
          loss_xent(logits_of(forward_unrolled(probe, input, iterations), sizes.back()), labels);
      const double fd = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(fd - grad(i)) /
                                  std::max({1.0, std::abs(fd), std::abs(grad(i))}));
    }
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("backward: per-iteration buckets sum to the shared gradient") {
  Rng rng(42);
  for (int t = 0; t < 50; ++t) {
    // self-loop plus chain so weight sharing really spans iterations
    BlockMap map{BlockPartition({2, 2})};
    map.set_cell(0, 0, Cell::scaled_identity(0.5));
    map.set_cell(1, 0, Cell::affine(oracles::random_mat(rng, 2, 2), Activation::tanh));
    map.set_cell(1, 1, Cell::affine(oracles::random_mat(rng, 2, 2), Activation::relu));
    ParamIndex index = ParamIndex::build_all_affine(map);

    Mat data = Mat::Zero(4, 2);
    data.col(0).head(2) = oracles::random_vec(rng, 2);
    data.col(1).head(2) = oracles::random_vec(rng, 2);
    ForwardTape tape = forward_unrolled(map, StateBatch(map.partition(), std::move(data)), 3);
    Mat upstream = loss_xent_grad(logits_of(tape, 2), {0, 1});

    Vec shared = backward(tape, upstream, index);
    auto buckets = backward_per_iteration(tape, upstream, index);
    REQUIRE(buckets.size() == 3);
    Vec summed = Vec::Zero(index.size);
    for (const Vec& b : buckets) summed += b;
    CHECK(oracles::mixed_error(summed, shared) <= 1e-10);
  }
}

TEST_CASE("backward: two sweeps over one tape are bit-identical") {
  ChainFixture fx({2.0, -3.0, 5.0}, Activation::tanh);
  ForwardTape tape = forward_unrolled(fx.map, single_input(fx.map, 0.7), 3);
  Mat upstream = Mat::Ones(1, 1);
  Vec a = backward(tape, upstream, fx.index);
  Vec b = backward(tape, upstream, fx.index);
  CHECK((a.array() == b.array()).all());
}

TEST_CASE("forward_unrolled: logits equal the nested forward on random specs") {
  Rng rng(45);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    MlpLayerSpec spec = oracles::random_mlp(rng, 6, 4);
    const int T = spec.layer_count();
    BlockMap map = make_mlp_map(spec, t % 2 == 0 ? CornerKind::zero : CornerKind::identity);
    const int batch = 1 + static_cast<int>(rng.uniform_index(3));
    Mat data = Mat::Zero(map.partition().total(), batch);
    for (int b = 0; b < batch; ++b)
      data.col(b).head(spec.dims.front()) = oracles::random_vec(rng, spec.dims.front());
    ForwardTape tape = forward_unrolled(map, StateBatch(map.partition(), data), T);
    Mat logits = logits_of(tape, spec.dims.back());
    for (int b = 0; b < batch; ++b) {
      Vec want = oracles::nested_mlp(spec, data.col(b).head(spec.dims.front()));
      worst = std::max(worst, oracles::mixed_error(logits.col(b), want));
    }
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("forward_unrolled: four-layer identity-corner layout at T=4") {
  MlpLayerSpec spec = MlpLayerSpec::random({24, 12, 8, 6, 4}, Activation::relu, 6, true);
  BlockMap map = make_mlp_map(spec, CornerKind::identity);
  Rng rng(46);
  Mat data = Mat::Zero(map.partition().total(), 3);
  for (int b = 0; b < 3; ++b) data.col(b).head(24) = oracles::random_vec(rng, 24);
  Mat logits = logits_of(forward_unrolled(map, StateBatch(map.partition(), data), 4), 4);
  for (int b = 0; b < 3; ++b) {
    Vec want = oracles::nested_mlp(spec, data.col(b).head(24));
    CHECK(oracles::mixed_error(logits.col(b), want) <= 1e-12);
  }
}

TEST_CASE("forward_unrolled: zero-weight map gives zero logits") {
  MlpLayerSpec spec;
  spec.dims = {3, 2, 2};
  spec.act = Activation::relu;
  spec.weights = {Mat::Zero(2, 3), Mat::Zero(2, 2)};
  BlockMap map = make_mlp_map(spec, CornerKind::identity);
  Mat data = Mat::Zero(7, 2);
  data.col(0).head(3) = Vec::Ones(3);
  data.col(1).head(3) = -2.0 * Vec::Ones(3);
  Mat logits = logits_of(forward_unrolled(map, StateBatch(map.partition(), data), 2), 2);
  CHECK(logits.isZero(0.0));
}

TEST_CASE("forward_unrolled: preconditions and error paths") {
  ChainFixture fx({2.0, 3.0, 5.0});
  Mat dirty = Mat::Zero(fx.map.partition().total(), 1);
  dirty(1, 0) = 1.0;  // block 1 must start at zero
  CHECK_THROWS_AS(forward_unrolled(fx.map, StateBatch(fx.map.partition(), dirty), 2),
                  std::invalid_argument);

  BlockMap blowup{BlockPartition({1})};
  blowup.set_cell(0, 0, Cell::affine(Mat::Constant(1, 1, 1e200)));
  Mat one = Mat::Ones(1, 1);
  CHECK_THROWS_WITH_AS(forward_unrolled(blowup, StateBatch(blowup.partition(), one), 3),
                       doctest::Contains("iteration"), std::runtime_error);
}

TEST_CASE("loss_xent: uniform logits, confident logits, bad labels") {
  Mat uniform = Mat::Zero(10, 3);
  CHECK(loss_xent(uniform, {0, 5, 9}) == doctest::Approx(std::log(10.0)).epsilon(1e-12));

  Mat confident = Mat::Zero(10, 1);
  confident(4, 0) = 200.0;
  CHECK(loss_xent(confident, {4}) == doctest::Approx(0.0).epsilon(1e-10));

  CHECK_THROWS_AS(loss_xent(uniform, {10, 0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(loss_xent(uniform, {0}), std::invalid_argument);
}

TEST_CASE("accuracy: argmax with ties toward the lowest class") {
  Mat logits(3, 2);
  logits << 2.0, 1.0, 1.0, 1.0, 0.0, 1.0;
  CHECK(accuracy(logits, {0, 0}) == doctest::Approx(1.0));  // ties pick class 0
  CHECK(accuracy(logits, {0, 2}) == doctest::Approx(0.5));
}

TEST_CASE("adam_step: zero gradient, first-step size, determinism") {
  AdamConfig cfg;
  Vec params = Vec::Ones(2);
  AdamState state = AdamState::zero(2);
  adam_step(params, Vec::Zero(2), state, cfg);
  CHECK(params(0) == 1.0);
  CHECK(params(1) == 1.0);

  // first step with unit gradient: delta = -lr * g / (|g| + eps)
  params = Vec::Ones(1);
  state = AdamState::zero(1);
  adam_step(params, Vec::Ones(1), state, cfg);
  CHECK(params(0) == doctest::Approx(1.0 - 1e-3 / (1.0 + 1e-8)).epsilon(1e-15));

  Vec p1 = Vec::Ones(3), p2 = Vec::Ones(3);
  AdamState s1 = AdamState::zero(3), s2 = AdamState::zero(3);
  Vec g(3);
  g << 0.3, -0.7, 2.0;
  adam_step(p1, g, s1, cfg);
  adam_step(p1, g, s1, cfg);
  adam_step(p2, g, s2, cfg);
  adam_step(p2, g, s2, cfg);
  CHECK((p1.array() == p2.array()).all());
}

TEST_CASE("train: a separable two-point problem reaches full accuracy") {
  MlpLayerSpec spec;
  spec.dims = {2, 4, 2};
  spec.act = Activation::tanh;
  spec.weights = {he_uniform(4, 2, 7, 1, 0), he_uniform(2, 4, 7, 2, 1)};
  BlockMap map = make_mlp_map(spec, CornerKind::identity);
  ParamIndex index = ParamIndex::build_all_affine(map);

  Dataset data;
  data.inputs = Mat(2, 2);
  data.inputs << 1.0, -1.0, 1.0, -1.0;
  data.labels = {0, 1};

  TrainConfig cfg;
  cfg.iterations = 2;
  cfg.batch_size = 2;
  cfg.epochs = 30;
  cfg.seed = 3;
  cfg.adam.lr = 0.05;
  TrainingLog log = train(map, index, data, Dataset{Mat(2, 0), {}}, Dataset{Mat(2, 0), {}},
                          cfg, 2);
  CHECK(log.rows.back().accuracy == doctest::Approx(1.0));
}

TEST_CASE("train: frozen cells never change") {
  MlpLayerSpec spec = MlpLayerSpec::random({3, 4, 2}, Activation::tanh, 11, false);
  BlockMap map = make_mlp_map(spec, CornerKind::identity);
  const Cell corner_before = map.cell(0, 0);
  ParamIndex index = ParamIndex::build_all_affine(map);

  Rng rng(43);
  Dataset data;
  data.inputs = oracles::random_mat(rng, 3, 8);
  for (int i = 0; i < 8; ++i) data.labels.push_back(static_cast<int>(rng.uniform_index(2)));

  TrainConfig cfg;
  cfg.iterations = 2;
  cfg.batch_size = 4;
  cfg.epochs = 3;
  train(map, index, data, Dataset{Mat(3, 0), {}}, Dataset{Mat(3, 0), {}}, cfg, 2);
  CHECK(map.cell(0, 0) == corner_before);
  CHECK(map.cell(0, 1).is_zero());
}

TEST_CASE("train: identical seeds give bit-identical logs") {
  auto run_once = [] {
    MlpLayerSpec spec = MlpLayerSpec::random({3, 4, 2}, Activation::relu, 5, true);
    BlockMap map = make_mlp_map(spec, CornerKind::identity);
    ParamIndex index = ParamIndex::build_all_affine(map);
    Rng rng(44);
    Dataset data;
    data.inputs = oracles::random_mat(rng, 3, 16);
    for (int i = 0; i < 16; ++i) data.labels.push_back(static_cast<int>(rng.uniform_index(2)));
    TrainConfig cfg;
    cfg.iterations = 2;
    cfg.batch_size = 4;
    cfg.epochs = 4;
    cfg.seed = 17;
    return train(map, index, data, Dataset{Mat(3, 0), {}}, Dataset{Mat(3, 0), {}}, cfg, 2);
  };
  TrainingLog a = run_once();
  TrainingLog b = run_once();
  REQUIRE(a.rows.size() == b.rows.size());
  for (size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].loss == b.rows[i].loss);
    CHECK(a.rows[i].accuracy == b.rows[i].accuracy);
  }
}

TEST_CASE("train: epsilon continuation records a linear schedule") {
  MlpLayerSpec chain = MlpLayerSpec::scalar_chain({2.0, 3.0});
  BlockMap map = make_epsilon_map(chain, 1.0);
  ParamIndex index = ParamIndex::build_all_affine(map);

  Dataset data;
  data.inputs = Mat(1, 2);
  data.inputs << 1.0, -1.0;
  data.labels = {0, 0};

  TrainConfig cfg;
  cfg.iterations = 2;
  cfg.batch_size = 2;
  cfg.epochs = 5;
  ContinuationSpec cont;
  cont.param = ContinuationSpec::Param::epsilon;
  cont.start = 1.0;
  cont.end = 0.0;
  cfg.continuation = cont;

  TrainingLog log = train(map, index, data, Dataset{Mat(1, 0), {}}, Dataset{Mat(1, 0), {}},
                          cfg, 1);
  REQUIRE(log.continuation_values.size() == 5);
  for (int e = 0; e < 5; ++e)
    CHECK(log.continuation_values[static_cast<size_t>(e)] ==
          doctest::Approx(1.0 - e / 4.0).epsilon(1e-15));
  CHECK(map.cell(0, 0).scale() == doctest::Approx(0.0));
}
