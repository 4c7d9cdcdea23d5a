#include "seq2d/verify.hpp"

#include <cmath>
#include <sstream>

#include "seq2d/dynamics.hpp"
#include "seq2d/map_io.hpp"
#include "seq2d/rng.hpp"
#include "seq2d/train.hpp"

namespace seq2d::verify {

namespace {

double mixed_error(const Vec& got, const Vec& want) {
  const double scale = std::max(1.0, want.cwiseAbs().maxCoeff());
  return (got - want).cwiseAbs().maxCoeff() / scale;
}

double sup_diff(const Vec& a, const Vec& b) { return (a - b).cwiseAbs().maxCoeff(); }

MlpLayerSpec random_mlp_spec(Rng& rng, int max_dim = 8, int max_layers = 5) {
  MlpLayerSpec spec;
  const int layers = 1 + static_cast<int>(rng.uniform_index(static_cast<uint64_t>(max_layers)));
  for (int i = 0; i <= layers; ++i)
    spec.dims.push_back(1 + static_cast<int>(rng.uniform_index(static_cast<uint64_t>(max_dim))));
  spec.act = rng.uniform() < 0.5 ? Activation::relu : Activation::tanh;
  for (int i = 0; i < layers; ++i) {
    Mat w(spec.dims[static_cast<size_t>(i) + 1], spec.dims[static_cast<size_t>(i)]);
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = rng.uniform(-1.0, 1.0);
    spec.weights.push_back(std::move(w));
    Vec b(spec.dims[static_cast<size_t>(i) + 1]);
    for (Eigen::Index r = 0; r < b.size(); ++r) b(r) = rng.uniform(-0.5, 0.5);
    spec.biases.push_back(std::move(b));
  }
  return spec;
}

// plain loop-nest evaluation of the layer chain, independent of the block
// machinery
Vec nested_forward(const MlpLayerSpec& spec, const Vec& h0) {
  Vec h = h0;
  for (size_t i = 0; i < spec.weights.size(); ++i) {
    Vec u = spec.weights[i] * h;
    if (i < spec.biases.size() && spec.biases[i].size() != 0) u += spec.biases[i];
    for (Eigen::Index k = 0; k < u.size(); ++k) u(k) = activate(spec.act, u(k));
    h = std::move(u);
  }
  return h;
}

Vec random_vec(Rng& rng, int n, double lo = -1.0, double hi = 1.0) {
  Vec v(n);
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.uniform(lo, hi);
  return v;
}

Mat random_mat(Rng& rng, int rows, int cols, double lo = -1.0, double hi = 1.0) {
  Mat m(rows, cols);
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.uniform(lo, hi);
  return m;
}

CheckResult fail(std::string name, std::string detail) {
  return {std::move(name), false, std::move(detail)};
}

CheckResult pass(std::string name, std::string detail = "ok") {
  return {std::move(name), true, std::move(detail)};
}

// A small random map with a trainable subdiagonal chain plus occasional
// extras; activations restricted to ones that are smooth when `smooth`.
struct RandomInstance {
  BlockMap map;
  ParamIndex index;
  StateBatch input;
  std::vector<int> labels;
  int iterations = 1;
  int out_dim = 1;
};

RandomInstance random_instance(Rng& rng, bool smooth) {
  const int n = 2 + static_cast<int>(rng.uniform_index(3));  // 2..4 blocks
  std::vector<int> sizes;
  for (int i = 0; i < n; ++i) sizes.push_back(1 + static_cast<int>(rng.uniform_index(4)));
  BlockMap map{BlockPartition(sizes)};

  auto pick_act = [&]() {
    const double u = rng.uniform();
    if (smooth) return u < 0.34 ? Activation::identity : (u < 0.67 ? Activation::tanh : Activation::sigmoid);
    return u < 0.5 ? Activation::relu : Activation::tanh;
  };

  for (int i = 0; i + 1 < n; ++i) {
    Mat w = random_mat(rng, sizes[static_cast<size_t>(i) + 1], sizes[static_cast<size_t>(i)]);
    if (rng.uniform() < 0.5) {
      Vec b = random_vec(rng, sizes[static_cast<size_t>(i) + 1], -0.5, 0.5);
      map.set_cell(i + 1, i, Cell::affine(std::move(w), std::move(b), pick_act()));
    } else {
      map.set_cell(i + 1, i, Cell::affine(std::move(w), pick_act()));
    }
  }
  if (rng.uniform() < 0.5) map.set_cell(0, 0, Cell::scaled_identity(rng.uniform() < 0.5 ? 1.0 : 0.5));
  if (n >= 3 && rng.uniform() < 0.4) {
    // one extra off-pattern cell below the top row
    const int r = 1 + static_cast<int>(rng.uniform_index(static_cast<uint64_t>(n - 1)));
    const int c = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(n)));
    Mat w = random_mat(rng, sizes[static_cast<size_t>(r)], sizes[static_cast<size_t>(c)]);
    map.set_cell(r, c, Cell::affine(std::move(w), pick_act()));
  }

  RandomInstance inst;
  inst.index = ParamIndex::build_all_affine(map);
  inst.iterations = 1 + static_cast<int>(rng.uniform_index(static_cast<uint64_t>(n)));
  inst.out_dim = sizes.back();
  const int batch = 1 + static_cast<int>(rng.uniform_index(3));
  Mat data = Mat::Zero(map.partition().total(), batch);
  for (int b = 0; b < batch; ++b) data.col(b).head(sizes[0]) = random_vec(rng, sizes[0]);
  inst.input = StateBatch(map.partition(), std::move(data));
  for (int b = 0; b < batch; ++b)
    inst.labels.push_back(static_cast<int>(rng.uniform_index(static_cast<uint64_t>(inst.out_dim))));
  inst.map = std::move(map);
  return inst;
}

}  // namespace

CheckResult mlp_equivalence(int trials, double tol, bool inject_fault) {
  Rng rng(101);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    MlpLayerSpec spec = random_mlp_spec(rng);
    const int T = spec.layer_count();
    BlockMap map = make_mlp_map(spec, t % 2 == 0 ? CornerKind::zero : CornerKind::identity);
    if (inject_fault && t == 0) {
      Mat w = spec.weights[0];
      w(0, 0) += 0.25;
      map.set_cell(1, 0, Cell::affine(std::move(w), spec.act));
    }
    const Vec h0 = random_vec(rng, spec.dims.front());
    StateVector state = StateVector::from_input(map.partition(), h0);
    for (int k = 0; k < T; ++k) state = apply(map, state);
    const Vec got = state.block(map.blocks() - 1);
    const Vec want = nested_forward(spec, h0);
    worst = std::max(worst, mixed_error(got, want));
  }
  std::ostringstream detail;
  detail << trials << " random specs, worst relative error " << worst;
  if (worst > tol) return fail("mlp_equivalence", detail.str());
  return pass("mlp_equivalence", detail.str());
}

CheckResult rnn_equivalence(int trials, double tol) {
  Rng rng(202);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    RnnSpec spec;
    const int n = 1 + static_cast<int>(rng.uniform_index(4));
    const int m = 1 + static_cast<int>(rng.uniform_index(4));
    const int T = 1 + static_cast<int>(rng.uniform_index(5));
    spec.w_x = random_mat(rng, n, m);
    spec.w_h = random_mat(rng, n, n);
    spec.b = random_vec(rng, n, -0.5, 0.5);
    spec.act = rng.uniform() < 0.5 ? Activation::tanh : Activation::identity;
    for (int k = 0; k < T; ++k) spec.forcing.push_back(random_vec(rng, m));

    const Vec h0 = random_vec(rng, n);
    // direct recurrence
    Vec h = h0;
    for (int k = 0; k < T; ++k) {
      Vec u = spec.w_x * spec.forcing[static_cast<size_t>(k)] + spec.w_h * h + spec.b;
      for (Eigen::Index e = 0; e < u.size(); ++e) u(e) = activate(spec.act, u(e));
      h = std::move(u);
    }

    BlockMap map = make_rnn_map(spec);
    StateVector state = StateVector::from_input(map.partition(), h0);
    for (int k = 0; k < T; ++k) state = apply(map, state);
    worst = std::max(worst, mixed_error(state.block(map.blocks() - 1), h));
  }
  std::ostringstream detail;
  detail << trials << " random recurrences, worst relative error " << worst;
  if (worst > tol) return fail("rnn_equivalence", detail.str());
  return pass("rnn_equivalence", detail.str());
}

CheckResult batch_column_equivalence(int trials) {
  Rng rng(303);
  for (int t = 0; t < trials; ++t) {
    RandomInstance inst = random_instance(rng, false);
    StateBatch full(inst.map.partition(),
                    random_mat(rng, inst.map.partition().total(), inst.input.columns()));
    StateBatch out = apply_batch(inst.map, full);
    for (int c = 0; c < full.columns(); ++c) {
      StateVector col = apply(inst.map, full.column(c));
      if (!(col.data.array() == out.data.col(c).array()).all())
        return fail("batch_column_equivalence",
                    "column " + std::to_string(c) + " differs from per-column apply");
    }
  }
  return pass("batch_column_equivalence", std::to_string(trials) + " random batches bit-identical");
}

CheckResult partition_conformance(int trials) {
  Rng rng(404);
  for (int t = 0; t < trials; ++t) {
    RandomInstance inst = random_instance(rng, false);
    StateVector v(inst.map.partition(), random_vec(rng, inst.map.partition().total()));
    StateVector out = apply(inst.map, v);
    if (out.partition != inst.map.partition() || out.data.size() != v.data.size())
      return fail("partition_conformance", "apply changed the partition");
  }
  return pass("partition_conformance", std::to_string(trials) + " random shapes conform");
}

CheckResult linear_cell_linearity(int trials) {
  Rng rng(505);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const int n = 2 + static_cast<int>(rng.uniform_index(3));
    std::vector<int> sizes;
    for (int i = 0; i < n; ++i) sizes.push_back(1 + static_cast<int>(rng.uniform_index(4)));
    BlockMap map{BlockPartition(sizes)};
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const double u = rng.uniform();
        if (u < 0.4) continue;  // zero
        if (u < 0.55 && sizes[static_cast<size_t>(i)] == sizes[static_cast<size_t>(j)]) {
          map.set_cell(i, j, Cell::scaled_identity(rng.uniform(-1.0, 1.0)));
        } else {
          map.set_cell(i, j,
                       Cell::affine(random_mat(rng, sizes[static_cast<size_t>(i)],
                                               sizes[static_cast<size_t>(j)])));
        }
      }
    }
    const int total = map.partition().total();
    const Vec u = random_vec(rng, total);
    const Vec v = random_vec(rng, total);
    const double a = rng.uniform(-2.0, 2.0);
    const double b = rng.uniform(-2.0, 2.0);
    const Vec combined = apply(map, StateVector(map.partition(), a * u + b * v)).data;
    const Vec separate = a * apply(map, StateVector(map.partition(), u)).data +
                         b * apply(map, StateVector(map.partition(), v)).data;
    worst = std::max(worst, mixed_error(combined, separate));
  }
  std::ostringstream detail;
  detail << trials << " random linear maps, worst relative error " << worst;
  if (worst > 1e-12) return fail("linear_cell_linearity", detail.str());
  return pass("linear_cell_linearity", detail.str());
}

CheckResult sequential_detection() {
  // column-0-only stack: Sequential1D
  BlockMap stack{BlockPartition({2, 3, 1})};
  stack.set_cell(0, 0, Cell::affine(Mat::Ones(2, 2)));
  stack.set_cell(1, 0, Cell::affine(Mat::Ones(3, 2)));
  stack.set_cell(2, 0, Cell::affine(Mat::Ones(1, 2)));
  if (structure_of(stack) != MapStructure::sequential1d)
    return fail("sequential_detection", "column-0 stack misclassified");

  // any nonzero cell off column 0 flips the classification
  stack.set_cell(1, 1, Cell::scaled_identity(0.5));
  if (structure_of(stack) != MapStructure::sequential2d)
    return fail("sequential_detection", "off-column cell did not flip the class");

  BlockMap chain = make_mlp_map(MlpLayerSpec::scalar_chain({2, 3, 5}), CornerKind::zero);
  if (structure_of(chain) != MapStructure::sequential2d)
    return fail("sequential_detection", "subdiagonal chain misclassified");
  return pass("sequential_detection");
}

CheckResult serialization_roundtrip(int trials) {
  Rng rng(606);
  for (int t = 0; t < trials; ++t) {
    RandomInstance inst = random_instance(rng, false);
    for (int i = 0; i < inst.map.blocks(); ++i)
      if (rng.uniform() < 0.3) inst.map.set_post_act(i, Activation::tanh);
    BlockMap back = deserialize(serialize(inst.map));
    if (!back.structurally_equal(inst.map))
      return fail("serialization_roundtrip", "round trip lost structure on trial " +
                                                 std::to_string(t));
  }

  // malformed documents carry grid coordinates
  const std::string bad_dims = R"({"partition":[1,2],"cells":[
      {"row":0,"col":1,"kind":"affine","weight":[[1.0]]}]})";
  try {
    deserialize(bad_dims);
    return fail("serialization_roundtrip", "dimension mismatch was not rejected");
  } catch (const ParseError& e) {
    if (std::string(e.what()).find("(0,1)") == std::string::npos)
      return fail("serialization_roundtrip", "error does not name cell (0,1)");
  }
  const std::string bad_identity = R"({"partition":[1,2],"cells":[
      {"row":0,"col":1,"kind":"scaled_identity","scale":1.0}]})";
  try {
    deserialize(bad_identity);
    return fail("serialization_roundtrip", "non-square scaled identity was not rejected");
  } catch (const ParseError&) {
  }
  return pass("serialization_roundtrip", std::to_string(trials) + " random maps round-trip");
}

CheckResult finite_impulse_fixed_point() {
  Rng rng(707);
  for (int t = 0; t < 50; ++t) {
    MlpLayerSpec spec = random_mlp_spec(rng);
    const int T = spec.layer_count();
    BlockMap map = make_mlp_map(spec, CornerKind::zero);
    const Vec h0a = random_vec(rng, spec.dims.front());
    const Vec h0b = random_vec(rng, spec.dims.front());
    auto traj_a = iterate(map, StateVector::from_input(map.partition(), h0a), T + 2);
    auto traj_b = iterate(map, StateVector::from_input(map.partition(), h0b), T + 2);
    const bool input_forgotten =
        (traj_a[static_cast<size_t>(T) + 1].data.array() ==
         traj_b[static_cast<size_t>(T) + 1].data.array())
            .all();
    const bool fixed = (traj_a[static_cast<size_t>(T) + 2].data.array() ==
                        traj_a[static_cast<size_t>(T) + 1].data.array())
                           .all();
    if (!input_forgotten)
      return fail("finite_impulse_fixed_point", "iterate T+1 still depends on the input");
    if (!fixed) return fail("finite_impulse_fixed_point", "iterate T+2 differs from iterate T+1");
  }

  // scalar chain reaches its fixed point at k = 4 with zero residual
  BlockMap chain = make_mlp_map(MlpLayerSpec::scalar_chain({2, 3, 5}), CornerKind::zero);
  StateVector v0 = StateVector::from_input(chain.partition(), Vec::Ones(1));
  FixedPointReport report = find_fixed_point(chain, v0, 10, 1e-15);
  if (!report.reached || report.at_iteration != 4 || report.residual != 0.0)
    return fail("finite_impulse_fixed_point", "scalar chain fixed point not at k=4");
  return pass("finite_impulse_fixed_point");
}

CheckResult infinite_impulse_fixed_point() {
  BlockMap chain = make_mlp_map(MlpLayerSpec::scalar_chain({2, 3, 5}), CornerKind::identity);
  StateVector v0 = StateVector::from_input(chain.partition(), Vec::Ones(1));
  FixedPointReport report = find_fixed_point(chain, v0, 10, 1e-15);
  if (!report.reached || report.at_iteration != 3)
    return fail("infinite_impulse_fixed_point", "scalar chain fixed point not at k=3");

  auto traj = iterate(chain, v0, 4);
  if (!(traj[4].data.array() == traj[3].data.array()).all())
    return fail("infinite_impulse_fixed_point", "iterate 4 differs from iterate 3");

  StateVector w0 = StateVector::from_input(chain.partition(), 2.0 * Vec::Ones(1));
  auto other = iterate(chain, w0, 4);
  if (sup_diff(other[4].data, traj[4].data) <= 1e-6)
    return fail("infinite_impulse_fixed_point", "fixed point does not depend on the input");

  Rng rng(808);
  for (int t = 0; t < 50; ++t) {
    MlpLayerSpec spec = random_mlp_spec(rng);
    spec.act = Activation::tanh;
    const int T = spec.layer_count();
    BlockMap map = make_mlp_map(spec, CornerKind::identity);
    StateVector s0 = StateVector::from_input(map.partition(), random_vec(rng, spec.dims.front()));
    auto states = iterate(map, s0, T + 1);
    if (!(states[static_cast<size_t>(T) + 1].data.array() ==
          states[static_cast<size_t>(T)].data.array())
             .all())
      return fail("infinite_impulse_fixed_point", "random spec not fixed at k=T");
  }
  return pass("infinite_impulse_fixed_point");
}

CheckResult q_invariance_suite() {
  MlpLayerSpec chain = MlpLayerSpec::scalar_chain({2, 3, 5});
  const Vec h0 = Vec::Ones(1);

  BlockMap mlp = make_mlp_map(chain, CornerKind::zero);
  QInvarianceReport mlp_report =
      q_invariance_check(mlp, h0, 100, 3, 11, QScope::last_block);
  if (!mlp_report.invariant)
    return fail("q_invariance", "corner-0 chain output depends on q (max dev " +
                                    std::to_string(mlp_report.max_deviation) + ")");

  BlockMap minf = make_mlp_map(chain, CornerKind::identity);
  if (!q_invariance_check(minf, h0, 100, 3, 12, QScope::full_state).invariant)
    return fail("q_invariance", "identity-corner chain state depends on q at k=3");

  BlockMap skip = make_skip_map(chain, Cell::scalar(7.0), 1.0);
  if (!q_invariance_check(skip, h0, 100, 3, 13, QScope::full_state).invariant)
    return fail("q_invariance", "skip map state depends on q at k=3");

  // diagonal S feeds q back into the state: invariance must break
  BlockMap diag = make_diag_map(Cell::scalar(2.0), Cell::scalar(3.0), Cell::scalar(5.0),
                                Cell::scalar(0.5));
  QInvarianceReport diag_report =
      q_invariance_check(diag, h0, 100, 3, 14, QScope::full_state);
  if (diag_report.invariant || diag_report.max_deviation <= 1e-6)
    return fail("q_invariance", "diagonal-S map unexpectedly q-invariant");
  return pass("q_invariance");
}

CheckResult epsilon_continuum() {
  MlpLayerSpec chain = MlpLayerSpec::scalar_chain({2, 3, 5});
  const Vec h0 = Vec::Ones(1);
  for (double eps : {0.0, 0.25, 0.5, 1.0})
    for (int k = 0; k <= 20; ++k)
      if (!epsilon_decay_check(chain, eps, h0, k))
        return fail("epsilon_continuum", "decay law fails at eps=" + std::to_string(eps) +
                                             ", k=" + std::to_string(k));

  // spot value: eps = 0.5, k = 3 leaves 0.125 h0 in the top block
  BlockMap half = make_epsilon_map(chain, 0.5);
  auto traj = iterate(half, StateVector::from_input(half.partition(), h0), 3);
  if (std::abs(traj[3].data(0) - 0.125) > 1e-12)
    return fail("epsilon_continuum", "top block is not eps^3 h0");

  if (!make_epsilon_map(chain, 1.0).structurally_equal(
          make_mlp_map(chain, CornerKind::identity)))
    return fail("epsilon_continuum", "eps=1 is not the identity-corner map");

  // eps = 0 behaves exactly like the zero-corner map
  BlockMap zero_eps = make_epsilon_map(chain, 0.0);
  BlockMap zero_corner = make_mlp_map(chain, CornerKind::zero);
  auto za = iterate(zero_eps, StateVector::from_input(zero_eps.partition(), h0), 6);
  auto zb = iterate(zero_corner, StateVector::from_input(zero_corner.partition(), h0), 6);
  for (size_t k = 0; k < za.size(); ++k)
    if (!(za[k].data.array() == zb[k].data.array()).all())
      return fail("epsilon_continuum", "eps=0 trajectory differs from the zero corner");

  // random nonlinear specs obey the same law
  Rng rng(909);
  for (int t = 0; t < 50; ++t) {
    MlpLayerSpec spec = random_mlp_spec(rng, 4, 3);
    if (!epsilon_decay_check(spec, 0.5, random_vec(rng, spec.dims.front()),
                             spec.layer_count() + 3))
      return fail("epsilon_continuum", "decay law fails on a random spec");
  }
  return pass("epsilon_continuum");
}

CheckResult skip_continuation() {
  MlpLayerSpec chain = MlpLayerSpec::scalar_chain({2, 3, 5});
  const Vec h0 = Vec::Ones(1);

  BlockMap sk1 = make_skip_map(chain, Cell::scalar(7.0), 1.0);
  auto traj = iterate(sk1, StateVector::from_input(sk1.partition(), h0), 4);
  // last block carries eta S(h0) + f3(f2(f1(h0))) = 7 + 30
  if (std::abs(traj[3].data(3) - 37.0) > 1e-12)
    return fail("skip_continuation", "skip value wrong at k=3");
  if (!(traj[4].data.array() == traj[3].data.array()).all())
    return fail("skip_continuation", "k=4 state differs from the k=3 fixed point");

  BlockMap sk0 = make_skip_map(chain, Cell::scalar(7.0), 0.0);
  BlockMap minf = make_mlp_map(chain, CornerKind::identity);
  auto a = iterate(sk0, StateVector::from_input(sk0.partition(), h0), 5);
  auto b = iterate(minf, StateVector::from_input(minf.partition(), h0), 5);
  for (size_t k = 0; k < a.size(); ++k)
    if (sup_diff(a[k].data, b[k].data) > 0.0)
      return fail("skip_continuation", "eta=0 does not reproduce the plain trajectory");

  // trajectory gap scales exactly linearly in eta
  const double gap_1 = sup_diff(traj[3].data, b[3].data);
  for (double eta : {0.5, 0.25, 0.125}) {
    BlockMap sk = make_skip_map(chain, Cell::scalar(7.0), eta);
    auto te = iterate(sk, StateVector::from_input(sk.partition(), h0), 3);
    const double gap = sup_diff(te[3].data, b[3].data);
    if (std::abs(gap - eta * gap_1) > 1e-12)
      return fail("skip_continuation", "gap is not linear in eta");
  }
  return pass("skip_continuation");
}

CheckResult above_diagonal_behavior() {
  MlpLayerSpec chain = MlpLayerSpec::scalar_chain({2, 3, 5});
  const Vec h0 = Vec::Ones(1);

  // degenerate S: reduces to the identity-corner fixed point
  BlockMap degenerate = make_above_map(chain, Cell::zero());
  auto dt = iterate(degenerate, StateVector::from_input(degenerate.partition(), h0), 4);
  if (!(dt[4].data.array() == dt[3].data.array()).all())
    return fail("above_diagonal", "zero S does not restore the fixed point");

  BlockMap above = make_above_map(chain, Cell::scalar(1.0));
  auto traj = iterate(above, StateVector::from_input(above.partition(), h0), 4);
  if (sup_diff(traj[4].data, traj[3].data) <= 1e-6)
    return fail("above_diagonal", "k=4 state does not move; expected no fixed point");

  FixedPointReport report =
      find_fixed_point(above, StateVector::from_input(above.partition(), h0), 10, 1e-12);
  if (report.reached) return fail("above_diagonal", "unexpected fixed point within k=10");

  // the k=4 state depends on q2
  StateVector with_q2 = StateVector::from_input(above.partition(), h0);
  with_q2.block(2)(0) = 1.0;
  auto qt = iterate(above, with_q2, 4);
  if (sup_diff(qt[4].data, traj[4].data) <= 1e-6)
    return fail("above_diagonal", "k=4 state ignores q2");
  return pass("above_diagonal");
}

CheckResult closed_form_agreement(int instances, double tol) {
  // scalar spot values
  {
    BlockMap diag = make_diag_map(Cell::scalar(2.0), Cell::scalar(3.0), Cell::scalar(5.0),
                                  Cell::scalar(0.5));
    auto traj = iterate(diag, StateVector::from_input(diag.partition(), Vec::Ones(1)), 4);
    if (std::abs(traj[3].data(1) - 3.5) > 1e-12 || std::abs(traj[4].data(1) - 3.75) > 1e-12)
      return fail("closed_forms", "diagonal scalar iterates disagree with hand values");
    StateVector cf = closed_form_diag(Cell::scalar(2.0), Cell::scalar(3.0), Cell::scalar(5.0),
                                      Cell::scalar(0.5), Vec::Ones(1), 4);
    if (sup_diff(cf.data, traj[4].data) > 1e-12)
      return fail("closed_forms", "diagonal closed form disagrees with iteration at k=4");
  }
  {
    BlockMap sup = make_superdiag_map(Cell::scalar(2.0), Cell::scalar(3.0), Cell::scalar(5.0),
                                      Cell::scalar(0.5));
    auto traj = iterate(sup, StateVector::from_input(sup.partition(), Vec::Ones(1)), 5);
    if (std::abs(traj[5].data(1) - 9.5) > 1e-12 || std::abs(traj[3].data(1) - 5.0) > 1e-12)
      return fail("closed_forms", "superdiagonal scalar iterates disagree with hand values");
    StateVector cf = closed_form_superdiag(Cell::scalar(2.0), Cell::scalar(3.0),
                                           Cell::scalar(5.0), Cell::scalar(0.5), Vec::Ones(1), 5);
    if (sup_diff(cf.data, traj[5].data) > 1e-12)
      return fail("closed_forms", "superdiagonal closed form disagrees with iteration at k=5");
  }

  Rng rng(1010);
  double worst = 0.0;
  for (int t = 0; t < instances; ++t) {
    const bool diag = t % 2 == 0;
    const int d0 = 1 + static_cast<int>(rng.uniform_index(4));
    const int d1 = 1 + static_cast<int>(rng.uniform_index(4));
    const int d2 = 1 + static_cast<int>(rng.uniform_index(4));
    const int d3 = 1 + static_cast<int>(rng.uniform_index(4));
    Cell f1 = Cell::affine(random_mat(rng, d1, d0));
    Cell f2 = Cell::affine(random_mat(rng, d2, d1));
    Cell f3 = Cell::affine(random_mat(rng, d3, d2));
    // keep the feedback factor contractive so long iterations stay bounded
    Cell s = diag ? Cell::affine(random_mat(rng, d1, d1, -0.6 / d1, 0.6 / d1))
                  : Cell::affine(random_mat(rng, d1, d2, -0.6 / std::max(d1, d2),
                                            0.6 / std::max(d1, d2)));
    BlockMap map = diag ? make_diag_map(f1, f2, f3, s) : make_superdiag_map(f1, f2, f3, s);
    const Vec h0 = random_vec(rng, d0);
    auto traj = iterate(map, StateVector::from_input(map.partition(), h0), 20);
    for (int k = 3; k <= 20; ++k) {
      StateVector cf = diag ? closed_form_diag(f1, f2, f3, s, h0, k)
                            : closed_form_superdiag(f1, f2, f3, s, h0, k);
      worst = std::max(worst, mixed_error(cf.data, traj[static_cast<size_t>(k)].data));
    }
  }
  std::ostringstream detail;
  detail << instances << " random linear instances, worst relative error " << worst;
  if (worst > tol) return fail("closed_forms", detail.str());

  // geometric limit of the diagonal feedback
  {
    Cell f1 = Cell::scalar(2.0);
    StateVector cf = closed_form_diag(f1, Cell::scalar(3.0), Cell::scalar(5.0),
                                      Cell::scalar(0.5), Vec::Ones(1), 200);
    if (std::abs(cf.data(1) - 4.0) > 1e-10)  // (1 - 0.5)^-1 * 2
      return fail("closed_forms", "diagonal series does not approach its geometric limit");
  }
  return pass("closed_forms", detail.str());
}

CheckResult gradient_check(int instances, double tol) {
  Rng rng(1111);
  double worst = 0.0;
  for (int t = 0; t < instances; ++t) {
    RandomInstance inst = random_instance(rng, /*smooth=*/true);
    if (inst.index.size == 0 || inst.index.size > 100) {
      --t;
      continue;
    }
    Vec params = pack(inst.map, inst.index);
    ForwardTape tape = forward_unrolled(inst.map, inst.input, inst.iterations);
    Mat logits = logits_of(tape, inst.out_dim);
    Vec grad = backward(tape, loss_xent_grad(logits, inst.labels), inst.index);

    const double h = 1e-6;
    BlockMap probe = inst.map;
    for (long i = 0; i < inst.index.size; ++i) {
      Vec p = params;
      p(i) += h;
      unpack(p, inst.index, probe);
      const double up = loss_xent(
          logits_of(forward_unrolled(probe, inst.input, inst.iterations), inst.out_dim),
          inst.labels);
      p(i) -= 2 * h;
      unpack(p, inst.index, probe);
      const double down = loss_xent(
          logits_of(forward_unrolled(probe, inst.input, inst.iterations), inst.out_dim),
          inst.labels);
      const double fd = (up - down) / (2 * h);
      const double err = std::abs(fd - grad(i)) / std::max({1.0, std::abs(fd), std::abs(grad(i))});
      worst = std::max(worst, err);
    }
  }
  std::ostringstream detail;
  detail << instances << " random instances, worst coordinate error " << worst;
  if (worst > tol) return fail("gradient_check", detail.str());
  return pass("gradient_check", detail.str());
}

CheckResult weight_sharing_equivalence(int instances, double tol) {
  Rng rng(1212);
  double worst = 0.0;
  for (int t = 0; t < instances; ++t) {
    RandomInstance inst = random_instance(rng, false);
    if (inst.index.size == 0) {
      --t;
      continue;
    }
    ForwardTape tape = forward_unrolled(inst.map, inst.input, inst.iterations);
    Mat upstream = loss_xent_grad(logits_of(tape, inst.out_dim), inst.labels);
    Vec shared = backward(tape, upstream, inst.index);
    std::vector<Vec> buckets = backward_per_iteration(tape, upstream, inst.index);
    Vec summed = Vec::Zero(inst.index.size);
    for (const Vec& b : buckets) summed += b;
    worst = std::max(worst, mixed_error(summed, shared));
  }
  std::ostringstream detail;
  detail << instances << " random instances, worst deviation " << worst;
  if (worst > tol) return fail("weight_sharing", detail.str());
  return pass("weight_sharing", detail.str());
}

CheckResult tiling_budgets() {
  // paper-shaped grid: 100-wide tiles over 2500-500-200-100-10
  const std::vector<int> paper_dims{2500, 500, 200, 100, 10};
  TileGrid layered = make_layered_tiling(paper_dims, 100);
  if (layered.trainable_tiles() != 138)
    return fail("tiling_budgets",
                "layered tile count " + std::to_string(layered.trainable_tiles()) + ", want 138");
  const long paper_scalars = 500L * 2500 + 200L * 500 + 100L * 200 + 10L * 100;
  if (layered.trainable_scalars() != paper_scalars)
    return fail("tiling_budgets", "layered scalar count mismatch");

  TileGrid randomized = make_random_tiling(paper_dims, 100, layered.trainable_tiles(), 42);
  if (randomized.trainable_scalars() != layered.trainable_scalars())
    return fail("tiling_budgets", "random scalar budget does not match the layered budget");
  TileGrid again = make_random_tiling(paper_dims, 100, layered.trainable_tiles(), 42);
  if (again.mask != randomized.mask)
    return fail("tiling_budgets", "same seed produced a different mask");

  const int frozen = layered.input_chunks();
  for (int r = 0; r < frozen; ++r)
    for (int c = 0; c < randomized.grid_size(); ++c)
      if (randomized.mask[static_cast<size_t>(r)][static_cast<size_t>(c)])
        return fail("tiling_budgets", "random mask marks a frozen row tile");

  // uniformity over a single-shape grid: chi-square over 10k draws
  const std::vector<int> small_dims{4, 4, 4};
  TileGrid small_layered = make_layered_tiling(small_dims, 2);
  const int budget = small_layered.trainable_tiles();
  const int n = small_layered.grid_size();
  const int frozen_small = small_layered.input_chunks();
  std::vector<long> hits(static_cast<size_t>(n) * n, 0);
  const int draws = 10000;
  for (int d = 0; d < draws; ++d) {
    TileGrid g = make_random_tiling(small_dims, 2, budget, 1000 + static_cast<uint64_t>(d));
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c)
        if (g.mask[static_cast<size_t>(r)][static_cast<size_t>(c)])
          ++hits[static_cast<size_t>(r) * n + c];
  }
  const int eligible = (n - frozen_small) * n;
  const double expected = static_cast<double>(draws) * budget / eligible;
  double chi2 = 0.0;
  for (int r = frozen_small; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      const double diff = hits[static_cast<size_t>(r) * n + c] - expected;
      chi2 += diff * diff / expected;
    }
  // dof = eligible - 1 = 23; critical value at p = 0.001
  if (chi2 > 49.73)
    return fail("tiling_budgets", "chi-square " + std::to_string(chi2) + " rejects uniformity");
  return pass("tiling_budgets", "budgets match; chi-square " + std::to_string(chi2));
}

std::vector<CheckResult> run_all(const Options& opts) {
  std::vector<CheckResult> results;
  auto want = [&](const std::string& name) {
    return opts.filter.empty() || name.find(opts.filter) != std::string::npos;
  };

  if (want("mlp_equivalence")) results.push_back(mlp_equivalence(1000, 1e-12, opts.inject_fault));
  if (want("rnn_equivalence")) results.push_back(rnn_equivalence(1000, 1e-12));
  if (want("batch_column_equivalence")) results.push_back(batch_column_equivalence(200));
  if (want("partition_conformance")) results.push_back(partition_conformance(1000));
  if (want("linear_cell_linearity")) results.push_back(linear_cell_linearity(200));
  if (want("sequential_detection")) results.push_back(sequential_detection());
  if (want("serialization_roundtrip")) results.push_back(serialization_roundtrip(100));
  if (want("finite_impulse_fixed_point")) results.push_back(finite_impulse_fixed_point());
  if (want("infinite_impulse_fixed_point")) results.push_back(infinite_impulse_fixed_point());
  if (want("q_invariance")) results.push_back(q_invariance_suite());
  if (want("epsilon_continuum")) results.push_back(epsilon_continuum());
  if (want("skip_continuation")) results.push_back(skip_continuation());
  if (want("above_diagonal")) results.push_back(above_diagonal_behavior());
  if (want("closed_forms")) results.push_back(closed_form_agreement(200, 1e-10));
  if (want("gradient_check")) results.push_back(gradient_check(200, 1e-5));
  if (want("weight_sharing")) results.push_back(weight_sharing_equivalence(100, 1e-10));
  if (want("tiling_budgets")) results.push_back(tiling_budgets());
  return results;
}

}  // namespace seq2d::verify
