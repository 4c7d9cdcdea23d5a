#include "seq2d/dynamics.hpp"

#include <cmath>
#include <stdexcept>

#include "seq2d/rng.hpp"

namespace seq2d {

namespace {

double sup_norm(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

void check_finite(const StateVector& v, int iteration) {
  if (!v.data.allFinite())
    throw std::runtime_error("trajectory became non-finite at iteration " +
                             std::to_string(iteration));
}

}  // namespace

FixedPointReport find_fixed_point(const BlockMap& map, const StateVector& v0, int max_k,
                                  double tol) {
  if (max_k < 1) throw std::invalid_argument("find_fixed_point: max_k must be >= 1");
  if (tol <= 0.0) throw std::invalid_argument("find_fixed_point: tol must be positive");

  StateVector current = v0;
  check_finite(current, 0);
  FixedPointReport report;
  for (int k = 0; k <= max_k; ++k) {
    StateVector next = apply(map, current);
    check_finite(next, k + 1);
    const double residual = sup_norm(next.data - current.data);
    report.at_iteration = k;
    report.residual = residual;
    if (residual <= tol) {
      report.reached = true;
      return report;
    }
    current = std::move(next);
  }
  report.reached = false;
  return report;
}

ImpulseReport classify_impulse(const BlockMap& map, const std::vector<StateVector>& probes,
                               int horizon, double tol) {
  if (probes.size() < 2)
    throw std::invalid_argument("classify_impulse: need at least two probe inputs");
  if (horizon < 1) throw std::invalid_argument("classify_impulse: horizon must be >= 1");
  for (const StateVector& p : probes) {
    if (p.partition != map.partition())
      throw std::invalid_argument("classify_impulse: probe partition mismatch");
    // probes may differ only in block 0
    const int off = p.partition.size(0);
    if ((p.data.tail(p.data.size() - off) - probes[0].data.tail(p.data.size() - off))
            .cwiseAbs()
            .maxCoeff() != 0.0)
      throw std::invalid_argument("classify_impulse: probes differ outside block 0");
  }

  std::vector<StateVector> states(probes);
  ImpulseReport report;
  report.deviations.reserve(static_cast<size_t>(horizon) + 1);
  int agree_from = -1;
  for (int k = 0; k <= horizon; ++k) {
    if (k > 0)
      for (StateVector& s : states) s = apply(map, s);
    double dev = 0.0;
    for (size_t a = 0; a < states.size(); ++a)
      for (size_t b = a + 1; b < states.size(); ++b)
        dev = std::max(dev, sup_norm(states[a].data - states[b].data));
    report.deviations.push_back(dev);
    if (dev <= tol) {
      if (agree_from < 0) agree_from = k;
    } else {
      agree_from = -1;
    }
  }

  if (agree_from >= 0) {
    report.kind = ImpulseKind::finite;
    report.at_iteration = agree_from;
    return report;
  }

  // geometric-decay fit: log-linear regression over the last 5 deviations
  const int window = 5;
  if (static_cast<int>(report.deviations.size()) >= window) {
    std::vector<double> logs;
    bool positive = true;
    for (size_t i = report.deviations.size() - window; i < report.deviations.size(); ++i) {
      if (report.deviations[i] <= 0.0) {
        positive = false;
        break;
      }
      logs.push_back(std::log(report.deviations[i]));
    }
    if (positive) {
      double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
      for (int i = 0; i < window; ++i) {
        sx += i;
        sy += logs[static_cast<size_t>(i)];
        sxx += static_cast<double>(i) * i;
        sxy += i * logs[static_cast<size_t>(i)];
        syy += logs[static_cast<size_t>(i)] * logs[static_cast<size_t>(i)];
      }
      const double n = window;
      const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
      const double ss_tot = syy - sy * sy / n;
      double r2 = 1.0;
      if (ss_tot > 0.0) {
        const double intercept = (sy - slope * sx) / n;
        double ss_res = 0.0;
        for (int i = 0; i < window; ++i) {
          const double e = logs[static_cast<size_t>(i)] - (intercept + slope * i);
          ss_res += e * e;
        }
        r2 = 1.0 - ss_res / ss_tot;
      }
      report.decay_ratio = std::exp(slope);
      report.fit_r2 = r2;
      if (report.decay_ratio < 1.0 && r2 >= 0.99) {
        report.kind = ImpulseKind::asymptotically_finite;
        report.at_iteration = horizon;
        return report;
      }
    }
  }

  report.kind = ImpulseKind::infinite;
  report.at_iteration = horizon;
  return report;
}

QInvarianceReport q_invariance_check(const BlockMap& map, const Vec& h0, int q_samples, int k,
                                     uint64_t seed, QScope scope, double tol) {
  const BlockPartition& p = map.partition();
  StateVector baseline = StateVector::from_input(p, h0);
  for (int t = 0; t < k; ++t) baseline = apply(map, baseline);

  const int tail = p.total() - p.size(0);
  const int last_off = p.offset(p.blocks() - 1);
  const int last_size = p.size(p.blocks() - 1);

  QInvarianceReport report;
  for (int s = 0; s < q_samples; ++s) {
    Rng rng = Rng::derive(seed, static_cast<uint64_t>(s));
    StateVector state = StateVector::from_input(p, h0);
    for (int i = 0; i < tail; ++i) state.data(p.size(0) + i) = rng.uniform(-1.0, 1.0);
    for (int t = 0; t < k; ++t) state = apply(map, state);

    double dev;
    if (scope == QScope::full_state)
      dev = sup_norm(state.data - baseline.data);
    else
      dev = sup_norm(state.data.segment(last_off, last_size) -
                     baseline.data.segment(last_off, last_size));
    report.max_deviation = std::max(report.max_deviation, dev);
  }
  report.invariant = report.max_deviation <= tol;
  return report;
}

namespace {

struct LinearChain {
  Mat f1, f2, f3, s;
  BlockPartition partition;
};

LinearChain linear_chain(const Cell& f1, const Cell& f2, const Cell& f3, const Cell& s,
                         bool s_on_block1) {
  for (const Cell* c : {&f1, &f2, &f3, &s})
    if (!c->is_linear())
      throw std::invalid_argument("closed form requires linear cells");
  // reuse the builder's dimension inference via a throwaway map
  BlockMap probe = s_on_block1 ? make_diag_map(f1, f2, f3, s) : make_superdiag_map(f1, f2, f3, s);
  const BlockPartition& p = probe.partition();
  LinearChain chain;
  chain.partition = p;
  chain.f1 = f1.as_matrix(p.size(1), p.size(0));
  chain.f2 = f2.as_matrix(p.size(2), p.size(1));
  chain.f3 = f3.as_matrix(p.size(3), p.size(2));
  chain.s = s_on_block1 ? s.as_matrix(p.size(1), p.size(1)) : s.as_matrix(p.size(1), p.size(2));
  return chain;
}

// I + A + A^2 + ... + A^m
Mat matrix_power_sum(const Mat& a, int m) {
  Mat sum = Mat::Identity(a.rows(), a.cols());
  Mat power = Mat::Identity(a.rows(), a.cols());
  for (int i = 1; i <= m; ++i) {
    power = a * power;
    sum += power;
  }
  return sum;
}

}  // namespace

StateVector closed_form_diag(const Cell& f1, const Cell& f2, const Cell& f3, const Cell& s,
                             const Vec& h0, int k) {
  if (k < 3) throw std::invalid_argument("closed_form_diag: k must be >= 3");
  LinearChain chain = linear_chain(f1, f2, f3, s, /*s_on_block1=*/true);
  const Vec f1h = chain.f1 * h0;
  StateVector out = StateVector::zero(chain.partition);
  out.block(0) = h0;
  out.block(1) = matrix_power_sum(chain.s, k - 1) * f1h;
  out.block(2) = chain.f2 * (matrix_power_sum(chain.s, k - 2) * f1h);
  out.block(3) = chain.f3 * (chain.f2 * (matrix_power_sum(chain.s, k - 3) * f1h));
  return out;
}

StateVector closed_form_superdiag(const Cell& f1, const Cell& f2, const Cell& f3, const Cell& s,
                                  const Vec& h0, int k) {
  if (k < 3) throw std::invalid_argument("closed_form_superdiag: k must be >= 3");
  LinearChain chain = linear_chain(f1, f2, f3, s, /*s_on_block1=*/false);
  const Mat sf2 = chain.s * chain.f2;
  const Vec f1h = chain.f1 * h0;
  // odd k: sums to (k-1)/2, (k-3)/2, (k-3)/2; even k: (k-2)/2, (k-2)/2, (k-4)/2
  const bool odd = (k % 2) != 0;
  const int m1 = odd ? (k - 1) / 2 : (k - 2) / 2;
  const int m2 = odd ? (k - 3) / 2 : (k - 2) / 2;
  const int m3 = odd ? (k - 3) / 2 : (k - 4) / 2;
  StateVector out = StateVector::zero(chain.partition);
  out.block(0) = h0;
  out.block(1) = matrix_power_sum(sf2, m1) * f1h;
  out.block(2) = chain.f2 * (matrix_power_sum(sf2, m2) * f1h);
  out.block(3) = chain.f3 * (chain.f2 * (matrix_power_sum(sf2, m3) * f1h));
  return out;
}

bool epsilon_decay_check(const MlpLayerSpec& spec, double epsilon, const Vec& h0, int k,
                         double tol) {
  if (epsilon < 0.0 || epsilon > 1.0)
    throw std::invalid_argument("epsilon_decay_check: epsilon must lie in [0, 1]");
  if (k < 0) throw std::invalid_argument("epsilon_decay_check: k must be >= 0");
  spec.validate();

  BlockMap map = make_epsilon_map(spec, epsilon);
  StateVector state = StateVector::from_input(map.partition(), h0);
  for (int t = 0; t < k; ++t) state = apply(map, state);

  const int T = spec.layer_count();
  // block 0 carries eps^k h0 for every k
  Vec expected0 = std::pow(epsilon, k) * h0;
  if ((state.block(0) - expected0).cwiseAbs().maxCoeff() > tol) return false;

  // block i carries the first i layers applied to eps^(k-i) h0, once the
  // signal has had i iterations to reach it
  for (int i = 1; i <= T && i <= k; ++i) {
    Vec v = std::pow(epsilon, k - i) * h0;
    for (int layer = 0; layer < i; ++layer) {
      Vec u = spec.weights[static_cast<size_t>(layer)] * v;
      if (static_cast<size_t>(layer) < spec.biases.size() &&
          spec.biases[static_cast<size_t>(layer)].size() != 0)
        u += spec.biases[static_cast<size_t>(layer)];
      for (Eigen::Index e = 0; e < u.size(); ++e) u(e) = activate(spec.act, u(e));
      v = std::move(u);
    }
    if ((state.block(i) - v).cwiseAbs().maxCoeff() > tol) return false;
  }
  return true;
}

}  // namespace seq2d
