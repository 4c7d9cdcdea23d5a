#pragma once

#include <cstdint>
#include <vector>

#include "seq2d/block_map.hpp"
#include "seq2d/builders.hpp"

namespace seq2d {

struct FixedPointReport {
  bool reached = false;
  int at_iteration = 0;       // first k with ||M(v_k) - v_k||_inf <= tol
  double residual = 0.0;      // sup-norm residual at at_iteration (or at max_k)
};

/// Iterates from v0 and reports the first k <= max_k whose successor step
/// moves by at most tol in sup-norm. Throws if the trajectory leaves the
/// finite range, naming the iteration.
FixedPointReport find_fixed_point(const BlockMap& map, const StateVector& v0, int max_k,
                                  double tol);

enum class ImpulseKind { finite, infinite, asymptotically_finite };

struct ImpulseReport {
  ImpulseKind kind = ImpulseKind::infinite;
  int at_iteration = 0;             // finite: first k from which probes agree
  std::vector<double> deviations;   // max pairwise sup-norm gap per iterate
  double decay_ratio = 0.0;         // geometric fit over the trailing window
  double fit_r2 = 0.0;
};

/// Classifies how long the trajectory remembers block 0. Probes must differ
/// only in block 0 (precondition error otherwise). finite: probes agree at
/// the horizon within tol; asymptotically_finite: the gap decays
/// geometrically (fit ratio < 1, R^2 >= 0.99 over the last 5 iterates)
/// without reaching tol; infinite otherwise.
ImpulseReport classify_impulse(const BlockMap& map, const std::vector<StateVector>& probes,
                               int horizon, double tol);

enum class QScope { full_state, last_block };

struct QInvarianceReport {
  bool invariant = false;
  double max_deviation = 0.0;
};

/// Fills blocks 1..n-1 with q_samples random draws, iterates k times, and
/// compares against the q = 0 run on the chosen scope.
QInvarianceReport q_invariance_check(const BlockMap& map, const Vec& h0, int q_samples, int k,
                                     uint64_t seed, QScope scope, double tol = 1e-12);

/// Closed-form state of the diagonal-S 4-block map after k >= 3 iterations;
/// all cells must be linear.
StateVector closed_form_diag(const Cell& f1, const Cell& f2, const Cell& f3, const Cell& s,
                             const Vec& h0, int k);

/// Closed-form state of the superdiagonal-S 4-block map after k >= 3
/// iterations (odd/even k follow different partial sums of S*f2).
StateVector closed_form_superdiag(const Cell& f1, const Cell& f2, const Cell& f3, const Cell& s,
                                  const Vec& h0, int k);

/// Checks that iterating the epsilon-corner map scales block 0 by eps^k and
/// feeds eps^(k-i) h0 through the first i layers for the remaining blocks.
bool epsilon_decay_check(const MlpLayerSpec& spec, double epsilon, const Vec& h0, int k,
                         double tol = 1e-12);

}  // namespace seq2d
