#pragma once

#include <string>
#include <vector>

namespace seq2d::verify {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Exact/structural invariants of the core map machinery.
CheckResult mlp_equivalence(int trials, double tol, bool inject_fault = false);
CheckResult rnn_equivalence(int trials, double tol);
CheckResult batch_column_equivalence(int trials);
CheckResult partition_conformance(int trials);
CheckResult linear_cell_linearity(int trials);
CheckResult sequential_detection();
CheckResult serialization_roundtrip(int trials);

// Iteration behavior of the named map families.
CheckResult finite_impulse_fixed_point();
CheckResult infinite_impulse_fixed_point();
CheckResult q_invariance_suite();
CheckResult epsilon_continuum();
CheckResult skip_continuation();
CheckResult above_diagonal_behavior();
CheckResult closed_form_agreement(int instances, double tol);

// Differentiation and architecture bookkeeping.
CheckResult gradient_check(int instances, double tol);
CheckResult weight_sharing_equivalence(int instances, double tol);
CheckResult tiling_budgets();

struct Options {
  std::string filter;        // substring match on check names; empty runs all
  bool inject_fault = false; // perturbs a golden map to prove checks can fail
};

std::vector<CheckResult> run_all(const Options& opts);

}  // namespace seq2d::verify
