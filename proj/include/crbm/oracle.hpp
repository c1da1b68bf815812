#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace crbm {

struct OracleCheck {
  std::string name;
  double tolerance = 0.0;
  double observed = 0.0;  // worst discrepancy seen (same units as tolerance)
  bool passed = false;
  std::string detail;
};

struct OracleOptions {
  std::uint64_t seed = 0;
  int bpModels = 50;
  int treeModels = 50;
  int gradientModels = 20;
  long gibbsSweeps = 1000000;
  double perturb = 0.0;  // added to every Wvh entry on the analytic side of the gradient check
};

/// Matrix BP against the per-edge reference in sum and mixed modes, 15 sweeps.
OracleCheck check_matrix_vs_scalar(const OracleOptions& opts);

/// Sum-product on star-shaped models against enumeration: marginals, then Bethe log Z.
std::vector<OracleCheck> check_tree_exactness(const OracleOptions& opts);

/// Exact-inference log-likelihood gradient against centered finite differences, per block.
OracleCheck check_gradients(const OracleOptions& opts);

/// Long-run Gibbs moments on a 3x2 model against enumeration, in binomial standard errors.
OracleCheck check_gibbs_moments(const OracleOptions& opts);

std::vector<OracleCheck> run_oracle_battery(const OracleOptions& opts);

/// One line per check: name, pass/fail, observed, tolerance, detail.
void write_oracle_report(std::ostream& out, const std::vector<OracleCheck>& checks);

}  // namespace crbm
