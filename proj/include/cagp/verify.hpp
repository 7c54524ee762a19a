#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cagp/types.hpp"

namespace cagp {

// One property-check outcome. detail always carries the worst observed error
// so a failing table row is diagnosable on its own.
struct CheckOutcome {
  bool pass = false;
  std::string detail;
};

// Property checks shared between the verify subcommand and the acceptance
// suite; acceptance pins the parameters, verify uses the same values.

// Full-rank dense actions reproduce the dense Cholesky model: predictions at
// n_test random points (rtol_pred) and both training losses against the exact
// negative log marginal likelihood (rtol_loss).
CheckOutcome check_exact_recovery(Index n, Index n_test, double rtol_pred, double rtol_loss,
                                  std::uint64_t seed);

// Batch fit and the orthonormalized projected-observation fit agree pointwise
// on random (params, actions, n <= n_max) instances.
CheckOutcome check_projected_equivalence(int instances, Index n_max, double rtol,
                                         std::uint64_t seed);

// Along nested action prefixes the posterior variance never increases and
// never drops below the exact posterior variance minus slack.
CheckOutcome check_variance_monotonicity(Index n, const std::vector<Index>& budgets,
                                         Index n_probe, int n_seeds, double slack,
                                         std::uint64_t seed);

// Posterior and both losses depend on span(S) only: S -> S W for invertible W
// (general, permutation, positive diagonal) changes nothing beyond rtol.
CheckOutcome check_span_invariance(int n_transforms, double rtol, std::uint64_t seed);

// The O(n i^2) negative ELBO equals the dense n x n brute force
// (expected negative log likelihood under the posterior plus its KL from the
// prior) on random configurations.
CheckOutcome check_elbo_dense_oracle(int configs, Index n, double rtol, std::uint64_t seed);

// Top-eigenvector actions attain the closed-form mutual information
// 0.5 (sum_j log lambda_j - i log sigma^2) within atol and dominate n_random
// random action matrices, for every i <= i_max.
CheckOutcome check_eigen_policy_information(Index n, Index i_max, int n_random, double atol,
                                            std::uint64_t seed);

// CG residual actions span the same subspace as the orthonormalized
// Krylov-power basis (Grassmann distance < span_tol) and the two posteriors
// agree at random test points (rtol_pred).
CheckOutcome check_cg_krylov_span(Index n, Index i, double span_tol, double rtol_pred,
                                  std::uint64_t seed);

// Reproducing-kernel functions with unit norm never beat the worst-case
// bound: squared prediction error <= posterior variance + noise + slack.
CheckOutcome check_worst_case_bound(int n_functions, Index n_points,
                                    const std::vector<Index>& budgets, double slack,
                                    std::uint64_t seed);

// Analytic gradients of both sparse-action losses against central finite
// differences in every coordinate (hyperparameters and action values).
CheckOutcome check_gradient_fd(Index n, Index d, Index i, int n_seeds, double rtol, double atol,
                               double step, std::uint64_t seed);

// Named suites for the verify subcommand, in fixed order.
struct SuiteResult {
  std::string suite;
  CheckOutcome outcome;
};

std::vector<std::string> verify_suite_names();

// Runs one suite by name; "all" runs every suite in order. Unknown names
// throw ConfigError.
std::vector<SuiteResult> run_verify(const std::string& suite, std::uint64_t seed);

}  // namespace cagp
