#pragma once

#include "cagp/types.hpp"

namespace cagp {

struct EvalReport {
  double test_nll = 0.0;  // mean Gaussian NLL per test point
  double test_rmse = 0.0;
  double coverage_error_95 = 0.0;
  double mean_predictive_var = 0.0;
  Index n_test = 0;
};

// Inverse standard normal CDF: rational initial guess refined by one Halley
// step against the erfc-based CDF; |Phi(q(p)) - p| stays at machine level.
double normal_quantile(double p);

double standard_normal_cdf(double x);

// |alpha - empirical fraction of y inside mean +- z sqrt(var)| with
// z = normal_quantile((1 + alpha) / 2).
double coverage_error(const Vector& mean, const Vector& predictive_var, const Vector& y,
                      double alpha);

// Metrics in the caller's units; callers de-standardize first. Requires
// strictly positive predictive variances. Coverage is reported at alpha 0.95.
EvalReport eval_predictive(const Vector& mean, const Vector& predictive_var, const Vector& y);

// Principal-angle distance || theta ||_2 between span(A) and span(B). Both
// arguments must have full column rank and A.cols() >= B.cols(); the angle
// count is B.cols().
double grassmann_distance(const Matrix& A, const Matrix& B);

}  // namespace cagp
