#include "cagp/metrics.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>
#include <cmath>

namespace cagp {

double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.7071067811865476); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw Error("normal_quantile: p must be in (0, 1)");

  // Acklam's rational approximation, ~1e-9 absolute.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // One Halley step against the exact CDF.
  const double e = standard_normal_cdf(x) - p;
  const double u = e * 2.5066282746310002 * std::exp(0.5 * x * x);  // e / pdf(x)
  x -= u / (1.0 + 0.5 * x * u);
  return x;
}

double coverage_error(const Vector& mean, const Vector& predictive_var, const Vector& y,
                      double alpha) {
  if (mean.size() != y.size() || predictive_var.size() != y.size())
    throw DimensionMismatch("coverage_error sizes");
  if (y.size() == 0) throw Error("coverage_error: empty test set");
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error("coverage_error: alpha must be in (0, 1)");
  const double z = normal_quantile(0.5 * (1.0 + alpha));
  Index covered = 0;
  for (Index j = 0; j < y.size(); ++j) {
    if (!(predictive_var(j) > 0.0)) throw Error("coverage_error: nonpositive variance");
    if (std::abs(y(j) - mean(j)) <= z * std::sqrt(predictive_var(j))) ++covered;
  }
  return std::abs(alpha - static_cast<double>(covered) / static_cast<double>(y.size()));
}

EvalReport eval_predictive(const Vector& mean, const Vector& predictive_var, const Vector& y) {
  if (mean.size() != y.size() || predictive_var.size() != y.size())
    throw DimensionMismatch("eval_predictive sizes");
  if (y.size() == 0) throw Error("eval_predictive: empty test set");
  const double log2pi = 1.8378770664093453;
  double nll = 0.0, sq = 0.0;
  for (Index j = 0; j < y.size(); ++j) {
    const double v = predictive_var(j);
    if (!(v > 0.0)) throw Error("eval_predictive: nonpositive variance");
    const double r = y(j) - mean(j);
    nll += 0.5 * (log2pi + std::log(v) + r * r / v);
    sq += r * r;
  }
  EvalReport rep;
  rep.n_test = y.size();
  rep.test_nll = nll / static_cast<double>(y.size());
  rep.test_rmse = std::sqrt(sq / static_cast<double>(y.size()));
  rep.coverage_error_95 = coverage_error(mean, predictive_var, y, 0.95);
  rep.mean_predictive_var = predictive_var.mean();
  return rep;
}

double grassmann_distance(const Matrix& A, const Matrix& B) {
  if (A.rows() != B.rows()) throw DimensionMismatch("grassmann_distance: row counts differ");
  if (A.cols() < B.cols())
    throw DimensionMismatch("grassmann_distance: first argument must have at least as many columns");
  if (B.cols() == 0) return 0.0;
  const Index k = B.cols();
  auto thin_q = [](const Matrix& M) {
    Eigen::ColPivHouseholderQR<Matrix> qr(M);
    if (qr.rank() < M.cols()) throw RankDeficient("grassmann_distance: input not full column rank");
    Matrix Q = qr.householderQ() * Matrix::Identity(M.rows(), M.cols());
    return Q;
  };
  const Matrix Qa = thin_q(A);
  const Matrix Qb = thin_q(B);
  Eigen::JacobiSVD<Matrix> svd(Qa.transpose() * Qb);
  double sum = 0.0;
  for (Index j = 0; j < k; ++j) {
    double s = svd.singularValues()(j);
    if (s > 1.0) s = 1.0;
    if (s < -1.0) s = -1.0;
    const double theta = std::acos(s);
    sum += theta * theta;
  }
  return std::sqrt(sum);
}

}  // namespace cagp
