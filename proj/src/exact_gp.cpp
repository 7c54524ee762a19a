#include "cagp/exact_gp.hpp"

#include "cagp/linalg.hpp"

namespace cagp {

namespace {

void check_fit_inputs(const Matrix& X, const Vector& y) {
  if (X.rows() != y.size())
    throw DimensionMismatch("X rows " + std::to_string(X.rows()) + " vs y size " +
                            std::to_string(y.size()));
  if (X.rows() == 0) throw DimensionMismatch("empty training set");
  if (X.rows() > kExactSizeCap)
    throw OracleTooLarge("exact GP capped at n = " + std::to_string(kExactSizeCap) +
                         ", got " + std::to_string(X.rows()));
}

}  // namespace

void clamp_variances(Vector& var, const char* where) {
  double worst = 0.0;
  for (Index j = 0; j < var.size(); ++j) {
    if (var(j) < worst) worst = var(j);
    if (var(j) < 0.0) var(j) = 0.0;
  }
  if (worst < -1e-10)
    warn(std::string(where) + ": clamped negative variance " + std::to_string(worst));
}

ExactPosterior fit_exact(const KernelSpec& spec, const HyperParams& params, const Matrix& X,
                         const Vector& y, double mean_const) {
  check_fit_inputs(X, y);
  Matrix Khat = gram(spec, params, X);
  const double s2 = params.noise_var();
  Khat.diagonal().array() += s2;
  CholResult ch = chol_jittered(Khat, Khat.diagonal().mean());
  ExactPosterior post;
  post.spec = spec;
  post.params = params;
  post.X = X;
  post.chol_L = ch.llt.matrixL();
  post.vstar = ch.llt.solve((y.array() - mean_const).matrix());
  post.mean_const = mean_const;
  post.jitter = ch.jitter;
  return post;
}

Prediction predict_exact(const ExactPosterior& post, const Matrix& Xstar) {
  if (Xstar.cols() != post.X.cols()) throw DimensionMismatch("predict_exact input dim");
  const Matrix Kxs = cross_gram(post.spec, post.params, post.X, Xstar);  // n x m
  Prediction out;
  out.mean = Kxs.transpose() * post.vstar;
  out.mean.array() += post.mean_const;

  // var_j = k(x,x) - || L^{-1} K(X, x_j) ||^2
  const double o = post.params.outputscale();
  Matrix W = post.chol_L.triangularView<Eigen::Lower>().solve(Kxs);
  out.var = (o * o - W.colwise().squaredNorm().array()).matrix().transpose();
  clamp_variances(out.var, "predict_exact");
  out.predictive_var = out.var.array() + post.params.noise_var();
  return out;
}

double nll_exact(const KernelSpec& spec, const HyperParams& params, const Matrix& X,
                 const Vector& y, double mean_const) {
  ExactPosterior post = fit_exact(spec, params, X, y, mean_const);
  const Index n = X.rows();
  const Vector r = (y.array() - mean_const).matrix();
  const double logdet = 2.0 * post.chol_L.diagonal().array().log().sum();
  const double log2pi = std::log(2.0 * 3.14159265358979323846);
  return 0.5 * (r.dot(post.vstar) + logdet + static_cast<double>(n) * log2pi);
}

Vector nll_exact_grad(const KernelSpec& spec, const HyperParams& params, const Matrix& X,
                      const Vector& y, double mean_const) {
  check_fit_inputs(X, y);
  const Index n = X.rows();
  Matrix Khat = gram(spec, params, X);
  const double s2 = params.noise_var();
  Khat.diagonal().array() += s2;
  CholResult ch = chol_jittered(Khat, Khat.diagonal().mean());
  const Vector r = (y.array() - mean_const).matrix();
  const Vector v = ch.llt.solve(r);
  const Matrix Kinv = ch.llt.solve(Matrix::Identity(n, n));

  // d nll / d theta = 0.5 [ tr(Khat^{-1} D) - v' D v ] for D = d Khat / d theta
  const Index nl = num_lengthscales(spec, X.cols());
  Vector g(num_hyper(spec, X.cols()));
  for (Index p = 0; p <= nl; ++p) {
    const Matrix D = gram_deriv(spec, params, X, p);
    g(p) = 0.5 * ((Kinv.cwiseProduct(D)).sum() - v.dot(D * v));
  }
  // noise: D = 2 sigma^2 I
  g(nl + 1) = s2 * (Kinv.trace() - v.squaredNorm());
  return g;
}

}  // namespace cagp
