#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cagp/exact_gp.hpp"
#include "helpers.hpp"

using namespace cagp;
using namespace testutil;

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

HyperParams near_noiseless(Index d) {
  HyperParams p = default_params(KernelSpec{}, d);
  p.log_noise = std::log(1e-8);
  return p;
}

}  // namespace

TEST_CASE("single point posteriors") {
  KernelSpec spec;
  Matrix X = Matrix::Zero(1, 1);
  Vector y = Vector::Constant(1, 2.0);

  SUBCASE("noiseless interpolation") {
    HyperParams p = near_noiseless(1);
    ExactPosterior post = fit_exact(spec, p, X, y);
    CHECK(post.vstar(0) == doctest::Approx(2.0).epsilon(1e-10));
    Prediction pr = predict_exact(post, X);
    CHECK(pr.mean(0) == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(pr.var(0) == doctest::Approx(0.0).epsilon(1e-8));
  }

  SUBCASE("unit noise shrinks the mean") {
    HyperParams p = default_params(spec, 1);
    p.log_noise = 0.0;  // sigma^2 = 1, k(x,x) = 1
    ExactPosterior post = fit_exact(spec, p, X, y);
    Prediction pr = predict_exact(post, X);
    CHECK(pr.mean(0) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("training-input mean identity") {
  // mean(X) = y - sigma^2 v for the representer weights v.
  KernelSpec spec;
  Rng rng(21);
  HyperParams p = typical_params(2);
  Matrix X = random_inputs(40, 2, rng);
  Vector y = rng.normal_vector(40);
  ExactPosterior post = fit_exact(spec, p, X, y);
  Prediction pr = predict_exact(post, X);
  Vector expected = y - p.noise_var() * post.vstar;
  CHECK((pr.mean - expected).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("cholesky factor reconstructs the shifted gram") {
  KernelSpec spec;
  Rng rng(22);
  HyperParams p = typical_params(1);
  Matrix X = random_inputs(30, 1, rng);
  Vector y = rng.normal_vector(30);
  ExactPosterior post = fit_exact(spec, p, X, y);

  Matrix Khat = gram(spec, p, X);
  Khat.diagonal().array() += p.noise_var() + post.jitter;
  Matrix rebuilt = post.chol_L * post.chol_L.transpose();
  CHECK((rebuilt - Khat).norm() / Khat.norm() < 1e-10);

  Vector lhs = Khat * post.vstar;
  CHECK((lhs - y).norm() / y.norm() < 1e-8);
}

TEST_CASE("prediction limits") {
  KernelSpec spec;
  Rng rng(23);
  HyperParams p = typical_params(1);
  Matrix X = random_inputs(30, 1, rng);
  Vector y = rng.normal_vector(30);
  ExactPosterior post = fit_exact(spec, p, X, y);

  SUBCASE("far from the data the prior comes back") {
    Matrix far = Matrix::Constant(1, 1, 1e6);
    Prediction pr = predict_exact(post, far);
    const double o2 = p.outputscale() * p.outputscale();
    CHECK(std::abs(pr.mean(0)) < 1e-10);
    CHECK(pr.var(0) == doctest::Approx(o2).epsilon(1e-12));
    CHECK(pr.predictive_var(0) == doctest::Approx(o2 + p.noise_var()).epsilon(1e-12));
  }

  SUBCASE("variance never exceeds the prior") {
    Matrix probes = random_inputs(60, 1, rng);
    Prediction pr = predict_exact(post, probes);
    const double o2 = p.outputscale() * p.outputscale();
    CHECK(pr.var.maxCoeff() <= o2 + 1e-12);
    CHECK(pr.var.minCoeff() >= 0.0);
  }
}

TEST_CASE("log marginal likelihood values") {
  KernelSpec spec;

  SUBCASE("near-identity covariance") {
    // Tiny outputscale makes K negligible next to sigma^2 = 1.
    HyperParams p = default_params(spec, 1);
    p.log_outputscale = std::log(1e-8);
    p.log_noise = 0.0;
    Rng rng(24);
    Matrix X = random_inputs(5, 1, rng);
    Vector y = Vector::Zero(5);
    CHECK(nll_exact(spec, p, X, y) ==
          doctest::Approx(0.5 * 5.0 * kLog2Pi).epsilon(1e-12));
  }

  SUBCASE("two independent points") {
    // Inputs so distant the off-diagonal underflows to zero: Khat = 2 I.
    HyperParams p = default_params(spec, 1);
    p.log_noise = 0.0;
    Matrix X = far_apart_inputs(2);
    Vector y = Vector::Constant(2, 1.0);
    const double expected = 0.5 * (1.0 + 2.0 * std::log(2.0) + 2.0 * kLog2Pi);
    CHECK(nll_exact(spec, p, X, y) == doctest::Approx(expected).epsilon(1e-12));
  }

  SUBCASE("matches the explicit dense formula") {
    HyperParams p = typical_params(2, 0.2, 0.4, 0.3);
    Rng rng(25);
    Matrix X = random_inputs(60, 2, rng);
    Vector y = rng.normal_vector(60);
    Matrix Khat = gram(spec, p, X);
    Khat.diagonal().array() += p.noise_var();
    const Matrix Kinv = Khat.inverse();
    const double brute =
        0.5 * (y.dot(Kinv * y) + std::log(Khat.determinant()) + 60.0 * kLog2Pi);
    CHECK(rel_err(nll_exact(spec, p, X, y), brute) < 1e-8);
  }
}

TEST_CASE("marginal likelihood gradient matches finite differences") {
  KernelSpec spec;
  Rng rng(26);
  HyperParams p = typical_params(2, 0.1, 0.35, 0.25);
  Matrix X = random_inputs(35, 2, rng);
  Vector y = rng.normal_vector(35);

  Vector g = nll_exact_grad(spec, p, X, y);
  REQUIRE(g.size() == 4);
  const double h = 1e-5;
  Vector x0 = pack_hyper(p);
  for (Index c = 0; c < 4; ++c) {
    Vector lo = x0, hi = x0;
    lo(c) -= h;
    hi(c) += h;
    const double fd = (nll_exact(spec, unpack_hyper(spec, 2, hi), X, y) -
                       nll_exact(spec, unpack_hyper(spec, 2, lo), X, y)) /
                      (2.0 * h);
    CHECK(rel_err(g(c), fd) < 1e-5);
  }
}

TEST_CASE("duplicating a training point never raises variance") {
  KernelSpec spec;
  Rng rng(27);
  HyperParams p = typical_params(1);
  Matrix X = random_inputs(20, 1, rng);
  Vector y = rng.normal_vector(20);

  Matrix X2(21, 1);
  X2.topRows(20) = X;
  X2.row(20) = X.row(0);
  Vector y2(21);
  y2.head(20) = y;
  y2(20) = y(0);

  ExactPosterior base = fit_exact(spec, p, X, y);
  ExactPosterior dup = fit_exact(spec, p, X2, y2);
  Matrix probes = random_inputs(30, 1, rng);
  Prediction pb = predict_exact(base, probes);
  Prediction pd = predict_exact(dup, probes);
  CHECK((pd.var - pb.var).maxCoeff() <= 1e-10);
}

TEST_CASE("oracle size cap enforced") {
  KernelSpec spec;
  HyperParams p = typical_params(1);
  Matrix X(kExactSizeCap + 1, 1);
  X.setZero();
  Vector y = Vector::Zero(kExactSizeCap + 1);
  CHECK_THROWS_AS(fit_exact(spec, p, X, y), OracleTooLarge);
}

TEST_CASE("variance clamp warns below the tolerance floor") {
  WarnCapture capture;
  Vector v(3);
  v << 1.0, -1e-12, -1e-6;
  clamp_variances(v, "test");
  CHECK(v(0) == 1.0);
  CHECK(v(1) == 0.0);
  CHECK(v(2) == 0.0);
  REQUIRE(capture.messages.size() == 1);  // only the large violation warns
}
