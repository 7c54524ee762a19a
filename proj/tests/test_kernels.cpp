#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>

#include "cagp/kernels.hpp"
#include "helpers.hpp"

using namespace cagp;
using namespace testutil;

TEST_CASE("matern kernel closed form") {
  KernelSpec spec;
  HyperParams p = default_params(spec, 1);

  Vector x0 = Vector::Constant(1, 0.0);
  Vector x1 = Vector::Constant(1, 1.0);
  CHECK(kernel_eval(spec, p, x0, x0) == doctest::Approx(1.0).epsilon(1e-14));

  const double s3 = std::sqrt(3.0);
  const double expected = (1.0 + s3) * std::exp(-s3);
  CHECK(kernel_eval(spec, p, x0, x1) == doctest::Approx(expected).epsilon(1e-14));

  // Diagonal equals outputscale squared regardless of lengthscales.
  HyperParams p2 = default_params(spec, 2);
  p2.log_outputscale = std::log(2.0);
  Vector z = Vector::Zero(2);
  CHECK(kernel_eval(spec, p2, z, z) == doctest::Approx(4.0).epsilon(1e-14));
}

TEST_CASE("squared exponential closed form") {
  KernelSpec spec;
  spec.family = KernelFamily::SquaredExponential;
  HyperParams p = default_params(spec, 1);
  Vector x0 = Vector::Constant(1, 0.0);
  Vector x1 = Vector::Constant(1, 0.7);
  CHECK(kernel_eval(spec, p, x0, x1) ==
        doctest::Approx(std::exp(-0.5 * 0.49)).epsilon(1e-14));
}

TEST_CASE("kernel dimension mismatch rejected") {
  KernelSpec spec;
  HyperParams p = default_params(spec, 2);
  Vector x2 = Vector::Zero(2);
  Vector x3 = Vector::Zero(3);
  CHECK_THROWS_AS(kernel_eval(spec, p, x2, x3), DimensionMismatch);
}

TEST_CASE("gram basics") {
  KernelSpec spec;
  Rng rng(11);

  SUBCASE("single row") {
    HyperParams p = typical_params(1);
    Matrix X = random_inputs(1, 1, rng);
    Matrix G = gram(spec, p, X);
    REQUIRE(G.rows() == 1);
    CHECK(G(0, 0) == doctest::Approx(p.outputscale() * p.outputscale()).epsilon(1e-14));
  }

  SUBCASE("exact symmetry") {
    HyperParams p = typical_params(2);
    Matrix X = random_inputs(3, 2, rng);
    Matrix G = gram(spec, p, X);
    CHECK((G - G.transpose()).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("noise-shifted spectrum stays positive") {
    HyperParams p = typical_params(1);
    Matrix X = random_inputs(50, 1, rng);
    Matrix Khat = gram(spec, p, X);
    Khat.diagonal().array() += p.noise_var();
    Eigen::SelfAdjointEigenSolver<Matrix> es(Khat, Eigen::EigenvaluesOnly);
    CHECK(es.eigenvalues().minCoeff() >= p.noise_var() * (1.0 - 1e-8));
  }
}

TEST_CASE("gram blocks tile the full matrix") {
  KernelSpec spec;
  Rng rng(12);
  HyperParams p = typical_params(2);
  Matrix X = random_inputs(23, 2, rng);
  Matrix G = gram(spec, p, X);

  SUBCASE("full range") {
    CHECK((gram_block(spec, p, X, 0, 23, 0, 23) - G).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("single element") {
    Matrix one = gram_block(spec, p, X, 4, 5, 7, 8);
    CHECK(one(0, 0) ==
          doctest::Approx(kernel_eval(spec, p, X.row(4), X.row(7))).epsilon(1e-14));
  }
  SUBCASE("disjoint assembly is exact") {
    Matrix asm_(23, 23);
    const Index cuts[] = {0, 7, 15, 23};
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        asm_.block(cuts[a], cuts[b], cuts[a + 1] - cuts[a], cuts[b + 1] - cuts[b]) =
            gram_block(spec, p, X, cuts[a], cuts[a + 1], cuts[b], cuts[b + 1]);
    CHECK((asm_ - G).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("out of range rejected") {
    CHECK_THROWS_AS(gram_block(spec, p, X, 0, 24, 0, 23), DimensionMismatch);
  }
}

TEST_CASE("stationarity under input shifts") {
  KernelSpec spec;
  Rng rng(13);
  HyperParams p = typical_params(3);
  for (int trial = 0; trial < 10; ++trial) {
    Vector x = rng.normal_vector(3);
    Vector x2 = rng.normal_vector(3);
    Vector c = rng.normal_vector(3);
    const double k1 = kernel_eval(spec, p, x, x2);
    const double k2 = kernel_eval(spec, p, (x + c).eval(), (x2 + c).eval());
    CHECK(std::abs(k1 - k2) < 1e-12);
  }
}

TEST_CASE("outputscale scales the gram quadratically") {
  KernelSpec spec;
  Rng rng(14);
  HyperParams p = typical_params(1);
  Matrix X = random_inputs(8, 1, rng);
  Matrix G = gram(spec, p, X);
  HyperParams p3 = p;
  p3.log_outputscale += std::log(3.0);
  Matrix G3 = gram(spec, p3, X);
  CHECK((G3 - 9.0 * G).cwiseAbs().maxCoeff() < 1e-12 * G3.cwiseAbs().maxCoeff());
}

TEST_CASE("gram derivatives match finite differences") {
  Rng rng(15);
  for (KernelFamily fam : {KernelFamily::Matern32, KernelFamily::SquaredExponential}) {
    KernelSpec spec;
    spec.family = fam;
    HyperParams p = typical_params(2);
    Matrix X = random_inputs(12, 2, rng);
    const double h = 1e-5;
    // which: 0 = log_outputscale, 1.. = log_lengthscales.
    for (Index which = 0; which < 3; ++which) {
      Matrix analytic = gram_deriv(spec, p, X, which);
      HyperParams lo = p, hi = p;
      if (which == 0) {
        lo.log_outputscale -= h;
        hi.log_outputscale += h;
      } else {
        lo.log_lengthscales(which - 1) -= h;
        hi.log_lengthscales(which - 1) += h;
      }
      Matrix fd = (gram(spec, hi, X) - gram(spec, lo, X)) / (2.0 * h);
      const double scale = analytic.cwiseAbs().maxCoeff() + 1e-12;
      CHECK((analytic - fd).cwiseAbs().maxCoeff() / scale < 1e-6);
    }
  }
}

TEST_CASE("hyperparameter packing round trip") {
  KernelSpec spec;
  HyperParams p = typical_params(3, 0.4, 0.7, 0.05);
  Vector v = pack_hyper(p);
  REQUIRE(v.size() == num_hyper(spec, 3));
  HyperParams q = unpack_hyper(spec, 3, v);
  CHECK(q.log_outputscale == p.log_outputscale);
  CHECK((q.log_lengthscales - p.log_lengthscales).norm() == 0.0);
  CHECK(q.log_noise == p.log_noise);

  KernelSpec shared;
  shared.ard = false;
  CHECK(num_lengthscales(shared, 3) == 1);
  CHECK(num_hyper(shared, 3) == 3);
}
