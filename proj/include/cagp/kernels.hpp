#pragma once

#include <cmath>
#include <vector>

#include "cagp/types.hpp"

namespace cagp {

enum class KernelFamily { Matern32, SquaredExponential };

struct KernelSpec {
  KernelFamily family = KernelFamily::Matern32;
  bool ard = true;  // one lengthscale per input dimension; otherwise shared
};

// All hyperparameters live on the log scale so the optimizer is unconstrained.
struct HyperParams {
  double log_outputscale = 0.0;
  Vector log_lengthscales;  // size d when ARD, size 1 when shared
  double log_noise = std::log(0.1);

  double outputscale() const { return std::exp(log_outputscale); }
  double noise() const { return std::exp(log_noise); }
  double noise_var() const { return std::exp(2.0 * log_noise); }
  double lengthscale(Index j) const {
    return std::exp(log_lengthscales(log_lengthscales.size() == 1 ? 0 : j));
  }
};

Index num_lengthscales(const KernelSpec& spec, Index d);

// log_outputscale = 0, log_lengthscales = 0, log_noise = log(0.1)
HyperParams default_params(const KernelSpec& spec, Index d);

// Optimizer layout: [log_outputscale, log_lengthscales..., log_noise].
Index num_hyper(const KernelSpec& spec, Index d);
Vector pack_hyper(const HyperParams& p);
HyperParams unpack_hyper(const KernelSpec& spec, Index d, const Vector& v);

double kernel_eval(const KernelSpec& spec, const HyperParams& p,
                   const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& x2);

// Rectangular block K[a0:a1, b0:b1) of the cross-covariance between row sets
// of A and B. Rows are points. The full-matrix variants are conveniences for
// small problems and tests; large-n paths must stay blockwise.
Matrix cross_gram_block(const KernelSpec& spec, const HyperParams& p,
                        const Matrix& A, Index a0, Index a1,
                        const Matrix& B, Index b0, Index b1);

inline Matrix gram_block(const KernelSpec& spec, const HyperParams& p, const Matrix& X,
                         Index r0, Index r1, Index c0, Index c1) {
  return cross_gram_block(spec, p, X, r0, r1, X, c0, c1);
}

Matrix cross_gram(const KernelSpec& spec, const HyperParams& p, const Matrix& A,
                  const Matrix& B);

// Symmetric train Gram; the upper triangle is evaluated and mirrored so the
// result is exactly symmetric.
Matrix gram(const KernelSpec& spec, const HyperParams& p, const Matrix& X);

// Kernel-parameter derivative tiles. dk has num_hyper-1 entries in optimizer
// order minus the noise slot: [d/dlog_outputscale, d/dlog_lengthscale...].
// Noise enters only through the diagonal of K + sigma^2 I and is handled by
// callers. Buffers are resized as needed and reused across tiles.
void cross_gram_block_grads(const KernelSpec& spec, const HyperParams& p,
                            const Matrix& A, Index a0, Index a1,
                            const Matrix& B, Index b0, Index b1,
                            Matrix& k, std::vector<Matrix>& dk);

// Dense n x n derivative of the Gram matrix w.r.t. kernel parameter
// #which (0 = log_outputscale, 1.. = log_lengthscales). Oracle-scale only.
Matrix gram_deriv(const KernelSpec& spec, const HyperParams& p, const Matrix& X, Index which);

}  // namespace cagp
