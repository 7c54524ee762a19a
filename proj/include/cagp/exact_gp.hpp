#pragma once

#include "cagp/kernels.hpp"
#include "cagp/types.hpp"

namespace cagp {

// Dense reference model. Everything here may hold n x n state; fits are
// capped at n <= 5000 so a runaway config fails loudly instead of swapping.
inline constexpr Index kExactSizeCap = 5000;

struct Prediction {
  Vector mean;
  Vector var;             // posterior variance of the latent function
  Vector predictive_var;  // var + noise variance
};

struct ExactPosterior {
  KernelSpec spec;
  HyperParams params;
  Matrix X;
  Matrix chol_L;   // lower Cholesky factor of K + sigma^2 I (jittered)
  Vector vstar;    // (K + sigma^2 I)^{-1} (y - mean)
  double mean_const = 0.0;
  double jitter = 0.0;
};

// mean_const is an optional constant prior mean; default zero.
ExactPosterior fit_exact(const KernelSpec& spec, const HyperParams& params, const Matrix& X,
                         const Vector& y, double mean_const = 0.0);

Prediction predict_exact(const ExactPosterior& post, const Matrix& Xstar);

// Negative log marginal likelihood
//   0.5 * [ (y-m)' Khat^{-1} (y-m) + logdet Khat + n log 2 pi ].
double nll_exact(const KernelSpec& spec, const HyperParams& params, const Matrix& X,
                 const Vector& y, double mean_const = 0.0);

// Gradient of nll_exact in optimizer layout [log_outputscale,
// log_lengthscales..., log_noise]. Dense; same size cap.
Vector nll_exact_grad(const KernelSpec& spec, const HyperParams& params, const Matrix& X,
                      const Vector& y, double mean_const = 0.0);

// Clamp posterior variances at zero; values below -1e-10 draw a warning.
void clamp_variances(Vector& var, const char* where);

}  // namespace cagp
