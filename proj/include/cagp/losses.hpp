#pragma once

#include "cagp/actions.hpp"

namespace cagp {

enum class LossKind { Elbo, ProjectedNll, ExactNll };

// total == 0.5 * (quadratic_fit + trace_term + complexity + constant) and
// complexity == logdet_StKhatS - logdet_StS, both exactly by construction.
struct LossParts {
  double quadratic_fit = 0.0;
  double trace_term = 0.0;
  double complexity = 0.0;
  double logdet_StKhatS = 0.0;
  double logdet_StS = 0.0;
  double constant = 0.0;
};

struct LossValue {
  double total = 0.0;
  LossParts parts;
};

struct GradientBundle {
  // Optimizer layout [log_outputscale, log_lengthscales..., log_noise].
  Vector d_hyper;
  // Gradient w.r.t. the block values of a block-sparse S, blocks
  // concatenated in order; empty for dense S.
  Vector d_actions;
};

// Negative log likelihood of the projected data S'y under the projected
// prior: 0.5 [ y'S (S'KhatS)^{-1} S'y + logdet(S'KhatS) - logdet(S'S)
//              + i log 2 pi ].
LossValue loss_projected_nll(const KernelSpec& spec, const HyperParams& params, const Matrix& X,
                             const Vector& y, const ActionMatrix& S);

// Negative evidence lower bound of the computation-aware posterior, in its
// explicit O(n i^2) form. Equals the exact negative log marginal likelihood
// when S has full column span.
LossValue loss_elbo(const KernelSpec& spec, const HyperParams& params, const Matrix& X,
                    const Vector& y, const ActionMatrix& S);

LossValue loss_eval(LossKind kind, const KernelSpec& spec, const HyperParams& params,
                    const Matrix& X, const Vector& y, const ActionMatrix& S);

// Loss and analytic gradient from one forward pass plus one blockwise
// backward kernel sweep. ExactNll routes to the dense reference gradient
// (size-capped); S is ignored there.
LossValue loss_grad(LossKind kind, const KernelSpec& spec, const HyperParams& params,
                    const Matrix& X, const Vector& y, const ActionMatrix& S,
                    GradientBundle& grad);

}  // namespace cagp
