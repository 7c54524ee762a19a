#pragma once

#include <optional>

#include "cagp/actions.hpp"
#include "cagp/exact_gp.hpp"

namespace cagp {

// Batch computation-aware posterior. With L L' = S'(K + sigma^2 I)S and
// vtilde = (S'(K + sigma^2 I)S)^{-1} S'y:
//   mean(x) = K(x,X) S vtilde
//   var(x)  = k(x,x) - || L^{-1} S'K(X,x) ||^2
// Only O(n i) state is kept; predictions sweep kernel tiles.
struct CagpState {
  KernelSpec spec;
  HyperParams params;
  Matrix X;
  ActionMatrix S = ActionMatrix::empty(0);
  Matrix chol_L;   // i x i lower factor of S'KhatS (jittered)
  Vector vtilde;   // i
  Vector w;        // S vtilde, cached for the mean sweep
  double jitter = 0.0;
};

CagpState fit_batch(const KernelSpec& spec, const HyperParams& params, const Matrix& X,
                    const Vector& y, const ActionMatrix& S);

Prediction predict_cagp(const CagpState& state, const Matrix& Xstar);

// Iterative refinement; one rank-1 precision factor per accepted action.
// Mathematically equivalent to fit_batch on the same actions.
struct IterState {
  KernelSpec spec;
  HyperParams params;
  Matrix X;
  Vector v;                   // current representer weights
  std::vector<Vector> dirs;   // d_l = s_l - C_{l-1} Khat s_l
  std::vector<double> etas;   // eta_l = s_l' Khat d_l
  Matrix actions_used;        // accepted actions, for batch cross-checks
  Index skipped = 0;          // degenerate actions dropped
};

struct IterPolicy {
  enum class Kind { CgResidual, Given } kind = Kind::CgResidual;
  const ActionMatrix* given = nullptr;  // required for Kind::Given

  static IterPolicy cg() { return {}; }
  static IterPolicy from(const ActionMatrix& S) { return {Kind::Given, &S}; }
};

// Runs at most budget_i steps; the CG-residual policy also stops once
// ||r|| / ||y|| < tol. Actions with eta <= 1e-14 ||Khat s|| ||d|| are skipped
// with a warning.
IterState fit_iterative(const KernelSpec& spec, const HyperParams& params, const Matrix& X,
                        const Vector& y, const IterPolicy& policy, Index budget_i, double tol);

Prediction predict_iterative(const IterState& state, const Matrix& Xstar);

// Reference path: orthonormalize S, then do exact GP regression on the
// projected observations S'y (noise sigma^2 I in projected space). Dense;
// capped at kExactSizeCap. Agrees with fit_batch/predict_cagp.
struct ProjectedFit {
  KernelSpec spec;
  HyperParams params;
  Matrix X;
  Matrix Sortho;   // n x i, orthonormal columns
  Matrix chol_L;   // i x i lower factor of S'KS + sigma^2 I
  Vector vtilde;
};

ProjectedFit fit_via_projected_observation(const KernelSpec& spec, const HyperParams& params,
                                           const Matrix& X, const Vector& y,
                                           const ActionMatrix& S);

Prediction predict_projected(const ProjectedFit& fit, const Matrix& Xstar);

}  // namespace cagp
