#include "cagp/posterior.hpp"

#include "cagp/linalg.hpp"

namespace cagp {

CagpState fit_batch(const KernelSpec& spec, const HyperParams& params, const Matrix& X,
                    const Vector& y, const ActionMatrix& S) {
  if (X.rows() != y.size()) throw DimensionMismatch("fit_batch: X rows vs y size");
  const Index i = S.cols();
  CagpState st;
  st.spec = spec;
  st.params = params;
  st.X = X;
  st.S = S;
  if (i == 0) {
    st.chol_L.resize(0, 0);
    st.vtilde.resize(0);
    st.w = Vector::Zero(X.rows());
    return st;
  }
  ActionProducts prod = action_products(spec, params, X, S);
  CholResult ch = chol_jittered(prod.StKhatS, prod.StKhatS.trace() / static_cast<double>(i));
  st.chol_L = ch.llt.matrixL();
  st.vtilde = ch.llt.solve(S.apply_transpose(y));
  st.w = S.apply(st.vtilde);
  st.jitter = ch.jitter;
  return st;
}

Prediction predict_cagp(const CagpState& state, const Matrix& Xstar) {
  if (Xstar.cols() != state.X.cols()) throw DimensionMismatch("predict_cagp input dim");
  const Index n = state.X.rows();
  const Index m = Xstar.rows();
  const Index i = state.S.cols();
  const double o = state.params.outputscale();

  Prediction out;
  out.mean = Vector::Zero(m);
  out.var = Vector::Constant(m, o * o);

  for (Index t0 = 0; t0 < m; t0 += kTileSize) {
    const Index t1 = std::min(m, t0 + kTileSize);
    Matrix U = Matrix::Zero(t1 - t0, i);  // K(T, X) S
    for (Index c0 = 0; c0 < n; c0 += kTileSize) {
      const Index c1 = std::min(n, c0 + kTileSize);
      const Matrix G = cross_gram_block(state.spec, state.params, Xstar, t0, t1, state.X, c0, c1);
      out.mean.segment(t0, t1 - t0).noalias() += G * state.w.segment(c0, c1 - c0);
      if (i > 0) U.noalias() += G * state.S.dense_rows(c0, c1);
    }
    if (i > 0) {
      // var -= || L^{-1} (S' K(X, x)) ||^2 per test point
      Matrix V = state.chol_L.triangularView<Eigen::Lower>().solve(U.transpose());
      out.var.segment(t0, t1 - t0) -= V.colwise().squaredNorm().transpose();
    }
  }
  clamp_variances(out.var, "predict_cagp");
  out.predictive_var = out.var.array() + state.params.noise_var();
  return out;
}

IterState fit_iterative(const KernelSpec& spec, const HyperParams& params, const Matrix& X,
                        const Vector& y, const IterPolicy& policy, Index budget_i, double tol) {
  const Index n = X.rows();
  if (y.size() != n) throw DimensionMismatch("fit_iterative: y size");
  if (policy.kind == IterPolicy::Kind::Given) {
    if (policy.given == nullptr) throw ConfigError("fit_iterative: Given policy without actions");
    budget_i = std::min(budget_i, policy.given->cols());
  }
  IterState st;
  st.spec = spec;
  st.params = params;
  st.X = X;
  st.v = Vector::Zero(n);
  Matrix used(n, budget_i);
  Matrix given_dense;
  if (policy.kind == IterPolicy::Kind::Given) given_dense = policy.given->densify();
  Index accepted = 0;
  const double ynorm = y.norm();

  for (Index t = 0; t < budget_i; ++t) {
    // r_{t} = y - Khat v_t; drives both the stop rule and the CG policy
    const Vector r = y - khat_matvec(spec, params, X, st.v);
    if (policy.kind == IterPolicy::Kind::CgResidual) {
      if (ynorm == 0.0 || r.norm() / ynorm < tol) break;
    }
    const Vector s = policy.kind == IterPolicy::Kind::CgResidual ? r : given_dense.col(t);
    const double alpha = s.dot(r);
    const Vector z = khat_matvec(spec, params, X, s);
    // d = s - C_{t-1} z with C_{t-1} = sum_l d_l d_l' / eta_l
    Vector d = s;
    for (std::size_t l = 0; l < st.dirs.size(); ++l)
      d.noalias() -= (st.dirs[l].dot(z) / st.etas[l]) * st.dirs[l];
    const double eta = z.dot(d);
    if (!(eta > 1e-14 * z.norm() * d.norm())) {
      warn("fit_iterative: skipping degenerate action at step " + std::to_string(t));
      ++st.skipped;
      continue;
    }
    st.dirs.push_back(d);
    st.etas.push_back(eta);
    st.v.noalias() += (alpha / eta) * d;
    used.col(accepted++) = s;
  }
  st.actions_used = used.leftCols(accepted);
  return st;
}

Prediction predict_iterative(const IterState& state, const Matrix& Xstar) {
  if (Xstar.cols() != state.X.cols()) throw DimensionMismatch("predict_iterative input dim");
  const Index n = state.X.rows();
  const Index m = Xstar.rows();
  const Index L = static_cast<Index>(state.dirs.size());
  const double o = state.params.outputscale();

  Matrix D(n, L);
  for (Index l = 0; l < L; ++l) D.col(l) = state.dirs[l];

  Prediction out;
  out.mean = Vector::Zero(m);
  out.var = Vector::Constant(m, o * o);
  for (Index t0 = 0; t0 < m; t0 += kTileSize) {
    const Index t1 = std::min(m, t0 + kTileSize);
    Matrix U = Matrix::Zero(t1 - t0, L);  // K(T, X) D
    for (Index c0 = 0; c0 < n; c0 += kTileSize) {
      const Index c1 = std::min(n, c0 + kTileSize);
      const Matrix G = cross_gram_block(state.spec, state.params, Xstar, t0, t1, state.X, c0, c1);
      out.mean.segment(t0, t1 - t0).noalias() += G * state.v.segment(c0, c1 - c0);
      if (L > 0) U.noalias() += G * D.middleRows(c0, c1 - c0);
    }
    for (Index l = 0; l < L; ++l)
      out.var.segment(t0, t1 - t0).array() -= U.col(l).array().square() / state.etas[l];
  }
  clamp_variances(out.var, "predict_iterative");
  out.predictive_var = out.var.array() + state.params.noise_var();
  return out;
}

ProjectedFit fit_via_projected_observation(const KernelSpec& spec, const HyperParams& params,
                                           const Matrix& X, const Vector& y,
                                           const ActionMatrix& S) {
  const Index n = X.rows();
  if (n > kExactSizeCap) throw OracleTooLarge("fit_via_projected_observation: n over cap");
  if (y.size() != n) throw DimensionMismatch("fit_via_projected_observation: y size");
  ProjectedFit fit;
  fit.spec = spec;
  fit.params = params;
  fit.X = X;
  fit.Sortho = orthonormalize(S).densify();
  const Matrix K = gram(spec, params, X);
  Matrix G = fit.Sortho.transpose() * K * fit.Sortho;
  G = 0.5 * (G + G.transpose()).eval();
  G.diagonal().array() += params.noise_var();
  CholResult ch = chol_jittered(G, G.diagonal().mean());
  fit.chol_L = ch.llt.matrixL();
  fit.vtilde = ch.llt.solve(fit.Sortho.transpose() * y);
  return fit;
}

Prediction predict_projected(const ProjectedFit& fit, const Matrix& Xstar) {
  if (Xstar.cols() != fit.X.cols()) throw DimensionMismatch("predict_projected input dim");
  const Matrix cross = cross_gram(fit.spec, fit.params, fit.X, Xstar);  // n x m
  const Matrix proj = fit.Sortho.transpose() * cross;                   // i x m
  const double o = fit.params.outputscale();
  Prediction out;
  out.mean = proj.transpose() * fit.vtilde;
  Matrix W = fit.chol_L.triangularView<Eigen::Lower>().solve(proj);
  out.var = (o * o - W.colwise().squaredNorm().array()).matrix().transpose();
  clamp_variances(out.var, "predict_projected");
  out.predictive_var = out.var.array() + fit.params.noise_var();
  return out;
}

}  // namespace cagp
