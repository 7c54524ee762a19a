#include "cagp/losses.hpp"

#include "cagp/exact_gp.hpp"
#include "cagp/linalg.hpp"

namespace cagp {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

struct Forward {
  ActionProducts prod;      // StKhatS (A), KS (M), StS (T)
  Eigen::LLT<Matrix> lltA;  // factor of A after jitter
  Matrix Tinv;              // i x i
  double logdet_A = 0.0;
  double logdet_T = 0.0;
  Vector ytilde;  // S'y
  Vector vt;      // A^{-1} S'y
};

Forward run_forward(const KernelSpec& spec, const HyperParams& params, const Matrix& X,
                    const Vector& y, const ActionMatrix& S) {
  Forward f;
  f.prod = action_products(spec, params, X, S);
  const Index i = S.cols();
  Matrix& A = f.prod.StKhatS;
  CholResult ch = chol_jittered(A, A.trace() / static_cast<double>(i));
  f.lltA = std::move(ch.llt);
  f.logdet_A = logdet_from_llt(f.lltA);

  if (S.layout() == ActionLayout::BlockSparse) {
    f.Tinv = Matrix::Zero(i, i);
    f.logdet_T = 0.0;
    for (Index j = 0; j < i; ++j) {
      const double d = f.prod.StS(j, j);
      if (!(d > 0.0)) throw RankDeficient("loss: zero-norm action block");
      f.Tinv(j, j) = 1.0 / d;
      f.logdet_T += std::log(d);
    }
  } else {
    Eigen::LLT<Matrix> lltT(f.prod.StS);
    if (lltT.info() != Eigen::Success) throw RankDeficient("loss: S'S singular");
    f.logdet_T = logdet_from_llt(lltT);
    f.Tinv = lltT.solve(Matrix::Identity(i, i));
  }
  f.ytilde = S.apply_transpose(y);
  f.vt = f.lltA.solve(f.ytilde);
  return f;
}

LossValue value_projected_nll(const Forward& f, Index i) {
  LossValue v;
  v.parts.quadratic_fit = f.ytilde.dot(f.vt);
  v.parts.logdet_StKhatS = f.logdet_A;
  v.parts.logdet_StS = f.logdet_T;
  v.parts.complexity = f.logdet_A - f.logdet_T;
  v.parts.constant = static_cast<double>(i) * kLog2Pi;
  v.total = 0.5 * (v.parts.quadratic_fit + v.parts.trace_term + v.parts.complexity +
                   v.parts.constant);
  return v;
}

struct ElboScalars {
  double q1 = 0.0;  // || y - M vt ||^2
  double t1 = 0.0;  // tr(A^{-1} M'M)
  double t2 = 0.0;  // vt' B vt
  double t3 = 0.0;  // tr(A^{-1} B)
  double tK = 0.0;  // tr K = n * outputscale^2
  Matrix B;         // S'KS = A - sigma^2 T
  Vector rho;       // y - M vt
};

ElboScalars elbo_scalars(const Forward& f, const HyperParams& params, const Vector& y, Index n) {
  ElboScalars s;
  const double o = params.outputscale();
  const double s2 = params.noise_var();
  s.tK = static_cast<double>(n) * o * o;
  s.B = f.prod.StKhatS - s2 * f.prod.StS;
  s.rho = y - f.prod.KS * f.vt;
  s.q1 = s.rho.squaredNorm();
  // tr(A^{-1} M'M) = || L^{-1} M' ||_F^2
  s.t1 = f.lltA.matrixL().solve(f.prod.KS.transpose()).squaredNorm();
  s.t2 = f.vt.dot(s.B * f.vt);
  s.t3 = f.lltA.solve(s.B).trace();
  return s;
}

LossValue value_elbo(const Forward& f, const ElboScalars& s, const HyperParams& params, Index n,
                     Index i) {
  const double s2 = params.noise_var();
  LossValue v;
  v.parts.quadratic_fit = s.q1 / s2 + s.t2;
  v.parts.trace_term = (s.tK - s.t1) / s2 - s.t3;
  v.parts.logdet_StKhatS = f.logdet_A;
  v.parts.logdet_StS = f.logdet_T;
  v.parts.complexity = f.logdet_A - f.logdet_T;
  v.parts.constant =
      static_cast<double>(n - i) * std::log(s2) + static_cast<double>(n) * kLog2Pi;
  v.total = 0.5 * (v.parts.quadratic_fit + v.parts.trace_term + v.parts.complexity +
                   v.parts.constant);
  return v;
}

// Losses with no actions: the projection is empty and the variational
// posterior is the prior.
LossValue value_empty(LossKind kind, const HyperParams& params, const Vector& y, Index n) {
  LossValue v;
  if (kind == LossKind::ProjectedNll) return v;
  const double s2 = params.noise_var();
  const double o = params.outputscale();
  v.parts.quadratic_fit = y.squaredNorm() / s2;
  v.parts.trace_term = static_cast<double>(n) * o * o / s2;
  v.parts.constant = static_cast<double>(n) * (std::log(s2) + kLog2Pi);
  v.total = 0.5 * (v.parts.quadratic_fit + v.parts.trace_term + v.parts.constant);
  return v;
}

void grad_empty(LossKind kind, const KernelSpec& spec, const HyperParams& params,
                const Vector& y, Index n, Index d, GradientBundle& grad) {
  grad.d_hyper = Vector::Zero(num_hyper(spec, d));
  grad.d_actions.resize(0);
  if (kind == LossKind::ProjectedNll) return;
  const double s2 = params.noise_var();
  const double o2 = params.outputscale() * params.outputscale();
  const double nn = static_cast<double>(n);
  grad.d_hyper(0) = nn * o2 / s2;
  grad.d_hyper(grad.d_hyper.size() - 1) = nn - (y.squaredNorm() + nn * o2) / s2;
}

// Adjoints of the small factors. The kernel-dependent remainder is
//   d loss = <Mbar S', dK> + diag_coef * tr(dK)
// and the block-sparse action gradient additionally needs K Mbar.
struct Backward {
  Matrix Mbar;        // n x i
  Matrix Bbar;        // i x i, symmetric
  Matrix Tbar;        // i x i, symmetric
  Vector ytilde_bar;  // adjoint of S'y
  double d_log_noise = 0.0;
  double diag_coef = 0.0;  // weight on tr(dK); zero for the projected NLL
};

Backward backward_small(LossKind kind, const Forward& f, const ElboScalars* s,
                        const HyperParams& params, Index n, Index i) {
  const double s2 = params.noise_var();
  const Matrix Ainv = f.lltA.solve(Matrix::Identity(i, i));
  Backward b;
  if (kind == LossKind::ProjectedNll) {
    Matrix Abar = 0.5 * (Ainv - f.vt * f.vt.transpose());
    b.Bbar = Abar;
    b.Tbar = s2 * Abar - 0.5 * f.Tinv;
    b.ytilde_bar = f.vt;
    b.Mbar = Matrix::Zero(n, i);  // only the S Bbar part, added by the caller
    b.d_log_noise = 2.0 * s2 * Abar.cwiseProduct(f.prod.StS).sum();
    b.diag_coef = 0.0;
    return b;
  }

  // g = d loss / d vt, u = A^{-1} g; vt = A^{-1} S'y feeds A and y~ adjoints.
  const Vector g = s->B * f.vt - (f.prod.KS.transpose() * s->rho) / s2;
  const Vector u = f.lltA.solve(g);
  const Matrix P = f.prod.KS.transpose() * f.prod.KS;
  Matrix Abar = (0.5 / s2) * f.lltA.solve(f.lltA.solve(P).transpose());  // A^{-1}PA^{-1}/(2s2)
  Abar.noalias() += 0.5 * f.lltA.solve(s->B * Ainv);                     // A^{-1}BA^{-1}/2
  Abar += 0.5 * Ainv;
  Abar.noalias() -= 0.5 * (u * f.vt.transpose() + f.vt * u.transpose());
  Abar = 0.5 * (Abar + Abar.transpose()).eval();

  b.Bbar = Abar + 0.5 * f.vt * f.vt.transpose() - 0.5 * Ainv;
  b.Bbar = 0.5 * (b.Bbar + b.Bbar.transpose()).eval();
  b.Tbar = s2 * Abar - 0.5 * f.Tinv;
  b.ytilde_bar = u;
  b.Mbar = -(s->rho * f.vt.transpose()) / s2 - f.prod.KS * Ainv / s2;
  const double d_direct = -0.5 / (s2 * s2) * (s->q1 + s->tK - s->t1) +
                          0.5 * static_cast<double>(n - i) / s2;
  b.d_log_noise = 2.0 * s2 * (Abar.cwiseProduct(f.prod.StS).sum() + d_direct);
  b.diag_coef = 0.5 / s2;
  return b;
}

}  // namespace

LossValue loss_projected_nll(const KernelSpec& spec, const HyperParams& params, const Matrix& X,
                             const Vector& y, const ActionMatrix& S) {
  if (X.rows() != y.size()) throw DimensionMismatch("loss_projected_nll: X vs y");
  if (S.cols() == 0) return value_empty(LossKind::ProjectedNll, params, y, X.rows());
  Forward f = run_forward(spec, params, X, y, S);
  return value_projected_nll(f, S.cols());
}

LossValue loss_elbo(const KernelSpec& spec, const HyperParams& params, const Matrix& X,
                    const Vector& y, const ActionMatrix& S) {
  if (X.rows() != y.size()) throw DimensionMismatch("loss_elbo: X vs y");
  if (S.cols() == 0) return value_empty(LossKind::Elbo, params, y, X.rows());
  Forward f = run_forward(spec, params, X, y, S);
  ElboScalars s = elbo_scalars(f, params, y, X.rows());
  return value_elbo(f, s, params, X.rows(), S.cols());
}

LossValue loss_eval(LossKind kind, const KernelSpec& spec, const HyperParams& params,
                    const Matrix& X, const Vector& y, const ActionMatrix& S) {
  switch (kind) {
    case LossKind::Elbo:
      return loss_elbo(spec, params, X, y, S);
    case LossKind::ProjectedNll:
      return loss_projected_nll(spec, params, X, y, S);
    case LossKind::ExactNll: {
      LossValue v;
      v.total = nll_exact(spec, params, X, y);
      return v;
    }
  }
  throw ConfigError("loss_eval: unknown kind");
}

LossValue loss_grad(LossKind kind, const KernelSpec& spec, const HyperParams& params,
                    const Matrix& X, const Vector& y, const ActionMatrix& S,
                    GradientBundle& grad) {
  const Index n = X.rows();
  const Index d = X.cols();
  if (n != y.size()) throw DimensionMismatch("loss_grad: X vs y");

  if (kind == LossKind::ExactNll) {
    grad.d_hyper = nll_exact_grad(spec, params, X, y);
    grad.d_actions.resize(0);
    LossValue v;
    v.total = nll_exact(spec, params, X, y);
    return v;
  }
  if (S.cols() == 0) {
    grad_empty(kind, spec, params, y, n, d, grad);
    return value_empty(kind, params, y, n);
  }

  const Index i = S.cols();
  Forward f = run_forward(spec, params, X, y, S);
  LossValue value;
  Backward b;
  if (kind == LossKind::ProjectedNll) {
    value = value_projected_nll(f, i);
    b = backward_small(kind, f, nullptr, params, n, i);
  } else {
    ElboScalars s = elbo_scalars(f, params, y, n);
    value = value_elbo(f, s, params, n, i);
    b = backward_small(kind, f, &s, params, n, i);
  }

  const Matrix Sd = S.dense_rows(0, n);  // n x i; small second factor of all adjoints
  b.Mbar.noalias() += Sd * b.Bbar;

  // Blockwise kernel sweep: hyper gradient contraction <Mbar S', dK/dtheta>
  // plus K Mbar for the action gradient.
  const Index nl = num_lengthscales(spec, d);
  Vector hyper_kernel = Vector::Zero(nl + 1);
  const bool want_actions = S.layout() == ActionLayout::BlockSparse;
  Matrix KMbar;
  if (want_actions) KMbar = Matrix::Zero(n, i);
  Matrix ktile;
  std::vector<Matrix> dktiles;
  for (Index r0 = 0; r0 < n; r0 += kTileSize) {
    const Index r1 = std::min(n, r0 + kTileSize);
    for (Index c0 = 0; c0 < n; c0 += kTileSize) {
      const Index c1 = std::min(n, c0 + kTileSize);
      cross_gram_block_grads(spec, params, X, r0, r1, X, c0, c1, ktile, dktiles);
      const Matrix omega =
          b.Mbar.middleRows(r0, r1 - r0) * Sd.middleRows(c0, c1 - c0).transpose();
      for (Index p = 0; p <= nl; ++p)
        hyper_kernel(p) += omega.cwiseProduct(dktiles[static_cast<std::size_t>(p)]).sum();
      if (want_actions)
        KMbar.middleRows(r0, r1 - r0).noalias() += ktile * b.Mbar.middleRows(c0, c1 - c0);
    }
  }
  // tr(dK/dlog_outputscale) = 2 tr(K); lengthscale derivatives have zero diagonal.
  hyper_kernel(0) += b.diag_coef * 2.0 * static_cast<double>(n) *
                     params.outputscale() * params.outputscale();

  grad.d_hyper.resize(nl + 2);
  grad.d_hyper.head(nl + 1) = hyper_kernel;
  grad.d_hyper(nl + 1) = b.d_log_noise;

  if (want_actions) {
    // Sbar = y ytilde_bar' + M Bbar + 2 S Tbar + K Mbar at block positions.
    const auto& blocks = S.blocks();
    Index total = 0;
    for (const auto& blk : blocks) total += blk.values.size();
    grad.d_actions.resize(total);
    Index off = 0;
    for (Index j = 0; j < i; ++j) {
      const Index bs = blocks[j].start;
      const Index bl = blocks[j].values.size();
      for (Index t = 0; t < bl; ++t) {
        const Index r = bs + t;
        double val = y(r) * b.ytilde_bar(j);
        val += f.prod.KS.row(r).dot(b.Bbar.col(j));
        val += 2.0 * blocks[j].values(t) * b.Tbar(j, j);
        val += KMbar(r, j);
        grad.d_actions(off + t) = val;
      }
      off += bl;
    }
  } else {
    grad.d_actions.resize(0);
  }
  return value;
}

}  // namespace cagp
