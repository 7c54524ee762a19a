#include "cagp/actions.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>

#include "cagp/linalg.hpp"

namespace cagp {

ActionMatrix ActionMatrix::dense(Matrix S) {
  ActionMatrix m;
  m.layout_ = ActionLayout::Dense;
  m.n_ = S.rows();
  m.i_ = S.cols();
  m.dense_ = std::move(S);
  return m;
}

ActionMatrix ActionMatrix::block_sparse(Index n, std::vector<SparseBlock> blocks) {
  Index prev_end = -1;
  for (const auto& b : blocks) {
    if (b.values.size() == 0) throw DimensionMismatch("empty sparse block");
    if (b.start <= prev_end) throw DimensionMismatch("sparse blocks must be sorted and disjoint");
    prev_end = b.start + b.values.size() - 1;
    if (prev_end >= n) throw DimensionMismatch("sparse block exceeds n");
  }
  ActionMatrix m;
  m.layout_ = ActionLayout::BlockSparse;
  m.n_ = n;
  m.i_ = static_cast<Index>(blocks.size());
  m.blocks_ = std::move(blocks);
  return m;
}

const Matrix& ActionMatrix::dense_data() const {
  if (layout_ != ActionLayout::Dense) throw Error("dense_data on block-sparse actions");
  return dense_;
}

const std::vector<SparseBlock>& ActionMatrix::blocks() const {
  if (layout_ != ActionLayout::BlockSparse) throw Error("blocks on dense actions");
  return blocks_;
}

std::vector<SparseBlock>& ActionMatrix::mutable_blocks() {
  if (layout_ != ActionLayout::BlockSparse) throw Error("blocks on dense actions");
  return blocks_;
}

Matrix ActionMatrix::densify() const {
  if (layout_ == ActionLayout::Dense) return dense_;
  Matrix S = Matrix::Zero(n_, i_);
  for (Index j = 0; j < i_; ++j)
    S.col(j).segment(blocks_[j].start, blocks_[j].values.size()) = blocks_[j].values;
  return S;
}

Matrix ActionMatrix::dense_rows(Index r0, Index r1) const {
  if (layout_ == ActionLayout::Dense) return dense_.middleRows(r0, r1 - r0);
  Matrix S = Matrix::Zero(r1 - r0, i_);
  for (Index j = 0; j < i_; ++j) {
    const Index bs = blocks_[j].start, be = bs + blocks_[j].values.size();
    const Index lo = std::max(bs, r0), hi = std::min(be, r1);
    if (lo < hi) S.col(j).segment(lo - r0, hi - lo) = blocks_[j].values.segment(lo - bs, hi - lo);
  }
  return S;
}

Vector ActionMatrix::apply(const Vector& w) const {
  if (w.size() != i_) throw DimensionMismatch("ActionMatrix::apply");
  if (layout_ == ActionLayout::Dense) return dense_ * w;
  Vector out = Vector::Zero(n_);
  for (Index j = 0; j < i_; ++j)
    out.segment(blocks_[j].start, blocks_[j].values.size()) += w(j) * blocks_[j].values;
  return out;
}

Vector ActionMatrix::apply_transpose(const Vector& v) const {
  if (v.size() != n_) throw DimensionMismatch("ActionMatrix::apply_transpose");
  if (layout_ == ActionLayout::Dense) return dense_.transpose() * v;
  Vector out(i_);
  for (Index j = 0; j < i_; ++j)
    out(j) = blocks_[j].values.dot(v.segment(blocks_[j].start, blocks_[j].values.size()));
  return out;
}

ActionMatrix ActionMatrix::prefix(Index i) const {
  if (i < 0 || i > i_) throw DimensionMismatch("ActionMatrix::prefix");
  if (layout_ == ActionLayout::Dense) return dense(dense_.leftCols(i));
  return block_sparse(n_, std::vector<SparseBlock>(blocks_.begin(), blocks_.begin() + i));
}

ActionProducts action_products(const KernelSpec& spec, const HyperParams& params,
                               const Matrix& X, const ActionMatrix& S) {
  const Index n = X.rows();
  if (S.rows() != n) throw DimensionMismatch("action_products: S rows vs X rows");
  const Index i = S.cols();
  ActionProducts out;
  out.KS = Matrix::Zero(n, i);

  if (S.layout() == ActionLayout::Dense) {
    const Matrix& Sd = S.dense_data();
    for (Index r0 = 0; r0 < n; r0 += kTileSize) {
      const Index r1 = std::min(n, r0 + kTileSize);
      for (Index c0 = 0; c0 < n; c0 += kTileSize) {
        const Index c1 = std::min(n, c0 + kTileSize);
        const Matrix K = gram_block(spec, params, X, r0, r1, c0, c1);
        out.KS.middleRows(r0, r1 - r0).noalias() += K * Sd.middleRows(c0, c1 - c0);
      }
    }
    out.StS.noalias() = Sd.transpose() * Sd;
    out.StKhatS.noalias() = Sd.transpose() * out.KS;
  } else {
    const auto& blocks = S.blocks();
    for (Index j = 0; j < i; ++j) {
      const Index bs = blocks[j].start;
      const Index bl = blocks[j].values.size();
      for (Index r0 = 0; r0 < n; r0 += kTileSize) {
        const Index r1 = std::min(n, r0 + kTileSize);
        const Matrix K = gram_block(spec, params, X, r0, r1, bs, bs + bl);
        out.KS.col(j).segment(r0, r1 - r0).noalias() += K * blocks[j].values;
      }
    }
    out.StS = Matrix::Zero(i, i);
    out.StKhatS.resize(i, i);
    for (Index j = 0; j < i; ++j) {
      out.StS(j, j) = blocks[j].values.squaredNorm();
      for (Index l = 0; l < i; ++l)
        out.StKhatS(j, l) =
            blocks[j].values.dot(out.KS.col(l).segment(blocks[j].start, blocks[j].values.size()));
    }
  }

  const double s2 = params.noise_var();
  out.StKhatS.noalias() += s2 * out.StS;
  out.StKhatS = 0.5 * (out.StKhatS + out.StKhatS.transpose()).eval();
  return out;
}

Vector khat_matvec(const KernelSpec& spec, const HyperParams& params, const Matrix& X,
                   const Vector& v) {
  const Index n = X.rows();
  if (v.size() != n) throw DimensionMismatch("khat_matvec");
  Vector out = params.noise_var() * v;
  for (Index r0 = 0; r0 < n; r0 += kTileSize) {
    const Index r1 = std::min(n, r0 + kTileSize);
    for (Index c0 = 0; c0 < n; c0 += kTileSize) {
      const Index c1 = std::min(n, c0 + kTileSize);
      const Matrix K = gram_block(spec, params, X, r0, r1, c0, c1);
      out.segment(r0, r1 - r0).noalias() += K * v.segment(c0, c1 - c0);
    }
  }
  return out;
}

ActionMatrix actions_cg(const KernelSpec& spec, const HyperParams& params, const Matrix& X,
                        const Vector& y_centered, Index budget_i, double tol) {
  const Index n = X.rows();
  if (y_centered.size() != n) throw DimensionMismatch("actions_cg: y size");
  if (budget_i < 0 || budget_i > n) throw DimensionMismatch("actions_cg: budget out of range");
  const double bnorm = y_centered.norm();
  if (bnorm == 0.0) return ActionMatrix::empty(n);

  Matrix cols(n, budget_i);
  // Orthonormalized copies of the emitted residuals. Finite-precision CG
  // keeps producing residuals after the Krylov space saturates, but those
  // live in the span of earlier ones; emitting them would break the
  // column-independence invariant, so the realized count stops there.
  Matrix ortho(n, budget_i);
  double max_norm = 0.0;
  Vector r = y_centered;
  Vector p = r;
  double rs = r.squaredNorm();
  Index realized = 0;
  for (Index t = 0; t < budget_i; ++t) {
    if (std::sqrt(rs) / bnorm < tol) break;
    max_norm = std::max(max_norm, std::sqrt(rs));
    Vector w = r;
    for (int sweep = 0; sweep < 2; ++sweep)
      w.noalias() -= ortho.leftCols(realized) * (ortho.leftCols(realized).transpose() * w);
    const double wnorm = w.norm();
    if (!(wnorm > 1e-8 * max_norm)) {
      warn("actions_cg: residual " + std::to_string(t) +
           " numerically dependent on earlier ones; realized " + std::to_string(realized) +
           " of " + std::to_string(budget_i) + " actions");
      break;
    }
    ortho.col(realized) = w / wnorm;
    cols.col(realized) = r;
    ++realized;
    const Vector kp = khat_matvec(spec, params, X, p);
    const double alpha = rs / p.dot(kp);
    r.noalias() -= alpha * kp;
    const double rs_new = r.squaredNorm();
    p = r + (rs_new / rs) * p;
    rs = rs_new;
  }
  return ActionMatrix::dense(cols.leftCols(realized));
}

ActionMatrix actions_random(Index n, Index i, std::uint64_t seed) {
  Rng rng(seed);
  return ActionMatrix::dense(rng.normal_matrix(n, i));
}

ActionMatrix actions_sparse_init(Index n, Index i, std::uint64_t seed) {
  if (i < 1 || i > n) throw DimensionMismatch("actions_sparse_init: need 1 <= i <= n");
  Rng rng(seed);
  const Index k = n / i;
  std::vector<SparseBlock> blocks(i);
  for (Index j = 0; j < i; ++j) {
    const Index len = (j == i - 1) ? n - k * (i - 1) : k;
    blocks[j].start = j * k;
    // Scale keeps E||s'_j||^2 = 1 regardless of block length.
    blocks[j].values = rng.normal_vector(len) / std::sqrt(static_cast<double>(len));
  }
  return ActionMatrix::block_sparse(n, std::move(blocks));
}

Matrix top_eigvec_actions(const Matrix& khat, Index i) {
  const Index n = khat.rows();
  if (n > kEigenOracleCap)
    throw OracleTooLarge("eigen oracle capped at n = " + std::to_string(kEigenOracleCap));
  if (i < 1 || i > n) throw DimensionMismatch("top_eigvec_actions: need 1 <= i <= n");
  Eigen::SelfAdjointEigenSolver<Matrix> es(khat);
  if (es.info() != Eigen::Success) throw Error("eigendecomposition failed");

  // Solver returns ascending eigenvalues; re-sort descending with a stable
  // tie order so the oracle is deterministic.
  std::vector<Index> order(n);
  for (Index j = 0; j < n; ++j) order[j] = n - 1 - j;
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return es.eigenvalues()(a) > es.eigenvalues()(b);
  });
  Matrix S(n, i);
  for (Index j = 0; j < i; ++j) {
    Vector v = es.eigenvectors().col(order[j]);
    Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    S.col(j) = v;
  }
  return S;
}

ActionMatrix actions_eigen_oracle(const KernelSpec& spec, const HyperParams& params,
                                  const Matrix& X, Index i) {
  if (X.rows() > kEigenOracleCap)
    throw OracleTooLarge("eigen oracle capped at n = " + std::to_string(kEigenOracleCap));
  Matrix khat = gram(spec, params, X);
  khat.diagonal().array() += params.noise_var();
  return ActionMatrix::dense(top_eigvec_actions(khat, i));
}

double mutual_information_dense(const Matrix& khat, double noise_var, const Matrix& S) {
  const Index i = S.cols();
  if (i == 0) return 0.0;
  const Matrix sts = S.transpose() * S;
  const Matrix stks = S.transpose() * khat * S;
  Eigen::LLT<Matrix> l1(sts);
  if (l1.info() != Eigen::Success) throw RankDeficient("mutual_information: S'S singular");
  Eigen::LLT<Matrix> l2(stks);
  if (l2.info() != Eigen::Success) throw RankDeficient("mutual_information: S'KhatS singular");
  return 0.5 * (logdet_from_llt(l2) - logdet_from_llt(l1) -
                static_cast<double>(i) * std::log(noise_var));
}

double mutual_information(const KernelSpec& spec, const HyperParams& params, const Matrix& X,
                          const ActionMatrix& S) {
  if (X.rows() > kEigenOracleCap)
    throw OracleTooLarge("mutual_information capped at n = " + std::to_string(kEigenOracleCap));
  Matrix khat = gram(spec, params, X);
  khat.diagonal().array() += params.noise_var();
  return mutual_information_dense(khat, params.noise_var(), S.densify());
}

ActionMatrix orthonormalize(const ActionMatrix& S) {
  const Index i = S.cols();
  if (i == 0) return S;
  if (S.layout() == ActionLayout::BlockSparse) {
    ActionMatrix out = S;
    for (auto& b : out.mutable_blocks()) {
      const double norm = b.values.norm();
      if (!(norm > 0.0) || !std::isfinite(norm))
        throw RankDeficient("orthonormalize: zero or non-finite block");
      b.values /= norm;
    }
    return out;
  }
  // Householder QR instead of Cholesky-QR: forming S'S squares the condition
  // number, so nearly dependent columns (CG residuals late in a run) would be
  // rejected even though the basis itself is fine. Signs are fixed to the
  // positive-diagonal-R convention, which is the Gram-Schmidt result.
  const Matrix& Sd = S.dense_data();
  Eigen::HouseholderQR<Matrix> qr(Sd);
  const Vector diag = qr.matrixQR().topLeftCorner(i, i).diagonal();
  const double dmax = diag.cwiseAbs().maxCoeff();
  if (!(diag.cwiseAbs().minCoeff() > 1e-12 * dmax) || !std::isfinite(dmax))
    throw RankDeficient("orthonormalize: S numerically rank deficient");
  Matrix out = qr.householderQ() * Matrix::Identity(Sd.rows(), i);
  for (Index j = 0; j < i; ++j)
    if (diag(j) < 0.0) out.col(j) = -out.col(j);
  return ActionMatrix::dense(std::move(out));
}

}  // namespace cagp
