#pragma once

#include <vector>

#include "cagp/kernels.hpp"
#include "cagp/types.hpp"

namespace cagp {

// Dense eigen/MI oracles hold an n x n matrix; keep them desk-sized.
inline constexpr Index kEigenOracleCap = 2000;

enum class ActionLayout { Dense, BlockSparse };

// One column of a block-sparse action matrix: contiguous support
// [start, start + values.size()).
struct SparseBlock {
  Index start = 0;
  Vector values;
};

// Action matrix S (n x i). Column j is the j-th action. Block-sparse
// instances keep disjoint contiguous supports sorted by start, so S'S is
// exactly diagonal and products touch only the support.
class ActionMatrix {
 public:
  static ActionMatrix dense(Matrix S);
  static ActionMatrix block_sparse(Index n, std::vector<SparseBlock> blocks);
  static ActionMatrix empty(Index n) { return dense(Matrix(n, 0)); }

  ActionLayout layout() const { return layout_; }
  Index rows() const { return n_; }
  Index cols() const { return i_; }

  const Matrix& dense_data() const;
  const std::vector<SparseBlock>& blocks() const;
  std::vector<SparseBlock>& mutable_blocks();

  Matrix densify() const;
  // Rows [r0, r1) as a dense (r1-r0) x i slice.
  Matrix dense_rows(Index r0, Index r1) const;
  Vector apply(const Vector& w) const;            // S w
  Vector apply_transpose(const Vector& v) const;  // S' v
  ActionMatrix prefix(Index i) const;             // leading columns (or blocks)

 private:
  ActionLayout layout_ = ActionLayout::Dense;
  Index n_ = 0, i_ = 0;
  Matrix dense_;
  std::vector<SparseBlock> blocks_;
};

// Blockwise action products. KS excludes the noise term;
// StKhatS = S'KS + sigma^2 S'S, symmetrized as 0.5 (M + M').
struct ActionProducts {
  Matrix StKhatS;  // i x i
  Matrix KS;       // n x i
  Matrix StS;      // i x i (diagonal for block-sparse S)
};

ActionProducts action_products(const KernelSpec& spec, const HyperParams& params,
                               const Matrix& X, const ActionMatrix& S);

// y_centered must already have the prior mean removed. Columns are the CG
// residuals r_0 .. r_{i-1}; iteration stops early once ||r|| / ||r_0|| < tol,
// so the realized column count can be below budget_i (zero when y_centered
// itself is zero).
ActionMatrix actions_cg(const KernelSpec& spec, const HyperParams& params, const Matrix& X,
                        const Vector& y_centered, Index budget_i, double tol);

// i.i.d. standard normal entries, deterministic in seed.
ActionMatrix actions_random(Index n, Index i, std::uint64_t seed);

// Block-sparse trainable actions: supports partition [0, n) into i contiguous
// runs of floor(n/i) rows (the last absorbs the remainder); values i.i.d.
// normal scaled by 1/sqrt(block length), so E||s_j||^2 = 1.
ActionMatrix actions_sparse_init(Index n, Index i, std::uint64_t seed);

// Top-i eigenvector actions of Khat = K + sigma^2 I. Deterministic order
// (eigenvalue descending, ties by first index) and sign (largest-magnitude
// entry positive). Dense; capped at kEigenOracleCap.
Matrix top_eigvec_actions(const Matrix& khat, Index i);
ActionMatrix actions_eigen_oracle(const KernelSpec& spec, const HyperParams& params,
                                  const Matrix& X, Index i);

// 0.5 [ logdet(S'KhatS) - logdet(S'S) - i log sigma^2 ]: the information gain
// of observing S' y over i independent prior draws. Dense oracle.
double mutual_information_dense(const Matrix& khat, double noise_var, const Matrix& S);
double mutual_information(const KernelSpec& spec, const HyperParams& params, const Matrix& X,
                          const ActionMatrix& S);

// S' = S chol(S'S)^{-T}, so S''S' = I and span(S') = span(S). Block-sparse
// inputs keep their layout (blocks are rescaled in place). Throws
// RankDeficient when S'S is singular.
ActionMatrix orthonormalize(const ActionMatrix& S);

// out = (K + sigma^2 I) v, tiled; never materializes K.
Vector khat_matvec(const KernelSpec& spec, const HyperParams& params, const Matrix& X,
                   const Vector& v);

}  // namespace cagp
