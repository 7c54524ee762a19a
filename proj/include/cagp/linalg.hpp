#pragma once

#include <Eigen/Cholesky>

#include "cagp/types.hpp"

namespace cagp {

struct CholResult {
  Eigen::LLT<Matrix> llt;
  double jitter = 0.0;  // absolute value added to the diagonal
};

// Cholesky with an escalating jitter ladder. Multipliers of `scale`
// (typically the mean diagonal) are tried in order {0, 1e-10, 1e-8, 1e-6};
// throws NotPositiveDefinite after exhaustion.
inline CholResult chol_jittered(const Matrix& A, double scale) {
  static const double ladder[] = {0.0, 1e-10, 1e-8, 1e-6};
  Matrix work;
  double last = 0.0;
  for (double mult : ladder) {
    last = mult * scale;
    work = A;
    if (mult != 0.0) work.diagonal().array() += last;
    Eigen::LLT<Matrix> llt(work);
    if (llt.info() == Eigen::Success) return {std::move(llt), last};
  }
  throw NotPositiveDefinite("cholesky failed at all jitter levels", last);
}

// 2 * sum(log diag L) given an LLT factor.
inline double logdet_from_llt(const Eigen::LLT<Matrix>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace cagp
