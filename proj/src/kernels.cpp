#include "cagp/kernels.hpp"

namespace cagp {

namespace {

constexpr double kSqrt3 = 1.7320508075688772;

inline double k_of_r2(KernelFamily f, double o2, double r2) {
  if (f == KernelFamily::Matern32) {
    const double a = std::sqrt(3.0 * r2);  // sqrt(3) * r
    return o2 * (1.0 + a) * std::exp(-a);
  }
  return o2 * std::exp(-0.5 * r2);
}

// Inverse lengthscale per input dimension, broadcast when shared.
Vector inv_lengthscales(const KernelSpec& spec, const HyperParams& p, Index d) {
  const Index nl = num_lengthscales(spec, d);
  if (p.log_lengthscales.size() != nl)
    throw DimensionMismatch("lengthscale count " + std::to_string(p.log_lengthscales.size()) +
                            " does not match input dimension " + std::to_string(d));
  Vector inv(d);
  for (Index j = 0; j < d; ++j) inv(j) = std::exp(-p.log_lengthscales(spec.ard ? j : 0));
  return inv;
}

}  // namespace

Index num_lengthscales(const KernelSpec& spec, Index d) { return spec.ard ? d : 1; }

HyperParams default_params(const KernelSpec& spec, Index d) {
  HyperParams p;
  p.log_lengthscales = Vector::Zero(num_lengthscales(spec, d));
  return p;
}

Index num_hyper(const KernelSpec& spec, Index d) { return num_lengthscales(spec, d) + 2; }

Vector pack_hyper(const HyperParams& p) {
  Vector v(p.log_lengthscales.size() + 2);
  v(0) = p.log_outputscale;
  v.segment(1, p.log_lengthscales.size()) = p.log_lengthscales;
  v(v.size() - 1) = p.log_noise;
  return v;
}

HyperParams unpack_hyper(const KernelSpec& spec, Index d, const Vector& v) {
  const Index nl = num_lengthscales(spec, d);
  if (v.size() != nl + 2)
    throw DimensionMismatch("hyper vector size " + std::to_string(v.size()) + ", expected " +
                            std::to_string(nl + 2));
  HyperParams p;
  p.log_outputscale = v(0);
  p.log_lengthscales = v.segment(1, nl);
  p.log_noise = v(nl + 1);
  return p;
}

double kernel_eval(const KernelSpec& spec, const HyperParams& p,
                   const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& x2) {
  if (x.size() != x2.size()) throw DimensionMismatch("kernel_eval point dimensions differ");
  const Index d = x.size();
  const Vector inv = inv_lengthscales(spec, p, d);
  double r2 = 0.0;
  for (Index j = 0; j < d; ++j) {
    const double u = x(j) * inv(j) - x2(j) * inv(j);
    r2 += u * u;
  }
  const double o = p.outputscale();
  return k_of_r2(spec.family, o * o, r2);
}

Matrix cross_gram_block(const KernelSpec& spec, const HyperParams& p,
                        const Matrix& A, Index a0, Index a1,
                        const Matrix& B, Index b0, Index b1) {
  if (A.cols() != B.cols()) throw DimensionMismatch("cross_gram_block input dims differ");
  if (a0 < 0 || a1 > A.rows() || b0 < 0 || b1 > B.rows() || a0 > a1 || b0 > b1)
    throw DimensionMismatch("cross_gram_block range out of bounds");
  const Index d = A.cols();
  const Vector inv = inv_lengthscales(spec, p, d);
  const Matrix As = A.middleRows(a0, a1 - a0) * inv.asDiagonal();
  const Matrix Bs = B.middleRows(b0, b1 - b0) * inv.asDiagonal();
  const double o = p.outputscale();
  const double o2 = o * o;
  Matrix K(a1 - a0, b1 - b0);
  for (Index b = 0; b < K.cols(); ++b) {
    for (Index a = 0; a < K.rows(); ++a) {
      double r2 = 0.0;
      for (Index j = 0; j < d; ++j) {
        const double u = As(a, j) - Bs(b, j);
        r2 += u * u;
      }
      K(a, b) = k_of_r2(spec.family, o2, r2);
    }
  }
  return K;
}

Matrix cross_gram(const KernelSpec& spec, const HyperParams& p, const Matrix& A,
                  const Matrix& B) {
  return cross_gram_block(spec, p, A, 0, A.rows(), B, 0, B.rows());
}

Matrix gram(const KernelSpec& spec, const HyperParams& p, const Matrix& X) {
  const Index n = X.rows();
  const Index d = X.cols();
  const Vector inv = inv_lengthscales(spec, p, d);
  const Matrix Xs = X * inv.asDiagonal();
  const double o = p.outputscale();
  const double o2 = o * o;
  Matrix K(n, n);
  for (Index b = 0; b < n; ++b) {
    K(b, b) = o2;
    for (Index a = 0; a < b; ++a) {
      double r2 = 0.0;
      for (Index j = 0; j < d; ++j) {
        const double u = Xs(a, j) - Xs(b, j);
        r2 += u * u;
      }
      const double v = k_of_r2(spec.family, o2, r2);
      K(a, b) = v;
      K(b, a) = v;
    }
  }
  return K;
}

void cross_gram_block_grads(const KernelSpec& spec, const HyperParams& p,
                            const Matrix& A, Index a0, Index a1,
                            const Matrix& B, Index b0, Index b1,
                            Matrix& k, std::vector<Matrix>& dk) {
  if (A.cols() != B.cols()) throw DimensionMismatch("cross_gram_block_grads input dims differ");
  const Index d = A.cols();
  const Index nl = num_lengthscales(spec, d);
  const Vector inv = inv_lengthscales(spec, p, d);
  const Matrix As = A.middleRows(a0, a1 - a0) * inv.asDiagonal();
  const Matrix Bs = B.middleRows(b0, b1 - b0) * inv.asDiagonal();
  const double o = p.outputscale();
  const double o2 = o * o;
  const Index r = a1 - a0, c = b1 - b0;
  k.resize(r, c);
  dk.resize(nl + 1);
  for (auto& m : dk) m.resize(r, c);
  Vector q(d);
  for (Index b = 0; b < c; ++b) {
    for (Index a = 0; a < r; ++a) {
      double r2 = 0.0;
      for (Index j = 0; j < d; ++j) {
        const double u = As(a, j) - Bs(b, j);
        q(j) = u * u;
        r2 += q(j);
      }
      double val, coef;
      if (spec.family == KernelFamily::Matern32) {
        const double arg = std::sqrt(3.0 * r2);
        const double e = std::exp(-arg);
        val = o2 * (1.0 + arg) * e;
        coef = 3.0 * o2 * e;  // dk/dlog l_j = coef * q_j, from dk/dr = -3 o^2 r e^{-sqrt3 r}
      } else {
        val = o2 * std::exp(-0.5 * r2);
        coef = val;  // dk/dlog l_j = k * q_j
      }
      k(a, b) = val;
      dk[0](a, b) = 2.0 * val;
      for (Index l = 1; l <= nl; ++l) dk[l](a, b) = 0.0;
      for (Index j = 0; j < d; ++j) dk[1 + (spec.ard ? j : 0)](a, b) += coef * q(j);
    }
  }
}

Matrix gram_deriv(const KernelSpec& spec, const HyperParams& p, const Matrix& X, Index which) {
  const Index nl = num_lengthscales(spec, X.cols());
  if (which < 0 || which > nl)
    throw DimensionMismatch("gram_deriv parameter index out of range");
  Matrix k;
  std::vector<Matrix> dk;
  cross_gram_block_grads(spec, p, X, 0, X.rows(), X, 0, X.rows(), k, dk);
  return dk[static_cast<std::size_t>(which)];
}

}  // namespace cagp
