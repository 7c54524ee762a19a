#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace cagp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Contract violations and numerical failures surface as exceptions; callers
// that can recover (jitter ladder, degenerate action skip) handle them locally.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct DimensionMismatch : Error {
  explicit DimensionMismatch(const std::string& msg) : Error("dimension mismatch: " + msg) {}
};

struct NotPositiveDefinite : Error {
  double final_jitter;
  explicit NotPositiveDefinite(const std::string& msg, double jitter)
      : Error("not positive definite (last jitter " + std::to_string(jitter) + "): " + msg),
        final_jitter(jitter) {}
};

struct RankDeficient : Error {
  explicit RankDeficient(const std::string& msg) : Error("rank deficient: " + msg) {}
};

struct OracleTooLarge : Error {
  explicit OracleTooLarge(const std::string& msg) : Error("oracle size cap exceeded: " + msg) {}
};

struct ParseError : Error {
  explicit ParseError(const std::string& msg) : Error("parse error: " + msg) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

struct NonFiniteGradient : Error {
  explicit NonFiniteGradient(const std::string& msg) : Error("non-finite gradient: " + msg) {}
};

// Row/column block size for tiled kernel sweeps; large-n code paths touch the
// Gram matrix only through tiles of this size.
inline constexpr Index kTileSize = 256;

// Non-fatal diagnostics (variance clamps, skipped degenerate actions) go
// through a replaceable handler; the default writes to stderr.
using WarnHandler = void (*)(const std::string&);
WarnHandler set_warn_handler(WarnHandler h);  // returns the previous handler
void warn(const std::string& msg);

// Deterministic sampling on top of mt19937_64 raw draws. The std distribution
// objects are implementation-defined, so uniforms and gaussians are derived
// from the raw 64-bit stream directly; results are identical on every stdlib.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Uniform on [0, 1) with 53 random mantissa bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; caches the second variate.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double t = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(t);
    have_spare_ = true;
    return r * std::cos(t);
  }

  Vector normal_vector(Index n) {
    Vector v(n);
    for (Index k = 0; k < n; ++k) v(k) = normal();
    return v;
  }

  Matrix normal_matrix(Index r, Index c) {
    Matrix m(r, c);
    for (Index j = 0; j < c; ++j)
      for (Index a = 0; a < r; ++a) m(a, j) = normal();
    return m;
  }

  // Unbiased integer on [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = gen_();
    while (x >= limit) x = gen_();
    return x % n;
  }

  // Fisher-Yates; std::shuffle is implementation-defined.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t k = v.size(); k > 1; --k) std::swap(v[k - 1], v[below(k)]);
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace cagp
