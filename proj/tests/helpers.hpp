#pragma once

#include <string>
#include <vector>

#include "cagp/kernels.hpp"
#include "cagp/types.hpp"

namespace testutil {

using namespace cagp;

inline Matrix random_inputs(Index n, Index d, Rng& rng) {
  Matrix X(n, d);
  for (Index r = 0; r < n; ++r)
    for (Index j = 0; j < d; ++j) X(r, j) = rng.uniform();
  return X;
}

// Mid-range hyperparameters that keep Khat comfortably conditioned.
inline HyperParams typical_params(Index d, double log_o = 0.1, double l = 0.3,
                                  double sigma = 0.2) {
  HyperParams p;
  p.log_outputscale = log_o;
  p.log_lengthscales = Vector::Constant(d, std::log(l));
  p.log_noise = std::log(sigma);
  return p;
}

// Inputs spaced so far apart that every off-diagonal kernel value underflows
// to exactly zero; the Gram matrix is exactly outputscale^2 * I.
inline Matrix far_apart_inputs(Index n) {
  Matrix X(n, 1);
  for (Index r = 0; r < n; ++r) X(r, 0) = 1000.0 * static_cast<double>(r);
  return X;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

// Collects warn() output for the enclosing scope.
inline std::vector<std::string>* g_warn_sink = nullptr;

struct WarnCapture {
  std::vector<std::string> messages;
  WarnHandler prev;

  WarnCapture() {
    g_warn_sink = &messages;
    prev = set_warn_handler([](const std::string& m) {
      if (g_warn_sink) g_warn_sink->push_back(m);
    });
  }
  ~WarnCapture() {
    set_warn_handler(prev);
    g_warn_sink = nullptr;
  }
  WarnCapture(const WarnCapture&) = delete;
  WarnCapture& operator=(const WarnCapture&) = delete;
};

}  // namespace testutil
