#pragma once

#include <optional>
#include <string>

#include "cagp/kernels.hpp"

namespace cagp {

struct Standardization {
  Vector feature_means;
  Vector feature_stds;  // constant columns get std 1
  double target_mean = 0.0;
  double target_std = 1.0;
};

struct Dataset {
  Matrix X_train, X_test;
  Vector y_train, y_test;
  Standardization stand;
  std::uint64_t seed = 0;
  std::string source;
  // Generating hyperparameters mapped into standardized units, for synthetic
  // recovery tests.
  std::optional<HyperParams> params_true;
};

// Standardize features and target using statistics of the training rows only;
// train and test are transformed in place.
Standardization standardize_split(Matrix& X_train, Vector& y_train, Matrix& X_test,
                                  Vector& y_test);

inline double destandardize_mean(const Standardization& s, double m) {
  return s.target_mean + s.target_std * m;
}
inline double destandardize_var(const Standardization& s, double v) {
  return s.target_std * s.target_std * v;
}
Vector destandardize_mean(const Standardization& s, const Vector& m);
Vector destandardize_var(const Standardization& s, const Vector& v);

// Comma-separated file with a header row; every non-target column is a
// feature. Rows are shuffled with the seed, split at floor(fraction * n),
// then standardized on the training split.
Dataset load_csv(const std::string& path, const std::string& target_column, std::uint64_t seed,
                 double train_fraction = 0.9);

// Draws X uniform on [0,1]^d and y from the GP prior at params_true (original
// units, one dense Cholesky with the jitter ladder), then splits and
// standardizes like load_csv. params_true lands in the dataset already mapped
// to standardized units.
Dataset synth_gp(const KernelSpec& spec, const HyperParams& params_true, Index n, Index d,
                 std::uint64_t seed, double train_fraction = 0.9);

// Binary container with embedded standardization constants.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace cagp
