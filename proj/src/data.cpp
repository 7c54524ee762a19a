#include "cagp/data.hpp"

#include <charconv>
#include <fstream>
#include <numeric>
#include <vector>

#include "cagp/exact_gp.hpp"
#include "cagp/linalg.hpp"

namespace cagp {

namespace {

// Population statistics; a column with zero spread keeps std 1 so downstream
// arithmetic stays finite.
void mean_std(const Vector& col, double& mean, double& std_out) {
  const double n = static_cast<double>(col.size());
  mean = col.mean();
  const double var = (col.array() - mean).square().sum() / n;
  std_out = var > 0.0 ? std::sqrt(var) : 1.0;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    if (comma == std::string::npos) {
      out.push_back(line.substr(pos));
      return out;
    }
    out.push_back(line.substr(pos, comma - pos));
    pos = comma + 1;
  }
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_cell(const std::string& raw, std::size_t row, std::size_t col) {
  const std::string s = trim(raw);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v))
    throw ParseError("row " + std::to_string(row) + ", column " + std::to_string(col + 1) +
                     ": cannot parse '" + raw + "' as a finite real");
  return v;
}

Dataset split_and_standardize(Matrix X, Vector y, Rng& rng, std::uint64_t seed,
                              double train_fraction, std::string source) {
  const Index n = X.rows();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  rng.shuffle(order);

  const Index n_train = static_cast<Index>(train_fraction * static_cast<double>(n));
  if (n_train < 1) throw ConfigError("empty train split (n=" + std::to_string(n) + ")");
  const Index n_test = n - n_train;

  Dataset ds;
  ds.seed = seed;
  ds.source = std::move(source);
  ds.X_train.resize(n_train, X.cols());
  ds.y_train.resize(n_train);
  ds.X_test.resize(n_test, X.cols());
  ds.y_test.resize(n_test);
  for (Index r = 0; r < n_train; ++r) {
    ds.X_train.row(r) = X.row(order[static_cast<std::size_t>(r)]);
    ds.y_train(r) = y(order[static_cast<std::size_t>(r)]);
  }
  for (Index r = 0; r < n_test; ++r) {
    ds.X_test.row(r) = X.row(order[static_cast<std::size_t>(n_train + r)]);
    ds.y_test(r) = y(order[static_cast<std::size_t>(n_train + r)]);
  }
  ds.stand = standardize_split(ds.X_train, ds.y_train, ds.X_test, ds.y_test);
  return ds;
}

}  // namespace

Standardization standardize_split(Matrix& X_train, Vector& y_train, Matrix& X_test,
                                  Vector& y_test) {
  const Index d = X_train.cols();
  Standardization s;
  s.feature_means.resize(d);
  s.feature_stds.resize(d);
  for (Index j = 0; j < d; ++j) {
    double m, sd;
    const Vector col = X_train.col(j);
    mean_std(col, m, sd);
    s.feature_means(j) = m;
    s.feature_stds(j) = sd;
    X_train.col(j) = (X_train.col(j).array() - m) / sd;
    if (X_test.rows() > 0) X_test.col(j) = (X_test.col(j).array() - m) / sd;
  }
  mean_std(y_train, s.target_mean, s.target_std);
  y_train = (y_train.array() - s.target_mean) / s.target_std;
  if (y_test.size() > 0) y_test = (y_test.array() - s.target_mean) / s.target_std;
  return s;
}

Vector destandardize_mean(const Standardization& s, const Vector& m) {
  return (s.target_mean + s.target_std * m.array()).matrix();
}

Vector destandardize_var(const Standardization& s, const Vector& v) {
  return (s.target_std * s.target_std * v.array()).matrix();
}

Dataset load_csv(const std::string& path, const std::string& target_column, std::uint64_t seed,
                 double train_fraction) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  const std::vector<std::string> header = split_line(line);
  Index target = -1;
  for (std::size_t c = 0; c < header.size(); ++c)
    if (trim(header[c]) == target_column) target = static_cast<Index>(c);
  if (target < 0) throw ConfigError(path + ": no column named '" + target_column + "'");

  const std::size_t ncols = header.size();
  std::vector<double> values;
  std::size_t nrows = 0;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split_line(line);
    if (cells.size() != ncols)
      throw ParseError(path + ": row " + std::to_string(lineno) + " has " +
                       std::to_string(cells.size()) + " cells, expected " +
                       std::to_string(ncols));
    for (std::size_t c = 0; c < ncols; ++c) values.push_back(parse_cell(cells[c], lineno, c));
    ++nrows;
  }
  if (nrows == 0) throw ParseError(path + ": no data rows");

  Matrix X(nrows, ncols - 1);
  Vector y(nrows);
  for (std::size_t r = 0; r < nrows; ++r) {
    Index xc = 0;
    for (std::size_t c = 0; c < ncols; ++c) {
      const double v = values[r * ncols + c];
      if (static_cast<Index>(c) == target)
        y(static_cast<Index>(r)) = v;
      else
        X(static_cast<Index>(r), xc++) = v;
    }
  }
  Rng rng(seed);
  return split_and_standardize(std::move(X), std::move(y), rng, seed, train_fraction,
                               "csv:" + path);
}

Dataset synth_gp(const KernelSpec& spec, const HyperParams& params_true, Index n, Index d,
                 std::uint64_t seed, double train_fraction) {
  if (n > kExactSizeCap)
    throw OracleTooLarge("synth_gp needs a dense Cholesky; capped at n = " +
                         std::to_string(kExactSizeCap));
  Rng rng(seed);
  Matrix X(n, d);
  for (Index r = 0; r < n; ++r)
    for (Index j = 0; j < d; ++j) X(r, j) = rng.uniform();

  Matrix K = gram(spec, params_true, X);
  CholResult ch = chol_jittered(K, K.diagonal().mean());
  const Matrix L = ch.llt.matrixL();
  Vector y = L * rng.normal_vector(n);
  const double sigma = params_true.noise();
  if (sigma > 0.0) y += sigma * rng.normal_vector(n);

  // The same stream continues into the shuffle so the permutation is not a
  // replay of the draws that produced X.
  Dataset ds = split_and_standardize(std::move(X), std::move(y), rng, seed, train_fraction,
                                     "synth");
  ds.seed = seed;

  // Map the generating parameters into the standardized coordinate system:
  // lengthscales shrink by the feature stds, output and noise scales by the
  // target std.
  HyperParams mapped = params_true;
  mapped.log_outputscale -= std::log(ds.stand.target_std);
  mapped.log_noise -= std::log(ds.stand.target_std);
  for (Index j = 0; j < mapped.log_lengthscales.size(); ++j) {
    const Index fj = mapped.log_lengthscales.size() == d ? j : 0;
    mapped.log_lengthscales(j) -= std::log(ds.stand.feature_stds(fj));
  }
  ds.params_true = mapped;
  return ds;
}

}  // namespace cagp
