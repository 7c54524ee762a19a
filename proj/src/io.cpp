#include "cagp/io.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace cagp {

namespace {

using nlohmann::json;

// Little-endian fixed-width binary primitives. The containers target x86-64;
// a magic string and version byte guard against format drift.
void put_u64(std::ostream& os, std::uint64_t v) {
  char buf[8];
  for (int k = 0; k < 8; ++k) buf[k] = static_cast<char>((v >> (8 * k)) & 0xff);
  os.write(buf, 8);
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  if (!is) throw ParseError("binary container truncated");
  std::uint64_t v = 0;
  for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(buf[k]) << (8 * k);
  return v;
}

void put_f64(std::ostream& os, double d) {
  std::uint64_t v;
  static_assert(sizeof(v) == sizeof(d));
  std::memcpy(&v, &d, 8);
  put_u64(os, v);
}

double get_f64(std::istream& is) {
  const std::uint64_t v = get_u64(is);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

void put_vector(std::ostream& os, const Vector& v) {
  put_u64(os, static_cast<std::uint64_t>(v.size()));
  for (Index k = 0; k < v.size(); ++k) put_f64(os, v(k));
}

Vector get_vector(std::istream& is) {
  const auto n = static_cast<Index>(get_u64(is));
  Vector v(n);
  for (Index k = 0; k < n; ++k) v(k) = get_f64(is);
  return v;
}

void put_matrix(std::ostream& os, const Matrix& m) {
  put_u64(os, static_cast<std::uint64_t>(m.rows()));
  put_u64(os, static_cast<std::uint64_t>(m.cols()));
  for (Index c = 0; c < m.cols(); ++c)
    for (Index r = 0; r < m.rows(); ++r) put_f64(os, m(r, c));
}

Matrix get_matrix(std::istream& is) {
  const auto rows = static_cast<Index>(get_u64(is));
  const auto cols = static_cast<Index>(get_u64(is));
  Matrix m(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) m(r, c) = get_f64(is);
  return m;
}

void put_string(std::ostream& os, const std::string& s) {
  put_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is) {
  const auto n = get_u64(is);
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw ParseError("binary container truncated");
  return s;
}

void put_params(std::ostream& os, const HyperParams& p) {
  put_f64(os, p.log_outputscale);
  put_vector(os, p.log_lengthscales);
  put_f64(os, p.log_noise);
}

HyperParams get_params(std::istream& is) {
  HyperParams p;
  p.log_outputscale = get_f64(is);
  p.log_lengthscales = get_vector(is);
  p.log_noise = get_f64(is);
  return p;
}

void put_actions(std::ostream& os, const ActionMatrix& S) {
  put_u64(os, S.layout() == ActionLayout::Dense ? 0 : 1);
  put_u64(os, static_cast<std::uint64_t>(S.rows()));
  if (S.layout() == ActionLayout::Dense) {
    put_matrix(os, S.dense_data());
  } else {
    put_u64(os, static_cast<std::uint64_t>(S.cols()));
    for (const auto& b : S.blocks()) {
      put_u64(os, static_cast<std::uint64_t>(b.start));
      put_vector(os, b.values);
    }
  }
}

ActionMatrix get_actions(std::istream& is) {
  const auto layout = get_u64(is);
  const auto n = static_cast<Index>(get_u64(is));
  if (layout == 0) return ActionMatrix::dense(get_matrix(is));
  const auto i = static_cast<Index>(get_u64(is));
  std::vector<SparseBlock> blocks(static_cast<std::size_t>(i));
  for (auto& b : blocks) {
    b.start = static_cast<Index>(get_u64(is));
    b.values = get_vector(is);
  }
  return ActionMatrix::block_sparse(n, std::move(blocks));
}

void put_spec(std::ostream& os, const KernelSpec& s) {
  put_u64(os, s.family == KernelFamily::Matern32 ? 0 : 1);
  put_u64(os, s.ard ? 1 : 0);
}

KernelSpec get_spec(std::istream& is) {
  KernelSpec s;
  s.family = get_u64(is) == 0 ? KernelFamily::Matern32 : KernelFamily::SquaredExponential;
  s.ard = get_u64(is) != 0;
  return s;
}

void put_standardization(std::ostream& os, const Standardization& s) {
  put_vector(os, s.feature_means);
  put_vector(os, s.feature_stds);
  put_f64(os, s.target_mean);
  put_f64(os, s.target_std);
}

Standardization get_standardization(std::istream& is) {
  Standardization s;
  s.feature_means = get_vector(is);
  s.feature_stds = get_vector(is);
  s.target_mean = get_f64(is);
  s.target_std = get_f64(is);
  return s;
}

void expect_magic(std::istream& is, const std::string& magic) {
  std::string got(magic.size(), '\0');
  is.read(got.data(), static_cast<std::streamsize>(magic.size()));
  if (!is || got != magic) throw ParseError("bad container magic (expected " + magic + ")");
}

json params_to_json(const HyperParams& p) {
  json j;
  j["log_outputscale"] = p.log_outputscale;
  j["log_lengthscales"] = std::vector<double>(p.log_lengthscales.data(),
                                              p.log_lengthscales.data() + p.log_lengthscales.size());
  j["log_noise"] = p.log_noise;
  return j;
}

HyperParams params_from_json(const json& j) {
  HyperParams p;
  p.log_outputscale = j.at("log_outputscale").get<double>();
  const auto ls = j.at("log_lengthscales").get<std::vector<double>>();
  p.log_lengthscales = Eigen::Map<const Vector>(ls.data(), static_cast<Index>(ls.size()));
  p.log_noise = j.at("log_noise").get<double>();
  return p;
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write " + path);
  os << "CAGPCK01";
  put_u64(os, ck.is_exact ? 0 : 1);
  put_u64(os, static_cast<std::uint64_t>(ck.method));
  put_u64(os, static_cast<std::uint64_t>(ck.loss_kind));
  put_u64(os, ck.seed);
  put_spec(os, ck.spec);
  put_standardization(os, ck.stand);
  if (ck.is_exact) {
    put_params(os, ck.exact.params);
    put_matrix(os, ck.exact.X);
    put_matrix(os, ck.exact.chol_L);
    put_vector(os, ck.exact.vstar);
    put_f64(os, ck.exact.mean_const);
    put_f64(os, ck.exact.jitter);
  } else {
    put_params(os, ck.cagp.params);
    put_matrix(os, ck.cagp.X);
    put_actions(os, ck.cagp.S);
    put_matrix(os, ck.cagp.chol_L);
    put_vector(os, ck.cagp.vtilde);
    put_vector(os, ck.cagp.w);
    put_f64(os, ck.cagp.jitter);
  }
  if (!os) throw ConfigError("failed writing " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open " + path);
  expect_magic(is, "CAGPCK01");
  Checkpoint ck;
  ck.is_exact = get_u64(is) == 0;
  ck.method = static_cast<Method>(get_u64(is));
  ck.loss_kind = static_cast<LossKind>(get_u64(is));
  ck.seed = get_u64(is);
  ck.spec = get_spec(is);
  ck.stand = get_standardization(is);
  if (ck.is_exact) {
    ck.exact.spec = ck.spec;
    ck.exact.params = get_params(is);
    ck.exact.X = get_matrix(is);
    ck.exact.chol_L = get_matrix(is);
    ck.exact.vstar = get_vector(is);
    ck.exact.mean_const = get_f64(is);
    ck.exact.jitter = get_f64(is);
  } else {
    ck.cagp.spec = ck.spec;
    ck.cagp.params = get_params(is);
    ck.cagp.X = get_matrix(is);
    ck.cagp.S = get_actions(is);
    ck.cagp.chol_L = get_matrix(is);
    ck.cagp.vtilde = get_vector(is);
    ck.cagp.w = get_vector(is);
    ck.cagp.jitter = get_f64(is);
  }
  return ck;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write " + path);
  os << "CAGPDS01";
  put_matrix(os, ds.X_train);
  put_vector(os, ds.y_train);
  put_matrix(os, ds.X_test);
  put_vector(os, ds.y_test);
  put_standardization(os, ds.stand);
  put_u64(os, ds.seed);
  put_string(os, ds.source);
  put_u64(os, ds.params_true.has_value() ? 1 : 0);
  if (ds.params_true) put_params(os, *ds.params_true);
  if (!os) throw ConfigError("failed writing " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open " + path);
  expect_magic(is, "CAGPDS01");
  Dataset ds;
  ds.X_train = get_matrix(is);
  ds.y_train = get_vector(is);
  ds.X_test = get_matrix(is);
  ds.y_test = get_vector(is);
  ds.stand = get_standardization(is);
  ds.seed = get_u64(is);
  ds.source = get_string(is);
  if (get_u64(is) != 0) ds.params_true = get_params(is);
  return ds;
}

void write_records_jsonl(const std::vector<TrainRecord>& records, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path);
  for (const auto& r : records) {
    json j;
    j["epoch"] = r.epoch;
    j["loss"] = r.loss;
    j["params"] = params_to_json(r.params_snapshot);
    j["test_nll"] = r.test_nll;
    j["test_rmse"] = r.test_rmse;
    j["wallclock_s"] = r.wallclock_s;
    os << j.dump() << "\n";
  }
}

std::vector<TrainRecord> read_records_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open " + path);
  std::vector<TrainRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    TrainRecord r;
    r.epoch = j.at("epoch").get<int>();
    r.loss = j.at("loss").get<double>();
    r.params_snapshot = params_from_json(j.at("params"));
    r.test_nll = j.at("test_nll").get<double>();
    r.test_rmse = j.at("test_rmse").get<double>();
    r.wallclock_s = j.at("wallclock_s").get<double>();
    out.push_back(std::move(r));
  }
  return out;
}

void write_final_eval(const FinalEval& fe, const std::string& path) {
  json j;
  j["test_nll"] = fe.report.test_nll;
  j["test_rmse"] = fe.report.test_rmse;
  j["coverage_error_95"] = fe.report.coverage_error_95;
  j["mean_predictive_var"] = fe.report.mean_predictive_var;
  j["n_test"] = fe.report.n_test;
  j["alpha"] = fe.alpha;
  j["coverage_error_alpha"] = fe.coverage_error_alpha;
  j["method"] = fe.method;
  j["loss"] = fe.loss;
  j["seed"] = fe.seed;
  j["epochs_run"] = fe.epochs_run;
  j["diverged"] = fe.diverged;
  j["diverged_at"] = fe.diverged_at;
  j["wallclock_s"] = fe.wallclock_s;
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path);
  os << j.dump(2) << "\n";
}

std::string method_name(Method m) {
  switch (m) {
    case Method::Exact: return "exact";
    case Method::CagpCg: return "cagp-cg";
    case Method::CagpOpt: return "cagp-opt";
  }
  return "?";
}

std::string loss_name(LossKind k) {
  switch (k) {
    case LossKind::Elbo: return "elbo";
    case LossKind::ProjectedNll: return "projected-nll";
    case LossKind::ExactNll: return "exact-nll";
  }
  return "?";
}

namespace {

Method method_of(const std::string& s) {
  if (s == "exact") return Method::Exact;
  if (s == "cagp-cg") return Method::CagpCg;
  if (s == "cagp-opt") return Method::CagpOpt;
  throw ConfigError("unknown method '" + s + "' (exact, cagp-cg, cagp-opt)");
}

LossKind loss_of(const std::string& s) {
  if (s == "elbo") return LossKind::Elbo;
  if (s == "projected-nll") return LossKind::ProjectedNll;
  if (s == "exact-nll") return LossKind::ExactNll;
  throw ConfigError("unknown loss '" + s + "' (elbo, projected-nll, exact-nll)");
}

double to_real(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": cannot parse '" + v + "' as a real");
  }
}

long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long x = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": cannot parse '" + v + "' as an integer");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": cannot parse '" + v + "' as a boolean");
}

std::string trim_ws(const std::string& s) {
  const std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "dataset") cfg.dataset = value;
  else if (key == "target_col") cfg.target_col = value;
  else if (key == "train_fraction") cfg.train_fraction = to_real(key, value);
  else if (key == "synth_n") cfg.synth_n = to_int(key, value);
  else if (key == "synth_d") cfg.synth_d = to_int(key, value);
  else if (key == "synth_outputscale") cfg.synth_outputscale = to_real(key, value);
  else if (key == "synth_noise") cfg.synth_noise = to_real(key, value);
  else if (key == "synth_lengthscale") {
    cfg.synth_lengthscales.clear();
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ','))
      cfg.synth_lengthscales.push_back(to_real(key, trim_ws(item)));
    if (cfg.synth_lengthscales.empty()) throw ConfigError("synth_lengthscale: empty list");
  } else if (key == "kernel") {
    if (value != "matern32" && value != "rbf")
      throw ConfigError("kernel must be matern32 or rbf");
    cfg.kernel = value;
  } else if (key == "ard") cfg.ard = to_bool(key, value);
  else if (key == "method") cfg.train.method = method_of(value);
  else if (key == "loss") cfg.train.loss_kind = loss_of(value);
  else if (key == "epochs") cfg.train.epochs = static_cast<int>(to_int(key, value));
  else if (key == "lr") cfg.train.lr_initial = to_real(key, value);
  else if (key == "lr_end_factor") cfg.train.lr_end_factor = to_real(key, value);
  else if (key == "budget_i") cfg.train.budget_i = to_int(key, value);
  else if (key == "cg_tol") cfg.train.cg_tol = to_real(key, value);
  else if (key == "seed") cfg.train.seed = static_cast<std::uint64_t>(to_int(key, value));
  else if (key == "eval_every") cfg.train.eval_every = static_cast<int>(to_int(key, value));
  else if (key == "grad_clip") cfg.train.grad_clip = to_real(key, value);
  else if (key == "action_lr") cfg.train.action_lr = to_real(key, value);
  else if (key == "alpha") cfg.alpha = to_real(key, value);
  else if (key == "out") cfg.out_dir = value;
  else throw ConfigError("unknown config key '" + key + "'");
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path);
  RunConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim_ws(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim_ws(line.substr(0, eq));
    const std::string value = trim_ws(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key or value");
    apply_config_entry(cfg, key, value);
  }
  return cfg;
}

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  os << "dataset = " << cfg.dataset << "\n";
  os << "target_col = " << cfg.target_col << "\n";
  os << "train_fraction = " << cfg.train_fraction << "\n";
  os << "synth_n = " << cfg.synth_n << "\n";
  os << "synth_d = " << cfg.synth_d << "\n";
  os << "synth_outputscale = " << cfg.synth_outputscale << "\n";
  os << "synth_lengthscale = ";
  for (std::size_t k = 0; k < cfg.synth_lengthscales.size(); ++k)
    os << (k ? "," : "") << cfg.synth_lengthscales[k];
  os << "\n";
  os << "synth_noise = " << cfg.synth_noise << "\n";
  os << "kernel = " << cfg.kernel << "\n";
  os << "ard = " << (cfg.ard ? "true" : "false") << "\n";
  os << "method = " << method_name(cfg.train.method) << "\n";
  os << "loss = " << loss_name(cfg.train.loss_kind) << "\n";
  os << "epochs = " << cfg.train.epochs << "\n";
  os << "lr = " << cfg.train.lr_initial << "\n";
  os << "lr_end_factor = " << cfg.train.lr_end_factor << "\n";
  os << "budget_i = " << cfg.train.budget_i << "\n";
  os << "cg_tol = " << cfg.train.cg_tol << "\n";
  os << "seed = " << cfg.train.seed << "\n";
  os << "eval_every = " << cfg.train.eval_every << "\n";
  os << "grad_clip = " << cfg.train.grad_clip << "\n";
  os << "action_lr = " << cfg.train.action_lr << "\n";
  os << "alpha = " << cfg.alpha << "\n";
  os << "out = " << cfg.out_dir << "\n";
  return os.str();
}

KernelSpec kernel_spec_of(const RunConfig& cfg) {
  KernelSpec spec;
  spec.family =
      cfg.kernel == "rbf" ? KernelFamily::SquaredExponential : KernelFamily::Matern32;
  spec.ard = cfg.ard;
  return spec;
}

Dataset dataset_of(const RunConfig& cfg) {
  if (cfg.dataset == "synth") {
    KernelSpec spec = kernel_spec_of(cfg);
    HyperParams p;
    p.log_outputscale = std::log(cfg.synth_outputscale);
    p.log_noise = std::log(cfg.synth_noise);
    const Index nl = num_lengthscales(spec, cfg.synth_d);
    p.log_lengthscales.resize(nl);
    for (Index j = 0; j < nl; ++j) {
      const std::size_t src = cfg.synth_lengthscales.size() == 1
                                  ? 0
                                  : static_cast<std::size_t>(j);
      if (src >= cfg.synth_lengthscales.size())
        throw ConfigError("synth_lengthscale: need 1 or synth_d values");
      p.log_lengthscales(j) = std::log(cfg.synth_lengthscales[src]);
    }
    return synth_gp(spec, p, cfg.synth_n, cfg.synth_d, cfg.train.seed, cfg.train_fraction);
  }
  return load_csv(cfg.dataset, cfg.target_col, cfg.train.seed, cfg.train_fraction);
}

}  // namespace cagp
