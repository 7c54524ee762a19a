#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "cagp/io.hpp"
#include "cagp/verify.hpp"

namespace {

using namespace cagp;

// Every flag is kept as the raw string and pushed through the same
// key = value entry point as the config file, so validation lives in one
// place and flags win over file entries.
struct FlagSet {
  std::string config, seed, out, dataset, target_col, method, loss, budget_i, epochs, lr, alpha;
};

void add_common_flags(CLI::App* sub, FlagSet& f) {
  sub->add_option("--config", f.config, "configuration file (key = value lines, # comments)");
  sub->add_option("--seed", f.seed, "run seed");
  sub->add_option("--out", f.out, "output directory");
  sub->add_option("--dataset", f.dataset, "'synth' or a CSV path");
  sub->add_option("--target-col", f.target_col, "CSV target column name");
  sub->add_option("--method", f.method, "exact | cagp-cg | cagp-opt");
  sub->add_option("--loss", f.loss, "elbo | projected-nll | exact-nll");
  sub->add_option("--budget-i", f.budget_i, "number of actions");
  sub->add_option("--epochs", f.epochs, "training epochs");
  sub->add_option("--lr", f.lr, "initial learning rate");
  sub->add_option("--alpha", f.alpha, "credible-interval mass for coverage");
}

RunConfig resolve(const FlagSet& f) {
  RunConfig cfg = f.config.empty() ? RunConfig{} : parse_config_file(f.config);
  const auto apply = [&cfg](const char* key, const std::string& v) {
    if (!v.empty()) apply_config_entry(cfg, key, v);
  };
  apply("seed", f.seed);
  apply("out", f.out);
  apply("dataset", f.dataset);
  apply("target_col", f.target_col);
  apply("method", f.method);
  apply("loss", f.loss);
  apply("budget_i", f.budget_i);
  apply("epochs", f.epochs);
  apply("lr", f.lr);
  apply("alpha", f.alpha);
  return cfg;
}

bool stand_matches(const Standardization& a, const Standardization& b) {
  if (a.feature_means.size() != b.feature_means.size()) return false;
  return (a.feature_means - b.feature_means).lpNorm<Eigen::Infinity>() <= 1e-12 &&
         (a.feature_stds - b.feature_stds).lpNorm<Eigen::Infinity>() <= 1e-12 &&
         std::abs(a.target_mean - b.target_mean) <= 1e-12 &&
         std::abs(a.target_std - b.target_std) <= 1e-12;
}

int cmd_train(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  const KernelSpec spec = kernel_spec_of(cfg);
  const Dataset ds = dataset_of(cfg);

  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult res = train(cfg.train, spec, ds);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  write_records_jsonl(res.records, cfg.out_dir + "/records.jsonl");
  {
    std::ofstream os(cfg.out_dir + "/config.resolved.txt");
    os << serialize_config(cfg);
  }

  // One final fit serves both the checkpoint and coverage at the run's alpha.
  Checkpoint ck;
  ck.method = cfg.train.method;
  ck.loss_kind = cfg.train.loss_kind;
  ck.seed = cfg.train.seed;
  ck.spec = spec;
  ck.stand = ds.stand;
  Vector mean, pvar;
  if (cfg.train.method == Method::Exact) {
    ck.is_exact = true;
    ck.exact = fit_exact(spec, res.params, ds.X_train, ds.y_train);
    const Prediction pr = predict_exact(ck.exact, ds.X_test);
    mean = destandardize_mean(ds.stand, pr.mean);
    pvar = destandardize_var(ds.stand, pr.predictive_var);
  } else {
    ck.is_exact = false;
    ck.cagp = fit_batch(spec, res.params, ds.X_train, ds.y_train, res.actions);
    const Prediction pr = predict_cagp(ck.cagp, ds.X_test);
    mean = destandardize_mean(ds.stand, pr.mean);
    pvar = destandardize_var(ds.stand, pr.predictive_var);
  }
  save_checkpoint(ck, cfg.out_dir + "/checkpoint.bin");

  FinalEval fe;
  fe.report = res.final_eval;
  fe.alpha = cfg.alpha;
  fe.coverage_error_alpha =
      coverage_error(mean, pvar, destandardize_mean(ds.stand, ds.y_test), cfg.alpha);
  fe.method = method_name(cfg.train.method);
  fe.loss = loss_name(cfg.train.loss_kind);
  fe.seed = cfg.train.seed;
  fe.epochs_run = res.diverged_at.value_or(cfg.train.epochs);
  fe.diverged = res.diverged_at.has_value();
  fe.diverged_at = res.diverged_at.value_or(-1);
  fe.wallclock_s = wall;
  write_final_eval(fe, cfg.out_dir + "/final.eval.json");

  std::cout << "test nll " << fe.report.test_nll << ", rmse " << fe.report.test_rmse
            << ", coverage error (95%) " << fe.report.coverage_error_95 << "\n"
            << "artifacts in " << cfg.out_dir
            << ": records.jsonl, final.eval.json, checkpoint.bin, config.resolved.txt\n";
  if (fe.diverged) {
    std::cerr << "training diverged at epoch " << fe.diverged_at << "\n";
    return 2;
  }
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path, bool write_file) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  const Dataset ds = dataset_of(cfg);
  if (!stand_matches(ck.stand, ds.stand))
    throw ConfigError(
        "dataset does not match the checkpoint (standardization constants differ); "
        "use the training run's dataset and seed");

  const Prediction pr =
      ck.is_exact ? predict_exact(ck.exact, ds.X_test) : predict_cagp(ck.cagp, ds.X_test);
  const Vector mean = destandardize_mean(ds.stand, pr.mean);
  const Vector pvar = destandardize_var(ds.stand, pr.predictive_var);
  const Vector y = destandardize_mean(ds.stand, ds.y_test);
  const EvalReport rep = eval_predictive(mean, pvar, y);

  nlohmann::json j;
  j["test_nll"] = rep.test_nll;
  j["test_rmse"] = rep.test_rmse;
  j["coverage_error_95"] = rep.coverage_error_95;
  j["coverage_error_alpha"] = coverage_error(mean, pvar, y, cfg.alpha);
  j["alpha"] = cfg.alpha;
  j["mean_predictive_var"] = rep.mean_predictive_var;
  j["n_test"] = rep.n_test;
  j["method"] = method_name(ck.method);
  j["loss"] = loss_name(ck.loss_kind);
  j["seed"] = ck.seed;
  std::cout << j.dump(2) << "\n";
  if (write_file) {
    std::filesystem::create_directories(cfg.out_dir);
    std::ofstream os(cfg.out_dir + "/eval.json");
    os << j.dump(2) << "\n";
  }
  return 0;
}

int cmd_verify(const std::string& suite, std::uint64_t seed) {
  const std::vector<SuiteResult> results = run_verify(suite, seed);
  bool all = true;
  for (const auto& r : results) {
    all = all && r.outcome.pass;
    std::cout << (r.outcome.pass ? "[PASS] " : "[FAIL] ") << std::left << std::setw(22)
              << r.suite << " " << r.outcome.detail << "\n";
  }
  return all ? 0 : 1;
}

int cmd_diagnose(const RunConfig& cfg, bool write_file) {
  const KernelSpec spec = kernel_spec_of(cfg);
  const Dataset ds = dataset_of(cfg);
  const std::vector<PolicyDiagRow> rows = diagnose_policies(cfg.train, spec, ds);

  std::ostringstream csv;
  csv << "epoch,policy,grassmann_distance\n";
  csv << std::setprecision(10);
  for (const auto& r : rows) {
    csv << r.epoch << ",cg," << r.dist_cg << "\n";
    csv << r.epoch << ",random," << r.dist_random << "\n";
  }
  std::cout << csv.str();
  if (write_file) {
    std::filesystem::create_directories(cfg.out_dir);
    std::ofstream os(cfg.out_dir + "/diagnose.csv");
    os << csv.str();
  }
  return 0;
}

std::uint64_t parse_seed(const std::string& s) {
  try {
    std::size_t pos = 0;
    const std::uint64_t v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("cannot parse seed '" + s + "'");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"computation-aware Gaussian process regression toolkit"};
  app.require_subcommand(1);

  FlagSet train_flags, eval_flags, diag_flags;
  std::string suite = "all";
  std::string verify_seed = "0";
  std::string checkpoint_path;

  CLI::App* t = app.add_subcommand("train", "train a model and write run artifacts");
  add_common_flags(t, train_flags);
  CLI::App* e = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  add_common_flags(e, eval_flags);
  e->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  CLI::App* v = app.add_subcommand("verify", "run property suites and print a pass/fail table");
  v->add_option("suite", suite, "suite name, or 'all'");
  v->add_option("--seed", verify_seed, "suite seed");
  CLI::App* dg =
      app.add_subcommand("diagnose-policies", "per-epoch span alignment of action policies");
  add_common_flags(dg, diag_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe);
    return code == 0 ? 0 : 1;
  }

  try {
    if (t->parsed()) return cmd_train(resolve(train_flags));
    if (e->parsed()) return cmd_eval(resolve(eval_flags), checkpoint_path, !eval_flags.out.empty());
    if (v->parsed()) return cmd_verify(suite, parse_seed(verify_seed));
    if (dg->parsed()) return cmd_diagnose(resolve(diag_flags), !diag_flags.out.empty());
  } catch (const NotPositiveDefinite& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 2;  // numerical divergence
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 1;
}
