#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cagp/exact_gp.hpp"
#include "cagp/trainer.hpp"
#include "helpers.hpp"

using namespace cagp;
using namespace testutil;

namespace {

Dataset small_synth(Index n, std::uint64_t seed, double lengthscale = 0.25,
                    double sigma = 0.15) {
  KernelSpec spec;
  return synth_gp(spec, typical_params(1, 0.0, lengthscale, sigma), n, 1, seed);
}

}  // namespace

TEST_CASE("adam steps") {
  SUBCASE("first step moves by about lr in the gradient direction") {
    AdamState st;
    Vector x(2), g(2);
    x << 1.0, 2.0;
    g << 3.0, -5.0;
    adam_step(st, x, g, 0.1, 0.9, 0.999, 1e-8);
    // m-hat = g and v-hat = g^2 on the first step, so the update is
    // lr * g / (|g| + eps).
    CHECK(x(0) == doctest::Approx(1.0 - 0.1).epsilon(1e-8));
    CHECK(x(1) == doctest::Approx(2.0 + 0.1).epsilon(1e-8));
    CHECK(st.t == 1);
  }

  SUBCASE("zero gradient leaves the iterate untouched") {
    AdamState st;
    Vector x(3);
    x << -1.0, 0.5, 7.0;
    const Vector before = x;
    adam_step(st, x, Vector::Zero(3), 0.5, 0.9, 0.999, 1e-8);
    CHECK((x - before).norm() == 0.0);
  }

  SUBCASE("bad gradients are rejected before mutating state") {
    AdamState st;
    Vector x(2);
    x << 1.0, 1.0;
    const Vector before = x;
    CHECK_THROWS_AS(adam_step(st, x, Vector::Ones(3), 0.1, 0.9, 0.999, 1e-8),
                    DimensionMismatch);
    Vector g(2);
    g << 1.0, std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(adam_step(st, x, g, 0.1, 0.9, 0.999, 1e-8), NonFiniteGradient);
    CHECK((x - before).norm() == 0.0);
  }
}

TEST_CASE("learning rate schedule") {
  CHECK(lr_schedule(0, 100, 0.2, 0.1) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(lr_schedule(99, 100, 0.2, 0.1) == doctest::Approx(0.02).epsilon(1e-12));
  CHECK(lr_schedule(5, 11, 0.2, 0.1) == doctest::Approx(0.2 * 0.55).epsilon(1e-12));
  CHECK(lr_schedule(0, 1, 0.3, 0.1) == 0.3);
  CHECK_THROWS_AS(lr_schedule(10, 10, 0.1, 0.1), ConfigError);
  CHECK_THROWS_AS(lr_schedule(-1, 10, 0.1, 0.1), ConfigError);
}

TEST_CASE("train rejects inconsistent configs") {
  KernelSpec spec;
  Dataset ds = small_synth(40, 1);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.budget_i = 4;

  SUBCASE("exact method needs the exact loss") {
    cfg.method = Method::Exact;
    cfg.loss_kind = LossKind::Elbo;
    CHECK_THROWS_AS(train(cfg, spec, ds), ConfigError);
  }
  SUBCASE("exact loss needs the exact method") {
    cfg.method = Method::CagpOpt;
    cfg.loss_kind = LossKind::ExactNll;
    CHECK_THROWS_AS(train(cfg, spec, ds), ConfigError);
  }
  SUBCASE("budget cannot exceed the training size") {
    cfg.budget_i = ds.X_train.rows() + 1;
    CHECK_THROWS_AS(train(cfg, spec, ds), ConfigError);
  }
  SUBCASE("negative epochs") {
    cfg.epochs = -1;
    CHECK_THROWS_AS(train(cfg, spec, ds), ConfigError);
  }
  SUBCASE("zero learning rate") {
    cfg.lr_initial = 0.0;
    CHECK_THROWS_AS(train(cfg, spec, ds), ConfigError);
  }
}

TEST_CASE("train is deterministic given config and data") {
  KernelSpec spec;
  Dataset ds = small_synth(60, 2);
  TrainConfig cfg;
  cfg.method = Method::CagpOpt;
  cfg.epochs = 5;
  cfg.budget_i = 4;
  cfg.lr_initial = 0.05;
  cfg.seed = 11;

  const TrainResult a = train(cfg, spec, ds);
  const TrainResult b = train(cfg, spec, ds);
  REQUIRE(a.records.size() == b.records.size());
  REQUIRE(a.records.size() == 5);
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    CHECK(a.records[k].epoch == b.records[k].epoch);
    CHECK(a.records[k].loss == b.records[k].loss);
    CHECK(a.records[k].test_nll == b.records[k].test_nll);
    CHECK(a.records[k].test_rmse == b.records[k].test_rmse);
    CHECK((pack_hyper(a.records[k].params_snapshot) -
           pack_hyper(b.records[k].params_snapshot))
              .norm() == 0.0);
  }
  CHECK((pack_hyper(a.params) - pack_hyper(b.params)).norm() == 0.0);
  CHECK(a.final_eval.test_nll == b.final_eval.test_nll);
}

TEST_CASE("zero epochs returns the initial model") {
  KernelSpec spec;
  Dataset ds = small_synth(50, 3);
  TrainConfig cfg;
  cfg.method = Method::CagpOpt;
  cfg.epochs = 0;
  cfg.budget_i = 4;

  const TrainResult res = train(cfg, spec, ds);
  CHECK(res.records.empty());
  CHECK_FALSE(res.diverged_at.has_value());
  const HyperParams def = default_params(spec, 1);
  CHECK((pack_hyper(res.params) - pack_hyper(def)).norm() == 0.0);
  CHECK(res.actions.cols() == 4);
  CHECK(std::isfinite(res.final_eval.test_nll));
  CHECK(res.final_eval.n_test == ds.y_test.size());
}

TEST_CASE("cg with a loose tolerance degenerates to the prior") {
  KernelSpec spec;
  Dataset ds = small_synth(50, 4);
  TrainConfig cfg;
  cfg.method = Method::CagpCg;
  cfg.loss_kind = LossKind::Elbo;
  cfg.epochs = 2;
  cfg.budget_i = 8;
  cfg.cg_tol = 10.0;  // the initial residual already satisfies this

  const TrainResult res = train(cfg, spec, ds);
  CHECK(res.actions.cols() == 0);
  REQUIRE(res.records.size() == 2);
  const LossValue prior = loss_eval(LossKind::Elbo, spec, default_params(spec, 1),
                                    ds.X_train, ds.y_train,
                                    ActionMatrix::empty(ds.X_train.rows()));
  CHECK(res.records[0].loss == prior.total);
  CHECK(std::isfinite(res.final_eval.test_nll));
}

TEST_CASE("loss descends on a smooth synthetic problem") {
  KernelSpec spec;
  Dataset ds = small_synth(256, 5);
  TrainConfig cfg;
  cfg.method = Method::CagpOpt;
  cfg.epochs = 60;
  cfg.budget_i = 8;
  cfg.lr_initial = 0.05;

  const TrainResult res = train(cfg, spec, ds);
  REQUIRE(res.records.size() == 60);
  CHECK_FALSE(res.diverged_at.has_value());
  double head = 0.0, tail = 0.0;
  for (int k = 0; k < 6; ++k) {
    head += res.records[static_cast<std::size_t>(k)].loss;
    tail += res.records[res.records.size() - 1 - static_cast<std::size_t>(k)].loss;
  }
  CHECK(tail < head);
}

TEST_CASE("noise level is recovered on synthetic data") {
  KernelSpec spec;
  Dataset ds = synth_gp(spec, typical_params(1, 0.0, 0.2, 0.1), 512, 1, 3);
  REQUIRE(ds.params_true.has_value());

  TrainConfig cfg;
  cfg.method = Method::CagpOpt;
  cfg.epochs = 300;
  cfg.budget_i = 16;
  cfg.lr_initial = 0.1;
  cfg.eval_every = 0;  // metrics only at the end; keeps the run fast

  const TrainResult res = train(cfg, spec, ds);
  CHECK_FALSE(res.diverged_at.has_value());
  const double s_true = ds.params_true->noise();
  const double s_hat = res.params.noise();
  CHECK(s_hat >= 0.5 * s_true);
  CHECK(s_hat <= 2.0 * s_true);
}

TEST_CASE("divergence rolls back to the last finite model") {
  KernelSpec spec;
  Dataset ds = small_synth(40, 6);
  TrainConfig cfg;
  cfg.method = Method::CagpOpt;
  cfg.epochs = 6;
  cfg.budget_i = 4;
  cfg.lr_initial = 1e4;  // one step throws the log-parameters past overflow

  WarnCapture warns;
  const TrainResult res = train(cfg, spec, ds);
  REQUIRE(res.diverged_at.has_value());
  CHECK(*res.diverged_at >= 1);  // the initial model itself is fine
  CHECK(pack_hyper(res.params).allFinite());
  CHECK(std::isfinite(res.final_eval.test_nll));
  CHECK(std::isfinite(res.final_eval.test_rmse));
}

TEST_CASE("evaluate_model agrees with a manual fit and eval") {
  KernelSpec spec;
  Dataset ds = small_synth(50, 7);
  const HyperParams p = typical_params(1, 0.05, 0.3, 0.2);

  SUBCASE("cagp path") {
    const ActionMatrix S = actions_random(ds.X_train.rows(), 5, 13);
    const EvalReport via = evaluate_model(Method::CagpCg, spec, p, S, ds);

    const CagpState st = fit_batch(spec, p, ds.X_train, ds.y_train, S);
    const Prediction pred = predict_cagp(st, ds.X_test);
    const EvalReport manual = eval_predictive(
        destandardize_mean(ds.stand, pred.mean),
        destandardize_var(ds.stand, pred.predictive_var),
        destandardize_mean(ds.stand, ds.y_test));
    CHECK(via.test_nll == doctest::Approx(manual.test_nll).epsilon(1e-14));
    CHECK(via.test_rmse == doctest::Approx(manual.test_rmse).epsilon(1e-14));
    CHECK(via.coverage_error_95 == manual.coverage_error_95);
    CHECK(via.n_test == ds.y_test.size());
  }

  SUBCASE("exact path ignores the actions") {
    const EvalReport via = evaluate_model(
        Method::Exact, spec, p, ActionMatrix::empty(ds.X_train.rows()), ds);
    const ExactPosterior post = fit_exact(spec, p, ds.X_train, ds.y_train);
    const Prediction pred = predict_exact(post, ds.X_test);
    const EvalReport manual = eval_predictive(
        destandardize_mean(ds.stand, pred.mean),
        destandardize_var(ds.stand, pred.predictive_var),
        destandardize_mean(ds.stand, ds.y_test));
    CHECK(via.test_nll == doctest::Approx(manual.test_nll).epsilon(1e-14));
    CHECK(via.test_rmse == doctest::Approx(manual.test_rmse).epsilon(1e-14));
  }
}

TEST_CASE("policy diagnostics") {
  KernelSpec spec;
  Dataset ds = small_synth(40, 8);

  SUBCASE("one row per epoch with finite distances") {
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.budget_i = 6;
    const auto rows = diagnose_policies(cfg, spec, ds);
    REQUIRE(rows.size() == 3);
    for (int e = 0; e < 3; ++e) {
      CHECK(rows[static_cast<std::size_t>(e)].epoch == e);
      CHECK(std::isfinite(rows[static_cast<std::size_t>(e)].dist_cg));
      CHECK(std::isfinite(rows[static_cast<std::size_t>(e)].dist_random));
      CHECK(rows[static_cast<std::size_t>(e)].dist_cg >= 0.0);
      CHECK(rows[static_cast<std::size_t>(e)].dist_random >= 0.0);
    }
  }

  SUBCASE("full budget makes every policy span-perfect") {
    // With i = n_train the oracle space is everything, so any realized span
    // sits inside it and both distances collapse to zero.
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.budget_i = ds.X_train.rows();
    const auto rows = diagnose_policies(cfg, spec, ds);
    REQUIRE(rows.size() == 2);
    for (const auto& row : rows) {
      CHECK(row.dist_cg < 1e-5);
      CHECK(row.dist_random < 1e-5);
    }
  }
}
