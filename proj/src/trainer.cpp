#include "cagp/trainer.hpp"

#include <chrono>
#include <cmath>

namespace cagp {

namespace {

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void check_config(const TrainConfig& cfg, const Dataset& ds) {
  if (cfg.method == Method::Exact && cfg.loss_kind != LossKind::ExactNll)
    throw ConfigError("method exact requires the exact NLL loss");
  if (cfg.method != Method::Exact && cfg.loss_kind == LossKind::ExactNll)
    throw ConfigError("exact NLL loss requires method exact");
  if (cfg.budget_i > ds.X_train.rows())
    throw ConfigError("budget_i exceeds the training set size");
  if (cfg.epochs < 0) throw ConfigError("epochs must be non-negative");
  if (!(cfg.lr_initial > 0.0)) throw ConfigError("lr_initial must be positive");
  if (!(cfg.lr_end_factor > 0.0 && cfg.lr_end_factor <= 1.0))
    throw ConfigError("lr_end_factor must be in (0, 1]");
}

// Orthonormal basis of the numerical column span. Finite-precision CG
// residuals go numerically dependent once the Krylov space saturates, so
// span distances must be taken on the independent part only.
Matrix span_basis(const Matrix& M) {
  Eigen::ColPivHouseholderQR<Matrix> qr(M);
  const Index r = qr.rank();
  if (r == 0) throw RankDeficient("span_basis: zero numerical rank");
  return qr.householderQ() * Matrix::Identity(M.rows(), r);
}

// Collect trainable action values of a block-sparse S into one vector.
Vector pack_blocks(const ActionMatrix& S) {
  Index total = 0;
  for (const auto& b : S.blocks()) total += b.values.size();
  Vector x(total);
  Index off = 0;
  for (const auto& b : S.blocks()) {
    x.segment(off, b.values.size()) = b.values;
    off += b.values.size();
  }
  return x;
}

void unpack_blocks(const Vector& x, ActionMatrix& S) {
  Index off = 0;
  for (auto& b : S.mutable_blocks()) {
    b.values = x.segment(off, b.values.size());
    off += b.values.size();
  }
}

}  // namespace

void adam_step(AdamState& st, Vector& x, const Vector& g, double lr, double beta1, double beta2,
               double eps) {
  if (g.size() != x.size()) throw DimensionMismatch("adam_step: gradient vs parameter size");
  if (!g.allFinite()) throw NonFiniteGradient("adam_step");
  if (st.t == 0) {
    st.m = Vector::Zero(x.size());
    st.v = Vector::Zero(x.size());
  }
  ++st.t;
  st.m = beta1 * st.m + (1.0 - beta1) * g;
  st.v = beta2 * st.v + (1.0 - beta2) * g.cwiseProduct(g);
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(st.t));
  x.array() -=
      lr * (st.m / bc1).array() / ((st.v / bc2).array().sqrt() + eps);
}

double lr_schedule(int epoch, int total_epochs, double lr_initial, double end_factor) {
  if (epoch < 0 || epoch >= total_epochs) throw ConfigError("lr_schedule: epoch out of range");
  if (total_epochs <= 1) return lr_initial;
  const double frac = static_cast<double>(epoch) / static_cast<double>(total_epochs - 1);
  return lr_initial * (1.0 + (end_factor - 1.0) * frac);
}

EvalReport evaluate_model(Method method, const KernelSpec& spec, const HyperParams& params,
                          const ActionMatrix& actions, const Dataset& ds) {
  Prediction pred;
  if (method == Method::Exact) {
    const ExactPosterior post = fit_exact(spec, params, ds.X_train, ds.y_train);
    pred = predict_exact(post, ds.X_test);
  } else {
    const CagpState st = fit_batch(spec, params, ds.X_train, ds.y_train, actions);
    pred = predict_cagp(st, ds.X_test);
  }
  const Vector mean = destandardize_mean(ds.stand, pred.mean);
  const Vector pvar = destandardize_var(ds.stand, pred.predictive_var);
  const Vector y = destandardize_mean(ds.stand, ds.y_test);
  return eval_predictive(mean, pvar, y);
}

TrainResult train(const TrainConfig& cfg, const KernelSpec& spec, const Dataset& ds) {
  check_config(cfg, ds);
  const auto t0 = std::chrono::steady_clock::now();
  const Index d = ds.X_train.cols();

  TrainResult res;
  HyperParams params = default_params(spec, d);
  Vector x_hyper = pack_hyper(params);

  ActionMatrix learned = ActionMatrix::empty(ds.X_train.rows());
  Vector x_act;
  if (cfg.method == Method::CagpOpt) {
    learned = actions_sparse_init(ds.X_train.rows(), cfg.budget_i, cfg.seed);
    x_act = pack_blocks(learned);
  }
  AdamState adam_hyper, adam_act;

  auto actions_for_epoch = [&](const HyperParams& p) -> ActionMatrix {
    switch (cfg.method) {
      case Method::CagpOpt:
        return learned;
      case Method::CagpCg:
        // Raw residual norms span several orders of magnitude, making S'S
        // numerically singular. Losses and fits are span-invariant, so hand
        // them the orthonormalized basis instead.
        return orthonormalize(
            actions_cg(spec, p, ds.X_train, ds.y_train, cfg.budget_i, cfg.cg_tol));
      case Method::Exact:
        return ActionMatrix::empty(ds.X_train.rows());
    }
    throw ConfigError("train: unknown method");
  };

  // Last parameter vectors whose loss came out finite; a diverging step rolls
  // back to these so the returned model (and its final evaluation) is usable.
  Vector x_hyper_safe = x_hyper;
  Vector x_act_safe = x_act;
  auto roll_back = [&](int epoch) {
    res.diverged_at = epoch;
    x_hyper = x_hyper_safe;
    if (cfg.method == Method::CagpOpt) {
      x_act = x_act_safe;
      unpack_blocks(x_act, learned);
    }
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    params = unpack_hyper(spec, d, x_hyper);
    const ActionMatrix S = actions_for_epoch(params);

    GradientBundle grad;
    LossValue loss;
    try {
      loss = loss_grad(cfg.loss_kind, spec, params, ds.X_train, ds.y_train, S, grad);
    } catch (const NotPositiveDefinite&) {
      roll_back(epoch);
      break;
    }
    if (!std::isfinite(loss.total)) {
      roll_back(epoch);
      break;
    }
    x_hyper_safe = x_hyper;
    x_act_safe = x_act;

    if (cfg.eval_every > 0 && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs - 1)) {
      const EvalReport rep = evaluate_model(cfg.method, spec, params, S, ds);
      TrainRecord rec;
      rec.epoch = epoch;
      rec.loss = loss.total;
      rec.params_snapshot = params;
      rec.test_nll = rep.test_nll;
      rec.test_rmse = rep.test_rmse;
      rec.wallclock_s = seconds_since(t0);
      res.records.push_back(std::move(rec));
    }

    // Global-norm clip over everything that moves this epoch.
    double sq = grad.d_hyper.squaredNorm();
    if (cfg.method == Method::CagpOpt) sq += grad.d_actions.squaredNorm();
    const double norm = std::sqrt(sq);
    const double scale = norm > cfg.grad_clip ? cfg.grad_clip / norm : 1.0;

    const double lr_h = lr_schedule(epoch, cfg.epochs, cfg.lr_initial, cfg.lr_end_factor);
    try {
      adam_step(adam_hyper, x_hyper, (scale * grad.d_hyper).eval(), lr_h, cfg.beta1, cfg.beta2,
                cfg.adam_eps);
      if (cfg.method == Method::CagpOpt) {
        const double lr_a = cfg.action_lr > 0.0
                                ? lr_schedule(epoch, cfg.epochs, cfg.action_lr, cfg.lr_end_factor)
                                : lr_h;
        adam_step(adam_act, x_act, (scale * grad.d_actions).eval(), lr_a, cfg.beta1, cfg.beta2,
                  cfg.adam_eps);
        unpack_blocks(x_act, learned);
      }
    } catch (const NonFiniteGradient& e) {
      warn(std::string("train: ") + e.what() + " at epoch " + std::to_string(epoch));
      roll_back(epoch);
      break;
    }
  }

  res.params = unpack_hyper(spec, d, x_hyper);
  res.actions = actions_for_epoch(res.params);
  res.final_eval = evaluate_model(cfg.method, spec, res.params, res.actions, ds);
  return res;
}

std::vector<PolicyDiagRow> diagnose_policies(const TrainConfig& cfg, const KernelSpec& spec,
                                             const Dataset& ds) {
  TrainConfig run = cfg;
  run.method = Method::CagpCg;
  if (run.loss_kind == LossKind::ExactNll) run.loss_kind = LossKind::Elbo;
  check_config(run, ds);
  const Index n = ds.X_train.rows();
  if (n > kEigenOracleCap)
    throw OracleTooLarge("diagnose_policies needs the dense eigen oracle (n <= " +
                         std::to_string(kEigenOracleCap) + ")");
  const Index d = ds.X_train.cols();

  std::vector<PolicyDiagRow> rows;
  Vector x_hyper = pack_hyper(default_params(spec, d));
  AdamState adam;
  for (int epoch = 0; epoch < run.epochs; ++epoch) {
    const HyperParams params = unpack_hyper(spec, d, x_hyper);
    // Orthonormalized for the same reason as in train: the distances only see
    // the span, but the loss update below needs a well-conditioned S'S.
    const ActionMatrix S = orthonormalize(
        actions_cg(spec, params, ds.X_train, ds.y_train, run.budget_i, run.cg_tol));
    const ActionMatrix R =
        actions_random(n, run.budget_i, run.seed + static_cast<std::uint64_t>(epoch) + 1);
    const ActionMatrix E = actions_eigen_oracle(spec, params, ds.X_train, run.budget_i);

    PolicyDiagRow row;
    row.epoch = epoch;
    row.dist_cg = grassmann_distance(E.dense_data(), span_basis(S.densify()));
    row.dist_random = grassmann_distance(E.dense_data(), span_basis(R.dense_data()));
    rows.push_back(row);

    GradientBundle grad;
    const LossValue loss =
        loss_grad(run.loss_kind, spec, params, ds.X_train, ds.y_train, S, grad);
    if (!std::isfinite(loss.total)) break;
    const double norm = grad.d_hyper.norm();
    const double scale = norm > run.grad_clip ? run.grad_clip / norm : 1.0;
    adam_step(adam, x_hyper, (scale * grad.d_hyper).eval(),
              lr_schedule(epoch, run.epochs, run.lr_initial, run.lr_end_factor), run.beta1,
              run.beta2, run.adam_eps);
  }
  return rows;
}

}  // namespace cagp
