#pragma once

#include <optional>

#include "cagp/data.hpp"
#include "cagp/losses.hpp"
#include "cagp/metrics.hpp"
#include "cagp/posterior.hpp"

namespace cagp {

enum class Method { Exact, CagpCg, CagpOpt };

struct TrainConfig {
  Method method = Method::CagpOpt;
  LossKind loss_kind = LossKind::Elbo;
  int epochs = 100;
  double lr_initial = 0.1;
  double lr_end_factor = 0.1;  // LinearLR: lr decays to lr_initial * end_factor
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  Index budget_i = 32;
  double cg_tol = 1e-4;
  std::uint64_t seed = 0;
  int eval_every = 1;     // 0: only the final epoch is evaluated
  double grad_clip = 1e3; // global-norm clip over all trained parameters
  double action_lr = 0.0; // optional separate action learning rate; 0 shares lr_initial
};

struct TrainRecord {
  int epoch = 0;
  double loss = 0.0;
  HyperParams params_snapshot;
  double test_nll = 0.0;
  double test_rmse = 0.0;
  double wallclock_s = 0.0;
};

struct TrainResult {
  HyperParams params;
  ActionMatrix actions = ActionMatrix::empty(0);
  std::vector<TrainRecord> records;
  std::optional<int> diverged_at;
  EvalReport final_eval;
};

struct AdamState {
  Vector m, v;
  long t = 0;
};

// Standard Adam with bias correction; throws NonFiniteGradient.
void adam_step(AdamState& st, Vector& x, const Vector& g, double lr, double beta1, double beta2,
               double eps);

// Linear decay from lr_initial (epoch 0) to lr_initial * end_factor (last).
double lr_schedule(int epoch, int total_epochs, double lr_initial, double end_factor);

// Full-batch training on the standardized training split; per-record metrics
// are de-standardized. Deterministic in (config, dataset, seed) except for
// the wallclock fields.
TrainResult train(const TrainConfig& cfg, const KernelSpec& spec, const Dataset& ds);

// Fits the posterior implied by (method, params, actions) and evaluates the
// test split in original units.
EvalReport evaluate_model(Method method, const KernelSpec& spec, const HyperParams& params,
                          const ActionMatrix& actions, const Dataset& ds);

// Per-epoch Grassmann distance of the CG span and a random span to the top-i
// eigenspace of Khat at the current hyperparameters, along a CG-method
// training run. Requires the eigen-oracle size cap.
struct PolicyDiagRow {
  int epoch = 0;
  double dist_cg = 0.0;
  double dist_random = 0.0;
};
std::vector<PolicyDiagRow> diagnose_policies(const TrainConfig& cfg, const KernelSpec& spec,
                                             const Dataset& ds);

}  // namespace cagp
