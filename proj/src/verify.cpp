#include "cagp/verify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "cagp/exact_gp.hpp"
#include "cagp/linalg.hpp"
#include "cagp/losses.hpp"
#include "cagp/metrics.hpp"
#include "cagp/posterior.hpp"

namespace cagp {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

std::string sci(double x) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(2) << x;
  return os.str();
}

// Relative gap with a unit floor; every quantity compared in these checks is
// O(1) or larger by construction (standardized data, unit-scale kernels).
double rel_gap(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0});
}

double max_rel_gap(const Vector& a, const Vector& b) {
  double worst = 0.0;
  for (Index k = 0; k < a.size(); ++k) worst = std::max(worst, rel_gap(a(k), b(k)));
  return worst;
}

Matrix random_inputs(Index n, Index d, Rng& rng) {
  Matrix X(n, d);
  for (Index j = 0; j < d; ++j)
    for (Index r = 0; r < n; ++r) X(r, j) = rng.uniform();
  return X;
}

HyperParams random_params(const KernelSpec& spec, Index d, Rng& rng) {
  HyperParams p;
  p.log_outputscale = rng.uniform(-0.3, 0.3);
  p.log_lengthscales.resize(num_lengthscales(spec, d));
  for (Index j = 0; j < p.log_lengthscales.size(); ++j)
    p.log_lengthscales(j) = rng.uniform(std::log(0.15), std::log(0.5));
  p.log_noise = rng.uniform(std::log(0.1), std::log(0.4));
  return p;
}

}  // namespace

CheckOutcome check_exact_recovery(Index n, Index n_test, double rtol_pred, double rtol_loss,
                                  std::uint64_t seed) {
  const KernelSpec spec;
  const Index d = 2;
  Rng rng(seed);
  const Matrix X = random_inputs(n, d, rng);
  const HyperParams p = random_params(spec, d, rng);
  const Vector y = rng.normal_vector(n);

  // Well-conditioned full-rank actions: a rotation times positive column
  // scales, so S'S is not trivially the identity.
  Matrix Sd = Eigen::HouseholderQR<Matrix>(rng.normal_matrix(n, n)).householderQ() *
              Matrix::Identity(n, n);
  for (Index j = 0; j < n; ++j) Sd.col(j) *= rng.uniform(0.5, 2.0);
  const ActionMatrix S = ActionMatrix::dense(std::move(Sd));
  const Matrix Xs = random_inputs(n_test, d, rng);

  const Prediction pc = predict_cagp(fit_batch(spec, p, X, y, S), Xs);
  const Prediction pe = predict_exact(fit_exact(spec, p, X, y), Xs);
  const double g_mean = max_rel_gap(pc.mean, pe.mean);
  const double g_var = max_rel_gap(pc.var, pe.var);

  const double nll = nll_exact(spec, p, X, y);
  const double g_elbo = rel_gap(loss_elbo(spec, p, X, y, S).total, nll);
  const double g_proj = rel_gap(loss_projected_nll(spec, p, X, y, S).total, nll);

  CheckOutcome out;
  out.pass = g_mean <= rtol_pred && g_var <= rtol_pred && g_elbo <= rtol_loss &&
             g_proj <= rtol_loss;
  out.detail = "mean " + sci(g_mean) + " var " + sci(g_var) + " (rtol " + sci(rtol_pred) +
               "); elbo " + sci(g_elbo) + " projnll " + sci(g_proj) + " vs dense nll (rtol " +
               sci(rtol_loss) + ")";
  return out;
}

CheckOutcome check_projected_equivalence(int instances, Index n_max, double rtol,
                                         std::uint64_t seed) {
  const KernelSpec spec;
  Rng rng(seed);
  double worst = 0.0;
  for (int t = 0; t < instances; ++t) {
    const Index n = 20 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(n_max - 19)));
    const Index d = 1 + static_cast<Index>(rng.below(2));
    const Index i = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(n / 2)));
    const Matrix X = random_inputs(n, d, rng);
    const HyperParams p = random_params(spec, d, rng);
    const Vector y = rng.normal_vector(n);
    const ActionMatrix S = ActionMatrix::dense(rng.normal_matrix(n, i));
    const Matrix Xs = random_inputs(20, d, rng);

    const Prediction pb = predict_cagp(fit_batch(spec, p, X, y, S), Xs);
    const Prediction pp = predict_projected(fit_via_projected_observation(spec, p, X, y, S), Xs);
    worst = std::max({worst, max_rel_gap(pb.mean, pp.mean), max_rel_gap(pb.var, pp.var)});
  }
  return {worst <= rtol, "max pointwise gap " + sci(worst) + " over " +
                             std::to_string(instances) + " instances (rtol " + sci(rtol) + ")"};
}

CheckOutcome check_variance_monotonicity(Index n, const std::vector<Index>& budgets,
                                         Index n_probe, int n_seeds, double slack,
                                         std::uint64_t seed) {
  const KernelSpec spec;
  const Index d = 1;
  double max_increase = -1.0;  // worst var growth along the prefix chain
  double max_below = -1.0;     // worst drop below the exact variance
  for (int s = 0; s < n_seeds; ++s) {
    Rng rng(seed + static_cast<std::uint64_t>(s));
    const Matrix X = random_inputs(n, d, rng);
    const HyperParams p = random_params(spec, d, rng);
    const Vector y = rng.normal_vector(n);
    const Matrix Sfull = rng.normal_matrix(n, budgets.back());
    const Matrix probes = random_inputs(n_probe, d, rng);

    const Vector var_exact = predict_exact(fit_exact(spec, p, X, y), probes).var;
    // The zero-action posterior is the prior.
    Vector prev = Vector::Constant(n_probe, p.outputscale() * p.outputscale());
    for (Index i : budgets) {
      const ActionMatrix Si = ActionMatrix::dense(Sfull.leftCols(i));
      const Vector var_i = predict_cagp(fit_batch(spec, p, X, y, Si), probes).var;
      max_increase = std::max(max_increase, (var_i - prev).maxCoeff());
      max_below = std::max(max_below, (var_exact - var_i).maxCoeff());
      prev = var_i;
    }
  }
  const bool pass = max_increase <= slack && max_below <= slack;
  return {pass, "max prefix increase " + sci(max_increase) + ", max drop below exact " +
                    sci(max_below) + " (slack " + sci(slack) + ")"};
}

CheckOutcome check_span_invariance(int n_transforms, double rtol, std::uint64_t seed) {
  const KernelSpec spec;
  const Index n = 120, d = 2, i = 8;
  Rng rng(seed);
  const Matrix X = random_inputs(n, d, rng);
  const HyperParams p = random_params(spec, d, rng);
  const Vector y = rng.normal_vector(n);
  const Matrix Sd = rng.normal_matrix(n, i);
  const Matrix Xs = random_inputs(20, d, rng);

  const ActionMatrix S0 = ActionMatrix::dense(Sd);
  const Prediction base = predict_cagp(fit_batch(spec, p, X, y, S0), Xs);
  const double elbo0 = loss_elbo(spec, p, X, y, S0).total;
  const double proj0 = loss_projected_nll(spec, p, X, y, S0).total;

  double worst = 0.0;
  for (int t = 0; t < n_transforms; ++t) {
    Matrix W;
    switch (t % 3) {
      case 0: {  // general invertible, redrawn while ill-conditioned
        double cnd = 0.0;
        do {
          W = rng.normal_matrix(i, i);
          Eigen::JacobiSVD<Matrix> svd(W);
          cnd = svd.singularValues()(0) / svd.singularValues()(i - 1);
        } while (!(cnd < 1e6));
        break;
      }
      case 1: {  // permutation
        std::vector<Index> perm(static_cast<std::size_t>(i));
        std::iota(perm.begin(), perm.end(), Index(0));
        rng.shuffle(perm);
        W = Matrix::Zero(i, i);
        for (Index k = 0; k < i; ++k) W(perm[static_cast<std::size_t>(k)], k) = 1.0;
        break;
      }
      default: {  // positive diagonal scaling
        W = Matrix::Zero(i, i);
        for (Index k = 0; k < i; ++k) W(k, k) = rng.uniform(0.3, 3.0);
        break;
      }
    }
    const ActionMatrix St = ActionMatrix::dense(Sd * W);
    const Prediction pt = predict_cagp(fit_batch(spec, p, X, y, St), Xs);
    worst = std::max({worst, max_rel_gap(pt.mean, base.mean), max_rel_gap(pt.var, base.var),
                      rel_gap(loss_elbo(spec, p, X, y, St).total, elbo0),
                      rel_gap(loss_projected_nll(spec, p, X, y, St).total, proj0)});
  }
  return {worst <= rtol, "max gap under S -> S W " + sci(worst) + " over " +
                             std::to_string(n_transforms) + " transforms (rtol " + sci(rtol) +
                             ")"};
}

CheckOutcome check_elbo_dense_oracle(int configs, Index n_cap, double rtol, std::uint64_t seed) {
  const KernelSpec spec;
  Rng rng(seed);
  double worst = 0.0;
  int redraws = 0;
  for (int c = 0; c < configs; ++c) {
    for (int attempt = 0;; ++attempt) {
      if (attempt > 80)
        return {false, "conditioning guard exhausted redraws at config " + std::to_string(c)};
      const Index n = 40 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(n_cap - 39)));
      const Index d = 1 + static_cast<Index>(rng.below(2));
      const Index i =
          1 + static_cast<Index>(rng.below(std::min<std::uint64_t>(32, static_cast<std::uint64_t>(n / 2))));
      const Matrix X = random_inputs(n, d, rng);
      const HyperParams p = random_params(spec, d, rng);
      const Matrix K = gram(spec, p, X);
      // The brute force inverts the noise-free Gram; keep it far enough from
      // singular that the comparison tolerance is meaningful.
      Eigen::SelfAdjointEigenSolver<Matrix> es(K, Eigen::EigenvaluesOnly);
      if (!(es.eigenvalues()(0) > es.eigenvalues()(n - 1) * 1e-8)) {
        ++redraws;
        continue;
      }
      const Vector y = rng.normal_vector(n);
      const Matrix Sd = rng.normal_matrix(n, i);

      const double sn2 = p.noise_var();
      Matrix Khat = K;
      Khat.diagonal().array() += sn2;
      Matrix A = Sd.transpose() * Khat * Sd;
      A = (0.5 * (A + A.transpose())).eval();
      Eigen::LLT<Matrix> lltA(A);
      if (lltA.info() != Eigen::Success) {
        ++redraws;
        continue;
      }
      const Matrix C = Sd * lltA.solve(Sd.transpose());
      const Vector mu = K * (C * y);
      Matrix Sigma = K - K * C * K;
      Sigma = (0.5 * (Sigma + Sigma.transpose())).eval();
      Eigen::LLT<Matrix> lltK(K);
      Eigen::LLT<Matrix> lltS(Sigma);
      if (lltK.info() != Eigen::Success || lltS.info() != Eigen::Success) {
        ++redraws;
        continue;
      }
      // Expected negative log likelihood under the posterior marginals, plus
      // the posterior's KL divergence from the prior. Full n x n brute force.
      const double nd = static_cast<double>(n);
      const double expected_nll =
          0.5 * nd * (kLog2Pi + std::log(sn2)) +
          ((y - mu).squaredNorm() + Sigma.trace()) / (2.0 * sn2);
      const double kl = 0.5 * (lltK.solve(Sigma).trace() + mu.dot(lltK.solve(mu)) - nd +
                               logdet_from_llt(lltK) - logdet_from_llt(lltS));
      const double oracle = expected_nll + kl;

      const double lib = loss_elbo(spec, p, X, y, ActionMatrix::dense(Sd)).total;
      worst = std::max(worst, rel_gap(lib, oracle));
      break;
    }
  }
  return {worst <= rtol, "max rel gap " + sci(worst) + " over " + std::to_string(configs) +
                             " configs, " + std::to_string(redraws) +
                             " conditioning redraws (rtol " + sci(rtol) + ")"};
}

CheckOutcome check_eigen_policy_information(Index n, Index i_max, int n_random, double atol,
                                            std::uint64_t seed) {
  const KernelSpec spec;
  const Index d = 1;
  Rng rng(seed);
  const Matrix X = random_inputs(n, d, rng);
  const HyperParams p = random_params(spec, d, rng);
  const double sn2 = p.noise_var();
  Matrix Khat = gram(spec, p, X);
  Khat.diagonal().array() += sn2;
  Eigen::SelfAdjointEigenSolver<Matrix> es(Khat);  // eigenvalues ascending

  double worst_closed = 0.0;  // |MI - closed form|
  double worst_excess = -1.0; // max MI(random) - MI(eigen)
  for (Index i = 1; i <= i_max; ++i) {
    const Matrix Se = top_eigvec_actions(Khat, i);
    const double mi_eig = mutual_information_dense(Khat, sn2, Se);
    double closed = 0.0;
    for (Index j = 0; j < i; ++j) closed += std::log(es.eigenvalues()(n - 1 - j));
    closed = 0.5 * (closed - static_cast<double>(i) * std::log(sn2));
    worst_closed = std::max(worst_closed, std::abs(mi_eig - closed));
    for (int r = 0; r < n_random; ++r) {
      const double mi_rand = mutual_information_dense(Khat, sn2, rng.normal_matrix(n, i));
      worst_excess = std::max(worst_excess, mi_rand - mi_eig);
    }
  }
  const bool pass = worst_closed <= atol && worst_excess <= atol;
  return {pass, "closed-form gap " + sci(worst_closed) + ", max random excess " +
                    sci(worst_excess) + " over " + std::to_string(n_random) +
                    " draws per budget (atol " + sci(atol) + ")"};
}

CheckOutcome check_cg_krylov_span(Index n, Index i, double span_tol, double rtol_pred,
                                  std::uint64_t seed) {
  const KernelSpec spec;
  const Index d = 1;
  Rng rng(seed);
  const Matrix X = random_inputs(n, d, rng);
  // A short lengthscale keeps the spectrum spread out so the solver is still
  // far from converged after i steps and every residual is well-scaled.
  HyperParams p;
  p.log_lengthscales = Vector::Constant(1, std::log(0.05));
  p.log_noise = std::log(0.3);
  const Vector y = rng.normal_vector(n);

  const ActionMatrix Scg = actions_cg(spec, p, X, y, i, 0.0);
  if (Scg.cols() != i)
    return {false, "solver realized " + std::to_string(Scg.cols()) + " of " + std::to_string(i) +
                       " columns"};

  // Orthonormalized power basis of span{y, Khat y, ..., Khat^{i-1} y}.
  Matrix Q(n, i);
  Q.col(0) = y / y.norm();
  for (Index k = 1; k < i; ++k) {
    Vector w = khat_matvec(spec, p, X, Q.col(k - 1));
    for (int sweep = 0; sweep < 2; ++sweep)
      for (Index j = 0; j < k; ++j) w -= Q.col(j).dot(w) * Q.col(j);
    const double nrm = w.norm();
    if (nrm < 1e-12)
      return {false, "power basis degenerate at column " + std::to_string(k)};
    Q.col(k) = w / nrm;
  }

  const double dist = grassmann_distance(Scg.densify(), Q);
  const Matrix Xs = random_inputs(20, d, rng);
  const Prediction pa = predict_cagp(fit_batch(spec, p, X, y, Scg), Xs);
  const Prediction pb = predict_cagp(fit_batch(spec, p, X, y, ActionMatrix::dense(Q)), Xs);
  const double g_mean = max_rel_gap(pa.mean, pb.mean);
  const double g_var = max_rel_gap(pa.var, pb.var);

  const bool pass = dist < span_tol && g_mean <= rtol_pred && g_var <= rtol_pred;
  return {pass, "grassmann " + sci(dist) + " (tol " + sci(span_tol) + "); posterior mean " +
                    sci(g_mean) + " var " + sci(g_var) + " (rtol " + sci(rtol_pred) + ")"};
}

CheckOutcome check_worst_case_bound(int n_functions, Index n_points,
                                    const std::vector<Index>& budgets, double slack,
                                    std::uint64_t seed) {
  const KernelSpec spec;
  const Index n = 80, d = 1;
  Rng rng(seed);
  const Matrix X = random_inputs(n, d, rng);
  const HyperParams p = random_params(spec, d, rng);
  const double sn2 = p.noise_var();
  Matrix Khat = gram(spec, p, X);
  Khat.diagonal().array() += sn2;
  const Matrix Sfull = rng.normal_matrix(n, budgets.back());
  std::vector<ActionMatrix> actions;
  for (Index b : budgets) actions.push_back(ActionMatrix::dense(Sfull.leftCols(b)));
  const Matrix Xs = random_inputs(n_points, d, rng);
  const Matrix Gs = cross_gram(spec, p, Xs, X);

  // Unit-norm functions y(.) = sum_j alpha_j k_sigma(., x_j): on the training
  // set y(X) = Khat alpha, off it y(x) = K(x, X) alpha.
  double worst_margin = -std::numeric_limits<double>::infinity();
  for (int f = 0; f < n_functions; ++f) {
    Vector g = rng.normal_vector(n);
    const Vector alpha = g / std::sqrt(g.dot(Khat * g));
    const Vector yX = Khat * alpha;
    const Vector ystar = Gs * alpha;
    for (const ActionMatrix& Sb : actions) {
      const Prediction pr = predict_cagp(fit_batch(spec, p, X, yX, Sb), Xs);
      for (Index k = 0; k < n_points; ++k) {
        const double err2 = (ystar(k) - pr.mean(k)) * (ystar(k) - pr.mean(k));
        worst_margin = std::max(worst_margin, err2 - (pr.predictive_var(k) + slack));
      }
    }
  }
  return {worst_margin <= 0.0,
          "max err^2 minus bound " + sci(worst_margin) + " over " + std::to_string(n_functions) +
              " functions x " + std::to_string(n_points) + " points x " +
              std::to_string(budgets.size()) + " budgets (slack " + sci(slack) + ")"};
}

CheckOutcome check_gradient_fd(Index n, Index d, Index i, int n_seeds, double rtol, double atol,
                               double step, std::uint64_t seed) {
  const KernelSpec spec;
  double worst_excess = -std::numeric_limits<double>::infinity();
  double worst_diff = 0.0;
  std::string worst_at = "none";
  for (int s = 0; s < n_seeds; ++s) {
    Rng rng(seed + static_cast<std::uint64_t>(s));
    const Matrix X = random_inputs(n, d, rng);
    const HyperParams p = random_params(spec, d, rng);
    const Vector y = rng.normal_vector(n);
    const ActionMatrix S = actions_sparse_init(n, i, seed + 777 + static_cast<std::uint64_t>(s));

    for (LossKind kind : {LossKind::Elbo, LossKind::ProjectedNll}) {
      const char* kname = kind == LossKind::Elbo ? "elbo" : "projnll";
      GradientBundle gb;
      loss_grad(kind, spec, p, X, y, S, gb);

      const Vector x0 = pack_hyper(p);
      for (Index c = 0; c < x0.size(); ++c) {
        Vector xp = x0, xm = x0;
        xp(c) += step;
        xm(c) -= step;
        const double fp = loss_eval(kind, spec, unpack_hyper(spec, d, xp), X, y, S).total;
        const double fm = loss_eval(kind, spec, unpack_hyper(spec, d, xm), X, y, S).total;
        const double fd = (fp - fm) / (2.0 * step);
        const double g = gb.d_hyper(c);
        const double excess =
            std::abs(g - fd) - (atol + rtol * std::max(std::abs(g), std::abs(fd)));
        if (excess > worst_excess) {
          worst_excess = excess;
          worst_diff = std::abs(g - fd);
          worst_at = std::string(kname) + " hyper[" + std::to_string(c) + "]";
        }
      }

      Index flat = 0;
      for (std::size_t b = 0; b < S.blocks().size(); ++b) {
        for (Index t = 0; t < S.blocks()[b].values.size(); ++t, ++flat) {
          ActionMatrix Sp = S, Sm = S;
          Sp.mutable_blocks()[b].values(t) += step;
          Sm.mutable_blocks()[b].values(t) -= step;
          const double fp = loss_eval(kind, spec, p, X, y, Sp).total;
          const double fm = loss_eval(kind, spec, p, X, y, Sm).total;
          const double fd = (fp - fm) / (2.0 * step);
          const double g = gb.d_actions(flat);
          const double excess =
              std::abs(g - fd) - (atol + rtol * std::max(std::abs(g), std::abs(fd)));
          if (excess > worst_excess) {
            worst_excess = excess;
            worst_diff = std::abs(g - fd);
            worst_at = std::string(kname) + " action[" + std::to_string(flat) + "]";
          }
        }
      }
    }
  }
  return {worst_excess <= 0.0, "worst coordinate " + worst_at + ", |grad - fd| " +
                                   sci(worst_diff) + ", tolerance excess " + sci(worst_excess) +
                                   " (rtol " + sci(rtol) + ", atol " + sci(atol) + ")"};
}

std::vector<std::string> verify_suite_names() {
  return {"exact-recovery",    "lemma-s1",      "prop-s1-monotonicity",
          "span-invariance",   "elbo-dense-oracle", "info-policy",
          "cg-krylov-span",    "worst-case-bound",  "gradient-fd"};
}

std::vector<SuiteResult> run_verify(const std::string& suite, std::uint64_t seed) {
  using Runner = std::function<CheckOutcome(std::uint64_t)>;
  const std::vector<std::pair<std::string, Runner>> table = {
      {"exact-recovery",
       [](std::uint64_t s) { return check_exact_recovery(200, 50, 1e-7, 1e-8, s); }},
      {"lemma-s1", [](std::uint64_t s) { return check_projected_equivalence(10, 100, 1e-8, s); }},
      {"prop-s1-monotonicity",
       [](std::uint64_t s) {
         return check_variance_monotonicity(200, {1, 2, 4, 8, 16}, 20, 5, 1e-10, s);
       }},
      {"span-invariance", [](std::uint64_t s) { return check_span_invariance(20, 1e-8, s); }},
      {"elbo-dense-oracle",
       [](std::uint64_t s) { return check_elbo_dense_oracle(20, 200, 1e-8, s); }},
      {"info-policy",
       [](std::uint64_t s) { return check_eigen_policy_information(40, 3, 200, 1e-10, s); }},
      {"cg-krylov-span",
       [](std::uint64_t s) { return check_cg_krylov_span(60, 8, 1e-6, 1e-7, s); }},
      {"worst-case-bound",
       [](std::uint64_t s) { return check_worst_case_bound(100, 20, {4, 16, 64}, 1e-8, s); }},
      {"gradient-fd",
       [](std::uint64_t s) { return check_gradient_fd(80, 2, 8, 3, 1e-4, 1e-7, 1e-4, s); }},
  };

  auto run_one = [](const std::string& name, const Runner& fn,
                    std::uint64_t s) -> SuiteResult {
    try {
      return {name, fn(s)};
    } catch (const std::exception& e) {
      return {name, {false, std::string("exception: ") + e.what()}};
    }
  };

  std::vector<SuiteResult> out;
  if (suite == "all") {
    for (const auto& [name, fn] : table) out.push_back(run_one(name, fn, seed));
    return out;
  }
  for (const auto& [name, fn] : table)
    if (name == suite) {
      out.push_back(run_one(name, fn, seed));
      return out;
    }
  throw ConfigError("unknown verify suite '" + suite + "'");
}

}  // namespace cagp
