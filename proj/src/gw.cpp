#include "stpp/gw.hpp"

#include <cmath>
#include <limits>

#include "stpp/rng.hpp"

namespace stpp::gw {

namespace {

constexpr double kFeasTarget = 1e-10;   // per-subproblem marginal polish
constexpr double kFeasRequired = 1e-8;  // contract on returned plans
constexpr double kMinGamma = 1e-12;
constexpr int kPolishFactor = 20;       // extra scaling budget past sinkhorn_iters

// Projects a nearly-feasible nonnegative matrix onto the transport polytope:
// scale overfull rows and columns down, then spread the missing mass as a
// rank-one correction. Exact marginals up to roundoff.
void round_to_polytope(Eigen::MatrixXd& t, const Eigen::VectorXd& mu,
                       const Eigen::VectorXd& nu) {
  const Eigen::Index m = t.rows(), l = t.cols();
  Eigen::VectorXd row = t.rowwise().sum();
  for (Eigen::Index i = 0; i < m; ++i) {
    const double scale = row[i] > mu[i] && row[i] > 0.0 ? mu[i] / row[i] : 1.0;
    if (scale != 1.0) t.row(i) *= scale;
  }
  Eigen::VectorXd col = t.colwise().sum().transpose();
  for (Eigen::Index j = 0; j < l; ++j) {
    const double scale = col[j] > nu[j] && col[j] > 0.0 ? nu[j] / col[j] : 1.0;
    if (scale != 1.0) t.col(j) *= scale;
  }
  Eigen::VectorXd err_r = (mu - t.rowwise().sum()).cwiseMax(0.0);
  Eigen::VectorXd err_c = (nu - t.colwise().sum().transpose()).cwiseMax(0.0);
  const double missing = err_r.sum();
  if (missing > 0.0) t.noalias() += err_r * (err_c / missing).transpose();
}

void check_probability_vector(const Eigen::VectorXd& v, const char* name) {
  if (v.size() < 1) throw ConfigError(std::string(name) + " must be non-empty");
  if ((v.array() < 0.0).any())
    throw ConfigError(std::string(name) + " must be nonnegative");
  if (std::abs(v.sum() - 1.0) > 1e-9)
    throw ConfigError(std::string(name) + " must sum to 1");
}

double plan_violation(const Eigen::MatrixXd& t, const Eigen::VectorXd& mu,
                      const Eigen::VectorXd& nu) {
  const double row = (t.rowwise().sum() - mu).cwiseAbs().maxCoeff();
  const double col = (t.colwise().sum().transpose() - nu).cwiseAbs().maxCoeff();
  return std::max(row, col);
}

// Log-sum-exp along rows (axis=0 gives column results) with -inf safety.
Eigen::VectorXd lse_rows(const Eigen::MatrixXd& m) {
  const Eigen::Index rows = m.rows();
  Eigen::VectorXd out(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double c = m.row(i).maxCoeff();
    if (!std::isfinite(c)) {
      out[i] = c;
      continue;
    }
    out[i] = c + std::log((m.row(i).array() - c).exp().sum());
  }
  return out;
}

Eigen::VectorXd lse_cols(const Eigen::MatrixXd& m) {
  const Eigen::Index cols = m.cols();
  Eigen::VectorXd out(cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    const double c = m.col(j).maxCoeff();
    if (!std::isfinite(c)) {
      out[j] = c;
      continue;
    }
    out[j] = c + std::log((m.col(j).array() - c).exp().sum());
  }
  return out;
}

struct Solver {
  const Eigen::MatrixXd& k1;
  const Eigen::MatrixXd& k2;
  const Eigen::VectorXd& mu;
  const Eigen::VectorXd& nu;
  const GwConfig& cfg;
  Eigen::Index m, l;
  Eigen::VectorXd row_const;  // (K1 o K1) mu
  Eigen::VectorXd col_const;  // (K2 o K2)^T nu
  std::uint64_t ops = 0;
  bool log_mode = false;

  Solver(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::VectorXd& mu_,
         const Eigen::VectorXd& nu_, const GwConfig& cfg_)
      : k1(a), k2(b), mu(mu_), nu(nu_), cfg(cfg_), m(a.rows()), l(b.rows()) {
    row_const = (k1.array().square().matrix()) * mu;
    col_const = (k2.array().square().matrix()).transpose() * nu;
    ops += std::uint64_t(m) * std::uint64_t(m) * 2 + std::uint64_t(l) * std::uint64_t(l) * 2;
    log_mode = m * l > 10000;
  }

  Eigen::MatrixXd cost(const Eigen::MatrixXd& t) {
    Eigen::MatrixXd cross = k1 * t * k2.transpose();
    ops += std::uint64_t(m) * std::uint64_t(m) * std::uint64_t(l) +
           std::uint64_t(m) * std::uint64_t(l) * std::uint64_t(l);
    Eigen::MatrixXd c = (-2.0) * cross;
    c.colwise() += row_const;
    c.rowwise() += col_const.transpose();
    ops += std::uint64_t(m) * std::uint64_t(l) * 3;
    return c;
  }

  double objective(const Eigen::MatrixXd& c, const Eigen::MatrixXd& t) {
    ops += std::uint64_t(m) * std::uint64_t(l);
    return c.cwiseProduct(t).sum();
  }

  // One entropic OT subproblem: min <c, t> + gamma KL(t || prior), feasible
  // within kFeasTarget. Falls back to log-domain scaling on underflow.
  Eigen::MatrixXd prox_step(const Eigen::MatrixXd& c, const Eigen::MatrixXd& prior,
                            double gamma) {
    if (!log_mode) {
      Eigen::MatrixXd t;
      if (linear_sinkhorn(c, prior, gamma, t)) return t;
      log_mode = true;
    }
    return log_sinkhorn(c, prior, gamma);
  }

  // Feasibility checks past the configured sweep count happen on a growing
  // cadence so the polish overhead stays proportional to useful work; the
  // rounding step absorbs whatever violation remains at the budget cap.
  static int next_check(int it, int base) {
    return it + std::max(1, std::min(256, (it - base) / 2 + 1));
  }

  bool linear_sinkhorn(const Eigen::MatrixXd& c, const Eigen::MatrixXd& prior, double gamma,
                       Eigen::MatrixXd& out) {
    Eigen::MatrixXd kernel = (-c / gamma).array().exp().matrix().cwiseProduct(prior);
    ops += std::uint64_t(m) * std::uint64_t(l) * 3;
    if (!kernel.allFinite()) return false;
    Eigen::VectorXd a = Eigen::VectorXd::Ones(m);
    Eigen::VectorXd b = Eigen::VectorXd::Ones(l);
    const int cap = cfg.sinkhorn_iters * kPolishFactor;
    Eigen::MatrixXd t;
    int check_at = cfg.sinkhorn_iters;
    for (int it = 1; it <= cap; ++it) {
      Eigen::VectorXd kb = kernel * b;
      for (Eigen::Index i = 0; i < m; ++i) {
        if (mu[i] == 0.0) {
          a[i] = 0.0;
          continue;
        }
        if (kb[i] <= 0.0 || !std::isfinite(kb[i])) return false;
        a[i] = mu[i] / kb[i];
      }
      Eigen::VectorXd ka = kernel.transpose() * a;
      for (Eigen::Index j = 0; j < l; ++j) {
        if (nu[j] == 0.0) {
          b[j] = 0.0;
          continue;
        }
        if (ka[j] <= 0.0 || !std::isfinite(ka[j])) return false;
        b[j] = nu[j] / ka[j];
      }
      ops += std::uint64_t(m) * std::uint64_t(l) * 2;
      if (it >= check_at || it == cap) {
        t = a.asDiagonal() * kernel * b.asDiagonal();
        ops += std::uint64_t(m) * std::uint64_t(l) * 2;
        if (!t.allFinite()) return false;
        if (plan_violation(t, mu, nu) < kFeasTarget || it == cap) break;
        check_at = next_check(it, cfg.sinkhorn_iters);
      }
    }
    round_to_polytope(t, mu, nu);
    ops += std::uint64_t(m) * std::uint64_t(l) * 3;
    out = std::move(t);
    return true;
  }

  Eigen::MatrixXd log_sinkhorn(const Eigen::MatrixXd& c, const Eigen::MatrixXd& prior,
                               double gamma) {
    const double neg_inf = -std::numeric_limits<double>::infinity();
    Eigen::MatrixXd log_kernel =
        prior.array().log().matrix() - c / gamma;  // log prior may be -inf
    ops += std::uint64_t(m) * std::uint64_t(l) * 2;
    Eigen::VectorXd log_mu(m), log_nu(l);
    for (Eigen::Index i = 0; i < m; ++i) log_mu[i] = mu[i] > 0.0 ? std::log(mu[i]) : neg_inf;
    for (Eigen::Index j = 0; j < l; ++j) log_nu[j] = nu[j] > 0.0 ? std::log(nu[j]) : neg_inf;
    Eigen::VectorXd f = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(l);
    const int cap = cfg.sinkhorn_iters * kPolishFactor;
    Eigen::MatrixXd shifted(m, l);
    Eigen::MatrixXd t;
    int check_at = cfg.sinkhorn_iters;
    for (int it = 1; it <= cap; ++it) {
      shifted = log_kernel;
      shifted.rowwise() += g.transpose();
      const Eigen::VectorXd row_lse = lse_rows(shifted);
      for (Eigen::Index i = 0; i < m; ++i)
        f[i] = log_mu[i] == neg_inf ? neg_inf : log_mu[i] - row_lse[i];
      shifted = log_kernel;
      shifted.colwise() += f;
      const Eigen::VectorXd col_lse = lse_cols(shifted);
      for (Eigen::Index j = 0; j < l; ++j)
        g[j] = log_nu[j] == neg_inf ? neg_inf : log_nu[j] - col_lse[j];
      ops += std::uint64_t(m) * std::uint64_t(l) * 4;
      if (it >= check_at || it == cap) {
        Eigen::MatrixXd log_t = log_kernel;
        log_t.colwise() += f;
        log_t.rowwise() += g.transpose();
        t = log_t.array().exp();
        ops += std::uint64_t(m) * std::uint64_t(l) * 3;
        if (plan_violation(t, mu, nu) < kFeasTarget || it == cap) break;
        check_at = next_check(it, cfg.sinkhorn_iters);
      }
    }
    round_to_polytope(t, mu, nu);
    ops += std::uint64_t(m) * std::uint64_t(l) * 3;
    return t;
  }
};

}  // namespace

double marginal_violation(const TransportPlan& plan) {
  return plan_violation(plan.matrix, plan.row_marginal, plan.col_marginal);
}

Eigen::MatrixXd cost_matrix(const KernelMatrix& first, const KernelMatrix& second,
                            const TransportPlan& plan) {
  const Eigen::Index m = first.entries().rows();
  const Eigen::Index l = second.entries().rows();
  if (plan.matrix.rows() != m || plan.matrix.cols() != l)
    throw ConfigError("cost_matrix: plan shape does not match the kernels");
  if (plan.row_marginal.size() != m || plan.col_marginal.size() != l)
    throw ConfigError("cost_matrix: marginal lengths do not match the kernels");
  Eigen::MatrixXd c =
      (-2.0) * (first.entries() * plan.matrix * second.entries().transpose());
  c.colwise() += (first.entries().array().square().matrix()) * plan.row_marginal;
  c.rowwise() +=
      ((second.entries().array().square().matrix()).transpose() * plan.col_marginal).transpose();
  return c;
}

GwResult solve(const KernelMatrix& first, const KernelMatrix& second,
               const Eigen::VectorXd& row_marginal, const Eigen::VectorXd& col_marginal,
               const GwConfig& config, const TransportPlan* warm_start) {
  check_probability_vector(row_marginal, "row marginal");
  check_probability_vector(col_marginal, "column marginal");
  if (!(config.proximal_weight > 0.0)) throw ConfigError("gw: proximal_weight must be positive");
  if (config.outer_iters < 1 || config.sinkhorn_iters < 1)
    throw ConfigError("gw: iteration counts must be >= 1");
  const Eigen::Index m = first.entries().rows();
  const Eigen::Index l = second.entries().rows();
  if (row_marginal.size() != m || col_marginal.size() != l)
    throw ConfigError("gw: marginal lengths must match the kernels");

  Solver solver(first.entries(), second.entries(), row_marginal, col_marginal, config);

  Eigen::MatrixXd t;
  if (warm_start != nullptr) {
    if (warm_start->matrix.rows() != m || warm_start->matrix.cols() != l)
      throw ConfigError("gw: warm start has the wrong shape");
    if (plan_violation(warm_start->matrix, row_marginal, col_marginal) > 1e-6)
      throw ConfigError("gw: warm start is not feasible for the requested marginals");
    t = warm_start->matrix;
  } else {
    // Independence coupling with a fixed sub-permille perturbation: exactly
    // symmetric instances would otherwise sit on an unstable fixed point of
    // the proximal iteration.
    t = row_marginal * col_marginal.transpose();
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < l; ++j) {
        const std::uint64_t bits = rng::splitmix64(std::uint64_t(i) * 0x9e37 + std::uint64_t(j));
        const double unit = double(bits >> 11) * 0x1.0p-53;  // [0, 1)
        t(i, j) *= 1.0 + 1e-3 * (2.0 * unit - 1.0);
      }
    round_to_polytope(t, row_marginal, col_marginal);
  }

  GwResult result;
  Eigen::MatrixXd c = solver.cost(t);
  double objective = solver.objective(c, t);
  for (int k = 0; k < config.outer_iters; ++k) {
    const double gamma =
        std::max(config.proximal_weight * c.cwiseAbs().mean(), kMinGamma);
    Eigen::MatrixXd proposed = solver.prox_step(c, t, gamma);
    c = solver.cost(proposed);
    const double next = solver.objective(c, proposed);
    if (next > objective) break;  // subsolver noise exceeds progress; keep t
    t = std::move(proposed);
    result.objective_trace.push_back(next);
    const bool done = std::abs(objective - next) < config.tolerance;
    objective = next;
    if (done) break;
  }

  if (plan_violation(t, row_marginal, col_marginal) > kFeasRequired)
    throw NumericError("gw: returned plan violates marginal feasibility");

  result.plan = TransportPlan{std::move(t), row_marginal, col_marginal};
  result.gw_squared = std::max(objective, 0.0);
  result.arith_ops = solver.ops;
  return result;
}

Eigen::MatrixXd grad_wrt_first(const KernelMatrix& first, const KernelMatrix& second,
                               const TransportPlan& plan) {
  const Eigen::Index m = first.entries().rows();
  const Eigen::Index l = second.entries().rows();
  if (plan.matrix.rows() != m || plan.matrix.cols() != l)
    throw ConfigError("grad_wrt_first: plan shape does not match the kernels");
  const Eigen::VectorXd& mu = plan.row_marginal;
  return 2.0 * first.entries().cwiseProduct(mu * mu.transpose()) -
         2.0 * (plan.matrix * second.entries() * plan.matrix.transpose());
}

std::vector<int> plan_to_assignment(const TransportPlan& plan) {
  const Eigen::Index m = plan.matrix.rows();
  const Eigen::Index l = plan.matrix.cols();
  std::vector<int> labels(std::size_t(m), 0);
  for (Eigen::Index i = 0; i < m; ++i) {
    int best = 0;
    double best_v = plan.matrix(i, 0);
    for (Eigen::Index j = 1; j < l; ++j)
      if (plan.matrix(i, j) > best_v) {
        best_v = plan.matrix(i, j);
        best = int(j);
      }
    labels[std::size_t(i)] = best;
  }
  return labels;
}

}  // namespace stpp::gw
