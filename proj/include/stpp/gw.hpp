#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "stpp/types.hpp"

namespace stpp::gw {

// Nonnegative coupling with prescribed marginals.
struct TransportPlan {
  Eigen::MatrixXd matrix;         // M x L
  Eigen::VectorXd row_marginal;   // mu, length M
  Eigen::VectorXd col_marginal;   // nu, length L
};

// Largest marginal violation (L-infinity over rows and columns).
double marginal_violation(const TransportPlan& plan);

struct GwConfig {
  // Proximal weight relative to the mean absolute cost of the current
  // iteration (the effective KL weight is proximal_weight * mean|cost|).
  double proximal_weight = 0.01;
  int outer_iters = 20;
  int sinkhorn_iters = 100;
  double tolerance = 1e-7;
};

struct GwResult {
  TransportPlan plan;
  double gw_squared = 0.0;
  std::vector<double> objective_trace;  // one entry per outer iteration
  std::uint64_t arith_ops = 0;          // multiply-accumulate tally
};

// C(K1, K2, T) = (K1 o K1) mu 1^T + 1 nu^T (K2 o K2)^T - 2 K1 T K2^T, so that
// <C, T> equals the quadruple sum of squared kernel mismatches.
Eigen::MatrixXd cost_matrix(const KernelMatrix& first, const KernelMatrix& second,
                            const TransportPlan& plan);

// Proximal-point outer loop over entropic OT subproblems (Sinkhorn scaling,
// switching to log-domain updates on underflow or for large problems).
// Returns a feasible plan and gw_squared = <C(T*), T*>.
GwResult solve(const KernelMatrix& first, const KernelMatrix& second,
               const Eigen::VectorXd& row_marginal, const Eigen::VectorXd& col_marginal,
               const GwConfig& config, const TransportPlan* warm_start = nullptr);

// Gradient of <C(K1, K2, T), T> with respect to K1 at fixed T:
// 2 K1 o (mu mu^T) - 2 T K2 T^T.
Eigen::MatrixXd grad_wrt_first(const KernelMatrix& first, const KernelMatrix& second,
                               const TransportPlan& plan);

// Row argmax labels; ties break toward the smallest column.
std::vector<int> plan_to_assignment(const TransportPlan& plan);

}  // namespace stpp::gw
