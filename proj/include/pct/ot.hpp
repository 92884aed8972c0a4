#pragma once

#include <cstddef>
#include <filesystem>
#include <span>

#include "pct/data.hpp"
#include "pct/numerics.hpp"
#include "pct/transport.hpp"

namespace pct {

/// Coupling between K prototypes (rows) and M target samples (columns).
struct TransportPlan {
  Matrix plan;
  Vector row_marginal;
  Vector col_marginal;

  double objective(const Matrix& cost) const;
  /// max over rows and columns of |plan sum - marginal|.
  double marginal_violation() const;
};

/// Largest K or M accepted by exact_ot.
inline constexpr std::size_t kExactOtMaxSize = 64;

/// Exact solution of the transportation LP by the transportation simplex
/// method (northwest-corner start, Bland's rule). Returns a basic optimal
/// plan, so integral marginals give an integral plan.
/// Throws std::invalid_argument for negative or unbalanced marginals, or when
/// K or M exceeds kExactOtMaxSize.
TransportPlan exact_ot(const Matrix& cost, std::span<const double> row_marginal,
                       std::span<const double> col_marginal);

struct SinkhornOptions {
  double epsilon = 0.05;
  std::size_t max_iter = 10000;
  double tol = 1e-6;
};

struct SinkhornResult {
  TransportPlan plan;
  bool converged = false;
  std::size_t iterations = 0;
  /// Sum of absolute row and column marginal errors at exit.
  double violation = 0.0;
};

/// Entropic OT by log-domain Sinkhorn scaling. Stops when the summed absolute
/// marginal error is <= tol; hitting max_iter is reported, not thrown.
SinkhornResult sinkhorn(const Matrix& cost, std::span<const double> row_marginal,
                        std::span<const double> col_marginal, const SinkhornOptions& options = {});

enum class OtSolver { exact, sinkhorn };

struct PotResult {
  double loss = 0.0;
  Matrix grad_features;
  /// d_cost is the frozen plan; d_similarity is zero.
  PairwiseGrad grad;
  TransportPlan plan;
  bool converged = true;
  std::size_t iterations = 0;
};

/// sum_kj plan_kj c(mu_k, f_j) with the plan solved under uniform marginals
/// (1/K, 1/M) and then held fixed; gradients flow through the cost only.
PotResult pot_loss(const Matrix& mu, const Matrix& features, CostKind kind, OtSolver solver,
                   const SinkhornOptions& options = {});

/// Assigns each of the M columns to one of the K rows, M/K columns per row,
/// minimising the summed cost. Throws std::invalid_argument unless K divides M.
Labels balanced_assignment(const Matrix& cost);

void save_plan_csv(const std::filesystem::path& path, const TransportPlan& plan);

}  // namespace pct
