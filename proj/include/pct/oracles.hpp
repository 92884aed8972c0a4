#pragma once

#include <cstddef>

#include "pct/data.hpp"
#include "pct/numerics.hpp"

// Brute-force references. None of these share code paths with the solvers
// they are used to check.
namespace pct::oracle {

/// min over permutations s of sum_k cost(k, s(k)); cost must be square, n <= 9.
double min_permutation_cost(const Matrix& cost);

struct BalancedOptimum {
  double cost = 0.0;
  Labels assignment;  // row index per column
};

/// Enumerates every assignment of M columns to K rows with exactly M/K
/// columns per row. Intended for M <= 9.
BalancedOptimum brute_force_balanced(const Matrix& cost);

/// (1/M) sum_j H(softmax_k(mu_k^T f_j)), computed entry by entry.
double mean_shannon_entropy(const Matrix& mu, const Matrix& features);

/// Column-wise argmin of a K x M cost matrix, ties to the lowest row.
Labels argmin_columns(const Matrix& cost);

}  // namespace pct::oracle
