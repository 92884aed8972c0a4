#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "pct/numerics.hpp"

namespace pct {

/// Running estimate of the target class proportions p(mu_k).
///
/// Each update blends a mini-batch EM estimate into the running value with
/// rate beta_l = beta0 * (1 + gamma * l)^(-alpha), where l counts updates.
/// With beta0 == 0 the estimate stays uniform.
struct ClassProportions {
  Vector p;
  std::uint64_t step = 0;
  double beta0 = 0.0;
  double gamma = 0.0002;
  double alpha = 0.75;

  std::size_t num_classes() const noexcept { return p.size(); }
  double blend_rate() const;
};

ClassProportions init_uniform(std::size_t num_classes, double beta0);

/// Mean posterior (1/M) sum_j pi(mu_k | f_j) under the current proportions.
/// The likelihood normaliser Z is shared by every class and cancels.
Vector em_batch_estimate(const ClassProportions& props, const Matrix& mu, const Matrix& features);

/// Blends an estimate into the running proportions and advances the step.
/// Throws std::invalid_argument when the estimate is off the simplex by more than 1e-9.
ClassProportions em_update(const ClassProportions& props, std::span<const double> estimate);

/// sum_j log sum_k p_k exp(mu_k^T f_j), the EM objective up to the constant -M log Z.
double marginal_log_likelihood(std::span<const double> p, const Matrix& mu, const Matrix& features);

double l1_error(std::span<const double> estimate, std::span<const double> truth);

/// Class frequencies of a label vector.
Vector label_proportions(std::span<const std::size_t> labels, std::size_t num_classes);

}  // namespace pct
