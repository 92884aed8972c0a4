#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace pct {

struct CheckResult {
  std::string name;
  bool passed = false;
  /// Worst error observed (relative for gradients, absolute otherwise).
  double max_error = 0.0;
  double tolerance = 0.0;
  std::size_t instances = 0;
  std::string detail;
};

struct CheckOptions {
  std::uint64_t seed = 7;
  std::size_t instances = 50;
  double tolerance = 1e-4;
  /// Perturb the analytic side of the check (fault-injection hook).
  bool corrupt = false;
};

// Gradient checks on random small instances (d_f <= 6, K <= 5, M <= 10,
// N <= 10) against central differences with h = 1e-5. Errors are norm-wise
// relative errors.
CheckResult check_cls_gradients(const CheckOptions& opt);
CheckResult check_t_to_mu_gradients(const CheckOptions& opt);
CheckResult check_mu_to_t_gradients(const CheckOptions& opt);
CheckResult check_pot_gradients(const CheckOptions& opt);
/// Gradient with respect to mu used when the stop-gradient is switched off.
CheckResult check_prototype_path_gradients(const CheckOptions& opt);

/// Row sums of class_probs and both conditional transport distributions,
/// logits scaled up to 1e3 in magnitude.
CheckResult check_normalization(const CheckOptions& opt);
CheckResult check_entropy_equivalence(const CheckOptions& opt);
/// Full-batch EM never lowers the marginal log-likelihood (tolerance is the
/// allowed decrease); repeated blended updates stay on the simplex within 1e-12.
CheckResult check_em_monotonicity(const CheckOptions& opt);
/// exact_ot against permutation enumeration on 4x4 uniform instances plus
/// integrality for square instances.
CheckResult check_exact_ot(const CheckOptions& opt);
/// balanced_assignment against enumeration on K = 3, M = 6.
CheckResult check_balanced_assignment(const CheckOptions& opt);
/// Sinkhorn marginals within tolerance and objective >= exact objective.
CheckResult check_sinkhorn(const CheckOptions& opt);

/// Runs every check with its default tolerance; `corrupt` names a check whose
/// analytic side is perturbed.
std::vector<CheckResult> run_selfcheck(std::uint64_t seed = 7, const std::string& corrupt = "");

std::vector<std::string> selfcheck_names();

}  // namespace pct
