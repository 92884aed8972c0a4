#include "pct/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace pct::oracle {

double min_permutation_cost(const Matrix& cost) {
  const std::size_t n = cost.rows();
  if (cost.cols() != n) throw std::invalid_argument("min_permutation_cost: cost is not square");
  if (n > 9) throw std::invalid_argument("min_permutation_cost: too large to enumerate");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += cost(k, perm[k]);
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

namespace {

void enumerate_balanced(const Matrix& cost, std::size_t col, std::vector<std::size_t>& load,
                        std::size_t per_row, Labels& current, double partial,
                        BalancedOptimum& best) {
  if (col == cost.cols()) {
    if (partial < best.cost) {
      best.cost = partial;
      best.assignment = current;
    }
    return;
  }
  for (std::size_t r = 0; r < cost.rows(); ++r) {
    if (load[r] == per_row) continue;
    ++load[r];
    current[col] = r;
    enumerate_balanced(cost, col + 1, load, per_row, current, partial + cost(r, col), best);
    --load[r];
  }
}

}  // namespace

BalancedOptimum brute_force_balanced(const Matrix& cost) {
  const std::size_t k = cost.rows(), m = cost.cols();
  if (k == 0 || m % k != 0) throw std::invalid_argument("brute_force_balanced: K must divide M");
  if (m > 12) throw std::invalid_argument("brute_force_balanced: too large to enumerate");
  BalancedOptimum best{std::numeric_limits<double>::infinity(), Labels(m, 0)};
  std::vector<std::size_t> load(k, 0);
  Labels current(m, 0);
  enumerate_balanced(cost, 0, load, m / k, current, 0.0, best);
  return best;
}

double mean_shannon_entropy(const Matrix& mu, const Matrix& features) {
  const std::size_t k = mu.cols(), m = features.rows(), d = mu.rows();
  double total = 0.0;
  std::vector<double> logits(k);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t c = 0; c < k; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) s += mu(i, c) * features(j, i);
      logits[c] = s;
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - top);
    double h = 0.0;
    for (double l : logits) {
      const double p = std::exp(l - top) / z;
      if (p > 0.0) h -= p * std::log(p);
    }
    total += h;
  }
  return m ? total / static_cast<double>(m) : 0.0;
}

Labels argmin_columns(const Matrix& cost) {
  Labels out(cost.cols(), 0);
  for (std::size_t j = 0; j < cost.cols(); ++j)
    for (std::size_t r = 1; r < cost.rows(); ++r)
      if (cost(r, j) < cost(out[j], j)) out[j] = r;
  return out;
}

}  // namespace pct::oracle
