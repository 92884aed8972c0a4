#include "pct/proportions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "pct/transport.hpp"

namespace pct {

double ClassProportions::blend_rate() const {
  return beta0 * std::pow(1.0 + gamma * static_cast<double>(step), -alpha);
}

ClassProportions init_uniform(std::size_t num_classes, double beta0) {
  if (num_classes == 0) throw std::invalid_argument("init_uniform: zero classes");
  if (!(beta0 >= 0.0)) throw std::invalid_argument("init_uniform: beta0 must be non-negative");
  ClassProportions props;
  props.p = uniform_prior(num_classes);
  props.beta0 = beta0;
  return props;
}

Vector em_batch_estimate(const ClassProportions& props, const Matrix& mu, const Matrix& features) {
  if (features.rows() == 0) throw std::invalid_argument("em_batch_estimate: empty batch");
  const CondDist post = pi_target_to_proto(mu, features, props.p);
  const std::size_t m = post.probs.rows();
  Vector est(post.probs.cols(), 0.0);
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t k = 0; k < est.size(); ++k) est[k] += post.probs(j, k);
  for (auto& v : est) v /= static_cast<double>(m);
  return est;
}

ClassProportions em_update(const ClassProportions& props, std::span<const double> estimate) {
  if (estimate.size() != props.p.size()) {
    throw std::invalid_argument("em_update: estimate length != class count");
  }
  double s = 0.0;
  for (double v : estimate) {
    if (!(v >= -1e-9)) throw std::invalid_argument("em_update: estimate has a negative entry");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-9) throw std::invalid_argument("em_update: estimate is off the simplex");

  ClassProportions next = props;
  const double beta = props.blend_rate();
  ++next.step;
  if (beta == 0.0) return next;

  double total = 0.0;
  for (std::size_t k = 0; k < next.p.size(); ++k) {
    next.p[k] = (1.0 - beta) * props.p[k] + beta * std::max(estimate[k], 0.0);
    total += next.p[k];
  }
  for (auto& v : next.p) v /= total;
  return next;
}

double marginal_log_likelihood(std::span<const double> p, const Matrix& mu, const Matrix& features) {
  const Matrix s = similarity_matrix(mu, features);
  if (p.size() != s.rows()) throw std::invalid_argument("marginal_log_likelihood: length mismatch");
  Vector terms(s.rows());
  double ll = 0.0;
  for (std::size_t j = 0; j < s.cols(); ++j) {
    for (std::size_t k = 0; k < s.rows(); ++k)
      terms[k] = p[k] > 0.0 ? std::log(p[k]) + s(k, j) : -std::numeric_limits<double>::infinity();
    ll += log_sum_exp(terms);
  }
  return ll;
}

double l1_error(std::span<const double> estimate, std::span<const double> truth) {
  if (estimate.size() != truth.size()) throw std::invalid_argument("l1_error: length mismatch");
  double e = 0.0;
  for (std::size_t k = 0; k < truth.size(); ++k) e += std::abs(estimate[k] - truth[k]);
  return e;
}

Vector label_proportions(std::span<const std::size_t> labels, std::size_t num_classes) {
  Vector p(num_classes, 0.0);
  for (auto y : labels) {
    if (y >= num_classes) throw std::invalid_argument("label_proportions: label out of range");
    p[y] += 1.0;
  }
  if (!labels.empty())
    for (auto& v : p) v /= static_cast<double>(labels.size());
  return p;
}

}  // namespace pct
