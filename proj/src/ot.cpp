#include "pct/ot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace pct {

double TransportPlan::objective(const Matrix& cost) const {
  if (cost.rows() != plan.rows() || cost.cols() != plan.cols()) {
    throw std::invalid_argument("TransportPlan::objective: shape mismatch");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < plan.size(); ++i) s += plan.data()[i] * cost.data()[i];
  return s;
}

double TransportPlan::marginal_violation() const {
  double worst = 0.0;
  for (std::size_t r = 0; r < plan.rows(); ++r) {
    double s = 0.0;
    for (double v : plan.row(r)) s += v;
    worst = std::max(worst, std::abs(s - row_marginal[r]));
  }
  for (std::size_t c = 0; c < plan.cols(); ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < plan.rows(); ++r) s += plan(r, c);
    worst = std::max(worst, std::abs(s - col_marginal[c]));
  }
  return worst;
}

namespace {

void check_marginals(const Matrix& cost, std::span<const double> a, std::span<const double> b) {
  if (cost.rows() == 0 || cost.cols() == 0) throw std::invalid_argument("ot: empty cost matrix");
  if (a.size() != cost.rows() || b.size() != cost.cols()) {
    throw std::invalid_argument("ot: marginal lengths do not match the cost matrix");
  }
  double sa = 0.0, sb = 0.0;
  for (double v : a) {
    if (!(v >= 0.0)) throw std::invalid_argument("ot: negative row marginal");
    sa += v;
  }
  for (double v : b) {
    if (!(v >= 0.0)) throw std::invalid_argument("ot: negative column marginal");
    sb += v;
  }
  if (std::abs(sa - sb) > 1e-12 * std::max(1.0, sa)) {
    throw std::invalid_argument("ot: marginals carry different total mass");
  }
  if (!cost.all_finite()) throw std::invalid_argument("ot: non-finite cost");
}

// Basis of the transportation simplex: K + M - 1 cells forming a spanning
// tree over row nodes [0, K) and column nodes [K, K + M).
class TransportationSimplex {
 public:
  TransportationSimplex(const Matrix& cost, std::span<const double> a, std::span<const double> b)
      : cost_(cost), k_(cost.rows()), m_(cost.cols()), flow_(k_, m_), basic_(k_ * m_, false) {
    northwest_corner(a, b);
  }

  Matrix solve() {
    double scale = 1.0;
    for (double c : cost_.data()) scale = std::max(scale, std::abs(c));
    const double eps = 1e-12 * scale;
    Vector u(k_), v(m_);
    for (;;) {
      potentials(u, v);
      // Bland's rule: first improving cell in row-major order.
      std::size_t enter = k_ * m_;
      for (std::size_t cell = 0; cell < k_ * m_ && enter == k_ * m_; ++cell) {
        if (basic_[cell]) continue;
        const std::size_t i = cell / m_, j = cell % m_;
        if (cost_(i, j) - u[i] - v[j] < -eps) enter = cell;
      }
      if (enter == k_ * m_) break;
      pivot(enter);
    }
    return flow_;
  }

 private:
  void northwest_corner(std::span<const double> a, std::span<const double> b) {
    Vector ra(a.begin(), a.end()), rb(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    for (;;) {
      const double x = std::min(ra[i], rb[j]);
      flow_(i, j) = x;
      basic_[i * m_ + j] = true;
      ra[i] -= x;
      rb[j] -= x;
      if (i == k_ - 1 && j == m_ - 1) break;
      if (i == k_ - 1 || (j < m_ - 1 && ra[i] >= rb[j]))
        ++j;
      else
        ++i;
    }
  }

  std::vector<std::vector<std::size_t>> tree_adjacency() const {
    std::vector<std::vector<std::size_t>> adj(k_ + m_);
    for (std::size_t cell = 0; cell < k_ * m_; ++cell) {
      if (!basic_[cell]) continue;
      adj[cell / m_].push_back(cell);
      adj[k_ + cell % m_].push_back(cell);
    }
    return adj;
  }

  std::size_t other_end(std::size_t node, std::size_t cell) const {
    const std::size_t row = cell / m_, col = k_ + cell % m_;
    return node == row ? col : row;
  }

  void potentials(Vector& u, Vector& v) const {
    const auto adj = tree_adjacency();
    std::vector<bool> seen(k_ + m_, false);
    std::vector<std::size_t> stack{0};
    seen[0] = true;
    u[0] = 0.0;
    while (!stack.empty()) {
      const std::size_t node = stack.back();
      stack.pop_back();
      for (auto cell : adj[node]) {
        const std::size_t next = other_end(node, cell);
        if (seen[next]) continue;
        seen[next] = true;
        const std::size_t i = cell / m_, j = cell % m_;
        if (next >= k_)
          v[j] = cost_(i, j) - u[i];
        else
          u[i] = cost_(i, j) - v[j];
        stack.push_back(next);
      }
    }
  }

  void pivot(std::size_t enter) {
    const std::size_t ei = enter / m_, ej = enter % m_;
    // Tree path from row node ei to column node ej.
    const auto adj = tree_adjacency();
    constexpr std::size_t none = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> via(k_ + m_, none);
    std::vector<bool> seen(k_ + m_, false);
    std::vector<std::size_t> stack{ei};
    seen[ei] = true;
    while (!stack.empty()) {
      const std::size_t node = stack.back();
      stack.pop_back();
      for (auto cell : adj[node]) {
        const std::size_t next = other_end(node, cell);
        if (seen[next]) continue;
        seen[next] = true;
        via[next] = cell;
        stack.push_back(next);
      }
    }
    // Walking back from the column node, path cells alternate -, +, -, ...
    std::vector<std::size_t> minus, plus;
    std::size_t node = k_ + ej;
    bool is_minus = true;
    while (node != ei) {
      const std::size_t cell = via[node];
      if (cell == none) throw std::logic_error("transportation simplex: basis is not a tree");
      (is_minus ? minus : plus).push_back(cell);
      is_minus = !is_minus;
      node = other_end(node, cell);
    }

    std::size_t leave = minus.front();
    for (auto cell : minus) {
      const double x = flow_.data()[cell], best = flow_.data()[leave];
      if (x < best || (x == best && cell < leave)) leave = cell;
    }
    const double theta = flow_.data()[leave];
    flow_.data()[enter] += theta;
    for (auto cell : plus) flow_.data()[cell] += theta;
    for (auto cell : minus) flow_.data()[cell] = std::max(0.0, flow_.data()[cell] - theta);
    flow_.data()[leave] = 0.0;
    basic_[leave] = false;
    basic_[enter] = true;
  }

  const Matrix& cost_;
  std::size_t k_, m_;
  Matrix flow_;
  std::vector<bool> basic_;
};

Vector uniform(std::size_t n) { return Vector(n, 1.0 / static_cast<double>(n)); }

}  // namespace

TransportPlan exact_ot(const Matrix& cost, std::span<const double> row_marginal,
                       std::span<const double> col_marginal) {
  check_marginals(cost, row_marginal, col_marginal);
  if (cost.rows() > kExactOtMaxSize || cost.cols() > kExactOtMaxSize) {
    throw std::invalid_argument("exact_ot: instance " + std::to_string(cost.rows()) + "x" +
                                std::to_string(cost.cols()) + " exceeds the " +
                                std::to_string(kExactOtMaxSize) + " limit; use sinkhorn");
  }
  TransportationSimplex simplex(cost, row_marginal, col_marginal);
  return {simplex.solve(), Vector(row_marginal.begin(), row_marginal.end()),
          Vector(col_marginal.begin(), col_marginal.end())};
}

SinkhornResult sinkhorn(const Matrix& cost, std::span<const double> row_marginal,
                        std::span<const double> col_marginal, const SinkhornOptions& options) {
  check_marginals(cost, row_marginal, col_marginal);
  if (!(options.epsilon > 0.0)) throw std::invalid_argument("sinkhorn: epsilon must be positive");
  const std::size_t k = cost.rows(), m = cost.cols();
  const double eps = options.epsilon;
  constexpr double neg_inf = -std::numeric_limits<double>::infinity();
  auto safe_log = [](double x) { return x > 0.0 ? std::log(x) : neg_inf; };

  Vector f(k, 0.0), g(m, 0.0), buf;
  SinkhornResult result;
  result.plan.row_marginal.assign(row_marginal.begin(), row_marginal.end());
  result.plan.col_marginal.assign(col_marginal.begin(), col_marginal.end());
  Matrix& plan = result.plan.plan;
  plan = Matrix(k, m);

  auto refresh_plan = [&] {
    for (std::size_t r = 0; r < k; ++r)
      for (std::size_t c = 0; c < m; ++c) {
        const double e = f[r] + g[c] - cost(r, c);
        plan(r, c) = std::isfinite(e) || e == neg_inf ? std::exp(e / eps) : 0.0;
      }
    double viol = 0.0;
    for (std::size_t r = 0; r < k; ++r) {
      double s = 0.0;
      for (double v : plan.row(r)) s += v;
      viol += std::abs(s - row_marginal[r]);
    }
    for (std::size_t c = 0; c < m; ++c) {
      double s = 0.0;
      for (std::size_t r = 0; r < k; ++r) s += plan(r, c);
      viol += std::abs(s - col_marginal[c]);
    }
    return viol;
  };

  for (std::size_t it = 1; it <= options.max_iter; ++it) {
    buf.resize(m);
    for (std::size_t r = 0; r < k; ++r) {
      if (row_marginal[r] == 0.0) {
        f[r] = neg_inf;
        continue;
      }
      for (std::size_t c = 0; c < m; ++c) buf[c] = (g[c] - cost(r, c)) / eps;
      f[r] = eps * (safe_log(row_marginal[r]) - log_sum_exp(buf));
    }
    buf.resize(k);
    for (std::size_t c = 0; c < m; ++c) {
      if (col_marginal[c] == 0.0) {
        g[c] = neg_inf;
        continue;
      }
      for (std::size_t r = 0; r < k; ++r) buf[r] = (f[r] - cost(r, c)) / eps;
      g[c] = eps * (safe_log(col_marginal[c]) - log_sum_exp(buf));
    }
    result.iterations = it;
    result.violation = refresh_plan();
    if (result.violation <= options.tol) {
      result.converged = true;
      break;
    }
  }
  return result;
}

PotResult pot_loss(const Matrix& mu, const Matrix& features, CostKind kind, OtSolver solver,
                   const SinkhornOptions& options) {
  const Matrix cost = cost_matrix(kind, mu, features);
  const Vector a = uniform(cost.rows());
  const Vector b = uniform(cost.cols());
  PotResult out;
  if (solver == OtSolver::exact) {
    out.plan = exact_ot(cost, a, b);
  } else {
    SinkhornResult s = sinkhorn(cost, a, b, options);
    out.plan = std::move(s.plan);
    out.converged = s.converged;
    out.iterations = s.iterations;
  }
  out.loss = out.plan.objective(cost);
  out.grad = {Matrix(cost.rows(), cost.cols()), out.plan.plan};
  out.grad_features = chain_to_features(kind, mu, features, out.grad);
  return out;
}

Labels balanced_assignment(const Matrix& cost) {
  const std::size_t k = cost.rows(), m = cost.cols();
  if (k == 0 || m % k != 0) {
    throw std::invalid_argument("balanced_assignment: column count " + std::to_string(m) +
                                " is not divisible by row count " + std::to_string(k));
  }
  // Integer marginals keep every basic flow integral.
  const Vector a(k, static_cast<double>(m / k));
  const Vector b(m, 1.0);
  const TransportPlan plan = exact_ot(cost, a, b);
  Labels out(m, 0);
  for (std::size_t c = 0; c < m; ++c)
    for (std::size_t r = 0; r < k; ++r)
      if (plan.plan(r, c) > 0.5) out[c] = r;
  return out;
}

void save_plan_csv(const std::filesystem::path& path, const TransportPlan& plan) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const auto& p = plan.plan;
  for (std::size_t c = 0; c < p.cols(); ++c) out << (c ? "," : "") << "target" << c;
  out << '\n';
  out.precision(17);
  for (std::size_t r = 0; r < p.rows(); ++r) {
    for (std::size_t c = 0; c < p.cols(); ++c) out << (c ? "," : "") << p(r, c);
    out << '\n';
  }
}

}  // namespace pct
