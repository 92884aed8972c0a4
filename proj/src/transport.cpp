#include "pct/transport.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace pct {

std::string to_string(CostKind kind) {
  switch (kind) {
    case CostKind::cosine:
      return "cosine";
    case CostKind::exp_neg_inner:
      return "exp_neg_inner";
    case CostKind::neg_log_prob:
      return "neg_log_prob";
  }
  return "?";
}

CostKind cost_kind_from_string(const std::string& s) {
  if (s == "cosine") return CostKind::cosine;
  if (s == "exp_neg_inner") return CostKind::exp_neg_inner;
  if (s == "neg_log_prob") return CostKind::neg_log_prob;
  throw std::invalid_argument("unknown cost kind '" + s + "'");
}

Vector uniform_prior(std::size_t k) {
  if (k == 0) throw std::invalid_argument("uniform_prior: zero classes");
  return Vector(k, 1.0 / static_cast<double>(k));
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_shapes(const Matrix& mu, const Matrix& features) {
  if (mu.cols() == 0) throw std::invalid_argument("transport: no prototypes");
  if (features.cols() != mu.rows()) {
    throw std::invalid_argument("transport: feature dimension " + std::to_string(features.cols()) +
                                " != prototype dimension " + std::to_string(mu.rows()));
  }
}

void check_prior(std::span<const double> prior, std::size_t k) {
  if (prior.size() != k) throw std::invalid_argument("transport: prior length != class count");
  double s = 0.0;
  for (double p : prior) {
    if (!(p >= 0.0)) throw std::invalid_argument("transport: prior has a negative entry");
    s += p;
  }
  if (std::abs(s - 1.0) > 1e-9) throw std::invalid_argument("transport: prior does not sum to 1");
}

Vector column_norms(const Matrix& m) {
  Vector n(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) n[c] += m(r, c) * m(r, c);
  for (auto& v : n) v = std::sqrt(v);
  return n;
}

Vector row_norms(const Matrix& m) {
  Vector n(m.rows(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double s = 0.0;
    for (double v : m.row(r)) s += v * v;
    n[r] = std::sqrt(s);
  }
  return n;
}

void require_nonzero(const Vector& norms, const char* what) {
  for (double n : norms)
    if (!(n > 0.0)) throw std::invalid_argument(std::string("cosine cost: zero-norm ") + what);
}

// log softmax over k of each column of s (K x M), with optional log prior.
Matrix log_softmax_columns(const Matrix& s, std::span<const double> log_prior) {
  const std::size_t k = s.rows(), m = s.cols();
  Matrix out(k, m);
  Vector col(k);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t c = 0; c < k; ++c) col[c] = s(c, j) + (log_prior.empty() ? 0.0 : log_prior[c]);
    const double lse = log_sum_exp(col);
    for (std::size_t c = 0; c < k; ++c) out(c, j) = col[c] == kNegInf ? kNegInf : col[c] - lse;
  }
  return out;
}

Vector log_of(std::span<const double> p) {
  Vector out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = p[i] > 0.0 ? std::log(p[i]) : kNegInf;
  return out;
}

// Adds the similarity dependence of exp / neg-log-prob costs into d_similarity.
Matrix total_similarity_grad(CostKind kind, const Matrix& mu, const Matrix& features,
                             const PairwiseGrad& grad) {
  Matrix ds = grad.d_similarity;
  const std::size_t k = ds.rows(), m = ds.cols();
  switch (kind) {
    case CostKind::cosine:
      break;
    case CostKind::exp_neg_inner: {
      const Matrix s = similarity_matrix(mu, features);
      for (std::size_t i = 0; i < ds.size(); ++i)
        ds.data()[i] -= std::exp(-s.data()[i]) * grad.d_cost.data()[i];
      break;
    }
    case CostKind::neg_log_prob: {
      // c_kj = -s_kj + logsumexp_k' s_k'j
      const Matrix logq = log_softmax_columns(similarity_matrix(mu, features), {});
      for (std::size_t j = 0; j < m; ++j) {
        double col = 0.0;
        for (std::size_t c = 0; c < k; ++c) col += grad.d_cost(c, j);
        for (std::size_t c = 0; c < k; ++c) ds(c, j) += std::exp(logq(c, j)) * col - grad.d_cost(c, j);
      }
      break;
    }
  }
  return ds;
}

}  // namespace

Matrix similarity_matrix(const Matrix& mu, const Matrix& features) {
  check_shapes(mu, features);
  return matmul_transposed(mu.transposed(), features);
}

Matrix cost_matrix(CostKind kind, const Matrix& mu, const Matrix& features) {
  Matrix s = similarity_matrix(mu, features);
  switch (kind) {
    case CostKind::cosine: {
      const Vector mn = column_norms(mu);
      const Vector fn = row_norms(features);
      require_nonzero(mn, "prototype");
      require_nonzero(fn, "feature");
      for (std::size_t c = 0; c < s.rows(); ++c)
        for (std::size_t j = 0; j < s.cols(); ++j) s(c, j) = 1.0 - s(c, j) / (mn[c] * fn[j]);
      return s;
    }
    case CostKind::exp_neg_inner:
      for (auto& v : s.data()) v = std::exp(-v);
      return s;
    case CostKind::neg_log_prob: {
      Matrix logq = log_softmax_columns(s, {});
      for (auto& v : logq.data()) v = -v;
      return logq;
    }
  }
  return s;
}

CondDist pi_target_to_proto(const Matrix& mu, const Matrix& features,
                            std::span<const double> prior, Temperature tau) {
  check_shapes(mu, features);
  check_prior(prior, mu.cols());
  Matrix s = similarity_matrix(mu, features);
  const double t = tau.value();
  if (t != 1.0)
    for (auto& v : s.data()) v /= t;
  const Matrix logpi = log_softmax_columns(s, log_of(prior));
  Matrix probs(features.rows(), mu.cols());
  for (std::size_t c = 0; c < logpi.rows(); ++c)
    for (std::size_t j = 0; j < logpi.cols(); ++j) probs(j, c) = std::exp(logpi(c, j));
  return {std::move(probs), Orientation::target_to_proto};
}

CondDist pi_proto_to_target(const Matrix& mu, const Matrix& features) {
  check_shapes(mu, features);
  if (features.rows() == 0) throw std::invalid_argument("pi_proto_to_target: empty batch");
  return {softmax_rows(similarity_matrix(mu, features)), Orientation::proto_to_target};
}

TransportTerms t_to_mu_terms(const Matrix& mu, const Matrix& features,
                             std::span<const double> prior, CostKind kind) {
  check_shapes(mu, features);
  check_prior(prior, mu.cols());
  const std::size_t k = mu.cols(), m = features.rows();
  const Matrix cost = cost_matrix(kind, mu, features);
  const Matrix logpi = log_softmax_columns(similarity_matrix(mu, features), log_of(prior));

  TransportTerms out{0.0, {Matrix(k, m), Matrix(k, m)}};
  if (m == 0) return out;
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t j = 0; j < m; ++j) {
    double expected = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double pi = std::exp(logpi(c, j));
      if (pi > 0.0) expected += pi * cost(c, j);
    }
    out.loss += expected;
    for (std::size_t c = 0; c < k; ++c) {
      const double pi = std::exp(logpi(c, j));
      out.grad.d_cost(c, j) = pi * inv_m;
      out.grad.d_similarity(c, j) = pi > 0.0 ? pi * (cost(c, j) - expected) * inv_m : 0.0;
    }
  }
  out.loss *= inv_m;
  return out;
}

TransportTerms mu_to_t_terms(const Matrix& mu, const Matrix& features,
                             std::span<const double> prior, CostKind kind) {
  check_shapes(mu, features);
  check_prior(prior, mu.cols());
  const std::size_t k = mu.cols(), m = features.rows();
  if (m == 0) throw std::invalid_argument("mu_to_t: empty batch");
  const Matrix cost = cost_matrix(kind, mu, features);
  const Matrix rho = softmax_rows(similarity_matrix(mu, features));

  TransportTerms out{0.0, {Matrix(k, m), Matrix(k, m)}};
  for (std::size_t c = 0; c < k; ++c) {
    double expected = 0.0;
    for (std::size_t j = 0; j < m; ++j) expected += rho(c, j) * cost(c, j);
    out.loss += prior[c] * expected;
    for (std::size_t j = 0; j < m; ++j) {
      out.grad.d_cost(c, j) = prior[c] * rho(c, j);
      out.grad.d_similarity(c, j) = prior[c] * rho(c, j) * (cost(c, j) - expected);
    }
  }
  return out;
}

Matrix chain_to_features(CostKind kind, const Matrix& mu, const Matrix& features,
                         const PairwiseGrad& grad) {
  check_shapes(mu, features);
  const Matrix ds = total_similarity_grad(kind, mu, features, grad);
  // d/df_j of sum_k ds_kj mu_k^T f_j
  Matrix out = matmul(ds.transposed(), mu.transposed());
  if (kind == CostKind::cosine) {
    const Vector mn = column_norms(mu);
    const Vector fn = row_norms(features);
    require_nonzero(mn, "prototype");
    require_nonzero(fn, "feature");
    const std::size_t d = mu.rows();
    for (std::size_t j = 0; j < features.rows(); ++j) {
      for (std::size_t c = 0; c < mu.cols(); ++c) {
        const double w = grad.d_cost(c, j);
        if (w == 0.0) continue;
        double dot = 0.0;
        for (std::size_t i = 0; i < d; ++i) dot += mu(i, c) * features(j, i);
        const double cosv = dot / (mn[c] * fn[j]);
        // dc/df = -(mu_hat - cos * f_hat) / |f|
        for (std::size_t i = 0; i < d; ++i) {
          const double g = -(mu(i, c) / mn[c] - cosv * features(j, i) / fn[j]) / fn[j];
          out(j, i) += w * g;
        }
      }
    }
  }
  return out;
}

Matrix chain_to_prototypes(CostKind kind, const Matrix& mu, const Matrix& features,
                           const PairwiseGrad& grad) {
  check_shapes(mu, features);
  const Matrix ds = total_similarity_grad(kind, mu, features, grad);
  Matrix out = transposed_matmul(features, ds.transposed());
  if (kind == CostKind::cosine) {
    const Vector mn = column_norms(mu);
    const Vector fn = row_norms(features);
    require_nonzero(mn, "prototype");
    require_nonzero(fn, "feature");
    const std::size_t d = mu.rows();
    for (std::size_t c = 0; c < mu.cols(); ++c) {
      for (std::size_t j = 0; j < features.rows(); ++j) {
        const double w = grad.d_cost(c, j);
        if (w == 0.0) continue;
        double dot = 0.0;
        for (std::size_t i = 0; i < d; ++i) dot += mu(i, c) * features(j, i);
        const double cosv = dot / (mn[c] * fn[j]);
        for (std::size_t i = 0; i < d; ++i) {
          const double g = -(features(j, i) / fn[j] - cosv * mu(i, c) / mn[c]) / mn[c];
          out(i, c) += w * g;
        }
      }
    }
  }
  return out;
}

TransportLoss loss_t_to_mu(const Matrix& mu, const Matrix& features,
                           std::span<const double> prior, CostKind kind) {
  const TransportTerms t = t_to_mu_terms(mu, features, prior, kind);
  return {t.loss, chain_to_features(kind, mu, features, t.grad)};
}

TransportLoss loss_mu_to_t(const Matrix& mu, const Matrix& features,
                           std::span<const double> prior, CostKind kind) {
  const TransportTerms t = mu_to_t_terms(mu, features, prior, kind);
  return {t.loss, chain_to_features(kind, mu, features, t.grad)};
}

double entropy_equivalence_loss(const Matrix& mu, const Matrix& features) {
  const Vector prior = uniform_prior(mu.cols());
  return t_to_mu_terms(mu, features, prior, CostKind::neg_log_prob).loss;
}

Labels hard_assign_limit(const Matrix& mu, const Matrix& features, std::span<const double> prior,
                         CostKind kind, Temperature tau) {
  check_prior(prior, mu.cols());
  const Matrix cost = cost_matrix(kind, mu, features);
  const Vector log_prior = log_of(prior);
  const double t = tau.value();
  Labels out(features.rows(), 0);
  for (std::size_t j = 0; j < features.rows(); ++j) {
    double best = kNegInf;
    for (std::size_t c = 0; c < mu.cols(); ++c) {
      if (log_prior[c] == kNegInf) continue;
      const double score = log_prior[c] - cost(c, j) / t;
      if (score > best) {
        best = score;
        out[j] = c;
      }
    }
  }
  return out;
}

void save_cond_dist_csv(const std::filesystem::path& path, const CondDist& dist) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const char* prefix = dist.orientation == Orientation::target_to_proto ? "proto" : "target";
  const auto& p = dist.probs;
  for (std::size_t c = 0; c < p.cols(); ++c) out << (c ? "," : "") << prefix << c;
  out << '\n';
  out.precision(17);
  for (std::size_t r = 0; r < p.rows(); ++r) {
    for (std::size_t c = 0; c < p.cols(); ++c) out << (c ? "," : "") << p(r, c);
    out << '\n';
  }
}

}  // namespace pct
