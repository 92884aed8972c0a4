#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>

#include "pct/data.hpp"
#include "pct/numerics.hpp"

namespace pct {

// Shapes used throughout this header:
//   mu        d_f x K   (column k is prototype k)
//   features  M x d_f   (row j is target feature j)
//   prior     length K, on the simplex
// Pairwise matrices (similarity, cost, sensitivities) are K x M.

enum class CostKind {
  cosine,         // 1 - cos(mu_k, f_j)
  exp_neg_inner,  // exp(-mu_k^T f_j)
  neg_log_prob,   // -log softmax_k(mu^T f_j)
};

std::string to_string(CostKind kind);
CostKind cost_kind_from_string(const std::string& s);

class Temperature {
 public:
  explicit Temperature(double tau = 1.0) : tau_(tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("Temperature must be positive");
  }
  double value() const noexcept { return tau_; }

 private:
  double tau_;
};

enum class Orientation {
  target_to_proto,  // M x K, each row a distribution over prototypes
  proto_to_target,  // K x M, each row a distribution over the batch
};

struct CondDist {
  Matrix probs;
  Orientation orientation;
};

/// S(k, j) = mu_k^T f_j.
Matrix similarity_matrix(const Matrix& mu, const Matrix& features);

/// C(k, j) = c(mu_k, f_j). Cosine cost rejects zero-norm vectors.
Matrix cost_matrix(CostKind kind, const Matrix& mu, const Matrix& features);

/// pi(mu_k | f_j) proportional to prior_k exp(mu_k^T f_j / tau). No classifier bias.
CondDist pi_target_to_proto(const Matrix& mu, const Matrix& features,
                            std::span<const double> prior, Temperature tau = Temperature{});

/// pi(f_j | mu_k) = softmax over the batch of mu_k^T f_j.
CondDist pi_proto_to_target(const Matrix& mu, const Matrix& features);

/// Sensitivities of a scalar loss to the similarity and cost matrices.
/// A cost's own dependence on the similarity is folded in by the chain_* helpers.
struct PairwiseGrad {
  Matrix d_similarity;
  Matrix d_cost;
};

struct TransportTerms {
  double loss = 0.0;
  PairwiseGrad grad;
};

/// (1/M) sum_j sum_k pi(mu_k | f_j) c(mu_k, f_j).
TransportTerms t_to_mu_terms(const Matrix& mu, const Matrix& features,
                             std::span<const double> prior, CostKind kind);

/// sum_k prior_k sum_j pi(f_j | mu_k) c(mu_k, f_j).
TransportTerms mu_to_t_terms(const Matrix& mu, const Matrix& features,
                             std::span<const double> prior, CostKind kind);

/// Gradient with respect to the features (M x d_f).
Matrix chain_to_features(CostKind kind, const Matrix& mu, const Matrix& features,
                         const PairwiseGrad& grad);

/// Gradient with respect to the prototypes (d_f x K). Only the training loop's
/// no-stop-gradient ablation uses this path.
Matrix chain_to_prototypes(CostKind kind, const Matrix& mu, const Matrix& features,
                           const PairwiseGrad& grad);

struct TransportLoss {
  double loss = 0.0;
  Matrix grad_features;
};

/// Target-to-prototype transport cost; mu is treated as a constant.
TransportLoss loss_t_to_mu(const Matrix& mu, const Matrix& features,
                           std::span<const double> prior, CostKind kind);

/// Prototype-to-target transport cost; mu is treated as a constant.
TransportLoss loss_mu_to_t(const Matrix& mu, const Matrix& features,
                           std::span<const double> prior, CostKind kind);

/// Target-to-prototype cost with c = -log p and a uniform prior, which is the
/// mean Shannon entropy of softmax(mu^T f_j).
double entropy_equivalence_loss(const Matrix& mu, const Matrix& features);

/// argmax_k of prior_k exp(-c(mu_k, f_j) / tau). For tau -> 0 and a uniform
/// prior this is the nearest-prototype (K-means assignment) rule.
Labels hard_assign_limit(const Matrix& mu, const Matrix& features, std::span<const double> prior,
                         CostKind kind, Temperature tau);

Vector uniform_prior(std::size_t k);

void save_cond_dist_csv(const std::filesystem::path& path, const CondDist& dist);

}  // namespace pct
