#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pct/data.hpp"
#include "pct/model.hpp"
#include "pct/ot.hpp"
#include "pct/proportions.hpp"
#include "pct/transport.hpp"

namespace pct {

enum class TrainMode {
  standard,        // L_cls + L_t->mu + L_mu->t
  source_only,     // L_cls
  source_private,  // L_t->mu + L_mu->t with frozen prototypes, no source data
  pot,             // L_cls + exact OT-weighted cost
  pot_sinkhorn,    // L_cls + Sinkhorn-weighted cost
};

std::string to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& s);

/// Raised when a loss or parameter becomes NaN/Inf during training.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double eta0 = 0.01;
  double gamma = 0.0002;
  double alpha = 0.75;
  double momentum = 0.9;
  std::size_t source_batch = 32;
  std::size_t target_batch = 96;
  std::size_t iterations = 2000;
  TrainMode mode = TrainMode::standard;
  CostKind cost = CostKind::cosine;
  double beta0 = 0.0;
  bool stop_grad_mu = true;
  bool use_t_to_mu = true;
  bool use_mu_to_t = true;
  /// Prototype learning rate divided by encoder learning rate.
  double classifier_lr_multiplier = 10.0;
  std::uint64_t seed = 0;
  std::size_t eval_interval = 100;
  SinkhornOptions sinkhorn;
  /// Hidden widths and output width of the MLP encoder built for fresh runs.
  std::vector<std::size_t> hidden_dims{15, 15};
  std::size_t feature_dim = 2;
  /// Fresh runs standardize encoder inputs with source column statistics.
  bool standardize_inputs = true;

  /// Throws std::invalid_argument on non-positive rates, empty batches, or an
  /// exact-OT batch beyond kExactOtMaxSize.
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&);
};

/// eta0 * (1 + gamma * iter)^(-alpha).
double lr_at(const TrainConfig& config, std::uint64_t iter);

struct Model {
  EncoderParams encoder;
  Prototypes prototypes;

  friend bool operator==(const Model&, const Model&) = default;
};

/// Classical momentum: v <- momentum * v + grad; p <- p - lr * v.
void sgd_step(std::span<double> params, std::span<double> velocity, std::span<const double> grad,
              double lr, double momentum);

/// Velocity buffers mirroring the model parameters.
struct OptimizerState {
  Vector encoder_velocity;
  Vector prototype_velocity;
  std::uint64_t iteration = 0;

  static OptimizerState for_model(const Model& model);
};

struct SourceBatch {
  const Matrix& x;
  const Labels& y;
};

struct StepReport {
  std::optional<double> loss_cls;
  std::optional<double> loss_t_to_mu;
  std::optional<double> loss_mu_to_t;
  std::optional<double> loss_pot;
  double lr = 0.0;
  std::optional<bool> sinkhorn_converged;
  std::size_t sinkhorn_iterations = 0;
  Matrix delta_mu;
  Vector delta_bias;
};

/// One training run's mutable state. Each step sees only batch matrices, so
/// target labels never reach the update rule.
class Trainer {
 public:
  Trainer(TrainConfig config, Model model);

  /// Applies one update. A source batch is required by every mode except
  /// source_private, which rejects one.
  StepReport step(std::optional<SourceBatch> source, const Matrix& target_x);

  const TrainConfig& config() const noexcept { return config_; }
  void set_mode(TrainMode mode);
  const Model& model() const noexcept { return model_; }
  const ClassProportions& proportions() const noexcept { return proportions_; }
  const OptimizerState& optimizer() const noexcept { return optimizer_; }
  std::uint64_t iteration() const noexcept { return optimizer_.iteration; }

 private:
  TrainConfig config_;
  Model model_;
  OptimizerState optimizer_;
  ClassProportions proportions_;
};

struct MetricsRecord {
  std::uint64_t iteration = 0;
  double lr = 0.0;
  std::optional<double> loss_cls;
  std::optional<double> loss_t_to_mu;
  std::optional<double> loss_mu_to_t;
  std::optional<double> loss_pot;
  std::optional<double> source_accuracy;
  std::optional<double> target_accuracy;
  Vector proportions;
  std::optional<double> proportion_l1;
  std::optional<bool> sinkhorn_converged;
  std::optional<std::size_t> sinkhorn_iterations;
};

/// One-line JSON object with a fixed key order.
std::string to_json_line(const MetricsRecord& record);

struct TrainResult {
  Model model;
  ClassProportions proportions;
  std::vector<MetricsRecord> log;
};

/// Fresh model: encoder dims {d_in, hidden..., feature_dim}, prototypes for K classes.
Model init_model(const TrainConfig& config, std::size_t input_dim, std::size_t num_classes,
                 Rng& rng);

/// Full training run. Source and target batches come from independent
/// samplers; metrics are recorded every eval_interval iterations and at the end.
/// Not for source_private mode (see adapt_source_private).
TrainResult train(const TrainConfig& config, const LabeledDataset& source,
                  const UnlabeledDataset& target);

/// Same, starting from an explicit model.
TrainResult train_from(const TrainConfig& config, Model init, const LabeledDataset& source,
                       const UnlabeledDataset& target);

/// Adapts a trained source model to the target using only the transport
/// losses; the prototypes stay fixed and no source data is involved.
TrainResult adapt_source_private(const TrainConfig& config, const Checkpoint& source_model,
                                 const UnlabeledDataset& target);

/// Full-set evaluation record (accuracies only where labels are known).
MetricsRecord evaluate(const Model& model, const LabeledDataset* source,
                       const UnlabeledDataset& target, const ClassProportions& proportions);

Checkpoint to_checkpoint(const Model& model, std::uint64_t iteration,
                         const ClassProportions* proportions = nullptr);
Model from_checkpoint(const Checkpoint& ckpt);

}  // namespace pct
