#include "pct/train.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

namespace pct {

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::standard:
      return "standard";
    case TrainMode::source_only:
      return "source_only";
    case TrainMode::source_private:
      return "source_private";
    case TrainMode::pot:
      return "pot";
    case TrainMode::pot_sinkhorn:
      return "pot_sinkhorn";
  }
  return "?";
}

TrainMode train_mode_from_string(const std::string& s) {
  for (auto m : {TrainMode::standard, TrainMode::source_only, TrainMode::source_private,
                 TrainMode::pot, TrainMode::pot_sinkhorn})
    if (to_string(m) == s) return m;
  throw std::invalid_argument("unknown training mode '" + s + "'");
}

void TrainConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(std::string(name) + " must be positive");
    }
  };
  positive(eta0, "eta0");
  positive(gamma, "gamma");
  positive(alpha, "alpha");
  positive(classifier_lr_multiplier, "classifier_lr_multiplier");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
  if (!(beta0 >= 0.0)) throw std::invalid_argument("beta0 must be non-negative");
  if (source_batch == 0 || target_batch == 0) {
    throw std::invalid_argument("batch sizes must be positive");
  }
  if (eval_interval == 0) throw std::invalid_argument("eval_interval must be positive");
  if (feature_dim == 0) throw std::invalid_argument("feature_dim must be positive");
  for (auto h : hidden_dims)
    if (h == 0) throw std::invalid_argument("hidden layer widths must be positive");
  positive(sinkhorn.epsilon, "sinkhorn epsilon");
  positive(sinkhorn.tol, "sinkhorn tol");
  if (sinkhorn.max_iter == 0) throw std::invalid_argument("sinkhorn max_iter must be positive");
  if (mode == TrainMode::pot && target_batch > kExactOtMaxSize) {
    throw std::invalid_argument("pot mode solves exact OT per batch; target_batch must be <= " +
                                std::to_string(kExactOtMaxSize) + " (use pot_sinkhorn)");
  }
}

bool operator==(const TrainConfig& a, const TrainConfig& b) {
  return a.eta0 == b.eta0 && a.gamma == b.gamma && a.alpha == b.alpha &&
         a.momentum == b.momentum && a.source_batch == b.source_batch &&
         a.target_batch == b.target_batch && a.iterations == b.iterations && a.mode == b.mode &&
         a.cost == b.cost && a.beta0 == b.beta0 && a.stop_grad_mu == b.stop_grad_mu &&
         a.use_t_to_mu == b.use_t_to_mu && a.use_mu_to_t == b.use_mu_to_t &&
         a.classifier_lr_multiplier == b.classifier_lr_multiplier && a.seed == b.seed &&
         a.eval_interval == b.eval_interval && a.sinkhorn.epsilon == b.sinkhorn.epsilon &&
         a.sinkhorn.max_iter == b.sinkhorn.max_iter && a.sinkhorn.tol == b.sinkhorn.tol &&
         a.hidden_dims == b.hidden_dims && a.feature_dim == b.feature_dim &&
         a.standardize_inputs == b.standardize_inputs;
}

double lr_at(const TrainConfig& config, std::uint64_t iter) {
  return config.eta0 * std::pow(1.0 + config.gamma * static_cast<double>(iter), -config.alpha);
}

void sgd_step(std::span<double> params, std::span<double> velocity, std::span<const double> grad,
              double lr, double momentum) {
  if (params.size() != velocity.size() || params.size() != grad.size()) {
    throw std::invalid_argument("sgd_step: shape mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = momentum * velocity[i] + grad[i];
    params[i] -= lr * velocity[i];
  }
}

OptimizerState OptimizerState::for_model(const Model& model) {
  OptimizerState s;
  s.encoder_velocity.assign(model.encoder.num_params(), 0.0);
  s.prototype_velocity.assign(model.prototypes.mu.size() + model.prototypes.bias.size(), 0.0);
  return s;
}

// ---------------------------------------------------------------------------

namespace {

bool uses_transport(TrainMode m) {
  return m == TrainMode::standard || m == TrainMode::source_private;
}

bool uses_pot(TrainMode m) { return m == TrainMode::pot || m == TrainMode::pot_sinkhorn; }

void accumulate(EncoderParams& dst, const EncoderParams& src) {
  for (std::size_t i = 0; i < dst.layers.size(); ++i) {
    add_inplace(dst.layers[i].weight, src.layers[i].weight);
    for (std::size_t j = 0; j < dst.layers[i].bias.size(); ++j)
      dst.layers[i].bias[j] += src.layers[i].bias[j];
  }
}

void require_finite(const std::optional<double>& v, const char* what) {
  if (v && !std::isfinite(*v)) throw NumericError(std::string("non-finite ") + what);
}

}  // namespace

Trainer::Trainer(TrainConfig config, Model model)
    : config_(std::move(config)),
      model_(std::move(model)),
      optimizer_(OptimizerState::for_model(model_)),
      proportions_(init_uniform(model_.prototypes.num_classes(), config_.beta0)) {
  config_.validate();
  model_.encoder.validate();
  if (model_.encoder.out_dim() != model_.prototypes.dim()) {
    throw std::invalid_argument("Trainer: encoder output dimension != prototype dimension");
  }
}

void Trainer::set_mode(TrainMode mode) {
  config_.mode = mode;
  config_.validate();
}

StepReport Trainer::step(std::optional<SourceBatch> source, const Matrix& target_x) {
  const TrainMode mode = config_.mode;
  if (mode == TrainMode::source_private && source) {
    throw std::invalid_argument("source_private mode takes no source data");
  }
  if (mode != TrainMode::source_private && !source) {
    throw std::invalid_argument(to_string(mode) + " mode needs a source batch");
  }

  const EncoderParams& enc = model_.encoder;
  const Prototypes& protos = model_.prototypes;
  const std::size_t d = protos.dim(), k = protos.num_classes();

  StepReport rep;
  rep.lr = lr_at(config_, optimizer_.iteration);
  EncoderParams grad_enc = enc.zeros_like();
  Matrix grad_mu(d, k);
  Vector grad_bias(k, 0.0);

  if (source) {
    const Encoded es = encode(enc, source->x);
    const ClsGradients cls = cls_loss_from_features(protos, es.features, source->y);
    rep.loss_cls = cls.loss;
    grad_mu = cls.grad_mu;
    grad_bias = cls.grad_bias;
    accumulate(grad_enc, encoder_backward(enc, es.cache, cls.grad_features));
  }

  if (uses_transport(mode) || uses_pot(mode)) {
    const Encoded et = encode(enc, target_x);
    const std::size_t m = et.features.rows();
    PairwiseGrad pg{Matrix(k, m), Matrix(k, m)};
    if (uses_transport(mode)) {
      if (config_.use_t_to_mu) {
        const TransportTerms t = t_to_mu_terms(protos.mu, et.features, proportions_.p, config_.cost);
        rep.loss_t_to_mu = t.loss;
        add_inplace(pg.d_similarity, t.grad.d_similarity);
        add_inplace(pg.d_cost, t.grad.d_cost);
      }
      if (config_.use_mu_to_t) {
        const TransportTerms t = mu_to_t_terms(protos.mu, et.features, proportions_.p, config_.cost);
        rep.loss_mu_to_t = t.loss;
        add_inplace(pg.d_similarity, t.grad.d_similarity);
        add_inplace(pg.d_cost, t.grad.d_cost);
      }
    } else {
      const OtSolver solver = mode == TrainMode::pot ? OtSolver::exact : OtSolver::sinkhorn;
      PotResult pot = pot_loss(protos.mu, et.features, config_.cost, solver, config_.sinkhorn);
      rep.loss_pot = pot.loss;
      if (solver == OtSolver::sinkhorn) {
        rep.sinkhorn_converged = pot.converged;
        rep.sinkhorn_iterations = pot.iterations;
      }
      pg = std::move(pot.grad);
    }
    const Matrix grad_features = chain_to_features(config_.cost, protos.mu, et.features, pg);
    accumulate(grad_enc, encoder_backward(enc, et.cache, grad_features));
    if (!config_.stop_grad_mu && mode != TrainMode::source_private) {
      add_inplace(grad_mu, chain_to_prototypes(config_.cost, protos.mu, et.features, pg));
    }
  }

  require_finite(rep.loss_cls, "classification loss");
  require_finite(rep.loss_t_to_mu, "target-to-prototype loss");
  require_finite(rep.loss_mu_to_t, "prototype-to-target loss");
  require_finite(rep.loss_pot, "OT loss");

  const double proto_lr = rep.lr;
  const double encoder_lr = rep.lr / config_.classifier_lr_multiplier;

  Vector enc_flat = flatten(model_.encoder);
  sgd_step(enc_flat, optimizer_.encoder_velocity, flatten(grad_enc), encoder_lr, config_.momentum);
  unflatten(enc_flat, model_.encoder);

  const Prototypes before = model_.prototypes;
  if (mode != TrainMode::source_private) {
    Vector proto_flat = flatten(model_.prototypes);
    Vector proto_grad = grad_mu.data();
    proto_grad.insert(proto_grad.end(), grad_bias.begin(), grad_bias.end());
    sgd_step(proto_flat, optimizer_.prototype_velocity, proto_grad, proto_lr, config_.momentum);
    unflatten(proto_flat, model_.prototypes);
  }
  rep.delta_mu = model_.prototypes.mu;
  add_inplace(rep.delta_mu, before.mu, -1.0);
  rep.delta_bias.resize(k);
  for (std::size_t c = 0; c < k; ++c) rep.delta_bias[c] = model_.prototypes.bias[c] - before.bias[c];

  const bool encoder_finite =
      std::all_of(enc_flat.begin(), enc_flat.end(), [](double v) { return std::isfinite(v); });
  if (!encoder_finite || !model_.prototypes.mu.all_finite()) {
    throw NumericError("non-finite parameters after update");
  }
  ++optimizer_.iteration;

  if (proportions_.beta0 > 0.0) {
    const Matrix f = encode_features(model_.encoder, target_x);
    proportions_ = em_update(proportions_, em_batch_estimate(proportions_, model_.prototypes.mu, f));
  }
  return rep;
}

// ---------------------------------------------------------------------------

namespace {

using nlohmann::ordered_json;

template <typename T>
ordered_json optional_json(const std::optional<T>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

struct SeedStreams {
  std::uint64_t init, source, target;
};

SeedStreams derive_seeds(std::uint64_t seed) {
  Rng root(seed);
  SeedStreams s{};
  s.init = root.next_u64();
  s.source = root.next_u64();
  s.target = root.next_u64();
  return s;
}

void fill_losses(MetricsRecord& rec, const StepReport& rep) {
  rec.lr = rep.lr;
  rec.loss_cls = rep.loss_cls;
  rec.loss_t_to_mu = rep.loss_t_to_mu;
  rec.loss_mu_to_t = rep.loss_mu_to_t;
  rec.loss_pot = rep.loss_pot;
  rec.sinkhorn_converged = rep.sinkhorn_converged;
  if (rep.sinkhorn_converged) rec.sinkhorn_iterations = rep.sinkhorn_iterations;
}

void check_dims(const Model& model, std::size_t target_dim) {
  if (model.encoder.in_dim() != target_dim) {
    throw std::invalid_argument("target dimension " + std::to_string(target_dim) +
                                " != encoder input dimension " +
                                std::to_string(model.encoder.in_dim()));
  }
}

}  // namespace

std::string to_json_line(const MetricsRecord& r) {
  ordered_json j;
  j["iteration"] = r.iteration;
  j["lr"] = r.lr;
  j["loss_cls"] = optional_json(r.loss_cls);
  j["loss_t_to_mu"] = optional_json(r.loss_t_to_mu);
  j["loss_mu_to_t"] = optional_json(r.loss_mu_to_t);
  j["loss_pot"] = optional_json(r.loss_pot);
  j["source_accuracy"] = optional_json(r.source_accuracy);
  j["target_accuracy"] = optional_json(r.target_accuracy);
  j["proportions"] = r.proportions;
  j["proportion_l1"] = optional_json(r.proportion_l1);
  if (r.sinkhorn_converged) {
    j["sinkhorn_converged"] = *r.sinkhorn_converged;
    j["sinkhorn_iterations"] = optional_json(r.sinkhorn_iterations);
  }
  return j.dump();
}

Model init_model(const TrainConfig& config, std::size_t input_dim, std::size_t num_classes,
                 Rng& rng) {
  std::vector<std::size_t> dims{input_dim};
  dims.insert(dims.end(), config.hidden_dims.begin(), config.hidden_dims.end());
  dims.push_back(config.feature_dim);
  Model m;
  m.encoder = init_encoder(dims, rng);
  m.prototypes = init_prototypes(config.feature_dim, num_classes, rng);
  return m;
}

MetricsRecord evaluate(const Model& model, const LabeledDataset* source,
                       const UnlabeledDataset& target, const ClassProportions& proportions) {
  MetricsRecord rec;
  if (source && source->size() > 0) {
    rec.source_accuracy =
        accuracy(predict(model.prototypes, model.encoder, source->features()), source->labels());
  }
  if (target.hidden_labels()) {
    rec.target_accuracy = accuracy(predict(model.prototypes, model.encoder, target.features()),
                                   *target.hidden_labels());
    const Vector truth =
        label_proportions(*target.hidden_labels(), model.prototypes.num_classes());
    rec.proportion_l1 = l1_error(proportions.p, truth);
  }
  rec.proportions = proportions.p;
  return rec;
}

TrainResult train_from(const TrainConfig& config, Model init, const LabeledDataset& source,
                       const UnlabeledDataset& target) {
  config.validate();
  if (config.mode == TrainMode::source_private) {
    throw std::invalid_argument("train: source_private runs go through adapt_source_private");
  }
  if (source.size() == 0 || target.size() == 0) throw std::invalid_argument("train: empty dataset");
  if (source.dim() != target.dim()) {
    throw std::invalid_argument("train: source dimension " + std::to_string(source.dim()) +
                                " != target dimension " + std::to_string(target.dim()));
  }
  check_dims(init, target.dim());
  if (init.prototypes.num_classes() != source.num_classes()) {
    throw std::invalid_argument("train: prototype count != source class count");
  }

  const SeedStreams seeds = derive_seeds(config.seed);
  BatchSampler source_sampler(source.size(), config.source_batch, seeds.source);
  BatchSampler target_sampler(target.size(), config.target_batch, seeds.target);
  Trainer trainer(config, std::move(init));

  TrainResult result;
  StepReport last;
  for (std::size_t it = 1; it <= config.iterations; ++it) {
    const auto si = source_sampler.next_batch();
    const auto ti = target_sampler.next_batch();
    const Matrix xs = source.features().select_rows(si);
    Labels ys(si.size());
    for (std::size_t i = 0; i < si.size(); ++i) ys[i] = source.labels()[si[i]];
    const Matrix xt = target.features().select_rows(ti);
    last = trainer.step(SourceBatch{xs, ys}, xt);
    if (it % config.eval_interval == 0 || it == config.iterations) {
      MetricsRecord rec = evaluate(trainer.model(), &source, target, trainer.proportions());
      rec.iteration = it;
      fill_losses(rec, last);
      result.log.push_back(std::move(rec));
    }
  }
  if (config.iterations == 0) {
    MetricsRecord rec = evaluate(trainer.model(), &source, target, trainer.proportions());
    rec.lr = lr_at(config, 0);
    result.log.push_back(std::move(rec));
  }
  result.model = trainer.model();
  result.proportions = trainer.proportions();
  return result;
}

TrainResult train(const TrainConfig& config, const LabeledDataset& source,
                  const UnlabeledDataset& target) {
  config.validate();
  if (source.size() == 0) throw std::invalid_argument("train: empty source dataset");
  Rng init_rng(derive_seeds(config.seed).init);
  Model init = init_model(config, source.dim(), source.num_classes(), init_rng);
  if (config.standardize_inputs) fit_input_standardization(init.encoder, source.features());
  return train_from(config, std::move(init), source, target);
}

TrainResult adapt_source_private(const TrainConfig& config, const Checkpoint& source_model,
                                 const UnlabeledDataset& target) {
  TrainConfig cfg = config;
  cfg.mode = TrainMode::source_private;
  cfg.validate();
  if (target.size() == 0) throw std::invalid_argument("adapt: empty target dataset");
  Model init = from_checkpoint(source_model);
  check_dims(init, target.dim());

  const SeedStreams seeds = derive_seeds(cfg.seed);
  BatchSampler target_sampler(target.size(), cfg.target_batch, seeds.target);
  Trainer trainer(cfg, std::move(init));

  TrainResult result;
  StepReport last;
  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    const Matrix xt = target.features().select_rows(target_sampler.next_batch());
    last = trainer.step(std::nullopt, xt);
    if (it % cfg.eval_interval == 0 || it == cfg.iterations) {
      MetricsRecord rec = evaluate(trainer.model(), nullptr, target, trainer.proportions());
      rec.iteration = it;
      fill_losses(rec, last);
      result.log.push_back(std::move(rec));
    }
  }
  if (cfg.iterations == 0) {
    MetricsRecord rec = evaluate(trainer.model(), nullptr, target, trainer.proportions());
    rec.lr = lr_at(cfg, 0);
    result.log.push_back(std::move(rec));
  }
  result.model = trainer.model();
  result.proportions = trainer.proportions();
  return result;
}

Checkpoint to_checkpoint(const Model& model, std::uint64_t iteration,
                         const ClassProportions* proportions) {
  Checkpoint c{model.encoder, model.prototypes, iteration, std::nullopt};
  if (proportions) c.proportions = proportions->p;
  return c;
}

Model from_checkpoint(const Checkpoint& ckpt) { return {ckpt.encoder, ckpt.prototypes}; }

}  // namespace pct
