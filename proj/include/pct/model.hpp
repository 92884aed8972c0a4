#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pct/data.hpp"
#include "pct/numerics.hpp"

namespace pct {

enum class Activation { relu, identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct DenseLayer {
  Matrix weight;  // d_out x d_in
  Vector bias;    // d_out
  Activation activation = Activation::relu;

  std::size_t in_dim() const noexcept { return weight.cols(); }
  std::size_t out_dim() const noexcept { return weight.rows(); }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Feed-forward feature encoder. Also used to carry gradients with the same shapes.
struct EncoderParams {
  std::vector<DenseLayer> layers;
  /// Fixed input standardization x -> (x - shift) / scale applied before the
  /// first layer. Not trained; empty means none.
  Vector input_shift;
  Vector input_scale;

  std::size_t in_dim() const;
  std::size_t out_dim() const;
  std::size_t num_params() const;

  /// Throws std::invalid_argument when consecutive layers do not chain.
  void validate() const;

  /// Same layer shapes and activations, all values zero, no standardization.
  EncoderParams zeros_like() const;

  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

/// Glorot-uniform weights and zero biases; hidden layers relu, last layer identity.
/// dims = {d_in, h1, ..., d_f}.
EncoderParams init_encoder(std::span<const std::size_t> dims, Rng& rng);

/// Sets the input standardization to the column means and population standard
/// deviations of x (a zero deviation becomes 1).
void fit_input_standardization(EncoderParams& params, const Matrix& x);

/// The 2 -> 15 -> 15 -> 2 encoder used for the toy experiment.
EncoderParams init_toy_encoder(Rng& rng);

/// Learnable class prototypes: column k of mu is the prototype of class k.
struct Prototypes {
  Matrix mu;    // d_f x K
  Vector bias;  // K

  std::size_t dim() const noexcept { return mu.rows(); }
  std::size_t num_classes() const noexcept { return mu.cols(); }

  friend bool operator==(const Prototypes&, const Prototypes&) = default;
};

/// mu ~ N(0, 0.01) entrywise (stddev 0.1), bias zero.
Prototypes init_prototypes(std::size_t dim, std::size_t num_classes, Rng& rng);

struct ForwardCache {
  Matrix input;
  std::vector<Matrix> pre_activations;
  std::vector<Matrix> activations;
};

struct Encoded {
  Matrix features;
  ForwardCache cache;
};

Encoded encode(const EncoderParams& params, const Matrix& x);

/// Forward pass without keeping the cache.
Matrix encode_features(const EncoderParams& params, const Matrix& x);

/// Back-propagates d loss / d features through the cached forward pass.
EncoderParams encoder_backward(const EncoderParams& params, const ForwardCache& cache,
                               const Matrix& grad_features);

/// features * mu + bias, one row per sample.
Matrix class_logits(const Prototypes& protos, const Matrix& features);

/// Row-stochastic softmax of class_logits.
Matrix class_probs(const Prototypes& protos, const Matrix& features);

struct ClsGradients {
  double loss = 0.0;
  Matrix grad_mu;
  Vector grad_bias;
  Matrix grad_features;
  EncoderParams grad_encoder;
};

/// Mean cross-entropy of the prototype classifier on a labeled batch and its
/// exact gradients with respect to mu, bias and every encoder parameter.
ClsGradients cls_loss_and_grads(const Prototypes& protos, const EncoderParams& params,
                                const Matrix& x, const Labels& labels);

/// Same loss from precomputed features; grad_encoder is left empty.
ClsGradients cls_loss_from_features(const Prototypes& protos, const Matrix& features,
                                    const Labels& labels);

/// Row-wise argmax, ties to the lowest index.
Labels argmax_rows(const Matrix& scores);

Labels predict(const Prototypes& protos, const EncoderParams& params, const Matrix& x);

// Flat parameter views for gradient checking and optimizers.
Vector flatten(const EncoderParams& params);
void unflatten(std::span<const double> flat, EncoderParams& params);
Vector flatten(const Prototypes& protos);
void unflatten(std::span<const double> flat, Prototypes& protos);

struct Checkpoint {
  EncoderParams encoder;
  Prototypes prototypes;
  std::uint64_t iteration = 0;
  std::optional<Vector> proportions;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::string checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const std::string& text);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace pct
