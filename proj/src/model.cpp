#include "pct/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "pct/error.hpp"

namespace pct {

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "identity"; }

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

std::size_t EncoderParams::in_dim() const {
  if (layers.empty()) throw std::invalid_argument("EncoderParams: no layers");
  return layers.front().in_dim();
}

std::size_t EncoderParams::out_dim() const {
  if (layers.empty()) throw std::invalid_argument("EncoderParams: no layers");
  return layers.back().out_dim();
}

std::size_t EncoderParams::num_params() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

void EncoderParams::validate() const {
  if (layers.empty()) throw std::invalid_argument("EncoderParams: no layers");
  if (input_shift.size() != input_scale.size() ||
      (!input_shift.empty() && input_shift.size() != in_dim())) {
    throw std::invalid_argument("EncoderParams: input standardization does not match input dimension");
  }
  for (double s : input_scale)
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw std::invalid_argument("EncoderParams: input scale must be positive and finite");
    }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.bias.size() != l.out_dim()) {
      throw std::invalid_argument("EncoderParams: layer " + std::to_string(i) +
                                  " bias length does not match output dimension");
    }
    if (i > 0 && l.in_dim() != layers[i - 1].out_dim()) {
      throw std::invalid_argument("EncoderParams: layer " + std::to_string(i) +
                                  " input dimension does not chain");
    }
  }
}

EncoderParams EncoderParams::zeros_like() const {
  EncoderParams z;
  z.layers.reserve(layers.size());
  for (const auto& l : layers) {
    z.layers.push_back({Matrix(l.out_dim(), l.in_dim()), Vector(l.out_dim(), 0.0), l.activation});
  }
  return z;
}

void fit_input_standardization(EncoderParams& params, const Matrix& x) {
  if (x.cols() != params.in_dim() || x.rows() == 0) {
    throw std::invalid_argument("fit_input_standardization: data does not match encoder input");
  }
  const double n = static_cast<double>(x.rows());
  params.input_shift.assign(x.cols(), 0.0);
  params.input_scale.assign(x.cols(), 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t c = 0; c < x.cols(); ++c) params.input_shift[c] += x(i, c);
  for (auto& m : params.input_shift) m /= n;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t c = 0; c < x.cols(); ++c) {
      const double d = x(i, c) - params.input_shift[c];
      params.input_scale[c] += d * d;
    }
  for (auto& s : params.input_scale) {
    s = std::sqrt(s / n);
    if (!(s > 0.0)) s = 1.0;
  }
}

EncoderParams init_encoder(std::span<const std::size_t> dims, Rng& rng) {
  if (dims.size() < 2) throw std::invalid_argument("init_encoder: need at least two dimensions");
  EncoderParams params;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const std::size_t din = dims[i], dout = dims[i + 1];
    if (din == 0 || dout == 0) throw std::invalid_argument("init_encoder: zero dimension");
    const double limit = std::sqrt(6.0 / static_cast<double>(din + dout));
    DenseLayer layer{Matrix(dout, din), Vector(dout, 0.0),
                     i + 2 == dims.size() ? Activation::identity : Activation::relu};
    for (auto& w : layer.weight.data()) w = rng.uniform(-limit, limit);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

EncoderParams init_toy_encoder(Rng& rng) {
  const std::size_t dims[] = {2, 15, 15, 2};
  return init_encoder(dims, rng);
}

Prototypes init_prototypes(std::size_t dim, std::size_t num_classes, Rng& rng) {
  if (dim == 0 || num_classes == 0) {
    throw std::invalid_argument("init_prototypes: dimension and class count must be positive");
  }
  Prototypes p{Matrix(dim, num_classes), Vector(num_classes, 0.0)};
  for (auto& v : p.mu.data()) v = rng.normal(0.0, 0.1);
  return p;
}

namespace {

Matrix affine(const DenseLayer& layer, const Matrix& x) {
  Matrix z = matmul_transposed(x, layer.weight);
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto row = z.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += layer.bias[j];
  }
  return z;
}

Matrix standardize(const EncoderParams& params, const Matrix& x) {
  if (params.input_shift.empty()) return x;
  Matrix out = x;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    for (std::size_t c = 0; c < row.size(); ++c)
      row[c] = (row[c] - params.input_shift[c]) / params.input_scale[c];
  }
  return out;
}

Matrix activate(Activation a, const Matrix& z) {
  if (a == Activation::identity) return z;
  Matrix out = z;
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

void check_input(const EncoderParams& params, const Matrix& x) {
  params.validate();
  if (x.cols() != params.in_dim()) {
    throw std::invalid_argument("encode: input has " + std::to_string(x.cols()) +
                                " columns, encoder expects " + std::to_string(params.in_dim()));
  }
}

}  // namespace

Encoded encode(const EncoderParams& params, const Matrix& x) {
  check_input(params, x);
  Encoded out;
  out.cache.input = standardize(params, x);
  const Matrix* h = &out.cache.input;
  for (const auto& layer : params.layers) {
    out.cache.pre_activations.push_back(affine(layer, *h));
    out.cache.activations.push_back(activate(layer.activation, out.cache.pre_activations.back()));
    h = &out.cache.activations.back();
  }
  out.features = *h;
  return out;
}

Matrix encode_features(const EncoderParams& params, const Matrix& x) {
  check_input(params, x);
  Matrix h = standardize(params, x);
  for (const auto& layer : params.layers) h = activate(layer.activation, affine(layer, h));
  return h;
}

EncoderParams encoder_backward(const EncoderParams& params, const ForwardCache& cache,
                               const Matrix& grad_features) {
  EncoderParams grads = params.zeros_like();
  Matrix delta = grad_features;
  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const auto& layer = params.layers[li];
    if (layer.activation == Activation::relu) {
      const auto& z = cache.pre_activations[li];
      for (std::size_t i = 0; i < delta.size(); ++i)
        if (!(z.data()[i] > 0.0)) delta.data()[i] = 0.0;
    }
    const Matrix& input = li == 0 ? cache.input : cache.activations[li - 1];
    grads.layers[li].weight = transposed_matmul(delta, input);
    auto& gb = grads.layers[li].bias;
    for (std::size_t i = 0; i < delta.rows(); ++i) {
      const auto row = delta.row(i);
      for (std::size_t j = 0; j < row.size(); ++j) gb[j] += row[j];
    }
    if (li > 0) delta = matmul(delta, layer.weight);
  }
  return grads;
}

Matrix class_logits(const Prototypes& protos, const Matrix& features) {
  if (features.cols() != protos.dim()) {
    throw std::invalid_argument("class_logits: feature dimension " +
                                std::to_string(features.cols()) + " != prototype dimension " +
                                std::to_string(protos.dim()));
  }
  Matrix logits = matmul(features, protos.mu);
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto row = logits.row(i);
    for (std::size_t k = 0; k < row.size(); ++k) row[k] += protos.bias[k];
  }
  return logits;
}

Matrix class_probs(const Prototypes& protos, const Matrix& features) {
  return softmax_rows(class_logits(protos, features));
}

ClsGradients cls_loss_from_features(const Prototypes& protos, const Matrix& features,
                                    const Labels& labels) {
  if (labels.size() != features.rows()) {
    throw std::invalid_argument("cls_loss: label count does not match batch size");
  }
  const std::size_t n = features.rows();
  const std::size_t k = protos.num_classes();
  for (auto y : labels)
    if (y >= k) throw std::invalid_argument("cls_loss: label out of range");

  const Matrix logp = log_softmax_rows(class_logits(protos, features));
  ClsGradients out;
  Matrix dlogits(n, k);
  const double inv_n = n ? 1.0 / static_cast<double>(n) : 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out.loss -= logp(i, labels[i]);
    for (std::size_t c = 0; c < k; ++c) dlogits(i, c) = std::exp(logp(i, c)) * inv_n;
    dlogits(i, labels[i]) -= inv_n;
  }
  out.loss *= inv_n;
  out.grad_mu = transposed_matmul(features, dlogits);
  out.grad_bias.assign(k, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < k; ++c) out.grad_bias[c] += dlogits(i, c);
  out.grad_features = matmul_transposed(dlogits, protos.mu);
  return out;
}

ClsGradients cls_loss_and_grads(const Prototypes& protos, const EncoderParams& params,
                                const Matrix& x, const Labels& labels) {
  const Encoded enc = encode(params, x);
  ClsGradients out = cls_loss_from_features(protos, enc.features, labels);
  out.grad_encoder = encoder_backward(params, enc.cache, out.grad_features);
  return out;
}

Labels argmax_rows(const Matrix& scores) {
  Labels out(scores.rows(), 0);
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    const auto row = scores.row(i);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
      if (row[c] > row[best]) best = c;
    out[i] = best;
  }
  return out;
}

Labels predict(const Prototypes& protos, const EncoderParams& params, const Matrix& x) {
  return argmax_rows(class_logits(protos, encode_features(params, x)));
}

Vector flatten(const EncoderParams& params) {
  Vector flat;
  flat.reserve(params.num_params());
  for (const auto& l : params.layers) {
    flat.insert(flat.end(), l.weight.data().begin(), l.weight.data().end());
    flat.insert(flat.end(), l.bias.begin(), l.bias.end());
  }
  return flat;
}

void unflatten(std::span<const double> flat, EncoderParams& params) {
  if (flat.size() != params.num_params()) throw std::invalid_argument("unflatten: size mismatch");
  auto it = flat.begin();
  for (auto& l : params.layers) {
    std::copy_n(it, l.weight.size(), l.weight.data().begin());
    it += static_cast<std::ptrdiff_t>(l.weight.size());
    std::copy_n(it, l.bias.size(), l.bias.begin());
    it += static_cast<std::ptrdiff_t>(l.bias.size());
  }
}

Vector flatten(const Prototypes& protos) {
  Vector flat(protos.mu.data());
  flat.insert(flat.end(), protos.bias.begin(), protos.bias.end());
  return flat;
}

void unflatten(std::span<const double> flat, Prototypes& protos) {
  if (flat.size() != protos.mu.size() + protos.bias.size()) {
    throw std::invalid_argument("unflatten: size mismatch");
  }
  std::copy_n(flat.begin(), protos.mu.size(), protos.mu.data().begin());
  std::copy(flat.begin() + static_cast<std::ptrdiff_t>(protos.mu.size()), flat.end(),
            protos.bias.begin());
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

using nlohmann::json;

constexpr const char* kCheckpointFormat = "pct-checkpoint";
constexpr int kCheckpointVersion = 1;

Matrix matrix_from(const json& j, std::size_t rows, std::size_t cols, const char* what) {
  auto data = j.get<std::vector<double>>();
  if (data.size() != rows * cols) {
    throw SchemaError(std::string("checkpoint: ") + what + " has wrong element count");
  }
  return Matrix(rows, cols, std::move(data));
}

}  // namespace

std::string checkpoint_to_json(const Checkpoint& ckpt) {
  json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["iteration"] = ckpt.iteration;
  json layers = json::array();
  for (const auto& l : ckpt.encoder.layers) {
    layers.push_back({{"in", l.in_dim()},
                      {"out", l.out_dim()},
                      {"activation", to_string(l.activation)},
                      {"weight", l.weight.data()},
                      {"bias", l.bias}});
  }
  j["encoder"] = std::move(layers);
  if (!ckpt.encoder.input_shift.empty()) {
    j["input_shift"] = ckpt.encoder.input_shift;
    j["input_scale"] = ckpt.encoder.input_scale;
  }
  j["prototypes"] = {{"dim", ckpt.prototypes.dim()},
                     {"classes", ckpt.prototypes.num_classes()},
                     {"mu", ckpt.prototypes.mu.data()},
                     {"bias", ckpt.prototypes.bias}};
  if (ckpt.proportions) j["proportions"] = *ckpt.proportions;
  return j.dump(1);
}

Checkpoint checkpoint_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("checkpoint: ") + e.what());
  }
  try {
    if (j.at("format") != kCheckpointFormat) throw SchemaError("checkpoint: unknown format");
    if (j.at("version") != kCheckpointVersion) throw SchemaError("checkpoint: unsupported version");
    Checkpoint ckpt;
    ckpt.iteration = j.at("iteration").get<std::uint64_t>();
    for (const auto& l : j.at("encoder")) {
      const auto din = l.at("in").get<std::size_t>();
      const auto dout = l.at("out").get<std::size_t>();
      DenseLayer layer{matrix_from(l.at("weight"), dout, din, "weight"),
                       l.at("bias").get<Vector>(),
                       activation_from_string(l.at("activation").get<std::string>())};
      ckpt.encoder.layers.push_back(std::move(layer));
    }
    if (j.contains("input_shift")) {
      ckpt.encoder.input_shift = j.at("input_shift").get<Vector>();
      ckpt.encoder.input_scale = j.at("input_scale").get<Vector>();
    }
    ckpt.encoder.validate();
    const auto& p = j.at("prototypes");
    const auto dim = p.at("dim").get<std::size_t>();
    const auto classes = p.at("classes").get<std::size_t>();
    ckpt.prototypes.mu = matrix_from(p.at("mu"), dim, classes, "mu");
    ckpt.prototypes.bias = p.at("bias").get<Vector>();
    if (ckpt.prototypes.bias.size() != classes) throw SchemaError("checkpoint: bias length");
    if (dim != ckpt.encoder.out_dim()) {
      throw SchemaError("checkpoint: prototype dimension does not match encoder output");
    }
    if (j.contains("proportions")) ckpt.proportions = j.at("proportions").get<Vector>();
    return ckpt;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("checkpoint: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw SchemaError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << checkpoint_to_json(ckpt) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_json(ss.str());
}

}  // namespace pct
