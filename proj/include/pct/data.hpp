#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "pct/numerics.hpp"

namespace pct {

using Labels = std::vector<std::size_t>;

/// Source samples with dense labels in [0, num_classes).
class LabeledDataset {
 public:
  LabeledDataset() = default;
  LabeledDataset(Matrix features, Labels labels, std::size_t num_classes);

  const Matrix& features() const noexcept { return features_; }
  const Labels& labels() const noexcept { return labels_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  std::size_t size() const noexcept { return features_.rows(); }
  std::size_t dim() const noexcept { return features_.cols(); }

  std::vector<std::size_t> class_counts() const;

  /// Original label strings by dense index (empty when labels were generated).
  const std::vector<std::string>& label_names() const noexcept { return label_names_; }
  void set_label_names(std::vector<std::string> names) { label_names_ = std::move(names); }

 private:
  Matrix features_;
  Labels labels_;
  std::size_t num_classes_ = 0;
  std::vector<std::string> label_names_;
};

/// Target samples. Hidden labels, when present, are kept for evaluation only;
/// training code receives features() and never the labels.
class UnlabeledDataset {
 public:
  UnlabeledDataset() = default;
  explicit UnlabeledDataset(Matrix features, std::optional<Labels> hidden_labels = std::nullopt);

  const Matrix& features() const noexcept { return features_; }
  std::size_t size() const noexcept { return features_.rows(); }
  std::size_t dim() const noexcept { return features_.cols(); }

  const std::optional<Labels>& hidden_labels() const noexcept { return hidden_labels_; }

 private:
  Matrix features_;
  std::optional<Labels> hidden_labels_;
};

/// Covariance shared by every class of the 2-D Gaussian toy problem.
Matrix synthetic_covariance();

/// 300 labeled source draws (250 of class 0, 50 of class 1) and 300 target
/// draws (50 of class 0, 250 of class 1) with shifted class means.
std::pair<LabeledDataset, UnlabeledDataset> make_synthetic_pair(Rng& rng);

/// Keeps ceil(fraction * n_k) random samples of each class k < K/2, all
/// samples of the other classes, and reshuffles the result.
LabeledDataset subsample_classes(const LabeledDataset& ds, double fraction, Rng& rng);

/// Stacks datasets that share dimension and class count.
LabeledDataset concatenate(const std::vector<LabeledDataset>& parts);

/// Column selection for CSV embedding files. Empty feature_cols means every
/// column except the label column.
struct EmbeddingSchema {
  std::vector<std::string> feature_cols;
  std::optional<std::string> label_col;
};

using EmbeddingData = std::variant<LabeledDataset, UnlabeledDataset>;

/// Reads a CSV with a header line. When a label column is given the label
/// strings are mapped to dense indices (sorted numerically when all labels
/// are integers, lexicographically otherwise) and the mapping is written to
/// the JSON sidecar `<path>.labels.json` if write_sidecar is set.
/// An existing sidecar is honoured so train and test files share indices.
EmbeddingData load_embeddings(const std::filesystem::path& path, const EmbeddingSchema& schema,
                              bool write_sidecar = false);

/// Writes features (and labels, when given) as CSV with columns f0..f{d-1}[,label].
void save_embeddings(const std::filesystem::path& path, const Matrix& features,
                     const Labels* labels = nullptr);

/// Path of the JSON label-map sidecar for an embedding file.
std::filesystem::path label_sidecar_path(const std::filesystem::path& csv_path);

/// Reads a single-column label CSV (header + one integer per line).
Labels load_label_column(const std::filesystem::path& path);
void save_label_column(const std::filesystem::path& path, const Labels& labels);

/// Epoch-based minibatch index sampler; every epoch is a fresh permutation.
class BatchSampler {
 public:
  BatchSampler(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed);

  /// Next batch; the final batch of an epoch may be shorter.
  std::vector<std::size_t> next_batch();

  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch_size() const noexcept { return batch_size_; }

 private:
  void reshuffle();

  Rng rng_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

double accuracy(const Labels& predicted, const Labels& truth);

}  // namespace pct
