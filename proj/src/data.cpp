#include "pct/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "pct/error.hpp"

namespace pct {

LabeledDataset::LabeledDataset(Matrix features, Labels labels, std::size_t num_classes)
    : features_(std::move(features)), labels_(std::move(labels)), num_classes_(num_classes) {
  if (labels_.size() != features_.rows()) {
    throw std::invalid_argument("LabeledDataset: label count does not match row count");
  }
  if (features_.cols() == 0) throw std::invalid_argument("LabeledDataset: zero feature dimension");
  if (num_classes_ == 0) throw std::invalid_argument("LabeledDataset: zero classes");
  for (auto y : labels_)
    if (y >= num_classes_) throw std::invalid_argument("LabeledDataset: label out of range");
}

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes_, 0);
  for (auto y : labels_) ++counts[y];
  return counts;
}

UnlabeledDataset::UnlabeledDataset(Matrix features, std::optional<Labels> hidden_labels)
    : features_(std::move(features)), hidden_labels_(std::move(hidden_labels)) {
  if (hidden_labels_ && hidden_labels_->size() != features_.rows()) {
    throw std::invalid_argument("UnlabeledDataset: hidden label count does not match row count");
  }
}

Matrix synthetic_covariance() { return Matrix{{0.5, -0.3}, {-0.3, 0.5}}; }

namespace {

struct ClassDraw {
  std::array<double, 2> mean;
  std::size_t count;
};

std::pair<Matrix, Labels> draw_classes(Rng& rng, const std::vector<ClassDraw>& classes) {
  const Matrix cov = synthetic_covariance();
  std::size_t total = 0;
  for (const auto& c : classes) total += c.count;
  Matrix x(total, 2);
  Labels y;
  y.reserve(total);
  std::size_t row = 0;
  for (std::size_t k = 0; k < classes.size(); ++k) {
    const Matrix draws = gaussian_sample(rng, classes[k].mean, cov, classes[k].count);
    for (std::size_t i = 0; i < draws.rows(); ++i, ++row) {
      x(row, 0) = draws(i, 0);
      x(row, 1) = draws(i, 1);
      y.push_back(k);
    }
  }
  return {std::move(x), std::move(y)};
}

}  // namespace

std::pair<LabeledDataset, UnlabeledDataset> make_synthetic_pair(Rng& rng) {
  auto [xs, ys] = draw_classes(rng, {{{7.0, 5.5}, 250}, {{4.0, 3.5}, 50}});
  auto [xt, yt] = draw_classes(rng, {{{7.5, 3.5}, 50}, {{4.4, 5.0}, 250}});
  return {LabeledDataset(std::move(xs), std::move(ys), 2),
          UnlabeledDataset(std::move(xt), std::move(yt))};
}

LabeledDataset subsample_classes(const LabeledDataset& ds, double fraction, Rng& rng) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("subsample_classes: fraction must lie in (0, 1]");
  }
  const std::size_t k_reduced = ds.num_classes() / 2;
  std::vector<std::vector<std::size_t>> members(ds.num_classes());
  for (std::size_t i = 0; i < ds.size(); ++i) members[ds.labels()[i]].push_back(i);

  std::vector<std::size_t> keep;
  for (std::size_t k = 0; k < members.size(); ++k) {
    auto& idx = members[k];
    if (k < k_reduced) {
      const auto n_keep = static_cast<std::size_t>(
          std::ceil(fraction * static_cast<double>(idx.size()) - 1e-9));
      if (n_keep == 0) {
        throw InvalidState("subsample_classes: class " + std::to_string(k) + " would be empty");
      }
      rng.shuffle(idx);
      idx.resize(n_keep);
    } else if (idx.empty()) {
      throw InvalidState("subsample_classes: class " + std::to_string(k) + " is empty");
    }
    keep.insert(keep.end(), idx.begin(), idx.end());
  }
  rng.shuffle(keep);

  Labels labels;
  labels.reserve(keep.size());
  for (auto i : keep) labels.push_back(ds.labels()[i]);
  LabeledDataset out(ds.features().select_rows(keep), std::move(labels), ds.num_classes());
  out.set_label_names(ds.label_names());
  return out;
}

LabeledDataset concatenate(const std::vector<LabeledDataset>& parts) {
  if (parts.empty()) throw std::invalid_argument("concatenate: no datasets");
  const std::size_t d = parts.front().dim();
  const std::size_t k = parts.front().num_classes();
  std::size_t n = 0;
  for (const auto& p : parts) {
    if (p.dim() != d || p.num_classes() != k) {
      throw std::invalid_argument("concatenate: datasets disagree on dimension or classes");
    }
    n += p.size();
  }
  std::vector<double> data;
  data.reserve(n * d);
  Labels labels;
  labels.reserve(n);
  for (const auto& p : parts) {
    data.insert(data.end(), p.features().data().begin(), p.features().data().end());
    labels.insert(labels.end(), p.labels().begin(), p.labels().end());
  }
  LabeledDataset out(Matrix(n, d, std::move(data)), std::move(labels), k);
  out.set_label_names(parts.front().label_names());
  return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

bool parse_double(const std::string& text, double& out) {
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

bool parse_integer(const std::string& text, long long& out) {
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::ifstream open_for_read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string() + " for reading");
  return in;
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return out;
}

// Dense label map: integers sort numerically, anything else lexicographically.
std::vector<std::string> ordered_label_names(const std::vector<std::string>& raw) {
  std::vector<std::string> names(raw);
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  const bool all_int = std::all_of(names.begin(), names.end(), [](const std::string& s) {
    long long v;
    return parse_integer(s, v);
  });
  if (all_int) {
    std::sort(names.begin(), names.end(), [](const std::string& a, const std::string& b) {
      long long va = 0, vb = 0;
      parse_integer(a, va);
      parse_integer(b, vb);
      return va < vb;
    });
  }
  return names;
}

}  // namespace

std::filesystem::path label_sidecar_path(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p += ".labels.json";
  return p;
}

EmbeddingData load_embeddings(const std::filesystem::path& path, const EmbeddingSchema& schema,
                              bool write_sidecar) {
  auto in = open_for_read(path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing header", 1);
  std::vector<std::string> header = split_csv_line(line);
  for (auto& h : header) h = trim(h);

  auto column_of = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("column '" + name + "' not found in " + path.string());
    return static_cast<std::size_t>(it - header.begin());
  };

  std::optional<std::size_t> label_idx;
  if (schema.label_col) label_idx = column_of(*schema.label_col);

  std::vector<std::size_t> feature_idx;
  if (schema.feature_cols.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (!label_idx || c != *label_idx) feature_idx.push_back(c);
  } else {
    for (const auto& name : schema.feature_cols) feature_idx.push_back(column_of(name));
  }
  if (feature_idx.empty()) throw SchemaError("no feature columns in " + path.string());

  std::vector<double> data;
  std::vector<std::string> raw_labels;
  std::size_t line_no = 1;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw SchemaError("line " + std::to_string(line_no) + ": expected " +
                        std::to_string(header.size()) + " fields, found " +
                        std::to_string(fields.size()));
    }
    for (auto c : feature_idx) {
      double v;
      const std::string cell = trim(fields[c]);
      if (!parse_double(cell, v)) {
        throw ParseError("malformed number '" + cell + "' in column '" + header[c] + "'", line_no);
      }
      data.push_back(v);
    }
    if (label_idx) {
      std::string label = trim(fields[*label_idx]);
      if (label.empty()) throw ParseError("empty label", line_no);
      raw_labels.push_back(std::move(label));
    }
    ++rows;
  }

  Matrix features(rows, feature_idx.size(), std::move(data));
  if (!label_idx) return UnlabeledDataset(std::move(features));

  const auto sidecar = label_sidecar_path(path);
  std::vector<std::string> names;
  if (std::filesystem::exists(sidecar)) {
    std::ifstream sin(sidecar);
    const auto j = nlohmann::json::parse(sin);
    names = j.at("labels").get<std::vector<std::string>>();
  } else {
    names = ordered_label_names(raw_labels);
  }
  std::map<std::string, std::size_t> index;
  for (std::size_t k = 0; k < names.size(); ++k) index.emplace(names[k], k);

  Labels labels;
  labels.reserve(rows);
  for (std::size_t i = 0; i < raw_labels.size(); ++i) {
    const auto it = index.find(raw_labels[i]);
    if (it == index.end()) {
      throw SchemaError("label '" + raw_labels[i] + "' missing from " + sidecar.string());
    }
    labels.push_back(it->second);
  }
  if (write_sidecar && !std::filesystem::exists(sidecar)) {
    nlohmann::json j;
    j["labels"] = names;
    auto out = open_for_write(sidecar);
    out << j.dump(2) << '\n';
  }
  LabeledDataset ds(std::move(features), std::move(labels), names.size());
  ds.set_label_names(std::move(names));
  return ds;
}

void save_embeddings(const std::filesystem::path& path, const Matrix& features,
                     const Labels* labels) {
  if (labels && labels->size() != features.rows()) {
    throw std::invalid_argument("save_embeddings: label count does not match row count");
  }
  auto out = open_for_write(path);
  for (std::size_t c = 0; c < features.cols(); ++c) out << (c ? "," : "") << 'f' << c;
  if (labels) out << ",label";
  out << '\n';
  for (std::size_t r = 0; r < features.rows(); ++r) {
    for (std::size_t c = 0; c < features.cols(); ++c) {
      out << (c ? "," : "") << format_double(features(r, c));
    }
    if (labels) out << ',' << (*labels)[r];
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Labels load_label_column(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing header", 1);
  Labels labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string cell = trim(line);
    if (cell.empty()) continue;
    long long v;
    if (!parse_integer(cell, v) || v < 0) throw ParseError("malformed label '" + cell + "'", line_no);
    labels.push_back(static_cast<std::size_t>(v));
  }
  return labels;
}

void save_label_column(const std::filesystem::path& path, const Labels& labels) {
  auto out = open_for_write(path);
  out << "label\n";
  for (auto y : labels) out << y << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

// ---------------------------------------------------------------------------

BatchSampler::BatchSampler(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed)
    : rng_(seed), batch_size_(batch_size), order_(dataset_size) {
  if (dataset_size == 0) throw std::invalid_argument("BatchSampler: empty dataset");
  if (batch_size == 0) throw std::invalid_argument("BatchSampler: batch size must be positive");
  reshuffle();
}

void BatchSampler::reshuffle() {
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  rng_.shuffle(order_);
  cursor_ = 0;
}

std::vector<std::size_t> BatchSampler::next_batch() {
  if (cursor_ >= order_.size()) {
    reshuffle();
    ++epoch_;
  }
  const std::size_t end = std::min(cursor_ + batch_size_, order_.size());
  std::vector<std::size_t> batch(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(end));
  cursor_ = end;
  return batch;
}

double accuracy(const Labels& predicted, const Labels& truth) {
  if (predicted.size() != truth.size()) throw std::invalid_argument("accuracy: length mismatch");
  if (truth.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

}  // namespace pct
