#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "pct/train.hpp"

namespace pct {

/// Invalid or unknown configuration entries.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Everything one `pct train` / `pct adapt` invocation needs.
///
/// Text form is one `key = value` per line; `#` starts a comment. Keys are the
/// field names below plus the TrainConfig fields (sinkhorn options are
/// sinkhorn_epsilon, sinkhorn_max_iter, sinkhorn_tol; hidden_dims is a comma
/// list). Unknown keys are rejected.
struct ExperimentConfig {
  TrainConfig train;
  /// "synthetic" generates the toy pair from data_seed; "files" reads CSVs.
  std::string data = "synthetic";
  std::uint64_t data_seed = 0;
  std::string source;
  std::string target;
  /// Optional single-column CSV of target labels, used only for evaluation.
  std::string target_labels;
  std::string label_col = "label";
  /// Sub-sampling of the first K/2 classes (1 disables).
  double subsample_source = 1.0;
  double subsample_target = 1.0;
  std::string out_dir;
  bool dump_transport = true;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&);
};

ExperimentConfig parse_config(const std::string& text);
std::string serialize_config(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Applies one `key=value` override.
void apply_override(ExperimentConfig& config, const std::string& assignment);

}  // namespace pct
