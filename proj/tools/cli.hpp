#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "pct/config.hpp"

namespace pct::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,       // failed self-check or an I/O error while writing outputs
  kInvalidInput = 2,  // bad flags, config, data file or checkpoint
  kNumericError = 3,  // NaN/Inf during training
};

/// Entry point shared by the `pct` binary and tests. args excludes argv[0].
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Default output directory: $PCT_OUT_DIR, else "pct_out".
std::filesystem::path default_out_dir();

int cmd_gen_synth(std::uint64_t seed, const std::filesystem::path& out_dir, std::ostream& out);
int cmd_train(const ExperimentConfig& config, std::ostream& out, std::ostream& err);
int cmd_adapt(const ExperimentConfig& config, const std::filesystem::path& checkpoint,
              std::ostream& out, std::ostream& err);
int cmd_selfcheck(std::uint64_t seed, const std::string& inject_fault, std::ostream& out);
int cmd_estimate_proportions(const std::filesystem::path& checkpoint,
                             const std::filesystem::path& target,
                             const std::filesystem::path& target_labels, std::size_t max_iter,
                             double tol, std::ostream& out, std::ostream& err);

}  // namespace pct::cli
