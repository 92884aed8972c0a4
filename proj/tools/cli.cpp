#include "cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>

#include "pct/error.hpp"
#include "pct/selfcheck.hpp"

namespace pct::cli {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string fmt_vector(const Vector& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
  return s + "]";
}

struct Data {
  LabeledDataset source;
  UnlabeledDataset target;
};

UnlabeledDataset load_target(const fs::path& path, const fs::path& labels_path) {
  auto loaded = load_embeddings(path, EmbeddingSchema{{}, std::nullopt});
  auto* target = std::get_if<UnlabeledDataset>(&loaded);
  if (!target) throw ConfigError("target file " + path.string() + " did not load as unlabeled");
  if (labels_path.empty()) return std::move(*target);
  Labels labels = load_label_column(labels_path);
  if (labels.size() != target->size()) {
    throw ConfigError("target labels " + labels_path.string() + " has " +
                      std::to_string(labels.size()) + " rows, target has " +
                      std::to_string(target->size()));
  }
  return UnlabeledDataset(target->features(), std::move(labels));
}

Data load_data(const ExperimentConfig& c) {
  Data d;
  if (c.data == "synthetic") {
    Rng rng(c.data_seed);
    std::tie(d.source, d.target) = make_synthetic_pair(rng);
  } else {
    if (c.source.empty() || c.target.empty()) {
      throw ConfigError("data = files needs both 'source' and 'target' paths");
    }
    auto loaded = load_embeddings(c.source, EmbeddingSchema{{}, c.label_col}, true);
    auto* source = std::get_if<LabeledDataset>(&loaded);
    if (!source) throw ConfigError("source file " + c.source + " has no label column");
    d.source = std::move(*source);
    d.target = load_target(c.target, c.target_labels);
  }
  // Sub-sampling draws from its own stream so the data themselves do not move.
  Rng sub_rng(c.data_seed ^ 0x5eed5eed5eed5eedULL);
  if (c.subsample_source != 1.0) {
    if (!(c.subsample_source > 0.0 && c.subsample_source <= 1.0)) {
      throw ConfigError("subsample_source must lie in (0, 1]");
    }
    d.source = subsample_classes(d.source, c.subsample_source, sub_rng);
  }
  if (c.subsample_target != 1.0) {
    if (!(c.subsample_target > 0.0 && c.subsample_target <= 1.0)) {
      throw ConfigError("subsample_target must lie in (0, 1]");
    }
    if (!d.target.hidden_labels()) {
      throw ConfigError("subsample_target needs target labels to know the classes");
    }
    LabeledDataset t(d.target.features(), *d.target.hidden_labels(), d.source.num_classes());
    t = subsample_classes(t, c.subsample_target, sub_rng);
    d.target = UnlabeledDataset(t.features(), t.labels());
  }
  return d;
}

fs::path resolve_out_dir(const ExperimentConfig& c) {
  return c.out_dir.empty() ? default_out_dir() : fs::path(c.out_dir);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void save_prototypes(const fs::path& path, const Prototypes& protos) {
  std::string text;
  for (std::size_t i = 0; i < protos.dim(); ++i) text += "f" + std::to_string(i) + ",";
  text += "bias\n";
  for (std::size_t k = 0; k < protos.num_classes(); ++k) {
    for (std::size_t i = 0; i < protos.dim(); ++i) text += fmt(protos.mu(i, k)) + ",";
    text += fmt(protos.bias[k]) + "\n";
  }
  write_text(path, text);
}

void write_outputs(const fs::path& dir, const ExperimentConfig& config, const TrainResult& result,
                   std::uint64_t iteration, const LabeledDataset* source,
                   const UnlabeledDataset& target) {
  fs::create_directories(dir);
  write_text(dir / "config.txt", serialize_config(config));
  std::string metrics;
  for (const auto& rec : result.log) metrics += to_json_line(rec) + "\n";
  write_text(dir / "metrics.jsonl", metrics);
  save_checkpoint(dir / "checkpoint.json", to_checkpoint(result.model, iteration, &result.proportions));

  const Model& m = result.model;
  if (source) {
    save_embeddings(dir / "features_source.csv", encode_features(m.encoder, source->features()),
                    &source->labels());
  }
  const Matrix ft = encode_features(m.encoder, target.features());
  save_embeddings(dir / "features_target.csv", ft,
                  target.hidden_labels() ? &*target.hidden_labels() : nullptr);
  save_prototypes(dir / "prototypes.csv", m.prototypes);
  if (config.dump_transport) {
    save_cond_dist_csv(dir / "transport_target_to_proto.csv",
                       pi_target_to_proto(m.prototypes.mu, ft, result.proportions.p));
    save_cond_dist_csv(dir / "transport_proto_to_target.csv",
                       pi_proto_to_target(m.prototypes.mu, ft));
  }
}

void print_summary(std::ostream& out, const TrainResult& result, const fs::path& dir) {
  const MetricsRecord& last = result.log.back();
  out << "iteration " << last.iteration;
  if (last.source_accuracy) out << "  source_accuracy " << fmt(*last.source_accuracy);
  if (last.target_accuracy) out << "  target_accuracy " << fmt(*last.target_accuracy);
  out << "  proportions " << fmt_vector(last.proportions);
  if (last.proportion_l1) out << "  proportion_l1 " << fmt(*last.proportion_l1);
  out << "\nwrote " << dir.string() << "\n";
}

// Maps library exceptions onto exit codes.
template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kNumericError;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kInvalidInput;
  } catch (const SchemaError& e) {
    err << "error: " << e.what() << "\n";
    return kInvalidInput;
  } catch (const InvalidState& e) {
    err << "error: " << e.what() << "\n";
    return kInvalidInput;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kInvalidInput;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace

fs::path default_out_dir() {
  if (const char* env = std::getenv("PCT_OUT_DIR"); env && *env) return env;
  return "pct_out";
}

int cmd_gen_synth(std::uint64_t seed, const fs::path& out_dir, std::ostream& out) {
  Rng rng(seed);
  const auto [source, target] = make_synthetic_pair(rng);
  fs::create_directories(out_dir);
  save_embeddings(out_dir / "source.csv", source.features(), &source.labels());
  save_embeddings(out_dir / "target.csv", target.features());
  save_label_column(out_dir / "target_labels.csv", *target.hidden_labels());
  out << "wrote " << source.size() << " source and " << target.size() << " target rows to "
      << out_dir.string() << "\n";
  return kOk;
}

int cmd_train(const ExperimentConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    config.train.validate();
    if (config.train.mode == TrainMode::source_private) {
      throw ConfigError("mode source_private runs through `pct adapt`");
    }
    const Data data = load_data(config);
    const TrainResult result = train(config.train, data.source, data.target);
    const fs::path dir = resolve_out_dir(config);
    write_outputs(dir, config, result, config.train.iterations, &data.source, data.target);
    print_summary(out, result, dir);
    return int(kOk);
  });
}

int cmd_adapt(const ExperimentConfig& config, const fs::path& checkpoint, std::ostream& out,
              std::ostream& err) {
  return guarded(err, [&] {
    if (!fs::exists(checkpoint)) throw ConfigError("checkpoint not found: " + checkpoint.string());
    const Checkpoint ckpt = load_checkpoint(checkpoint);
    // Only the target side is needed; the source is never loaded.
    UnlabeledDataset target;
    if (config.data == "synthetic") {
      Rng rng(config.data_seed);
      target = make_synthetic_pair(rng).second;
    } else {
      if (config.target.empty()) throw ConfigError("adapt needs a target file");
      target = load_target(config.target, config.target_labels);
    }
    ExperimentConfig resolved = config;
    resolved.train.mode = TrainMode::source_private;
    const TrainResult result = adapt_source_private(resolved.train, ckpt, target);
    const fs::path dir = resolve_out_dir(config);
    write_outputs(dir, resolved, result, ckpt.iteration + config.train.iterations, nullptr,
                  target);
    print_summary(out, result, dir);
    return int(kOk);
  });
}

int cmd_selfcheck(std::uint64_t seed, const std::string& inject_fault, std::ostream& out) {
  const auto names = selfcheck_names();
  if (!inject_fault.empty() && std::find(names.begin(), names.end(), inject_fault) == names.end()) {
    out << "unknown check '" << inject_fault << "'\n";
    return kInvalidInput;
  }
  std::vector<std::string> failed;
  double worst_grad = 0.0;
  for (const CheckResult& r : run_selfcheck(seed, inject_fault)) {
    out << (r.passed ? "PASS " : "FAIL ") << std::left << std::setw(22) << r.name << r.detail
        << "\n";
    if (r.name.rfind("grad_", 0) == 0) worst_grad = std::max(worst_grad, r.max_error);
    if (!r.passed) failed.push_back(r.name);
  }
  out << "max relative gradient error " << worst_grad << "\n";
  if (failed.empty()) {
    out << "all checks passed\n";
    return kOk;
  }
  out << "failed:";
  for (const auto& f : failed) out << " " << f;
  out << "\n";
  return kFailure;
}

int cmd_estimate_proportions(const fs::path& checkpoint, const fs::path& target_path,
                             const fs::path& target_labels, std::size_t max_iter, double tol,
                             std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (!fs::exists(checkpoint)) throw ConfigError("checkpoint not found: " + checkpoint.string());
    const Model model = from_checkpoint(load_checkpoint(checkpoint));
    const UnlabeledDataset target = load_target(target_path, target_labels);
    const Matrix f = encode_features(model.encoder, target.features());
    // Full-batch EM: each estimate replaces the prior outright.
    ClassProportions props = init_uniform(model.prototypes.num_classes(), 0.0);
    std::size_t it = 0;
    double change = 0.0;
    while (it < max_iter) {
      const Vector next = em_batch_estimate(props, model.prototypes.mu, f);
      change = l1_error(next, props.p);
      props.p = next;
      ++it;
      if (change <= tol) break;
    }
    out << "proportions " << fmt_vector(props.p) << "\n";
    out << "iterations " << it << "  last_change " << fmt(change) << "\n";
    if (target.hidden_labels()) {
      const Vector truth = label_proportions(*target.hidden_labels(), props.num_classes());
      out << "true_proportions " << fmt_vector(truth) << "\n";
      out << "l1_error " << fmt(l1_error(props.p, truth)) << "\n";
    }
    return int(kOk);
  });
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Prototype-oriented conditional transport for domain adaptation", "pct"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::string out_dir;
  auto* gen = app.add_subcommand("gen-synth", "Write the 2-D Gaussian source/target pair as CSV");
  gen->add_option("--seed", seed, "Data seed");
  gen->add_option("--out", out_dir, "Output directory (default $PCT_OUT_DIR or pct_out)");

  // train and adapt share the config plumbing
  std::string config_path, checkpoint, target, target_labels, mode, cost;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed_flag, iterations_flag;
  std::optional<double> beta0_flag;
  auto add_config_flags = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "Output directory (overrides out_dir)");
    sub->add_option("--set", overrides, "Override a config key, e.g. --set beta0=0.001");
    sub->add_option("--seed", seed_flag, "Training seed");
    sub->add_option("--iterations", iterations_flag, "Iteration count");
    sub->add_option("--beta0", beta0_flag, "Initial proportion blend rate");
    sub->add_option("--cost", cost, "cosine | exp_neg_inner | neg_log_prob");
  };
  auto* tr = app.add_subcommand("train", "Train a model and write metrics, checkpoint and dumps");
  add_config_flags(tr);
  tr->add_option("--mode", mode, "standard | source_only | pot | pot_sinkhorn");

  auto* ad = app.add_subcommand("adapt", "Source-private adaptation of a trained checkpoint");
  add_config_flags(ad);
  ad->add_option("--checkpoint", checkpoint, "Source model checkpoint")->required();
  ad->add_option("--target", target, "Target features CSV (default: config data)");
  ad->add_option("--target-labels", target_labels, "Target labels CSV, evaluation only");

  std::string inject;
  std::uint64_t check_seed = 7;
  auto* sc = app.add_subcommand("selfcheck", "Run gradient, normalization and oracle checks");
  sc->add_option("--seed", check_seed, "Seed for the random instances");
  sc->add_option("--inject-fault", inject, "Corrupt the named check (test hook)");

  std::size_t em_iter = 1000;
  double em_tol = 1e-10;
  auto* ep = app.add_subcommand("estimate-proportions", "Full-batch EM on a checkpoint + target");
  ep->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  ep->add_option("--target", target, "Target features CSV")->required();
  ep->add_option("--target-labels", target_labels, "Target labels CSV");
  ep->add_option("--max-iter", em_iter, "EM iteration cap");
  ep->add_option("--tol", em_tol, "Stop when the L1 change falls below this");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInvalidInput;
  }

  auto build_config = [&]() {
    ExperimentConfig c = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
    for (const auto& o : overrides) apply_override(c, o);
    if (seed_flag) c.train.seed = *seed_flag;
    if (iterations_flag) c.train.iterations = *iterations_flag;
    if (beta0_flag) c.train.beta0 = *beta0_flag;
    if (!cost.empty()) apply_override(c, "cost=" + cost);
    if (!mode.empty()) apply_override(c, "mode=" + mode);
    if (!out_dir.empty()) c.out_dir = out_dir;
    if (!target.empty()) {
      c.data = "files";
      c.target = target;
    }
    if (!target_labels.empty()) c.target_labels = target_labels;
    return c;
  };

  if (*gen) {
    return guarded(err, [&] {
      return cmd_gen_synth(seed, out_dir.empty() ? default_out_dir() : fs::path(out_dir), out);
    });
  }
  if (*tr || *ad) {
    ExperimentConfig config;
    try {
      config = build_config();
    } catch (const std::exception& e) {
      err << "invalid config: " << e.what() << "\n";
      return kInvalidInput;
    }
    return *tr ? cmd_train(config, out, err) : cmd_adapt(config, checkpoint, out, err);
  }
  if (*sc) return cmd_selfcheck(check_seed, inject, out);
  return cmd_estimate_proportions(checkpoint, target, target_labels, em_iter, em_tol, out, err);
}

}  // namespace pct::cli
