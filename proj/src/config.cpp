#include "pct/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <vector>

namespace pct {

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return a.train == b.train && a.data == b.data && a.data_seed == b.data_seed &&
         a.source == b.source && a.target == b.target && a.target_labels == b.target_labels &&
         a.label_col == b.label_col && a.subsample_source == b.subsample_source &&
         a.subsample_target == b.subsample_target && a.out_dir == b.out_dir &&
         a.dump_transport == b.dump_transport;
}

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError("'" + key + "' expects true/false, got '" + v + "'");
}

std::string from_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string from_bool(bool v) { return v ? "true" : "false"; }

struct Field {
  const char* key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define PCT_DOUBLE(name, member)                                                          \
  Field {                                                                                 \
    name, [](ExperimentConfig& c, const std::string& v) { c.member = to_double(name, v); }, \
        [](const ExperimentConfig& c) { return from_double(c.member); }                   \
  }
#define PCT_COUNT(name, member)                                                   \
  Field {                                                                         \
    name,                                                                         \
        [](ExperimentConfig& c, const std::string& v) {                           \
          c.member = static_cast<decltype(c.member)>(to_u64(name, v));            \
        },                                                                        \
        [](const ExperimentConfig& c) { return std::to_string(c.member); }        \
  }
#define PCT_BOOL(name, member)                                                          \
  Field {                                                                               \
    name, [](ExperimentConfig& c, const std::string& v) { c.member = to_bool(name, v); }, \
        [](const ExperimentConfig& c) { return from_bool(c.member); }                   \
  }
#define PCT_STRING(name, member)                                               \
  Field {                                                                      \
    name, [](ExperimentConfig& c, const std::string& v) { c.member = v; },     \
        [](const ExperimentConfig& c) { return c.member; }                     \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"mode",
            [](ExperimentConfig& c, const std::string& v) {
              try {
                c.train.mode = train_mode_from_string(v);
              } catch (const std::invalid_argument& e) {
                throw ConfigError(e.what());
              }
            },
            [](const ExperimentConfig& c) { return to_string(c.train.mode); }},
      Field{"cost",
            [](ExperimentConfig& c, const std::string& v) {
              try {
                c.train.cost = cost_kind_from_string(v);
              } catch (const std::invalid_argument& e) {
                throw ConfigError(e.what());
              }
            },
            [](const ExperimentConfig& c) { return to_string(c.train.cost); }},
      PCT_COUNT("iterations", train.iterations),
      PCT_COUNT("seed", train.seed),
      PCT_DOUBLE("eta0", train.eta0),
      PCT_DOUBLE("gamma", train.gamma),
      PCT_DOUBLE("alpha", train.alpha),
      PCT_DOUBLE("momentum", train.momentum),
      PCT_COUNT("source_batch", train.source_batch),
      PCT_COUNT("target_batch", train.target_batch),
      PCT_DOUBLE("beta0", train.beta0),
      PCT_BOOL("stop_grad_mu", train.stop_grad_mu),
      PCT_BOOL("use_t_to_mu", train.use_t_to_mu),
      PCT_BOOL("use_mu_to_t", train.use_mu_to_t),
      PCT_DOUBLE("classifier_lr_multiplier", train.classifier_lr_multiplier),
      PCT_COUNT("eval_interval", train.eval_interval),
      PCT_DOUBLE("sinkhorn_epsilon", train.sinkhorn.epsilon),
      PCT_COUNT("sinkhorn_max_iter", train.sinkhorn.max_iter),
      PCT_DOUBLE("sinkhorn_tol", train.sinkhorn.tol),
      Field{"hidden_dims",
            [](ExperimentConfig& c, const std::string& v) {
              c.train.hidden_dims.clear();
              std::stringstream ss(v);
              std::string item;
              while (std::getline(ss, item, ',')) {
                item = trim(item);
                if (!item.empty()) c.train.hidden_dims.push_back(to_u64("hidden_dims", item));
              }
            },
            [](const ExperimentConfig& c) {
              std::string out;
              for (std::size_t i = 0; i < c.train.hidden_dims.size(); ++i)
                out += (i ? "," : "") + std::to_string(c.train.hidden_dims[i]);
              return out;
            }},
      PCT_COUNT("feature_dim", train.feature_dim),
      PCT_BOOL("standardize_inputs", train.standardize_inputs),
      Field{"data",
            [](ExperimentConfig& c, const std::string& v) {
              if (v != "synthetic" && v != "files") {
                throw ConfigError("'data' must be synthetic or files, got '" + v + "'");
              }
              c.data = v;
            },
            [](const ExperimentConfig& c) { return c.data; }},
      PCT_COUNT("data_seed", data_seed),
      PCT_STRING("source", source),
      PCT_STRING("target", target),
      PCT_STRING("target_labels", target_labels),
      PCT_STRING("label_col", label_col),
      PCT_DOUBLE("subsample_source", subsample_source),
      PCT_DOUBLE("subsample_target", subsample_target),
      PCT_STRING("out_dir", out_dir),
      PCT_BOOL("dump_transport", dump_transport),
  };
  return table;
}

#undef PCT_DOUBLE
#undef PCT_COUNT
#undef PCT_BOOL
#undef PCT_STRING

const Field& field_for(const std::string& key) {
  for (const auto& f : fields())
    if (key == f.key) return f;
  throw ConfigError("unknown config key '" + key + "'");
}

void assign(ExperimentConfig& config, const std::string& line, std::size_t line_no) {
  const auto eq = line.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
  }
  const std::string key = trim(line.substr(0, eq));
  const std::string value = trim(line.substr(eq + 1));
  try {
    field_for(key).set(config, value);
  } catch (const ConfigError& e) {
    throw ConfigError(line_no ? "line " + std::to_string(line_no) + ": " + e.what() : e.what());
  }
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig config;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const std::string key = trim(line.substr(0, line.find('=')));
    if (!seen.insert(key).second) {
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    assign(config, line, line_no);
  }
  return config;
}

std::string serialize_config(const ExperimentConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(config) + "\n";
  return out;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void apply_override(ExperimentConfig& config, const std::string& assignment) {
  assign(config, assignment, 0);
}

}  // namespace pct
