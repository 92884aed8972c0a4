#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>

#include "pct/config.hpp"
#include "pct/ot.hpp"
#include "pct/proportions.hpp"
#include "pct/selfcheck.hpp"
#include "pct/train.hpp"
#include "pct/transport.hpp"

namespace py = pybind11;
using namespace pct;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IndexArray = py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const DoubleArray& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-d array");
  const auto r = static_cast<std::size_t>(a.shape(0)), c = static_cast<std::size_t>(a.shape(1));
  return Matrix(r, c, std::vector<double>(a.data(), a.data() + r * c));
}

Vector to_vector(const DoubleArray& a) {
  if (a.ndim() != 1) throw std::invalid_argument("expected a 1-d array");
  return Vector(a.data(), a.data() + a.shape(0));
}

Labels to_labels(const IndexArray& a) {
  if (a.ndim() != 1) throw std::invalid_argument("expected a 1-d label array");
  Labels y(static_cast<std::size_t>(a.shape(0)));
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (a.data()[i] < 0) throw std::invalid_argument("labels must be non-negative");
    y[i] = static_cast<std::size_t>(a.data()[i]);
  }
  return y;
}

py::array_t<double> from_matrix(const Matrix& m) {
  py::array_t<double> out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

py::array_t<double> from_vector(const Vector& v) {
  py::array_t<double> out(v.size());
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::array_t<std::int64_t> from_labels(const Labels& y) {
  py::array_t<std::int64_t> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out.mutable_data()[i] = static_cast<std::int64_t>(y[i]);
  return out;
}

TrainConfig config_from(const py::dict& overrides) {
  ExperimentConfig c;
  for (const auto& [k, v] : overrides) {
    std::string value = py::isinstance<py::bool_>(v) ? (v.cast<bool>() ? "true" : "false")
                                                     : py::str(v).cast<std::string>();
    apply_override(c, k.cast<std::string>() + "=" + value);
  }
  return c.train;
}

UnlabeledDataset target_from(const DoubleArray& x, const std::optional<IndexArray>& y) {
  return y ? UnlabeledDataset(to_matrix(x), to_labels(*y)) : UnlabeledDataset(to_matrix(x));
}

py::dict result_dict(const TrainResult& r) {
  py::list metrics;
  for (const auto& rec : r.log) metrics.append(to_json_line(rec));
  py::dict d;
  d["checkpoint"] = checkpoint_to_json(to_checkpoint(r.model, r.log.empty() ? 0 : r.log.back().iteration,
                                                     &r.proportions));
  d["metrics"] = metrics;
  d["proportions"] = from_vector(r.proportions.p);
  return d;
}

py::dict plan_dict(const TransportPlan& p) {
  py::dict d;
  d["plan"] = from_matrix(p.plan);
  d["marginal_violation"] = p.marginal_violation();
  return d;
}

}  // namespace

PYBIND11_MODULE(_pct, m) {
  m.doc() = "Prototype-oriented conditional transport core";

  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def(
      "make_synthetic_pair",
      [](std::uint64_t seed) {
        Rng rng(seed);
        const auto [s, t] = make_synthetic_pair(rng);
        return py::make_tuple(from_matrix(s.features()), from_labels(s.labels()), from_matrix(t.features()),
                              from_labels(*t.hidden_labels()));
      },
      py::arg("seed") = 0, "Toy two-class pair: (source_x, source_y, target_x, target_y).");

  m.def(
      "train",
      [](const DoubleArray& source_x, const IndexArray& source_y, const DoubleArray& target_x,
         const std::optional<IndexArray>& target_y, std::optional<std::size_t> num_classes,
         const py::dict& config) {
        const Labels y = to_labels(source_y);
        std::size_t k = num_classes.value_or(0);
        for (auto v : y) k = std::max(k, v + 1);
        const LabeledDataset source(to_matrix(source_x), y, k);
        const UnlabeledDataset target = target_from(target_x, target_y);
        const TrainConfig cfg = config_from(config);
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(cfg, source, target);
        }
        return result_dict(r);
      },
      py::arg("source_x"), py::arg("source_y"), py::arg("target_x"), py::arg("target_y") = py::none(),
      py::arg("num_classes") = py::none(), py::arg("config") = py::dict(),
      "Train from arrays. config holds key/value overrides in config-file syntax.");

  m.def(
      "adapt_source_private",
      [](const std::string& checkpoint, const DoubleArray& target_x, const std::optional<IndexArray>& target_y,
         const py::dict& config) {
        const Checkpoint ck = checkpoint_from_json(checkpoint);
        const UnlabeledDataset target = target_from(target_x, target_y);
        const TrainConfig cfg = config_from(config);
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = adapt_source_private(cfg, ck, target);
        }
        return result_dict(r);
      },
      py::arg("checkpoint"), py::arg("target_x"), py::arg("target_y") = py::none(), py::arg("config") = py::dict(),
      "Adapt a checkpoint's encoder to target data with the prototypes held fixed.");

  m.def(
      "encode",
      [](const std::string& checkpoint, const DoubleArray& x) {
        return from_matrix(encode_features(checkpoint_from_json(checkpoint).encoder, to_matrix(x)));
      },
      py::arg("checkpoint"), py::arg("x"));
  m.def(
      "predict",
      [](const std::string& checkpoint, const DoubleArray& x) {
        const Checkpoint ck = checkpoint_from_json(checkpoint);
        return from_labels(predict(ck.prototypes, ck.encoder, to_matrix(x)));
      },
      py::arg("checkpoint"), py::arg("x"));

  m.def(
      "cost_matrix",
      [](const std::string& kind, const DoubleArray& mu, const DoubleArray& f) {
        return from_matrix(cost_matrix(cost_kind_from_string(kind), to_matrix(mu), to_matrix(f)));
      },
      py::arg("kind"), py::arg("mu"), py::arg("features"), "K x M cost between prototype columns and feature rows.");
  m.def(
      "pi_target_to_proto",
      [](const DoubleArray& mu, const DoubleArray& f, const DoubleArray& prior) {
        return from_matrix(pi_target_to_proto(to_matrix(mu), to_matrix(f), to_vector(prior)).probs);
      },
      py::arg("mu"), py::arg("features"), py::arg("prior"));
  m.def(
      "pi_proto_to_target",
      [](const DoubleArray& mu, const DoubleArray& f) {
        return from_matrix(pi_proto_to_target(to_matrix(mu), to_matrix(f)).probs);
      },
      py::arg("mu"), py::arg("features"));
  m.def(
      "transport_loss",
      [](const std::string& direction, const DoubleArray& mu, const DoubleArray& f, const DoubleArray& prior,
         const std::string& kind) {
        const CostKind k = cost_kind_from_string(kind);
        TransportLoss l;
        if (direction == "t_to_mu")
          l = loss_t_to_mu(to_matrix(mu), to_matrix(f), to_vector(prior), k);
        else if (direction == "mu_to_t")
          l = loss_mu_to_t(to_matrix(mu), to_matrix(f), to_vector(prior), k);
        else
          throw std::invalid_argument("direction must be t_to_mu or mu_to_t");
        return py::make_tuple(l.loss, from_matrix(l.grad_features));
      },
      py::arg("direction"), py::arg("mu"), py::arg("features"), py::arg("prior"), py::arg("kind") = "cosine",
      "(loss, gradient with respect to the features).");

  m.def(
      "exact_ot",
      [](const DoubleArray& cost, const DoubleArray& a, const DoubleArray& b) {
        return plan_dict(exact_ot(to_matrix(cost), to_vector(a), to_vector(b)));
      },
      py::arg("cost"), py::arg("row_marginal"), py::arg("col_marginal"));
  m.def(
      "sinkhorn",
      [](const DoubleArray& cost, const DoubleArray& a, const DoubleArray& b, double epsilon, std::size_t max_iter,
         double tol) {
        const SinkhornResult r = sinkhorn(to_matrix(cost), to_vector(a), to_vector(b), {epsilon, max_iter, tol});
        py::dict d = plan_dict(r.plan);
        d["converged"] = r.converged;
        d["iterations"] = r.iterations;
        return d;
      },
      py::arg("cost"), py::arg("row_marginal"), py::arg("col_marginal"), py::arg("epsilon") = 0.05,
      py::arg("max_iter") = 10000, py::arg("tol") = 1e-6);
  m.def(
      "balanced_assignment",
      [](const DoubleArray& cost) { return from_labels(balanced_assignment(to_matrix(cost))); }, py::arg("cost"));

  m.def(
      "em_batch_estimate",
      [](const DoubleArray& prior, const DoubleArray& mu, const DoubleArray& f) {
        ClassProportions p;
        p.p = to_vector(prior);
        return from_vector(em_batch_estimate(p, to_matrix(mu), to_matrix(f)));
      },
      py::arg("prior"), py::arg("mu"), py::arg("features"));
  m.def(
      "l1_error", [](const DoubleArray& a, const DoubleArray& b) { return l1_error(to_vector(a), to_vector(b)); },
      py::arg("estimate"), py::arg("truth"));

  m.def(
      "selfcheck",
      [](std::uint64_t seed) {
        py::list out;
        for (const auto& r : run_selfcheck(seed)) {
          py::dict d;
          d["name"] = r.name;
          d["passed"] = r.passed;
          d["max_error"] = r.max_error;
          d["tolerance"] = r.tolerance;
          out.append(d);
        }
        return out;
      },
      py::arg("seed") = 7);
}
