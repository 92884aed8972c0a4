#include "pct/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include "pct/model.hpp"
#include "pct/oracles.hpp"
#include "pct/ot.hpp"
#include "pct/proportions.hpp"
#include "pct/transport.hpp"

namespace pct {

namespace {

constexpr double kStep = 1e-5;
constexpr CostKind kAllCosts[] = {CostKind::cosine, CostKind::exp_neg_inner,
                                  CostKind::neg_log_prob};

std::size_t between(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.uniform_index(hi - lo + 1));
}

Matrix normal_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (auto& v : m.data()) v = scale * rng.normal();
  return m;
}

Vector random_simplex(Rng& rng, std::size_t k) {
  Vector p(k);
  double s = 0.0;
  for (auto& v : p) s += (v = 0.1 + rng.uniform());
  for (auto& v : p) v /= s;
  return p;
}

struct PairInstance {
  Matrix mu;
  Matrix features;
  Vector prior;
};

PairInstance random_pair(Rng& rng) {
  const std::size_t d = between(rng, 2, 6), k = between(rng, 1, 5), m = between(rng, 1, 10);
  return {normal_matrix(rng, d, k), normal_matrix(rng, m, d), random_simplex(rng, k)};
}

void corrupt_if(bool corrupt, Vector& analytic) {
  if (corrupt && !analytic.empty()) analytic[0] += 1e-2 * (1.0 + std::abs(analytic[0]));
}

CheckResult finish(CheckResult r) {
  r.passed = r.max_error <= r.tolerance;
  std::ostringstream os;
  os << "max error " << r.max_error << " (tolerance " << r.tolerance << ") over " << r.instances
     << " instances";
  if (!r.detail.empty()) os << "; " << r.detail;
  r.detail = os.str();
  return r;
}

// Gradient of loss(features) with respect to the flattened features.
double feature_grad_error(const Matrix& features, const std::function<double(const Matrix&)>& loss,
                          Vector analytic, bool corrupt) {
  corrupt_if(corrupt, analytic);
  const Vector numeric = finite_diff_grad(
      [&](std::span<const double> p) {
        return loss(Matrix(features.rows(), features.cols(), Vector(p.begin(), p.end())));
      },
      features.data(), kStep);
  return relative_error(analytic, numeric);
}

}  // namespace

CheckResult check_cls_gradients(const CheckOptions& opt) {
  Rng rng(opt.seed);
  CheckResult r{"grad_cls", false, 0.0, opt.tolerance, opt.instances, ""};
  for (std::size_t n = 0; n < opt.instances; ++n) {
    const std::size_t d_in = between(rng, 1, 4), hidden = between(rng, 1, 5);
    const std::size_t d_f = between(rng, 1, 6), k = between(rng, 1, 5), batch = between(rng, 1, 10);
    const std::size_t dims[] = {d_in, hidden, d_f};
    EncoderParams enc = init_encoder(dims, rng);
    for (auto& l : enc.layers)
      for (auto& b : l.bias) b = 0.1 * rng.normal();
    Prototypes protos{normal_matrix(rng, d_f, k), Vector(k)};
    for (auto& b : protos.bias) b = 0.5 * rng.normal();
    const Matrix x = normal_matrix(rng, batch, d_in, 2.0);
    Labels y(batch);
    for (auto& v : y) v = static_cast<std::size_t>(rng.uniform_index(k));

    const ClsGradients g = cls_loss_and_grads(protos, enc, x, y);
    Vector analytic = flatten(g.grad_encoder);
    analytic.insert(analytic.end(), g.grad_mu.data().begin(), g.grad_mu.data().end());
    analytic.insert(analytic.end(), g.grad_bias.begin(), g.grad_bias.end());
    corrupt_if(opt.corrupt, analytic);

    Vector params = flatten(enc);
    const Vector pflat = flatten(protos);
    const std::size_t n_enc = params.size();
    params.insert(params.end(), pflat.begin(), pflat.end());
    const Vector numeric = finite_diff_grad(
        [&](std::span<const double> p) {
          EncoderParams e = enc;
          Prototypes q = protos;
          unflatten(p.subspan(0, n_enc), e);
          unflatten(p.subspan(n_enc), q);
          return cls_loss_and_grads(q, e, x, y).loss;
        },
        params, kStep);
    r.max_error = std::max(r.max_error, relative_error(analytic, numeric));
  }
  return finish(r);
}

CheckResult check_t_to_mu_gradients(const CheckOptions& opt) {
  Rng rng(opt.seed + 1);
  CheckResult r{"grad_t_to_mu", false, 0.0, opt.tolerance, opt.instances, "all cost kinds"};
  for (std::size_t n = 0; n < opt.instances; ++n) {
    const PairInstance inst = random_pair(rng);
    for (CostKind kind : kAllCosts) {
      const TransportLoss tl = loss_t_to_mu(inst.mu, inst.features, inst.prior, kind);
      const double err = feature_grad_error(
          inst.features,
          [&](const Matrix& f) { return loss_t_to_mu(inst.mu, f, inst.prior, kind).loss; },
          tl.grad_features.data(), opt.corrupt);
      r.max_error = std::max(r.max_error, err);
    }
  }
  return finish(r);
}

CheckResult check_mu_to_t_gradients(const CheckOptions& opt) {
  Rng rng(opt.seed + 2);
  CheckResult r{"grad_mu_to_t", false, 0.0, opt.tolerance, opt.instances, "all cost kinds"};
  for (std::size_t n = 0; n < opt.instances; ++n) {
    const PairInstance inst = random_pair(rng);
    for (CostKind kind : kAllCosts) {
      const TransportLoss tl = loss_mu_to_t(inst.mu, inst.features, inst.prior, kind);
      const double err = feature_grad_error(
          inst.features,
          [&](const Matrix& f) { return loss_mu_to_t(inst.mu, f, inst.prior, kind).loss; },
          tl.grad_features.data(), opt.corrupt);
      r.max_error = std::max(r.max_error, err);
    }
  }
  return finish(r);
}

CheckResult check_pot_gradients(const CheckOptions& opt) {
  Rng rng(opt.seed + 3);
  CheckResult r{"grad_pot", false, 0.0, opt.tolerance, opt.instances,
                "exact and sinkhorn plans, all cost kinds"};
  for (std::size_t n = 0; n < opt.instances; ++n) {
    const PairInstance inst = random_pair(rng);
    for (CostKind kind : kAllCosts) {
      for (OtSolver solver : {OtSolver::exact, OtSolver::sinkhorn}) {
        const PotResult pot = pot_loss(inst.mu, inst.features, kind, solver);
        const Matrix plan = pot.plan.plan;
        const double err = feature_grad_error(
            inst.features,
            [&](const Matrix& f) {
              const Matrix c = cost_matrix(kind, inst.mu, f);
              double s = 0.0;
              for (std::size_t i = 0; i < c.size(); ++i) s += plan.data()[i] * c.data()[i];
              return s;
            },
            pot.grad_features.data(), opt.corrupt);
        r.max_error = std::max(r.max_error, err);
      }
    }
  }
  return finish(r);
}

CheckResult check_prototype_path_gradients(const CheckOptions& opt) {
  Rng rng(opt.seed + 4);
  CheckResult r{"grad_prototype_path", false, 0.0, opt.tolerance, opt.instances,
                "both transport directions, all cost kinds"};
  for (std::size_t n = 0; n < opt.instances; ++n) {
    const PairInstance inst = random_pair(rng);
    for (CostKind kind : kAllCosts) {
      auto total = [&](const Matrix& mu) {
        return t_to_mu_terms(mu, inst.features, inst.prior, kind).loss +
               mu_to_t_terms(mu, inst.features, inst.prior, kind).loss;
      };
      const TransportTerms a = t_to_mu_terms(inst.mu, inst.features, inst.prior, kind);
      const TransportTerms b = mu_to_t_terms(inst.mu, inst.features, inst.prior, kind);
      PairwiseGrad g = a.grad;
      add_inplace(g.d_similarity, b.grad.d_similarity);
      add_inplace(g.d_cost, b.grad.d_cost);
      Vector analytic = chain_to_prototypes(kind, inst.mu, inst.features, g).data();
      corrupt_if(opt.corrupt, analytic);
      const Vector numeric = finite_diff_grad(
          [&](std::span<const double> p) {
            return total(Matrix(inst.mu.rows(), inst.mu.cols(), Vector(p.begin(), p.end())));
          },
          inst.mu.data(), kStep);
      r.max_error = std::max(r.max_error, relative_error(analytic, numeric));
    }
  }
  return finish(r);
}

CheckResult check_normalization(const CheckOptions& opt) {
  Rng rng(opt.seed + 5);
  CheckResult r{"normalization", false, 0.0, opt.tolerance, opt.instances,
                "class_probs and both conditionals, |logit| up to 1e3"};
  auto row_error = [](const Matrix& p) {
    double worst = 0.0;
    for (std::size_t i = 0; i < p.rows(); ++i) {
      double s = 0.0;
      for (double v : p.row(i)) {
        if (!(v >= 0.0)) return std::numeric_limits<double>::infinity();
        s += v;
      }
      worst = std::max(worst, std::abs(s - 1.0));
    }
    return worst;
  };
  for (std::size_t n = 0; n < opt.instances; ++n) {
    const std::size_t d = between(rng, 1, 8), k = between(rng, 1, 6), m = between(rng, 1, 12);
    const Matrix mu = normal_matrix(rng, d, k);
    Matrix f = normal_matrix(rng, m, d);
    const double target_scale = std::pow(10.0, rng.uniform(-1.0, 3.0));
    double peak = 0.0;
    for (double v : similarity_matrix(mu, f).data()) peak = std::max(peak, std::abs(v));
    if (peak > 0.0)
      for (auto& v : f.data()) v *= target_scale / peak;
    Vector prior = random_simplex(rng, k);
    if (k > 1 && rng.uniform() < 0.2) {
      // a class with zero prior mass
      prior[rng.uniform_index(k)] = 0.0;
      double s = 0.0;
      for (double v : prior) s += v;
      for (auto& v : prior) v /= s;
    }
    Prototypes protos{mu, Vector(k)};
    for (auto& b : protos.bias) b = rng.normal();
    double err = row_error(class_probs(protos, f));
    err = std::max(err, row_error(pi_target_to_proto(mu, f, prior).probs));
    err = std::max(err, row_error(pi_proto_to_target(mu, f).probs));
    if (opt.corrupt) err += 1.0;
    r.max_error = std::max(r.max_error, err);
  }
  return finish(r);
}

CheckResult check_entropy_equivalence(const CheckOptions& opt) {
  Rng rng(opt.seed + 6);
  CheckResult r{"entropy_equivalence", false, 0.0, opt.tolerance, opt.instances, ""};
  for (std::size_t n = 0; n < opt.instances; ++n) {
    const std::size_t d = between(rng, 1, 6), k = between(rng, 1, 6), m = between(rng, 1, 12);
    const double scale = std::pow(10.0, rng.uniform(-1.0, 1.0));
    const Matrix mu = normal_matrix(rng, d, k, scale);
    const Matrix f = normal_matrix(rng, m, d);
    double err = std::abs(entropy_equivalence_loss(mu, f) - oracle::mean_shannon_entropy(mu, f));
    if (opt.corrupt) err += 1.0;
    r.max_error = std::max(r.max_error, err);
  }
  return finish(r);
}

CheckResult check_em_monotonicity(const CheckOptions& opt) {
  Rng rng(opt.seed + 7);
  CheckResult r{"em_monotonicity", false, 0.0, opt.tolerance, opt.instances, ""};
  for (std::size_t n = 0; n < opt.instances; ++n) {
    const std::size_t d = between(rng, 2, 6), k = between(rng, 2, 5), m = between(rng, 20, 60);
    const Matrix mu = normal_matrix(rng, d, k, 1.5);
    const Matrix f = normal_matrix(rng, m, d);
    ClassProportions props = init_uniform(k, 1.0);
    double ll = marginal_log_likelihood(props.p, mu, f);
    for (int it = 0; it < 25; ++it) {
      props.p = em_batch_estimate(props, mu, f);
      const double next = marginal_log_likelihood(props.p, mu, f);
      r.max_error = std::max(r.max_error, ll - next);
      ll = next;
    }
  }
  // Blended updates over a long run stay on the simplex.
  ClassProportions props = init_uniform(5, 0.5);
  double drift = 0.0;
  for (int it = 0; it < 10000; ++it) {
    props = em_update(props, random_simplex(rng, 5));
    double s = 0.0;
    for (double v : props.p) {
      if (v < 0.0) drift = std::numeric_limits<double>::infinity();
      s += v;
    }
    drift = std::max(drift, std::abs(s - 1.0));
  }
  std::ostringstream os;
  os << "simplex drift " << drift << " after 1e4 updates";
  r.detail = os.str();
  if (drift > 1e-12) r.max_error = std::max(r.max_error, std::numeric_limits<double>::infinity());
  if (opt.corrupt) r.max_error += 1.0;
  return finish(r);
}

CheckResult check_exact_ot(const CheckOptions& opt) {
  Rng rng(opt.seed + 8);
  CheckResult r{"exact_ot", false, 0.0, opt.tolerance, opt.instances,
                "4x4 enumeration and square integrality"};
  auto integrality_error = [](const TransportPlan& tp, double unit) {
    double worst = 0.0;
    for (double v : tp.plan.data()) worst = std::max(worst, std::min(std::abs(v), std::abs(v - unit)));
    return worst;
  };
  for (std::size_t n = 0; n < opt.instances; ++n) {
    Matrix cost(4, 4);
    for (auto& v : cost.data()) v = rng.uniform();
    const Vector u(4, 0.25);
    const TransportPlan tp = exact_ot(cost, u, u);
    double err = std::abs(tp.objective(cost) - oracle::min_permutation_cost(cost) / 4.0);
    err = std::max(err, integrality_error(tp, 0.25));
    err = std::max(err, tp.marginal_violation());

    const std::size_t k = between(rng, 2, 7);
    Matrix sq(k, k);
    for (auto& v : sq.data()) v = rng.uniform();
    const Vector w(k, 1.0 / static_cast<double>(k));
    const TransportPlan tq = exact_ot(sq, w, w);
    err = std::max(err, std::abs(tq.objective(sq) - oracle::min_permutation_cost(sq) / double(k)));
    err = std::max(err, integrality_error(tq, 1.0 / static_cast<double>(k)));
    if (opt.corrupt) err += 1.0;
    r.max_error = std::max(r.max_error, err);
  }
  return finish(r);
}

CheckResult check_balanced_assignment(const CheckOptions& opt) {
  Rng rng(opt.seed + 9);
  CheckResult r{"balanced_assignment", false, 0.0, opt.tolerance, opt.instances, "K=3, M=6"};
  for (std::size_t n = 0; n < opt.instances; ++n) {
    Matrix cost(3, 6);
    for (auto& v : cost.data()) v = rng.uniform();
    const Labels a = balanced_assignment(cost);
    std::vector<std::size_t> load(3, 0);
    double total = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
      ++load[a[j]];
      total += cost(a[j], j);
    }
    double err = std::abs(total - oracle::brute_force_balanced(cost).cost);
    if (load != std::vector<std::size_t>(3, 2)) err = std::numeric_limits<double>::infinity();
    if (opt.corrupt) err += 1.0;
    r.max_error = std::max(r.max_error, err);
  }
  return finish(r);
}

CheckResult check_sinkhorn(const CheckOptions& opt) {
  Rng rng(opt.seed + 10);
  CheckResult r{"sinkhorn", false, 0.0, opt.tolerance, opt.instances,
                "marginals at convergence, objective >= exact"};
  SinkhornOptions so;
  so.tol = opt.tolerance;
  for (std::size_t n = 0; n < opt.instances; ++n) {
    const std::size_t k = between(rng, 1, 6), m = between(rng, 1, 10);
    Matrix cost(k, m);
    for (auto& v : cost.data()) v = rng.uniform(0.0, 2.0);
    const Vector a = random_simplex(rng, k);
    const Vector b = random_simplex(rng, m);
    const SinkhornResult s = sinkhorn(cost, a, b, so);
    const TransportPlan exact = exact_ot(cost, a, b);
    double err = s.converged ? s.plan.marginal_violation() : std::numeric_limits<double>::infinity();
    // A plan off its marginals by L1 error v can undercut the exact optimum
    // by at most v * max cost.
    double top = 0.0;
    for (double v : cost.data()) top = std::max(top, v);
    const double gap = exact.objective(cost) - s.plan.objective(cost);
    if (gap > s.violation * top + 1e-12) err = std::numeric_limits<double>::infinity();
    if (opt.corrupt) err += 1.0;
    r.max_error = std::max(r.max_error, err);
  }
  return finish(r);
}

std::vector<std::string> selfcheck_names() {
  return {"grad_cls",      "grad_t_to_mu",        "grad_mu_to_t",    "grad_pot",
          "grad_prototype_path", "normalization", "entropy_equivalence", "em_monotonicity",
          "exact_ot",      "balanced_assignment", "sinkhorn"};
}

std::vector<CheckResult> run_selfcheck(std::uint64_t seed, const std::string& corrupt) {
  auto opts = [&](const char* name, std::size_t instances, double tol) {
    CheckOptions o;
    o.seed = seed;
    o.instances = instances;
    o.tolerance = tol;
    o.corrupt = corrupt == name;
    return o;
  };
  return {
      check_cls_gradients(opts("grad_cls", 50, 1e-4)),
      check_t_to_mu_gradients(opts("grad_t_to_mu", 50, 1e-4)),
      check_mu_to_t_gradients(opts("grad_mu_to_t", 50, 1e-4)),
      check_pot_gradients(opts("grad_pot", 50, 1e-4)),
      check_prototype_path_gradients(opts("grad_prototype_path", 50, 1e-4)),
      check_normalization(opts("normalization", 1000, 1e-12)),
      check_entropy_equivalence(opts("entropy_equivalence", 100, 1e-10)),
      check_em_monotonicity(opts("em_monotonicity", 50, 1e-10)),
      check_exact_ot(opts("exact_ot", 100, 1e-9)),
      check_balanced_assignment(opts("balanced_assignment", 50, 1e-9)),
      check_sinkhorn(opts("sinkhorn", 100, 1e-6)),
  };
}

}  // namespace pct
