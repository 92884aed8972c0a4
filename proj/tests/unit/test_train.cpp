#include <gtest/gtest.h>

#include <cmath>

#include "pct/train.hpp"

using namespace pct;

namespace {

struct Pair {
  LabeledDataset source;
  UnlabeledDataset target;
};

Pair synthetic(std::uint64_t seed) {
  Rng rng(seed);
  auto [s, t] = make_synthetic_pair(rng);
  return {std::move(s), std::move(t)};
}

TrainConfig quick(TrainMode mode, std::size_t iterations) {
  TrainConfig c;
  c.mode = mode;
  c.iterations = iterations;
  c.seed = 9;
  return c;
}

Labels labels_of(const LabeledDataset& d, std::span<const std::size_t> idx) {
  Labels y(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) y[i] = d.labels()[idx[i]];
  return y;
}

}  // namespace

TEST(LrSchedule, Values) {
  const TrainConfig c;
  EXPECT_DOUBLE_EQ(lr_at(c, 0), 0.01);
  EXPECT_NEAR(lr_at(c, 100), 0.01 * std::pow(1.02, -0.75), 1e-16);
  EXPECT_NEAR(lr_at(c, 100), 0.0098527, 5e-7);
  for (std::uint64_t it = 1; it < 50000; it += 113) EXPECT_LT(lr_at(c, it), lr_at(c, it - 1));
}

TEST(SgdStep, PlainSgd) {
  Vector p{1.0, -2.0}, v{0.0, 0.0};
  const Vector g{0.5, 3.0};
  sgd_step(p, v, g, 0.1, 0.0);
  EXPECT_DOUBLE_EQ(p[0], 1.0 - 0.05);
  EXPECT_DOUBLE_EQ(p[1], -2.0 - 0.3);
}

TEST(SgdStep, MomentumTwoSteps) {
  Vector p{0.0}, v{0.0};
  const Vector g{1.0};
  sgd_step(p, v, g, 1.0, 0.9);
  sgd_step(p, v, g, 1.0, 0.9);
  EXPECT_NEAR(p[0], -2.9, 1e-15);
}

TEST(SgdStep, ZeroGradientConverges) {
  Vector p{0.0}, v{1.0};
  const Vector g{0.0};
  double prev_step = 1.0;
  for (int i = 0; i < 400; ++i) {
    const double before = p[0];
    sgd_step(p, v, g, 1.0, 0.9);
    const double step = std::abs(p[0] - before);
    EXPECT_LE(step, prev_step);
    prev_step = step;
  }
  EXPECT_LT(prev_step, 1e-17);
  EXPECT_NEAR(p[0], -9.0, 1e-12);  // -sum 0.9^i, i >= 1
}

TEST(SgdStep, ShapeMismatchThrows) {
  Vector p{0.0, 1.0}, v{0.0};
  const Vector g{0.0, 0.0};
  EXPECT_THROW(sgd_step(p, v, g, 0.1, 0.9), std::invalid_argument);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.eta0 = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.target_batch = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.mode = TrainMode::pot;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.target_batch = 64;
  EXPECT_NO_THROW(c.validate());
}

TEST(TrainMode, StringRoundTrip) {
  for (TrainMode m : {TrainMode::standard, TrainMode::source_only, TrainMode::source_private,
                      TrainMode::pot, TrainMode::pot_sinkhorn})
    EXPECT_EQ(train_mode_from_string(to_string(m)), m);
  EXPECT_THROW(train_mode_from_string("bogus"), std::invalid_argument);
}

TEST(Train, DimensionMismatchThrowsBeforeStepping) {
  const Pair p = synthetic(0);
  const UnlabeledDataset wide(Matrix(10, 3, 1.0));
  EXPECT_THROW(train(quick(TrainMode::standard, 5), p.source, wide), std::invalid_argument);
}

TEST(Train, SourceOnlyFitsSource) {
  const Pair p = synthetic(0);
  const TrainResult r = train(quick(TrainMode::source_only, 2000), p.source, p.target);
  ASSERT_TRUE(r.log.back().source_accuracy);
  EXPECT_GT(*r.log.back().source_accuracy, 0.95);
  EXPECT_FALSE(r.log.back().loss_t_to_mu);
}

TEST(Train, DeterministicMetrics) {
  const Pair p = synthetic(1);
  TrainConfig c = quick(TrainMode::standard, 300);
  c.beta0 = 0.001;
  c.eval_interval = 50;
  const TrainResult a = train(c, p.source, p.target), b = train(c, p.source, p.target);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) EXPECT_EQ(to_json_line(a.log[i]), to_json_line(b.log[i]));
  EXPECT_EQ(a.model, b.model);
  c.seed = 10;
  EXPECT_NE(train(c, p.source, p.target).model, a.model);
}

TEST(Train, LossesStayFiniteOverTenThousandIterations) {
  const Pair p = synthetic(2);
  TrainConfig c = quick(TrainMode::standard, 10000);
  c.beta0 = 0.001;
  c.eval_interval = 500;
  const TrainResult r = train(c, p.source, p.target);
  for (const auto& rec : r.log) {
    for (const auto& v : {rec.loss_cls, rec.loss_t_to_mu, rec.loss_mu_to_t}) {
      ASSERT_TRUE(v);
      EXPECT_TRUE(std::isfinite(*v));
    }
  }
}

TEST(Trainer, SourcePrivateRejectsSourceBatch) {
  const Pair p = synthetic(3);
  Rng rng(3);
  TrainConfig c = quick(TrainMode::source_private, 1);
  Trainer t(c, init_model(c, 2, 2, rng));
  const Matrix xs = p.source.features();
  const Labels ys = p.source.labels();
  EXPECT_THROW(t.step(SourceBatch{xs, ys}, p.target.features()), std::invalid_argument);
  Trainer s(quick(TrainMode::standard, 1), t.model());
  EXPECT_THROW(s.step(std::nullopt, p.target.features()), std::invalid_argument);
}

TEST(Trainer, StopGradientKeepsPrototypeUpdatesClassificationOnly) {
  const Pair p = synthetic(4);
  for (bool stop : {true, false}) {
    TrainConfig c = quick(TrainMode::standard, 0);
    c.stop_grad_mu = stop;
    Rng rng(4);
    Trainer t(c, init_model(c, 2, 2, rng));
    BatchSampler ss(p.source.size(), 32, 1), ts(p.target.size(), 96, 2);
    double max_diff = 0.0;
    for (int it = 0; it < 200; ++it) {
      const auto si = ss.next_batch();
      const Matrix xs = p.source.features().select_rows(si);
      const Labels ys = labels_of(p.source, si);
      const Matrix xt = p.target.features().select_rows(ts.next_batch());
      Trainer cls_only = t;
      cls_only.set_mode(TrainMode::source_only);
      const StepReport ref = cls_only.step(SourceBatch{xs, ys}, xt);
      const StepReport got = t.step(SourceBatch{xs, ys}, xt);
      for (std::size_t i = 0; i < got.delta_mu.size(); ++i)
        max_diff = std::max(max_diff, std::abs(got.delta_mu.data()[i] - ref.delta_mu.data()[i]));
      for (std::size_t k = 0; k < got.delta_bias.size(); ++k)
        max_diff = std::max(max_diff, std::abs(got.delta_bias[k] - ref.delta_bias[k]));
    }
    if (stop)
      EXPECT_LE(max_diff, 1e-14);
    else
      EXPECT_GT(max_diff, 1e-10);
  }
}

TEST(AdaptSourcePrivate, FreezesPrototypesAndZeroIterationsIsNoOp) {
  const Pair p = synthetic(5);
  const TrainResult src = train(quick(TrainMode::source_only, 500), p.source, p.target);
  const Checkpoint ck = to_checkpoint(src.model, 500);

  const TrainResult none = adapt_source_private(quick(TrainMode::source_private, 0), ck, p.target);
  EXPECT_EQ(none.model, src.model);
  EXPECT_EQ(predict(none.model.prototypes, none.model.encoder, p.target.features()),
            predict(src.model.prototypes, src.model.encoder, p.target.features()));

  const TrainResult adapted = adapt_source_private(quick(TrainMode::source_private, 300), ck, p.target);
  EXPECT_EQ(adapted.model.prototypes, src.model.prototypes);
  EXPECT_NE(adapted.model.encoder, src.model.encoder);
  EXPECT_EQ(adapted.model.encoder.input_shift, src.model.encoder.input_shift);
  EXPECT_FALSE(adapted.log.back().source_accuracy);
}

TEST(Checkpoint, ModelRoundTrip) {
  Rng rng(6);
  const TrainConfig c;
  Model m = init_model(c, 2, 3, rng);
  fit_input_standardization(m.encoder, Matrix{{1, 2}, {3, 5}});
  EXPECT_EQ(from_checkpoint(to_checkpoint(m, 7)), m);
}

TEST(MetricsJson, FixedKeyOrderAndOptionalFields) {
  MetricsRecord r;
  r.iteration = 3;
  r.lr = 0.5;
  r.loss_cls = 1.25;
  r.proportions = {0.5, 0.5};
  const std::string line = to_json_line(r);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  EXPECT_LT(line.find("\"iteration\""), line.find("\"lr\""));
  EXPECT_NE(line.find("\"loss_cls\""), std::string::npos);
  EXPECT_EQ(line.find("\"sinkhorn_converged\""), std::string::npos);
}
