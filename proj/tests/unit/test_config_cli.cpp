#include <gtest/gtest.h>

#include <sstream>

#include "cli.hpp"
#include "pct/config.hpp"
#include "test_util.hpp"

using namespace pct;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code;
  std::string out;
  std::string err;
};

RunResult run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

}  // namespace

TEST(Config, RoundTrip) {
  ExperimentConfig c;
  c.train.mode = TrainMode::pot_sinkhorn;
  c.train.cost = CostKind::exp_neg_inner;
  c.train.beta0 = 0.001;
  c.train.eta0 = 1.0 / 3.0;
  c.train.hidden_dims = {7, 5, 3};
  c.train.sinkhorn.epsilon = 0.01;
  c.train.stop_grad_mu = false;
  c.train.standardize_inputs = false;
  c.data = "files";
  c.source = "some dir/src.csv";
  c.subsample_source = 0.3;
  c.dump_transport = false;
  const ExperimentConfig back = parse_config(serialize_config(c));
  EXPECT_EQ(back, c);
  EXPECT_EQ(serialize_config(back), serialize_config(c));
}

TEST(Config, CommentsAndWhitespace) {
  const ExperimentConfig c = parse_config("# header\n  beta0 = 0.5   # inline\n\nmode=source_only\n");
  EXPECT_EQ(c.train.beta0, 0.5);
  EXPECT_EQ(c.train.mode, TrainMode::source_only);
}

TEST(Config, RejectsUnknownDuplicateAndMalformed) {
  EXPECT_THROW(parse_config("no_such_key = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("beta0 = 1\nbeta0 = 2\n"), ConfigError);
  EXPECT_THROW(parse_config("beta0 = abc\n"), ConfigError);
  EXPECT_THROW(parse_config("just a line\n"), ConfigError);
  EXPECT_THROW(parse_config("mode = sideways\n"), std::invalid_argument);
}

TEST(Config, Override) {
  ExperimentConfig c;
  apply_override(c, "iterations=17");
  apply_override(c, "cost=neg_log_prob");
  EXPECT_EQ(c.train.iterations, 17u);
  EXPECT_EQ(c.train.cost, CostKind::neg_log_prob);
  EXPECT_THROW(apply_override(c, "iterations"), ConfigError);
}

TEST(Cli, GenSynthIsByteIdenticalPerSeed) {
  test::TempDir dir;
  ASSERT_EQ(run_cli({"gen-synth", "--seed", "3", "--out", (dir.path / "a").string()}).code, 0);
  ASSERT_EQ(run_cli({"gen-synth", "--seed", "3", "--out", (dir.path / "b").string()}).code, 0);
  ASSERT_EQ(run_cli({"gen-synth", "--seed", "4", "--out", (dir.path / "c").string()}).code, 0);
  for (const char* f : {"source.csv", "target.csv", "target_labels.csv"}) {
    EXPECT_EQ(test::read_file(dir.path / "a" / f), test::read_file(dir.path / "b" / f)) << f;
  }
  EXPECT_NE(test::read_file(dir.path / "a" / "source.csv"), test::read_file(dir.path / "c" / "source.csv"));
  const std::string target = test::read_file(dir.path / "a" / "target.csv");
  EXPECT_EQ(std::count(target.begin(), target.end(), '\n'), 301);
}

TEST(Cli, TrainWritesOutputs) {
  test::TempDir dir;
  const RunResult r = run_cli({"train", "--iterations", "50", "--out", dir.path.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"config.txt", "metrics.jsonl", "checkpoint.json", "features_source.csv",
                        "features_target.csv", "prototypes.csv", "transport_target_to_proto.csv",
                        "transport_proto_to_target.csv"})
    EXPECT_TRUE(fs::exists(dir.path / f)) << f;
  const std::string metrics = test::read_file(dir.path / "metrics.jsonl");
  EXPECT_NE(metrics.find("\"target_accuracy\""), std::string::npos);
  // The written config reproduces the run.
  EXPECT_EQ(load_config(dir.path / "config.txt").train.iterations, 50u);
}

TEST(Cli, SinkhornModeLogsConvergence) {
  test::TempDir dir;
  const RunResult r = run_cli({"train", "--mode", "pot_sinkhorn", "--iterations", "3", "--out", dir.path.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string metrics = test::read_file(dir.path / "metrics.jsonl");
  EXPECT_NE(metrics.find("\"sinkhorn_converged\""), std::string::npos);
  EXPECT_NE(metrics.find("\"sinkhorn_iterations\""), std::string::npos);
}

TEST(Cli, AdaptWithZeroIterationsMatchesSourceModel) {
  test::TempDir dir;
  const fs::path src = dir.path / "src", ad = dir.path / "ad";
  ASSERT_EQ(run_cli({"train", "--mode", "source_only", "--iterations", "200", "--out", src.string()}).code, 0);
  const RunResult r = run_cli({"adapt", "--checkpoint", (src / "checkpoint.json").string(), "--iterations", "0",
                               "--out", ad.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(test::read_file(src / "features_target.csv"), test::read_file(ad / "features_target.csv"));
  EXPECT_EQ(test::read_file(src / "prototypes.csv"), test::read_file(ad / "prototypes.csv"));
}

TEST(Cli, ExitCodes) {
  test::TempDir dir;
  EXPECT_EQ(run_cli({"train", "--config", (dir.path / "missing.txt").string()}).code, 2);
  test::write_file(dir.path / "bad.txt", "bogus_key = 1\n");
  EXPECT_EQ(run_cli({"train", "--config", (dir.path / "bad.txt").string()}).code, 2);
  EXPECT_EQ(run_cli({"adapt", "--checkpoint", (dir.path / "none.json").string()}).code, 2);
  EXPECT_EQ(run_cli({"train", "--mode", "source_private"}).code, 2);
  EXPECT_EQ(run_cli({"no-such-command"}).code, 2);
  test::write_file(dir.path / "garbled.json", "{\"format\": 1");
  EXPECT_EQ(run_cli({"estimate-proportions", "--checkpoint", (dir.path / "garbled.json").string(), "--target",
                     (dir.path / "bad.txt").string()})
                .code,
            2);
}

TEST(Cli, SelfcheckPassesAndReportsInjectedFault) {
  const RunResult ok = run_cli({"selfcheck"});
  EXPECT_EQ(ok.code, 0) << ok.out;
  EXPECT_NE(ok.out.find("max relative gradient error"), std::string::npos);
  const RunResult bad = run_cli({"selfcheck", "--inject-fault", "grad_t_to_mu"});
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.out.find("FAIL grad_t_to_mu"), std::string::npos);
  EXPECT_NE(bad.out.find("failed: grad_t_to_mu"), std::string::npos);
}

TEST(Cli, EstimateProportions) {
  test::TempDir dir;
  ASSERT_EQ(run_cli({"gen-synth", "--seed", "9", "--out", dir.path.string()}).code, 0);
  ASSERT_EQ(run_cli({"train", "--seed", "9", "--set", "data_seed=9", "--iterations", "300", "--out",
                     (dir.path / "run").string()})
                .code,
            0);
  const RunResult r = run_cli({"estimate-proportions", "--checkpoint", (dir.path / "run" / "checkpoint.json").string(),
                               "--target", (dir.path / "target.csv").string(), "--target-labels",
                               (dir.path / "target_labels.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("l1_error"), std::string::npos);
}
