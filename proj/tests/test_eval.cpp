#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <sstream>

#include "l2g/errors.hpp"
#include "l2g/eval.hpp"

using namespace l2g;

namespace {

Dataset eval_dataset(double noise = 1.0, std::size_t classes = 12) {
  SyntheticSpec spec;
  spec.num_classes = classes;
  spec.noise_std = noise;
  spec.instances_per_class = 30;
  Rng rng(40);
  return gen_synthetic(spec, rng);
}

Predictor always_zero() {
  return [](const Episode& e) { return std::vector<std::size_t>(e.query_count(), 0); };
}

Predictor uniform_random(std::uint64_t seed) {
  // Keyed by the episode content so the predictor stays a pure function.
  return [seed](const Episode& e) {
    Rng rng = Rng(seed).derive(std::bit_cast<std::uint64_t>(e.query_features()[0]));
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < e.query_count(); ++i) out.push_back(rng.index(e.way()));
    return out;
  };
}

}  // namespace

TEST(ConfidenceInterval, Examples) {
  const std::vector<double> flat{0.5, 0.5, 0.5};
  const auto [m0, h0] = confidence_interval(flat);
  EXPECT_EQ(m0, 0.5);
  EXPECT_EQ(h0, 0.0);
  const std::vector<double> two{0.4, 0.6};
  const auto [m1, h1] = confidence_interval(two);
  EXPECT_NEAR(m1, 0.5, 1e-15);
  EXPECT_NEAR(h1, 0.196, 1e-5);
  const std::vector<double> one{0.73};
  const auto [m2, h2] = confidence_interval(one);
  EXPECT_EQ(m2, 0.73);
  EXPECT_EQ(h2, 0.0);
  EXPECT_THROW(confidence_interval(std::vector<double>{}), ContractViolation);
}

TEST(Evaluate, ConstantPredictorScoresChance) {
  const Dataset d = eval_dataset();
  EXPECT_NEAR(evaluate(always_zero(), d, 5, 1, 15, 50, Rng(1)), 0.2, 1e-12);
}

TEST(Evaluate, RandomPredictorIsNearChance) {
  const Dataset d = eval_dataset();
  const double acc = evaluate(uniform_random(3), d, 5, 1, 15, 600, Rng(2));
  EXPECT_NEAR(acc, 0.2, 4 * std::sqrt(0.25 / (600 * 5 * 15)));
}

TEST(Evaluate, NoiselessDataIsPerfectForProtoHead) {
  const Dataset d = eval_dataset(1e-9);
  const Model m = make_model(HeadKind::proto, d.feature_dim());
  Rng rng(4);
  const Parameters p = init_parameters(m, rng);
  EXPECT_EQ(evaluate(m, p, d, 5, 1, 15, 100, Rng(5)), 1.0);
}

TEST(Evaluate, RecordsRecountToTheSameAccuracy) {
  const Dataset d = eval_dataset();
  const Model m = make_model(HeadKind::proto, d.feature_dim(), {8});
  Rng rng(6);
  const Parameters p = init_parameters(m, rng);
  std::vector<EpisodeRecord> records;
  const double acc = evaluate(m, p, d, 5, 1, 15, 40, Rng(7), 1, &records);
  ASSERT_EQ(records.size(), 40u);
  double total = 0;
  for (const auto& r : records) {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < r.truth.size(); ++i) hit += r.predicted[i] == r.truth[i];
    total += static_cast<double>(hit) / static_cast<double>(r.truth.size());
  }
  EXPECT_NEAR(acc, total / 40, 1e-12);
}

TEST(Evaluate, ThreadCountDoesNotChangeResults) {
  const Dataset d = eval_dataset();
  const Model m = make_model(HeadKind::relation, d.feature_dim(), {8}, {4});
  Rng rng(8);
  const Parameters p = init_parameters(m, rng);
  const EvalReport a = run_protocol(m, p, d, {5, 1, 15, 30, 3}, 9, 1);
  const EvalReport b = run_protocol(m, p, d, {5, 1, 15, 30, 3}, 9, 4);
  EXPECT_EQ(a.run_accuracies, b.run_accuracies);
  EXPECT_EQ(a.ci_half_width, b.ci_half_width);
  const EvalReport c = run_protocol(m, p, d, {5, 1, 15, 30, 3}, 9, 1);
  EXPECT_EQ(a.run_accuracies, c.run_accuracies);
}

TEST(Evaluate, ParametersAreReadOnly) {
  const Dataset d = eval_dataset();
  const Model m = make_model(HeadKind::proto, d.feature_dim(), {8});
  Rng rng(10);
  const Parameters p = init_parameters(m, rng);
  std::map<std::string, std::vector<double>> before;
  for (const auto& [name, t] : p) before[name].assign(t.values().begin(), t.values().end());
  run_protocol(m, p, d, {5, 5, 15, 20, 2}, 11);
  for (const auto& [name, t] : p) {
    EXPECT_EQ(std::vector<double>(t.values().begin(), t.values().end()), before[name]) << name;
  }
}

TEST(Protocol, DefaultsAndRunSeeds) {
  const Protocol proto;
  EXPECT_EQ(proto.episodes, 600u);
  EXPECT_EQ(proto.runs, 5u);
  const Dataset d = eval_dataset();
  const EvalReport r = run_protocol(uniform_random(12), d, {5, 1, 15, 50, 5}, 13);
  ASSERT_EQ(r.run_accuracies.size(), 5u);
  const auto [mean, half] = confidence_interval(r.run_accuracies);
  EXPECT_EQ(r.mean, mean);
  EXPECT_EQ(r.ci_half_width, half);
  EXPECT_EQ(r.run_accuracies[2], evaluate(uniform_random(12), d, 5, 1, 15, 50, Rng(13).derive(2)));
}

TEST(Grid, NineCellsShotsOuterWaysInner) {
  const Dataset d = eval_dataset(1.0, 24);
  const auto reports = eval_grid(always_zero(), d, {1, 5, 10}, {5, 7, 10}, 5, 100, 2, 14);
  ASSERT_EQ(reports.size(), 9u);
  std::size_t i = 0;
  for (std::size_t shot : {1u, 5u, 10u}) {
    for (std::size_t way : {5u, 7u, 10u}) {
      const EvalReport& r = reports[i++];
      EXPECT_EQ(r.protocol.shot, shot);
      EXPECT_EQ(r.protocol.way, way);
      EXPECT_NEAR(r.mean, 1.0 / static_cast<double>(way), 1e-12);
    }
  }
}

TEST(Grid, ChanceOracleWithinBinomialBound) {
  const Dataset d = eval_dataset(1.0, 24);
  const std::size_t episodes = 100, queries = 5;
  const auto reports = eval_grid(uniform_random(15), d, {1, 5}, {5, 10}, queries, episodes, 1, 16);
  for (const auto& r : reports) {
    const double p = 1.0 / static_cast<double>(r.protocol.way);
    const double n = static_cast<double>(episodes * queries * r.protocol.way);
    EXPECT_NEAR(r.mean, p, 3 * std::sqrt(p * (1 - p) / n)) << r.protocol.way << "-way " << r.protocol.shot << "-shot";
  }
}

TEST(Grid, SingletonGridEqualsProtocol) {
  const Dataset d = eval_dataset();
  const Model m = make_model(HeadKind::proto, d.feature_dim(), {8});
  Rng rng(17);
  const Parameters p = init_parameters(m, rng);
  const auto grid = eval_grid(m, p, d, {1}, {5}, 15, 30, 2, 18);
  ASSERT_EQ(grid.size(), 1u);
  EXPECT_EQ(grid[0].run_accuracies, run_protocol(m, p, d, {5, 1, 15, 30, 2}, 18).run_accuracies);
}

TEST(Report, CsvLayout) {
  EvalReport r;
  r.protocol = {5, 1, 15, 600, 2};
  r.run_accuracies = {0.4, 0.6};
  std::tie(r.mean, r.ci_half_width) = confidence_interval(r.run_accuracies);
  const std::string csv = report_csv({r});
  std::istringstream in(csv);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 5u);
  EXPECT_EQ(lines[0], "way,shot,run,accuracy");
  EXPECT_EQ(lines[1].substr(0, 8), "5,1,0,0.");
  EXPECT_EQ(lines[3].substr(0, 11), "5,1,mean,0.");
  EXPECT_EQ(lines[4].substr(0, 19), "5,1,ci_half_width,0");
  EXPECT_NE(report_text({r}).find("5-way 1-shot"), std::string::npos) << report_text({r});
}
