#include <gtest/gtest.h>

#include <chrono>
#include <regex>
#include <set>
#include <sstream>

#include "l2g/commands.hpp"
#include "l2g/errors.hpp"
#include "l2g/tasks.hpp"
#include "test_util.hpp"

using namespace l2g;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "l2g");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string tiny_train_config(const std::string& extra = "") {
  return "mode = l2g\n"
         "way = 5\nshot = 1\nquery = 2\n"
         "meta_batch = 1\n"
         "total_episodes = 4\neval_interval = 2\nval_episodes = 3\n"
         "embed_dims = 8,4\n"
         "seed = 3\n" +
         extra;
}

}  // namespace

TEST(GenData, FortyClassesAndStableBytes) {
  test::TempDir dir("cli_gen");
  const Outcome a = run({"--seed", "5", "gen-data", "--classes", "40", "--out", (dir / "a.l2gd").string()});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(load_dataset(dir / "a.l2gd").num_classes(), 40u);
  ASSERT_EQ(run({"--seed", "5", "gen-data", "--classes", "40", "--out", (dir / "b.l2gd").string()}).code, 0);
  EXPECT_EQ(test::slurp(dir / "a.l2gd"), test::slurp(dir / "b.l2gd"));
  // Refuses to overwrite without --force.
  EXPECT_EQ(run({"gen-data", "--out", (dir / "a.l2gd").string()}).code, 2);
  EXPECT_EQ(run({"--force", "gen-data", "--out", (dir / "a.l2gd").string()}).code, 0);
}

TEST(GenData, TooFewClassesIsAValidationError) {
  test::TempDir dir("cli_gen_bad");
  const Outcome r = run({"gen-data", "--classes", "1", "--out", (dir / "x.l2gd").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("num_classes"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(dir / "x.l2gd"));
}

TEST(GenData, SplitWritesThreeFiles) {
  test::TempDir dir("cli_split");
  ASSERT_EQ(run({"gen-data", "--classes", "30", "--split", "0.6,0.2,0.2", "--out", (dir / "d.l2gd").string()}).code,
            0);
  EXPECT_EQ(load_dataset(dir / "d_train.l2gd").num_classes(), 18u);
  EXPECT_EQ(load_dataset(dir / "d_val.l2gd").num_classes(), 6u);
  EXPECT_EQ(load_dataset(dir / "d_test.l2gd").num_classes(), 6u);
}

TEST(Train, TwoWayBoundaryAndRerunDeterminism) {
  test::TempDir dir("cli_train");
  ASSERT_EQ(run({"gen-data", "--classes", "10", "--out", (dir / "ten.l2gd").string()}).code, 0);
  ASSERT_EQ(run({"gen-data", "--classes", "9", "--max-way", "4", "--out", (dir / "nine.l2gd").string()}).code, 0);
  const std::string base = "mode = l2g\nway = 5\nshot = 1\nquery = 2\nmeta_batch = 1\ntotal_episodes = 4\n"
                           "eval_interval = 0\nembed_dims = 8,4\nseed = 3\n";
  test::spit(dir / "ten.cfg", base + "data.train = ten.l2gd\n");
  test::spit(dir / "nine.cfg", base + "data.train = nine.l2gd\n");

  const Outcome ok = run({"train", (dir / "ten.cfg").string(), "--run-dir", (dir / "r1").string()});
  ASSERT_EQ(ok.code, 0) << ok.err;
  EXPECT_TRUE(fs::exists(dir / "r1" / "final.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "r1" / "config.txt"));

  const Outcome bad = run({"train", (dir / "nine.cfg").string(), "--run-dir", (dir / "r2").string()});
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("10"), std::string::npos) << bad.err;
  EXPECT_FALSE(fs::exists(dir / "r2"));

  ASSERT_EQ(run({"train", (dir / "ten.cfg").string(), "--run-dir", (dir / "r3").string()}).code, 0);
  EXPECT_EQ(test::slurp(dir / "r1" / "log.csv"), test::slurp(dir / "r3" / "log.csv"));
  EXPECT_EQ(test::slurp(dir / "r1" / "final.ckpt"), test::slurp(dir / "r3" / "final.ckpt"));

  // The run directory is not overwritten without --force.
  EXPECT_EQ(run({"train", (dir / "ten.cfg").string(), "--run-dir", (dir / "r1").string()}).code, 2);
  EXPECT_EQ(run({"--force", "train", (dir / "ten.cfg").string(), "--run-dir", (dir / "r1").string()}).code, 0);
  EXPECT_EQ(test::slurp(dir / "r1" / "log.csv"), test::slurp(dir / "r3" / "log.csv"));
}

TEST(Train, SyntheticConfigWritesDataAndCheckpoints) {
  test::TempDir dir("cli_synth");
  test::spit(dir / "run.cfg", tiny_train_config("run_dir = out\nsynthetic.num_classes = 30\n"));
  const Outcome r = run({"--threads", "2", "train", (dir / "run.cfg").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"config.txt", "log.csv", "ckpt_00000002.ckpt", "ckpt_00000004.ckpt", "final.ckpt",
                        "data/train.l2gd", "data/val.l2gd", "data/test.l2gd"}) {
    EXPECT_TRUE(fs::exists(dir / "out" / f)) << f;
  }
}

TEST(Train, UnknownConfigKeyIsRejected) {
  test::TempDir dir("cli_badkey");
  test::spit(dir / "run.cfg", "mode = l2g\nlearning_rate = 0.1\n");
  const Outcome r = run({"train", (dir / "run.cfg").string(), "--run-dir", (dir / "r").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("learning_rate"), std::string::npos) << r.err;
}

TEST(Train, NumericAbortExitsThreeWithEpisode) {
  test::TempDir dir("cli_abort");
  test::spit(dir / "run.cfg",
             "mode = episodic\nway = 5\nquery = 2\noptimizer = sgd\nbeta = 1e150\ntotal_episodes = 5\n"
             "eval_interval = 0\nembed_dims = 8\nsynthetic.num_classes = 30\n");
  const Outcome r = run({"train", (dir / "run.cfg").string(), "--run-dir", (dir / "r").string()});
  EXPECT_EQ(r.code, 3);
  EXPECT_TRUE(std::regex_search(r.err, std::regex("episode [0-9]+"))) << r.err;
}

class TrainedRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new test::TempDir("cli_trained");
    test::spit(*dir_ / "run.cfg",
               tiny_train_config("run_dir = out\nsynthetic.num_classes = 60\nsynthetic.noise_std = 1e-9\n"));
    const Outcome r = run({"train", (*dir_ / "run.cfg").string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() { delete dir_; }

  static fs::path out() { return dir_->path() / "out"; }
  static std::string ckpt() { return (out() / "final.ckpt").string(); }
  static std::string test_data() { return (out() / "data" / "test.l2gd").string(); }
  static std::string cfg() { return (out() / "config.txt").string(); }

  static test::TempDir* dir_;
};

test::TempDir* TrainedRun::dir_ = nullptr;

TEST_F(TrainedRun, EvalDefaultsToFiveRunsOfSixHundred) {
  const Outcome r = run({"eval", "--config", cfg(), "--checkpoint", ckpt(), "--data", test_data()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("600 episodes x 5 runs"), std::string::npos) << r.out;
  const std::string csv = test::slurp(out() / "report.csv");
  EXPECT_NE(csv.find("5,1,4,"), std::string::npos);
  EXPECT_EQ(csv.find("5,1,5,"), std::string::npos);
}

TEST_F(TrainedRun, SingleRunHasZeroWidth) {
  const std::string prefix = (out() / "single").string();
  ASSERT_EQ(run({"eval", "--config", cfg(), "--checkpoint", ckpt(), "--data", test_data(), "--runs", "1",
                 "--episodes", "20", "--out", prefix})
                .code,
            0);
  EXPECT_NE(test::slurp(prefix + ".csv").find("5,1,ci_half_width,0.000000"), std::string::npos);
}

TEST_F(TrainedRun, GridHasNineCells) {
  const std::string prefix = (out() / "grid").string();
  const Outcome r = run({"eval", "--config", cfg(), "--checkpoint", ckpt(), "--data", test_data(), "--grid",
                         "--episodes", "5", "--runs", "2", "--query", "3", "--out", prefix});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = test::slurp(prefix + ".csv");
  std::size_t means = 0;
  for (std::size_t pos = 0; (pos = csv.find(",mean,", pos)) != std::string::npos; ++pos) ++means;
  EXPECT_EQ(means, 9u);
}

TEST_F(TrainedRun, ArchitectureMismatchListsShapes) {
  const Outcome r = run({"eval", "--config", cfg(), "--embed-dims", "8,5", "--checkpoint", ckpt(), "--data",
                         test_data(), "--episodes", "2", "--runs", "1"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("embed.1.weight: expected [8,5], found [8,4]"), std::string::npos) << r.err;
}

TEST_F(TrainedRun, ConvergencePlotIsValidSvg) {
  const Outcome r = run({"plot", "convergence", "--run-dir", out().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string svg = test::slurp(out() / "convergence.svg");
  EXPECT_TRUE(test::parses_as_xml(svg));
  EXPECT_EQ(test::count_elements(svg, "polyline"), 2u);
}

TEST_F(TrainedRun, TwoRowLogPlots) {
  const fs::path log = out() / "two.csv";
  test::spit(log, "episode,meta_loss,inner_loss,lr,val_accuracy\n0,1.5,,0.001,\n1,1.25,,0.001,0.5\n");
  ASSERT_EQ(run({"plot", "convergence", "--log", log.string(), "--series", "meta_loss,val_accuracy", "--out",
                 (out() / "two.svg").string()})
                .code,
            0);
  EXPECT_EQ(test::count_elements(test::slurp(out() / "two.svg"), "polyline"), 2u);
}

TEST_F(TrainedRun, EmbeddingsOfNoiselessDataGiveOneSpotPerClass) {
  const std::string svg_path = (out() / "emb.svg").string();
  const std::vector<std::string> args{"--seed", "4", "plot", "embeddings", "--config", cfg(), "--checkpoint",
                                      ckpt(), "--data", test_data(), "--shot", "3", "--out", svg_path};
  const Outcome r = run(args);
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string svg = test::slurp(svg_path);
  EXPECT_EQ(test::count_elements(svg, "polygon"), 15u);
  EXPECT_EQ(test::count_elements(svg, "circle"), 10u);
  std::set<std::string> spots;
  const std::regex star("<polygon points=\"([^\"]*)\"");
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), star); it != std::sregex_iterator(); ++it) {
    spots.insert((*it)[1]);
  }
  EXPECT_EQ(spots.size(), 5u);

  std::vector<std::string> again = args;
  again.back() = (out() / "emb2.svg").string();
  ASSERT_EQ(run(again).code, 0);
  EXPECT_EQ(test::slurp(out() / "emb2.svg"), svg);
}

TEST_F(TrainedRun, ExportEmbeddings) {
  const std::string path = (out() / "emb.csv").string();
  ASSERT_EQ(run({"export-embeddings", "--config", cfg(), "--checkpoint", ckpt(), "--data", test_data(), "--out",
                 path})
                .code,
            0);
  const std::string csv = test::slurp(path);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "label,row,e0,e1,e2,e3");
  const Dataset d = load_dataset(test_data());
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), d.instance_count() + 1);
}

TEST(Plot, MissingLogIsAnIoError) {
  EXPECT_EQ(run({"plot", "convergence", "--log", "/nonexistent/log.csv"}).code, 4);
}

TEST(Gradcheck, PassesQuicklyAndCatchesTheSignFlip) {
  const auto start = std::chrono::steady_clock::now();
  const Outcome ok = run({"gradcheck"});
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_EQ(ok.code, 0) << ok.out << ok.err;
  EXPECT_LT(seconds, 30.0);
  EXPECT_NE(ok.out.find("bilevel"), std::string::npos);

  const Outcome flipped = run({"gradcheck", "--inject-sign-flip"});
  EXPECT_NE(flipped.code, 0);
  EXPECT_NE(flipped.out.find("failed: closed_form"), std::string::npos) << flipped.out;
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run({"no-such-command"}).code, 2);
  EXPECT_EQ(run({"eval"}).code, 2);
}
