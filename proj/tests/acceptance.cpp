// One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <set>
#include <sstream>
#include <string>

#include "l2g/checkpoint.hpp"
#include "l2g/commands.hpp"
#include "l2g/eval.hpp"
#include "l2g/gradcheck.hpp"
#include "l2g/training.hpp"
#include "l2g/viz.hpp"
#include "test_util.hpp"

using namespace l2g;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

Verdict autodiff_gradcheck() {
  const auto start = std::chrono::steady_clock::now();
  GradcheckReport r = check_ops(1);
  r.merge(check_mlp(1));
  const double s = seconds_since(start);
  double worst = 0;
  bool ok = true;
  for (const auto& c : r.checks) {
    if (c.group == "ops" || c.group == "mlp") {
      worst = std::max(worst, c.error);
      ok = ok && c.error <= 1e-6;
    }
  }
  return {ok && s < 5.0, std::to_string(r.checks.size()) + " checks, " +
                             fmt("max rel err %.2e (<= 1e-6), %.2f s (< 5 s)", worst, s)};
}

Verdict bilevel_gradient() {
  const auto start = std::chrono::steady_clock::now();
  const GradcheckReport r = check_bilevel(1);
  const double s = seconds_since(start);
  const double err = r.max_error("bilevel");
  return {r.passed() && err <= 1e-4 && s < 10.0,
          fmt("max rel err %.2e (<= 1e-4), %.2f s (< 10 s)", err, s)};
}

Verdict closed_form() {
  const GradcheckReport r = check_closed_form();
  return {r.passed() && r.max_error("closed_form") <= 1e-10,
          fmt("max abs err %.2e (<= 1e-10)", r.max_error("closed_form"))};
}

Verdict mode_equivalences() {
  const GradcheckReport r = check_mode_equivalences(1);
  std::string names;
  for (const auto& f : r.failures()) names += " " + f.name;
  return {r.passed() && !r.checks.empty(),
          std::to_string(r.checks.size()) + " bit-exact comparisons" + (names.empty() ? "" : ", failing:" + names)};
}

Verdict sampler_disjointness() {
  SyntheticSpec spec;
  spec.num_classes = 10;
  spec.instances_per_class = 10;
  Rng data_rng(5);
  const Dataset d = gen_synthetic(spec, data_rng);
  Rng rng(6);
  std::size_t overlaps = 0;
  for (int i = 0; i < 10000; ++i) {
    const TaskPair p = sample_disjoint_pair(d, 5, 1, 2, rng);
    const auto& a = p.first().source_labels();
    std::set<std::string> first(a.begin(), a.end());
    for (const auto& l : p.second().source_labels()) overlaps += first.count(l);
  }
  return {overlaps == 0, std::to_string(overlaps) + " intersections over 10000 pairs"};
}

Verdict loss_oracles() {
  // Proto: queries at the origin, prototypes on the unit circle.
  const std::size_t c = 6, queries = 4;
  std::vector<double> protos;
  for (std::size_t k = 0; k < c; ++k) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(c);
    protos.push_back(std::cos(a));
    protos.push_back(std::sin(a));
  }
  const std::vector<std::size_t> labels{0, 2, 5, 3};
  const double proto = proto_loss({Tensor({c, 2}, protos)}, Tensor::zeros({queries, 2}), labels).item();
  const double proto_err = std::abs(proto / queries - std::log(static_cast<double>(c)));

  const Model m = make_model(HeadKind::relation, 3, {4}, {5});
  Rng rng(7);
  Parameters p = init_parameters(m, rng);
  for (auto& [name, t] : p) {
    if (name.starts_with("relation.")) t = Tensor::zeros(t.shape());
  }
  SyntheticSpec spec;
  spec.feature_dim = 3;
  spec.num_classes = 10;
  Rng data_rng(8);
  const Episode e = sample_episode(gen_synthetic(spec, data_rng), 5, 2, 3, rng);
  const double pairs = 5.0 * 15.0;
  const double rel_err = std::abs(episode_loss(m, p, e).item() - 0.25 * pairs);
  return {proto_err <= 1e-12 && rel_err <= 1e-12,
          fmt("|proto/query - log C| = %.1e, |relation - 0.25 P| = %.1e (<= 1e-12)", proto_err, rel_err)};
}

// Fixed synthetic benchmark: 40 train / 10 val / 20 test classes, D = 16,
// separation 6 with unit noise.
constexpr double kEpisodicThreshold = 0.9793;

Verdict synthetic_end_to_end() {
  const auto start = std::chrono::steady_clock::now();
  SyntheticSpec spec;
  spec.num_classes = 70;
  spec.feature_dim = 16;
  spec.class_separation = 6.0;
  spec.noise_std = 1.0;
  Rng data_rng(1000);
  const DatasetSplit split = split_classes(gen_synthetic(spec, data_rng), {4.0 / 7, 1.0 / 7, 2.0 / 7}, 1000);
  if (split.train.num_classes() != 40 || split.test.num_classes() != 20) {
    return {false, "unexpected split sizes"};
  }
  Protocol protocol;
  auto run = [&](TrainMode mode) {
    TrainerConfig cfg;
    cfg.mode = mode;
    cfg.seed = 1;
    cfg.total_episodes = 2000;
    cfg.eval_interval = 0;
    const TrainResult r = train(cfg, split.train, nullptr);
    return run_protocol(r.model, r.state.params, split.test, protocol, 99).mean;
  };
  const double episodic = run(TrainMode::episodic);
  const double l2g = run(TrainMode::l2g);
  const double s = seconds_since(start);
  return {episodic > kEpisodicThreshold && l2g >= episodic - 0.02 && s < 600.0,
          fmt("episodic %.4f (> %.4f), l2g %.4f (>= episodic - 0.02), %.0f s (< 600 s)", episodic,
              kEpisodicThreshold, l2g, s)};
}

Verdict evaluation_protocol() {
  const std::vector<double> runs{0.4, 0.6};
  const auto [mean, half] = confidence_interval(runs);
  const bool ci_ok = std::abs(mean - 0.5) <= 1e-5 && std::abs(half - 0.196) <= 1e-5;

  SyntheticSpec spec;
  spec.num_classes = 12;
  Rng data_rng(9);
  const Dataset d = gen_synthetic(spec, data_rng);
  const Predictor chance = [](const Episode& e) {
    Rng rng = Rng(77).derive(std::bit_cast<std::uint64_t>(e.query_features()[0]));
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < e.query_count(); ++i) out.push_back(rng.index(e.way()));
    return out;
  };
  const double acc = evaluate(chance, d, 5, 1, 15, 600, Rng(10));
  const double bound = 4.0 * std::sqrt(0.25 / (600.0 * 5 * 15));
  const bool chance_ok = std::abs(acc - 0.2) <= bound;
  return {ci_ok && chance_ok,
          fmt("CI 0.5 +- %.5f (0.19600 to 1e-5); chance accuracy %.4f (0.2 +- %.4f)", half, acc, bound)};
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "l2g");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) std::fprintf(stderr, "l2g exited %d: %s\n", code, err.str().c_str());
  return code;
}

Verdict determinism() {
  test::TempDir dir("acceptance_det");
  test::spit(dir / "run.cfg",
             "mode = l2g\nway = 5\nshot = 1\nquery = 5\nmeta_batch = 3\ntotal_episodes = 20\neval_interval = 10\n"
             "val_episodes = 20\nembed_dims = 16,8\nseed = 12\nsynthetic.num_classes = 40\n");
  const bool ran = cli({"train", (dir / "run.cfg").string(), "--run-dir", (dir / "a").string()}) == 0 &&
                   cli({"train", (dir / "run.cfg").string(), "--run-dir", (dir / "b").string()}) == 0 &&
                   cli({"--threads", "3", "train", (dir / "run.cfg").string(), "--run-dir", (dir / "c").string()}) == 0;
  if (!ran) return {false, "training failed"};
  std::size_t compared = 0, differing = 0;
  for (const char* f : {"log.csv", "ckpt_00000010.ckpt", "ckpt_00000020.ckpt", "final.ckpt"}) {
    const std::string a = test::slurp(dir / "a" / f);
    for (const char* other : {"b", "c"}) {
      ++compared;
      if (a.empty() || a != test::slurp(dir / other / f)) ++differing;
    }
  }
  return {differing == 0, std::to_string(compared) + " file comparisons (rerun and --threads 3), " +
                              std::to_string(differing) + " differ"};
}

Verdict artifacts() {
  test::TempDir dir("acceptance_art");
  std::vector<std::string> problems;

  SyntheticSpec spec;
  Rng rng(13);
  const Dataset d = gen_synthetic(spec, rng);
  save_dataset(d, dir / "d.l2gd");
  const Dataset back = load_dataset(dir / "d.l2gd");
  if (!(back == d) || encode_dataset(back) != test::slurp(dir / "d.l2gd")) problems.push_back("dataset");

  test::spit(dir / "run.cfg",
             "mode = l2g\nway = 5\nshot = 2\nquery = 3\nmeta_batch = 2\ntotal_episodes = 6\neval_interval = 3\n"
             "val_episodes = 5\nembed_dims = 16,8\nseed = 14\nsynthetic.num_classes = 40\n");
  if (cli({"train", (dir / "run.cfg").string(), "--run-dir", (dir / "run").string()}) != 0) {
    return {false, "training failed"};
  }
  const std::string ckpt_bytes = test::slurp(dir / "run" / "final.ckpt");
  const TensorMap tensors = load_checkpoint(dir / "run" / "final.ckpt");
  save_checkpoint(state_to_tensors(state_from_tensors(tensors)), dir / "again.ckpt");
  if (test::slurp(dir / "again.ckpt") != ckpt_bytes) problems.push_back("checkpoint");

  if (cli({"plot", "convergence", "--run-dir", (dir / "run").string()}) != 0 ||
      cli({"--seed", "3", "plot", "embeddings", "--config", (dir / "run" / "config.txt").string(), "--checkpoint",
           (dir / "run" / "final.ckpt").string(), "--data", (dir / "run" / "data" / "test.l2gd").string()}) != 0) {
    return {false, "plotting failed"};
  }
  std::string counts;
  try {
    const std::string conv = test::slurp(dir / "run" / "convergence.svg");
    const std::string emb = test::slurp(dir / "run" / "embeddings.svg");
    const std::size_t lines = test::count_elements(conv, "polyline");
    const std::size_t stars = test::count_elements(emb, "polygon");
    const std::size_t dots = test::count_elements(emb, "circle");
    // Two loss series; 5-way 2-shot supports and 5 x 3 queries.
    if (lines != 2 || stars != 10 || dots != 15) problems.push_back("svg marker counts");
    counts = ", svg polylines " + std::to_string(lines) + "/2, stars " + std::to_string(stars) + "/10, circles " +
             std::to_string(dots) + "/15";
  } catch (const std::exception& e) {
    problems.push_back(std::string("svg xml: ") + e.what());
  }
  std::string detail = problems.empty() ? "dataset and checkpoint round-trip bit-exactly" : "failed:";
  for (const auto& p : problems) detail += " " + p;
  return {problems.empty(), detail + counts};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Verdict()>> criteria[] = {
      {"autodiff gradcheck", autodiff_gradcheck},
      {"bilevel exact meta-gradient", bilevel_gradient},
      {"closed-form bilevel oracle", closed_form},
      {"mode equivalences", mode_equivalences},
      {"sampler disjointness", sampler_disjointness},
      {"loss oracles", loss_oracles},
      {"synthetic end-to-end", synthetic_end_to_end},
      {"evaluation protocol", evaluation_protocol},
      {"determinism", determinism},
      {"artifacts", artifacts},
  };
  int failed = 0;
  int index = 1;
  for (const auto& [name, check] : criteria) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    std::printf("%s %d %s: %s\n", v.pass ? "PASS" : "FAIL", index++, name, v.detail.c_str());
    std::fflush(stdout);
    failed += !v.pass;
  }
  return failed == 0 ? 0 : 1;
}
