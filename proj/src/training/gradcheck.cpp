#include "l2g/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "l2g/training.hpp"

namespace l2g {

namespace {

constexpr double kOpTolerance = 1e-6;
constexpr double kHvpTolerance = 1e-5;
constexpr double kBilevelTolerance = 1e-4;
constexpr double kClosedFormTolerance = 1e-10;
constexpr double kFdEps = 1e-6;

class Timer {
 public:
  Timer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

void record(GradcheckReport& report, std::string group, std::string name, double error, double tolerance) {
  report.checks.push_back({std::move(group), std::move(name), error, tolerance, error <= tolerance});
}

Tensor random_tensor(const Shape& shape, Rng& rng, bool away_from_zero = false) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  std::vector<double> v(n);
  for (double& x : v) {
    x = rng.normal();
    // Keeps every coordinate well clear of the relu kink.
    if (away_from_zero) x = std::copysign(0.2 + std::abs(x), x);
  }
  return Tensor(shape, std::move(v));
}

GradientMap random_like(const Parameters& params, Rng& rng) {
  GradientMap out;
  for (const auto& [name, p] : params) out.emplace(name, random_tensor(p.shape(), rng));
  return out;
}

using OpFn = std::function<Tensor(const std::vector<Tensor>&)>;

void check_op(GradcheckReport& report, const std::string& name, const std::vector<Shape>& shapes, const OpFn& fn,
              Rng& rng, bool away_from_zero = false) {
  Parameters inputs;
  std::vector<std::string> keys;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    keys.push_back("x" + std::to_string(i));
    inputs.emplace(keys.back(), random_tensor(shapes[i], rng, away_from_zero));
  }
  auto gather = [&](const Parameters& p) {
    std::vector<Tensor> xs;
    for (const auto& k : keys) xs.push_back(p.at(k));
    return xs;
  };
  // A random cotangent avoids accidental cancellation in sum-like outputs.
  const Tensor weights = random_tensor(fn(gather(inputs)).shape(), rng);
  auto loss = [&](const Parameters& p) { return sum_all(mul(fn(gather(p)), weights)); };

  Graph graph;
  const Parameters watched = graph.watch(inputs);
  const GradientMap analytic = grad(loss(watched), watched);
  const GradientMap numeric =
      finite_diff_grad([&](const Parameters& p) { return loss(p).item(); }, inputs, kFdEps);
  record(report, "ops", name, relative_error(analytic, numeric), kOpTolerance);
}

SyntheticSpec small_spec(std::size_t num_classes, std::size_t feature_dim) {
  SyntheticSpec spec;
  spec.num_classes = num_classes;
  spec.latent_dim = 3;
  spec.feature_dim = feature_dim;
  spec.class_separation = 3.0;
  spec.instances_per_class = 8;
  spec.max_way = num_classes / 2;
  return spec;
}

Parameters perturbed_init(const Model& model, Rng& rng) {
  // Nonzero biases so that every parameter influences the loss generically.
  Parameters params = init_parameters(model, rng);
  for (auto& [name, p] : params) {
    if (name.ends_with(".bias")) p = random_tensor(p.shape(), rng);
  }
  return params;
}

Parameters axpy(const Parameters& params, const GradientMap& dir, double step) {
  Parameters out;
  for (const auto& [name, p] : params) out.emplace(name, add(p, scale(dir.at(name), step)));
  return out;
}

GradientMap loss_grad(const Model& model, const Parameters& params, const Episode& episode) {
  Graph graph;
  const Parameters watched = graph.watch(params);
  return grad(episode_loss(model, watched, episode), watched);
}

double bit_mismatch(const Parameters& a, const Parameters& b) { return bit_equal(a, b) ? 0.0 : 1.0; }

}  // namespace

bool GradcheckReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckOutcome& c) { return c.passed; });
}

double GradcheckReport::max_error(std::string_view group) const {
  double m = 0.0;
  for (const auto& c : checks) {
    if (group.empty() || c.group == group) m = std::max(m, c.error);
  }
  return m;
}

std::vector<CheckOutcome> GradcheckReport::failures() const {
  std::vector<CheckOutcome> out;
  for (const auto& c : checks) {
    if (!c.passed) out.push_back(c);
  }
  return out;
}

void GradcheckReport::merge(const GradcheckReport& other) {
  checks.insert(checks.end(), other.checks.begin(), other.checks.end());
  seconds += other.seconds;
}

GradcheckReport check_ops(std::uint64_t seed) {
  Timer timer;
  GradcheckReport r;
  Rng rng = Rng(seed).derive(1);
  using V = std::vector<Tensor>;
  check_op(r, "add", {{3, 4}, {3, 4}}, [](const V& x) { return add(x[0], x[1]); }, rng);
  check_op(r, "sub", {{3, 4}, {3, 4}}, [](const V& x) { return sub(x[0], x[1]); }, rng);
  check_op(r, "mul_elementwise", {{3, 4}, {3, 4}}, [](const V& x) { return mul(x[0], x[1]); }, rng);
  check_op(r, "matmul", {{3, 4}, {4, 2}}, [](const V& x) { return matmul(x[0], x[1]); }, rng);
  check_op(r, "relu", {{3, 4}}, [](const V& x) { return relu(x[0]); }, rng, true);
  check_op(r, "sigmoid", {{3, 4}}, [](const V& x) { return sigmoid(x[0]); }, rng);
  check_op(r, "concat_last_axis", {{3, 2}, {3, 3}}, [](const V& x) { return concat_last_axis(x[0], x[1]); }, rng);
  check_op(r, "sum_all", {{3, 4}}, [](const V& x) { return sum_all(x[0]); }, rng);
  check_op(r, "mean_all", {{3, 4}}, [](const V& x) { return mean_all(x[0]); }, rng);
  check_op(r, "square", {{3, 4}}, [](const V& x) { return square(x[0]); }, rng);
  check_op(r, "negate", {{3, 4}}, [](const V& x) { return negate(x[0]); }, rng);
  check_op(r, "scale_by_constant", {{3, 4}}, [](const V& x) { return scale(x[0], -1.7); }, rng);
  check_op(r, "logsumexp_last_axis", {{3, 5}}, [](const V& x) { return logsumexp_last_axis(x[0]); }, rng);
  check_op(r, "sq_euclidean_rowwise", {{3, 4}, {5, 4}},
           [](const V& x) { return sq_euclidean_rowwise(x[0], x[1]); }, rng);
  check_op(r, "transpose", {{3, 4}}, [](const V& x) { return transpose(x[0]); }, rng);
  check_op(r, "slice_last_axis", {{3, 5}}, [](const V& x) { return slice_last_axis(x[0], 1, 3); }, rng);
  check_op(r, "broadcast_scalar", {{}}, [](const V& x) { return broadcast_scalar(x[0], {2, 3}); }, rng);
  check_op(r, "exp", {{3, 4}}, [](const V& x) { return exp(x[0]); }, rng);
  check_op(r, "sum_last_axis", {{3, 4}}, [](const V& x) { return sum_last_axis(x[0]); }, rng);
  check_op(r, "expand_last_axis", {{3}}, [](const V& x) { return expand_last_axis(x[0], 4); }, rng);
  check_op(r, "reshape", {{3, 4}}, [](const V& x) { return reshape(x[0], {2, 6}); }, rng);
  r.seconds = timer.seconds();
  return r;
}

GradcheckReport check_mlp(std::uint64_t seed) {
  Timer timer;
  GradcheckReport r;
  Rng data_rng = Rng(seed).derive(2);
  const Dataset data = gen_synthetic(small_spec(6, 6), data_rng);
  Rng rng = Rng(seed).derive(3);
  const Episode episode = sample_episode(data, 3, 2, 3, rng);

  for (HeadKind kind : {HeadKind::proto, HeadKind::relation}) {
    const Model model = make_model(kind, 6, {5, 4}, {3});
    const Parameters params = perturbed_init(model, rng);
    const std::string head(head_name(kind));

    const GradientMap analytic = loss_grad(model, params, episode);
    const GradientMap numeric = finite_diff_grad(
        [&](const Parameters& p) { return episode_loss(model, p, episode).item(); }, params, kFdEps);
    record(r, "mlp", head + " episode loss", relative_error(analytic, numeric), kOpTolerance);

    const GradientMap v = random_like(params, rng);
    Graph graph;
    const Parameters watched = graph.watch(params);
    const GradientMap hv = hvp(episode_loss(model, watched, episode), watched, v);
    const double eps = 1e-5;
    const GradientMap plus = loss_grad(model, axpy(params, v, eps), episode);
    const GradientMap minus = loss_grad(model, axpy(params, v, -eps), episode);
    GradientMap fd;
    for (const auto& [name, g] : plus) fd.emplace(name, scale(sub(g, minus.at(name)), 0.5 / eps));
    record(r, "hvp", head + " hessian-vector product", relative_error(hv, fd), kHvpTolerance);
  }
  r.seconds = timer.seconds();
  return r;
}

GradcheckReport check_bilevel(std::uint64_t seed) {
  Timer timer;
  GradcheckReport r;
  Rng data_rng = Rng(seed).derive(4);
  const Dataset data = gen_synthetic(small_spec(6, 6), data_rng);
  Rng rng = Rng(seed).derive(5);
  const TaskPair pair = sample_disjoint_pair(data, 3, 1, 2, rng);
  const double alpha = 0.1;

  const Model proto = make_model(HeadKind::proto, 6, {8, 4});
  const Model relation = make_model(HeadKind::relation, 6, {6, 4}, {3});
  for (const Model* model : {&proto, &relation}) {
    const Parameters params = perturbed_init(*model, rng);
    const std::string head(head_name(model->head.kind));
    const std::string size = " (" + std::to_string(parameter_count(params)) + " params)";

    auto meta_grad = [&](GradMode mode) {
      Graph graph;
      const Parameters watched = graph.watch(params);
      return grad(meta_loss(*model, watched, pair, alpha, mode), watched);
    };
    auto objective = [&](const Parameters& p) {
      Graph graph;
      return meta_loss(*model, graph.watch(p), pair, alpha, GradMode::exact).item();
    };
    const GradientMap exact = meta_grad(GradMode::exact);
    const GradientMap numeric = finite_diff_grad(objective, params, kFdEps);
    record(r, "bilevel", head + " exact meta-gradient" + size, relative_error(exact, numeric), kBilevelTolerance);

    // First order: the gradient of the outer loss taken at theta'.
    const GradientMap inner_g = loss_grad(*model, params, pair.first());
    const Parameters adapted = axpy(params, inner_g, -alpha);
    const GradientMap expected_fo = loss_grad(*model, adapted, pair.second());
    record(r, "bilevel", head + " first-order meta-gradient", relative_error(meta_grad(GradMode::first_order), expected_fo),
           1e-12);

    // inner_update against params minus alpha times a numeric gradient.
    Graph graph;
    const Parameters watched = graph.watch(params);
    const Parameters stepped = inner_update(watched, episode_loss(*model, watched, pair.first()), alpha, false);
    const GradientMap fd_inner = finite_diff_grad(
        [&](const Parameters& p) { return episode_loss(*model, p, pair.first()).item(); }, params, kFdEps);
    double worst = 0.0;
    for (const auto& [name, p] : params) {
      for (std::size_t i = 0; i < p.numel(); ++i) {
        const double want = p[i] - alpha * fd_inner.at(name)[i];
        worst = std::max(worst, std::abs(stepped.at(name)[i] - want));
      }
    }
    record(r, "bilevel", head + " inner update", worst, 1e-9);
  }
  r.seconds = timer.seconds();
  return r;
}

GradcheckReport check_closed_form() {
  Timer timer;
  GradcheckReport r;
  struct Point {
    double theta, target, alpha;
  };
  for (const Point& pt : {Point{1.0, 2.0, 0.1}, Point{1.5, 2.0, 0.1}, Point{-0.7, 0.3, 0.25}}) {
    const LossFunction inner = [](const Parameters& p) { return scale(square(p.at("theta")), 0.5); };
    const LossFunction outer = [&](const Parameters& p) {
      return scale(square(sub(p.at("theta"), Tensor::scalar(pt.target))), 0.5);
    };
    const double a = pt.alpha;
    const double want_exact = (1 - a) * ((1 - a) * pt.theta - pt.target);
    const double want_fo = (1 - a) * pt.theta - pt.target;
    char label[96];
    std::snprintf(label, sizeof label, "theta=%g t=%g alpha=%g", pt.theta, pt.target, pt.alpha);
    for (GradMode mode : {GradMode::exact, GradMode::first_order}) {
      Graph graph;
      const Parameters watched = graph.watch(Parameters{{"theta", Tensor::scalar(pt.theta)}});
      const Tensor obj = bilevel_objective(watched, inner, outer, a, mode);
      const double got = grad(obj, watched).at("theta").item();
      const double want = mode == GradMode::exact ? want_exact : want_fo;
      record(r, "closed_form", std::string(grad_mode_name(mode)) + " " + label, std::abs(got - want),
             kClosedFormTolerance);
    }
  }
  r.seconds = timer.seconds();
  return r;
}

GradcheckReport check_mode_equivalences(std::uint64_t seed) {
  Timer timer;
  GradcheckReport r;
  Rng data_rng = Rng(seed).derive(6);
  const Dataset data = gen_synthetic(small_spec(10, 6), data_rng);
  Rng rng = Rng(seed).derive(7);

  TrainerConfig cfg;
  cfg.meta_batch = 2;
  cfg.way = 3;
  cfg.shot = 1;
  cfg.queries = 2;
  cfg.alpha = 0.1;

  std::vector<TaskPair> pairs;
  std::vector<Episode> firsts, seconds;
  for (std::size_t i = 0; i < cfg.meta_batch; ++i) {
    pairs.push_back(sample_disjoint_pair(data, cfg.way, cfg.shot, cfg.queries, rng));
    firsts.push_back(pairs.back().first());
    seconds.push_back(pairs.back().second());
  }

  for (HeadKind kind : {HeadKind::proto, HeadKind::relation}) {
    const Model model = make_model(kind, 6, {8, 4}, {3});
    const Parameters init = perturbed_init(model, rng);
    const std::string head(head_name(kind));

    for (GradMode mode : {GradMode::exact, GradMode::first_order}) {
      TrainerConfig c = cfg;
      c.grad_mode = mode;
      const std::string tag = head + " " + std::string(grad_mode_name(mode));

      // Two steps so the Adam moments take part in the comparison.
      Parameters p_l2g = init, p_maml = init;
      AdamState o_l2g = AdamState::for_parameters(init), o_maml = o_l2g;
      std::vector<EpisodePair> same;
      for (const auto& e : firsts) same.push_back({&e, &e});
      for (std::size_t step = 0; step < 2; ++step) {
        bilevel_step(model, p_l2g, o_l2g, same, c, step);
        maml_x_step(model, p_maml, o_maml, firsts, c, step);
      }
      record(r, "equivalence", tag + " l2g with T_j = T_i vs maml_x",
             std::max({bit_mismatch(p_l2g, p_maml), bit_mismatch(o_l2g.first_moment, o_maml.first_moment),
                       bit_mismatch(o_l2g.second_moment, o_maml.second_moment)}),
             0.0);

      c.alpha = 0.0;
      Parameters p_meta = init, p_epi = init;
      AdamState o_meta = AdamState::for_parameters(init), o_epi = o_meta;
      for (std::size_t step = 0; step < 2; ++step) {
        meta_step(model, p_meta, o_meta, pairs, c, step);
        episodic_step(model, p_epi, o_epi, seconds, c, step);
      }
      record(r, "equivalence", tag + " alpha=0 vs episodic on outer episodes",
             std::max({bit_mismatch(p_meta, p_epi), bit_mismatch(o_meta.first_moment, o_epi.first_moment),
                       bit_mismatch(o_meta.second_moment, o_epi.second_moment)}),
             0.0);
    }

    Graph graph;
    const Parameters watched = graph.watch(init);
    const double exact = meta_loss(model, watched, pairs[0], cfg.alpha, GradMode::exact).item();
    const double first = meta_loss(model, watched, pairs[0], cfg.alpha, GradMode::first_order).item();
    record(r, "equivalence", head + " exact and first-order meta-loss values", exact == first ? 0.0 : 1.0, 0.0);
  }
  r.seconds = timer.seconds();
  return r;
}

GradcheckReport run_gradcheck_suite(std::uint64_t seed) {
  GradcheckReport r = check_ops(seed);
  r.merge(check_mlp(seed));
  r.merge(check_bilevel(seed));
  r.merge(check_closed_form());
  r.merge(check_mode_equivalences(seed));
  return r;
}

std::string format_report(const GradcheckReport& report) {
  std::ostringstream out;
  char line[256];
  for (const auto& c : report.checks) {
    std::snprintf(line, sizeof line, "%s %-12s %-55s error %.3e (tol %.0e)\n", c.passed ? "PASS" : "FAIL",
                  c.group.c_str(), c.name.c_str(), c.error, c.tolerance);
    out << line;
  }
  for (const char* group : {"ops", "mlp", "hvp", "bilevel", "closed_form"}) {
    std::snprintf(line, sizeof line, "max %s error: %.3e\n", group, report.max_error(group));
    out << line;
  }
  std::snprintf(line, sizeof line, "%s in %.2f s\n", report.passed() ? "all checks passed" : "checks FAILED",
                report.seconds);
  out << line;
  return out.str();
}

}  // namespace l2g
