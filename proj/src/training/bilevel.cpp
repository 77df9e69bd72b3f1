#include <atomic>
#include <cmath>
#include <optional>

#include "l2g/parallel.hpp"
#include "l2g/training.hpp"

namespace l2g {

namespace testing_hooks {
namespace {
std::atomic<bool> inner_sign_flipped{false};
}
void set_inner_update_sign_flip(bool flipped) { inner_sign_flipped.store(flipped); }
bool inner_update_sign_flipped() { return inner_sign_flipped.load(); }
}  // namespace testing_hooks

std::string_view mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::episodic: return "episodic";
    case TrainMode::maml_x: return "maml_x";
    case TrainMode::l2g: return "l2g";
  }
  return "?";
}

TrainMode parse_mode(std::string_view name) {
  if (name == "episodic") return TrainMode::episodic;
  if (name == "maml_x") return TrainMode::maml_x;
  if (name == "l2g") return TrainMode::l2g;
  throw ContractViolation("unknown mode '" + std::string(name) + "' (expected episodic, maml_x or l2g)");
}

std::string_view grad_mode_name(GradMode mode) { return mode == GradMode::exact ? "exact" : "first_order"; }

GradMode parse_grad_mode(std::string_view name) {
  if (name == "exact") return GradMode::exact;
  if (name == "first_order") return GradMode::first_order;
  throw ContractViolation("unknown grad_mode '" + std::string(name) + "' (expected exact or first_order)");
}

void TrainerConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ContractViolation("trainer config: " + msg); };
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) fail("alpha must be finite and >= 0");
  if (!(beta > 0.0) || !std::isfinite(beta)) fail("beta must be finite and > 0");
  if (meta_batch < 1) fail("meta_batch must be >= 1");
  if (way < 2) fail("way must be >= 2");
  if (shot < 1 || queries < 1) fail("shot and queries must be >= 1");
  if (total_episodes < 1) fail("total_episodes must be >= 1");
  if (schedule_k < 1) fail("schedule_k must be >= 1");
  if (threads < 1) fail("threads must be >= 1");
  if (eval_interval > 0 && val_episodes < 1) fail("val_episodes must be >= 1 when validating");
  if (embed_dims.empty()) fail("embed_dims must name at least one layer");
}

Model TrainerConfig::model(std::size_t input_dim) const {
  return make_model(head, input_dim, embed_dims, relation_hidden);
}

Parameters inner_update(const Parameters& params, const Tensor& inner_loss, double alpha, bool create_graph) {
  const GradientMap grads = grad(inner_loss, params, create_graph);
  const bool flipped = testing_hooks::inner_update_sign_flipped();
  Parameters adapted;
  for (const auto& [name, p] : params) {
    const Tensor step = scale(grads.at(name), alpha);
    adapted.emplace(name, flipped ? add(p, step) : sub(p, step));
  }
  return adapted;
}

Tensor bilevel_objective(const Parameters& params, const LossFunction& inner, const LossFunction& outer,
                         double alpha, GradMode mode, double* inner_value) {
  const Tensor inner_loss = inner(params);
  if (inner_value) *inner_value = inner_loss.item();
  return outer(inner_update(params, inner_loss, alpha, mode == GradMode::exact));
}

Tensor meta_loss(const Model& model, const Parameters& params, const TaskPair& pair, double alpha, GradMode mode) {
  return bilevel_objective(
      params, [&](const Parameters& p) { return episode_loss(model, p, pair.first()); },
      [&](const Parameters& p) { return episode_loss(model, p, pair.second()); }, alpha, mode);
}

double StepLosses::mean_inner() const {
  double s = 0.0;
  for (double v : inner) s += v;
  return inner.empty() ? 0.0 : s / static_cast<double>(inner.size());
}

double StepLosses::mean_outer() const {
  double s = 0.0;
  for (double v : outer) s += v;
  return outer.empty() ? 0.0 : s / static_cast<double>(outer.size());
}

namespace {

struct ItemResult {
  GradientMap grad;
  std::optional<double> inner;
  double outer = 0.0;
};

// Gradients of every item are computed on private graphs and reduced in item
// order, so the outcome does not depend on the number of threads.
template <typename ItemFn>
StepLosses batched_update(Parameters& params, AdamState& opt, const TrainerConfig& cfg, std::size_t episode_index,
                          std::size_t count, ItemFn item) {
  if (count == 0) throw ContractViolation("step: empty batch");
  const Parameters base = detach_all(params);
  std::vector<ItemResult> results(count);
  parallel_for(count, cfg.threads, [&](std::size_t i) { results[i] = item(base, i); });

  GradientMap total;
  for (const auto& [name, p] : base) {
    std::vector<double> acc(results[0].grad.at(name).values().begin(), results[0].grad.at(name).values().end());
    for (std::size_t i = 1; i < count; ++i) {
      auto g = results[i].grad.at(name).values();
      for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += g[k];
    }
    if (cfg.reduction == BatchReduction::mean) {
      for (double& v : acc) v /= static_cast<double>(count);
    }
    for (double v : acc) {
      if (!std::isfinite(v)) throw NumericError("non-finite gradient for '" + name + "'");
    }
    total.emplace(name, Tensor(p.shape(), std::move(acc)));
  }

  const double lr = lr_schedule(cfg.beta, episode_index, cfg.schedule_k);
  if (cfg.optimizer == MetaOptimizer::adam) {
    adam_update(opt, params, total, lr);
  } else {
    sgd_update(params, total, lr);
  }

  StepLosses losses;
  for (const auto& r : results) {
    if (r.inner) losses.inner.push_back(*r.inner);
    losses.outer.push_back(r.outer);
  }
  return losses;
}

}  // namespace

StepLosses bilevel_step(const Model& model, Parameters& params, AdamState& opt, std::span<const EpisodePair> pairs,
                        const TrainerConfig& cfg, std::size_t episode_index) {
  return batched_update(params, opt, cfg, episode_index, pairs.size(), [&](const Parameters& base, std::size_t i) {
    Graph graph;
    const Parameters watched = graph.watch(base);
    const Episode& inner_ep = *pairs[i].inner;
    const Episode& outer_ep = *pairs[i].outer;
    double inner_value = 0.0;
    const Tensor outer = bilevel_objective(
        watched, [&](const Parameters& p) { return episode_loss(model, p, inner_ep); },
        [&](const Parameters& p) { return episode_loss(model, p, outer_ep); }, cfg.alpha, cfg.grad_mode,
        &inner_value);
    return ItemResult{grad(outer, watched), inner_value, outer.item()};
  });
}

StepLosses meta_step(const Model& model, Parameters& params, AdamState& opt, std::span<const TaskPair> pairs,
                     const TrainerConfig& cfg, std::size_t episode_index) {
  if (pairs.size() != cfg.meta_batch) {
    throw ContractViolation("meta_step: got " + std::to_string(pairs.size()) + " pairs, meta_batch is " +
                            std::to_string(cfg.meta_batch));
  }
  std::vector<EpisodePair> refs;
  for (const auto& p : pairs) refs.push_back({&p.first(), &p.second()});
  return bilevel_step(model, params, opt, refs, cfg, episode_index);
}

StepLosses maml_x_step(const Model& model, Parameters& params, AdamState& opt, std::span<const Episode> episodes,
                       const TrainerConfig& cfg, std::size_t episode_index) {
  std::vector<EpisodePair> refs;
  for (const auto& e : episodes) refs.push_back({&e, &e});
  return bilevel_step(model, params, opt, refs, cfg, episode_index);
}

StepLosses episodic_step(const Model& model, Parameters& params, AdamState& opt, std::span<const Episode> episodes,
                         const TrainerConfig& cfg, std::size_t episode_index) {
  return batched_update(params, opt, cfg, episode_index, episodes.size(), [&](const Parameters& base, std::size_t i) {
    Graph graph;
    const Parameters watched = graph.watch(base);
    const Tensor loss = episode_loss(model, watched, episodes[i]);
    return ItemResult{grad(loss, watched), std::nullopt, loss.item()};
  });
}

}  // namespace l2g
