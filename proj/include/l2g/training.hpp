#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "l2g/autodiff.hpp"
#include "l2g/errors.hpp"
#include "l2g/models.hpp"
#include "l2g/run_log.hpp"
#include "l2g/tasks.hpp"

namespace l2g {

enum class TrainMode { episodic, maml_x, l2g };
enum class GradMode { exact, first_order };
// How per-task losses in one meta-batch are combined.
enum class BatchReduction { mean, sum };
enum class MetaOptimizer { adam, sgd };

std::string_view mode_name(TrainMode mode);
TrainMode parse_mode(std::string_view name);
std::string_view grad_mode_name(GradMode mode);
GradMode parse_grad_mode(std::string_view name);

struct TrainerConfig {
  TrainMode mode = TrainMode::l2g;
  HeadKind head = HeadKind::proto;
  double alpha = 1e-2;  // inner step size
  double beta = 1e-3;   // initial meta learning rate
  std::size_t meta_batch = 5;
  GradMode grad_mode = GradMode::exact;
  BatchReduction reduction = BatchReduction::mean;
  MetaOptimizer optimizer = MetaOptimizer::adam;
  std::size_t total_episodes = 2000;
  std::size_t eval_interval = 500;  // 0 disables validation and interim checkpoints
  std::size_t val_episodes = 200;
  std::size_t way = 5;
  std::size_t shot = 1;
  std::size_t queries = 15;
  std::size_t schedule_k = 10000;  // halve the learning rate every K episodes
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  std::vector<std::size_t> embed_dims{64, 64, 64};
  std::vector<std::size_t> relation_hidden{32};

  void validate() const;
  Model model(std::size_t input_dim) const;
};

struct AdamState {
  std::map<std::string, Tensor> first_moment;
  std::map<std::string, Tensor> second_moment;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_parameters(const Parameters& params);
};

// Bias-corrected Adam. Either commits the whole update or throws and leaves
// both the state and the parameters untouched.
void adam_update(AdamState& opt, Parameters& params, const GradientMap& grads, double lr);
// Plain descent: p <- p - lr * g.
void sgd_update(Parameters& params, const GradientMap& grads, double lr);

double lr_schedule(double initial_lr, std::size_t episode, std::size_t halve_every);

// theta' = theta - alpha * grad(inner_loss). With create_graph the step stays
// differentiable w.r.t. theta; without it the step is a constant offset, so
// d theta'/d theta is the identity.
Parameters inner_update(const Parameters& params, const Tensor& inner_loss, double alpha, bool create_graph);

using LossFunction = std::function<Tensor(const Parameters&)>;

// outer(theta - alpha * grad inner(theta)). `inner_value` receives inner(theta).
Tensor bilevel_objective(const Parameters& params, const LossFunction& inner, const LossFunction& outer,
                         double alpha, GradMode mode, double* inner_value = nullptr);

Tensor meta_loss(const Model& model, const Parameters& params, const TaskPair& pair, double alpha, GradMode mode);

struct StepLosses {
  std::vector<double> inner;  // empty for episodic steps
  std::vector<double> outer;

  double mean_inner() const;
  double mean_outer() const;
};

// Unchecked (inner, outer) episode pairing; the inner and outer episode may
// even be the same object.
struct EpisodePair {
  const Episode* inner;
  const Episode* outer;
};

StepLosses bilevel_step(const Model& model, Parameters& params, AdamState& opt, std::span<const EpisodePair> pairs,
                        const TrainerConfig& cfg, std::size_t episode_index);
StepLosses meta_step(const Model& model, Parameters& params, AdamState& opt, std::span<const TaskPair> pairs,
                     const TrainerConfig& cfg, std::size_t episode_index);
// Inner and outer loss on the same task.
StepLosses maml_x_step(const Model& model, Parameters& params, AdamState& opt, std::span<const Episode> episodes,
                       const TrainerConfig& cfg, std::size_t episode_index);
StepLosses episodic_step(const Model& model, Parameters& params, AdamState& opt, std::span<const Episode> episodes,
                         const TrainerConfig& cfg, std::size_t episode_index);

struct TrainerState {
  Parameters params;
  AdamState opt;
  std::size_t next_episode = 0;
};

// Class counts and sizes the mode needs: l2g draws 2C distinct classes per
// pair. Throws ContractViolation.
void check_training_data(const TrainerConfig& cfg, const Dataset& train_set, const Dataset* val_set);

TrainerState initial_state(const Model& model, const TrainerConfig& cfg);

// Thrown when a step produces a non-finite loss or gradient.
class TrainingAborted : public NumericError {
 public:
  TrainingAborted(std::size_t episode, const std::string& what)
      : NumericError("episode " + std::to_string(episode) + ": " + what), episode_(episode) {}
  std::size_t episode() const { return episode_; }

 private:
  std::size_t episode_;
};

// Runs episodes [state.next_episode, until). Episode e samples its tasks from
// Rng(seed).derive(train stream).derive(e), so a restored state continues the
// exact trajectory.
void train_until(const Model& model, TrainerState& state, const TrainerConfig& cfg, const Dataset& train_set,
                 const Dataset* val_set, std::size_t until, RunLog& log,
                 const std::filesystem::path* run_dir = nullptr);

struct TrainResult {
  Model model;
  TrainerState state;
  RunLog log;
};

// Full run. When run_dir is non-empty it receives log.csv, checkpoints every
// eval_interval episodes, and final.ckpt.
TrainResult train(const TrainerConfig& cfg, const Dataset& train_set, const Dataset* val_set,
                  const std::filesystem::path& run_dir = {});

// Test hook: makes inner_update step up the gradient instead of down.
namespace testing_hooks {
void set_inner_update_sign_flip(bool flipped);
bool inner_update_sign_flipped();
}  // namespace testing_hooks

}  // namespace l2g
