#include <cstdio>

#include "l2g/binary_io.hpp"
#include "l2g/checkpoint.hpp"
#include "l2g/eval.hpp"
#include "l2g/training.hpp"

namespace l2g {

namespace {

// Child streams of Rng(cfg.seed).
constexpr std::uint64_t kTrainStream = 1;
constexpr std::uint64_t kValStream = 2;
constexpr std::uint64_t kInitStream = 3;

}  // namespace

void check_training_data(const TrainerConfig& cfg, const Dataset& train_set, const Dataset* val_set) {
  const std::size_t needed = cfg.mode == TrainMode::l2g ? 2 * cfg.way : cfg.way;
  if (train_set.num_classes() < needed) {
    throw ContractViolation("mode " + std::string(mode_name(cfg.mode)) + " with way " + std::to_string(cfg.way) +
                            " needs at least " + std::to_string(needed) + " training classes, dataset has " +
                            std::to_string(train_set.num_classes()));
  }
  if (train_set.min_class_size() < cfg.shot + cfg.queries) {
    throw ContractViolation("training classes need " + std::to_string(cfg.shot + cfg.queries) +
                            " instances each, smallest has " + std::to_string(train_set.min_class_size()));
  }
  if (val_set && cfg.eval_interval > 0) {
    if (val_set->feature_dim() != train_set.feature_dim()) {
      throw ContractViolation("validation feature dim " + std::to_string(val_set->feature_dim()) +
                              " differs from training " + std::to_string(train_set.feature_dim()));
    }
    if (val_set->num_classes() < cfg.way || val_set->min_class_size() < cfg.shot + cfg.queries) {
      throw ContractViolation("validation set cannot supply " + std::to_string(cfg.way) + "-way " +
                              std::to_string(cfg.shot) + "-shot episodes with " + std::to_string(cfg.queries) +
                              " queries");
    }
  }
}

namespace {

StepLosses run_step(const Model& model, TrainerState& state, const TrainerConfig& cfg, const Dataset& train_set,
                    std::size_t e) {
  Rng rng = Rng(cfg.seed).derive(kTrainStream).derive(e);
  switch (cfg.mode) {
    case TrainMode::l2g: {
      std::vector<TaskPair> pairs;
      for (std::size_t i = 0; i < cfg.meta_batch; ++i) {
        pairs.push_back(sample_disjoint_pair(train_set, cfg.way, cfg.shot, cfg.queries, rng));
      }
      return meta_step(model, state.params, state.opt, pairs, cfg, e);
    }
    case TrainMode::maml_x:
    case TrainMode::episodic: {
      std::vector<Episode> episodes;
      for (std::size_t i = 0; i < cfg.meta_batch; ++i) {
        episodes.push_back(sample_episode(train_set, cfg.way, cfg.shot, cfg.queries, rng));
      }
      if (cfg.mode == TrainMode::maml_x) return maml_x_step(model, state.params, state.opt, episodes, cfg, e);
      return episodic_step(model, state.params, state.opt, episodes, cfg, e);
    }
  }
  throw ContractViolation("unknown training mode");
}

std::string checkpoint_name(std::size_t episodes_done) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "ckpt_%08zu.ckpt", episodes_done);
  return buf;
}

}  // namespace

TrainerState initial_state(const Model& model, const TrainerConfig& cfg) {
  Rng rng = Rng(cfg.seed).derive(kInitStream);
  TrainerState state;
  state.params = init_parameters(model, rng);
  state.opt = AdamState::for_parameters(state.params);
  return state;
}

void train_until(const Model& model, TrainerState& state, const TrainerConfig& cfg, const Dataset& train_set,
                 const Dataset* val_set, std::size_t until, RunLog& log, const std::filesystem::path* run_dir) {
  cfg.validate();
  check_training_data(cfg, train_set, val_set);
  check_parameters(model, state.params);
  if (model.embedding.input_dim() != train_set.feature_dim()) {
    throw ContractViolation("model input dim " + std::to_string(model.embedding.input_dim()) +
                            " differs from dataset feature dim " + std::to_string(train_set.feature_dim()));
  }

  auto write_log = [&] {
    if (run_dir) binary::write_file(*run_dir / "log.csv", log.to_csv());
  };

  for (std::size_t e = state.next_episode; e < until; ++e) {
    LogRecord record;
    record.episode = e;
    record.lr = lr_schedule(cfg.beta, e, cfg.schedule_k);
    try {
      const StepLosses losses = run_step(model, state, cfg, train_set, e);
      record.meta_loss = losses.mean_outer();
      if (!losses.inner.empty()) record.inner_loss = losses.mean_inner();
    } catch (const NumericError& err) {
      write_log();
      throw TrainingAborted(e, err.what());
    }
    state.next_episode = e + 1;

    const bool interval_end = cfg.eval_interval > 0 && state.next_episode % cfg.eval_interval == 0;
    if (interval_end && val_set) {
      record.val_accuracy = evaluate(model, state.params, *val_set, cfg.way, cfg.shot, cfg.queries,
                                     cfg.val_episodes, Rng(cfg.seed).derive(kValStream), cfg.threads);
    }
    log.append(record);
    if (interval_end && run_dir) {
      save_checkpoint(state_to_tensors(state), *run_dir / checkpoint_name(state.next_episode));
      write_log();
    }
  }
  write_log();
}

TrainResult train(const TrainerConfig& cfg, const Dataset& train_set, const Dataset* val_set,
                  const std::filesystem::path& run_dir) {
  cfg.validate();
  check_training_data(cfg, train_set, val_set);
  TrainResult result{cfg.model(train_set.feature_dim()), {}, {}};
  result.state = initial_state(result.model, cfg);
  const std::filesystem::path* dir = run_dir.empty() ? nullptr : &run_dir;
  if (dir) {
    std::error_code ec;
    std::filesystem::create_directories(run_dir, ec);
    if (ec) throw IoError("cannot create run directory " + run_dir.string() + ": " + ec.message());
  }
  train_until(result.model, result.state, cfg, train_set, val_set, cfg.total_episodes, result.log, dir);
  if (dir) save_checkpoint(state_to_tensors(result.state), run_dir / "final.ckpt");
  return result;
}

}  // namespace l2g
