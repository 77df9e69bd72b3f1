#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "l2g/eval.hpp"
#include "l2g/tasks.hpp"
#include "l2g/training.hpp"

namespace l2g {

// Everything a run needs: trainer settings, where the data comes from, the
// run directory, and evaluation defaults. Parsed from `key = value` lines
// with `#` comments; dotted keys group the data, synthetic and eval fields.
struct RunConfig {
  TrainerConfig trainer;
  std::optional<std::filesystem::path> train_data;
  std::optional<std::filesystem::path> val_data;
  // Used when the data is generated: train, val and test class fractions.
  std::array<double, 3> split{0.6, 0.2, 0.2};
  std::optional<SyntheticSpec> synthetic;
  std::optional<std::uint64_t> synthetic_seed;
  std::filesystem::path run_dir;
  std::size_t eval_episodes = 600;
  std::size_t eval_runs = 5;
  // Keys that appeared in the source text.
  std::set<std::string> keys;

  bool has(std::string_view key) const { return keys.count(std::string(key)) > 0; }
};

// The closed schema, in snapshot order.
const std::vector<std::string>& config_keys();

// Throws ContractViolation naming the line and key for unknown keys,
// duplicates, and unparsable values.
RunConfig parse_config(std::string_view text);
// Relative data and run_dir paths are taken relative to the file's folder.
RunConfig load_config(const std::filesystem::path& path);
// Canonical text holding every key; parse_config reads it back.
std::string config_snapshot(const RunConfig& config);

std::string_view reduction_name(BatchReduction reduction);
BatchReduction parse_reduction(std::string_view name);
std::string_view optimizer_name(MetaOptimizer optimizer);
MetaOptimizer parse_optimizer(std::string_view name);
std::string_view generator_name(GeneratorKind kind);
GeneratorKind parse_generator(std::string_view name);

std::vector<std::size_t> parse_size_list(std::string_view text);
std::string format_size_list(const std::vector<std::size_t>& values);

}  // namespace l2g
