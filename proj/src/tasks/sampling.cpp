#include <algorithm>
#include <cmath>

#include "l2g/errors.hpp"
#include "l2g/tasks.hpp"

namespace l2g {

namespace {

Episode build_episode(const Dataset& dataset, const std::vector<std::size_t>& class_ids, std::size_t shot,
                      std::size_t queries, Rng& rng) {
  const std::size_t way = class_ids.size();
  std::vector<std::vector<Instance>> support(way), query(way);
  std::vector<std::string> labels;
  for (std::size_t c = 0; c < way; ++c) {
    const ClassData& cls = dataset.class_at(class_ids[c]);
    if (cls.instances.size() < shot + queries) {
      throw ContractViolation("sample_episode: class '" + cls.label + "' has " + std::to_string(cls.instances.size()) +
                              " instances, needs " + std::to_string(shot + queries) + " (short by " +
                              std::to_string(shot + queries - cls.instances.size()) + ")");
    }
    const auto rows = sample_without_replacement(cls.instances.size(), shot + queries, rng);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      Instance inst{cls.instances[rows[i]], c, rows[i]};
      (i < shot ? support[c] : query[c]).push_back(std::move(inst));
    }
    labels.push_back(cls.label);
  }
  return Episode(way, shot, queries, std::move(support), std::move(query), std::move(labels));
}

void require_classes(const Dataset& dataset, std::size_t needed, const char* who) {
  if (dataset.num_classes() < needed) {
    throw ContractViolation(std::string(who) + ": dataset has " + std::to_string(dataset.num_classes()) +
                            " classes, needs " + std::to_string(needed) + " (short by " +
                            std::to_string(needed - dataset.num_classes()) + ")");
  }
}

}  // namespace

DatasetSplit split_classes(const Dataset& dataset, std::array<double, 3> fractions, std::uint64_t seed,
                           std::size_t min_classes_per_split) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw ContractViolation("split_classes: fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ContractViolation("split_classes: fractions must sum to 1");

  const std::size_t n = dataset.num_classes();
  const auto n_train = static_cast<std::size_t>(std::llround(fractions[0] * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(fractions[1] * static_cast<double>(n)));
  if (n_train + n_val >= n) throw ContractViolation("split_classes: too few classes to split " + std::to_string(n));
  const std::size_t counts[3] = {n_train, n_val, n - n_train - n_val};
  for (std::size_t c : counts) {
    if (c < std::max<std::size_t>(min_classes_per_split, 1)) {
      throw ContractViolation("split_classes: " + std::to_string(n) + " classes leave a split with " +
                              std::to_string(c) + ", need " + std::to_string(min_classes_per_split));
    }
  }

  Rng rng(seed);
  const auto order = sample_without_replacement(n, n, rng);
  std::vector<ClassData> parts[3];
  std::size_t pos = 0;
  for (int s = 0; s < 3; ++s) {
    for (std::size_t i = 0; i < counts[s]; ++i) parts[s].push_back(dataset.class_at(order[pos++]));
  }
  const std::size_t d = dataset.feature_dim();
  return {Dataset(d, std::move(parts[0])), Dataset(d, std::move(parts[1])), Dataset(d, std::move(parts[2]))};
}

Episode sample_episode(const Dataset& dataset, std::size_t way, std::size_t shot, std::size_t queries, Rng& rng) {
  if (way == 0 || shot == 0 || queries == 0) throw ContractViolation("sample_episode: way, shot, queries must be positive");
  require_classes(dataset, way, "sample_episode");
  return build_episode(dataset, sample_without_replacement(dataset.num_classes(), way, rng), shot, queries, rng);
}

TaskPair sample_disjoint_pair(const Dataset& dataset, std::size_t way, std::size_t shot, std::size_t queries,
                              Rng& rng) {
  if (way == 0 || shot == 0 || queries == 0) {
    throw ContractViolation("sample_disjoint_pair: way, shot, queries must be positive");
  }
  require_classes(dataset, 2 * way, "sample_disjoint_pair");
  const auto drawn = sample_without_replacement(dataset.num_classes(), 2 * way, rng);
  std::vector<std::size_t> first(drawn.begin(), drawn.begin() + static_cast<std::ptrdiff_t>(way));
  std::vector<std::size_t> second(drawn.begin() + static_cast<std::ptrdiff_t>(way), drawn.end());
  Episode a = build_episode(dataset, first, shot, queries, rng);
  Episode b = build_episode(dataset, second, shot, queries, rng);
  return TaskPair(std::move(a), std::move(b));
}

Episode sample_any(const Dataset& dataset, const std::vector<std::size_t>& shot_choices,
                   const std::vector<std::size_t>& way_choices, std::size_t queries, Rng& rng) {
  if (shot_choices.empty() || way_choices.empty()) throw ContractViolation("sample_any: empty choice set");
  const std::size_t max_way = *std::max_element(way_choices.begin(), way_choices.end());
  const std::size_t max_shot = *std::max_element(shot_choices.begin(), shot_choices.end());
  require_classes(dataset, max_way, "sample_any");
  if (dataset.min_class_size() < max_shot + queries) {
    throw ContractViolation("sample_any: smallest class has " + std::to_string(dataset.min_class_size()) +
                            " instances, needs " + std::to_string(max_shot + queries));
  }
  const std::size_t shot = shot_choices[rng.index(shot_choices.size())];
  const std::size_t way = way_choices[rng.index(way_choices.size())];
  return sample_episode(dataset, way, shot, queries, rng);
}

}  // namespace l2g
