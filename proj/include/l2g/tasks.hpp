#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "l2g/rng.hpp"
#include "l2g/tensor.hpp"

namespace l2g {

using FeatureRows = std::vector<std::vector<double>>;

struct ClassData {
  std::string label;
  FeatureRows instances;

  bool operator==(const ClassData&) const = default;
};

// Immutable labelled feature vectors, classes ordered by label.
class Dataset {
 public:
  Dataset() = default;
  // Throws ContractViolation on duplicate labels, empty classes, or rows of
  // the wrong width.
  Dataset(std::size_t feature_dim, std::vector<ClassData> classes);

  std::size_t feature_dim() const { return feature_dim_; }
  std::size_t num_classes() const { return classes_.size(); }
  const std::vector<ClassData>& classes() const { return classes_; }
  const ClassData& class_at(std::size_t index) const { return classes_.at(index); }
  std::vector<std::string> labels() const;
  std::size_t min_class_size() const;
  std::size_t instance_count() const;

  bool operator==(const Dataset&) const = default;

 private:
  std::size_t feature_dim_ = 0;
  std::vector<ClassData> classes_;
};

struct Instance {
  std::vector<double> features;
  std::size_t class_index = 0;   // position within the episode
  std::size_t source_index = 0;  // row within the dataset class
};

// One C-way N-shot task with M queries per class.
class Episode {
 public:
  // Checks |support_c| == N, |query_c| == M, class indices, and that support
  // and query rows of a class are distinct draws.
  Episode(std::size_t way, std::size_t shot, std::size_t queries, std::vector<std::vector<Instance>> support,
          std::vector<std::vector<Instance>> query, std::vector<std::string> source_labels);

  std::size_t way() const { return way_; }
  std::size_t shot() const { return shot_; }
  std::size_t queries_per_class() const { return queries_; }
  std::size_t query_count() const { return way_ * queries_; }
  const std::vector<Instance>& support(std::size_t c) const { return support_.at(c); }
  const std::vector<Instance>& query(std::size_t c) const { return query_.at(c); }
  const std::vector<std::string>& source_labels() const { return source_labels_; }

  // Class-major feature matrices: [C*N, D] and [C*M, D].
  Tensor support_features() const;
  Tensor query_features() const;
  // Episode class index of every query row, aligned with query_features().
  std::vector<std::size_t> query_labels() const;
  std::vector<std::size_t> support_group_sizes() const;

 private:
  std::size_t way_;
  std::size_t shot_;
  std::size_t queries_;
  std::vector<std::vector<Instance>> support_;
  std::vector<std::vector<Instance>> query_;
  std::vector<std::string> source_labels_;
};

// Two episodes over disjoint class sets; the constructor enforces it.
class TaskPair {
 public:
  TaskPair(Episode first, Episode second);

  const Episode& first() const { return first_; }
  const Episode& second() const { return second_; }

 private:
  Episode first_;
  Episode second_;
};

enum class GeneratorKind { gaussian_clusters, rotated_rings };

struct SyntheticSpec {
  GeneratorKind kind = GeneratorKind::gaussian_clusters;
  std::size_t num_classes = 40;
  std::size_t latent_dim = 8;
  std::size_t feature_dim = 16;
  double class_separation = 6.0;
  double noise_std = 1.0;
  std::uint64_t mixing_seed = 7;
  std::size_t instances_per_class = 40;
  // Largest way the data must support as a disjoint pair.
  std::size_t max_way = 5;

  void validate() const;
};

struct SyntheticData {
  Dataset dataset;
  // Latent-space view of the same data, for oracles.
  std::vector<std::vector<double>> latent_centers;
  std::vector<FeatureRows> latent_points;
};

struct DatasetSplit {
  Dataset train;
  Dataset val;
  Dataset test;
};

// Partition classes by shuffled order; counts are rounded fractions with the
// remainder going to the last split.
DatasetSplit split_classes(const Dataset& dataset, std::array<double, 3> fractions, std::uint64_t seed,
                           std::size_t min_classes_per_split = 1);

Episode sample_episode(const Dataset& dataset, std::size_t way, std::size_t shot, std::size_t queries, Rng& rng);

// Draws 2C classes at once and deals them into two C-sets.
TaskPair sample_disjoint_pair(const Dataset& dataset, std::size_t way, std::size_t shot, std::size_t queries,
                              Rng& rng);

Episode sample_any(const Dataset& dataset, const std::vector<std::size_t>& shot_choices,
                   const std::vector<std::size_t>& way_choices, std::size_t queries, Rng& rng);

SyntheticData gen_synthetic_detailed(const SyntheticSpec& spec, Rng& rng);
Dataset gen_synthetic(const SyntheticSpec& spec, Rng& rng);

// L2GDATA1 binary layout.
std::string encode_dataset(const Dataset& dataset);
Dataset decode_dataset(std::string_view bytes);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace l2g
