#pragma once

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "l2g/models.hpp"
#include "l2g/tasks.hpp"

namespace l2g {

// Meta-test only: parameters are read, never adapted.

using Predictor = std::function<std::vector<std::size_t>(const Episode&)>;

struct Protocol {
  std::size_t way = 5;
  std::size_t shot = 1;
  std::size_t queries = 15;
  std::size_t episodes = 600;
  std::size_t runs = 5;
};

struct EvalReport {
  Protocol protocol;
  std::vector<double> run_accuracies;
  double mean = 0.0;
  double ci_half_width = 0.0;
};

struct EpisodeRecord {
  std::vector<std::size_t> predicted;
  std::vector<std::size_t> truth;
};

// Episode e is drawn from rng.derive(e), so results do not depend on
// `threads`. `records`, when given, receives every episode's predictions.
double evaluate(const Predictor& predictor, const Dataset& dataset, std::size_t way, std::size_t shot,
                std::size_t queries, std::size_t episodes, const Rng& rng, std::size_t threads = 1,
                std::vector<EpisodeRecord>* records = nullptr);

double evaluate(const Model& model, const Parameters& params, const Dataset& dataset, std::size_t way,
                std::size_t shot, std::size_t queries, std::size_t episodes, const Rng& rng, std::size_t threads = 1,
                std::vector<EpisodeRecord>* records = nullptr);

// Mean and 1.96 * sample std / sqrt(n); a single run has zero width.
std::pair<double, double> confidence_interval(std::span<const double> run_means);

// Run r uses Rng(seed).derive(r).
EvalReport run_protocol(const Predictor& predictor, const Dataset& dataset, const Protocol& protocol,
                        std::uint64_t seed, std::size_t threads = 1);
EvalReport run_protocol(const Model& model, const Parameters& params, const Dataset& dataset,
                        const Protocol& protocol, std::uint64_t seed, std::size_t threads = 1);

// One report per (shot, way) cell, shots outer, ways inner.
std::vector<EvalReport> eval_grid(const Predictor& predictor, const Dataset& dataset,
                                  const std::vector<std::size_t>& shots, const std::vector<std::size_t>& ways,
                                  std::size_t queries, std::size_t episodes_per_cell, std::size_t runs,
                                  std::uint64_t seed, std::size_t threads = 1);
std::vector<EvalReport> eval_grid(const Model& model, const Parameters& params, const Dataset& dataset,
                                  const std::vector<std::size_t>& shots, const std::vector<std::size_t>& ways,
                                  std::size_t queries, std::size_t episodes_per_cell, std::size_t runs,
                                  std::uint64_t seed, std::size_t threads = 1);

// CSV columns way,shot,run,accuracy. Each report ends with two summary rows
// whose run column holds "mean" and "ci_half_width".
std::string report_csv(const std::vector<EvalReport>& reports);
std::string report_text(const std::vector<EvalReport>& reports);

}  // namespace l2g
