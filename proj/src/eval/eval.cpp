#include <cmath>
#include <cstdio>
#include <sstream>

#include "l2g/errors.hpp"
#include "l2g/eval.hpp"
#include "l2g/parallel.hpp"

namespace l2g {

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

double evaluate(const Predictor& predictor, const Dataset& dataset, std::size_t way, std::size_t shot,
                std::size_t queries, std::size_t episodes, const Rng& rng, std::size_t threads,
                std::vector<EpisodeRecord>* records) {
  if (episodes == 0) throw ContractViolation("evaluate: episodes must be at least 1");
  std::vector<double> accuracy(episodes, 0.0);
  std::vector<EpisodeRecord> local(records ? episodes : 0);

  parallel_for(episodes, threads, [&](std::size_t e) {
    Rng episode_rng = rng.derive(e);
    const Episode episode = sample_episode(dataset, way, shot, queries, episode_rng);
    const auto predicted = predictor(episode);
    const auto truth = episode.query_labels();
    if (predicted.size() != truth.size()) throw ContractViolation("evaluate: predictor returned wrong count");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) correct += predicted[i] == truth[i];
    accuracy[e] = static_cast<double>(correct) / static_cast<double>(truth.size());
    if (records) local[e] = {predicted, truth};
  });

  double sum = 0.0;
  for (double a : accuracy) sum += a;
  if (records) *records = std::move(local);
  return sum / static_cast<double>(episodes);
}

double evaluate(const Model& model, const Parameters& params, const Dataset& dataset, std::size_t way,
                std::size_t shot, std::size_t queries, std::size_t episodes, const Rng& rng, std::size_t threads,
                std::vector<EpisodeRecord>* records) {
  const Parameters frozen = detach_all(params);
  const Predictor predictor = [&](const Episode& ep) { return predict(model, frozen, ep); };
  return evaluate(predictor, dataset, way, shot, queries, episodes, rng, threads, records);
}

std::pair<double, double> confidence_interval(std::span<const double> run_means) {
  if (run_means.empty()) throw ContractViolation("confidence_interval: no runs");
  const double n = static_cast<double>(run_means.size());
  double mean = 0.0;
  for (double v : run_means) mean += v;
  mean /= n;
  if (run_means.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double v : run_means) ss += (v - mean) * (v - mean);
  const double sample_std = std::sqrt(ss / (n - 1.0));
  return {mean, 1.96 * sample_std / std::sqrt(n)};
}

EvalReport run_protocol(const Predictor& predictor, const Dataset& dataset, const Protocol& protocol,
                        std::uint64_t seed, std::size_t threads) {
  if (protocol.runs == 0) throw ContractViolation("run_protocol: runs must be at least 1");
  EvalReport report;
  report.protocol = protocol;
  const Rng root(seed);
  for (std::size_t r = 0; r < protocol.runs; ++r) {
    report.run_accuracies.push_back(evaluate(predictor, dataset, protocol.way, protocol.shot, protocol.queries,
                                             protocol.episodes, root.derive(r), threads));
  }
  std::tie(report.mean, report.ci_half_width) = confidence_interval(report.run_accuracies);
  return report;
}

EvalReport run_protocol(const Model& model, const Parameters& params, const Dataset& dataset,
                        const Protocol& protocol, std::uint64_t seed, std::size_t threads) {
  const Parameters frozen = detach_all(params);
  const Predictor predictor = [&](const Episode& ep) { return predict(model, frozen, ep); };
  return run_protocol(predictor, dataset, protocol, seed, threads);
}

std::vector<EvalReport> eval_grid(const Predictor& predictor, const Dataset& dataset,
                                  const std::vector<std::size_t>& shots, const std::vector<std::size_t>& ways,
                                  std::size_t queries, std::size_t episodes_per_cell, std::size_t runs,
                                  std::uint64_t seed, std::size_t threads) {
  if (shots.empty() || ways.empty()) throw ContractViolation("eval_grid: empty shot or way set");
  std::vector<EvalReport> out;
  for (std::size_t shot : shots) {
    for (std::size_t way : ways) {
      out.push_back(run_protocol(predictor, dataset, {way, shot, queries, episodes_per_cell, runs}, seed, threads));
    }
  }
  return out;
}

std::vector<EvalReport> eval_grid(const Model& model, const Parameters& params, const Dataset& dataset,
                                  const std::vector<std::size_t>& shots, const std::vector<std::size_t>& ways,
                                  std::size_t queries, std::size_t episodes_per_cell, std::size_t runs,
                                  std::uint64_t seed, std::size_t threads) {
  const Parameters frozen = detach_all(params);
  const Predictor predictor = [&](const Episode& ep) { return predict(model, frozen, ep); };
  return eval_grid(predictor, dataset, shots, ways, queries, episodes_per_cell, runs, seed, threads);
}

std::string report_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  out << "way,shot,run,accuracy\n";
  for (const auto& r : reports) {
    const std::string cell = std::to_string(r.protocol.way) + "," + std::to_string(r.protocol.shot) + ",";
    for (std::size_t i = 0; i < r.run_accuracies.size(); ++i) {
      out << cell << i << "," << fixed(r.run_accuracies[i], 6) << "\n";
    }
    out << cell << "mean," << fixed(r.mean, 6) << "\n";
    out << cell << "ci_half_width," << fixed(r.ci_half_width, 6) << "\n";
  }
  return out.str();
}

std::string report_text(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  for (const auto& r : reports) {
    out << r.protocol.way << "-way " << r.protocol.shot << "-shot (" << r.protocol.queries << " queries, "
        << r.protocol.episodes << " episodes x " << r.protocol.runs << " runs): " << fixed(100.0 * r.mean, 2)
        << "% +- " << fixed(100.0 * r.ci_half_width, 2) << "%\n";
  }
  return out.str();
}

}  // namespace l2g
