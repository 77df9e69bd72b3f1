#include "l2g/commands.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>

#include "l2g/binary_io.hpp"
#include "l2g/checkpoint.hpp"
#include "l2g/config.hpp"
#include "l2g/eval.hpp"
#include "l2g/gradcheck.hpp"
#include "l2g/training.hpp"
#include "l2g/viz.hpp"

namespace l2g {

namespace fs = std::filesystem;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  bool force = false;
};

std::uint64_t env_seed() {
  const char* text = std::getenv("L2G_SEED");
  if (!text || !*text) return 1;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(text, &end, 10);
  if (*end != '\0') throw ContractViolation("L2G_SEED must be an unsigned integer, got '" + std::string(text) + "'");
  return v;
}

// --seed wins, then the config value when present, then L2G_SEED, then 1.
std::uint64_t resolve_seed(const Globals& g, std::optional<std::uint64_t> configured = std::nullopt) {
  if (g.seed) return *g.seed;
  if (configured) return *configured;
  return env_seed();
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  binary::write_file(path, text);
}

void refuse_existing(const fs::path& path, bool force) {
  if (!force && fs::exists(path)) {
    throw ContractViolation(path.string() + " already exists; pass --force to overwrite");
  }
}

// --- architecture flags shared by eval, plot and export-embeddings --------

struct ArchOptions {
  std::string config;
  std::string head;
  std::string embed_dims;
  std::string relation_hidden;
};

void add_arch_options(CLI::App* sub, ArchOptions& o) {
  sub->add_option("--config", o.config, "config file (e.g. a run's config.txt) supplying defaults");
  sub->add_option("--head", o.head, "proto or relation");
  sub->add_option("--embed-dims", o.embed_dims, "embedding layer widths, e.g. 64,64,64");
  sub->add_option("--relation-hidden", o.relation_hidden, "relation module hidden widths, e.g. 32");
}

RunConfig base_config(const ArchOptions& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_config(o.config);
  if (!o.head.empty()) c.trainer.head = parse_head(o.head);
  if (!o.embed_dims.empty()) c.trainer.embed_dims = parse_size_list(o.embed_dims);
  if (!o.relation_hidden.empty()) c.trainer.relation_hidden = parse_size_list(o.relation_hidden);
  return c;
}

struct LoadedModel {
  Model model;
  Parameters params;
};

LoadedModel load_model(const RunConfig& c, const fs::path& checkpoint, std::size_t input_dim) {
  LoadedModel m{c.trainer.model(input_dim), parameters_from_tensors(load_checkpoint(checkpoint))};
  check_parameters(m.model, m.params);
  return m;
}

Tensor embed_rows(const LoadedModel& m, const Tensor& features) {
  return embed(m.model.embedding, m.params, features);
}

// --- gen-data ---------------------------------------------------------------

struct GenDataOptions {
  std::string config;
  std::string kind;
  std::optional<std::size_t> classes, latent_dim, feature_dim, instances, max_way;
  std::optional<double> separation, noise;
  std::optional<std::uint64_t> mixing_seed;
  std::string out;
  std::string split;
};

fs::path with_suffix(const fs::path& path, const std::string& tag) {
  return path.parent_path() / (path.stem().string() + "_" + tag + path.extension().string());
}

int cmd_gen_data(const GenDataOptions& o, const Globals& g, std::ostream& out) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_config(o.config);
  SyntheticSpec spec = c.synthetic.value_or(SyntheticSpec{});
  if (!o.kind.empty()) spec.kind = parse_generator(o.kind);
  if (o.classes) spec.num_classes = *o.classes;
  if (o.latent_dim) spec.latent_dim = *o.latent_dim;
  if (o.feature_dim) spec.feature_dim = *o.feature_dim;
  if (o.instances) spec.instances_per_class = *o.instances;
  if (o.max_way) spec.max_way = *o.max_way;
  if (o.separation) spec.class_separation = *o.separation;
  if (o.noise) spec.noise_std = *o.noise;
  if (o.mixing_seed) spec.mixing_seed = *o.mixing_seed;
  spec.validate();

  std::optional<std::uint64_t> configured = c.synthetic_seed;
  if (!configured && c.has("seed")) configured = c.trainer.seed;
  const std::uint64_t seed = resolve_seed(g, configured);

  const fs::path path = o.out;
  refuse_existing(path, g.force);
  Rng rng(seed);
  const Dataset data = gen_synthetic(spec, rng);
  save_dataset(data, path);
  out << "wrote " << data.num_classes() << " classes, " << data.instance_count() << " instances, D="
      << data.feature_dim() << " to " << path.string() << "\n";

  if (!o.split.empty()) {
    RunConfig parsed = parse_config("data.split = " + o.split);
    const DatasetSplit parts = split_classes(data, parsed.split, seed);
    const std::pair<const char*, const Dataset*> files[] = {
        {"train", &parts.train}, {"val", &parts.val}, {"test", &parts.test}};
    for (const auto& [tag, ds] : files) {
      const fs::path p = with_suffix(path, tag);
      refuse_existing(p, g.force);
      save_dataset(*ds, p);
      out << "  " << tag << ": " << ds->num_classes() << " classes -> " << p.string() << "\n";
    }
  }
  return kExitOk;
}

// --- train ------------------------------------------------------------------

struct TrainOptions {
  std::string config;
  std::string run_dir;
};

// Files a run writes; --force removes only these.
void clear_run_dir(const fs::path& dir) {
  for (const char* name : {"config.txt", "log.csv", "final.ckpt"}) fs::remove(dir / name);
  fs::remove_all(dir / "data");
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.starts_with("ckpt_") && name.ends_with(".ckpt")) fs::remove(entry.path());
  }
}

int cmd_train(const TrainOptions& o, const Globals& g, std::ostream& out) {
  RunConfig c = load_config(o.config);
  c.trainer.seed = resolve_seed(g, c.has("seed") ? std::optional<std::uint64_t>(c.trainer.seed) : std::nullopt);
  if (g.threads) c.trainer.threads = *g.threads;
  if (!o.run_dir.empty()) c.run_dir = o.run_dir;
  if (c.run_dir.empty()) throw ContractViolation("no run directory: set run_dir in the config or pass --run-dir");
  c.trainer.validate();

  if (c.train_data && c.synthetic) throw ContractViolation("config sets both data.train and synthetic.* keys");
  if (!c.train_data && !c.synthetic) throw ContractViolation("config needs data.train or synthetic.* keys");
  if (c.val_data && !c.train_data) throw ContractViolation("data.val requires data.train");

  Dataset train_set, val_set;
  std::optional<Dataset> test_set;
  bool have_val = false;
  if (c.train_data) {
    train_set = load_dataset(*c.train_data);
    if (c.val_data) {
      val_set = load_dataset(*c.val_data);
      have_val = true;
    }
  } else {
    Rng rng(c.synthetic_seed.value_or(c.trainer.seed));
    const Dataset all = gen_synthetic(*c.synthetic, rng);
    DatasetSplit parts = split_classes(all, c.split, c.synthetic_seed.value_or(c.trainer.seed));
    train_set = std::move(parts.train);
    val_set = std::move(parts.val);
    test_set = std::move(parts.test);
    have_val = true;
  }
  const Dataset* val = have_val ? &val_set : nullptr;
  check_training_data(c.trainer, train_set, val);

  if (fs::exists(c.run_dir) && !fs::is_empty(c.run_dir)) {
    if (!g.force) {
      throw ContractViolation("run directory " + c.run_dir.string() + " is not empty; pass --force to overwrite");
    }
    clear_run_dir(c.run_dir);
  }
  fs::create_directories(c.run_dir);
  write_text(c.run_dir / "config.txt", config_snapshot(c));
  if (test_set) {
    fs::create_directories(c.run_dir / "data");
    save_dataset(train_set, c.run_dir / "data" / "train.l2gd");
    save_dataset(val_set, c.run_dir / "data" / "val.l2gd");
    save_dataset(*test_set, c.run_dir / "data" / "test.l2gd");
  }

  const TrainResult result = train(c.trainer, train_set, val, c.run_dir);
  const auto& last = result.log.records().back();
  out << "trained " << mode_name(c.trainer.mode) << "+" << head_name(c.trainer.head) << " for "
      << result.log.size() << " meta-iterations; final meta loss " << fmt("%.6f", last.meta_loss);
  for (auto it = result.log.records().rbegin(); it != result.log.records().rend(); ++it) {
    if (it->val_accuracy) {
      out << ", val accuracy " << fmt("%.4f", *it->val_accuracy) << " at episode " << it->episode + 1;
      break;
    }
  }
  out << "\nrun directory: " << c.run_dir.string() << "\n";
  return kExitOk;
}

// --- eval -------------------------------------------------------------------

struct EvalOptions {
  ArchOptions arch;
  std::string checkpoint;
  std::string data;
  std::optional<std::size_t> way, shot, query, episodes, runs;
  bool grid = false;
  std::string shots = "1,5,10";
  std::string ways = "5,7,10";
  std::string out;
};

int cmd_eval(const EvalOptions& o, const Globals& g, std::ostream& out) {
  const RunConfig c = base_config(o.arch);
  const Dataset data = load_dataset(o.data);
  const LoadedModel m = load_model(c, o.checkpoint, data.feature_dim());
  const std::size_t threads = g.threads.value_or(c.trainer.threads);
  const std::uint64_t seed = resolve_seed(g);

  Protocol protocol;
  protocol.way = o.way.value_or(c.trainer.way);
  protocol.shot = o.shot.value_or(c.trainer.shot);
  protocol.queries = o.query.value_or(c.trainer.queries);
  protocol.episodes = o.episodes.value_or(c.eval_episodes);
  protocol.runs = o.runs.value_or(c.eval_runs);

  std::vector<EvalReport> reports;
  if (o.grid) {
    reports = eval_grid(m.model, m.params, data, parse_size_list(o.shots), parse_size_list(o.ways),
                        protocol.queries, protocol.episodes, protocol.runs, seed, threads);
  } else {
    reports.push_back(run_protocol(m.model, m.params, data, protocol, seed, threads));
  }

  const fs::path prefix = o.out.empty() ? fs::path(o.checkpoint).parent_path() / "report" : fs::path(o.out);
  const std::string text = report_text(reports);
  write_text(prefix.string() + ".csv", report_csv(reports));
  write_text(prefix.string() + ".txt", text);
  out << text << "wrote " << prefix.string() << ".csv and " << prefix.string() << ".txt\n";
  return kExitOk;
}

// --- plot -------------------------------------------------------------------

struct PlotOptions {
  ArchOptions arch;
  std::string kind;
  std::string run_dir;
  std::string log;
  std::string series;
  std::string checkpoint;
  std::string data;
  std::optional<std::size_t> way, shot, query;
  std::string out;
};

int plot_convergence(const PlotOptions& o, std::ostream& out) {
  if (o.log.empty() && o.run_dir.empty()) throw ContractViolation("plot convergence needs --run-dir or --log");
  const fs::path log_path = o.log.empty() ? fs::path(o.run_dir) / "log.csv" : fs::path(o.log);
  const RunLog log = RunLog::from_csv(binary::read_file(log_path));

  std::vector<Series> series;
  if (o.series.empty()) {
    series.push_back(Series::meta_loss);
    if (!log.empty() && log.records().front().inner_loss) series.push_back(Series::inner_loss);
  } else {
    std::string_view rest = o.series;
    for (;;) {
      const auto comma = rest.find(',');
      series.push_back(parse_series(rest.substr(0, comma)));
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
  }
  const fs::path target = o.out.empty() ? log_path.parent_path() / "convergence.svg" : fs::path(o.out);
  write_text(target, convergence_svg(log, series));
  out << "wrote " << target.string() << "\n";
  return kExitOk;
}

int plot_embeddings(const PlotOptions& o, const Globals& g, std::ostream& out) {
  if (o.checkpoint.empty() || o.data.empty()) {
    throw ContractViolation("plot embeddings needs --checkpoint and --data");
  }
  const RunConfig c = base_config(o.arch);
  const Dataset data = load_dataset(o.data);
  const LoadedModel m = load_model(c, o.checkpoint, data.feature_dim());

  Rng rng = Rng(resolve_seed(g)).derive(0);
  const Episode episode = sample_episode(data, o.way.value_or(c.trainer.way), o.shot.value_or(c.trainer.shot),
                                         o.query.value_or(c.trainer.queries), rng);
  const Tensor support = embed_rows(m, episode.support_features());
  const Tensor query = embed_rows(m, episode.query_features());
  std::vector<double> values(support.values().begin(), support.values().end());
  values.insert(values.end(), query.values().begin(), query.values().end());
  const std::size_t ns = support.shape()[0], nq = query.shape()[0];
  const Tensor rows({ns + nq, support.shape()[1]}, std::move(values));

  std::vector<std::size_t> classes;
  std::vector<bool> is_support;
  for (std::size_t c2 = 0; c2 < episode.way(); ++c2) {
    for (std::size_t i = 0; i < episode.shot(); ++i) {
      classes.push_back(c2);
      is_support.push_back(true);
    }
  }
  for (std::size_t label : episode.query_labels()) {
    classes.push_back(label);
    is_support.push_back(false);
  }
  const Projection2D projection = pca_2d(rows, classes, is_support);
  const fs::path target =
      o.out.empty() ? fs::path(o.checkpoint).parent_path() / "embeddings.svg" : fs::path(o.out);
  write_text(target, scatter_svg(projection, episode.source_labels()));
  out << "wrote " << target.string() << " (" << ns << " supports, " << nq << " queries)\n";
  return kExitOk;
}

int cmd_plot(const PlotOptions& o, const Globals& g, std::ostream& out) {
  if (o.kind == "convergence") return plot_convergence(o, out);
  if (o.kind == "embeddings") return plot_embeddings(o, g, out);
  throw ContractViolation("unknown plot kind '" + o.kind + "' (expected convergence or embeddings)");
}

// --- export-embeddings --------------------------------------------------------

struct ExportOptions {
  ArchOptions arch;
  std::string checkpoint;
  std::string data;
  std::string out;
};

int cmd_export(const ExportOptions& o, std::ostream& out) {
  const RunConfig c = base_config(o.arch);
  const Dataset data = load_dataset(o.data);
  const LoadedModel m = load_model(c, o.checkpoint, data.feature_dim());

  std::string csv;
  std::size_t rows = 0;
  for (const auto& cls : data.classes()) {
    const Tensor e = embed_rows(m, Tensor::from_rows(cls.instances));
    const std::size_t width = e.shape()[1];
    if (rows == 0) {
      csv += "label,row";
      for (std::size_t j = 0; j < width; ++j) csv += ",e" + std::to_string(j);
      csv += "\n";
    }
    for (std::size_t r = 0; r < e.shape()[0]; ++r) {
      csv += cls.label + "," + std::to_string(r);
      for (std::size_t j = 0; j < width; ++j) csv += "," + fmt("%.17g", e.at(r, j));
      csv += "\n";
      ++rows;
    }
  }
  write_text(o.out, csv);
  out << "wrote " << rows << " embeddings to " << o.out << "\n";
  return kExitOk;
}

// --- gradcheck ----------------------------------------------------------------

int cmd_gradcheck(bool inject_sign_flip, const Globals& g, std::ostream& out) {
  testing_hooks::set_inner_update_sign_flip(inject_sign_flip);
  GradcheckReport report;
  try {
    report = run_gradcheck_suite(resolve_seed(g));
  } catch (...) {
    testing_hooks::set_inner_update_sign_flip(false);
    throw;
  }
  testing_hooks::set_inner_update_sign_flip(false);
  out << format_report(report);
  if (report.passed()) return kExitOk;
  for (const auto& f : report.failures()) out << "failed: " << f.group << " / " << f.name << "\n";
  return kExitNumeric;
}

}  // namespace

int exit_code_for(const std::exception& error) {
  if (dynamic_cast<const NumericError*>(&error)) return kExitNumeric;
  if (dynamic_cast<const IoError*>(&error) || dynamic_cast<const FormatError*>(&error) ||
      dynamic_cast<const fs::filesystem_error*>(&error)) {
    return kExitIo;
  }
  if (dynamic_cast<const ContractViolation*>(&error) || dynamic_cast<const GenerationError*>(&error)) {
    return kExitConfig;
  }
  return kExitInternal;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Few-shot metric learning with episodic, MAML+X and L2G training", "l2g"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "seed for every random choice (default: config, then $L2G_SEED, then 1)");
  app.add_option("--threads", g.threads, "worker threads; results do not depend on it")
      ->check(CLI::PositiveNumber);
  app.add_flag("--force", g.force, "overwrite an existing run directory or output file");

  GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic L2GDATA1 dataset");
  gen_cmd->add_option("--config", gen.config, "config file with synthetic.* keys");
  gen_cmd->add_option("--kind", gen.kind, "gaussian_clusters or rotated_rings");
  gen_cmd->add_option("--classes", gen.classes, "number of classes");
  gen_cmd->add_option("--latent-dim", gen.latent_dim);
  gen_cmd->add_option("--feature-dim", gen.feature_dim);
  gen_cmd->add_option("--instances", gen.instances, "instances per class");
  gen_cmd->add_option("--max-way", gen.max_way, "largest way that must admit disjoint pairs");
  gen_cmd->add_option("--separation", gen.separation, "minimum latent distance between class centres");
  gen_cmd->add_option("--noise", gen.noise, "instance noise standard deviation");
  gen_cmd->add_option("--mixing-seed", gen.mixing_seed);
  gen_cmd->add_option("--out", gen.out, "output file")->required();
  gen_cmd->add_option("--split", gen.split, "also write _train/_val/_test files with these class fractions");

  TrainOptions tr;
  auto* train_cmd = app.add_subcommand("train", "train a model from a config file");
  train_cmd->add_option("config", tr.config, "config file")->required();
  train_cmd->add_option("--run-dir", tr.run_dir, "overrides run_dir from the config");

  EvalOptions ev;
  auto* eval_cmd = app.add_subcommand("eval", "meta-test a checkpoint on a dataset");
  add_arch_options(eval_cmd, ev.arch);
  eval_cmd->add_option("--checkpoint", ev.checkpoint)->required();
  eval_cmd->add_option("--data", ev.data, "meta-test dataset")->required();
  eval_cmd->add_option("--way", ev.way);
  eval_cmd->add_option("--shot", ev.shot);
  eval_cmd->add_option("--query", ev.query, "queries per class");
  eval_cmd->add_option("--episodes", ev.episodes, "episodes per run (default 600)");
  eval_cmd->add_option("--runs", ev.runs, "independent runs (default 5)");
  eval_cmd->add_flag("--grid", ev.grid, "evaluate every (shot, way) combination");
  eval_cmd->add_option("--shots", ev.shots, "grid shots")->capture_default_str();
  eval_cmd->add_option("--ways", ev.ways, "grid ways")->capture_default_str();
  eval_cmd->add_option("--out", ev.out, "report path prefix (writes .csv and .txt)");

  PlotOptions pl;
  auto* plot_cmd = app.add_subcommand("plot", "render a convergence or embedding SVG");
  add_arch_options(plot_cmd, pl.arch);
  plot_cmd->add_option("kind", pl.kind, "convergence or embeddings")->required();
  plot_cmd->add_option("--run-dir", pl.run_dir, "run directory holding log.csv");
  plot_cmd->add_option("--log", pl.log, "log.csv path");
  plot_cmd->add_option("--series", pl.series, "comma list of meta_loss, inner_loss, lr, val_accuracy");
  plot_cmd->add_option("--checkpoint", pl.checkpoint);
  plot_cmd->add_option("--data", pl.data, "dataset to sample the plotted episode from");
  plot_cmd->add_option("--way", pl.way);
  plot_cmd->add_option("--shot", pl.shot);
  plot_cmd->add_option("--query", pl.query);
  plot_cmd->add_option("--out", pl.out, "output SVG");

  ExportOptions ex;
  auto* export_cmd = app.add_subcommand("export-embeddings", "write the embedding of every instance as CSV");
  add_arch_options(export_cmd, ex.arch);
  export_cmd->add_option("--checkpoint", ex.checkpoint)->required();
  export_cmd->add_option("--data", ex.data)->required();
  export_cmd->add_option("--out", ex.out, "output CSV")->required();

  bool inject_sign_flip = false;
  auto* grad_cmd = app.add_subcommand("gradcheck", "run the gradient and bilevel self-checks");
  grad_cmd->add_flag("--inject-sign-flip", inject_sign_flip)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen_data(gen, g, out);
    if (train_cmd->parsed()) return cmd_train(tr, g, out);
    if (eval_cmd->parsed()) return cmd_eval(ev, g, out);
    if (plot_cmd->parsed()) return cmd_plot(pl, g, out);
    if (export_cmd->parsed()) return cmd_export(ex, out);
    if (grad_cmd->parsed()) return cmd_gradcheck(inject_sign_flip, g, out);
  } catch (const TrainingAborted& e) {
    err << "error: numeric abort at episode " << e.episode() << ": " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kExitInternal;
}

}  // namespace l2g
