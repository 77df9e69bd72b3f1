#include "l2g/config.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include "l2g/binary_io.hpp"

namespace l2g {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::size_t parse_size(std::string_view s) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw ContractViolation("expected a non-negative integer, got '" + std::string(s) + "'");
  }
  return v;
}

double parse_real(std::string_view s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ContractViolation("expected a finite number, got '" + std::string(s) + "'");
  }
  return v;
}

// Shortest text that reads back to the same double.
std::string real(double v) {
  char buf[40];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

SyntheticSpec& synthetic(RunConfig& c) {
  if (!c.synthetic) c.synthetic.emplace();
  return *c.synthetic;
}

struct Field {
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<std::pair<std::string, Field>>& schema() {
  static const std::vector<std::pair<std::string, Field>> fields = [] {
    std::vector<std::pair<std::string, Field>> f;
    auto add = [&](std::string key, Field field) { f.emplace_back(std::move(key), std::move(field)); };
    auto size_field = [&](std::string key, std::size_t TrainerConfig::*member) {
      add(std::move(key), {[member](RunConfig& c, std::string_view v) { c.trainer.*member = parse_size(v); },
                           [member](const RunConfig& c) { return std::to_string(c.trainer.*member); }});
    };
    auto synth_size = [&](std::string key, std::size_t SyntheticSpec::*member) {
      add(std::move(key), {[member](RunConfig& c, std::string_view v) { synthetic(c).*member = parse_size(v); },
                           [member](const RunConfig& c) { return std::to_string((*c.synthetic).*member); }});
    };
    auto synth_real = [&](std::string key, double SyntheticSpec::*member) {
      add(std::move(key), {[member](RunConfig& c, std::string_view v) { synthetic(c).*member = parse_real(v); },
                           [member](const RunConfig& c) { return real((*c.synthetic).*member); }});
    };

    add("mode", {[](RunConfig& c, std::string_view v) { c.trainer.mode = parse_mode(v); },
                 [](const RunConfig& c) { return std::string(mode_name(c.trainer.mode)); }});
    add("head", {[](RunConfig& c, std::string_view v) { c.trainer.head = parse_head(v); },
                 [](const RunConfig& c) { return std::string(head_name(c.trainer.head)); }});
    add("alpha", {[](RunConfig& c, std::string_view v) { c.trainer.alpha = parse_real(v); },
                  [](const RunConfig& c) { return real(c.trainer.alpha); }});
    add("beta", {[](RunConfig& c, std::string_view v) { c.trainer.beta = parse_real(v); },
                 [](const RunConfig& c) { return real(c.trainer.beta); }});
    size_field("meta_batch", &TrainerConfig::meta_batch);
    add("grad_mode", {[](RunConfig& c, std::string_view v) { c.trainer.grad_mode = parse_grad_mode(v); },
                      [](const RunConfig& c) { return std::string(grad_mode_name(c.trainer.grad_mode)); }});
    add("reduction", {[](RunConfig& c, std::string_view v) { c.trainer.reduction = parse_reduction(v); },
                      [](const RunConfig& c) { return std::string(reduction_name(c.trainer.reduction)); }});
    add("optimizer", {[](RunConfig& c, std::string_view v) { c.trainer.optimizer = parse_optimizer(v); },
                      [](const RunConfig& c) { return std::string(optimizer_name(c.trainer.optimizer)); }});
    size_field("total_episodes", &TrainerConfig::total_episodes);
    size_field("eval_interval", &TrainerConfig::eval_interval);
    size_field("val_episodes", &TrainerConfig::val_episodes);
    size_field("way", &TrainerConfig::way);
    size_field("shot", &TrainerConfig::shot);
    size_field("query", &TrainerConfig::queries);
    size_field("schedule_k", &TrainerConfig::schedule_k);
    add("seed", {[](RunConfig& c, std::string_view v) { c.trainer.seed = parse_size(v); },
                 [](const RunConfig& c) { return std::to_string(c.trainer.seed); }});
    size_field("threads", &TrainerConfig::threads);
    add("embed_dims", {[](RunConfig& c, std::string_view v) { c.trainer.embed_dims = parse_size_list(v); },
                       [](const RunConfig& c) { return format_size_list(c.trainer.embed_dims); }});
    add("relation_hidden",
        {[](RunConfig& c, std::string_view v) { c.trainer.relation_hidden = parse_size_list(v); },
         [](const RunConfig& c) { return format_size_list(c.trainer.relation_hidden); }});
    add("run_dir", {[](RunConfig& c, std::string_view v) { c.run_dir = std::string(v); },
                    [](const RunConfig& c) { return c.run_dir.string(); }});

    add("data.train", {[](RunConfig& c, std::string_view v) { c.train_data = std::string(v); },
                       [](const RunConfig& c) { return c.train_data ? c.train_data->string() : std::string(); }});
    add("data.val", {[](RunConfig& c, std::string_view v) { c.val_data = std::string(v); },
                     [](const RunConfig& c) { return c.val_data ? c.val_data->string() : std::string(); }});
    add("data.split", {[](RunConfig& c, std::string_view v) {
                         std::array<double, 3> parts{};
                         std::size_t i = 0;
                         std::string_view rest = v;
                         for (;; ++i) {
                           const auto comma = rest.find(',');
                           if (i >= 3) throw ContractViolation("expected three fractions");
                           parts[i] = parse_real(trim(rest.substr(0, comma)));
                           if (comma == std::string_view::npos) break;
                           rest = rest.substr(comma + 1);
                         }
                         if (i != 2) throw ContractViolation("expected three fractions");
                         c.split = parts;
                       },
                       [](const RunConfig& c) {
                         return real(c.split[0]) + "," + real(c.split[1]) + "," + real(c.split[2]);
                       }});

    add("synthetic.kind", {[](RunConfig& c, std::string_view v) { synthetic(c).kind = parse_generator(v); },
                           [](const RunConfig& c) { return std::string(generator_name(c.synthetic->kind)); }});
    synth_size("synthetic.num_classes", &SyntheticSpec::num_classes);
    synth_size("synthetic.latent_dim", &SyntheticSpec::latent_dim);
    synth_size("synthetic.feature_dim", &SyntheticSpec::feature_dim);
    synth_real("synthetic.class_separation", &SyntheticSpec::class_separation);
    synth_real("synthetic.noise_std", &SyntheticSpec::noise_std);
    add("synthetic.mixing_seed",
        {[](RunConfig& c, std::string_view v) { synthetic(c).mixing_seed = parse_size(v); },
         [](const RunConfig& c) { return std::to_string(c.synthetic->mixing_seed); }});
    synth_size("synthetic.instances_per_class", &SyntheticSpec::instances_per_class);
    synth_size("synthetic.max_way", &SyntheticSpec::max_way);
    add("synthetic.seed", {[](RunConfig& c, std::string_view v) {
                             synthetic(c);
                             c.synthetic_seed = parse_size(v);
                           },
                           [](const RunConfig& c) {
                             return c.synthetic_seed ? std::to_string(*c.synthetic_seed) : std::string();
                           }});

    add("eval.episodes", {[](RunConfig& c, std::string_view v) { c.eval_episodes = parse_size(v); },
                          [](const RunConfig& c) { return std::to_string(c.eval_episodes); }});
    add("eval.runs", {[](RunConfig& c, std::string_view v) { c.eval_runs = parse_size(v); },
                      [](const RunConfig& c) { return std::to_string(c.eval_runs); }});
    return f;
  }();
  return fields;
}

const Field* find_field(std::string_view key) {
  for (const auto& [name, field] : schema()) {
    if (name == key) return &field;
  }
  return nullptr;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& entry : schema()) k.push_back(entry.first);
    return k;
  }();
  return keys;
}

RunConfig parse_config(std::string_view text) {
  RunConfig config;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    const std::string where = "config line " + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ContractViolation(where + ": expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    const Field* field = find_field(key);
    if (!field) throw ContractViolation(where + ": unknown key '" + key + "'");
    if (!config.keys.insert(key).second) throw ContractViolation(where + ": duplicate key '" + key + "'");
    try {
      field->set(config, value);
    } catch (const ContractViolation& e) {
      throw ContractViolation(where + ": " + key + ": " + e.what());
    }
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  RunConfig config = parse_config(binary::read_file(path));
  const auto base = path.parent_path();
  auto resolve = [&](std::filesystem::path& p) {
    if (!p.empty() && p.is_relative()) p = base / p;
  };
  if (config.train_data) resolve(*config.train_data);
  if (config.val_data) resolve(*config.val_data);
  resolve(config.run_dir);
  return config;
}

std::string config_snapshot(const RunConfig& config) {
  std::ostringstream out;
  for (const auto& [key, field] : schema()) {
    if (key.starts_with("synthetic.") && !config.synthetic) continue;
    const std::string value = field.get(config);
    // Optional fields that are unset are left out rather than written empty.
    if (value.empty()) continue;
    out << key << " = " << value << "\n";
  }
  return out.str();
}

std::string_view reduction_name(BatchReduction reduction) {
  return reduction == BatchReduction::mean ? "mean" : "sum";
}

BatchReduction parse_reduction(std::string_view name) {
  if (name == "mean") return BatchReduction::mean;
  if (name == "sum") return BatchReduction::sum;
  throw ContractViolation("unknown reduction '" + std::string(name) + "' (expected mean or sum)");
}

std::string_view optimizer_name(MetaOptimizer optimizer) {
  return optimizer == MetaOptimizer::adam ? "adam" : "sgd";
}

MetaOptimizer parse_optimizer(std::string_view name) {
  if (name == "adam") return MetaOptimizer::adam;
  if (name == "sgd") return MetaOptimizer::sgd;
  throw ContractViolation("unknown optimizer '" + std::string(name) + "' (expected adam or sgd)");
}

std::string_view generator_name(GeneratorKind kind) {
  return kind == GeneratorKind::gaussian_clusters ? "gaussian_clusters" : "rotated_rings";
}

GeneratorKind parse_generator(std::string_view name) {
  if (name == "gaussian_clusters") return GeneratorKind::gaussian_clusters;
  if (name == "rotated_rings") return GeneratorKind::rotated_rings;
  throw ContractViolation("unknown generator '" + std::string(name) +
                          "' (expected gaussian_clusters or rotated_rings)");
}

std::vector<std::size_t> parse_size_list(std::string_view text) {
  std::vector<std::size_t> out;
  std::string_view rest = text;
  for (;;) {
    const auto comma = rest.find(',');
    out.push_back(parse_size(trim(rest.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  return out;
}

std::string format_size_list(const std::vector<std::size_t>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(values[i]);
  }
  return out;
}

}  // namespace l2g
