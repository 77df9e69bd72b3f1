#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "l2g/binary_io.hpp"
#include "l2g/errors.hpp"
#include "l2g/tasks.hpp"

namespace l2g {

namespace {
constexpr std::string_view kDatasetMagic = "L2GDATA1";
}

Dataset::Dataset(std::size_t feature_dim, std::vector<ClassData> classes)
    : feature_dim_(feature_dim), classes_(std::move(classes)) {
  if (feature_dim_ == 0) throw ContractViolation("dataset: feature dimension must be positive");
  std::sort(classes_.begin(), classes_.end(), [](const ClassData& a, const ClassData& b) { return a.label < b.label; });
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    const ClassData& c = classes_[i];
    if (i > 0 && classes_[i - 1].label == c.label) throw ContractViolation("dataset: duplicate label '" + c.label + "'");
    if (c.instances.empty()) throw ContractViolation("dataset: class '" + c.label + "' is empty");
    for (const auto& row : c.instances) {
      if (row.size() != feature_dim_) {
        throw ContractViolation("dataset: class '" + c.label + "' has a row of width " + std::to_string(row.size()) +
                                ", expected " + std::to_string(feature_dim_));
      }
      for (double v : row) {
        if (!std::isfinite(v)) throw NumericError("dataset: class '" + c.label + "' has a non-finite value");
      }
    }
  }
}

std::vector<std::string> Dataset::labels() const {
  std::vector<std::string> out;
  for (const auto& c : classes_) out.push_back(c.label);
  return out;
}

std::size_t Dataset::min_class_size() const {
  std::size_t m = classes_.empty() ? 0 : classes_.front().instances.size();
  for (const auto& c : classes_) m = std::min(m, c.instances.size());
  return m;
}

std::size_t Dataset::instance_count() const {
  std::size_t n = 0;
  for (const auto& c : classes_) n += c.instances.size();
  return n;
}

Episode::Episode(std::size_t way, std::size_t shot, std::size_t queries, std::vector<std::vector<Instance>> support,
                 std::vector<std::vector<Instance>> query, std::vector<std::string> source_labels)
    : way_(way),
      shot_(shot),
      queries_(queries),
      support_(std::move(support)),
      query_(std::move(query)),
      source_labels_(std::move(source_labels)) {
  if (way_ == 0 || shot_ == 0 || queries_ == 0) throw ContractViolation("episode: way, shot and queries must be positive");
  if (support_.size() != way_ || query_.size() != way_ || source_labels_.size() != way_) {
    throw ContractViolation("episode: expected " + std::to_string(way_) + " classes");
  }
  std::set<std::string> distinct(source_labels_.begin(), source_labels_.end());
  if (distinct.size() != way_) throw ContractViolation("episode: repeated class label");
  std::size_t width = 0;
  for (std::size_t c = 0; c < way_; ++c) {
    if (support_[c].size() != shot_ || query_[c].size() != queries_) {
      throw ContractViolation("episode: class " + std::to_string(c) + " has " + std::to_string(support_[c].size()) +
                              " support and " + std::to_string(query_[c].size()) + " query instances, expected " +
                              std::to_string(shot_) + " and " + std::to_string(queries_));
    }
    std::set<std::size_t> rows;
    for (const auto* group : {&support_[c], &query_[c]}) {
      for (const Instance& inst : *group) {
        if (inst.class_index != c) throw ContractViolation("episode: instance filed under the wrong class");
        if (!rows.insert(inst.source_index).second) {
          throw ContractViolation("episode: class " + std::to_string(c) + " reuses source row " +
                                  std::to_string(inst.source_index));
        }
        if (width == 0) width = inst.features.size();
        if (inst.features.size() != width || width == 0) throw ContractViolation("episode: ragged features");
      }
    }
  }
}

namespace {

Tensor stack(const std::vector<std::vector<Instance>>& groups) {
  std::vector<std::vector<double>> rows;
  for (const auto& g : groups) {
    for (const auto& inst : g) rows.push_back(inst.features);
  }
  return Tensor::from_rows(rows);
}

}  // namespace

Tensor Episode::support_features() const { return stack(support_); }
Tensor Episode::query_features() const { return stack(query_); }

std::vector<std::size_t> Episode::query_labels() const {
  std::vector<std::size_t> out;
  out.reserve(query_count());
  for (std::size_t c = 0; c < way_; ++c) out.insert(out.end(), queries_, c);
  return out;
}

std::vector<std::size_t> Episode::support_group_sizes() const { return std::vector<std::size_t>(way_, shot_); }

TaskPair::TaskPair(Episode first, Episode second) : first_(std::move(first)), second_(std::move(second)) {
  const auto& a = first_.source_labels();
  for (const auto& label : second_.source_labels()) {
    if (std::find(a.begin(), a.end(), label) != a.end()) {
      throw ContractViolation("task pair: class '" + label + "' appears in both episodes");
    }
  }
}

std::string encode_dataset(const Dataset& dataset) {
  std::string out(kDatasetMagic);
  binary::put_u32(out, static_cast<std::uint32_t>(dataset.num_classes()));
  for (const auto& c : dataset.classes()) {
    binary::put_u32(out, static_cast<std::uint32_t>(c.label.size()));
    out += c.label;
    binary::put_u32(out, static_cast<std::uint32_t>(c.instances.size()));
    binary::put_u32(out, static_cast<std::uint32_t>(dataset.feature_dim()));
    for (const auto& row : c.instances) {
      for (double v : row) binary::put_f64(out, v);
    }
  }
  return out;
}

Dataset decode_dataset(std::string_view bytes) {
  binary::Reader in(bytes, "L2GDATA1");
  if (in.take(kDatasetMagic.size()) != kDatasetMagic) throw FormatError("L2GDATA1: bad magic");
  const std::uint32_t count = in.u32();
  std::vector<ClassData> classes;
  std::size_t dim = 0;
  for (std::uint32_t c = 0; c < count; ++c) {
    ClassData cls;
    cls.label = std::string(in.take(in.u32()));
    const std::uint32_t n = in.u32();
    const std::uint32_t d = in.u32();
    if (n == 0) throw FormatError("L2GDATA1: class '" + cls.label + "' is empty");
    if (d == 0 || (dim != 0 && d != dim)) {
      throw FormatError("L2GDATA1: class '" + cls.label + "' has dimension " + std::to_string(d) +
                        (dim ? ", expected " + std::to_string(dim) : std::string()));
    }
    dim = d;
    if (in.remaining() / 8 / d < n) throw FormatError("L2GDATA1: truncated values in class '" + cls.label + "'");
    cls.instances.assign(n, std::vector<double>(d));
    for (auto& row : cls.instances) {
      for (double& v : row) v = in.f64();
    }
    classes.push_back(std::move(cls));
  }
  if (!in.at_end()) throw FormatError("L2GDATA1: trailing bytes after last class");
  if (count == 0) throw FormatError("L2GDATA1: no classes");
  try {
    return Dataset(dim, std::move(classes));
  } catch (const ContractViolation& e) {
    throw FormatError(std::string("L2GDATA1: ") + e.what());
  }
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  binary::write_file(path, encode_dataset(dataset));
}

Dataset load_dataset(const std::filesystem::path& path) { return decode_dataset(binary::read_file(path)); }

namespace binary {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
  return buf.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace binary

}  // namespace l2g
