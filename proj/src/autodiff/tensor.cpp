#include <atomic>
#include <cmath>
#include <cstring>
#include <sstream>

#include "l2g/errors.hpp"
#include "tape.hpp"

namespace l2g {

namespace {

std::atomic<std::uint64_t> next_generation{1};

void require_finite(std::span<const double> values, const char* where) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(where) + ": non-finite value");
    }
  }
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor() : values_(std::make_shared<const std::vector<double>>(1, 0.0)) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
  for (std::size_t d : shape_) {
    if (d == 0) throw ContractViolation("tensor: zero-sized dimension in shape " + shape_to_string(shape_));
  }
  if (shape_numel(shape_) != values.size()) {
    throw ContractViolation("tensor: shape " + shape_to_string(shape_) + " does not hold " +
                            std::to_string(values.size()) + " values");
  }
  require_finite(values, "tensor");
  values_ = std::make_shared<const std::vector<double>>(std::move(values));
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw ContractViolation("from_rows: no rows");
  const std::size_t width = rows.front().size();
  std::vector<double> flat;
  flat.reserve(rows.size() * width);
  for (const auto& row : rows) {
    if (row.size() != width) throw ContractViolation("from_rows: ragged rows");
    flat.insert(flat.end(), row.begin(), row.end());
  }
  return Tensor({rows.size(), width}, std::move(flat));
}

double Tensor::at(std::size_t row, std::size_t col) const {
  if (rank() != 2 || row >= shape_[0] || col >= shape_[1]) {
    throw ContractViolation("at: index out of range for shape " + shape_to_string(shape_));
  }
  return (*values_)[row * shape_[1] + col];
}

double Tensor::item() const {
  if (numel() != 1) throw ContractViolation("item: tensor has shape " + shape_to_string(shape_));
  return (*values_)[0];
}

Tensor Tensor::detach() const {
  Tensor out = *this;
  out.tape_.reset();
  out.node_ = 0;
  return out;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.values().data(), b.values().data(), a.numel() * sizeof(double)) == 0;
}

bool bit_equal(const Parameters& a, const Parameters& b) {
  if (a.size() != b.size()) return false;
  for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib) {
    if (ia->first != ib->first || !bit_equal(ia->second, ib->second)) return false;
  }
  return true;
}

Parameters detach_all(const Parameters& params) {
  Parameters out;
  for (const auto& [name, t] : params) out.emplace(name, t.detach());
  return out;
}

std::size_t parameter_count(const Parameters& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.numel();
  return n;
}

Tensor TensorAccess::make(Shape shape, std::vector<double> values) {
  Tensor t;
  t.shape_ = std::move(shape);
  t.values_ = std::make_shared<const std::vector<double>>(std::move(values));
  return t;
}

Tensor TensorAccess::attach(const Tensor& value, std::shared_ptr<detail::Tape> tape, std::size_t node) {
  Tensor t = value;
  t.tape_ = std::move(tape);
  t.node_ = node;
  return t;
}

Tensor node_handle(const std::shared_ptr<detail::Tape>& tape, std::size_t id) {
  return TensorAccess::attach(tape->nodes[id].value, tape, id);
}

std::size_t record_constant(detail::Tape& tape, const Tensor& value) {
  detail::Node node;
  node.kind = OpKind::constant;
  node.value = value.detach();
  tape.nodes.push_back(std::move(node));
  return tape.nodes.size() - 1;
}

Graph::Graph() : tape_(std::make_shared<detail::Tape>()) {
  tape_->generation = next_generation.fetch_add(1, std::memory_order_relaxed);
}

Tensor Graph::watch(const Tensor& value) {
  detail::Node node;
  node.kind = OpKind::leaf;
  node.value = value.detach();
  tape_->nodes.push_back(std::move(node));
  return TensorAccess::attach(value.detach(), tape_, tape_->nodes.size() - 1);
}

Parameters Graph::watch(const Parameters& params) {
  Parameters out;
  for (const auto& [name, t] : params) out.emplace(name, watch(t));
  return out;
}

std::size_t Graph::size() const { return tape_->nodes.size(); }

std::uint64_t Graph::generation() const { return tape_->generation; }

}  // namespace l2g
