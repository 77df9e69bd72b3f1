#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace l2g {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {
struct Tape;
}

class Graph;

// Dense row-major array of doubles. The payload is immutable and shared
// between copies; a tensor may additionally point at a node on a tape, in
// which case operations applied to it are recorded for differentiation.
class Tensor {
 public:
  Tensor();  // rank-0 zero
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  // Rows must share one width. Produces shape {rows.size(), width}.
  static Tensor from_rows(const std::vector<std::vector<double>>& rows);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return values_->size(); }
  std::span<const double> values() const { return *values_; }
  double operator[](std::size_t flat_index) const { return (*values_)[flat_index]; }
  double at(std::size_t row, std::size_t col) const;
  // Value of a single-element tensor.
  double item() const;

  bool attached() const { return tape_ != nullptr; }
  std::size_t node_id() const { return node_; }
  // Same values, no graph reference.
  Tensor detach() const;

  // Shares the payload of two tensors; used to check aliasing in tests.
  bool shares_storage_with(const Tensor& other) const { return values_ == other.values_; }

 private:
  friend class Graph;
  friend struct TensorAccess;

  Shape shape_;
  std::shared_ptr<const std::vector<double>> values_;
  std::shared_ptr<detail::Tape> tape_;
  std::size_t node_ = 0;
};

bool bit_equal(const Tensor& a, const Tensor& b);

// Named tensor collection: embedding weights, relation-module weights, and
// anything else the loss is differentiated against.
using Parameters = std::map<std::string, Tensor>;

// Same key set and shapes as the Parameters it was computed for.
using GradientMap = std::map<std::string, Tensor>;

bool bit_equal(const Parameters& a, const Parameters& b);
Parameters detach_all(const Parameters& params);
std::size_t parameter_count(const Parameters& params);

}  // namespace l2g
