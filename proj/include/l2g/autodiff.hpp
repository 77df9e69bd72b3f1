#pragma once

#include <cstdint>
#include <functional>
#include <string_view>

#include "l2g/tensor.hpp"

namespace l2g {

enum class OpKind {
  leaf,
  constant,
  add,
  sub,
  mul_elementwise,
  matmul,
  relu,
  sigmoid,
  concat_last_axis,
  sum_all,
  mean_all,
  square,
  negate,
  scale_by_constant,
  logsumexp_last_axis,
  sq_euclidean_rowwise,
  // Helpers required to express the backward rules of the ops above as
  // recordable ops, which is what makes gradients of gradients possible.
  transpose,
  slice_last_axis,
  broadcast_scalar,
  exp,
  sum_last_axis,
  expand_last_axis,
  reshape,
};

std::string_view op_name(OpKind kind);

// Owner of one append-only tape. Tensors produced from watched tensors keep
// the tape alive; a graph is meant to live for a single training step.
class Graph {
 public:
  Graph();

  // Attach a leaf node carrying the same values.
  Tensor watch(const Tensor& value);
  Parameters watch(const Parameters& params);

  std::size_t size() const;
  // Unique per graph instance within the process.
  std::uint64_t generation() const;

 private:
  std::shared_ptr<detail::Tape> tape_;
};

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
// relu'(0) is taken as 0.
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor concat_last_axis(std::span<const Tensor> parts);
Tensor concat_last_axis(const Tensor& a, const Tensor& b);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor square(const Tensor& a);
Tensor negate(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
// Max-shifted log(sum(exp(x))) over the last axis; drops that axis.
Tensor logsumexp_last_axis(const Tensor& a);
// Pairwise squared distances between the rows of a [m,d] and b [n,d] -> [m,n].
Tensor sq_euclidean_rowwise(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& a);
Tensor slice_last_axis(const Tensor& a, std::size_t begin, std::size_t length);
Tensor broadcast_scalar(const Tensor& a, const Shape& shape);
Tensor exp(const Tensor& a);
Tensor sum_last_axis(const Tensor& a);
Tensor expand_last_axis(const Tensor& a, std::size_t width);
Tensor reshape(const Tensor& a, const Shape& shape);

// Reverse-mode gradient of a scalar loss with respect to every watched
// parameter. With create_graph the returned tensors are themselves on the
// tape, so losses built from them can be differentiated again.
GradientMap grad(const Tensor& loss, const Parameters& params, bool create_graph = false);

// Hessian-vector product via grad(<grad(loss), v>).
GradientMap hvp(const Tensor& loss, const Parameters& params, const GradientMap& v);

using ScalarFunction = std::function<double(const Parameters&)>;

// Central differences, one coordinate at a time.
GradientMap finite_diff_grad(const ScalarFunction& f, const Parameters& params, double eps);

// ||a - b|| / max(||a||, ||b||) over all entries of both maps; 0 when both vanish.
double relative_error(const GradientMap& a, const GradientMap& b);
double dot(const GradientMap& a, const GradientMap& b);

}  // namespace l2g
