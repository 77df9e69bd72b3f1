#pragma once

#include <cstdint>
#include <vector>

#include "l2g/autodiff.hpp"

namespace l2g {
namespace detail {

struct Node {
  OpKind kind = OpKind::leaf;
  std::vector<std::size_t> inputs;  // ids strictly below this node's id
  Tensor value;                     // detached forward result
  double factor = 0.0;              // scale_by_constant
  std::size_t offset = 0;           // slice_last_axis begin
};

struct Tape {
  std::uint64_t generation = 0;
  std::vector<Node> nodes;
};

}  // namespace detail

// Privileged access used by the op and gradient implementations.
struct TensorAccess {
  static Tensor make(Shape shape, std::vector<double> values);
  static Tensor attach(const Tensor& value, std::shared_ptr<detail::Tape> tape, std::size_t node);
  static const std::shared_ptr<detail::Tape>& tape(const Tensor& t) { return t.tape_; }
};

// Handle for an existing node: the node's saved value, attached to the tape.
Tensor node_handle(const std::shared_ptr<detail::Tape>& tape, std::size_t id);
// Append a node for a detached tensor that should not receive gradients.
std::size_t record_constant(detail::Tape& tape, const Tensor& value);

}  // namespace l2g
