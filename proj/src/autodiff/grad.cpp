#include <cmath>
#include <optional>

#include "l2g/errors.hpp"
#include "tape.hpp"

namespace l2g {

namespace {

// Backward rule for one node. Every rule is written with recordable ops, so
// when the handles are attached the gradient computation itself lands on the
// tape. `needs[i]` says whether input i wants a gradient at all.
std::vector<std::optional<Tensor>> vjp(const detail::Node& node, const Tensor& g, const std::vector<Tensor>& in,
                                       const Tensor& out, const std::vector<bool>& needs) {
  std::vector<std::optional<Tensor>> r(in.size());
  auto want = [&](std::size_t i) { return needs[i]; };
  switch (node.kind) {
    case OpKind::leaf:
    case OpKind::constant:
      break;
    case OpKind::add:
      if (want(0)) r[0] = g;
      if (want(1)) r[1] = g;
      break;
    case OpKind::sub:
      if (want(0)) r[0] = g;
      if (want(1)) r[1] = negate(g);
      break;
    case OpKind::mul_elementwise:
      if (want(0)) r[0] = mul(g, in[1]);
      if (want(1)) r[1] = mul(g, in[0]);
      break;
    case OpKind::matmul:
      if (want(0)) r[0] = matmul(g, transpose(in[1]));
      if (want(1)) r[1] = matmul(transpose(in[0]), g);
      break;
    case OpKind::relu: {
      std::vector<double> mask(in[0].numel());
      auto v = in[0].values();
      for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = v[i] > 0.0 ? 1.0 : 0.0;
      r[0] = mul(g, Tensor(in[0].shape(), std::move(mask)));
      break;
    }
    case OpKind::sigmoid: {
      const Tensor one_minus = sub(Tensor::full(out.shape(), 1.0), out);
      r[0] = mul(g, mul(out, one_minus));
      break;
    }
    case OpKind::concat_last_axis: {
      std::size_t offset = 0;
      for (std::size_t i = 0; i < in.size(); ++i) {
        const std::size_t w = in[i].shape().back();
        if (want(i)) r[i] = slice_last_axis(g, offset, w);
        offset += w;
      }
      break;
    }
    case OpKind::sum_all:
      r[0] = broadcast_scalar(g, in[0].shape());
      break;
    case OpKind::mean_all:
      r[0] = scale(broadcast_scalar(g, in[0].shape()), 1.0 / static_cast<double>(in[0].numel()));
      break;
    case OpKind::square:
      r[0] = scale(mul(g, in[0]), 2.0);
      break;
    case OpKind::negate:
      r[0] = negate(g);
      break;
    case OpKind::scale_by_constant:
      r[0] = scale(g, node.factor);
      break;
    case OpKind::logsumexp_last_axis: {
      const std::size_t w = in[0].shape().back();
      const Tensor softmax = exp(sub(in[0], expand_last_axis(out, w)));
      r[0] = mul(expand_last_axis(g, w), softmax);
      break;
    }
    case OpKind::sq_euclidean_rowwise: {
      // d_ij = |a_i - b_j|^2
      //   da_i = 2 (sum_j g_ij) a_i - 2 (g b)_i
      //   db_j = 2 (sum_i g_ij) b_j - 2 (g^T a)_j
      const std::size_t d = in[0].shape()[1];
      if (want(0)) {
        const Tensor row_weight = expand_last_axis(sum_last_axis(g), d);
        r[0] = scale(sub(mul(row_weight, in[0]), matmul(g, in[1])), 2.0);
      }
      if (want(1)) {
        const Tensor gt = transpose(g);
        const Tensor col_weight = expand_last_axis(sum_last_axis(gt), d);
        r[1] = scale(sub(mul(col_weight, in[1]), matmul(gt, in[0])), 2.0);
      }
      break;
    }
    case OpKind::transpose:
      r[0] = transpose(g);
      break;
    case OpKind::slice_last_axis: {
      const std::size_t total = in[0].shape().back();
      const std::size_t w = g.shape().back();
      std::vector<Tensor> parts;
      Shape pad = g.shape();
      if (node.offset > 0) {
        pad.back() = node.offset;
        parts.push_back(Tensor::zeros(pad));
      }
      parts.push_back(g);
      if (node.offset + w < total) {
        pad.back() = total - node.offset - w;
        parts.push_back(Tensor::zeros(pad));
      }
      r[0] = parts.size() == 1 ? g : concat_last_axis(std::span<const Tensor>(parts));
      break;
    }
    case OpKind::broadcast_scalar:
      r[0] = reshape(sum_all(g), in[0].shape());
      break;
    case OpKind::exp:
      r[0] = mul(g, out);
      break;
    case OpKind::sum_last_axis:
      r[0] = expand_last_axis(g, in[0].shape().back());
      break;
    case OpKind::expand_last_axis:
      r[0] = sum_last_axis(g);
      break;
    case OpKind::reshape:
      r[0] = reshape(g, in[0].shape());
      break;
  }
  return r;
}

}  // namespace

GradientMap grad(const Tensor& loss, const Parameters& params, bool create_graph) {
  if (loss.numel() != 1) {
    throw ContractViolation("grad: loss must be scalar, got shape " + shape_to_string(loss.shape()));
  }
  if (!loss.attached()) throw ContractViolation("grad: loss is not attached to a graph");
  const std::shared_ptr<detail::Tape> tape = TensorAccess::tape(loss);

  const std::size_t root = loss.node_id();
  std::vector<bool> relevant(root + 1, false);
  std::vector<bool> requested(root + 1, false);
  for (const auto& [name, p] : params) {
    if (!p.attached() || TensorAccess::tape(p) != tape) {
      throw ContractViolation("grad: parameter '" + name + "' is not on the loss graph");
    }
    if (p.node_id() <= root) relevant[p.node_id()] = requested[p.node_id()] = true;
  }
  for (std::size_t k = 0; k <= root; ++k) {
    if (relevant[k]) continue;
    for (std::size_t in : tape->nodes[k].inputs) {
      if (relevant[in]) {
        relevant[k] = true;
        break;
      }
    }
  }

  auto handle = [&](std::size_t id) {
    return create_graph ? node_handle(tape, id) : tape->nodes[id].value;
  };

  std::vector<std::optional<Tensor>> adjoint(root + 1);
  adjoint[root] = Tensor::full(loss.shape(), 1.0);
  for (std::size_t k = root + 1; k-- > 0;) {
    if (!relevant[k] || !adjoint[k]) continue;
    // Copy: recording new nodes can reallocate the node vector.
    const detail::Node node = tape->nodes[k];
    if (node.inputs.empty()) continue;
    std::vector<Tensor> in;
    std::vector<bool> needs;
    in.reserve(node.inputs.size());
    for (std::size_t id : node.inputs) {
      in.push_back(handle(id));
      needs.push_back(relevant[id]);
    }
    auto parts = vjp(node, *adjoint[k], in, handle(k), needs);
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (!parts[i] || !needs[i]) continue;
      auto& slot = adjoint[node.inputs[i]];
      slot = slot ? add(*slot, *parts[i]) : *parts[i];
    }
    // Requested nodes may be intermediate values; keep their adjoints.
    if (k != root && !requested[k]) adjoint[k].reset();
  }

  GradientMap out;
  for (const auto& [name, p] : params) {
    const std::size_t id = p.node_id();
    Tensor g = (id <= root && adjoint[id]) ? *adjoint[id] : Tensor::zeros(p.shape());
    if (create_graph) {
      if (!g.attached()) g = TensorAccess::attach(g.detach(), tape, record_constant(*tape, g));
    } else {
      // Canonical +0 so gradients reached through exact-zero branches are
      // bit-identical to ones that never touched them.
      std::vector<double> v(g.values().begin(), g.values().end());
      for (double& x : v) x += 0.0;
      g = Tensor(p.shape(), std::move(v));
    }
    out.emplace(name, std::move(g));
  }
  return out;
}

GradientMap hvp(const Tensor& loss, const Parameters& params, const GradientMap& v) {
  if (v.size() != params.size()) throw ContractViolation("hvp: direction keys differ from parameters");
  for (const auto& [name, p] : params) {
    auto it = v.find(name);
    if (it == v.end()) throw ContractViolation("hvp: direction lacks '" + name + "'");
    if (it->second.shape() != p.shape()) {
      throw ContractViolation("hvp: direction for '" + name + "' has shape " + shape_to_string(it->second.shape()) +
                              ", parameter has " + shape_to_string(p.shape()));
    }
  }
  const GradientMap g = grad(loss, params, /*create_graph=*/true);
  std::optional<Tensor> inner;
  for (const auto& [name, gp] : g) {
    const Tensor term = sum_all(mul(gp, v.at(name).detach()));
    inner = inner ? add(*inner, term) : term;
  }
  return grad(*inner, params, /*create_graph=*/false);
}

GradientMap finite_diff_grad(const ScalarFunction& f, const Parameters& params, double eps) {
  if (!(eps > 0.0)) throw ContractViolation("finite_diff_grad: eps must be positive");
  Parameters probe = detach_all(params);
  GradientMap out;
  for (const auto& [name, p] : params) {
    std::vector<double> base(p.values().begin(), p.values().end());
    std::vector<double> g(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
      std::vector<double> shifted = base;
      shifted[i] = base[i] + eps;
      probe[name] = Tensor(p.shape(), shifted);
      const double plus = f(probe);
      shifted[i] = base[i] - eps;
      probe[name] = Tensor(p.shape(), shifted);
      const double minus = f(probe);
      if (!std::isfinite(plus) || !std::isfinite(minus)) {
        throw NumericError("finite_diff_grad: non-finite evaluation at '" + name + "'[" + std::to_string(i) + "]");
      }
      g[i] = (plus - minus) / (2.0 * eps);
    }
    probe[name] = p.detach();
    out.emplace(name, Tensor(p.shape(), std::move(g)));
  }
  return out;
}

double relative_error(const GradientMap& a, const GradientMap& b) {
  if (a.size() != b.size()) throw ContractViolation("relative_error: key sets differ");
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (const auto& [name, ta] : a) {
    auto it = b.find(name);
    if (it == b.end() || it->second.shape() != ta.shape()) {
      throw ContractViolation("relative_error: mismatch at '" + name + "'");
    }
    auto va = ta.values();
    auto vb = it->second.values();
    for (std::size_t i = 0; i < va.size(); ++i) {
      diff += (va[i] - vb[i]) * (va[i] - vb[i]);
      na += va[i] * va[i];
      nb += vb[i] * vb[i];
    }
  }
  const double denom = std::sqrt(std::max(na, nb));
  return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

double dot(const GradientMap& a, const GradientMap& b) {
  double s = 0.0;
  for (const auto& [name, ta] : a) {
    auto va = ta.values();
    auto vb = b.at(name).values();
    if (va.size() != vb.size()) throw ContractViolation("dot: size mismatch at '" + name + "'");
    for (std::size_t i = 0; i < va.size(); ++i) s += va[i] * vb[i];
  }
  return s;
}

}  // namespace l2g
