#include <algorithm>
#include <cmath>
#include <initializer_list>

#include "l2g/errors.hpp"
#include "tape.hpp"

namespace l2g {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::constant: return "constant";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul_elementwise: return "mul_elementwise";
    case OpKind::matmul: return "matmul";
    case OpKind::relu: return "relu";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::concat_last_axis: return "concat_last_axis";
    case OpKind::sum_all: return "sum_all";
    case OpKind::mean_all: return "mean_all";
    case OpKind::square: return "square";
    case OpKind::negate: return "negate";
    case OpKind::scale_by_constant: return "scale_by_constant";
    case OpKind::logsumexp_last_axis: return "logsumexp_last_axis";
    case OpKind::sq_euclidean_rowwise: return "sq_euclidean_rowwise";
    case OpKind::transpose: return "transpose";
    case OpKind::slice_last_axis: return "slice_last_axis";
    case OpKind::broadcast_scalar: return "broadcast_scalar";
    case OpKind::exp: return "exp";
    case OpKind::sum_last_axis: return "sum_last_axis";
    case OpKind::expand_last_axis: return "expand_last_axis";
    case OpKind::reshape: return "reshape";
  }
  return "unknown";
}

namespace {

struct Attrs {
  double factor = 0.0;
  std::size_t offset = 0;
};

[[noreturn]] void shape_error(OpKind kind, std::initializer_list<const Tensor*> inputs) {
  std::string msg = std::string(op_name(kind)) + ": incompatible shapes";
  for (const Tensor* t : inputs) msg += " " + shape_to_string(t->shape());
  throw ContractViolation(msg);
}

// Validates the forward values and, when any input lives on a tape, records
// the node. Detached inputs mixed with attached ones become constant nodes.
Tensor finish(OpKind kind, std::span<const Tensor* const> inputs, Shape shape, std::vector<double> values,
              Attrs attrs = {}) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string(op_name(kind)) + ": non-finite output");
  }
  Tensor result = TensorAccess::make(std::move(shape), std::move(values));

  std::shared_ptr<detail::Tape> tape;
  for (const Tensor* t : inputs) {
    const auto& tp = TensorAccess::tape(*t);
    if (!tp) continue;
    if (tape && tape != tp) {
      throw ContractViolation(std::string(op_name(kind)) + ": inputs belong to different graphs");
    }
    tape = tp;
  }
  if (!tape) return result;

  detail::Node node;
  node.kind = kind;
  node.factor = attrs.factor;
  node.offset = attrs.offset;
  node.inputs.reserve(inputs.size());
  for (const Tensor* t : inputs) {
    node.inputs.push_back(t->attached() ? t->node_id() : record_constant(*tape, *t));
  }
  node.value = result;
  tape->nodes.push_back(std::move(node));
  return TensorAccess::attach(result, tape, tape->nodes.size() - 1);
}

Tensor finish(OpKind kind, std::initializer_list<const Tensor*> inputs, Shape shape, std::vector<double> values,
              Attrs attrs = {}) {
  return finish(kind, std::span<const Tensor* const>(inputs.begin(), inputs.size()), std::move(shape),
                std::move(values), attrs);
}

template <typename F>
Tensor elementwise(OpKind kind, const Tensor& a, const Tensor& b, F f) {
  if (a.shape() != b.shape()) shape_error(kind, {&a, &b});
  std::vector<double> out(a.numel());
  auto va = a.values();
  auto vb = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(va[i], vb[i]);
  return finish(kind, {&a, &b}, a.shape(), std::move(out));
}

template <typename F>
Tensor unary(OpKind kind, const Tensor& a, F f, Attrs attrs = {}) {
  std::vector<double> out(a.numel());
  auto va = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(va[i]);
  return finish(kind, {&a}, a.shape(), std::move(out), attrs);
}

Shape drop_last(const Shape& s) { return Shape(s.begin(), s.end() - 1); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise(OpKind::add, a, b, [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise(OpKind::sub, a, b, [](double x, double y) { return x - y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return elementwise(OpKind::mul_elementwise, a, b, [](double x, double y) { return x * y; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) shape_error(OpKind::matmul, {&a, &b});
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(m * n, 0.0);
  auto va = a.values();
  auto vb = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = va[i * k + p];
      const double* brow = vb.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  return finish(OpKind::matmul, {&a, &b}, {m, n}, std::move(out));
}

Tensor relu(const Tensor& a) {
  return unary(OpKind::relu, a, [](double x) { return x > 0.0 ? x : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(OpKind::sigmoid, a, [](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
}

Tensor concat_last_axis(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractViolation("concat_last_axis: no inputs");
  const Shape& first = parts.front().shape();
  if (first.empty()) throw ContractViolation("concat_last_axis: rank-0 input");
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != first.size() || !std::equal(first.begin(), first.end() - 1, p.shape().begin())) {
      std::string msg = "concat_last_axis: incompatible shapes";
      for (const Tensor& q : parts) msg += " " + shape_to_string(q.shape());
      throw ContractViolation(msg);
    }
    total += p.shape().back();
  }
  const std::size_t rows = shape_numel(first) / first.back();
  std::vector<double> out(rows * total);
  std::size_t col = 0;
  for (const Tensor& p : parts) {
    const std::size_t w = p.shape().back();
    auto vp = p.values();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(vp.data() + r * w, w, out.data() + r * total + col);
    }
    col += w;
  }
  Shape shape = first;
  shape.back() = total;
  std::vector<const Tensor*> inputs;
  for (const Tensor& p : parts) inputs.push_back(&p);
  return finish(OpKind::concat_last_axis, std::span<const Tensor* const>(inputs), std::move(shape),
                std::move(out));
}

Tensor concat_last_axis(const Tensor& a, const Tensor& b) {
  const Tensor parts[] = {a, b};
  return concat_last_axis(std::span<const Tensor>(parts));
}

Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return finish(OpKind::sum_all, {&a}, {}, {s});
}

Tensor mean_all(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return finish(OpKind::mean_all, {&a}, {}, {s / static_cast<double>(a.numel())});
}

Tensor square(const Tensor& a) {
  return unary(OpKind::square, a, [](double x) { return x * x; });
}

Tensor negate(const Tensor& a) {
  return unary(OpKind::negate, a, [](double x) { return -x; });
}

Tensor scale(const Tensor& a, double factor) {
  if (!std::isfinite(factor)) throw NumericError("scale_by_constant: non-finite factor");
  return unary(OpKind::scale_by_constant, a, [factor](double x) { return x * factor; }, {.factor = factor});
}

Tensor logsumexp_last_axis(const Tensor& a) {
  if (a.rank() == 0) shape_error(OpKind::logsumexp_last_axis, {&a});
  const std::size_t w = a.shape().back();
  const std::size_t rows = a.numel() / w;
  auto va = a.values();
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = va.data() + r * w;
    const double mx = *std::max_element(row, row + w);
    double s = 0.0;
    for (std::size_t j = 0; j < w; ++j) s += std::exp(row[j] - mx);
    out[r] = mx + std::log(s);
  }
  return finish(OpKind::logsumexp_last_axis, {&a}, drop_last(a.shape()), std::move(out));
}

Tensor sq_euclidean_rowwise(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[1]) {
    shape_error(OpKind::sq_euclidean_rowwise, {&a, &b});
  }
  const std::size_t m = a.shape()[0], n = b.shape()[0], d = a.shape()[1];
  auto va = a.values();
  auto vb = b.values();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = va[i * d + k] - vb[j * d + k];
        s += diff * diff;
      }
      out[i * n + j] = s;
    }
  }
  return finish(OpKind::sq_euclidean_rowwise, {&a, &b}, {m, n}, std::move(out));
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) shape_error(OpKind::transpose, {&a});
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  auto va = a.values();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = va[i * n + j];
  }
  return finish(OpKind::transpose, {&a}, {n, m}, std::move(out));
}

Tensor slice_last_axis(const Tensor& a, std::size_t begin, std::size_t length) {
  if (a.rank() == 0 || length == 0 || begin + length > a.shape().back()) {
    throw ContractViolation("slice_last_axis: range [" + std::to_string(begin) + ", " +
                            std::to_string(begin + length) + ") outside " + shape_to_string(a.shape()));
  }
  const std::size_t w = a.shape().back();
  const std::size_t rows = a.numel() / w;
  auto va = a.values();
  std::vector<double> out(rows * length);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(va.data() + r * w + begin, length, out.data() + r * length);
  }
  Shape shape = a.shape();
  shape.back() = length;
  return finish(OpKind::slice_last_axis, {&a}, std::move(shape), std::move(out), {.offset = begin});
}

Tensor broadcast_scalar(const Tensor& a, const Shape& shape) {
  if (a.numel() != 1) shape_error(OpKind::broadcast_scalar, {&a});
  return finish(OpKind::broadcast_scalar, {&a}, shape, std::vector<double>(shape_numel(shape), a[0]));
}

Tensor exp(const Tensor& a) {
  return unary(OpKind::exp, a, [](double x) { return std::exp(x); });
}

Tensor sum_last_axis(const Tensor& a) {
  if (a.rank() == 0) shape_error(OpKind::sum_last_axis, {&a});
  const std::size_t w = a.shape().back();
  const std::size_t rows = a.numel() / w;
  auto va = a.values();
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < w; ++j) out[r] += va[r * w + j];
  }
  return finish(OpKind::sum_last_axis, {&a}, drop_last(a.shape()), std::move(out));
}

Tensor expand_last_axis(const Tensor& a, std::size_t width) {
  if (width == 0) throw ContractViolation("expand_last_axis: zero width");
  auto va = a.values();
  std::vector<double> out(a.numel() * width);
  for (std::size_t r = 0; r < a.numel(); ++r) std::fill_n(out.data() + r * width, width, va[r]);
  Shape shape = a.shape();
  shape.push_back(width);
  return finish(OpKind::expand_last_axis, {&a}, std::move(shape), std::move(out));
}

Tensor reshape(const Tensor& a, const Shape& shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ContractViolation("reshape: " + shape_to_string(a.shape()) + " -> " + shape_to_string(shape));
  }
  auto va = a.values();
  return finish(OpKind::reshape, {&a}, shape, std::vector<double>(va.begin(), va.end()));
}

}  // namespace l2g
