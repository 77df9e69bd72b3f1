#include <algorithm>
#include <cmath>

#include "l2g/viz.hpp"

namespace l2g {

namespace {

constexpr int kPowerIterations = 1000;

using Matrix = std::vector<std::vector<double>>;

std::vector<double> multiply(const Matrix& a, const std::vector<double>& v) {
  std::vector<double> out(v.size(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < v.size(); ++j) out[i] += a[i][j] * v[j];
  }
  return out;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void remove_component(std::vector<double>& v, const std::vector<double>& axis) {
  const double c = dot(v, axis);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= c * axis[i];
}

bool normalize(std::vector<double>& v) {
  const double n = std::sqrt(dot(v, v));
  if (!(n > 1e-300)) return false;
  for (double& x : v) x /= n;
  return true;
}

void fix_sign(std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (std::abs(v[i]) > std::abs(v[best])) best = i;
  }
  if (v[best] < 0.0) {
    for (double& x : v) x = -x;
  }
}

// Deterministic start vector that is not orthogonal to any axis-aligned
// direction.
std::vector<double> start_vector(std::size_t m) {
  std::vector<double> v(m);
  for (std::size_t i = 0; i < m; ++i) v[i] = 1.0 + 0.1 * static_cast<double>(i + 1) / static_cast<double>(m);
  normalize(v);
  return v;
}

std::vector<double> power_axis(const Matrix& cov, const std::vector<double>* orthogonal_to) {
  std::vector<double> v = start_vector(cov.size());
  auto project = [&](std::vector<double>& x) {
    if (orthogonal_to) remove_component(x, *orthogonal_to);
  };
  project(v);
  if (!normalize(v)) {
    // The start vector lies along the first axis; use the first basis vector
    // that does not.
    for (std::size_t i = 0; i < cov.size(); ++i) {
      v.assign(cov.size(), 0.0);
      v[i] = 1.0;
      project(v);
      if (normalize(v)) break;
    }
  }
  for (int it = 0; it < kPowerIterations; ++it) {
    std::vector<double> next = multiply(cov, v);
    project(next);
    // Zero response means the remaining spectrum is flat zero; v already
    // spans a valid orthonormal direction.
    if (!normalize(next)) break;
    v = std::move(next);
  }
  project(v);
  normalize(v);
  fix_sign(v);
  return v;
}

}  // namespace

Projection2D pca_2d(const Tensor& embeddings, std::span<const std::size_t> classes, const std::vector<bool>& support) {
  if (embeddings.rank() != 2) throw ContractViolation("pca_2d: expected a [n, M] tensor");
  const std::size_t n = embeddings.shape()[0];
  const std::size_t m = embeddings.shape()[1];
  if (n < 2 || m < 2) throw ContractViolation("pca_2d: need at least 2 rows and 2 columns");
  if (!classes.empty() && classes.size() != n) throw ContractViolation("pca_2d: class list length differs from rows");
  if (!support.empty() && support.size() != n) throw ContractViolation("pca_2d: support flags differ from rows");

  Projection2D out;
  out.mean.assign(m, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < m; ++c) out.mean[c] += embeddings.at(r, c);
  }
  for (double& x : out.mean) x /= static_cast<double>(n);

  Matrix centered(n, std::vector<double>(m));
  double scale = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < m; ++c) {
      centered[r][c] = embeddings.at(r, c) - out.mean[c];
      scale = std::max(scale, std::abs(embeddings.at(r, c)));
    }
  }

  Matrix cov(m, std::vector<double>(m, 0.0));
  for (const auto& row : centered) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) cov[i][j] += row[i] * row[j];
    }
  }
  double trace = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) cov[i][j] /= static_cast<double>(n - 1);
    trace += cov[i][i];
  }
  const double floor = 1e-24 * std::max(1.0, scale * scale);
  if (!(trace > floor)) throw DegenerateInputError("pca_2d: all rows are identical");

  out.axis1 = power_axis(cov, nullptr);
  out.axis2 = power_axis(cov, &out.axis1);

  out.points.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    out.points[r] = {dot(centered[r], out.axis1), dot(centered[r], out.axis2), classes.empty() ? 0 : classes[r],
                     support.empty() ? false : static_cast<bool>(support[r])};
  }
  return out;
}

}  // namespace l2g
