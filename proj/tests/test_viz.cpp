#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>

#include "l2g/errors.hpp"
#include "l2g/rng.hpp"
#include "l2g/viz.hpp"
#include "test_util.hpp"

using namespace l2g;

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Rows with a clear spectrum: scales 5, 2, 0.5, 0.1 along a rotated basis.
Tensor spread_rows(std::size_t n, std::size_t m, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) basis(i, j) = rng.normal();
  }
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(basis).householderQ();
  std::vector<double> values;
  for (std::size_t r = 0; r < n; ++r) {
    Eigen::VectorXd z(m);
    for (std::size_t j = 0; j < m; ++j) z(j) = rng.normal() * (j == 0 ? 5.0 : j == 1 ? 2.0 : j == 2 ? 0.5 : 0.1);
    const Eigen::VectorXd x = q * z;
    for (std::size_t j = 0; j < m; ++j) values.push_back(x(j) + 3.0);
  }
  return Tensor({n, m}, values);
}

RunLog make_log(std::vector<double> meta, std::vector<double> inner = {}) {
  RunLog log;
  for (std::size_t i = 0; i < meta.size(); ++i) {
    LogRecord r;
    r.episode = i + 1;
    r.meta_loss = meta[i];
    if (!inner.empty()) r.inner_loss = inner[i];
    r.lr = 1e-3;
    log.append(r);
  }
  return log;
}

// Y coordinates of the first polyline's points.
std::vector<double> polyline_ys(const std::string& svg) {
  const auto start = svg.find("points=\"", svg.find("<polyline")) + 8;
  std::istringstream in(svg.substr(start, svg.find('"', start) - start));
  std::vector<double> ys;
  std::string pair;
  while (in >> pair) ys.push_back(std::stod(pair.substr(pair.find(',') + 1)));
  return ys;
}

}  // namespace

TEST(Pca, AxisAlignedData) {
  // Variance along x dominates variance along y.
  const Tensor t = Tensor::from_rows({{-3, 0.5}, {-1, -0.5}, {1, -0.5}, {3, 0.5}});
  const Projection2D p = pca_2d(t);
  EXPECT_NEAR(std::abs(p.axis1[0]), 1.0, 1e-10);
  EXPECT_NEAR(p.axis1[1], 0.0, 1e-10);
  EXPECT_NEAR(std::abs(p.axis2[1]), 1.0, 1e-10);
  EXPECT_GT(p.axis1[0], 0.0);
  EXPECT_NEAR(p.points[0].x, -3.0, 1e-10);
}

TEST(Pca, DuplicatedRowsCollapseToOnePoint) {
  const Tensor t = Tensor::from_rows({{1, 2, 3}, {1, 2, 3}, {4, 0, 1}, {-2, 5, 0}});
  const Projection2D p = pca_2d(t);
  EXPECT_EQ(p.points[0].x, p.points[1].x);
  EXPECT_EQ(p.points[0].y, p.points[1].y);
}

TEST(Pca, MatchesEigenDecomposition) {
  const std::size_t n = 60, m = 6;
  const Tensor t = spread_rows(n, m, 1);
  const Projection2D p = pca_2d(t);
  Eigen::MatrixXd x(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) x(i, j) = t.at(i, j);
  }
  const Eigen::MatrixXd centred = x.rowwise() - x.colwise().mean();
  const Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(n - 1);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  for (int k = 0; k < 2; ++k) {
    Eigen::VectorXd v = eig.eigenvectors().col(m - 1 - k);
    Eigen::Index big = 0;
    v.cwiseAbs().maxCoeff(&big);
    if (v(big) < 0) v = -v;
    const auto& axis = k == 0 ? p.axis1 : p.axis2;
    for (std::size_t j = 0; j < m; ++j) EXPECT_NEAR(axis[j], v(j), 1e-8) << "axis " << k << " coord " << j;
  }
}

TEST(Pca, AxesAreOrthonormal) {
  const Projection2D p = pca_2d(spread_rows(40, 8, 2));
  EXPECT_NEAR(dot(p.axis1, p.axis1), 1.0, 1e-10);
  EXPECT_NEAR(dot(p.axis2, p.axis2), 1.0, 1e-10);
  EXPECT_NEAR(dot(p.axis1, p.axis2), 0.0, 1e-10);
}

TEST(Pca, TranslationOnlyMovesTheMean) {
  const Tensor t = spread_rows(30, 5, 3);
  std::vector<double> shifted(t.values().begin(), t.values().end());
  for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += 100.0 * static_cast<double>(i % 5);
  const Projection2D a = pca_2d(t);
  const Projection2D b = pca_2d(Tensor(t.shape(), shifted));
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    EXPECT_NEAR(a.points[i].x, b.points[i].x, 1e-8);
    EXPECT_NEAR(a.points[i].y, b.points[i].y, 1e-8);
  }
}

TEST(Pca, DegenerateAndTooSmallInputs) {
  EXPECT_THROW(pca_2d(Tensor::full({5, 3}, 2.0)), DegenerateInputError);
  EXPECT_THROW(pca_2d(Tensor::from_rows({{1, 2}})), ContractViolation);
  EXPECT_THROW(pca_2d(Tensor::from_rows({{1}, {2}})), ContractViolation);
}

TEST(Pca, CarriesAnnotations) {
  const std::vector<std::size_t> cls{0, 0, 1, 1};
  const Projection2D p = pca_2d(Tensor::from_rows({{0, 0}, {1, 0}, {5, 5}, {6, 4}}), cls, {true, false, true, false});
  EXPECT_EQ(p.points[2].class_index, 1u);
  EXPECT_TRUE(p.points[2].is_support);
  EXPECT_FALSE(p.points[3].is_support);
}

TEST(Scatter, MarkerCountsAndValidXml) {
  // 3 classes, 2 supports and 4 queries each.
  std::vector<std::size_t> cls;
  std::vector<bool> support;
  for (std::size_t c = 0; c < 3; ++c) {
    for (int i = 0; i < 6; ++i) {
      cls.push_back(c);
      support.push_back(i < 2);
    }
  }
  const Projection2D p = pca_2d(spread_rows(18, 4, 4), cls, support);
  const std::string svg = scatter_svg(p, {"alpha", "beta", "gamma"});
  ASSERT_TRUE(test::parses_as_xml(svg));
  EXPECT_EQ(test::count_elements(svg, "polygon"), 6u);
  EXPECT_EQ(test::count_elements(svg, "circle"), 12u);
  EXPECT_NE(svg.find("gamma"), std::string::npos);
  EXPECT_NE(svg.find("width=\"800\""), std::string::npos);
  EXPECT_EQ(svg, scatter_svg(pca_2d(spread_rows(18, 4, 4), cls, support), {"alpha", "beta", "gamma"}));
}

TEST(Convergence, ConstantSeriesIsHorizontal) {
  const std::string svg = convergence_svg(make_log({2.0, 2.0, 2.0, 2.0}), {Series::meta_loss});
  ASSERT_TRUE(test::parses_as_xml(svg));
  EXPECT_EQ(test::count_elements(svg, "polyline"), 1u);
  const auto ys = polyline_ys(svg);
  ASSERT_EQ(ys.size(), 4u);
  for (double y : ys) EXPECT_EQ(y, ys[0]);
}

TEST(Convergence, TwoSeriesTwoPolylines) {
  const std::string svg =
      convergence_svg(make_log({3, 2, 1}, {4, 3, 2.5}), {Series::meta_loss, Series::inner_loss});
  EXPECT_EQ(test::count_elements(svg, "polyline"), 2u);
  EXPECT_NE(svg.find("inner_loss"), std::string::npos);
}

TEST(Convergence, DecreasingLossDrawsDownward) {
  const auto ys = polyline_ys(convergence_svg(make_log({5, 4, 2, 1}), {Series::meta_loss}));
  ASSERT_EQ(ys.size(), 4u);
  for (std::size_t i = 1; i < ys.size(); ++i) EXPECT_GT(ys[i], ys[i - 1]);
}

TEST(Convergence, Errors) {
  EXPECT_THROW(convergence_svg(make_log({1.0}), {Series::meta_loss}), ContractViolation);
  EXPECT_THROW(convergence_svg(make_log({1.0, 2.0}), {Series::val_accuracy}), ContractViolation);
  try {
    convergence_svg(std::string_view("episode,meta_loss,inner_loss,lr,val_accuracy\n1,1,,0.1,\n2,x,,0.1,\n"),
                    {Series::meta_loss});
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
  EXPECT_EQ(parse_series("lr"), Series::lr);
  EXPECT_THROW(parse_series("accuracy"), ContractViolation);
}
