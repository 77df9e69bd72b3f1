#pragma once

#include <span>
#include <string>
#include <vector>

#include "l2g/errors.hpp"
#include "l2g/run_log.hpp"
#include "l2g/tensor.hpp"

namespace l2g {

class DegenerateInputError : public ContractViolation {
 public:
  using ContractViolation::ContractViolation;
};

struct ProjectedPoint {
  double x = 0.0;
  double y = 0.0;
  std::size_t class_index = 0;
  bool is_support = false;
};

struct Projection2D {
  std::vector<double> mean;
  std::vector<double> axis1;
  std::vector<double> axis2;
  std::vector<ProjectedPoint> points;
};

// Top two principal axes of the mean-centred rows by power iteration with
// deflation. Fixed start vector and iteration count; each axis is flipped so
// that its largest-magnitude coordinate is positive. `classes` and `support`
// annotate the rows and may be left empty.
Projection2D pca_2d(const Tensor& embeddings, std::span<const std::size_t> classes = {},
                    const std::vector<bool>& support = {});

// 800x600 canvas. Supports are star polygons, queries are circles, colours
// cycle through a 12-entry palette by class index. `class_names`, when given,
// label the legend.
std::string scatter_svg(const Projection2D& projection, const std::vector<std::string>& class_names = {});

enum class Series { meta_loss, inner_loss, lr, val_accuracy };

std::string_view series_name(Series series);
Series parse_series(std::string_view name);

// One polyline per series over the records that carry a value for it.
std::string convergence_svg(const RunLog& log, const std::vector<Series>& series);
// Same, reading log.csv text; malformed rows raise FormatError with the line.
std::string convergence_svg(std::string_view log_csv, const std::vector<Series>& series);

}  // namespace l2g
