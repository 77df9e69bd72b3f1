#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>

#include "l2g/viz.hpp"

namespace l2g {

namespace {

constexpr double kWidth = 800.0;
constexpr double kHeight = 600.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 170.0;  // room for the legend
constexpr double kTop = 40.0;
constexpr double kBottom = 60.0;
constexpr int kTicks = 5;

constexpr const char* kPalette[12] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
                                      "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#e7969c"};

const char* colour(std::size_t index) { return kPalette[index % 12]; }

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string num(double v) { return fmt("%.2f", v); }

std::string escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void include(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }

  // Widens an empty or flat range and adds a small margin.
  Range padded() const {
    Range r = *this;
    if (!(r.hi > r.lo)) {
      const double half = std::abs(r.lo) > 0.0 ? 0.5 * std::abs(r.lo) : 1.0;
      r.lo -= half;
      r.hi += half;
    }
    const double pad = 0.05 * (r.hi - r.lo);
    return {r.lo - pad, r.hi + pad};
  }
};

struct Frame {
  Range x, y;
  double left = kLeft, right = kWidth - kRight, top = kTop, bottom = kHeight - kBottom;

  double sx(double v) const { return left + (v - x.lo) / (x.hi - x.lo) * (right - left); }
  // Larger values sit higher on screen, i.e. at smaller y.
  double sy(double v) const { return top + (y.hi - v) / (y.hi - y.lo) * (bottom - top); }
};

void open_document(std::ostringstream& out) {
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n"
      << "<rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
}

void draw_axes(std::ostringstream& out, const Frame& f, const char* x_format, const char* y_format,
               std::string_view x_label, std::string_view y_label) {
  out << "<g stroke=\"black\" stroke-width=\"1\">\n"
      << "<line x1=\"" << num(f.left) << "\" y1=\"" << num(f.bottom) << "\" x2=\"" << num(f.right) << "\" y2=\""
      << num(f.bottom) << "\"/>\n"
      << "<line x1=\"" << num(f.left) << "\" y1=\"" << num(f.top) << "\" x2=\"" << num(f.left) << "\" y2=\""
      << num(f.bottom) << "\"/>\n";
  for (int i = 0; i <= kTicks; ++i) {
    const double t = static_cast<double>(i) / kTicks;
    const double px = f.left + t * (f.right - f.left);
    const double py = f.bottom - t * (f.bottom - f.top);
    out << "<line x1=\"" << num(px) << "\" y1=\"" << num(f.bottom) << "\" x2=\"" << num(px) << "\" y2=\""
        << num(f.bottom + 5) << "\"/>\n"
        << "<line x1=\"" << num(f.left - 5) << "\" y1=\"" << num(py) << "\" x2=\"" << num(f.left) << "\" y2=\""
        << num(py) << "\"/>\n";
  }
  out << "</g>\n<g font-family=\"sans-serif\" font-size=\"11\" fill=\"black\">\n";
  for (int i = 0; i <= kTicks; ++i) {
    const double t = static_cast<double>(i) / kTicks;
    const double px = f.left + t * (f.right - f.left);
    const double py = f.bottom - t * (f.bottom - f.top);
    out << "<text x=\"" << num(px) << "\" y=\"" << num(f.bottom + 18) << "\" text-anchor=\"middle\">"
        << fmt(x_format, f.x.lo + t * (f.x.hi - f.x.lo)) << "</text>\n"
        << "<text x=\"" << num(f.left - 8) << "\" y=\"" << num(py + 4) << "\" text-anchor=\"end\">"
        << fmt(y_format, f.y.lo + t * (f.y.hi - f.y.lo)) << "</text>\n";
  }
  out << "<text x=\"" << num(0.5 * (f.left + f.right)) << "\" y=\"" << num(kHeight - 15)
      << "\" text-anchor=\"middle\">" << escape(x_label) << "</text>\n"
      << "<text x=\"15\" y=\"" << num(0.5 * (f.top + f.bottom)) << "\" text-anchor=\"middle\" transform=\"rotate(-90 15 "
      << num(0.5 * (f.top + f.bottom)) << ")\">" << escape(y_label) << "</text>\n"
      << "</g>\n";
}

std::string star_points(double cx, double cy, double outer, double inner) {
  std::string pts;
  for (int k = 0; k < 10; ++k) {
    const double r = k % 2 == 0 ? outer : inner;
    const double angle = -std::numbers::pi / 2 + k * std::numbers::pi / 5;
    if (k) pts += ' ';
    pts += num(cx + r * std::cos(angle)) + "," + num(cy + r * std::sin(angle));
  }
  return pts;
}

}  // namespace

std::string scatter_svg(const Projection2D& projection, const std::vector<std::string>& class_names) {
  if (projection.points.empty()) throw ContractViolation("scatter_svg: no points");
  Range xr, yr;
  std::size_t classes = 0;
  for (const auto& p : projection.points) {
    xr.include(p.x);
    yr.include(p.y);
    classes = std::max(classes, p.class_index + 1);
  }
  Frame f;
  f.x = xr.padded();
  f.y = yr.padded();

  std::ostringstream out;
  open_document(out);
  draw_axes(out, f, "%.2f", "%.2f", "principal axis 1", "principal axis 2");

  // Queries first so that the support stars stay visible on top.
  out << "<g stroke=\"black\" stroke-width=\"0.5\">\n";
  for (const auto& p : projection.points) {
    if (p.is_support) continue;
    out << "<circle cx=\"" << num(f.sx(p.x)) << "\" cy=\"" << num(f.sy(p.y)) << "\" r=\"4\" fill=\""
        << colour(p.class_index) << "\" fill-opacity=\"0.8\"/>\n";
  }
  for (const auto& p : projection.points) {
    if (!p.is_support) continue;
    out << "<polygon points=\"" << star_points(f.sx(p.x), f.sy(p.y), 10.0, 4.0) << "\" fill=\""
        << colour(p.class_index) << "\"/>\n";
  }
  out << "</g>\n";

  out << "<g font-family=\"sans-serif\" font-size=\"12\">\n";
  const double lx = kWidth - kRight + 20;
  out << "<text x=\"" << num(lx) << "\" y=\"" << num(kTop) << "\">stars: support</text>\n"
      << "<text x=\"" << num(lx) << "\" y=\"" << num(kTop + 16) << "\">dots: query</text>\n";
  for (std::size_t c = 0; c < classes; ++c) {
    const double y = kTop + 40 + 18.0 * static_cast<double>(c);
    const std::string label = c < class_names.size() ? class_names[c] : "class " + std::to_string(c);
    out << "<rect x=\"" << num(lx) << "\" y=\"" << num(y - 10) << "\" width=\"12\" height=\"12\" fill=\""
        << colour(c) << "\"/>\n"
        << "<text x=\"" << num(lx + 18) << "\" y=\"" << num(y) << "\">" << escape(label) << "</text>\n";
  }
  out << "</g>\n</svg>\n";
  return out.str();
}

std::string_view series_name(Series series) {
  switch (series) {
    case Series::meta_loss: return "meta_loss";
    case Series::inner_loss: return "inner_loss";
    case Series::lr: return "lr";
    case Series::val_accuracy: return "val_accuracy";
  }
  return "?";
}

Series parse_series(std::string_view name) {
  for (Series s : {Series::meta_loss, Series::inner_loss, Series::lr, Series::val_accuracy}) {
    if (series_name(s) == name) return s;
  }
  throw ContractViolation("unknown series '" + std::string(name) +
                          "' (expected meta_loss, inner_loss, lr or val_accuracy)");
}

std::string convergence_svg(const RunLog& log, const std::vector<Series>& series) {
  if (log.size() < 2) throw ContractViolation("convergence_svg: need at least 2 log records");
  if (series.empty()) throw ContractViolation("convergence_svg: no series selected");

  auto value = [](const LogRecord& r, Series s) -> std::optional<double> {
    switch (s) {
      case Series::meta_loss: return r.meta_loss;
      case Series::inner_loss: return r.inner_loss;
      case Series::lr: return r.lr;
      case Series::val_accuracy: return r.val_accuracy;
    }
    return std::nullopt;
  };

  Frame f;
  for (const auto& r : log.records()) f.x.include(static_cast<double>(r.episode));
  for (Series s : series) {
    bool any = false;
    for (const auto& r : log.records()) {
      if (auto v = value(r, s)) {
        f.y.include(*v);
        any = true;
      }
    }
    if (!any) throw ContractViolation("convergence_svg: log has no " + std::string(series_name(s)) + " values");
  }
  // The episode axis spans the data exactly; only the value axis is padded.
  f.y = f.y.padded();

  std::ostringstream out;
  open_document(out);
  draw_axes(out, f, "%.0f", "%.4g", "episode", "value");

  for (std::size_t i = 0; i < series.size(); ++i) {
    out << "<polyline fill=\"none\" stroke=\"" << colour(i) << "\" stroke-width=\"1.5\" points=\"";
    bool first = true;
    for (const auto& r : log.records()) {
      auto v = value(r, series[i]);
      if (!v) continue;
      if (!first) out << ' ';
      first = false;
      out << num(f.sx(static_cast<double>(r.episode))) << ',' << num(f.sy(*v));
    }
    out << "\"/>\n";
  }

  const double lx = kWidth - kRight + 20;
  out << "<g font-family=\"sans-serif\" font-size=\"12\">\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double y = kTop + 18.0 * static_cast<double>(i);
    out << "<line x1=\"" << num(lx) << "\" y1=\"" << num(y - 4) << "\" x2=\"" << num(lx + 20) << "\" y2=\""
        << num(y - 4) << "\" stroke=\"" << colour(i) << "\" stroke-width=\"2\"/>\n"
        << "<text x=\"" << num(lx + 26) << "\" y=\"" << num(y) << "\">" << series_name(series[i]) << "</text>\n";
  }
  out << "</g>\n</svg>\n";
  return out.str();
}

std::string convergence_svg(std::string_view log_csv, const std::vector<Series>& series) {
  return convergence_svg(RunLog::from_csv(log_csv), series);
}

}  // namespace l2g
