#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "errors.hpp"

namespace sgdlab {

// Surface area of the unit sphere S^{m-1} in R^m.
inline double sphere_area(int m) { return 2.0 * std::pow(std::numbers::pi, 0.5 * m) / std::tgamma(0.5 * m); }

// Cell-centered 1D grid: a line segment or the radial coordinate of R^m.
// Radial cell volumes carry the ω r^{m-1} surface factor.
struct DensityGrid {
  enum class Geometry { line, radial };

  Geometry geometry = Geometry::line;
  int dim = 1;
  std::vector<double> edges;
  std::vector<double> centers;
  std::vector<double> volumes;
  std::vector<double> values;
  bool normalized = false;

  std::size_t size() const { return centers.size(); }

  double mass() const {
    double s = 0.0;
    for (std::size_t i = 0; i < size(); ++i) s += values[i] * volumes[i];
    return s;
  }

  // Area of the face at edge index i (1 for lines).
  double face_area(std::size_t i) const {
    if (geometry == Geometry::line) return 1.0;
    return sphere_area(dim) * std::pow(edges[i], dim - 1);
  }

  bool same_cells(const DensityGrid& o) const {
    return geometry == o.geometry && dim == o.dim && edges == o.edges;
  }
};

inline DensityGrid grid_from_edges(DensityGrid::Geometry g, int dim, std::vector<double> edges) {
  if (edges.size() < 2) throw Error("grid needs at least one cell");
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (!(edges[i] > edges[i - 1])) throw Error("grid edges must be strictly increasing");
  if (g == DensityGrid::Geometry::radial && edges.front() < 0.0) throw Error("radial grid must start at r >= 0");
  DensityGrid d;
  d.geometry = g;
  d.dim = g == DensityGrid::Geometry::line ? 1 : dim;
  d.edges = std::move(edges);
  const std::size_t n = d.edges.size() - 1;
  d.centers.resize(n);
  d.volumes.resize(n);
  d.values.assign(n, 0.0);
  const double omega = sphere_area(d.dim);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = d.edges[i], b = d.edges[i + 1];
    d.centers[i] = 0.5 * (a + b);
    if (g == DensityGrid::Geometry::line) {
      d.volumes[i] = b - a;
    } else {
      // ω (b^m − a^m)/m written to avoid cancellation for thin shells
      double s = 0.0;
      for (int k = 0; k < d.dim; ++k) s += std::pow(a, k) * std::pow(b, d.dim - 1 - k);
      d.volumes[i] = omega * (b - a) * s / d.dim;
    }
  }
  return d;
}

inline DensityGrid line_grid(double a, double b, std::size_t cells) {
  if (!(b > a) || cells == 0) throw Error("line grid needs a < b and cells > 0");
  std::vector<double> e(cells + 1);
  for (std::size_t i = 0; i <= cells; ++i) e[i] = a + (b - a) * static_cast<double>(i) / cells;
  e.back() = b;
  return grid_from_edges(DensityGrid::Geometry::line, 1, std::move(e));
}

// Radial grid r = c sinh(s), s uniform: uniform near 0, geometric far out.
inline DensityGrid radial_sinh_grid(int dim, double r_max, std::size_t cells, double core = 1.0) {
  if (!(r_max > 0.0) || cells == 0 || dim < 1) throw Error("radial grid needs r_max > 0, cells > 0, dim >= 1");
  const double smax = std::asinh(r_max / core);
  std::vector<double> e(cells + 1);
  for (std::size_t i = 0; i <= cells; ++i) e[i] = core * std::sinh(smax * static_cast<double>(i) / cells);
  e.front() = 0.0;
  e.back() = r_max;
  return grid_from_edges(DensityGrid::Geometry::radial, dim, std::move(e));
}

// Radial grid graded geometrically toward r = 0 with innermost edge r_min,
// preceded by a single core cell [0, r_min].
inline DensityGrid radial_graded_grid(int dim, double r_min, double r_max, std::size_t cells) {
  if (!(r_max > r_min && r_min > 0.0) || cells < 2) throw Error("graded grid needs 0 < r_min < r_max and cells >= 2");
  std::vector<double> e{0.0};
  const std::size_t n = cells - 1;
  const double ratio = std::log(r_max / r_min);
  for (std::size_t i = 0; i <= n; ++i) e.push_back(r_min * std::exp(ratio * static_cast<double>(i) / n));
  e.back() = r_max;
  return grid_from_edges(DensityGrid::Geometry::radial, dim, std::move(e));
}

inline void write_grid_csv(const DensityGrid& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out.precision(17);
  out << "coord,volume,value\n";
  for (std::size_t i = 0; i < g.size(); ++i) out << g.centers[i] << ',' << g.volumes[i] << ',' << g.values[i] << '\n';
  if (!out) throw Error("write failed for " + path);
}

// ---------------------------------------------------------------------------
// Histograms over a manifold coordinate

struct Histogram {
  std::vector<double> edges;
  std::vector<double> weights;  // sum to 1

  std::size_t bins() const { return weights.size(); }
  double center(std::size_t i) const { return 0.5 * (edges[i] + edges[i + 1]); }
};

inline Histogram uniform_bins(double lo, double hi, std::size_t bins) {
  if (bins == 0 || !(hi > lo)) throw Error("histogram needs bins > 0 and hi > lo");
  Histogram h;
  h.edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) h.edges[i] = lo + (hi - lo) * static_cast<double>(i) / bins;
  h.weights.assign(bins, 0.0);
  return h;
}

inline void normalize_weights(Histogram& h) {
  double s = 0.0;
  for (double w : h.weights) s += w;
  if (!(s > 0.0) || !std::isfinite(s)) throw Error("histogram has no mass");
  for (double& w : h.weights) w /= s;
}

inline double tv_distance(const Histogram& a, const Histogram& b) {
  if (a.bins() != b.bins()) throw Error("histograms have different bin counts");
  double s = 0.0;
  for (std::size_t i = 0; i < a.bins(); ++i) s += std::abs(a.weights[i] - b.weights[i]);
  return 0.5 * s;
}

inline void write_histogram_csv(const Histogram& h, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out.precision(17);
  out << "coordinate,value\n";
  for (std::size_t i = 0; i < h.bins(); ++i) out << h.center(i) << ',' << h.weights[i] << '\n';
  if (!out) throw Error("write failed for " + path);
}

}  // namespace sgdlab
