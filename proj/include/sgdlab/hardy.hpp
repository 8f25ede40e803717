#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fokker_planck.hpp"
#include "grid.hpp"
#include "landscapes.hpp"
#include "quadrature.hpp"
#include "rng.hpp"

namespace sgdlab {

// ---------------------------------------------------------------------------
// Reference constant of the Poincaré–Hardy inequality for (1+|θ|²)^α weights

inline double reference_constant(double alpha, int m) {
  if (m < 1) throw Error("dimension must be positive");
  const double seam = -0.5 * (m + 2);
  if (!(alpha < -0.5 * (m - 2))) throw Error("reference constant needs α < −(m−2)/2");
  if (alpha == seam) throw Error("reference constant is not defined at the seam α = −(m+2)/2");
  if (alpha < -m) return 2.0 * std::abs(alpha);
  if (alpha < seam) return 2.0 * (2.0 * std::abs(alpha) - m);
  const double t = m - 2 + 2.0 * alpha;
  return 0.25 * t * t;
}

// ---------------------------------------------------------------------------
// Test functions

// Radial function with value and derivative, compactly supported in [lo, hi].
struct TestFunction {
  std::function<std::pair<double, double>(double)> eval;  // r ↦ (u, u′)
  double lo = 0.0, hi = 0.0;

  bool zero() const { return !eval; }
};

// Smooth compact bump a·exp(1 − 1/(1 − z²)), z = (r − c)/w, supported on [c − w, c + w].
struct Bump {
  double center, half_width, amplitude;

  std::pair<double, double> operator()(double r) const {
    const double z = (r - center) / half_width;
    if (std::abs(z) >= 1.0) return {0.0, 0.0};
    const double q = 1.0 - z * z;
    const double v = amplitude * std::exp(1.0 - 1.0 / q);
    return {v, v * (-2.0 * z / (q * q)) / half_width};
  }
};

inline TestFunction bump_sum(std::vector<Bump> bumps) {
  if (bumps.empty()) return {};
  TestFunction u;
  u.lo = std::numeric_limits<double>::infinity();
  u.hi = -u.lo;
  for (const auto& b : bumps) {
    if (!(b.half_width > 0.0)) throw Error("bump half width must be positive");
    u.lo = std::min(u.lo, b.center - b.half_width);
    u.hi = std::max(u.hi, b.center + b.half_width);
  }
  u.eval = [bumps = std::move(bumps)](double r) {
    double v = 0.0, d = 0.0;
    for (const auto& b : bumps) {
      const auto [bv, bd] = b(r);
      v += bv;
      d += bd;
    }
    return std::pair<double, double>{v, d};
  };
  return u;
}

// Up to five bumps inside (lo, hi).
inline TestFunction random_bumps(CounterRng& rng, double lo, double hi) {
  if (!(hi > lo)) throw Error("random bumps need lo < hi");
  const int count = 1 + static_cast<int>(rng.uniform() * 5.0) % 5;
  std::vector<Bump> b;
  for (int k = 0; k < count; ++k) {
    const double a = lo + (hi - lo) * rng.uniform(), c = lo + (hi - lo) * rng.uniform();
    const double left = std::min(a, c), right = std::max(a, c);
    const double w = std::max(0.5 * (right - left), 1e-3 * (hi - lo));
    const double center = std::clamp(0.5 * (left + right), lo + w, hi - w);
    b.push_back({center, std::min(w, 0.5 * (hi - lo)), 2.0 * rng.uniform() - 1.0});
  }
  return bump_sum(std::move(b));
}

namespace detail {

// Smooth step 0 → 1 on [0, 1] with all derivatives vanishing at the ends.
inline std::pair<double, double> smooth_step(double x) {
  if (x <= 0.0) return {0.0, 0.0};
  if (x >= 1.0) return {1.0, 0.0};
  auto g = [](double t) { return t > 0.0 ? std::exp(-1.0 / t) : 0.0; };
  auto dg = [](double t) { return t > 0.0 ? std::exp(-1.0 / t) / (t * t) : 0.0; };
  const double a = g(x), b = g(1.0 - x), s = a + b;
  const double da = dg(x), db = -dg(1.0 - x);
  return {a / s, (da * s - a * (da + db)) / (s * s)};
}

}  // namespace detail

// u = s^{−(1+β)/2} χ(log s), s = |log r|, r ∈ (0, 1); χ is 1 on [−L/2, L/2] with unit
// smooth ramps outside. Equality case of the 1D Hardy lemma as L → ∞.
inline TestFunction near_extremal_function(double beta, double plateau) {
  if (!(beta < -1.0)) throw Error("near-extremal family needs β < −1");
  if (!(plateau > 0.0)) throw Error("plateau length must be positive");
  const double p = -0.5 * (1.0 + beta), h = 0.5 * plateau;
  TestFunction u;
  u.lo = std::exp(-std::exp(h + 1.0));
  u.hi = std::exp(-std::exp(-h - 1.0));
  u.eval = [p, h](double r) {
    if (!(r > 0.0 && r < 1.0)) return std::pair<double, double>{0.0, 0.0};
    const double s = -std::log(r), v = std::log(s);
    const auto [c1, d1] = detail::smooth_step(v + h + 1.0);
    const auto [c2, d2] = detail::smooth_step(h + 1.0 - v);
    const double chi = c1 * c2, dchi = d1 * c2 - c1 * d2;  // d/dv
    const double sp = std::pow(s, p);
    // du/ds = p s^{p−1} χ + s^{p−1} χ′(v); ds/dr = −1/r
    const double du_ds = std::pow(s, p - 1.0) * (p * chi + dchi);
    return std::pair<double, double>{sp * chi, -du_ds / r};
  };
  return u;
}

// ---------------------------------------------------------------------------
// 1D Hardy lemma

struct HardyRatio {
  double lhs;
  double rhs;
  double ratio;
};

// lhs = ∫ u²/|x|^m |log|x||^β dx, rhs = 4/(1+β)² ∫ |∇u|²/|x|^{m−2} |log|x||^{2+β} dx for
// radial u (gradient on the right; see the dimension check in the lemma's proof).
// Integrated in v = log|log r| with Gauss-Legendre panels.
inline HardyRatio hardy_1d_ratio(const TestFunction& u, double beta, int m, std::size_t panels = 256) {
  if (!(beta < -1.0)) throw Error("Hardy lemma needs β < −1");
  if (m < 1) throw Error("dimension must be positive");
  if (u.zero()) return {0.0, 0.0, 0.0};
  if (!(u.lo > 0.0)) throw Error("test function support must lie in r > 0");
  if (u.lo < 1.0 && u.hi > 1.0) throw Error("test function support straddles r = 1; the lemma does not apply");
  if (u.lo == 1.0 && u.hi == 1.0) throw Error("degenerate support");
  const double sa = std::abs(std::log(u.lo)), sb = std::abs(std::log(u.hi));
  const double s_lo = std::max(std::min(sa, sb), 1e-300), s_hi = std::max(sa, sb);
  const double v0 = std::log(s_lo), v1 = std::log(s_hi);
  const bool inner = u.hi <= 1.0;
  const auto q = gauss_legendre(8);
  const double omega = sphere_area(m);
  std::vector<double> L, R;
  const double dv = (v1 - v0) / panels;
  for (std::size_t p = 0; p < panels; ++p) {
    for (std::size_t k = 0; k < q.nodes.size(); ++k) {
      const double v = v0 + dv * (p + 0.5 * (1.0 + q.nodes[k]));
      const double w = 0.5 * dv * q.weights[k];
      const double s = std::exp(v);
      const double r = inner ? std::exp(-s) : std::exp(s);
      const auto [uv, du] = u.eval(r);
      // dr/r = ±ds = ±s dv
      L.push_back(w * s * uv * uv * std::pow(s, beta));
      R.push_back(w * s * r * r * du * du * std::pow(s, 2.0 + beta));
    }
  }
  const double lhs = omega * pairwise_sum(L);
  const double rhs = omega * 4.0 / ((1.0 + beta) * (1.0 + beta)) * pairwise_sum(R);
  if (lhs == 0.0 && rhs == 0.0) return {0.0, 0.0, 0.0};
  return {lhs, rhs, lhs / rhs};
}

// ---------------------------------------------------------------------------
// Weighted Poincaré inequality

using RadialFunction = std::function<double(double)>;

namespace detail {

inline RadialFunction radial_profile(const Landscape& f, const DensityGrid& grid) {
  check_grid_landscape(f, grid);
  return [&f](double r) { return f.value(grid_point(r, f.dim())); };
}

}  // namespace detail

// [∫ |u′|² f^{−1/(ησ)} dV] / [∫ |u − ⟨u⟩|² f^{−1−1/(ησ)} dV] over the grid domain, Gauss-Legendre
// on every grid cell.
inline double rayleigh_quotient(const TestFunction& u, const RadialFunction& f, double eta_sigma, const DensityGrid& grid) {
  if (!(eta_sigma > 0.0)) throw Error("ησ must be positive");
  if (u.zero()) throw Error("Rayleigh quotient of the zero function is undefined");
  const auto q = gauss_legendre(8);
  const double a = -1.0 / eta_sigma;
  std::vector<double> num, mass, first, second;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double lo = grid.edges[i], hi = grid.edges[i + 1];
    for (std::size_t k = 0; k < q.nodes.size(); ++k) {
      const double r = lo + 0.5 * (hi - lo) * (1.0 + q.nodes[k]);
      const double jac = grid.geometry == DensityGrid::Geometry::radial ? sphere_area(grid.dim) * std::pow(r, grid.dim - 1) : 1.0;
      const double w = 0.5 * (hi - lo) * q.weights[k] * jac;
      const double fv = f(r);
      if (!(fv > 0.0)) throw Error("f must be positive on the quadrature nodes");
      const auto [uv, du] = u.eval(r);
      const double g = std::pow(fv, a), mu = g / fv;
      num.push_back(w * du * du * g);
      mass.push_back(w * mu);
      first.push_back(w * mu * uv);
      second.push_back(w * mu * uv * uv);
    }
  }
  const double M = pairwise_sum(mass), mean = pairwise_sum(first) / M;
  const double var = pairwise_sum(second) - M * mean * mean;
  const double scale = pairwise_sum(second);
  if (!(var > 1e-14 * scale) || !(var > 0.0)) throw Error("Rayleigh quotient denominator vanishes (u is constant)");
  return pairwise_sum(num) / var;
}

inline double rayleigh_quotient(const TestFunction& u, const Landscape& f, double eta_sigma, const DensityGrid& grid) {
  return rayleigh_quotient(u, detail::radial_profile(f, grid), eta_sigma, grid);
}

// Smallest nonzero eigenvalue of u ↦ −div(f^{−1/(ησ)}∇u) in L²(f^{−1−1/(ησ)}) with Neumann
// boundaries: two-point stiffness A f_face^{−1/(ησ)}/Δ, lumped mass V f^{−1−1/(ησ)}.
inline double spectral_gap(const RadialFunction& f, double eta_sigma, const DensityGrid& grid) {
  if (!(eta_sigma > 0.0)) throw Error("ησ must be positive");
  const std::size_t n = grid.size();
  if (n < 3) throw Error("spectral gap needs at least 3 cells");
  const double a = -1.0 / eta_sigma;
  Eigen::VectorXd mass(n), diag = Eigen::VectorXd::Zero(n), sub(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double fv = f(grid.centers[i]);
    mass[i] = grid.volumes[i] * std::pow(fv, a - 1.0);
    if (!(mass[i] > 0.0) || !std::isfinite(mass[i])) throw Error("non-finite mass weight at cell " + std::to_string(i));
  }
  for (std::size_t i = 1; i < n; ++i) {
    const double k = grid.face_area(i) * std::pow(f(grid.edges[i]), a) / (grid.centers[i] - grid.centers[i - 1]);
    if (!std::isfinite(k)) throw Error("non-finite stiffness weight at face " + std::to_string(i));
    diag[i - 1] += k;
    diag[i] += k;
    sub[i - 1] = -k;
  }
  for (std::size_t i = 0; i < n; ++i) diag[i] /= mass[i];
  for (std::size_t i = 0; i + 1 < n; ++i) sub[i] /= std::sqrt(mass[i] * mass[i + 1]);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw Error("tridiagonal eigensolver failed");
  const auto& ev = es.eigenvalues();
  if (!(std::abs(ev[0]) < 1e-6 * ev[1])) throw Error("constant mode not resolved by the eigensolver");
  return ev[1];
}

inline double spectral_gap(const Landscape& f, double eta_sigma, const DensityGrid& grid) {
  return spectral_gap(detail::radial_profile(f, grid), eta_sigma, grid);
}

// ---------------------------------------------------------------------------
// Radial Liouville counterexample: u = r^β, β = kγ̃ + 2 − m, solves
// Δu − γ̃ ∇log f · ∇u = 0 for f = r^k.

inline double liouville_exponent(double k, int m, double gamma_tilde) { return k * gamma_tilde + 2.0 - m; }

// Max over samples of |u″ + (m−1)/r u′ − γ̃ k/r u′| with u = r^{β+shift}, derivatives by
// central differences with two Richardson levels.
inline double liouville_residual(double k, int m, double gamma_tilde, const std::vector<double>& samples,
                                 double beta_shift = 0.0) {
  if (!(k > 0.0) || !(gamma_tilde > 0.0) || m < 1) throw Error("Liouville residual needs k > 0, γ̃ > 0, m ≥ 1");
  if (samples.empty()) throw Error("no sample radii");
  const double beta = liouville_exponent(k, m, gamma_tilde) + beta_shift;
  auto u = [beta](double r) { return std::pow(r, beta); };
  double worst = 0.0;
  for (double r : samples) {
    if (!(r > 0.0)) throw Error("sample radii must be positive");
    auto d = [&](double h) {
      const double up = u(r + h), um = u(r - h), u0 = u(r);
      return std::pair<double, double>{(up - um) / (2.0 * h), (up - 2.0 * u0 + um) / (h * h)};
    };
    const double h = 0.02 * r;
    const auto a = d(h), b = d(0.5 * h), c = d(0.25 * h);
    auto rich = [](double x1, double x2, double x4) {
      const double y1 = (4.0 * x2 - x1) / 3.0, y2 = (4.0 * x4 - x2) / 3.0;
      return (16.0 * y2 - y1) / 15.0;
    };
    const double d1 = rich(a.first, b.first, c.first), d2 = rich(a.second, b.second, c.second);
    worst = std::max(worst, std::abs(d2 + (m - 1.0) / r * d1 - gamma_tilde * k / r * d1));
  }
  return worst;
}

}  // namespace sgdlab
