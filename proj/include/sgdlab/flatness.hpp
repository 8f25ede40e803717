#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "grid.hpp"
#include "landscapes.hpp"
#include "quadrature.hpp"
#include "rng.hpp"

namespace sgdlab {

// ---------------------------------------------------------------------------
// Arithmetic-geometric mean

struct AgmTrace {
  double value;
  std::vector<double> gaps;  // |a_k − b_k| before each step
};

inline AgmTrace agm_trace(double a, double b, double tol = 1e-12) {
  if (!(a > 0.0) || !(b > 0.0) || !(tol > 0.0)) throw Error("agm needs positive arguments and tolerance");
  AgmTrace t{0.0, {}};
  for (int k = 0; k < 200; ++k) {
    const double gap = std::abs(a - b);
    t.gaps.push_back(gap);
    if (gap < tol * a) break;
    const double an = 0.5 * (a + b);
    b = std::sqrt(a * b);
    a = an;
  }
  t.value = 0.5 * (a + b);
  return t;
}

inline double agm(double a, double b, double tol = 1e-12) { return agm_trace(a, b, tol).value; }

inline double agm_log_limit(double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw Error("agm_log_limit needs eps in (0, 1)");
  return std::abs(std::log(eps)) * agm(1.0, eps);
}

// ---------------------------------------------------------------------------
// Flatness scores

enum class FlatnessModel { hom, ml };

inline const char* to_string(FlatnessModel m) { return m == FlatnessModel::hom ? "hom" : "ml"; }

inline FlatnessModel flatness_model_from_string(const std::string& s) {
  if (s == "hom") return FlatnessModel::hom;
  if (s == "ml") return FlatnessModel::ml;
  throw Error("flatness model must be 'hom' or 'ml', got '" + s + "'");
}

struct FlatnessScore {
  double value;
  double error;  // standard error (Monte Carlo) or refinement estimate (grid)
  FlatnessModel model;
  int codim;
};

struct SphereQuadrature {
  enum class Scheme { monte_carlo, tensor_grid };
  Scheme scheme = Scheme::tensor_grid;
  std::size_t samples = 1000000;  // Monte Carlo
  std::uint64_t seed = 1;         // Monte Carlo
  double tol = 1e-12;             // tensor grid: relative refinement tolerance
  std::size_t max_nodes = 1u << 22;

  static SphereQuadrature monte_carlo(std::size_t samples, std::uint64_t seed) {
    SphereQuadrature q;
    q.scheme = Scheme::monte_carlo;
    q.samples = samples;
    q.seed = seed;
    return q;
  }
  static SphereQuadrature grid(double tol = 1e-12) {
    SphereQuadrature q;
    q.tol = tol;
    return q;
  }
};

inline void check_spectrum(const std::vector<double>& lambda) {
  if (lambda.empty()) throw Error("flatness needs a nonempty spectrum (codimension 0 is invalid)");
  for (double l : lambda)
    if (!(l > 0.0) || !std::isfinite(l)) throw Error("flatness needs strictly positive eigenvalues");
}

inline FlatnessScore g1(const std::vector<double>& lambda) {
  check_spectrum(lambda);
  double log_det = 0.0;
  for (double l : lambda) log_det += std::log(l);
  return {std::exp(-0.5 * log_det), 0.0, FlatnessModel::hom, static_cast<int>(lambda.size())};
}

inline FlatnessScore g1(const HessianSpectrum& s) { return g1(s.eigenvalues); }

struct SphereAverage {
  double value;
  double error;
};

// Average over S^{c−1} of (νᵀ diag(λ) ν)^p.
inline SphereAverage sphere_average_power(const std::vector<double>& lambda, double p, const SphereQuadrature& quad) {
  check_spectrum(lambda);
  const int c = static_cast<int>(lambda.size());
  if (c == 1) return {std::pow(lambda[0], p), 0.0};
  auto integrand = [&](const double* v) {
    double q = 0.0;
    for (int i = 0; i < c; ++i) q += lambda[i] * v[i] * v[i];
    return std::pow(q, p);
  };
  if (quad.scheme == SphereQuadrature::Scheme::monte_carlo) {
    if (quad.samples < 2) throw Error("Monte Carlo sphere average needs at least 2 samples");
    CounterRng rng(quad.seed, 0x5F3E);
    std::vector<double> vals(quad.samples), v(c);
    for (std::size_t k = 0; k < quad.samples; ++k) {
      double n2 = 0.0;
      for (int i = 0; i < c; ++i) {
        v[i] = rng.normal();
        n2 += v[i] * v[i];
      }
      const double inv = 1.0 / std::sqrt(n2);
      for (int i = 0; i < c; ++i) v[i] *= inv;
      vals[k] = integrand(v.data());
    }
    const double mean = pairwise_sum(vals) / quad.samples;
    for (double& x : vals) x = (x - mean) * (x - mean);
    const double var = pairwise_sum(vals) / (quad.samples - 1);
    return {mean, std::sqrt(var / quad.samples)};
  }
  // tensor grid, doubled until successive values agree
  const double area = sphere_area(c);
  auto grid_value = [&](std::size_t n) {
    const SphereGrid g = sphere_tensor_grid(c, n);
    std::vector<double> terms(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) terms[k] = g.weights[k] * integrand(g.node(k));
    return pairwise_sum(terms) / area;
  };
  auto nodes = [&](std::size_t n) {
    double s = 2.0 * n;
    for (int j = 0; j < c - 2; ++j) s *= n;
    return s;
  };
  std::size_t n = 8;
  double prev = grid_value(n), err = std::numeric_limits<double>::infinity();
  while (nodes(2 * n) <= static_cast<double>(quad.max_nodes)) {
    n *= 2;
    const double cur = grid_value(n);
    err = std::abs(cur - prev);
    prev = cur;
    if (err <= quad.tol * std::abs(cur)) break;
  }
  return {prev, err};
}

// Sphere average of (νᵀ diag(λ) ν)^{−codim/2}.
inline FlatnessScore g2(const std::vector<double>& lambda, const SphereQuadrature& quad = {}) {
  check_spectrum(lambda);
  const int c = static_cast<int>(lambda.size());
  const auto a = sphere_average_power(lambda, -0.5 * c, quad);
  return {a.value, a.error, FlatnessModel::ml, c};
}

inline FlatnessScore g2(const HessianSpectrum& s, const SphereQuadrature& quad = {}) { return g2(s.eigenvalues, quad); }

inline FlatnessScore flatness_score(const std::vector<double>& lambda, FlatnessModel model, const SphereQuadrature& quad = {}) {
  return model == FlatnessModel::hom ? g1(lambda) : g2(lambda, quad);
}

// ---------------------------------------------------------------------------
// Profiles along a circle of minimizers

using SpectrumScore = std::function<double(const HessianSpectrum&)>;

// Bin mass ∝ score at the bin center × bin arc length.
inline Histogram flat_profile(const Landscape& f, std::size_t bins, const SpectrumScore& score) {
  const auto& set = f.minimizer_set();
  if (set.kind() != MinimizerSet::Kind::circle_in_plane) throw Error("flatness profiles need a circle of minimizers");
  Histogram h = uniform_bins(0.0, kTwoPi, bins);
  for (std::size_t i = 0; i < bins; ++i) {
    const auto spec = reduced_hessian_spectrum(f, set.point_at(h.center(i)));
    h.weights[i] = score(spec) * (h.edges[i + 1] - h.edges[i]);
  }
  normalize_weights(h);
  return h;
}

inline Histogram flat_density_profile(const Landscape& f, FlatnessModel model, std::size_t bins, const SphereQuadrature& quad = {}) {
  return flat_profile(f, bins, [&](const HessianSpectrum& s) { return flatness_score(s.eigenvalues, model, quad).value; });
}

}  // namespace sgdlab
