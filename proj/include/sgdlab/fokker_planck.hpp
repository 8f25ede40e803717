#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "grid.hpp"
#include "invariant.hpp"
#include "landscapes.hpp"
#include "quadrature.hpp"

namespace sgdlab {

// ---------------------------------------------------------------------------
// Geometry and grids

struct FpeGeometry {
  enum class Kind { line, radial };
  enum class Spacing { uniform, sinh, graded };

  Kind kind = Kind::line;
  double a = -10.0, b = 10.0;  // line
  int dim = 1;                 // radial
  double r_max = 10.0;         // radial
  Spacing spacing = Spacing::uniform;
  double core = 1.0;    // sinh: uniform-spacing scale near 0
  double r_min = 1e-6;  // graded: innermost edge

  static FpeGeometry line(double a, double b) {
    FpeGeometry g;
    g.a = a;
    g.b = b;
    return g;
  }
  static FpeGeometry radial(int dim, double r_max, Spacing s = Spacing::sinh) {
    FpeGeometry g;
    g.kind = Kind::radial;
    g.dim = dim;
    g.r_max = r_max;
    g.spacing = s;
    return g;
  }
};

inline constexpr std::size_t kMinFpeCells = 16;

inline DensityGrid fpe_grid(const FpeGeometry& g, std::size_t cells) {
  if (cells < kMinFpeCells) throw Error("Fokker-Planck grids need at least 16 cells");
  if (g.kind == FpeGeometry::Kind::line) {
    if (g.spacing != FpeGeometry::Spacing::uniform) throw Error("line geometry supports uniform spacing only");
    return line_grid(g.a, g.b, cells);
  }
  switch (g.spacing) {
    case FpeGeometry::Spacing::uniform: {
      std::vector<double> e(cells + 1);
      for (std::size_t i = 0; i <= cells; ++i) e[i] = g.r_max * static_cast<double>(i) / cells;
      return grid_from_edges(DensityGrid::Geometry::radial, g.dim, std::move(e));
    }
    case FpeGeometry::Spacing::sinh: return radial_sinh_grid(g.dim, g.r_max, cells, g.core);
    case FpeGeometry::Spacing::graded: return radial_graded_grid(g.dim, g.r_min, g.r_max, cells);
  }
  throw Error("unknown grid spacing");
}

namespace detail {

// Radial profile r ↦ (f, ∂_r f) along e₁, or the line coordinate for 1D landscapes.
inline std::pair<double, double> profile(const Landscape& f, double x) {
  const Vec p = grid_point(x, f.dim());
  Vec g(f.dim());
  const double v = f.value_gradient(p.data(), g.data());
  return {v, g[0]};
}

inline void check_grid_landscape(const Landscape& f, const DensityGrid& grid) {
  if (grid.geometry == DensityGrid::Geometry::line && f.dim() != 1)
    throw Error("line geometry needs a one-dimensional landscape, got dim " + std::to_string(f.dim()));
  if (grid.geometry == DensityGrid::Geometry::radial) {
    if (grid.dim != f.dim())
      throw Error("radial grid dimension " + std::to_string(grid.dim) + " differs from landscape dimension " +
                  std::to_string(f.dim()));
    if (f.dim() > 1) {
      std::vector<int> axes(f.dim());
      for (int i = 0; i < f.dim(); ++i) axes[i] = i;
      if (!radially_symmetric(f, f.dim(), axes, -1))
        throw Error("radial geometry needs a radially symmetric landscape; '" + f.name() + "' is not");
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Operator

// Conservative two-point flux discretization of ∂tρ = div(D∇ρ + bρ) with
// zero-flux boundaries. Face flux F = A (D (ρ_R − ρ_L)/Δ + b (ρ_L + ρ_R)/2);
// d/dt (V_i ρ_i) = F_{i+1/2} − F_{i−1/2}.
struct FpeOperator {
  enum class Variant { ml, homogeneous, coefficients };

  DensityGrid grid;
  Variant variant = Variant::coefficients;
  double noise = 0.0;              // ησ (ml) or η (homogeneous)
  std::vector<double> diffusion;   // per face
  std::vector<double> drift;       // per face
  std::vector<double> area;        // per face
  std::vector<double> lower, diag, upper;  // tridiagonal rows of d/dt(Vρ)
  std::vector<double> weight;      // residual and distance weight per cell
  double max_peclet = 0.0;         // max |b|Δ/(2D) over interior faces

  std::size_t size() const { return grid.size(); }

  // (Lρ)_i = (d/dt ρ)_i
  std::vector<double> apply(const std::vector<double>& rho) const {
    const std::size_t n = size();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = diag[i] * rho[i];
      if (i > 0) s += lower[i] * rho[i - 1];
      if (i + 1 < n) s += upper[i] * rho[i + 1];
      out[i] = s / grid.volumes[i];
    }
    return out;
  }

  // Largest explicit step keeping every diagonal entry of I + dt·L nonnegative.
  double dt_max() const {
    double d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < size(); ++i)
      if (diag[i] < 0.0) d = std::min(d, grid.volumes[i] / -diag[i]);
    return d;
  }

  // Exact null vector: every face flux vanishes, ρ_R/ρ_L = (D/Δ − b/2)/(D/Δ + b/2).
  DensityGrid discrete_invariant() const {
    const std::size_t n = size();
    std::vector<double> logp(n, 0.0);
    for (std::size_t i = 1; i < n; ++i) {
      const double dx = grid.centers[i] - grid.centers[i - 1];
      const double p = diffusion[i] / dx + 0.5 * drift[i];
      const double q = diffusion[i] / dx - 0.5 * drift[i];
      if (!(p > 0.0) || !(q > 0.0)) throw Error("discrete invariant density undefined at face " + std::to_string(i));
      logp[i] = logp[i - 1] + std::log(q) - std::log(p);
    }
    const double top = *std::max_element(logp.begin(), logp.end());
    DensityGrid d = grid;
    for (std::size_t i = 0; i < n; ++i) d.values[i] = std::exp(logp[i] - top);
    normalize(d);
    return d;
  }
};

using FaceFunction = std::function<double(double)>;

// General variant: diffusion D(x) and drift b(x) at face coordinates; the
// optional residual weight defaults to 1.
inline FpeOperator assemble_coefficients(const DensityGrid& grid, const FaceFunction& diffusion, const FaceFunction& drift,
                                         const FaceFunction& weight = {}) {
  const std::size_t n = grid.size();
  if (n < kMinFpeCells) throw Error("Fokker-Planck grids need at least 16 cells");
  FpeOperator op;
  op.grid = grid;
  op.grid.values.assign(n, 0.0);
  op.grid.normalized = false;
  op.diffusion.assign(n + 1, 0.0);
  op.drift.assign(n + 1, 0.0);
  op.area.assign(n + 1, 0.0);
  op.lower.assign(n, 0.0);
  op.diag.assign(n, 0.0);
  op.upper.assign(n, 0.0);
  op.weight.assign(n, 1.0);
  for (std::size_t i = 1; i < n; ++i) {
    const double x = grid.edges[i];
    const double D = diffusion(x), b = drift(x);
    if (!(D > 0.0) || !std::isfinite(D) || !std::isfinite(b))
      throw Error("diffusion must be positive and finite at interior face x=" + std::to_string(x));
    op.diffusion[i] = D;
    op.drift[i] = b;
    op.area[i] = grid.face_area(i);
    const double dx = grid.centers[i] - grid.centers[i - 1];
    op.max_peclet = std::max(op.max_peclet, std::abs(b) * dx / (2.0 * D));
    // F = cL ρ_{i−1} + cR ρ_i at face i (between cells i−1 and i)
    const double cL = op.area[i] * (-D / dx + 0.5 * b);
    const double cR = op.area[i] * (D / dx + 0.5 * b);
    // cell i−1 gains F, cell i loses F
    op.diag[i - 1] += cL;
    op.upper[i - 1] += cR;
    op.lower[i] -= cL;
    op.diag[i] -= cR;
  }
  if (op.max_peclet > 1.0)
    throw Error("cell Peclet number " + std::to_string(op.max_peclet) +
                " exceeds 1: the central flux loses positivity; refine the grid");
  if (weight)
    for (std::size_t i = 0; i < n; ++i) op.weight[i] = weight(grid.centers[i]);
  return op;
}

namespace detail {

inline void check_positive_f(const Landscape& f, const DensityGrid& grid) {
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double fc = f.value(grid_point(grid.centers[i], f.dim()));
    if (!(fc > 0.0))
      throw Error("f = " + std::to_string(fc) + " at cell " + std::to_string(i) + " (coord " +
                  std::to_string(grid.centers[i]) + "): the grid does not resolve the minimizer set");
  }
  for (std::size_t i = 1; i + 1 < grid.edges.size(); ++i) {
    const double fe = f.value(grid_point(grid.edges[i], f.dim()));
    if (!(fe > 0.0))
      throw Error("f = " + std::to_string(fe) + " at face " + std::to_string(i) + " (coord " +
                  std::to_string(grid.edges[i]) + "): the grid does not resolve the minimizer set");
  }
}

}  // namespace detail

// ML-isotropic noise: ∂tρ = div(ησ f ∇ρ + (1+ησ) ρ ∇f).
inline FpeOperator assemble(const Landscape& f, double eta_sigma, const DensityGrid& grid) {
  if (!(eta_sigma > 0.0)) throw Error("ησ must be positive");
  detail::check_grid_landscape(f, grid);
  detail::check_positive_f(f, grid);
  auto op = assemble_coefficients(
      grid, [&](double x) { return eta_sigma * detail::profile(f, x).first; },
      [&](double x) { return (1.0 + eta_sigma) * detail::profile(f, x).second; },
      [&](double x) { return std::pow(f.value(grid_point(x, f.dim())), 1.0 + 1.0 / eta_sigma); });
  op.variant = FpeOperator::Variant::ml;
  op.noise = eta_sigma;
  return op;
}

inline FpeOperator assemble(const Landscape& f, double eta_sigma, const FpeGeometry& geometry, std::size_t cells) {
  return assemble(f, eta_sigma, fpe_grid(geometry, cells));
}

// Homogeneous noise Σ = ηI: ∂tρ = div(η ∇ρ + ρ ∇f).
inline FpeOperator assemble_homogeneous(const Landscape& f, double eta, const DensityGrid& grid) {
  if (!(eta > 0.0)) throw Error("η must be positive");
  detail::check_grid_landscape(f, grid);
  double fmin = std::numeric_limits<double>::infinity();
  for (double x : grid.centers) fmin = std::min(fmin, f.value(grid_point(x, f.dim())));
  auto op = assemble_coefficients(
      grid, [&](double) { return eta; }, [&](double x) { return detail::profile(f, x).second; },
      [&](double x) { return std::exp((f.value(grid_point(x, f.dim())) - fmin) / eta); });
  op.variant = FpeOperator::Variant::homogeneous;
  op.noise = eta;
  return op;
}

// ---------------------------------------------------------------------------
// Diagnostics

// Dual (flux) norm of the right-hand side: sqrt(Σ_faces w F² Δ/(A D)), the
// discrete ∫ |J|² f^{1+1/(ησ)}/D with w the operator weight averaged to faces.
// The cell-wise L² norm would be O(h^{3/2}) because zero-flux boundary cells
// carry O(h) local truncation even when the scheme is second order.
inline double stationarity_residual(const FpeOperator& op, const DensityGrid& rho) {
  if (!rho.same_cells(op.grid)) throw Error("density grid does not match the operator grid");
  const std::size_t n = op.size();
  std::vector<double> t;
  t.reserve(n);
  for (std::size_t i = 1; i < n; ++i) {
    const double dx = op.grid.centers[i] - op.grid.centers[i - 1];
    const double D = op.diffusion[i], A = op.area[i];
    if (!(A > 0.0)) continue;
    const double F = A * (D * (rho.values[i] - rho.values[i - 1]) / dx + 0.5 * op.drift[i] * (rho.values[i] + rho.values[i - 1]));
    const double w = 0.5 * (op.weight[i - 1] + op.weight[i]);
    t.push_back(w * F * F * dx / (A * D));
  }
  return std::sqrt(pairwise_sum(t));
}

// Normalized pointwise invariant density f^{−1−1/(ησ)} at cell centers.
inline DensityGrid sampled_invariant(const Landscape& f, double eta_sigma, const DensityGrid& grid) {
  detail::check_grid_landscape(f, grid);
  detail::check_positive_f(f, grid);
  DensityGrid d = density_eval(f, DensityModel::power(power_exponent(eta_sigma)), grid);
  normalize(d);
  return d;
}

namespace detail {

inline double mass_of(const DensityGrid& g) {
  std::vector<double> t(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) t[i] = g.values[i] * g.volumes[i];
  return pairwise_sum(t);
}

inline void check_probability(const DensityGrid& rho) {
  for (std::size_t i = 0; i < rho.size(); ++i)
    if (!std::isfinite(rho.values[i])) throw Error("density is not finite at cell " + std::to_string(i));
  const double m = mass_of(rho);
  if (std::abs(m - 1.0) > 1e-9) throw Error("density must be a probability density, mass = " + std::to_string(m));
}

inline void check_integrable_power(const Landscape& f, double eta_sigma) {
  if (f.infimum() > 0.0) {
    // no singularity at N; only the tail matters
    if (!(power_exponent(eta_sigma) < -f.dim() / f.growth_exponent()))
      throw Error("invariant density f^α with α = " + std::to_string(power_exponent(eta_sigma)) +
                  " is not normalizable at infinity on '" + f.name() + "'");
    return;
  }
  const auto c = classify_integrability(power_exponent(eta_sigma), f.dim(), f.minimizer_set().intrinsic_dim(),
                                        f.growth_exponent());
  if (c != IntegrabilityClass::integrable)
    throw Error(std::string("invariant density is not normalizable on '") + f.name() + "': " + to_string(c));
}

}  // namespace detail

// sqrt(Σ (ρ − ρ∞)² f^{1+1/(ησ)} V) with ρ∞ the normalized pointwise invariant density.
inline double weighted_l2_distance(const DensityGrid& rho, const Landscape& f, double eta_sigma) {
  detail::check_integrable_power(f, eta_sigma);
  detail::check_probability(rho);
  const DensityGrid inf = sampled_invariant(f, eta_sigma, rho);
  std::vector<double> t(rho.size());
  for (std::size_t i = 0; i < rho.size(); ++i) {
    const double w = std::pow(f.value(grid_point(rho.centers[i], f.dim())), 1.0 + 1.0 / eta_sigma);
    const double d = rho.values[i] - inf.values[i];
    t[i] = d * d * w * rho.volumes[i];
  }
  return std::sqrt(pairwise_sum(t));
}

// Same metric against the operator's exact discrete null vector π, with the
// weight 1/(Zπ) (Z normalizes the pointwise density), which agrees with
// f^{1+1/(ησ)} to second order and makes both time steppers contractive.
struct DistanceToEquilibrium {
  DensityGrid equilibrium;
  std::vector<double> weight;

  explicit DistanceToEquilibrium(const FpeOperator& op) : equilibrium(op.discrete_invariant()) {
    const std::size_t n = op.size();
    // Z from the operator weight: w ≈ f^{1+1/(ησ)} ≈ 1/(Z ρ∞)
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = op.grid.volumes[i] / op.weight[i];
    const double Z = pairwise_sum(t);
    weight.resize(n);
    for (std::size_t i = 0; i < n; ++i) weight[i] = 1.0 / (Z * equilibrium.values[i]);
  }

  double operator()(const DensityGrid& rho) const {
    if (!rho.same_cells(equilibrium)) throw Error("density grid does not match the operator grid");
    std::vector<double> t(rho.size());
    for (std::size_t i = 0; i < rho.size(); ++i) {
      const double d = rho.values[i] - equilibrium.values[i];
      t[i] = d * d * weight[i] * rho.volumes[i];
    }
    return std::sqrt(pairwise_sum(t));
  }
};

inline double weighted_l2_distance(const DensityGrid& rho, const FpeOperator& op) { return DistanceToEquilibrium(op)(rho); }

// ---------------------------------------------------------------------------
// Time stepping

enum class FpeScheme { explicit_euler, implicit_euler };

inline const char* to_string(FpeScheme s) { return s == FpeScheme::explicit_euler ? "explicit" : "implicit"; }

inline FpeScheme fpe_scheme_from_string(const std::string& s) {
  if (s == "explicit") return FpeScheme::explicit_euler;
  if (s == "implicit") return FpeScheme::implicit_euler;
  throw Error("scheme must be 'explicit' or 'implicit', got '" + s + "'");
}

struct EvolveOptions {
  double dt = 1e-3;
  std::size_t steps = 1000;
  FpeScheme scheme = FpeScheme::implicit_euler;
  std::size_t checkpoint_every = 0;  // 0: initial and final states only
};

struct FpeCheckpoint {
  double time;
  std::size_t step;
  DensityGrid density;
};

struct FpeRun {
  std::vector<FpeCheckpoint> checkpoints;
  double max_step_mass_drift = 0.0;  // max |mass(t+dt) − mass(t)|
  double min_value = 0.0;
};

inline constexpr double kNegativeTolerance = -1e-12;

inline FpeRun evolve(const FpeOperator& op, const DensityGrid& rho0, const EvolveOptions& opt) {
  if (!rho0.same_cells(op.grid)) throw Error("initial density grid does not match the operator grid");
  if (!(opt.dt > 0.0)) throw Error("time step must be positive");
  detail::check_probability(rho0);
  if (opt.scheme == FpeScheme::explicit_euler && opt.dt > op.dt_max())
    throw Error("explicit step dt = " + std::to_string(opt.dt) + " exceeds the stability bound " + std::to_string(op.dt_max()));
  const std::size_t n = op.size();
  const std::size_t every = opt.checkpoint_every == 0 ? std::max<std::size_t>(opt.steps, 1) : opt.checkpoint_every;
  const auto& V = op.grid.volumes;

  FpeRun run;
  DensityGrid rho = rho0;
  run.checkpoints.push_back({0.0, 0, rho});
  run.min_value = *std::min_element(rho.values.begin(), rho.values.end());

  // implicit: (V − dt K) ρ' = V ρ, Thomas elimination with a fixed factorization
  std::vector<double> cprime(n), denom(n);
  if (opt.scheme == FpeScheme::implicit_euler) {
    for (std::size_t i = 0; i < n; ++i) {
      const double a = -opt.dt * op.lower[i], b = V[i] - opt.dt * op.diag[i], c = -opt.dt * op.upper[i];
      denom[i] = i == 0 ? b : b - a * cprime[i - 1];
      cprime[i] = c / denom[i];
    }
  }
  std::vector<double> next(n);
  double mass = detail::mass_of(rho);
  for (std::size_t s = 1; s <= opt.steps; ++s) {
    if (opt.scheme == FpeScheme::explicit_euler) {
      const auto r = op.apply(rho.values);
      for (std::size_t i = 0; i < n; ++i) next[i] = rho.values[i] + opt.dt * r[i];
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        const double a = -opt.dt * op.lower[i];
        next[i] = (V[i] * rho.values[i] - (i == 0 ? 0.0 : a * next[i - 1])) / denom[i];
      }
      for (std::size_t i = n - 1; i-- > 0;) next[i] -= cprime[i] * next[i + 1];
    }
    rho.values.swap(next);
    const double lo = *std::min_element(rho.values.begin(), rho.values.end());
    run.min_value = std::min(run.min_value, lo);
    if (lo < kNegativeTolerance)
      throw Error("density fell to " + std::to_string(lo) + " at step " + std::to_string(s) + " (" + to_string(opt.scheme) +
                  " scheme)");
    const double m = detail::mass_of(rho);
    run.max_step_mass_drift = std::max(run.max_step_mass_drift, std::abs(m - mass));
    mass = m;
    if (s % every == 0 || s == opt.steps) {
      if (run.checkpoints.back().step != s) run.checkpoints.push_back({s * opt.dt, s, rho});
    }
  }
  return run;
}

// ---------------------------------------------------------------------------
// Decay fits

struct DecayReport {
  std::vector<double> times;
  std::vector<double> weighted_l2;
  double fitted_nu = 0.0;
  double fit_r2 = 0.0;
  double window_begin = 0.0, window_end = 0.0;
  std::size_t fit_points = 0;
};

// Least-squares slope of log(distance) against time over [t0, t1]; ν = −slope.
inline DecayReport fit_decay_rate(const std::vector<double>& times, const std::vector<double>& distances, double t0,
                                  double t1) {
  if (times.size() != distances.size()) throw Error("times and distances differ in length");
  DecayReport rep{times, distances, 0.0, 0.0, t0, t1, 0};
  for (double d : distances)
    if (!(d >= 0.0)) throw Error("distances must be nonnegative");
  std::vector<double> x, y;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] < t0 || times[i] > t1) continue;
    if (!(distances[i] > 0.0)) throw Error("distance must be positive inside the fit window");
    x.push_back(times[i]);
    y.push_back(std::log(distances[i]));
  }
  if (x.size() < 4) throw Error("decay fit needs at least 4 points in the window, got " + std::to_string(x.size()));
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw Error("decay fit window has no time spread");
  const double slope = sxy / sxx;
  rep.fitted_nu = -slope;
  rep.fit_r2 = syy > 0.0 ? std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0) : 1.0;
  rep.fit_points = x.size();
  return rep;
}

inline void write_decay_csv(const DecayReport& rep, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out.precision(17);
  out << "time,distance\n";
  for (std::size_t i = 0; i < rep.times.size(); ++i) out << rep.times[i] << ',' << rep.weighted_l2[i] << '\n';
  if (!out) throw Error("write failed for " + path);
}

// ---------------------------------------------------------------------------
// Helpers for convergence runs

// Normalized Gaussian bump exp(−(x − c)²/(2w²)) on the grid.
inline DensityGrid bump_density(const DensityGrid& grid, double center, double width) {
  if (!(width > 0.0)) throw Error("bump width must be positive");
  DensityGrid d = grid;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double z = (d.centers[i] - center) / width;
    d.values[i] = std::exp(-0.5 * z * z);
  }
  normalize(d);
  return d;
}

// Mass of the density beyond radius R (radial) or outside [−R, R] (line):
// t = log r, t = log R + x/(1 − x), Gauss-Legendre panels in x ∈ [0, 1). Handles
// geometric and logarithmic tails alike; radii beyond e^700 are dropped.
inline double tail_mass(const Landscape& f, const DensityModel& model, double R) {
  if (!(R > 0.0)) throw Error("tail radius must be positive");
  const bool line = f.dim() == 1;
  const double omega = line ? 1.0 : sphere_area(f.dim());
  const double t0 = std::log(R);
  const auto q = gauss_legendre(8);
  const std::size_t panels = 256;
  auto density = [&](double r) {
    if (line) return model(f.value(grid_point(r, 1))) + model(f.value(grid_point(-r, 1)));
    return model(f.value(grid_point(r, f.dim())));
  };
  std::vector<double> terms;
  for (std::size_t p = 0; p < panels; ++p) {
    // panels graded toward x = 1
    const double xa = 1.0 - std::pow(1.0 - static_cast<double>(p) / panels, 2.0);
    const double xb = 1.0 - std::pow(1.0 - static_cast<double>(p + 1) / panels, 2.0);
    for (std::size_t k = 0; k < q.nodes.size(); ++k) {
      const double x = xa + 0.5 * (xb - xa) * (1.0 + q.nodes[k]);
      const double t = t0 + x / (1.0 - x);
      if (t > 700.0) continue;
      const double r = std::exp(t);
      const double rho = density(r);
      if (!std::isfinite(rho) || rho < 0.0) throw Error("density is not finite at r=" + std::to_string(r));
      if (rho == 0.0) continue;
      // product r^m ρ in log space: r^m alone overflows long before the tail is negligible
      const double log_jac = (line ? 1.0 : f.dim()) * t + std::log(omega);
      const double v = 0.5 * (xb - xa) * q.weights[k] * std::exp(log_jac + std::log(rho)) / ((1.0 - x) * (1.0 - x));
      if (!std::isfinite(v)) throw Error("density is not normalizable at infinity");
      terms.push_back(v);
    }
  }
  return pairwise_sum(terms);
}

// Smallest R = 2^k with relative tail mass below tol.
inline double outer_radius_for_tail(const Landscape& f, const DensityModel& model, double tol = 1e-8) {
  const auto nrm = normalize(f, model);
  if (!nrm.integrable) throw Error("density is not normalizable; no finite outer radius exists");
  for (int k = 0; k < 1000; ++k) {
    const double R = std::ldexp(1.0, k);
    if (tail_mass(f, model, R) < tol * nrm.integral) return R;
  }
  throw Error("no outer radius below 2^1000 meets the tail tolerance");
}

}  // namespace sgdlab
