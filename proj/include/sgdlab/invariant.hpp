#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "grid.hpp"
#include "landscapes.hpp"
#include "quadrature.hpp"
#include "rng.hpp"

namespace sgdlab {

inline constexpr double kQuadTol = 1e-8;

// ---------------------------------------------------------------------------
// Exponents and thresholds

struct NoiseExponents {
  double alpha;             // −(1+ησ)/(ησ)
  double alpha_critical;    // −(m−n)/2
  double alpha_tail;        // −m/γ
  std::optional<double> threshold_eta_sigma;  // ησ with α = α*, when m−n > 2
  bool admissible_nonempty;  // (α*, −m/γ) ≠ ∅, i.e. γ > 2m/(m−n)

  bool threshold_reachable() const { return threshold_eta_sigma.has_value(); }
};

inline double power_exponent(double eta_sigma) {
  if (!(eta_sigma > 0.0)) throw Error("ησ must be positive");
  return -(1.0 + eta_sigma) / eta_sigma;
}

inline void check_dims(int m, int n) {
  if (m < 1 || n < 0 || n >= m) throw Error("need 0 <= n < m, got m=" + std::to_string(m) + ", n=" + std::to_string(n));
}

inline NoiseExponents noise_exponents(double eta, double sigma, int m, int n, double gamma) {
  if (!(eta > 0.0) || !(sigma > 0.0)) throw Error("η and σ must be positive");
  if (!(gamma > 0.0)) throw Error("growth exponent γ must be positive");
  check_dims(m, n);
  const int c = m - n;
  NoiseExponents e;
  e.alpha = power_exponent(eta * sigma);
  e.alpha_critical = -0.5 * c;
  e.alpha_tail = -m / gamma;
  if (c > 2) e.threshold_eta_sigma = 2.0 / (c - 2);
  e.admissible_nonempty = gamma > 2.0 * m / c;
  return e;
}

enum class IntegrabilityClass { not_locally_integrable, locally_not_globally, integrable };

inline const char* to_string(IntegrabilityClass c) {
  switch (c) {
    case IntegrabilityClass::not_locally_integrable: return "not_locally_integrable";
    case IntegrabilityClass::locally_not_globally: return "locally_not_globally";
    case IntegrabilityClass::integrable: return "integrable";
  }
  return "?";
}

// Boundary exponents give logarithmically divergent integrals.
inline IntegrabilityClass classify_integrability(double alpha, int m, int n, double gamma) {
  check_dims(m, n);
  if (!(gamma > 0.0)) throw Error("growth exponent γ must be positive");
  if (alpha <= -0.5 * (m - n)) return IntegrabilityClass::not_locally_integrable;
  if (alpha < -m / gamma) return IntegrabilityClass::integrable;
  return IntegrabilityClass::locally_not_globally;
}

// ---------------------------------------------------------------------------
// Density models

struct DensityModel {
  enum class Kind { power, boltzmann };
  Kind kind = Kind::power;
  double param = -2.0;  // α for power, η for boltzmann

  static DensityModel power(double alpha) {
    if (!std::isfinite(alpha)) throw Error("power exponent must be finite");
    return {Kind::power, alpha};
  }
  static DensityModel boltzmann(double eta) {
    if (!(eta > 0.0)) throw Error("Boltzmann temperature η must be positive");
    return {Kind::boltzmann, eta};
  }

  double operator()(double f) const {
    if (kind == Kind::boltzmann) return std::exp(-f / param);
    if (f < 0.0) return std::numeric_limits<double>::quiet_NaN();
    return std::pow(f, param);
  }
};

inline json density_model_to_json(const DensityModel& d) {
  return d.kind == DensityModel::Kind::power ? json{{"alpha", d.param}} : json{{"eta", d.param}};
}

// Point of R^m at grid coordinate x: θ = x for lines, θ = x e₁ for radial grids.
inline Vec grid_point(double x, int m) {
  Vec p = Vec::Zero(m);
  p[0] = x;
  return p;
}

inline DensityGrid density_eval(const Landscape& f, const DensityModel& model, DensityGrid grid) {
  if (grid.geometry == DensityGrid::Geometry::line && f.dim() != 1)
    throw Error("line grids need a one-dimensional landscape, got dim " + std::to_string(f.dim()));
  if (grid.geometry == DensityGrid::Geometry::radial && grid.dim != f.dim())
    throw Error("radial grid dimension " + std::to_string(grid.dim) + " differs from landscape dimension " +
                std::to_string(f.dim()));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double fv = f.value(grid_point(grid.centers[i], f.dim()));
    if (model.kind == DensityModel::Kind::power && model.param < 0.0 && fv <= 0.0)
      throw Error("f = " + std::to_string(fv) + " at cell " + std::to_string(i) + " (coord " + std::to_string(grid.centers[i]) +
                  ") with negative exponent");
    grid.values[i] = model(fv);
  }
  grid.normalized = false;
  return grid;
}

// ---------------------------------------------------------------------------
// Normalization

enum class Divergence { none, at_minimizers, at_infinity, both };

inline const char* to_string(Divergence d) {
  switch (d) {
    case Divergence::none: return "none";
    case Divergence::at_minimizers: return "at_minimizers";
    case Divergence::at_infinity: return "at_infinity";
    case Divergence::both: return "both";
  }
  return "?";
}

struct Refinement {
  std::size_t resolution;  // cells per octave
  double outer_radius;
};

inline const std::vector<Refinement>& default_refinements() {
  static const std::vector<Refinement> r{{4, 256.0}, {8, 16384.0}, {16, 1048576.0}};
  return r;
}

struct Normalization {
  double constant = 0.0;  // 1/integral when integrable
  double integral = std::numeric_limits<double>::infinity();
  bool integrable = false;
  bool converged = false;
  Divergence divergence = Divergence::none;
  double inner_ratio = 0.0;  // increment of an octave toward N over the next one out
  double outer_ratio = 0.0;  // increment of the outermost octave over the previous one
  std::vector<double> estimates;       // tail-extrapolated integral per refinement
  std::vector<double> ball_integrals;  // finest refinement, expanding balls without tails
};

// Fixed-grid normalization.
inline Normalization normalize(DensityGrid& d) {
  Normalization n;
  for (double v : d.values)
    if (!(v >= 0.0) || !std::isfinite(v)) throw Error("density values must be finite and nonnegative");
  const double mass = d.mass();
  if (!(mass > 0.0) || !std::isfinite(mass)) throw Error("density has no finite positive mass");
  n.integral = mass;
  n.constant = 1.0 / mass;
  n.integrable = n.converged = true;
  n.estimates = {mass};
  n.ball_integrals = {mass};
  for (double& v : d.values) v *= n.constant;
  d.normalized = true;
  return n;
}

enum class QuadGeometry { automatic, line, radial, cylinder };

namespace detail {

// Nodes on geometric octaves [2^j/R, 2^{j+1}/R], j = 0..octaves-1: Gauss-Legendre
// in log r, `res` cells per octave, 4 nodes per cell.
struct OctaveNodes {
  std::vector<std::vector<double>> r;
  std::vector<std::vector<double>> w;  // dr weights
};

inline OctaveNodes octave_nodes(double r_in, std::size_t octaves, std::size_t res) {
  OctaveNodes o;
  const QuadratureRule q = gauss_legendre(4);
  const double du = std::log(2.0) / res;
  for (std::size_t j = 0; j < octaves; ++j) {
    std::vector<double> rs, ws;
    for (std::size_t c = 0; c < res; ++c) {
      const double u0 = std::log(r_in) + (j * res + c) * du;
      for (std::size_t k = 0; k < 4; ++k) {
        const double r = std::exp(u0 + 0.5 * du * (1.0 + q.nodes[k]));
        rs.push_back(r);
        ws.push_back(0.5 * du * q.weights[k] * r);
      }
    }
    o.r.push_back(std::move(rs));
    o.w.push_back(std::move(ws));
  }
  return o;
}

inline double increment_ratio(double inner, double outer) {
  if (outer > 0.0) return inner / outer;
  return inner > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
}

struct GeometryInfo {
  QuadGeometry kind;
  int normal_dim;  // dimension of the radial part
  int radial_axis;
  int axial_axis;  // cylinder only
};

inline bool radially_symmetric(const Landscape& f, int d, const std::vector<int>& axes, int axial) {
  CounterRng rng(0x5EED, 17);
  for (double r : {0.1, 0.5, 1.0, 2.0, 5.0}) {
    for (double t : {0.0, 0.7}) {
      Vec ref = Vec::Zero(f.dim());
      ref[axes[0]] = r;
      if (axial >= 0) ref[axial] = t;
      const double f0 = f.value(ref);
      for (int k = 0; k < 6; ++k) {
        Vec u(d);
        for (int i = 0; i < d; ++i) u[i] = rng.normal();
        u *= r / u.norm();
        Vec x = Vec::Zero(f.dim());
        for (int i = 0; i < d; ++i) x[axes[i]] = u[i];
        if (axial >= 0) x[axial] = t;
        if (std::abs(f.value(x) - f0) > 1e-10 * (1.0 + std::abs(f0))) return false;
      }
    }
  }
  return true;
}

inline GeometryInfo resolve_geometry(const Landscape& f, QuadGeometry requested) {
  const auto& set = f.minimizer_set();
  const int m = f.dim();
  QuadGeometry g = requested;
  if (g == QuadGeometry::automatic) {
    if (m == 1) {
      g = QuadGeometry::line;
    } else if (set.kind() == MinimizerSet::Kind::affine_subspace && set.intrinsic_dim() == 1) {
      g = QuadGeometry::cylinder;
    } else if (set.kind() == MinimizerSet::Kind::point_set && set.point_list().size() == 1 &&
               set.point_list().front().norm() == 0.0) {
      g = QuadGeometry::radial;
    } else {
      throw Error("no expanding-ball quadrature geometry for landscape '" + f.name() + "'");
    }
  }
  GeometryInfo info{g, m, 0, -1};
  std::vector<int> axes;
  if (g == QuadGeometry::line) {
    if (m != 1) throw Error("line quadrature needs a one-dimensional landscape");
    info.normal_dim = 1;
    return info;
  }
  if (g == QuadGeometry::cylinder) {
    if (set.kind() != MinimizerSet::Kind::affine_subspace || set.intrinsic_dim() != 1)
      throw Error("cylinder quadrature needs a one-dimensional coordinate axis as minimizer set");
    const Vec p = set.projection(Vec::Ones(m));
    for (int i = 0; i < m; ++i) {
      if (p[i] != 0.0) {
        info.axial_axis = i;
      } else {
        axes.push_back(i);
      }
    }
    info.normal_dim = m - 1;
  } else {
    for (int i = 0; i < m; ++i) axes.push_back(i);
  }
  info.radial_axis = axes.front();
  if (!radially_symmetric(f, static_cast<int>(axes.size()), axes, info.axial_axis))
    throw Error("expanding-ball quadrature needs a density symmetric in the normal directions; '" + f.name() + "' is not");
  return info;
}

}  // namespace detail

// Expanding-ball quadrature of the density with divergence diagnostics.
// Each refinement integrates over r ∈ [1/R, R] on geometric octaves; the
// ratios of octave increments at both ends decide divergence at N and at
// infinity, and otherwise feed geometric tail extrapolation.
inline Normalization normalize(const Landscape& f, const DensityModel& model,
                               const std::vector<Refinement>& refinements = default_refinements(),
                               QuadGeometry geometry = QuadGeometry::automatic) {
  if (refinements.empty()) throw Error("refinement sequence is empty");
  for (std::size_t i = 0; i < refinements.size(); ++i) {
    if (refinements[i].resolution == 0 || !(refinements[i].outer_radius > 1.0))
      throw Error("refinement needs resolution > 0 and outer radius > 1");
    if (i > 0 && !(refinements[i].outer_radius > refinements[i - 1].outer_radius))
      throw Error("contradictory refinement: outer radius must increase strictly");
    if (i > 0 && !(refinements[i].resolution > refinements[i - 1].resolution))
      throw Error("contradictory refinement: resolution must increase strictly");
  }
  const auto geo = detail::resolve_geometry(f, geometry);
  const int m = f.dim();
  const double omega = geo.kind == QuadGeometry::line ? 2.0 : sphere_area(geo.normal_dim);
  const bool negative_power = model.kind == DensityModel::Kind::power && model.param < 0.0;

  Normalization out;
  double tail_in = 0.0, tail_out = 0.0;
  for (const auto& ref : refinements) {
    const double R = ref.outer_radius, r_in = 1.0 / R;
    const auto octaves = static_cast<std::size_t>(std::ceil(2.0 * std::log2(R) - 1e-12));
    const auto on = detail::octave_nodes(r_in, octaves, ref.resolution);

    // axial blocks: block 0 is [0, r_in], block k ≥ 1 is octave k−1
    std::vector<std::vector<double>> tz{{0.0}}, tw{{1.0}};
    if (geo.kind == QuadGeometry::cylinder) {
      const auto core = gauss_legendre(4 * ref.resolution, 0.0, r_in);
      tz = {core.nodes};
      tw = {core.weights};
      for (std::size_t j = 0; j < octaves; ++j) {
        tz.push_back(on.r[j]);
        tw.push_back(on.w[j]);
      }
    }
    const std::size_t tblocks = tz.size();

    // block sums B[j][k] over radial octave j and axial block k
    std::vector<std::vector<double>> B(octaves, std::vector<double>(tblocks, 0.0));
    Vec x = Vec::Zero(m);
    for (std::size_t j = 0; j < octaves; ++j) {
      for (std::size_t k = 0; k < tblocks; ++k) {
        std::vector<double> terms;
        for (std::size_t a = 0; a < on.r[j].size(); ++a) {
          const double r = on.r[j][a];
          const double wr = on.w[j][a] * omega * (geo.kind == QuadGeometry::line ? 1.0 : std::pow(r, geo.normal_dim - 1));
          for (std::size_t b = 0; b < tz[k].size(); ++b) {
            double v = 0.0;
            const int signs = geo.kind == QuadGeometry::line ? 2 : 1;
            for (int s = 0; s < signs; ++s) {
              x.setZero();
              x[geo.radial_axis] = s == 0 ? r : -r;
              if (geo.axial_axis >= 0) x[geo.axial_axis] = tz[k][b];
              const double fv = f.value(x);
              if (negative_power && fv <= 0.0)
                throw Error("f = 0 at quadrature node r=" + std::to_string(r) + " with negative exponent");
              v += model(fv) / signs;
            }
            // axial integral covers t and −t (the landscape is even in t)
            const double wt = geo.kind == QuadGeometry::cylinder ? 2.0 * tw[k][b] : 1.0;
            terms.push_back(wr * wt * v);
          }
        }
        B[j][k] = pairwise_sum(terms);
      }
    }

    // inner increments: octave j over the full axial range
    auto inner = [&](std::size_t j) {
      double s = 0.0;
      for (std::size_t k = 0; k < tblocks; ++k) s += B[j][k];
      return s;
    };
    // ball of level L: radial octaves < L and axial blocks ≤ L
    auto ball = [&](std::size_t L) {
      double s = 0.0;
      for (std::size_t j = 0; j < L; ++j)
        for (std::size_t k = 0; k < tblocks && (geo.kind != QuadGeometry::cylinder || k <= L); ++k) s += B[j][k];
      return s;
    };
    std::vector<double> balls(octaves + 1, 0.0);
    for (std::size_t L = 1; L <= octaves; ++L) balls[L] = ball(L);
    const double s_in0 = inner(0), s_in1 = inner(1);
    const double s_out1 = balls[octaves] - balls[octaves - 1], s_out0 = balls[octaves - 1] - balls[octaves - 2];
    out.inner_ratio = detail::increment_ratio(s_in0, s_in1);
    out.outer_ratio = detail::increment_ratio(s_out1, s_out0);
    const bool div_in = out.inner_ratio >= 1.0 - 1e-9;
    const bool div_out = out.outer_ratio >= 1.0 - 1e-9;
    out.divergence = div_in && div_out ? Divergence::both
                     : div_in          ? Divergence::at_minimizers
                     : div_out         ? Divergence::at_infinity
                                       : Divergence::none;
    double est = std::numeric_limits<double>::infinity();
    if (!div_in && !div_out) {
      tail_in = s_in0 * out.inner_ratio / (1.0 - out.inner_ratio);
      tail_out = s_out1 * out.outer_ratio / (1.0 - out.outer_ratio);
      est = balls[octaves] + tail_in + tail_out;
    }
    out.estimates.push_back(est);
    out.ball_integrals = balls;
  }
  out.ball_integrals.erase(out.ball_integrals.begin());
  if (out.divergence == Divergence::none) {
    const std::size_t n = out.estimates.size();
    const double last = out.estimates.back();
    out.converged = n >= 2 ? std::abs(last - out.estimates[n - 2]) <= kQuadTol * std::abs(last) : false;
    out.integral = last;
    out.integrable = out.converged && last > 0.0 && std::isfinite(last);
    if (out.integrable) {
      out.constant = 1.0 / last;
    } else {
      // slow (logarithmic) divergence: blame the side carrying the larger tail
      out.divergence = tail_in >= tail_out ? Divergence::at_minimizers : Divergence::at_infinity;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tube marginals along a circle of minimizers

struct TubeOptions {
  double tube_radius = 0.2;
  std::size_t bins = 64;
  std::size_t radial_nodes = 64;
  std::size_t angular_nodes = 64;    // codimension 2
  std::size_t sphere_resolution = 8;  // codimension > 2
  std::size_t phi_nodes_per_bin = 4;
  bool extrapolate = true;  // Richardson in the tube radius for power densities on N
};

struct TubeMarginal {
  Histogram histogram;
  double tube_radius = 0.0;
  bool extrapolated = false;
  double extrapolation_shift = 0.0;  // TV between the finest raw and the extrapolated marginal
};

namespace detail {

// Density contribution of one normal disc at angle phi; for singular power
// densities the radial variable is r = ε v^{1/p}, p = 2α + codim, which
// absorbs the r^{2α + codim − 1} factor.
inline double disc_integral(const Landscape& f, const DensityModel& model, double phi, double eps,
                            const SphereGrid& sphere, const QuadratureRule& radial_rule, bool singular) {
  const auto& set = f.minimizer_set();
  const int c = f.dim() - 1;
  std::vector<double> s(c), terms;
  terms.reserve(sphere.size() * radial_rule.nodes.size());
  // below this radius the ratio f/r² is frozen, avoiding cancellation in f
  constexpr double kFreeze = 1e-5;
  const double alpha = model.param;
  const double p = 2.0 * alpha + c;
  for (std::size_t a = 0; a < sphere.size(); ++a) {
    const double* u = sphere.node(a);
    for (std::size_t k = 0; k < radial_rule.nodes.size(); ++k) {
      double r, w;
      if (singular) {
        const double v = radial_rule.nodes[k];
        r = eps * std::pow(v, 1.0 / p);
        const double re = std::max(r, kFreeze);
        for (int i = 0; i < c; ++i) s[i] = re * u[i];
        const double q = f.value(set.tube_point(phi, s.data())) / (re * re);
        w = std::pow(eps, p) / p * std::pow(q, alpha);
      } else {
        r = radial_rule.nodes[k];
        for (int i = 0; i < c; ++i) s[i] = r * u[i];
        const double fv = f.value(set.tube_point(phi, s.data()));
        if (model.kind == DensityModel::Kind::power && model.param < 0.0 && fv <= 0.0)
          throw Error("f = 0 inside the tube with a negative exponent");
        // constant rescaling by the infimum keeps ε^α and e^{−ε/η} in range
        const double inf = f.infimum();
        const double rho = model.kind == DensityModel::Kind::power ? (inf > 0.0 ? model(fv / inf) : model(fv)) : model(fv - inf);
        w = rho * std::pow(r, c - 1);
      }
      for (int i = 0; i < c; ++i) s[i] = r * u[i];
      terms.push_back(sphere.weights[a] * radial_rule.weights[k] * w * set.tube_jacobian(s.data()));
    }
  }
  return pairwise_sum(terms);
}

inline Histogram tube_histogram(const Landscape& f, const DensityModel& model, double eps, const TubeOptions& opt,
                                bool singular) {
  const int c = f.dim() - 1;
  const SphereGrid sphere = c == 2 ? sphere_tensor_grid(2, opt.angular_nodes / 2) : sphere_tensor_grid(c, opt.sphere_resolution);
  QuadratureRule radial;
  if (singular) {
    radial = gauss_legendre(opt.radial_nodes, 0.0, 1.0);
  } else {
    // core panel plus 8 geometric panels toward the tube boundary
    const std::size_t per = std::max<std::size_t>(1, opt.radial_nodes / 8);
    double a = 0.0, b = eps * std::ldexp(1.0, -8);
    for (int panel = 0; panel <= 8; ++panel) {
      const auto q = gauss_legendre(per, a, b);
      radial.nodes.insert(radial.nodes.end(), q.nodes.begin(), q.nodes.end());
      radial.weights.insert(radial.weights.end(), q.weights.begin(), q.weights.end());
      a = b;
      b *= 2.0;
    }
  }
  Histogram h = uniform_bins(0.0, kTwoPi, opt.bins);
  for (std::size_t i = 0; i < opt.bins; ++i) {
    const auto q = gauss_legendre(opt.phi_nodes_per_bin, h.edges[i], h.edges[i + 1]);
    double s = 0.0;
    for (std::size_t k = 0; k < q.nodes.size(); ++k) s += q.weights[k] * disc_integral(f, model, q.nodes[k], eps, sphere, radial, singular);
    h.weights[i] = s;
  }
  normalize_weights(h);
  return h;
}

}  // namespace detail

// Normalized marginal over the circle of a density integrated over normal
// tubes. Power densities on overparametrized landscapes must lie in the
// admissible interval (α*, −m/γ) and are Richardson-extrapolated in the tube
// radius (error O(ε²): odd terms cancel over each normal sphere).
inline TubeMarginal tube_marginal(const Landscape& f, const DensityModel& model, const TubeOptions& opt = {}) {
  const auto& set = f.minimizer_set();
  if (set.kind() != MinimizerSet::Kind::circle_in_plane) throw Error("tube marginals need a circle of minimizers");
  if (!(opt.tube_radius > 0.0) || !(opt.tube_radius < set.reach()))
    throw Error("tube radius must lie in (0, reach) = (0, " + std::to_string(set.reach()) + ")");
  if (opt.bins == 0 || opt.radial_nodes == 0 || opt.angular_nodes < 2 || opt.phi_nodes_per_bin == 0)
    throw Error("tube quadrature needs positive node counts");
  const bool overparam = f.infimum() == 0.0;
  const bool singular = model.kind == DensityModel::Kind::power && overparam;
  if (singular) {
    const int m = f.dim(), n = set.intrinsic_dim();
    const double lo = -0.5 * (m - n), hi = -m / f.growth_exponent();
    if (!(model.param > lo && model.param < hi))
      throw Error("exponent α = " + std::to_string(model.param) + " outside the admissible interval (" + std::to_string(lo) +
                  ", " + std::to_string(hi) + ")");
  }
  TubeMarginal out;
  out.tube_radius = opt.tube_radius;
  const Histogram coarse = detail::tube_histogram(f, model, opt.tube_radius, opt, singular);
  if (!(singular && opt.extrapolate)) {
    out.histogram = coarse;
    return out;
  }
  const Histogram fine = detail::tube_histogram(f, model, 0.5 * opt.tube_radius, opt, singular);
  out.histogram = fine;
  for (std::size_t i = 0; i < fine.bins(); ++i)
    out.histogram.weights[i] = std::max(0.0, (4.0 * fine.weights[i] - coarse.weights[i]) / 3.0);
  normalize_weights(out.histogram);
  out.extrapolated = true;
  out.extrapolation_shift = tv_distance(fine, out.histogram);
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

inline void write_density(const DensityGrid& g, const Landscape& f, const DensityModel& model, const std::string& csv_path) {
  write_grid_csv(g, csv_path);
  json side{{"normalized", g.normalized}, {"landscape", f.name()}, {"params", f.params()}};
  side.update(density_model_to_json(model));
  const std::string side_path = csv_path + ".json";
  std::ofstream out(side_path);
  if (!out) throw Error("cannot write " + side_path);
  out << side.dump(2) << '\n';
  if (!out) throw Error("write failed for " + side_path);
}

}  // namespace sgdlab
