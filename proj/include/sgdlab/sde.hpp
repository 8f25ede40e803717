#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "grid.hpp"
#include "landscapes.hpp"
#include "rng.hpp"

namespace sgdlab {

inline constexpr double kBlowupRadius = 1e6;

// Diffusion model. The SDE is dθ = −∇f dt + √(2ηΣ) dB, so that exp(−f/η)
// (Σ = I) and f^α with α = −(1+ησ)/(ησ) (Σ = σ f I) are its stationary laws.
struct NoiseModel {
  enum class Kind { none, homogeneous, ml_isotropic };

  Kind kind = Kind::none;
  double eta = 0.0;
  double sigma = 0.0;

  static NoiseModel zero() { return {}; }
  static NoiseModel homogeneous(double eta) { return NoiseModel{Kind::homogeneous, eta, 0.0}.validated(); }
  static NoiseModel ml_isotropic(double eta, double sigma) { return NoiseModel{Kind::ml_isotropic, eta, sigma}.validated(); }

  NoiseModel validated() const {
    if (kind != Kind::none && !(eta > 0.0)) throw Error("noise model needs eta > 0");
    if (kind == Kind::ml_isotropic && !(sigma > 0.0)) throw Error("ml_isotropic noise needs sigma > 0");
    return *this;
  }

  double eta_sigma() const { return eta * sigma; }

  // Amplitude multiplying √h ξ given the objective value.
  double amplitude(double f) const {
    switch (kind) {
      case Kind::none: return 0.0;
      case Kind::homogeneous: return std::sqrt(2.0 * eta);
      case Kind::ml_isotropic: return std::sqrt(2.0 * eta * sigma * std::max(f, 0.0));
    }
    return 0.0;
  }
};

inline const char* to_string(NoiseModel::Kind k) {
  switch (k) {
    case NoiseModel::Kind::none: return "none";
    case NoiseModel::Kind::homogeneous: return "homogeneous";
    case NoiseModel::Kind::ml_isotropic: return "ml_isotropic";
  }
  return "?";
}

inline NoiseModel noise_from_json(const json& j) {
  const std::string k = j.value("kind", std::string("none"));
  if (k == "none") return NoiseModel::zero();
  if (k == "homogeneous") return NoiseModel::homogeneous(j.at("eta").get<double>());
  if (k == "ml_isotropic") return NoiseModel::ml_isotropic(j.at("eta").get<double>(), j.at("sigma").get<double>());
  throw Error("unknown noise kind '" + k + "'");
}

inline json noise_to_json(const NoiseModel& n) {
  json j{{"kind", to_string(n.kind)}};
  if (n.kind != NoiseModel::Kind::none) j["eta"] = n.eta;
  if (n.kind == NoiseModel::Kind::ml_isotropic) j["sigma"] = n.sigma;
  return j;
}

struct InitialDistribution {
  enum class Kind { point, box, gaussian };
  Kind kind = Kind::point;
  std::vector<double> a;  // point | box lower corner | gaussian mean
  std::vector<double> b;  // box upper corner | gaussian scale per coordinate

  static InitialDistribution point(std::vector<double> x) { return {Kind::point, std::move(x), {}}; }
  static InitialDistribution box(std::vector<double> lo, std::vector<double> hi) { return {Kind::box, std::move(lo), std::move(hi)}; }
  static InitialDistribution gaussian(std::vector<double> mean, std::vector<double> scale) {
    return {Kind::gaussian, std::move(mean), std::move(scale)};
  }

  void validate(int m) const {
    if (static_cast<int>(a.size()) != m) throw Error("initial distribution dimension does not match the landscape");
    if (kind != Kind::point && static_cast<int>(b.size()) != m) throw Error("initial distribution dimension does not match the landscape");
    if (kind == Kind::box)
      for (int i = 0; i < m; ++i)
        if (!(b[i] > a[i])) throw Error("box initial distribution needs lo < hi");
    if (kind == Kind::gaussian)
      for (double s : b)
        if (!(s >= 0.0)) throw Error("gaussian initial distribution needs scale >= 0");
  }

  void draw(CounterRng& rng, double* x) const {
    const std::size_t m = a.size();
    for (std::size_t i = 0; i < m; ++i) {
      switch (kind) {
        case Kind::point: x[i] = a[i]; break;
        case Kind::box: x[i] = a[i] + (b[i] - a[i]) * rng.uniform(); break;
        case Kind::gaussian: x[i] = a[i] + b[i] * rng.normal(); break;
      }
    }
  }
};

inline InitialDistribution initial_from_json(const json& j, int m) {
  const std::string k = j.value("kind", std::string("point"));
  auto vec = [&](const char* key, double def) {
    if (!j.contains(key)) return std::vector<double>(m, def);
    const auto& v = j.at(key);
    if (v.is_number()) return std::vector<double>(m, v.get<double>());
    return v.get<std::vector<double>>();
  };
  InitialDistribution d;
  if (k == "point") {
    d = InitialDistribution::point(vec("theta0", 0.0));
  } else if (k == "box") {
    d = InitialDistribution::box(vec("lo", -1.0), vec("hi", 1.0));
  } else if (k == "gaussian") {
    d = InitialDistribution::gaussian(vec("mean", 0.0), vec("scale", 1.0));
  } else {
    throw Error("unknown initial distribution '" + k + "'");
  }
  d.validate(m);
  return d;
}

inline json initial_to_json(const InitialDistribution& d) {
  switch (d.kind) {
    case InitialDistribution::Kind::point: return json{{"kind", "point"}, {"theta0", d.a}};
    case InitialDistribution::Kind::box: return json{{"kind", "box"}, {"lo", d.a}, {"hi", d.b}};
    case InitialDistribution::Kind::gaussian: return json{{"kind", "gaussian"}, {"mean", d.a}, {"scale", d.b}};
  }
  return {};
}

struct SdeConfig {
  double step = 1e-3;
  std::size_t n_steps = 1000;
  std::size_t n_paths = 1000;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 1000;
  InitialDistribution initial;
  unsigned threads = 1;  // scheduling only; results do not depend on it
  double blowup_radius = kBlowupRadius;

  void validate(int m) const {
    if (!(step > 0.0)) throw Error("sde step must be positive");
    if (n_steps == 0 || n_paths == 0 || checkpoint_every == 0) throw Error("sde counts must be positive");
    if (checkpoint_every > n_steps) throw Error("checkpoint_every must not exceed n_steps");
    initial.validate(m);
  }
};

struct Checkpoint {
  double time = 0.0;
  std::size_t step = 0;
  std::vector<std::size_t> paths;  // surviving path indices, ascending
  std::vector<double> states;      // paths.size() × dim, row-major

  std::size_t count() const { return paths.size(); }
};

struct TrajectoryEnsemble {
  SdeConfig config;
  int dim = 0;
  std::vector<Checkpoint> checkpoints;
  std::size_t diverged_count = 0;
  double max_noise_scale = 0.0;  // max of ησ f (ml) or η (homogeneous) seen along paths

  Vec state(std::size_t checkpoint, std::size_t k) const {
    const auto& c = checkpoints.at(checkpoint);
    return Eigen::Map<const Vec>(c.states.data() + k * dim, dim);
  }
};

// Single Euler–Maruyama step θ − h∇f + √h s(θ) ξ.
inline Vec em_step(const Vec& theta, const Landscape& f, const NoiseModel& noise, double h, const Vec& xi) {
  Vec g(theta.size());
  const double fv = f.value_gradient(theta.data(), g.data());
  return theta - h * g + std::sqrt(h) * noise.amplitude(fv) * xi;
}

namespace detail {

inline bool escaped(const double* x, int m, double radius) {
  double s = 0.0;
  for (int i = 0; i < m; ++i) {
    if (!std::isfinite(x[i])) return true;
    s += x[i] * x[i];
  }
  return !(s <= radius * radius);
}

struct PathBlockResult {
  std::vector<std::vector<double>> states;  // per checkpoint, block paths × m
  std::vector<std::vector<char>> alive;     // per checkpoint, block paths
  std::size_t diverged = 0;
  double max_noise = 0.0;
};

inline PathBlockResult run_paths(const Landscape& f, const NoiseModel& noise, const SdeConfig& cfg, std::size_t first,
                                 std::size_t last, std::size_t n_checkpoints) {
  const int m = f.dim();
  const std::size_t count = last - first;
  PathBlockResult out;
  out.states.assign(n_checkpoints, std::vector<double>(count * m, 0.0));
  out.alive.assign(n_checkpoints, std::vector<char>(count, 0));
  std::vector<double> x(m), g(m);
  const double sqrt_h = std::sqrt(cfg.step);
  for (std::size_t p = first; p < last; ++p) {
    CounterRng rng(cfg.seed, p);
    cfg.initial.draw(rng, x.data());
    bool dead = detail::escaped(x.data(), m, cfg.blowup_radius);
    std::size_t next_ck = 0;
    for (std::size_t step = 1; step <= cfg.n_steps && !dead; ++step) {
      const double fv = f.value_gradient(x.data(), g.data());
      const double amp = noise.amplitude(fv) * sqrt_h;
      if (noise.kind == NoiseModel::Kind::ml_isotropic) {
        out.max_noise = std::max(out.max_noise, noise.eta_sigma() * std::max(fv, 0.0));
      }
      for (int i = 0; i < m; ++i) {
        x[i] -= cfg.step * g[i];
        if (amp != 0.0) x[i] += amp * rng.normal();
      }
      if (detail::escaped(x.data(), m, cfg.blowup_radius)) {
        dead = true;
        break;
      }
      if (step % cfg.checkpoint_every == 0 || step == cfg.n_steps) {
        const std::size_t k = p - first;
        std::copy(x.begin(), x.end(), out.states[next_ck].begin() + k * m);
        out.alive[next_ck][k] = 1;
        ++next_ck;
      }
    }
    if (dead) ++out.diverged;
  }
  if (noise.kind == NoiseModel::Kind::homogeneous) out.max_noise = noise.eta;
  return out;
}

}  // namespace detail

inline std::vector<std::size_t> checkpoint_steps(const SdeConfig& cfg) {
  std::vector<std::size_t> s;
  for (std::size_t k = cfg.checkpoint_every; k <= cfg.n_steps; k += cfg.checkpoint_every) s.push_back(k);
  if (s.empty() || s.back() != cfg.n_steps) s.push_back(cfg.n_steps);
  return s;
}

inline TrajectoryEnsemble simulate_ensemble(const Landscape& f, const NoiseModel& noise, const SdeConfig& cfg) {
  noise.validated();
  cfg.validate(f.dim());
  const int m = f.dim();
  const auto steps = checkpoint_steps(cfg);
  const std::size_t nck = steps.size();

  const unsigned workers = std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(cfg.n_paths)));
  std::vector<detail::PathBlockResult> blocks(workers);
  std::vector<std::size_t> bounds(workers + 1);
  for (unsigned w = 0; w <= workers; ++w) bounds[w] = cfg.n_paths * w / workers;
  if (workers == 1) {
    blocks[0] = detail::run_paths(f, noise, cfg, 0, cfg.n_paths, nck);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back([&, w] { blocks[w] = detail::run_paths(f, noise, cfg, bounds[w], bounds[w + 1], nck); });
    for (auto& t : pool) t.join();
  }

  TrajectoryEnsemble ens;
  ens.config = cfg;
  ens.dim = m;
  ens.checkpoints.resize(nck);
  for (std::size_t c = 0; c < nck; ++c) {
    ens.checkpoints[c].step = steps[c];
    ens.checkpoints[c].time = static_cast<double>(steps[c]) * cfg.step;
  }
  for (unsigned w = 0; w < workers; ++w) {
    ens.diverged_count += blocks[w].diverged;
    ens.max_noise_scale = std::max(ens.max_noise_scale, blocks[w].max_noise);
    for (std::size_t c = 0; c < nck; ++c) {
      auto& ck = ens.checkpoints[c];
      for (std::size_t k = 0; k < bounds[w + 1] - bounds[w]; ++k) {
        if (!blocks[w].alive[c][k]) continue;
        ck.paths.push_back(bounds[w] + k);
        ck.states.insert(ck.states.end(), blocks[w].states[c].begin() + k * m, blocks[w].states[c].begin() + (k + 1) * m);
      }
    }
    blocks[w] = {};
  }
  if (ens.diverged_count == cfg.n_paths)
    throw EnsembleDiverged("all " + std::to_string(cfg.n_paths) + " paths diverged", ens.diverged_count);
  return ens;
}

// ---------------------------------------------------------------------------
// Ensemble statistics

inline std::pair<double, double> coordinate_range(const MinimizerSet& set) {
  switch (set.kind()) {
    case MinimizerSet::Kind::circle_in_plane: return {0.0, kTwoPi};
    case MinimizerSet::Kind::point_set: return {-0.5, static_cast<double>(set.point_list().size()) - 0.5};
    case MinimizerSet::Kind::affine_subspace: break;
  }
  throw Error("minimizer set has no bounded intrinsic coordinate range");
}

inline Histogram occupancy_histogram(const TrajectoryEnsemble& ens, const Landscape& f, std::size_t bins,
                                     std::size_t checkpoint) {
  if (checkpoint >= ens.checkpoints.size()) throw Error("checkpoint index out of range");
  const auto& ck = ens.checkpoints[checkpoint];
  if (ck.count() == 0) throw Error("no surviving paths at the requested checkpoint");
  const auto& set = f.minimizer_set();
  const auto [lo, hi] = coordinate_range(set);
  Histogram h = uniform_bins(lo, hi, bins);
  for (std::size_t k = 0; k < ck.count(); ++k) {
    const double c = set.coordinate_of(ens.state(checkpoint, k));
    auto b = static_cast<std::size_t>(std::floor((c - lo) / (hi - lo) * bins));
    h.weights[std::min(b, bins - 1)] += 1.0;
  }
  normalize_weights(h);
  return h;
}

// Sup distance between the empirical CDF and the CDF of a normalized grid
// density (piecewise linear within cells).
inline double ks_distance(std::vector<double> samples, const DensityGrid& d) {
  if (samples.empty()) throw Error("ks_distance needs samples");
  if (!d.normalized || std::abs(d.mass() - 1.0) > 1e-9) throw Error("ks_distance needs a normalized density");
  std::sort(samples.begin(), samples.end());
  std::vector<double> cdf(d.size() + 1, 0.0);
  for (std::size_t i = 0; i < d.size(); ++i) cdf[i + 1] = cdf[i] + d.values[i] * d.volumes[i];
  auto F = [&](double x) {
    if (x <= d.edges.front()) return 0.0;
    if (x >= d.edges.back()) return 1.0;
    const auto it = std::upper_bound(d.edges.begin(), d.edges.end(), x);
    const std::size_t i = static_cast<std::size_t>(it - d.edges.begin()) - 1;
    const double t = (x - d.edges[i]) / (d.edges[i + 1] - d.edges[i]);
    return cdf[i] + t * (cdf[i + 1] - cdf[i]);
  };
  const double n = static_cast<double>(samples.size());
  double ks = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double fx = F(samples[i]);
    ks = std::max({ks, std::abs(fx - i / n), std::abs((i + 1) / n - fx)});
  }
  return ks;
}

inline std::vector<double> coordinate_samples(const TrajectoryEnsemble& ens, std::size_t checkpoint, int coord) {
  const auto& ck = ens.checkpoints.at(checkpoint);
  std::vector<double> s(ck.count());
  for (std::size_t k = 0; k < ck.count(); ++k) s[k] = ck.states[k * ens.dim + coord];
  return s;
}

// ---------------------------------------------------------------------------
// Checkpoint CSV

inline void write_checkpoints_csv(const TrajectoryEnsemble& ens, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out.precision(17);
  out << "time,path";
  for (int i = 0; i < ens.dim; ++i) out << ",coord_" << i;
  out << '\n';
  for (const auto& ck : ens.checkpoints)
    for (std::size_t k = 0; k < ck.count(); ++k) {
      out << ck.time << ',' << ck.paths[k];
      for (int i = 0; i < ens.dim; ++i) out << ',' << ck.states[k * ens.dim + i];
      out << '\n';
    }
  if (!out) throw Error("write failed for " + path);
}

inline TrajectoryEnsemble read_checkpoints_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  std::string line;
  std::getline(in, line);
  TrajectoryEnsemble ens;
  ens.dim = static_cast<int>(std::count(line.begin(), line.end(), ',')) - 1;
  if (ens.dim < 1 || line.rfind("time,path", 0) != 0) throw Error("bad checkpoint header in " + path);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    const double t = std::stod(cell);
    std::getline(ss, cell, ',');
    const std::size_t p = std::stoull(cell);
    if (ens.checkpoints.empty() || ens.checkpoints.back().time != t) {
      ens.checkpoints.emplace_back();
      ens.checkpoints.back().time = t;
    }
    auto& ck = ens.checkpoints.back();
    ck.paths.push_back(p);
    for (int i = 0; i < ens.dim; ++i) {
      if (!std::getline(ss, cell, ',')) throw Error("short checkpoint row in " + path);
      ck.states.push_back(std::stod(cell));
    }
  }
  return ens;
}

}  // namespace sgdlab
