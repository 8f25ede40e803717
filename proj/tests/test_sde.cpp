#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "sgdlab/sde.hpp"

using namespace sgdlab;

namespace {

LandscapePtr ou_landscape() { return make_landscape("radial_power", {{"lambda", 0.5}, {"k", 2.0}, {"dim", 1}}); }

// Gaussian density N(0, s²) tabulated on a fine line grid; normalized by the
// closed-form cell masses (erf differences), independent of module invariant.
DensityGrid gaussian_grid(double s, double half, std::size_t cells) {
  DensityGrid g = line_grid(-half, half, cells);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double a = g.edges[i] / (s * std::sqrt(2.0)), b = g.edges[i + 1] / (s * std::sqrt(2.0));
    g.values[i] = 0.5 * (std::erf(b) - std::erf(a)) / g.volumes[i];
  }
  const double mass = g.mass();
  for (double& v : g.values) v /= mass;
  g.normalized = true;
  return g;
}

TrajectoryEnsemble synthetic_circle_ensemble(const std::vector<double>& phis) {
  TrajectoryEnsemble e;
  e.dim = 3;
  e.checkpoints.resize(1);
  for (std::size_t k = 0; k < phis.size(); ++k) {
    e.checkpoints[0].paths.push_back(k);
    for (double v : {std::cos(phis[k]), std::sin(phis[k]), 0.0}) e.checkpoints[0].states.push_back(v);
  }
  return e;
}

}  // namespace

TEST(EmStep, ZeroNoiseIsGradientStep) {
  auto f = make_landscape("radial_power", {{"lambda", 1.0}, {"k", 2.0}, {"dim", 2}});
  Vec x(2), xi(2);
  x << 1.0, 0.0;
  xi << 0.3, -0.7;
  const Vec y = em_step(x, *f, NoiseModel::zero(), 0.1, xi);
  EXPECT_DOUBLE_EQ(y[0], 0.8);
  EXPECT_DOUBLE_EQ(y[1], 0.0);
}

TEST(EmStep, MlNoiseFreezesMinimizers) {
  auto f = make_landscape("circle_codim2", {{"eigenvalues", {1.0, 2.0}}});
  const Vec p = f->minimizer_set().point_at(0.9);
  Vec xi(3);
  xi << 5.0, -3.0, 2.0;
  const Vec y = em_step(p, *f, NoiseModel::ml_isotropic(0.1, 1.0), 0.1, xi);
  EXPECT_LE((y - p).norm(), 1e-15);
}

TEST(EmStep, HomogeneousAmplitude) {
  // diffusion coefficient η: increment √(2hη) ξ
  auto f = make_landscape("radial_power", {{"lambda", 1.0}, {"k", 2.0}, {"dim", 2}});
  Vec x = Vec::Zero(2), xi(2);
  xi << 1.0, 1.0;
  const Vec y = em_step(x, *f, NoiseModel::homogeneous(0.04), 0.01, xi);
  EXPECT_NEAR(y[0], std::sqrt(2.0 * 0.01 * 0.04), 1e-15);
  EXPECT_NEAR(y[1], std::sqrt(2.0 * 0.01 * 0.04), 1e-15);
}

TEST(NoiseModelTest, Validation) {
  EXPECT_THROW(NoiseModel::homogeneous(0.0), Error);
  EXPECT_THROW(NoiseModel::ml_isotropic(0.1, -1.0), Error);
  EXPECT_EQ(noise_from_json(noise_to_json(NoiseModel::ml_isotropic(0.2, 3.0))).eta_sigma(), 0.6000000000000001);
}

TEST(Simulate, ZeroNoiseMatchesRepeatedSteps) {
  auto f = make_landscape("quadratic_window", {{"dim", 2}});
  SdeConfig cfg;
  cfg.step = 0.01;
  cfg.n_steps = 200;
  cfg.n_paths = 4;
  cfg.checkpoint_every = 50;
  cfg.initial = InitialDistribution::point({1.5, -0.5});
  auto ens = simulate_ensemble(*f, NoiseModel::zero(), cfg);
  Vec x(2);
  x << 1.5, -0.5;
  const Vec zero = Vec::Zero(2);
  std::size_t ck = 0;
  for (std::size_t s = 1; s <= cfg.n_steps; ++s) {
    x = em_step(x, *f, NoiseModel::zero(), cfg.step, zero);
    if (s % cfg.checkpoint_every == 0) {
      for (std::size_t p = 0; p < cfg.n_paths; ++p) EXPECT_EQ((ens.state(ck, p) - x).norm(), 0.0);
      ++ck;
    }
  }
  EXPECT_EQ(ck, ens.checkpoints.size());
}

TEST(Simulate, DeterministicAcrossWorkerCounts) {
  auto f = make_landscape("circle_codim2", {{"eigenvalues", {1.0, json{{"mean", 2.0}, {"cos", {1.0}}}}}});
  SdeConfig cfg;
  cfg.step = 1e-3;
  cfg.n_steps = 500;
  cfg.n_paths = 37;
  cfg.seed = 99;
  cfg.checkpoint_every = 100;
  cfg.initial = InitialDistribution::box({-1.5, -1.5, -1.5}, {1.5, 1.5, 1.5});
  const auto noise = NoiseModel::ml_isotropic(0.3, 1.0);
  auto a = simulate_ensemble(*f, noise, cfg);
  auto b = simulate_ensemble(*f, noise, cfg);
  cfg.threads = 3;
  auto c = simulate_ensemble(*f, noise, cfg);
  ASSERT_EQ(a.checkpoints.size(), c.checkpoints.size());
  for (std::size_t k = 0; k < a.checkpoints.size(); ++k) {
    EXPECT_EQ(a.checkpoints[k].states, b.checkpoints[k].states);
    EXPECT_EQ(a.checkpoints[k].states, c.checkpoints[k].states);
    EXPECT_EQ(a.checkpoints[k].paths, c.checkpoints[k].paths);
  }
  cfg.seed = 100;
  auto d = simulate_ensemble(*f, noise, cfg);
  EXPECT_NE(a.checkpoints.back().states, d.checkpoints.back().states);
}

TEST(Simulate, MlNoiseTrapOnMinimizers) {
  auto f = make_landscape("circle_codim2", {{"eigenvalues", {1.0, 3.0}}});
  const Vec p = f->minimizer_set().point_at(2.0);
  SdeConfig cfg;
  cfg.step = 0.01;
  cfg.n_steps = 1000;
  cfg.n_paths = 8;
  cfg.checkpoint_every = 250;
  cfg.initial = InitialDistribution::point({p[0], p[1], p[2]});
  auto ens = simulate_ensemble(*f, NoiseModel::ml_isotropic(0.5, 2.0), cfg);
  for (std::size_t c = 0; c < ens.checkpoints.size(); ++c)
    for (std::size_t k = 0; k < ens.checkpoints[c].count(); ++k) EXPECT_LE(f->minimizer_set().distance(ens.state(c, k)), 1e-15);
}

TEST(Simulate, OrnsteinUhlenbeckStationaryVariance) {
  // f = θ²/2 with diffusion η: stationary variance η (the EM chain has η/(1−h/2))
  const double eta = 0.5, h = 0.01;
  SdeConfig cfg;
  cfg.step = h;
  cfg.n_steps = 1000;
  cfg.n_paths = 20000;
  cfg.seed = 5;
  cfg.checkpoint_every = 1000;
  cfg.initial = InitialDistribution::point({0.0});
  auto ens = simulate_ensemble(*ou_landscape(), NoiseModel::homogeneous(eta), cfg);
  auto s = coordinate_samples(ens, 0, 0);
  double m2 = 0.0;
  for (double v : s) m2 += v * v;
  m2 /= s.size();
  const double target = eta / (1.0 - 0.5 * h);
  const double se = target * std::sqrt(2.0 / s.size());
  EXPECT_NEAR(m2, target, 3.0 * se);
  EXPECT_NEAR(m2, eta, 3.0 * se + eta * h);
}

TEST(Simulate, WeakOrderOnOrnsteinUhlenbeck) {
  const double theta0 = 1.0, T = 1.0, eta = 0.5;
  double prev_bias = std::numeric_limits<double>::infinity();
  for (double h : {1e-1, 1e-2, 1e-3}) {
    SdeConfig cfg;
    cfg.step = h;
    cfg.n_steps = static_cast<std::size_t>(std::llround(T / h));
    cfg.n_paths = 100000;
    cfg.seed = 7;
    cfg.checkpoint_every = cfg.n_steps;
    cfg.initial = InitialDistribution::point({theta0});
    auto ens = simulate_ensemble(*ou_landscape(), NoiseModel::homogeneous(eta), cfg);
    auto s = coordinate_samples(ens, 0, 0);
    double mean = 0.0, m2 = 0.0;
    for (double v : s) mean += v, m2 += v * v;
    mean /= s.size();
    const double se = std::sqrt((m2 / s.size() - mean * mean) / s.size());
    const double scheme_mean = std::pow(1.0 - h, static_cast<double>(cfg.n_steps)) * theta0;
    const double exact = std::exp(-T) * theta0;
    // the scheme's own mean is matched statistically; its O(h) bias shrinks with h
    EXPECT_NEAR(mean, scheme_mean, 3.0 * se) << "h=" << h;
    const double bias = std::abs(scheme_mean - exact);
    if (bias < 3.0 * se) EXPECT_NEAR(mean, exact, 3.0 * se) << "h=" << h;
    EXPECT_LT(bias, prev_bias);
    prev_bias = bias;
  }
}

TEST(Simulate, MlNoiseSelectsGlobalMinimizers) {
  auto f = make_landscape("circle_codim2", {{"eigenvalues", {1.0, json{{"mean", 2.0}, {"cos", {1.0}}}}}});
  SdeConfig cfg;
  cfg.step = 2e-3;
  cfg.n_steps = 15000;
  cfg.n_paths = 2000;
  cfg.seed = 3;
  cfg.checkpoint_every = cfg.n_steps;
  cfg.initial = InitialDistribution::box({-1.5, -1.5, -1.5}, {1.5, 1.5, 1.5});
  auto ens = simulate_ensemble(*f, NoiseModel::ml_isotropic(0.05, 1.0), cfg);
  std::size_t close = 0;
  for (std::size_t k = 0; k < ens.checkpoints[0].count(); ++k)
    if (f->minimizer_set().distance(ens.state(0, k)) < 1e-3) ++close;
  EXPECT_GT(static_cast<double>(close) / cfg.n_paths, 0.99);
  EXPECT_GT(ens.max_noise_scale, 0.0);
}

TEST(Simulate, DivergenceIsCountedAndAllDivergedThrows) {
  // explicit Euler on a stiff quartic with a large step escapes
  auto f = make_landscape("radial_power", {{"lambda", 1.0}, {"k", 4.0}, {"dim", 1}});
  SdeConfig cfg;
  cfg.step = 0.5;
  cfg.n_steps = 50;
  cfg.n_paths = 5;
  cfg.checkpoint_every = 50;
  cfg.initial = InitialDistribution::point({10.0});
  try {
    simulate_ensemble(*f, NoiseModel::zero(), cfg);
    FAIL() << "expected divergence";
  } catch (const EnsembleDiverged& e) {
    EXPECT_EQ(e.diverged_count, 5u);
  }
  cfg.initial = InitialDistribution::box({-3.0}, {3.0});
  cfg.n_paths = 100;
  auto ens = simulate_ensemble(*f, NoiseModel::zero(), cfg);
  EXPECT_GT(ens.diverged_count, 0u);
  EXPECT_LT(ens.diverged_count, 100u);
  EXPECT_EQ(ens.checkpoints[0].count() + ens.diverged_count, 100u);
}

TEST(Occupancy, DeltaMass) {
  auto f = make_landscape("circle_codim2");
  auto ens = synthetic_circle_ensemble(std::vector<double>(20, 0.0));
  auto h = occupancy_histogram(ens, *f, 8, 0);
  EXPECT_DOUBLE_EQ(h.weights[0], 1.0);
  for (std::size_t i = 1; i < 8; ++i) EXPECT_EQ(h.weights[i], 0.0);
}

TEST(Occupancy, UniformStates) {
  auto f = make_landscape("circle_codim2");
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(0.0, kTwoPi);
  std::vector<double> phis(40000);
  for (double& p : phis) p = u(gen);
  auto h = occupancy_histogram(synthetic_circle_ensemble(phis), *f, 8, 0);
  const double se = std::sqrt(0.125 * 0.875 / phis.size());
  double total = 0.0;
  for (double w : h.weights) {
    EXPECT_NEAR(w, 0.125, 3.0 * se);
    total += w;
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(Ks, PointMassAgainstUniform) {
  DensityGrid g = line_grid(0.0, 1.0, 100);
  std::fill(g.values.begin(), g.values.end(), 1.0);
  g.normalized = true;
  EXPECT_NEAR(ks_distance(std::vector<double>(1000, 0.5), g), 0.5, 1e-12);
}

TEST(Ks, SamplesFromTheDensityItself) {
  const auto g = gaussian_grid(1.0, 8.0, 4000);
  CounterRng rng(11, 0);
  std::vector<double> s(100000);
  for (double& v : s) v = rng.normal();
  EXPECT_LT(ks_distance(s, g), 1.5 * 1.63 / std::sqrt(1e5));
}

TEST(Ks, RejectsUnnormalizedDensity) {
  DensityGrid g = line_grid(0.0, 1.0, 10);
  std::fill(g.values.begin(), g.values.end(), 2.0);
  g.normalized = true;
  EXPECT_THROW(ks_distance({0.5}, g), Error);
}

TEST(Ks, HomogeneousSgdMatchesBoltzmann) {
  const double eta = 0.5;
  SdeConfig cfg;
  cfg.step = 1e-2;
  cfg.n_steps = 1000;
  cfg.n_paths = 20000;
  cfg.seed = 21;
  cfg.checkpoint_every = cfg.n_steps;
  cfg.initial = InitialDistribution::point({2.0});
  auto ens = simulate_ensemble(*ou_landscape(), NoiseModel::homogeneous(eta), cfg);
  EXPECT_LT(ks_distance(coordinate_samples(ens, 0, 0), gaussian_grid(std::sqrt(eta), 8.0, 4000)), 0.02);
}

TEST(CheckpointCsv, RoundTrip) {
  auto f = make_landscape("circle_codim2");
  SdeConfig cfg;
  cfg.step = 1e-2;
  cfg.n_steps = 30;
  cfg.n_paths = 6;
  cfg.checkpoint_every = 10;
  cfg.initial = InitialDistribution::gaussian({1.0, 0.0, 0.0}, {0.2, 0.2, 0.2});
  auto ens = simulate_ensemble(*f, NoiseModel::ml_isotropic(0.1, 1.0), cfg);
  const auto path = (std::filesystem::temp_directory_path() / "sgdlab_ck.csv").string();
  write_checkpoints_csv(ens, path);
  auto back = read_checkpoints_csv(path);
  ASSERT_EQ(back.checkpoints.size(), ens.checkpoints.size());
  EXPECT_EQ(back.dim, 3);
  for (std::size_t c = 0; c < ens.checkpoints.size(); ++c) {
    EXPECT_EQ(back.checkpoints[c].paths, ens.checkpoints[c].paths);
    EXPECT_EQ(back.checkpoints[c].states, ens.checkpoints[c].states);
  }
  auto h1 = occupancy_histogram(ens, *f, 8, 2), h2 = occupancy_histogram(back, *f, 8, 2);
  EXPECT_EQ(h1.weights, h2.weights);
  std::filesystem::remove(path);
}

TEST(Rng, StreamsAreReproducibleAndDistinct) {
  CounterRng a(1, 2), b(1, 2), c(1, 3);
  for (int i = 0; i < 10; ++i) {
    const auto x = a();
    EXPECT_EQ(x, b());
    EXPECT_NE(x, c());
  }
  CounterRng n(4, 0);
  double m1 = 0.0, m2 = 0.0;
  const int N = 200000;
  for (int i = 0; i < N; ++i) {
    const double z = n.normal();
    m1 += z, m2 += z * z;
  }
  EXPECT_NEAR(m1 / N, 0.0, 4.0 / std::sqrt(N));
  EXPECT_NEAR(m2 / N, 1.0, 4.0 * std::sqrt(2.0 / N));
}
