#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "sgdlab/fokker_planck.hpp"

using namespace sgdlab;

namespace {

struct Constant {
  double c;
  template <class T>
  T operator()(const T* x) const {
    return x[0] * 0.0 + c;
  }
};

LandscapePtr constant_landscape(double c) {
  return detail::make("constant", json::object(), 1, MinimizerSet::points(1, {Vec::Zero(1)}), {c, 1.0, 0.0}, c, Constant{c});
}

LandscapePtr window(int m) { return make_landscape("quadratic_window", {{"dim", m}}); }

double heat_kernel(double x, double t) { return std::exp(-x * x / (4.0 * t)) / std::sqrt(4.0 * std::numbers::pi * t); }

}  // namespace

TEST(Assemble, PureDiffusionKeepsUniformDensity) {
  const auto grid = line_grid(-3.0, 5.0, 64);
  const auto op = assemble_coefficients(grid, [](double) { return 1.0; }, [](double) { return 0.0; });
  DensityGrid u = grid;
  u.values.assign(grid.size(), 1.0 / 8.0);
  for (double r : op.apply(u.values)) EXPECT_NEAR(r, 0.0, 1e-13);
  EXPECT_NEAR(op.dt_max(), 0.5 * std::pow(8.0 / 64.0, 2), 1e-15);
}

TEST(Assemble, ColumnsSumToZero) {
  const auto f = window(4);
  const auto op = assemble(*f, 0.8, FpeGeometry::radial(4, 50.0), 64);
  for (std::size_t j = 0; j < op.size(); ++j) {
    double s = op.diag[j];
    if (j > 0) s += op.upper[j - 1];
    if (j + 1 < op.size()) s += op.lower[j + 1];
    EXPECT_NEAR(s, 0.0, 1e-12 * std::abs(op.diag[j])) << j;
  }
}

TEST(Assemble, ConstantLandscapeMatchesHomogeneousOperator) {
  const double c = 3.0, es = 0.7;
  const auto f = constant_landscape(c);
  const auto grid = line_grid(-2.0, 2.0, 32);
  const auto ml = assemble(*f, es, grid);
  const auto hom = assemble_homogeneous(*f, es * c, grid);
  EXPECT_EQ(ml.lower, hom.lower);
  EXPECT_EQ(ml.diag, hom.diag);
  EXPECT_EQ(ml.upper, hom.upper);
}

TEST(Assemble, Errors) {
  const auto f = make_landscape("radial_power", {{"dim", 1}});
  EXPECT_THROW(assemble(*f, 0.8, FpeGeometry::line(-1.0, 1.0), 64), Error);  // f = 0 at the center face
  EXPECT_THROW(assemble(*window(1), 0.8, FpeGeometry::line(-1.0, 1.0), 8), Error);
  EXPECT_THROW(assemble(*window(1), -0.8, FpeGeometry::line(-1.0, 1.0), 32), Error);
  EXPECT_THROW(assemble(*window(3), 0.8, FpeGeometry::line(-1.0, 1.0), 32), Error);
  EXPECT_THROW(assemble(*window(3), 0.8, FpeGeometry::radial(4, 10.0), 32), Error);
  auto circle = make_landscape("circle_codim2", {{"eigenvalues", {1.0, 2.0}}});
  EXPECT_THROW(assemble(*circle, 0.8, FpeGeometry::radial(3, 10.0), 32), Error);
  // coarse cells on a steep drift violate the monotonicity condition
  EXPECT_THROW(assemble(*make_landscape("quadratic_window", {{"dim", 1}, {"lambda", 1.0}}), 0.05, FpeGeometry::line(-10, 10), 16),
               Error);
}

TEST(Stationarity, SecondOrderUnderRefinementLine) {
  const auto f = window(1);
  const double es = 0.8;
  std::vector<double> res;
  for (std::size_t cells : {128u, 256u, 512u}) {
    const auto op = assemble(*f, es, FpeGeometry::line(-10.0, 10.0), cells);
    res.push_back(stationarity_residual(op, sampled_invariant(*f, es, op.grid)));
  }
  for (std::size_t k = 1; k < res.size(); ++k) {
    EXPECT_GE(res[k - 1] / res[k], 3.5) << k;
    EXPECT_LE(res[k - 1] / res[k], 4.5) << k;
  }
}

TEST(Stationarity, SecondOrderUnderRefinementRadial) {
  const auto f = window(4);
  const double es = 0.8;
  std::vector<double> res;
  for (std::size_t cells : {128u, 256u, 512u}) {
    const auto op = assemble(*f, es, FpeGeometry::radial(4, 200.0), cells);
    res.push_back(stationarity_residual(op, sampled_invariant(*f, es, op.grid)));
  }
  for (std::size_t k = 1; k < res.size(); ++k) {
    EXPECT_GE(res[k - 1] / res[k], 3.5) << k;
    EXPECT_LE(res[k - 1] / res[k], 4.5) << k;
  }
}

TEST(Stationarity, BoltzmannUnderHomogeneousOperator) {
  const auto f = window(1);
  const double eta = 0.5;
  std::vector<double> res;
  for (std::size_t cells : {128u, 256u, 512u}) {
    const auto grid = fpe_grid(FpeGeometry::line(-5.0, 5.0), cells);
    const auto op = assemble_homogeneous(*f, eta, grid);
    auto rho = density_eval(*f, DensityModel::boltzmann(eta), grid);
    normalize(rho);
    res.push_back(stationarity_residual(op, rho));
  }
  for (std::size_t k = 1; k < res.size(); ++k) {
    EXPECT_GE(res[k - 1] / res[k], 3.5) << k;
    EXPECT_LE(res[k - 1] / res[k], 4.5) << k;
  }
}

TEST(Stationarity, UniformDensityWithDriftIsNotStationary) {
  const auto f = window(1);
  double prev = 0.0;
  for (std::size_t cells : {128u, 256u, 512u}) {
    const auto op = assemble(*f, 0.8, FpeGeometry::line(-5.0, 5.0), cells);
    DensityGrid u = op.grid;
    u.values.assign(cells, 0.1);
    const double r = stationarity_residual(op, u);
    EXPECT_GT(r, 1.0);
    if (prev > 0.0) EXPECT_NEAR(r / prev, 1.0, 0.05);
    prev = r;
  }
}

TEST(Stationarity, GridMismatch) {
  const auto f = window(1);
  const auto op = assemble(*f, 0.8, FpeGeometry::line(-5.0, 5.0), 32);
  EXPECT_THROW(stationarity_residual(op, sampled_invariant(*f, 0.8, line_grid(-5.0, 5.0, 64))), Error);
}

TEST(Evolve, HeatKernel) {
  const double t0 = 0.02, T = 0.1;
  const auto grid = line_grid(-10.0, 10.0, 512);
  const auto op = assemble_coefficients(grid, [](double) { return 1.0; }, [](double) { return 0.0; });
  DensityGrid rho = grid;
  for (std::size_t i = 0; i < grid.size(); ++i) rho.values[i] = heat_kernel(grid.centers[i], t0);
  normalize(rho);
  const std::size_t steps = 400;
  const auto run = evolve(op, rho, {T / steps, steps, FpeScheme::explicit_euler, 0});
  const auto& last = run.checkpoints.back();
  EXPECT_NEAR(last.time, T, 1e-12);
  double err = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i)
    err = std::max(err, std::abs(last.density.values[i] - heat_kernel(grid.centers[i], t0 + T)));
  EXPECT_LT(err, 1e-3);
}

TEST(Evolve, FixedPointStaysPut) {
  const auto f = window(4);
  const auto op = assemble(*f, 0.8, FpeGeometry::radial(4, 100.0), 128);
  const auto pi = op.discrete_invariant();
  for (double r : op.apply(pi.values)) EXPECT_NEAR(r, 0.0, 1e-12);
  for (auto scheme : {FpeScheme::explicit_euler, FpeScheme::implicit_euler}) {
    const auto run = evolve(op, pi, {0.5 * op.dt_max(), 200, scheme, 50});
    for (const auto& c : run.checkpoints)
      for (std::size_t i = 0; i < pi.size(); ++i) EXPECT_NEAR(c.density.values[i], pi.values[i], 1e-12 * (1.0 + pi.values[i]));
  }
  // the pointwise density is stationary up to the discretization residual
  const auto sampled = sampled_invariant(*f, 0.8, op.grid);
  const auto run = evolve(op, sampled, {1.0, 10, FpeScheme::implicit_euler, 0});
  EXPECT_LT(DistanceToEquilibrium(op)(run.checkpoints.back().density), DistanceToEquilibrium(op)(sampled));
}

TEST(Evolve, MassConservationBothSchemes) {
  const auto f = window(4);
  const auto op = assemble(*f, 0.8, FpeGeometry::radial(4, 100.0), 128);
  const auto rho0 = bump_density(op.grid, 2.0, 0.3);
  for (auto scheme : {FpeScheme::explicit_euler, FpeScheme::implicit_euler}) {
    const double dt = scheme == FpeScheme::explicit_euler ? 0.9 * op.dt_max() : 0.05;
    const auto run = evolve(op, rho0, {dt, 10000, scheme, 1000});
    EXPECT_LT(run.max_step_mass_drift, 1e-12) << to_string(scheme);
    EXPECT_GE(run.min_value, 0.0) << to_string(scheme);
    for (const auto& c : run.checkpoints) EXPECT_NEAR(c.density.mass(), 1.0, 1e-11);
  }
}

TEST(Evolve, Preconditions) {
  const auto f = window(1);
  const auto op = assemble(*f, 0.8, FpeGeometry::line(-5.0, 5.0), 64);
  const auto rho = bump_density(op.grid, 1.0, 0.5);
  EXPECT_THROW(evolve(op, rho, {2.0 * op.dt_max(), 1, FpeScheme::explicit_euler, 0}), Error);
  EXPECT_THROW(evolve(op, rho, {0.0, 1, FpeScheme::implicit_euler, 0}), Error);
  DensityGrid twice = rho;
  for (double& v : twice.values) v *= 2.0;
  EXPECT_THROW(evolve(op, twice, {0.01, 1, FpeScheme::implicit_euler, 0}), Error);
  EXPECT_THROW(evolve(op, bump_density(line_grid(-5.0, 5.0, 32), 1.0, 0.5), {0.01, 1, FpeScheme::implicit_euler, 0}), Error);
}

TEST(Evolve, BumpDistanceDecreasesMonotonically) {
  const auto f = window(1);
  const double es = 0.8;
  const auto op = assemble(*f, es, FpeGeometry::line(-10.0, 10.0), 256);
  const auto run = evolve(op, bump_density(op.grid, 3.0, 0.2), {0.01, 2000, FpeScheme::implicit_euler, 20});
  const DistanceToEquilibrium dist(op);
  // checked down to the roundoff floor of the equilibrium vector
  const double d0 = dist(run.checkpoints.front().density);
  double prev = std::numeric_limits<double>::infinity();
  for (const auto& c : run.checkpoints) {
    const double d = dist(c.density);
    if (d < 1e-10 * d0) break;
    EXPECT_LE(d, prev * (1.0 + 1e-12));
    prev = d;
  }
  EXPECT_LT(prev, 1e-2 * dist(run.checkpoints.front().density));
  // the pointwise-reference metric falls to the discretization floor
  EXPECT_LT(weighted_l2_distance(run.checkpoints.back().density, *f, es),
            weighted_l2_distance(run.checkpoints.front().density, *f, es));
}

TEST(WeightedDistance, ContractChecks) {
  const auto f = window(1);
  const double es = 0.8;
  const auto grid = line_grid(-10.0, 10.0, 128);
  const auto inf = sampled_invariant(*f, es, grid);
  EXPECT_NEAR(weighted_l2_distance(inf, *f, es), 0.0, 1e-15);
  DensityGrid twice = inf;
  for (double& v : twice.values) v *= 2.0;
  EXPECT_THROW(weighted_l2_distance(twice, *f, es), Error);
  // ησ = 4 on the m = 4 window: f^{−1.25} r³ is not integrable at infinity
  EXPECT_THROW(weighted_l2_distance(sampled_invariant(*window(4), 4.0, radial_sinh_grid(4, 10.0, 32)), *window(4), 4.0), Error);
}

TEST(DecayFit, SyntheticSeries) {
  std::vector<double> t, d, dp;
  for (int i = 0; i <= 100; ++i) {
    t.push_back(0.05 * i);
    d.push_back(std::exp(-3.0 * t.back()));
    dp.push_back(d.back() * (1.0 + 0.01 * std::sin(t.back())));
  }
  const auto a = fit_decay_rate(t, d, 0.0, 5.0);
  EXPECT_NEAR(a.fitted_nu, 3.0, 1e-12);
  EXPECT_NEAR(a.fit_r2, 1.0, 1e-12);
  const auto b = fit_decay_rate(t, dp, 0.0, 5.0);
  EXPECT_NEAR(b.fitted_nu, 3.0, 0.02);
  EXPECT_THROW(fit_decay_rate(t, d, 0.0, 0.1), Error);
  EXPECT_THROW(fit_decay_rate({0, 1}, {1}, 0.0, 1.0), Error);
}

TEST(DecayFit, RadialWindowConverges) {
  const auto f = window(4);
  const double es = 0.8;
  const double R = outer_radius_for_tail(*f, DensityModel::power(power_exponent(es)));
  const auto op = assemble(*f, es, FpeGeometry::radial(4, R), 1024);
  const auto run = evolve(op, bump_density(op.grid, 2.0, 0.3), {0.5, 600, FpeScheme::implicit_euler, 4});
  const DistanceToEquilibrium dist(op);
  std::vector<double> t, d;
  for (const auto& c : run.checkpoints) {
    t.push_back(c.time);
    d.push_back(dist(c.density));
  }
  for (std::size_t i = 1; i < d.size() && d[i] > 1e-10 * d[0]; ++i) EXPECT_LE(d[i], d[i - 1] * (1.0 + 1e-12));
  const auto rep = fit_decay_rate(t, d, 100.0, 300.0);
  EXPECT_GT(rep.fitted_nu, 0.0);
  EXPECT_GT(rep.fit_r2, 0.99);
}

TEST(TailRadius, WindowTailMatchesBetaOracle) {
  // ∫_0^∞ r³ (1+r²)^{−a} dr = 1/(2(a−1)(a−2)); inner part by Gauss-Legendre
  const auto f = window(4);
  const double a = 2.25;
  const auto model = DensityModel::power(-a);
  const double total = sphere_area(4) / (2.0 * (a - 1.0) * (a - 2.0));
  const auto q = gauss_legendre(64, 0.0, 1.0);
  double inner = 0.0;
  for (std::size_t i = 0; i < q.nodes.size(); ++i) inner += q.weights[i] * std::pow(q.nodes[i], 3) * std::pow(1.0 + q.nodes[i] * q.nodes[i], -a);
  EXPECT_NEAR(tail_mass(*f, model, 1.0) / (total - sphere_area(4) * inner), 1.0, 1e-9);
  const double R = outer_radius_for_tail(*f, model);
  EXPECT_LT(tail_mass(*f, model, R), 1e-8 * total);
  EXPECT_GE(tail_mass(*f, model, 0.5 * R), 1e-8 * total);
}
