#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "grid.hpp"

namespace sgdlab {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

namespace detail {

// (P_n(x), P_n'(x)) by the three-term recurrence.
inline std::pair<double, double> legendre(std::size_t n, double x) {
  double p0 = 1.0, p1 = x;
  for (std::size_t k = 2; k <= n; ++k) {
    const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  return {p1, n * (x * p1 - p0) / (x * x - 1.0)};
}

}  // namespace detail

// Gauss-Legendre rule on [-1, 1] by Newton iteration on P_n.
inline QuadratureRule gauss_legendre(std::size_t n) {
  if (n == 0) throw Error("Gauss-Legendre rule needs at least one node");
  QuadratureRule q;
  q.nodes.resize(n);
  q.weights.resize(n);
  for (std::size_t i = 0; i < n / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      const auto [p, dp] = detail::legendre(n, x);
      const double dx = p / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double dp = detail::legendre(n, x).second;
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    q.nodes[i] = -x;
    q.nodes[n - 1 - i] = x;
    q.weights[i] = q.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) {
    // middle node x = 0
    const double dp = detail::legendre(n, 0.0).second;
    q.nodes[n / 2] = 0.0;
    q.weights[n / 2] = 2.0 / (dp * dp);
  }
  return q;
}

// Gauss-Legendre rule mapped to [a, b].
inline QuadratureRule gauss_legendre(std::size_t n, double a, double b) {
  QuadratureRule q = gauss_legendre(n);
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  for (std::size_t i = 0; i < n; ++i) {
    q.nodes[i] = c + h * q.nodes[i];
    q.weights[i] *= h;
  }
  return q;
}

// Gauss rule on [-1, 1] for the weight (1 − x²)^mu (Golub-Welsch).
inline QuadratureRule gauss_gegenbauer(std::size_t n, double mu) {
  if (n == 0 || !(mu > -1.0)) throw Error("Gauss-Gegenbauer rule needs n > 0 and mu > -1");
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n), off(n > 1 ? n - 1 : 0);
  for (std::size_t k = 1; k < n; ++k) {
    const double a = static_cast<double>(k), s = 2.0 * a + 2.0 * mu;
    off[k - 1] = std::sqrt(a * (a + 2.0 * mu) / ((s + 1.0) * (s - 1.0)));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, off, Eigen::ComputeEigenvectors);
  if (es.info() != Eigen::Success) throw Error("Golub-Welsch eigenproblem failed");
  const double mu0 = std::sqrt(std::numbers::pi) * std::tgamma(mu + 1.0) / std::tgamma(mu + 1.5);
  QuadratureRule q;
  for (std::size_t i = 0; i < n; ++i) {
    q.nodes.push_back(es.eigenvalues()[i]);
    q.weights.push_back(mu0 * es.eigenvectors()(0, i) * es.eigenvectors()(0, i));
  }
  return q;
}

// Nodes on the unit sphere S^{k-1} in R^k with weights summing to its area.
struct SphereGrid {
  int dim = 2;
  std::vector<double> coords;  // node i occupies [i·dim, (i+1)·dim)
  std::vector<double> weights;

  std::size_t size() const { return weights.size(); }
  const double* node(std::size_t i) const { return coords.data() + i * dim; }
};

// Product rule in hyperspherical coordinates: trapezoid in the azimuth (2n
// nodes) and, for each polar angle ψ_j with measure sin^{k−2−j}ψ dψ, n Gauss
// nodes in x = cos ψ for the weight (1 − x²)^{(k−3−j)/2}. Exact for
// polynomials in ν of degree below 2n.
inline SphereGrid sphere_tensor_grid(int k, std::size_t n) {
  if (k < 1) throw Error("sphere dimension must be at least 1");
  if (n == 0) throw Error("sphere grid needs a positive resolution");
  SphereGrid g;
  g.dim = k;
  if (k == 1) {
    g.coords = {-1.0, 1.0};
    g.weights = {1.0, 1.0};
    return g;
  }
  const std::size_t naz = 2 * n;
  const int npolar = k - 2;
  std::vector<QuadratureRule> polar;
  for (int j = 0; j < npolar; ++j) polar.push_back(gauss_gegenbauer(n, 0.5 * (k - 3 - j)));
  std::vector<double> cos_az(naz), sin_az(naz);
  for (std::size_t a = 0; a < naz; ++a) {
    const double az = 2.0 * std::numbers::pi * static_cast<double>(a) / naz;
    cos_az[a] = std::cos(az);
    sin_az[a] = std::sin(az);
  }
  std::size_t total = naz;
  for (int j = 0; j < npolar; ++j) total *= n;
  g.coords.reserve(total * k);
  g.weights.reserve(total);
  std::vector<std::size_t> idx(npolar, 0);
  std::vector<double> v(k);
  while (true) {
    double w_polar = 1.0, prod = 1.0;
    for (int j = 0; j < npolar; ++j) {
      const double x = polar[j].nodes[idx[j]];
      w_polar *= polar[j].weights[idx[j]];
      v[j] = prod * x;
      prod *= std::sqrt(std::max(0.0, 1.0 - x * x));
    }
    for (std::size_t a = 0; a < naz; ++a) {
      v[k - 2] = prod * cos_az[a];
      v[k - 1] = prod * sin_az[a];
      g.coords.insert(g.coords.end(), v.begin(), v.end());
      g.weights.push_back(w_polar * 2.0 * std::numbers::pi / naz);
    }
    int j = 0;
    while (j < npolar && ++idx[j] == n) idx[j++] = 0;
    if (j == npolar) break;
  }
  return g;
}

// Pairwise summation: fixed association order, small rounding growth.
inline double pairwise_sum(const double* x, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  const std::size_t h = n / 2;
  return pairwise_sum(x, h) + pairwise_sum(x + h, n - h);
}

inline double pairwise_sum(const std::vector<double>& x) { return pairwise_sum(x.data(), x.size()); }

}  // namespace sgdlab
