#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "errors.hpp"
#include "jet.hpp"

namespace sgdlab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using json = nlohmann::json;

inline constexpr double kRankTolRel = 1e-8;
inline constexpr double kTolOnManifold = 1e-8;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// ---------------------------------------------------------------------------
// Minimizer set geometry

class MinimizerSet {
 public:
  enum class Kind { point_set, circle_in_plane, affine_subspace };

  static MinimizerSet points(int ambient, std::vector<Vec> pts) {
    MinimizerSet s(Kind::point_set, ambient, 0);
    s.points_ = std::move(pts);
    return s;
  }

  // Unit circle in the (θ0, θ1) plane of R^ambient.
  static MinimizerSet unit_circle(int ambient) { return MinimizerSet(Kind::circle_in_plane, ambient, 1); }

  // Coordinate subspace spanned by the listed axes.
  static MinimizerSet axes(int ambient, std::vector<int> free_axes) {
    MinimizerSet s(Kind::affine_subspace, ambient, static_cast<int>(free_axes.size()));
    s.free_ = std::move(free_axes);
    return s;
  }

  Kind kind() const { return kind_; }
  int intrinsic_dim() const { return n_; }
  int ambient_dim() const { return m_; }
  int codim() const { return m_ - n_; }
  const std::vector<Vec>& point_list() const { return points_; }

  double distance(const Vec& x) const {
    switch (kind_) {
      case Kind::point_set: {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& p : points_) best = std::min(best, (x - p).norm());
        return best;
      }
      case Kind::circle_in_plane: {
        double s = 0.0;
        for (int i = 2; i < m_; ++i) s += x[i] * x[i];
        const double rho = std::hypot(x[0], x[1]);
        return std::sqrt((rho - 1.0) * (rho - 1.0) + s);
      }
      case Kind::affine_subspace: {
        double s = 0.0;
        for (int i = 0; i < m_; ++i)
          if (!is_free(i)) s += x[i] * x[i];
        return std::sqrt(s);
      }
    }
    return 0.0;
  }

  Vec projection(const Vec& x) const {
    switch (kind_) {
      case Kind::point_set: {
        std::size_t best = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < points_.size(); ++i) {
          const double d = (x - points_[i]).norm();
          if (d < bd) bd = d, best = i;
        }
        return points_[best];
      }
      case Kind::circle_in_plane: {
        Vec p = Vec::Zero(m_);
        const double rho = std::hypot(x[0], x[1]);
        if (rho == 0.0) {
          p[0] = 1.0;
        } else {
          p[0] = x[0] / rho;
          p[1] = x[1] / rho;
        }
        return p;
      }
      case Kind::affine_subspace: {
        Vec p = Vec::Zero(m_);
        for (int i : free_) p[i] = x[i];
        return p;
      }
    }
    return x;
  }

  // Intrinsic coordinate of a point on the set: angle in [0, 2π) for the
  // circle, index for point sets, first free axis for subspaces.
  double coordinate(const Vec& p) const {
    switch (kind_) {
      case Kind::point_set: {
        std::size_t best = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < points_.size(); ++i) {
          const double d = (p - points_[i]).norm();
          if (d < bd) bd = d, best = i;
        }
        return static_cast<double>(best);
      }
      case Kind::circle_in_plane: {
        double phi = std::atan2(p[1], p[0]);
        if (phi < 0.0) phi += kTwoPi;
        if (phi >= kTwoPi) phi = 0.0;
        return phi;
      }
      case Kind::affine_subspace:
        return free_.empty() ? 0.0 : p[free_.front()];
    }
    return 0.0;
  }

  double coordinate_of(const Vec& x) const { return coordinate(projection(x)); }

  // Circle only: base point at angle phi.
  Vec point_at(double phi) const {
    Vec p = Vec::Zero(m_);
    p[0] = std::cos(phi);
    p[1] = std::sin(phi);
    return p;
  }

  // Circle only: point with normal displacement s = (radial, θ2, ..., θ_{m-1}).
  Vec tube_point(double phi, const double* s) const {
    Vec x = Vec::Zero(m_);
    x[0] = (1.0 + s[0]) * std::cos(phi);
    x[1] = (1.0 + s[0]) * std::sin(phi);
    for (int i = 2; i < m_; ++i) x[i] = s[i - 1];
    return x;
  }

  // Volume factor of the tube parametrization (arc length scales with radius).
  double tube_jacobian(const double* s) const { return 1.0 + s[0]; }

  // Distance from the circle to the axis where nearest points stop being unique.
  double reach() const { return kind_ == Kind::circle_in_plane ? 1.0 : std::numeric_limits<double>::infinity(); }

 private:
  MinimizerSet(Kind k, int m, int n) : kind_(k), m_(m), n_(n) {}
  bool is_free(int i) const { return std::find(free_.begin(), free_.end(), i) != free_.end(); }

  Kind kind_;
  int m_;
  int n_;
  std::vector<Vec> points_;
  std::vector<int> free_;
};

inline const char* to_string(MinimizerSet::Kind k) {
  switch (k) {
    case MinimizerSet::Kind::point_set: return "point_set";
    case MinimizerSet::Kind::circle_in_plane: return "circle_in_plane";
    case MinimizerSet::Kind::affine_subspace: return "affine_subspace";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Landscape interface

struct GrowthBound {
  double c1;
  double radius;
  double gamma;
};

struct Evaluation {
  double value;
  Vec gradient;
  Mat hessian;
};

class Landscape {
 public:
  virtual ~Landscape() = default;

  const std::string& name() const { return name_; }
  const json& params() const { return params_; }
  int dim() const { return m_; }
  const MinimizerSet& minimizer_set() const { return set_; }
  double growth_exponent() const { return growth_.gamma; }
  const GrowthBound& growth() const { return growth_; }
  double infimum() const { return infimum_; }

  virtual double value(const double* x) const = 0;
  virtual double value_gradient(const double* x, double* grad) const = 0;
  virtual Evaluation evaluate(const Vec& x) const = 0;

  double value(const Vec& x) const { return value(x.data()); }
  Vec gradient(const Vec& x) const {
    Vec g(m_);
    value_gradient(x.data(), g.data());
    return g;
  }

  // Distance to the set where f is not twice differentiable (infinite if none).
  virtual double singular_distance(const Vec&) const { return std::numeric_limits<double>::infinity(); }

 protected:
  Landscape(std::string name, json params, int m, MinimizerSet set, GrowthBound growth, double infimum)
      : name_(std::move(name)), params_(std::move(params)), m_(m), set_(std::move(set)), growth_(growth), infimum_(infimum) {}

 private:
  std::string name_;
  json params_;
  int m_;
  MinimizerSet set_;
  GrowthBound growth_;
  double infimum_;
};

using LandscapePtr = std::shared_ptr<const Landscape>;

// Formula is a callable template `T operator()(const T* x) const` written once
// for double and for jets.
template <class Formula>
class FormulaLandscape : public Landscape {
 public:
  FormulaLandscape(std::string name, json params, int m, MinimizerSet set, GrowthBound growth, double infimum, Formula f)
      : Landscape(std::move(name), std::move(params), m, std::move(set), growth, infimum), f_(std::move(f)) {}

  using Landscape::value;
  double value(const double* x) const override { return f_(x); }

  double value_gradient(const double* x, double* grad) const override {
    const int m = dim();
    std::array<Jet<1>, kMaxJetDim> v;
    for (int i = 0; i < m; ++i) v[i] = Jet<1>::variable(x[i], i, m);
    const Jet<1> r = f_(v.data());
    for (int i = 0; i < m; ++i) grad[i] = r.d[i];
    return r.v;
  }

  Evaluation evaluate(const Vec& x) const override {
    const int m = dim();
    std::array<Jet<2>, kMaxJetDim> v;
    for (int i = 0; i < m; ++i) v[i] = Jet<2>::variable(x[i], i, m);
    const Jet<2> r = f_(v.data());
    Evaluation e{r.v, Vec(m), Mat(m, m)};
    for (int i = 0; i < m; ++i) {
      e.gradient[i] = r.d[i];
      for (int k = 0; k < m; ++k) e.hessian(i, k) = r.hess(i, k);
    }
    return e;
  }

  double singular_distance(const Vec& x) const override {
    if constexpr (requires { f_.singular_distance(x); }) {
      return f_.singular_distance(x);
    } else {
      return Landscape::singular_distance(x);
    }
  }

  const Formula& formula() const { return f_; }

 private:
  Formula f_;
};

// ---------------------------------------------------------------------------
// Formulas

namespace formulas {

// x^p with exact repeated products for small integer p.
template <class T>
T power(const T& x, double p) {
  using std::pow;
  if (p == std::round(p) && p >= 1.0 && p <= 8.0) {
    T r = x;
    for (int i = 1; i < static_cast<int>(p); ++i) r = r * x;
    return r;
  }
  return pow(x, p);
}

template <class T>
T squared_norm(const T* x, int m) {
  T s = x[0] * x[0];
  for (int i = 1; i < m; ++i) s = s + x[i] * x[i];
  return s;
}

struct RadialPower {
  int m;
  double lambda;
  double k;
  template <class T>
  T operator()(const T* x) const {
    return lambda * power(squared_norm(x, m), 0.5 * k);
  }
};

struct QuadraticWindow {
  int m;
  double lambda;
  template <class T>
  T operator()(const T* x) const {
    return lambda * (1.0 + squared_norm(x, m));
  }
};

struct ProductNoncompact {
  template <class T>
  T operator()(const T* x) const {
    const T s = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
    return s * (1.0 + s) * (1.0 + x[3] * x[3]);
  }
};

// λ(φ) = mean + Σ_k cos_k cos(kφ) + sin_k sin(kφ)
struct Fourier {
  double mean = 1.0;
  std::vector<double> cos_coef;
  std::vector<double> sin_coef;

  double operator()(double phi) const {
    double v = mean;
    for (std::size_t k = 0; k < cos_coef.size(); ++k) v += cos_coef[k] * std::cos((k + 1.0) * phi);
    for (std::size_t k = 0; k < sin_coef.size(); ++k) v += sin_coef[k] * std::sin((k + 1.0) * phi);
    return v;
  }

  std::size_t order() const { return std::max(cos_coef.size(), sin_coef.size()); }

  // Evaluation from cos φ, sin φ through the Chebyshev recursion.
  template <class T>
  T eval(const T& c, const T& s) const {
    T value = T(mean);
    T ck = c, sk = s;
    for (std::size_t k = 0; k < order(); ++k) {
      if (k < cos_coef.size()) value = value + cos_coef[k] * ck;
      if (k < sin_coef.size()) value = value + sin_coef[k] * sk;
      const T cn = ck * c - sk * s;
      const T sn = sk * c + ck * s;
      ck = cn;
      sk = sn;
    }
    return value;
  }
};

inline double smoothstep(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
}

template <class T>
T smoothstep(const T& t) {
  return t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
}

// f = ½ Σ λ_i(φ) d_i² · (1+|θ|²)/2 with d = ((ρ²−1)/2, θ2, ..., θ_{m−1}).
// Near the axis ρ = 0 the eigenvalue functions are blended to their means.
struct Circle {
  static constexpr double kBlendInner = 0.25;
  static constexpr double kBlendOuter = 0.75;

  int m;
  std::vector<Fourier> eig;
  double shift = 0.0;

  template <class T>
  T eigenvalue(std::size_t i, const T& rho2, const T* x) const {
    using std::sqrt;
    const double a = eig[i].mean;
    if (value_of(rho2) <= kBlendInner * kBlendInner) return T(a);
    const T rho = sqrt(rho2);
    const T lam = eig[i].eval(x[0] / rho, x[1] / rho);
    if (value_of(rho) >= kBlendOuter) return lam;
    const T chi = smoothstep((rho - kBlendInner) / (kBlendOuter - kBlendInner));
    return a + chi * (lam - a);
  }

  template <class T>
  T operator()(const T* x) const {
    const T rho2 = x[0] * x[0] + x[1] * x[1];
    const T d0 = 0.5 * (rho2 - 1.0);
    T q = eigenvalue(0, rho2, x) * d0 * d0;
    for (int i = 2; i < m; ++i) q = q + eigenvalue(i - 1, rho2, x) * x[i] * x[i];
    const T r2 = squared_norm(x, m);
    return shift + 0.25 * q * (1.0 + r2);
  }
};

struct ShiftedQuadratic {
  int m;
  double eps;
  std::vector<double> a;
  double quartic;
  template <class T>
  T operator()(const T* x) const {
    T q = 0.5 * a[0] * x[0] * x[0];
    for (int i = 1; i < m; ++i) q = q + 0.5 * a[i] * x[i] * x[i];
    const T r2 = squared_norm(x, m);
    return eps + q + quartic * r2 * r2;
  }
};

// g(d) = d² (1 + log² d), combined over Θ as (Σ 1/g_i)^{-1}.
struct LogCorrected {
  int m;
  std::vector<Vec> points;

  template <class T>
  T operator()(const T* x) const {
    using std::log;
    T inv_sum = T(0.0);
    for (const auto& p : points) {
      T d2 = (x[0] - p[0]) * (x[0] - p[0]);
      for (int i = 1; i < m; ++i) d2 = d2 + (x[i] - p[i]) * (x[i] - p[i]);
      if (value_of(d2) == 0.0) return zero_like(x);
      const T l = log(d2);
      const T g = d2 * (1.0 + 0.25 * l * l);
      inv_sum = inv_sum + 1.0 / g;
    }
    return 1.0 / inv_sum;
  }

  double singular_distance(const Vec& x) const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : points) best = std::min(best, (x - p).norm());
    return best;
  }

 private:
  // At a point of Θ: value and gradient vanish, the Hessian is unbounded.
  template <class T>
  T zero_like(const T* x) const {
    if constexpr (std::is_same_v<T, double>) {
      return 0.0;
    } else {
      T r(0.0);
      r.n = x[0].n;
      if constexpr (std::is_same_v<T, Jet<2>>) r.h.fill(std::numeric_limits<double>::infinity());
      return r;
    }
  }
};

}  // namespace formulas

// ---------------------------------------------------------------------------
// Catalog

namespace detail {

inline double get_positive(const json& p, const char* key, double def) {
  const double v = p.value(key, def);
  if (!(v > 0.0)) throw Error(std::string("landscape parameter '") + key + "' must be positive");
  return v;
}

inline int get_dim(const json& p, int def, int lo) {
  const int m = p.value("dim", def);
  if (m < lo || m > kMaxJetDim)
    throw Error("landscape parameter 'dim' out of range [" + std::to_string(lo) + ", " + std::to_string(kMaxJetDim) + "]");
  return m;
}

inline formulas::Fourier parse_fourier(const json& j) {
  formulas::Fourier f;
  if (j.is_number()) {
    f.mean = j.get<double>();
  } else {
    f.mean = j.value("mean", 1.0);
    f.cos_coef = j.value("cos", std::vector<double>{});
    f.sin_coef = j.value("sin", std::vector<double>{});
  }
  return f;
}

inline json fourier_to_json(const formulas::Fourier& f) {
  return json{{"mean", f.mean}, {"cos", f.cos_coef}, {"sin", f.sin_coef}};
}

// Minimum of an eigenvalue function on a fine angular sample.
inline double sampled_min(const formulas::Fourier& f) {
  double lo = std::numeric_limits<double>::infinity();
  constexpr int kSamples = 4096;
  for (int i = 0; i < kSamples; ++i) lo = std::min(lo, f(kTwoPi * i / kSamples));
  return lo;
}

inline std::vector<formulas::Fourier> parse_eigenvalues(const json& p, int count) {
  std::vector<formulas::Fourier> eig;
  if (p.contains("eigenvalues")) {
    const auto& arr = p.at("eigenvalues");
    if (!arr.is_array() || static_cast<int>(arr.size()) != count)
      throw Error("expected " + std::to_string(count) + " normal eigenvalue functions");
    for (const auto& e : arr) eig.push_back(parse_fourier(e));
  } else {
    eig.assign(count, formulas::Fourier{});
  }
  for (std::size_t i = 0; i < eig.size(); ++i)
    if (!(sampled_min(eig[i]) > 0.0))
      throw Error("normal eigenvalue function " + std::to_string(i) + " is not strictly positive");
  return eig;
}

inline double circle_growth_c1(const std::vector<formulas::Fourier>& eig) {
  double lo = std::numeric_limits<double>::infinity();
  for (const auto& e : eig) lo = std::min({lo, sampled_min(e), e.mean});
  return lo / 64.0;
}

template <class F>
LandscapePtr make(std::string name, json params, int m, MinimizerSet set, GrowthBound g, double inf, F f) {
  return std::make_shared<FormulaLandscape<F>>(std::move(name), std::move(params), m, std::move(set), g, inf, std::move(f));
}

}  // namespace detail

inline const std::vector<std::string>& catalog_names() {
  static const std::vector<std::string> names = {"radial_power",  "quadratic_window",   "product_noncompact", "circle_codim2",
                                                 "circle_codimK", "shifted_underparam", "log_corrected"};
  return names;
}

inline LandscapePtr make_landscape(std::string_view name, const json& params = json::object()) {
  using namespace formulas;
  const json p = params.is_null() ? json::object() : params;

  if (name == "radial_power") {
    const int m = detail::get_dim(p, 2, 1);
    const double lambda = detail::get_positive(p, "lambda", 1.0);
    const double k = detail::get_positive(p, "k", 2.0);
    json norm{{"dim", m}, {"lambda", lambda}, {"k", k}};
    return detail::make(std::string(name), norm, m, MinimizerSet::points(m, {Vec::Zero(m)}), {lambda, 1.0, k}, 0.0,
                        RadialPower{m, lambda, k});
  }
  if (name == "quadratic_window") {
    const int m = detail::get_dim(p, 4, 1);
    const double lambda = detail::get_positive(p, "lambda", 1.0);
    json norm{{"dim", m}, {"lambda", lambda}};
    return detail::make(std::string(name), norm, m, MinimizerSet::points(m, {Vec::Zero(m)}), {lambda, 1.0, 2.0}, lambda,
                        QuadraticWindow{m, lambda});
  }
  if (name == "product_noncompact") {
    // N is the θ3 axis; no global growth bound holds along N, γ records the
    // normal growth only.
    return detail::make(std::string(name), json::object(), 4, MinimizerSet::axes(4, {3}), {0.0, 1.0, 4.0}, 0.0,
                        ProductNoncompact{});
  }
  if (name == "circle_codim2" || name == "circle_codimK") {
    const bool two = name == "circle_codim2";
    const int m = two ? 3 : detail::get_dim(p, 6, 4);
    if (two && p.contains("dim") && p.at("dim").get<int>() != 3) throw Error("circle_codim2 lives in dimension 3");
    auto eig = detail::parse_eigenvalues(p, m - 1);
    json norm{{"dim", m}, {"eigenvalues", json::array()}};
    for (const auto& e : eig) norm["eigenvalues"].push_back(detail::fourier_to_json(e));
    const GrowthBound g{detail::circle_growth_c1(eig), 2.0, 4.0};
    return detail::make(std::string(name), norm, m, MinimizerSet::unit_circle(m), g, 0.0, Circle{m, std::move(eig), 0.0});
  }
  if (name == "shifted_underparam") {
    const double eps = detail::get_positive(p, "eps", 0.5);
    const std::string base = p.value("base", std::string("quadratic"));
    if (base == "ring") {
      const int m = detail::get_dim(p, 3, 3);
      auto eig = detail::parse_eigenvalues(p, m - 1);
      json norm{{"base", "ring"}, {"dim", m}, {"eps", eps}, {"eigenvalues", json::array()}};
      for (const auto& e : eig) norm["eigenvalues"].push_back(detail::fourier_to_json(e));
      const GrowthBound g{detail::circle_growth_c1(eig), 2.0, 4.0};
      return detail::make(std::string(name), norm, m, MinimizerSet::unit_circle(m), g, eps, Circle{m, std::move(eig), eps});
    }
    if (base != "quadratic") throw Error("shifted_underparam base must be 'quadratic' or 'ring'");
    const int m = detail::get_dim(p, 1, 1);
    std::vector<double> a;
    const json qa = p.value("quadratic", json(1.0));
    if (qa.is_number()) {
      a.assign(m, qa.get<double>());
    } else {
      a = qa.get<std::vector<double>>();
      if (static_cast<int>(a.size()) != m) throw Error("shifted_underparam 'quadratic' length must equal dim");
    }
    for (double v : a)
      if (!(v > 0.0)) throw Error("landscape parameter 'quadratic' must be positive");
    const double c = p.value("quartic", 0.25);
    if (c < 0.0) throw Error("landscape parameter 'quartic' must be nonnegative");
    json norm{{"base", "quadratic"}, {"dim", m}, {"eps", eps}, {"quadratic", a}, {"quartic", c}};
    const double amin = *std::min_element(a.begin(), a.end());
    const GrowthBound g = c > 0.0 ? GrowthBound{c, 1.0, 4.0} : GrowthBound{0.5 * amin, 1.0, 2.0};
    return detail::make(std::string(name), norm, m, MinimizerSet::points(m, {Vec::Zero(m)}), g, eps,
                        ShiftedQuadratic{m, eps, std::move(a), c});
  }
  if (name == "log_corrected") {
    const int m = detail::get_dim(p, 5, 1);
    std::vector<Vec> pts;
    if (p.contains("points")) {
      for (const auto& q : p.at("points")) {
        auto v = q.get<std::vector<double>>();
        if (static_cast<int>(v.size()) != m) throw Error("log_corrected point dimension must equal dim");
        pts.push_back(Eigen::Map<const Vec>(v.data(), m));
      }
    } else {
      pts.push_back(Vec::Zero(m));
    }
    if (pts.empty()) throw Error("log_corrected needs a nonempty finite point set");
    json norm{{"dim", m}, {"points", json::array()}};
    double far = 0.0;
    for (const auto& q : pts) {
      norm["points"].push_back(std::vector<double>(q.data(), q.data() + m));
      far = std::max(far, q.norm());
    }
    const GrowthBound g{0.25 / pts.size(), std::max(1.0, 2.0 * far), 2.0};
    auto set = MinimizerSet::points(m, pts);
    return detail::make(std::string(name), norm, m, std::move(set), g, 0.0, LogCorrected{m, std::move(pts)});
  }
  throw Error("unknown landscape '" + std::string(name) + "'");
}

inline LandscapePtr landscape_from_json(const json& spec) {
  return make_landscape(spec.at("name").get<std::string>(), spec.value("params", json::object()));
}

inline json landscape_to_json(const Landscape& f) { return json{{"name", f.name()}, {"params", f.params()}}; }

// ---------------------------------------------------------------------------
// Hessian spectrum on N

struct HessianSpectrum {
  std::vector<double> eigenvalues;  // ascending, strictly positive, length m - n
  Vec base_point;
};

inline HessianSpectrum reduced_hessian_spectrum(const Landscape& f, const Vec& p) {
  const auto& set = f.minimizer_set();
  if (set.distance(p) > kTolOnManifold) throw Error("base point is not on the minimizer set");
  const Mat h = f.evaluate(p).hessian;
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (h + h.transpose()), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw Error("symmetric eigen-decomposition failed");
  const Vec ev = es.eigenvalues();
  const double tol = kRankTolRel * ev.cwiseAbs().maxCoeff();
  HessianSpectrum out{{}, p};
  int zeros = 0;
  for (int i = 0; i < ev.size(); ++i) {
    if (std::abs(ev[i]) <= tol) {
      ++zeros;
    } else if (ev[i] < 0.0) {
      throw Error("negative Hessian eigenvalue on the minimizer set");
    } else {
      out.eigenvalues.push_back(ev[i]);
    }
  }
  if (zeros != set.intrinsic_dim())
    throw RankMismatch("Hessian rank condition violated: " + std::to_string(zeros) + " near-zero eigenvalues, expected " +
                           std::to_string(set.intrinsic_dim()),
                       set.intrinsic_dim(), zeros);
  return out;
}

// ---------------------------------------------------------------------------
// Finite-difference derivative check

struct DerivativeCheck {
  struct Point {
    double grad_error;
    double hess_error;
    bool near_singular;
  };
  std::vector<Point> points;
  double max_grad_error = 0.0;  // over points away from the singular set
  double max_hess_error = 0.0;
};

inline DerivativeCheck check_derivatives(const Landscape& f, const std::vector<Vec>& samples, double h,
                                         double singular_margin = 1e-2) {
  DerivativeCheck rep;
  const int m = f.dim();
  for (const auto& x : samples) {
    const Evaluation e = f.evaluate(x);
    Vec fd(m);
    Mat hd(m, m);
    const double f0 = f.value(x);
    for (int i = 0; i < m; ++i) {
      Vec xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      const double fp = f.value(xp), fm = f.value(xm);
      fd[i] = (fp - fm) / (2.0 * h);
      hd(i, i) = (fp - 2.0 * f0 + fm) / (h * h);
      for (int k = 0; k < i; ++k) {
        Vec a = x, b = x, c = x, d = x;
        a[i] += h, a[k] += h;
        b[i] += h, b[k] -= h;
        c[i] -= h, c[k] += h;
        d[i] -= h, d[k] -= h;
        hd(i, k) = hd(k, i) = (f.value(a) - f.value(b) - f.value(c) + f.value(d)) / (4.0 * h * h);
      }
    }
    DerivativeCheck::Point pt;
    pt.grad_error = (fd - e.gradient).cwiseAbs().maxCoeff() / (1.0 + e.gradient.cwiseAbs().maxCoeff());
    pt.hess_error = (hd - e.hessian).cwiseAbs().maxCoeff() / (1.0 + e.hessian.cwiseAbs().maxCoeff());
    pt.near_singular = f.singular_distance(x) < singular_margin;
    if (!pt.near_singular) {
      rep.max_grad_error = std::max(rep.max_grad_error, pt.grad_error);
      rep.max_hess_error = std::max(rep.max_hess_error, pt.hess_error);
    }
    rep.points.push_back(pt);
  }
  return rep;
}

}  // namespace sgdlab
