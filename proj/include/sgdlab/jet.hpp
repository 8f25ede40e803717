#pragma once

#include <array>
#include <cmath>
#include <limits>

namespace sgdlab {

inline constexpr int kMaxJetDim = 8;

// Forward-mode jet carrying value, gradient and (for Order == 2) the
// packed upper triangle of the Hessian. Dimension is set at runtime.
template <int Order>
struct Jet {
  static_assert(Order == 1 || Order == 2);
  static constexpr int kPacked = kMaxJetDim * (kMaxJetDim + 1) / 2;

  double v = 0.0;
  int n = 0;
  std::array<double, kMaxJetDim> d{};
  std::array<double, Order == 2 ? kPacked : 1> h{};

  Jet() = default;
  Jet(double value) : v(value) {}  // NOLINT: constants promote implicitly

  static Jet variable(double value, int index, int dim) {
    Jet j(value);
    j.n = dim;
    j.d[index] = 1.0;
    return j;
  }

  static constexpr int idx(int i, int k) {
    // packed index for i <= k
    return k * (k + 1) / 2 + i;
  }

  double hess(int i, int k) const {
    if constexpr (Order == 2) {
      return i <= k ? h[idx(i, k)] : h[idx(k, i)];
    } else {
      return 0.0;
    }
  }
};

inline double value_of(double x) { return x; }

template <int O>
inline double value_of(const Jet<O>& j) {
  return j.v;
}

namespace jet_detail {

template <int O>
inline int dim(const Jet<O>& a, const Jet<O>& b) {
  return a.n > b.n ? a.n : b.n;
}

// result = g(a) with g0 = g(a.v), g1 = g'(a.v), g2 = g''(a.v)
template <int O>
inline Jet<O> chain(const Jet<O>& a, double g0, double g1, double g2) {
  Jet<O> r(g0);
  r.n = a.n;
  for (int i = 0; i < a.n; ++i) r.d[i] = g1 * a.d[i];
  if constexpr (O == 2) {
    for (int k = 0; k < a.n; ++k)
      for (int i = 0; i <= k; ++i) {
        const int p = Jet<O>::idx(i, k);
        r.h[p] = g1 * a.h[p] + g2 * a.d[i] * a.d[k];
      }
  }
  return r;
}

inline bool zero_gradient(const double* d, int n) {
  for (int i = 0; i < n; ++i)
    if (d[i] != 0.0) return false;
  return true;
}

}  // namespace jet_detail

template <int O>
inline Jet<O> operator+(const Jet<O>& a, const Jet<O>& b) {
  Jet<O> r(a.v + b.v);
  r.n = jet_detail::dim(a, b);
  for (int i = 0; i < r.n; ++i) r.d[i] = a.d[i] + b.d[i];
  if constexpr (O == 2)
    for (int p = 0; p < r.n * (r.n + 1) / 2; ++p) r.h[p] = a.h[p] + b.h[p];
  return r;
}

template <int O>
inline Jet<O> operator-(const Jet<O>& a, const Jet<O>& b) {
  Jet<O> r(a.v - b.v);
  r.n = jet_detail::dim(a, b);
  for (int i = 0; i < r.n; ++i) r.d[i] = a.d[i] - b.d[i];
  if constexpr (O == 2)
    for (int p = 0; p < r.n * (r.n + 1) / 2; ++p) r.h[p] = a.h[p] - b.h[p];
  return r;
}

template <int O>
inline Jet<O> operator-(const Jet<O>& a) {
  return jet_detail::chain(a, -a.v, -1.0, 0.0);
}

template <int O>
inline Jet<O> operator*(const Jet<O>& a, const Jet<O>& b) {
  Jet<O> r(a.v * b.v);
  r.n = jet_detail::dim(a, b);
  for (int i = 0; i < r.n; ++i) r.d[i] = a.v * b.d[i] + b.v * a.d[i];
  if constexpr (O == 2) {
    for (int k = 0; k < r.n; ++k)
      for (int i = 0; i <= k; ++i) {
        const int p = Jet<O>::idx(i, k);
        r.h[p] = a.v * b.h[p] + b.v * a.h[p] + a.d[i] * b.d[k] + a.d[k] * b.d[i];
      }
  }
  return r;
}

template <int O>
inline Jet<O> operator*(double s, const Jet<O>& a) {
  Jet<O> r(s * a.v);
  r.n = a.n;
  for (int i = 0; i < a.n; ++i) r.d[i] = s * a.d[i];
  if constexpr (O == 2)
    for (int p = 0; p < a.n * (a.n + 1) / 2; ++p) r.h[p] = s * a.h[p];
  return r;
}

template <int O>
inline Jet<O> operator*(const Jet<O>& a, double s) {
  return s * a;
}

template <int O>
inline Jet<O> operator+(const Jet<O>& a, double s) {
  Jet<O> r = a;
  r.v += s;
  return r;
}

template <int O>
inline Jet<O> operator+(double s, const Jet<O>& a) {
  return a + s;
}

template <int O>
inline Jet<O> operator-(const Jet<O>& a, double s) {
  return a + (-s);
}

template <int O>
inline Jet<O> operator-(double s, const Jet<O>& a) {
  return (-a) + s;
}

template <int O>
inline Jet<O> operator/(const Jet<O>& a, double s) {
  return (1.0 / s) * a;
}

template <int O>
inline Jet<O> reciprocal(const Jet<O>& a) {
  const double inv = 1.0 / a.v;
  return jet_detail::chain(a, inv, -inv * inv, 2.0 * inv * inv * inv);
}

template <int O>
inline Jet<O> operator/(const Jet<O>& a, const Jet<O>& b) {
  return a * reciprocal(b);
}

template <int O>
inline Jet<O> operator/(double s, const Jet<O>& b) {
  return s * reciprocal(b);
}

template <int O>
inline Jet<O> sqrt(const Jet<O>& a) {
  const double s = std::sqrt(a.v);
  return jet_detail::chain(a, s, 0.5 / s, -0.25 / (s * a.v));
}

template <int O>
inline Jet<O> exp(const Jet<O>& a) {
  const double e = std::exp(a.v);
  return jet_detail::chain(a, e, e, e);
}

template <int O>
inline Jet<O> log(const Jet<O>& a) {
  return jet_detail::chain(a, std::log(a.v), 1.0 / a.v, -1.0 / (a.v * a.v));
}

template <int O>
inline Jet<O> sin(const Jet<O>& a) {
  const double s = std::sin(a.v), c = std::cos(a.v);
  return jet_detail::chain(a, s, c, -s);
}

template <int O>
inline Jet<O> cos(const Jet<O>& a) {
  const double s = std::sin(a.v), c = std::cos(a.v);
  return jet_detail::chain(a, c, -s, -c);
}

// a^p for a >= 0. At a = 0 with a stationary argument the limits of the
// chain rule are taken explicitly so that |x|^p jets stay finite.
template <int O>
inline Jet<O> pow(const Jet<O>& a, double p) {
  if (p == 0.0) return Jet<O>(1.0);
  if (p == 1.0) return a;
  if (p == 2.0) return a * a;
  if (a.v == 0.0 && p > 0.0) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const bool flat = jet_detail::zero_gradient(a.d.data(), a.n);
    Jet<O> r(0.0);
    r.n = a.n;
    if (!flat && p < 1.0) r.d.fill(nan);
    if constexpr (O == 2) {
      if (p < 1.0 || (!flat && p < 2.0)) r.h.fill(nan);
    }
    return r;
  }
  const double x0 = std::pow(a.v, p);
  return jet_detail::chain(a, x0, p * x0 / a.v, p * (p - 1.0) * x0 / (a.v * a.v));
}

}  // namespace sgdlab
