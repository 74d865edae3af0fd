#pragma once

// Closed-form reference fields used by the unit and acceptance tests. These
// are written independently of the library's quadrature code.

#include <cmath>
#include <complex>
#include <numbers>

#include <Eigen/Dense>

namespace oracle {

using cplx = std::complex<double>;
using Vec3 = Eigen::Vector3d;
using CVec3 = Eigen::Vector3cd;

inline constexpr double c0 = 299792458.0;
inline constexpr double mu0 = 4.0e-7 * std::numbers::pi;
inline constexpr double eps0 = 1.0 / (mu0 * c0 * c0);

/// Point-dipole pattern, e^{jwt} convention. With an electric moment p this
/// is eps0 * E; with a magnetic moment m (A m^2) it is H.
inline CVec3 dipole_pattern(const CVec3& m, const Vec3& at, const Vec3& r, double k) {
  const Vec3 d = r - at;
  const double R = d.norm();
  const CVec3 n = (d / R).cast<cplx>();
  const cplx e = std::polar(1.0, -k * R);
  const CVec3 far = n.cross(m).cross(n) * (k * k / R);
  const CVec3 near = (3.0 * n * n.dot(m) - m) * (cplx(1.0 / (R * R * R)) + cplx(0.0, k / (R * R)));
  return (far + near) * e / (4.0 * std::numbers::pi);
}

/// Short current element I*l along `t` at `at`.
struct Hertzian {
  Vec3 at;
  Vec3 t;
  cplx current_length;

  CVec3 E(const Vec3& r, double f) const {
    const double w = 2 * std::numbers::pi * f, k = w / c0;
    const CVec3 p = (current_length / cplx(0.0, w)) * t.cast<cplx>();
    return dipole_pattern(p, at, r, k) / eps0;
  }

  CVec3 H(const Vec3& r, double f) const {
    const double k = 2 * std::numbers::pi * f / c0;
    const Vec3 d = r - at;
    const double R = d.norm();
    const Vec3 txn = t.cross(d / R);
    return (current_length * cplx(1.0 / R, k) * std::polar(1.0, -k * R) / (4 * std::numbers::pi * R)) *
           txn.cast<cplx>();
  }

  /// Image in a perfectly conducting plane z = 0.
  Hertzian image() const {
    return {Vec3(at.x(), at.y(), -at.z()), Vec3(-t.x(), -t.y(), t.z()), current_length};
  }
};

/// H of a small loop with magnetic moment m (A m^2).
inline CVec3 magnetic_dipole_H(const Vec3& m, const Vec3& at, const Vec3& r, double f) {
  const double k = 2 * std::numbers::pi * f / c0;
  return dipole_pattern(m.cast<cplx>(), at, r, k);
}

/// Si(x) and Ci(x) by composite Simpson quadrature.
inline double sine_integral(double x, int n = 20000) {
  auto f = [](double t) { return t == 0.0 ? 1.0 : std::sin(t) / t; };
  const double h = x / n;
  double s = f(0.0) + f(x);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(i * h);
  return s * h / 3.0;
}

inline double cosine_integral(double x, int n = 20000) {
  auto f = [](double t) { return t == 0.0 ? 0.0 : (std::cos(t) - 1.0) / t; };
  const double h = x / n;
  double s = f(0.0) + f(x);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(i * h);
  return std::numbers::egamma + std::log(x) + s * h / 3.0;
}

/// Induced-EMF input resistance of a thin center-fed dipole of electrical
/// length kL, sinusoidal current, referred to the feed.
inline double emf_dipole_resistance(double kl) {
  const double eta = mu0 * c0;
  const double g = std::numbers::egamma;
  const double radiation =
      eta / (2 * std::numbers::pi) *
      (g + std::log(kl) - cosine_integral(kl) +
       0.5 * std::sin(kl) * (sine_integral(2 * kl) - 2 * sine_integral(kl)) +
       0.5 * std::cos(kl) * (g + std::log(kl / 2) + cosine_integral(2 * kl) - 2 * cosine_integral(kl)));
  const double s = std::sin(kl / 2);
  return radiation / (s * s);
}

}  // namespace oracle
