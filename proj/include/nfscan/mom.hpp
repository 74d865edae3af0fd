#pragma once

// Thin-wire method of moments over an optional perfect ground plane at z = 0.
//
// Mixed-potential EFIE with rooftop bases and Galerkin testing:
//   Z_mn = jwu <f_m, G f_n> + 1/(jwe) <div f_m, G div f_n>
// with the reduced kernel G = exp(-jkR)/(4 pi R), R = sqrt(|r - r'|^2 + a^2).
// The ground plane is replaced by image segments mirrored through z = 0
// whose currents flow opposite along the mirrored path.

#include <array>
#include <cmath>
#include <complex>
#include <iomanip>
#include <ostream>
#include <vector>

#include <Eigen/Dense>

#include "common.hpp"
#include "geometry.hpp"

namespace nfscan {

struct SolveConfig {
  double frequency = 1e9;
  double source_voltage = 1.0;
  bool ground_plane = true;

  void validate() const {
    if (!(frequency > 0) || !std::isfinite(frequency)) throw ConfigError("frequency must be positive");
    if (source_voltage == 0.0 || !std::isfinite(source_voltage)) throw ConfigError("source voltage must be non-zero");
  }
};

using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

struct CurrentSolution {
  std::string geometry_id;
  ComplexVector coefficients;
  SegmentMesh mesh;
  cplx input_impedance;
  /// 1-norm condition estimate of the impedance matrix.
  double condition_estimate = 1.0;
  bool ill_conditioned = false;

  /// Current at the start and end node of segment s (zero at free ends).
  std::pair<cplx, cplx> segment_currents(std::size_t s) const {
    auto at = [&](std::size_t node) {
      const long b = mesh.basis_at_node(node);
      return b < 0 ? cplx(0.0) : coefficients[b];
    };
    return {at(s), at(s + 1)};
  }
};

inline constexpr double kIllConditioned = 1e12;

namespace detail {

struct GaussRule {
  std::array<double, 8> x;  // on [0, 1]
  std::array<double, 8> w;
};

inline const GaussRule& gauss8() {
  static const GaussRule rule = [] {
    const std::array<double, 4> xi = {0.1834346424956498, 0.5255324099163290, 0.7966664774136267,
                                      0.9602898564975363};
    const std::array<double, 4> wi = {0.3626837833783620, 0.3137066458778873, 0.2223810344533745,
                                      0.1012285362903763};
    GaussRule r{};
    for (int k = 0; k < 4; ++k) {
      r.x[3 - k] = 0.5 * (1.0 - xi[k]);
      r.x[4 + k] = 0.5 * (1.0 + xi[k]);
      r.w[3 - k] = r.w[4 + k] = 0.5 * wi[k];
    }
    return r;
  }();
  return rule;
}

/// exp(-jx) - 1 without cancellation for small x.
inline cplx expm1_j(double x) {
  const double s = std::sin(0.5 * x);
  return {-2.0 * s * s, -std::sin(x)};
}

/// Integrals over segment pair (obs p, src q) of [1, u, v, uv] * G with
/// u, v in [0, 1] the normalized positions, each scaled by Lp * Lq.
struct PairMoments {
  cplx m00{}, m10{}, m01{}, m11{};

  PairMoments transposed() const { return {m00, m01, m10, m11}; }
};

inline Segment mirrored(const Segment& s) {
  auto m = [](const Vec3& v) { return Vec3(v.x(), v.y(), -v.z()); };
  return {m(s.start), m(s.end), m(s.tangent), s.length};
}

inline bool near_pair(const Segment& p, const Segment& q) {
  const double d = (0.5 * (p.start + p.end) - 0.5 * (q.start + q.end)).norm();
  return d < 2.0 * std::max(p.length, q.length);
}

/// Number of outer sub-intervals used on near pairs.
inline constexpr int kNearOuterPanels = 4;

inline PairMoments pair_moments(const Segment& p, const Segment& q, double k, double a) {
  const GaussRule& g = gauss8();
  const double a2 = a * a;
  const double inv4pi = 1.0 / (4.0 * constants::pi);
  PairMoments m;
  const double scale = p.length * q.length;

  if (!near_pair(p, q)) {
    for (int i = 0; i < 8; ++i) {
      const Vec3 rp = p.start + g.x[i] * (p.end - p.start);
      for (int j = 0; j < 8; ++j) {
        const Vec3 rq = q.start + g.x[j] * (q.end - q.start);
        const double R = std::sqrt((rp - rq).squaredNorm() + a2);
        const cplx G = std::polar(inv4pi / R, -k * R) * (g.w[i] * g.w[j]);
        m.m00 += G;
        m.m10 += g.x[i] * G;
        m.m01 += g.x[j] * G;
        m.m11 += g.x[i] * g.x[j] * G;
      }
    }
    m.m00 *= scale;
    m.m10 *= scale;
    m.m01 *= scale;
    m.m11 *= scale;
    return m;
  }

  // Near pair: smooth part (G - 1/(4 pi R)) by product quadrature, static
  // 1/R part integrated analytically along q.
  const int panels = kNearOuterPanels;
  for (int panel = 0; panel < panels; ++panel) {
    for (int i = 0; i < 8; ++i) {
      const double u = (panel + g.x[i]) / panels;
      const double wu = g.w[i] / panels;
      const Vec3 rp = p.start + u * (p.end - p.start);
      // smooth part
      for (int j = 0; j < 8; ++j) {
        const double v = g.x[j];
        const Vec3 rq = q.start + v * (q.end - q.start);
        const double R = std::sqrt((rp - rq).squaredNorm() + a2);
        const cplx Gs = expm1_j(k * R) * (inv4pi / R) * (wu * g.w[j] * scale);
        m.m00 += Gs;
        m.m10 += u * Gs;
        m.m01 += v * Gs;
        m.m11 += u * v * Gs;
      }
      // static part: int_0^L dl'/R and int_0^L l'/R dl'
      const Vec3 d = rp - q.start;
      const double w = d.dot(q.tangent);
      const double rho2 = std::max(0.0, d.squaredNorm() - w * w) + a2;
      const double rho = std::sqrt(rho2);
      const double L = q.length;
      const double i0 = std::asinh((L - w) / rho) + std::asinh(w / rho);
      const double r_end = std::sqrt((L - w) * (L - w) + rho2);
      const double r_start = std::sqrt(w * w + rho2);
      const double i1 = (r_end - r_start) + w * i0;
      const double c = wu * p.length * inv4pi;
      m.m00 += c * i0;
      m.m10 += c * u * i0;
      m.m01 += c * i1 / L;
      m.m11 += c * u * i1 / L;
    }
  }
  return m;
}

struct HalfBasis {
  long basis;    // -1 when the node carries no basis
  bool rising;   // shape u (true) or 1 - u (false) along the segment
};

inline std::array<HalfBasis, 2> halves(const SegmentMesh& mesh, std::size_t s) {
  return {HalfBasis{mesh.basis_at_node(s), false}, HalfBasis{mesh.basis_at_node(s + 1), true}};
}

inline cplx shape_integral(const PairMoments& m, bool p_rising, bool q_rising) {
  if (p_rising && q_rising) return m.m11;
  if (p_rising) return m.m10 - m.m11;
  if (q_rising) return m.m01 - m.m11;
  return m.m00 - m.m10 - m.m01 + m.m11;
}

inline void accumulate(ComplexMatrix& Z, const SegmentMesh& mesh, std::size_t p, std::size_t q, const Segment& sp,
                       const Segment& sq, const PairMoments& m, double omega, double sign) {
  const cplx jwmu(0.0, omega * constants::mu0);
  const cplx inv_jwe = 1.0 / cplx(0.0, omega * constants::eps0);
  const double tdot = sp.tangent.dot(sq.tangent);
  for (const HalfBasis& hp : halves(mesh, p)) {
    if (hp.basis < 0) continue;
    const double dp = (hp.rising ? 1.0 : -1.0) / sp.length;
    for (const HalfBasis& hq : halves(mesh, q)) {
      if (hq.basis < 0) continue;
      const double dq = (hq.rising ? 1.0 : -1.0) / sq.length;
      Z(hp.basis, hq.basis) += sign * (jwmu * tdot * shape_integral(m, hp.rising, hq.rising) + inv_jwe * (dp * dq) * m.m00);
    }
  }
}

}  // namespace detail

/// Galerkin impedance matrix (basis_count x basis_count), complex symmetric.
inline ComplexMatrix assemble_impedance_matrix(const SegmentMesh& mesh, const SolveConfig& config) {
  config.validate();
  const double k = wavenumber(config.frequency);
  const double omega = 2.0 * constants::pi * config.frequency;
  const std::size_t ns = mesh.segments.size();
  ComplexMatrix Z = ComplexMatrix::Zero(mesh.basis_count, mesh.basis_count);
  for (std::size_t p = 0; p < ns; ++p) {
    const Segment& sp = mesh.segments[p];
    for (std::size_t q = p; q < ns; ++q) {
      const Segment& sq = mesh.segments[q];
      const auto m = detail::pair_moments(sp, sq, k, mesh.radius);
      detail::accumulate(Z, mesh, p, q, sp, sq, m, omega, 1.0);
      if (q != p) detail::accumulate(Z, mesh, q, p, sq, sp, m.transposed(), omega, 1.0);
      if (config.ground_plane) {
        const Segment iq = detail::mirrored(sq);
        const auto mi = detail::pair_moments(sp, iq, k, mesh.radius);
        detail::accumulate(Z, mesh, p, q, sp, iq, mi, omega, -1.0);
        if (q != p) detail::accumulate(Z, mesh, q, p, sq, detail::mirrored(sp), mi.transposed(), omega, -1.0);
      }
    }
  }
  return Z;
}

/// Delta-gap excitation of mesh.source_segment, dense LU with partial pivoting.
inline CurrentSolution solve_currents(const ComplexMatrix& Z, const SegmentMesh& mesh, const SolveConfig& config) {
  config.validate();
  if (Z.rows() != static_cast<long>(mesh.basis_count) || Z.cols() != Z.rows())
    throw SolverError("impedance matrix does not match mesh " + mesh.geometry_id);
  Eigen::PartialPivLU<ComplexMatrix> lu(Z);
  const double rcond = lu.rcond();
  const double cond = rcond > 0 ? 1.0 / rcond : std::numeric_limits<double>::infinity();
  if (!(rcond > 1e-15)) {
    std::ostringstream os;
    os << "impedance matrix of " << mesh.geometry_id << " is numerically singular (condition estimate " << cond << ")";
    throw SolverError(os.str(), cond);
  }
  ComplexVector v = ComplexVector::Zero(mesh.basis_count);
  v[mesh.source_segment] = config.source_voltage;
  CurrentSolution sol;
  sol.geometry_id = mesh.geometry_id;
  sol.coefficients = lu.solve(v);
  if (!sol.coefficients.allFinite()) throw SolverError("non-finite currents on " + mesh.geometry_id, cond);
  sol.mesh = mesh;
  sol.input_impedance = config.source_voltage / sol.coefficients[mesh.source_segment];
  sol.condition_estimate = cond;
  sol.ill_conditioned = cond > kIllConditioned;
  return sol;
}

inline CurrentSolution solve_wire(const WireGeometry& g, const SolveConfig& config, const MeshOptions& opt = {}) {
  const SegmentMesh mesh = mesh_wire(g, config.frequency, opt);
  return solve_currents(assemble_impedance_matrix(mesh, config), mesh, config);
}

/// Text dump of Z, the excitation and the coefficients for offline inspection.
inline void write_debug_dump(std::ostream& os, const ComplexMatrix& Z, const CurrentSolution& sol,
                             const SolveConfig& config) {
  os << std::setprecision(17);
  os << "# nfscan mom dump " << sol.geometry_id << "\n";
  os << "basis_count " << Z.rows() << "\nsource " << sol.mesh.source_segment << "\n";
  os << "Z\n";
  for (long r = 0; r < Z.rows(); ++r) {
    for (long c = 0; c < Z.cols(); ++c) os << (c ? " " : "") << Z(r, c).real() << ' ' << Z(r, c).imag();
    os << '\n';
  }
  os << "V\n";
  for (long r = 0; r < Z.rows(); ++r)
    os << (static_cast<std::size_t>(r) == sol.mesh.source_segment ? config.source_voltage : 0.0) << " 0\n";
  os << "I\n";
  for (long r = 0; r < sol.coefficients.size(); ++r)
    os << sol.coefficients[r].real() << ' ' << sol.coefficients[r].imag() << '\n';
}

}  // namespace nfscan
