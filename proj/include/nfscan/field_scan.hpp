#pragma once

// Near-field evaluation of wire currents on a planar probe grid.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "common.hpp"
#include "mom.hpp"

namespace nfscan {

/// Probe (i, j) sits at (dx/2 + i*dx, dy/2 + j*dy, plane_height) with
/// dx = extent_x/nx; samples are stored row-major, index i*ny + j.
struct ProbeGrid {
  std::size_t nx = 30;
  std::size_t ny = 30;
  double extent_x = 0.3;
  double extent_y = 0.3;
  double plane_height = 0.02;

  double dx() const { return extent_x / static_cast<double>(nx); }
  double dy() const { return extent_y / static_cast<double>(ny); }
  double x_min() const { return 0.5 * dx(); }
  double y_min() const { return 0.5 * dy(); }
  std::size_t size() const { return nx * ny; }

  Vec3 position(std::size_t i, std::size_t j) const {
    return {x_min() + static_cast<double>(i) * dx(), y_min() + static_cast<double>(j) * dy(), plane_height};
  }

  void validate() const {
    if (nx < 2 || ny < 2) throw ConfigError("probe grid needs at least 2 x 2 probes");
    if (!(extent_x > 0 && extent_y > 0)) throw ConfigError("probe grid extent must be positive");
    if (!(plane_height >= 0)) throw ConfigError("probe plane height must be non-negative");
  }
};

struct FieldMap {
  std::string geometry_id;
  ProbeKind kind = ProbeKind::H;
  ProbeGrid grid;
  std::vector<CVec3> samples;

  const CVec3& at(std::size_t i, std::size_t j) const { return samples[i * grid.ny + j]; }
};

/// Straight filament carrying a current varying linearly from current_start
/// to current_end (amperes, positive along start -> end).
struct CurrentFilament {
  Vec3 start;
  Vec3 end;
  cplx current_start;
  cplx current_end;
};

namespace detail {

inline double point_segment_distance(const Vec3& r, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double t = std::clamp((r - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (r - (a + t * ab)).norm();
}

/// Field of a filament plus, optionally, the point charges accumulating at its
/// ends. Sub-panels keep each 8-point rule shorter than half the probe distance.
inline CVec3 filament_field_impl(const CurrentFilament& f, const Vec3& r, double frequency, ProbeKind kind,
                                 bool end_charges) {
  const double k = wavenumber(frequency);
  const double omega = 2.0 * constants::pi * frequency;
  const double inv4pi = 1.0 / (4.0 * constants::pi);
  const Vec3 seg = f.end - f.start;
  const double L = seg.norm();
  const Vec3 t = seg / L;
  const double dist = std::max(point_segment_distance(r, f.start, f.end), 1e-12);
  const int panels = std::clamp(static_cast<int>(std::ceil(2.0 * L / dist)), 1, 256);
  const GaussRule& g = gauss8();
  const cplx dIdl = (f.current_end - f.current_start) / L;
  const cplx jwmu(0.0, omega * constants::mu0);
  const cplx inv_jwe = 1.0 / cplx(0.0, omega * constants::eps0);

  CVec3 out = CVec3::Zero();
  for (int panel = 0; panel < panels; ++panel) {
    for (int i = 0; i < 8; ++i) {
      const double u = (panel + g.x[i]) / panels;
      const double w = g.w[i] / panels * L;
      const Vec3 rs = f.start + u * seg;
      const Vec3 d = r - rs;
      const double R = d.norm();
      const cplx ejkr = std::polar(1.0, -k * R);
      const cplx I = f.current_start + u * (f.current_end - f.current_start);
      // grad_r G = -(1 + jkR) e^{-jkR} / (4 pi R^3) (r - r')
      const cplx radial = cplx(1.0, k * R) * ejkr * (inv4pi / (R * R * R));
      if (kind == ProbeKind::H) {
        const Vec3 txd = t.cross(d);
        out += (w * I * radial) * txd.cast<cplx>();
      } else {
        const cplx G = ejkr * (inv4pi / R);
        out += (-jwmu * w * I * G) * t.cast<cplx>() - (inv_jwe * w * dIdl * radial) * d.cast<cplx>();
      }
    }
  }
  if (end_charges && kind == ProbeKind::E) {
    // Q_end = I_end / (jw), Q_start = -I_start / (jw); E = -(Q/eps) grad G.
    auto charge_field = [&](const Vec3& at, cplx q_times_jw) {
      const Vec3 d = r - at;
      const double R = d.norm();
      const cplx radial = cplx(1.0, k * R) * std::polar(1.0, -k * R) * (inv4pi / (R * R * R));
      return CVec3((inv_jwe * q_times_jw * radial) * d.cast<cplx>());
    };
    out += charge_field(f.end, f.current_end);
    out += charge_field(f.start, -f.current_start);
  }
  return out;
}

inline CurrentFilament mirrored(const CurrentFilament& f) {
  auto m = [](const Vec3& v) { return Vec3(v.x(), v.y(), -v.z()); };
  return {m(f.start), m(f.end), -f.current_start, -f.current_end};
}

}  // namespace detail

/// E (V/m) or H (A/m) radiated by one filament, optionally with its ground image.
inline CVec3 filament_field(const CurrentFilament& f, const Vec3& r, double frequency, ProbeKind kind,
                            bool end_charges, bool ground_plane) {
  CVec3 out = detail::filament_field_impl(f, r, frequency, kind, end_charges);
  if (ground_plane) out += detail::filament_field_impl(detail::mirrored(f), r, frequency, kind, end_charges);
  return out;
}

/// Field of a solved wire at point r. Node currents are continuous, so the
/// segment end charges cancel and only line charges remain.
inline CVec3 field_at(const CurrentSolution& sol, const Vec3& r, ProbeKind kind, const SolveConfig& config) {
  CVec3 out = CVec3::Zero();
  for (std::size_t s = 0; s < sol.mesh.segments.size(); ++s) {
    const Segment& seg = sol.mesh.segments[s];
    const auto [i0, i1] = sol.segment_currents(s);
    const CurrentFilament f{seg.start, seg.end, i0, i1};
    out += filament_field(f, r, config.frequency, kind, false, config.ground_plane);
  }
  return out;
}

namespace detail {

inline void check_clearance(const CurrentSolution& sol, const Vec3& r, std::size_t index, bool ground_plane) {
  for (const Segment& s : sol.mesh.segments) {
    double d = point_segment_distance(r, s.start, s.end);
    if (ground_plane) d = std::min(d, point_segment_distance(r, mirrored(s).start, mirrored(s).end));
    if (d <= sol.mesh.radius) {
      std::ostringstream os;
      os << "probe " << index << " at (" << r.x() << ", " << r.y() << ", " << r.z() << ") lies inside the surface of wire "
         << sol.geometry_id;
      throw FieldError(os.str());
    }
  }
}

}  // namespace detail

inline FieldMap compute_field_map(const CurrentSolution& sol, const ProbeGrid& grid, ProbeKind kind,
                                  const SolveConfig& config) {
  grid.validate();
  config.validate();
  FieldMap map;
  map.geometry_id = sol.geometry_id;
  map.kind = kind;
  map.grid = grid;
  map.samples.resize(grid.size());
  for (std::size_t i = 0; i < grid.nx; ++i) {
    for (std::size_t j = 0; j < grid.ny; ++j) {
      const Vec3 r = grid.position(i, j);
      detail::check_clearance(sol, r, i * grid.ny + j, config.ground_plane);
      map.samples[i * grid.ny + j] = field_at(sol, r, kind, config);
    }
  }
  for (const CVec3& s : map.samples)
    if (!s.allFinite()) throw FieldError("non-finite field sample for shape " + sol.geometry_id);
  return map;
}

enum class Combine : std::uint8_t { Total, X, Y, Z };

inline const char* to_string(Combine c) {
  switch (c) {
    case Combine::Total: return "total";
    case Combine::X: return "x";
    case Combine::Y: return "y";
    case Combine::Z: return "z";
  }
  return "?";
}

inline Combine parse_combine(const std::string& s) {
  if (s == "total") return Combine::Total;
  if (s == "x") return Combine::X;
  if (s == "y") return Combine::Y;
  if (s == "z") return Combine::Z;
  throw ConfigError("unknown combine mode '" + s + "' (expected total, x, y or z)");
}

inline constexpr double kDbFloor = -60.0;

/// nx x ny matrix of 20 log10(m / max m), floored at -60 dB.
inline Eigen::MatrixXd field_magnitude_db(const FieldMap& map, Combine combine) {
  const std::size_t nx = map.grid.nx, ny = map.grid.ny;
  Eigen::MatrixXd mag(nx, ny);
  for (std::size_t i = 0; i < nx; ++i) {
    for (std::size_t j = 0; j < ny; ++j) {
      const CVec3& s = map.at(i, j);
      switch (combine) {
        case Combine::Total: mag(i, j) = std::sqrt(std::norm(s[0]) + std::norm(s[1]) + std::norm(s[2])); break;
        case Combine::X: mag(i, j) = std::abs(s[0]); break;
        case Combine::Y: mag(i, j) = std::abs(s[1]); break;
        case Combine::Z: mag(i, j) = std::abs(s[2]); break;
      }
    }
  }
  const double ref = mag.maxCoeff();
  if (!(ref > 0)) throw FieldError("field map of " + map.geometry_id + " is identically zero; dB reference undefined");
  Eigen::MatrixXd db(nx, ny);
  for (std::size_t i = 0; i < nx; ++i)
    for (std::size_t j = 0; j < ny; ++j)
      db(i, j) = mag(i, j) > 0 ? std::max(kDbFloor, 20.0 * std::log10(mag(i, j) / ref)) : kDbFloor;
  return db;
}

// ---------------------------------------------------------------------------
// Text grid format
//
//   # nfscan grid v1
//   shape <id>
//   kind <E|H|->
//   combine <mode|->
//   grid <rows> <cols> <extent_x> <extent_y> <plane_height>
//   range <lo> <hi>
//   <rows lines of cols values>

struct TextGrid {
  std::string shape = "-";
  std::string kind = "-";
  std::string combine = "-";
  ProbeGrid grid;
  double range_lo = kDbFloor;
  double range_hi = 0.0;
  Eigen::MatrixXd values;
};

inline void write_text_grid(std::ostream& os, const TextGrid& g) {
  os << "# nfscan grid v1\n";
  os << "shape " << g.shape << "\nkind " << g.kind << "\ncombine " << g.combine << "\n";
  os << std::setprecision(17);
  os << "grid " << g.values.rows() << ' ' << g.values.cols() << ' ' << g.grid.extent_x << ' ' << g.grid.extent_y << ' '
     << g.grid.plane_height << "\n";
  os << "range " << g.range_lo << ' ' << g.range_hi << "\n";
  for (long r = 0; r < g.values.rows(); ++r) {
    for (long c = 0; c < g.values.cols(); ++c) os << (c ? " " : "") << g.values(r, c);
    os << '\n';
  }
}

inline TextGrid read_text_grid(std::istream& is, const std::string& name = "grid") {
  TextGrid g;
  std::string line;
  if (!std::getline(is, line) || line.rfind("# nfscan grid", 0) != 0)
    throw FormatError(name + ": not an nfscan text grid");
  long rows = -1, cols = -1;
  bool have_range = false;
  while (rows < 0 || !have_range) {
    if (!std::getline(is, line)) throw FormatError(name + ": truncated header");
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "shape") ls >> g.shape;
    else if (key == "kind") ls >> g.kind;
    else if (key == "combine") ls >> g.combine;
    else if (key == "grid") {
      if (!(ls >> rows >> cols >> g.grid.extent_x >> g.grid.extent_y >> g.grid.plane_height) || rows < 1 || cols < 1)
        throw FormatError(name + ": malformed grid line");
    } else if (key == "range") {
      if (!(ls >> g.range_lo >> g.range_hi) || !(g.range_hi > g.range_lo))
        throw FormatError(name + ": malformed range line");
      have_range = true;
    } else {
      throw FormatError(name + ": unknown header key '" + key + "'");
    }
  }
  g.grid.nx = static_cast<std::size_t>(rows);
  g.grid.ny = static_cast<std::size_t>(cols);
  g.values.resize(rows, cols);
  for (long r = 0; r < rows; ++r) {
    if (!std::getline(is, line)) throw FormatError(name + ": missing row " + std::to_string(r));
    std::istringstream ls(line);
    for (long c = 0; c < cols; ++c)
      if (!(ls >> g.values(r, c))) throw FormatError(name + ": row " + std::to_string(r) + " is not " + std::to_string(cols) + " values wide");
    double extra;
    if (ls >> extra) throw FormatError(name + ": row " + std::to_string(r) + " is wider than " + std::to_string(cols));
  }
  if (std::getline(is, line) && line.find_first_not_of(" \t\r") != std::string::npos)
    throw FormatError(name + ": trailing data after " + std::to_string(rows) + " rows");
  return g;
}

}  // namespace nfscan
