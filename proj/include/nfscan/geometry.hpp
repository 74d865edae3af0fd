#pragma once

// Wire-shape library and thin-wire segment meshing.
//
// A WireGeometry is a polyline routed parallel to the ground plane. Closed
// wires repeat their first vertex at the end. Label 0 marks closed (loop)
// radiators, label 1 open (bent dipole) radiators.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "common.hpp"
#include "random.hpp"

namespace nfscan {

enum class SourcePlacement : std::uint8_t { Middle, Corner, Ending };

inline const char* to_string(SourcePlacement p) {
  switch (p) {
    case SourcePlacement::Middle: return "middle";
    case SourcePlacement::Corner: return "corner";
    case SourcePlacement::Ending: return "ending";
  }
  return "?";
}

inline SourcePlacement parse_placement(const std::string& s) {
  if (s == "middle") return SourcePlacement::Middle;
  if (s == "corner") return SourcePlacement::Corner;
  if (s == "ending") return SourcePlacement::Ending;
  throw FormatError("unknown source placement '" + s + "'");
}

struct WireGeometry {
  std::string id;
  std::vector<Vec3> vertices;
  bool closed = false;
  double radius = 0.001;
  double height = 0.01;
  /// Polyline edge carrying the delta-gap source. For corner placement the gap
  /// sits on the edge's end vertex.
  std::size_t source_segment = 0;
  SourcePlacement placement = SourcePlacement::Middle;
  int label = 1;

  std::size_t edge_count() const { return vertices.empty() ? 0 : vertices.size() - 1; }
  double edge_length(std::size_t e) const { return (vertices[e + 1] - vertices[e]).norm(); }
  double path_length() const {
    double s = 0;
    for (std::size_t e = 0; e < edge_count(); ++e) s += edge_length(e);
    return s;
  }
};

namespace detail {

inline constexpr double kVertexTolerance = 1e-9;
inline constexpr double kCornerTurn = 10.0 * constants::pi / 180.0;

/// Turn angle at interior vertex v (wrapping for closed paths); 0 at free ends.
inline double turn_angle(const WireGeometry& g, std::size_t v) {
  const std::size_t ne = g.edge_count();
  std::size_t in_edge, out_edge;
  if (g.closed) {
    in_edge = (v == 0 ? ne : v) - 1;
    out_edge = v % ne;
  } else {
    if (v == 0 || v >= ne) return 0.0;
    in_edge = v - 1;
    out_edge = v;
  }
  const Vec3 a = (g.vertices[in_edge + 1] - g.vertices[in_edge]).normalized();
  const Vec3 b = (g.vertices[out_edge + 1] - g.vertices[out_edge]).normalized();
  return std::acos(std::clamp(a.dot(b), -1.0, 1.0));
}

}  // namespace detail

inline bool is_corner_vertex(const WireGeometry& g, std::size_t v) {
  return detail::turn_angle(g, v) > detail::kCornerTurn;
}

/// Throws GeometryError describing the first violated invariant.
inline void validate(const WireGeometry& g) {
  auto fail = [&](const std::string& msg) { throw GeometryError("shape " + g.id + ": " + msg); };
  if (g.vertices.size() < 2) fail("needs at least two vertices");
  if (!(g.height > 0)) fail("height must be positive");
  if (!(g.radius > 0)) fail("radius must be positive");
  for (const Vec3& v : g.vertices)
    if (std::abs(v.z() - g.height) > detail::kVertexTolerance) fail("vertex off the wire plane");
  const double gap = (g.vertices.front() - g.vertices.back()).norm();
  if (g.closed) {
    if (gap > detail::kVertexTolerance) fail("closed wire must end at its first vertex");
    if (g.label != 0) fail("closed wire must carry label 0");
    if (g.edge_count() < 3) fail("closed wire needs at least three edges");
  } else {
    if (gap <= detail::kVertexTolerance) fail("open wire endpoints coincide");
    if (g.label != 1) fail("open wire must carry label 1");
  }
  double shortest = std::numeric_limits<double>::infinity();
  for (std::size_t e = 0; e < g.edge_count(); ++e) shortest = std::min(shortest, g.edge_length(e));
  if (!(g.radius < shortest)) fail("radius must be below the shortest edge length");
  if (g.source_segment >= g.edge_count()) fail("source segment out of range");
  switch (g.placement) {
    case SourcePlacement::Ending:
      if (g.closed) fail("closed wires have no ending segment");
      if (g.source_segment != 0 && g.source_segment + 1 != g.edge_count())
        fail("ending source must sit on the first or last edge");
      break;
    case SourcePlacement::Corner: {
      const std::size_t v = (g.source_segment + 1) % (g.closed ? g.edge_count() : g.vertices.size());
      if (!g.closed && g.source_segment + 1 == g.edge_count()) fail("corner source needs an interior vertex");
      if (!is_corner_vertex(g, v)) fail("corner source vertex has no direction change");
      break;
    }
    case SourcePlacement::Middle: break;
  }
}

// ---------------------------------------------------------------------------
// Library generation

struct LibraryConfig {
  double extent_x = 0.3;
  double extent_y = 0.3;
  double height = 0.01;
  double radius = 0.001;
  double side_length = 0.10;
  /// Relative jitter of edge / arm lengths around side_length.
  double side_jitter = 0.2;
  double fillet_min = 0.01;
  double fillet_max = 0.03;
  /// Target chord of a polygonalized fillet arc.
  double arc_piece = 0.006;
  /// Clearance kept between every vertex and the footprint border.
  double margin = 0.005;
  int per_class = 32;

  void validate() const {
    if (!(extent_x > 0 && extent_y > 0 && height > 0 && radius > 0 && side_length > 0))
      throw ConfigError("library dimensions must be positive");
    if (side_jitter < 0 || side_jitter >= 0.5) throw ConfigError("side_jitter must lie in [0, 0.5)");
    if (fillet_min <= 0 || fillet_max < fillet_min) throw ConfigError("invalid fillet radius range");
    if (per_class < 1) throw ConfigError("per_class must be at least 1");
    const double need = side_length * (1.0 + side_jitter) + 2.0 * margin;
    if (std::min(extent_x, extent_y) < need) {
      std::ostringstream os;
      os << "scan footprint " << extent_x << " x " << extent_y << " m cannot contain a " << side_length
         << " m shape (needs at least " << need << " m per side)";
      throw ConfigError(os.str());
    }
  }
};

namespace detail {

struct Path2 {
  std::vector<Eigen::Vector2d> pts;  // closed paths repeat the first point
  bool closed = false;
};

inline bool fits_footprint(const Path2& p, const LibraryConfig& c) {
  for (const auto& q : p.pts)
    if (q.x() < c.margin || q.x() > c.extent_x - c.margin || q.y() < c.margin || q.y() > c.extent_y - c.margin)
      return false;
  return true;
}

inline Path2 closed_polygon(Rng& rng, int sides, double side, double jitter) {
  Path2 p;
  p.closed = true;
  const double step = 2.0 * constants::pi / sides;
  const double r0 = side / (2.0 * std::sin(constants::pi / sides));
  for (int k = 0; k < sides; ++k) {
    const double r = r0 * (1.0 + jitter * rng.uniform(-1.0, 1.0));
    const double th = k * step + 0.25 * jitter * step * rng.uniform(-1.0, 1.0);
    p.pts.emplace_back(r * std::cos(th), r * std::sin(th));
  }
  p.pts.push_back(p.pts.front());
  return p;
}

enum class BendKind { L, U, Z, S };

inline Path2 open_bend(Rng& rng, BendKind kind, double side, double jitter) {
  std::vector<double> turns;
  switch (kind) {
    case BendKind::L: turns = {1}; break;
    case BendKind::U: turns = {1, 1}; break;
    case BendKind::Z: turns = {1, -1}; break;
    case BendKind::S: turns = {1, 1, -1}; break;
  }
  Path2 p;
  Eigen::Vector2d pos(0, 0);
  double heading = 0;
  p.pts.push_back(pos);
  for (std::size_t arm = 0; arm <= turns.size(); ++arm) {
    const double len = side * (1.0 + jitter * rng.uniform(-1.0, 1.0));
    pos += len * Eigen::Vector2d(std::cos(heading), std::sin(heading));
    p.pts.push_back(pos);
    if (arm < turns.size()) {
      const double mag = constants::pi / 2 + (constants::pi / 12) * rng.uniform(-1.0, 1.0);
      heading += turns[arm] * mag;
    }
  }
  return p;
}

/// Replaces selected corners by circular fillets polygonalized into chords of
/// roughly `piece` length. The fillet radius shrinks so that every remaining
/// straight run keeps at least `min_run`.
inline Path2 fillet(const Path2& in, const std::vector<bool>& round, double radius, double piece, double min_run) {
  const std::size_t n = in.closed ? in.pts.size() - 1 : in.pts.size();
  auto at = [&](std::size_t i) -> const Eigen::Vector2d& { return in.pts[i % n]; };
  Path2 out;
  out.closed = in.closed;
  for (std::size_t i = 0; i < n; ++i) {
    const bool interior = in.closed || (i > 0 && i + 1 < n);
    if (!interior || !round[i]) {
      out.pts.push_back(at(i));
      continue;
    }
    const Eigen::Vector2d prev = at(i + n - 1), cur = at(i), next = at(i + 1);
    const Eigen::Vector2d din = (cur - prev).normalized(), dout = (next - cur).normalized();
    const double phi = std::acos(std::clamp(din.dot(dout), -1.0, 1.0));
    if (phi < 1e-3) {
      out.pts.push_back(cur);
      continue;
    }
    const double room = 0.5 * std::min((cur - prev).norm(), (next - cur).norm()) - 0.5 * min_run;
    const double r = std::min(radius, room / std::tan(phi / 2));
    // Chords shorter than min_run would violate the mesh bounds; skip tiny fillets.
    if (r * phi < 2.0 * min_run) {
      out.pts.push_back(cur);
      continue;
    }
    const double t = r * std::tan(phi / 2);
    const Eigen::Vector2d p1 = cur - din * t;
    const double cross = din.x() * dout.y() - din.y() * dout.x();
    const Eigen::Vector2d normal = cross > 0 ? Eigen::Vector2d(-din.y(), din.x()) : Eigen::Vector2d(din.y(), -din.x());
    const Eigen::Vector2d center = p1 + normal * r;
    const int m = std::max(2, static_cast<int>(std::round(r * phi / piece)));
    const Eigen::Vector2d rel = p1 - center;
    const double sgn = cross > 0 ? 1.0 : -1.0;
    for (int k = 0; k <= m; ++k) {
      const double a = sgn * phi * k / m;
      out.pts.push_back(center + Eigen::Vector2d(rel.x() * std::cos(a) - rel.y() * std::sin(a),
                                                 rel.x() * std::sin(a) + rel.y() * std::cos(a)));
    }
  }
  if (out.closed) out.pts.push_back(out.pts.front());
  return out;
}

inline void place(Path2& p, double angle, const LibraryConfig& c) {
  Eigen::Vector2d lo = p.pts.front(), hi = p.pts.front();
  for (const auto& q : p.pts) {
    lo = lo.cwiseMin(q);
    hi = hi.cwiseMax(q);
  }
  const Eigen::Vector2d mid = 0.5 * (lo + hi);
  const Eigen::Vector2d centre(c.extent_x / 2, c.extent_y / 2);
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (auto& q : p.pts) {
    const Eigen::Vector2d d = q - mid;
    q = centre + Eigen::Vector2d(ca * d.x() - sa * d.y(), sa * d.x() + ca * d.y());
  }
}

inline void choose_source(WireGeometry& g, Rng& rng) {
  const std::size_t ne = g.edge_count();
  const int options = g.closed ? 2 : 3;
  g.placement = static_cast<SourcePlacement>(rng.index(options));
  switch (g.placement) {
    case SourcePlacement::Middle: {
      const double half = 0.5 * g.path_length();
      double s = 0;
      g.source_segment = ne - 1;
      for (std::size_t e = 0; e < ne; ++e) {
        s += g.edge_length(e);
        if (s >= half) {
          g.source_segment = e;
          break;
        }
      }
      break;
    }
    case SourcePlacement::Corner: {
      std::vector<std::size_t> corners;  // edges whose end vertex turns
      for (std::size_t e = 0; e < ne; ++e) {
        const std::size_t v = e + 1;
        if (!g.closed && v == ne) continue;
        if (is_corner_vertex(g, v % (g.closed ? ne : g.vertices.size()))) corners.push_back(e);
      }
      if (corners.empty()) {
        g.placement = SourcePlacement::Middle;
        choose_source(g, rng);
        return;
      }
      g.source_segment = corners[rng.index(corners.size())];
      break;
    }
    case SourcePlacement::Ending:
      g.source_segment = rng.coin() ? 0 : ne - 1;
      break;
  }
}

}  // namespace detail

/// Builds the seeded two-class wire library: per_class closed polygons (label 0)
/// followed by per_class open bends (label 1). The second half of each class
/// receives at least one of half-size scaling, corner rounding, and rotation.
inline std::vector<WireGeometry> generate_wire_library(const LibraryConfig& config, std::uint64_t seed) {
  config.validate();
  Rng master(seed);
  std::vector<WireGeometry> out;
  out.reserve(2 * config.per_class);
  const double min_run = 0.006;
  for (int cls = 0; cls < 2; ++cls) {
    const bool closed = cls == 0;
    for (int i = 0; i < config.per_class; ++i) {
      Rng rng = master.fork(static_cast<std::uint64_t>(cls) * 1000003ULL + static_cast<std::uint64_t>(i));
      const bool modified = i >= config.per_class / 2;
      unsigned mods = modified ? 1 + static_cast<unsigned>(rng.index(7)) : 0;  // bit0 half, bit1 round, bit2 rotate
      const int sides = modified ? 3 + static_cast<int>(rng.index(6)) : 3 + i % 6;
      const auto bend = static_cast<detail::BendKind>(modified ? rng.index(4) : static_cast<std::size_t>(i % 4));
      const double fillet_r = rng.uniform(config.fillet_min, config.fillet_max);
      double scale = (mods & 1u) ? 0.5 : 1.0;

      detail::Path2 path;
      bool fits = false;
      for (int attempt = 0; !fits; ++attempt) {
        if (attempt > 0 && attempt % 32 == 0) scale *= 0.9;
        const double side = config.side_length * scale;
        path = closed ? detail::closed_polygon(rng, sides, side, config.side_jitter)
                      : detail::open_bend(rng, bend, side, config.side_jitter);
        if (mods & 2u) {
          const std::size_t n = closed ? path.pts.size() - 1 : path.pts.size();
          std::vector<bool> round(n, false);
          bool any = false;
          for (std::size_t v = 0; v < n; ++v) any |= (round[v] = rng.coin());
          if (!any) round[closed ? 0 : n / 2] = true;
          path = detail::fillet(path, round, fillet_r * std::max(scale, 0.5), config.arc_piece, min_run);
        }
        const double angle = (mods & 4u) ? rng.uniform(0.0, 2.0 * constants::pi) : 0.0;
        detail::place(path, angle, config);
        fits = detail::fits_footprint(path, config);
        if (attempt > 1000) throw GeometryError("could not place a shape inside the scan footprint");
      }

      WireGeometry g;
      std::ostringstream id;
      id << (closed ? 'c' : 'o') << std::setw(2) << std::setfill('0') << i;
      g.id = id.str();
      g.closed = closed;
      g.label = closed ? 0 : 1;
      g.radius = config.radius;
      g.height = config.height;
      for (const auto& q : path.pts) g.vertices.emplace_back(q.x(), q.y(), config.height);
      if (closed) g.vertices.back() = g.vertices.front();
      detail::choose_source(g, rng);
      validate(g);
      out.push_back(std::move(g));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Library manifest: one line per shape,
//   <id> <label> <closed|open> <placement> <source_segment> <radius> <height> <n> x y z ...

inline void write_library_manifest(std::ostream& os, const std::vector<WireGeometry>& lib) {
  os << "# nfscan wire library v1\n";
  os << std::setprecision(17);
  for (const auto& g : lib) {
    os << g.id << ' ' << g.label << ' ' << (g.closed ? "closed" : "open") << ' ' << to_string(g.placement) << ' '
       << g.source_segment << ' ' << g.radius << ' ' << g.height << ' ' << g.vertices.size();
    for (const auto& v : g.vertices) os << ' ' << v.x() << ' ' << v.y() << ' ' << v.z();
    os << '\n';
  }
}

inline std::vector<WireGeometry> read_library_manifest(std::istream& is) {
  std::vector<WireGeometry> lib;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    WireGeometry g;
    std::string topo, placement;
    std::size_t n = 0;
    if (!(ls >> g.id >> g.label >> topo >> placement >> g.source_segment >> g.radius >> g.height >> n))
      throw FormatError("library manifest line " + std::to_string(lineno) + ": malformed header");
    g.closed = topo == "closed";
    g.placement = parse_placement(placement);
    for (std::size_t k = 0; k < n; ++k) {
      double x, y, z;
      if (!(ls >> x >> y >> z))
        throw FormatError("library manifest line " + std::to_string(lineno) + ": truncated vertex list");
      g.vertices.emplace_back(x, y, z);
    }
    validate(g);
    lib.push_back(std::move(g));
  }
  return lib;
}

// ---------------------------------------------------------------------------
// Meshing

enum class EndCondition : std::uint8_t { Periodic, VanishingEnds };

struct Segment {
  Vec3 start;
  Vec3 end;
  Vec3 tangent;
  double length;
};

/// Straight-segment discretization with rooftop bases centred on mesh nodes.
/// Open meshes carry bases on interior nodes 1..N-1 (basis b on node b+1);
/// closed meshes on every node (basis b on node b, spanning segments b-1, b).
struct SegmentMesh {
  std::string geometry_id;
  std::vector<Segment> segments;
  std::size_t basis_count = 0;
  EndCondition end_condition = EndCondition::VanishingEnds;
  /// Basis carrying the delta-gap source.
  std::size_t source_segment = 0;
  double radius = 0.0;

  bool closed() const { return end_condition == EndCondition::Periodic; }

  /// Basis centred on mesh node `node`, or -1 when the node carries none.
  long basis_at_node(std::size_t node) const {
    const std::size_t ns = segments.size();
    if (closed()) return static_cast<long>(node % ns);
    if (node == 0 || node >= ns) return -1;
    return static_cast<long>(node - 1);
  }

  std::size_t node_of_basis(std::size_t b) const { return closed() ? b : b + 1; }
};

struct MeshOptions {
  double min_length = 0.004;
  /// Longest segment as a fraction of the wavelength.
  double max_wavelength_fraction = 1.0 / 20.0;
  /// Optional extra cap on segment length (0 disables).
  double max_length = 0.0;
  /// Subdivision multiplier applied after the bounds are met (mesh-convergence studies).
  int refine = 1;
};

inline SegmentMesh mesh_wire(const WireGeometry& g, double frequency, const MeshOptions& opt = {}) {
  validate(g);
  if (!(frequency > 0)) throw ConfigError("frequency must be positive");
  if (opt.refine < 1) throw ConfigError("refine must be at least 1");
  double max_len = wavelength(frequency) * opt.max_wavelength_fraction;
  if (opt.max_length > 0) max_len = std::min(max_len, opt.max_length);
  const double min_len = std::max(opt.min_length, 4.0 * g.radius);

  SegmentMesh m;
  m.geometry_id = g.id;
  m.radius = g.radius;
  m.end_condition = g.closed ? EndCondition::Periodic : EndCondition::VanishingEnds;
  std::vector<std::size_t> vertex_node(g.vertices.size(), 0);
  for (std::size_t e = 0; e < g.edge_count(); ++e) {
    const Vec3 a = g.vertices[e], b = g.vertices[e + 1];
    const double len = (b - a).norm();
    const int n = static_cast<int>(std::ceil(len / max_len - 1e-9)) * opt.refine;
    const double seg = len / std::max(n, 1);
    if (n < 1 || seg < min_len * (1 - 1e-12) || seg > max_len * (1 + 1e-12)) {
      std::ostringstream os;
      os << "shape " << g.id << ": edge " << e << " (length " << len << " m) cannot be split into segments within ["
         << min_len << ", " << max_len << "] m (minimum set by " << (4.0 * g.radius > opt.min_length ? "4 x radius" : "4 mm floor")
         << ", maximum by wavelength/" << 1.0 / opt.max_wavelength_fraction << ")";
      throw GeometryError(os.str());
    }
    vertex_node[e] = m.segments.size();
    const Vec3 t = (b - a) / len;
    for (int k = 0; k < n; ++k) {
      const Vec3 s0 = a + (b - a) * (static_cast<double>(k) / n);
      const Vec3 s1 = (k + 1 == n) ? b : Vec3(a + (b - a) * (static_cast<double>(k + 1) / n));
      m.segments.push_back({s0, s1, t, (s1 - s0).norm()});
    }
  }
  vertex_node.back() = m.segments.size();
  const std::size_t ns = m.segments.size();
  m.basis_count = g.closed ? ns : ns - 1;
  if (m.basis_count == 0) throw GeometryError("shape " + g.id + ": mesh has no interior node for a current basis");

  std::size_t node = 0;
  switch (g.placement) {
    case SourcePlacement::Middle: {
      const double half = 0.5 * g.path_length();
      double best = std::numeric_limits<double>::infinity(), s = 0;
      for (std::size_t k = 0; k <= ns; ++k) {
        if (k > 0) s += m.segments[k - 1].length;
        if (m.basis_at_node(k) < 0) continue;
        if (std::abs(s - half) < best - 1e-12) {
          best = std::abs(s - half);
          node = k;
        }
      }
      break;
    }
    case SourcePlacement::Corner: node = vertex_node[g.source_segment + 1]; break;
    case SourcePlacement::Ending: node = g.source_segment == 0 ? 1 : ns - 1; break;
  }
  const long b = m.basis_at_node(node);
  if (b < 0) throw GeometryError("shape " + g.id + ": source node carries no basis");
  m.source_segment = static_cast<std::size_t>(b);
  return m;
}

/// Straight open wire from `a` to `b` (both at the same height), fed at its middle.
inline WireGeometry straight_wire(const std::string& id, const Vec3& a, const Vec3& b, double radius) {
  WireGeometry g;
  g.id = id;
  g.vertices = {a, b};
  g.closed = false;
  g.label = 1;
  g.radius = radius;
  g.height = a.z();
  g.placement = SourcePlacement::Middle;
  g.source_segment = 0;
  return g;
}

/// Axis-aligned closed square loop of side `side` centred on `centre`, fed at
/// the middle of its path.
inline WireGeometry square_loop(const std::string& id, const Vec3& centre, double side, double radius) {
  WireGeometry g;
  g.id = id;
  const double h = side / 2;
  g.vertices = {centre + Vec3(-h, -h, 0), centre + Vec3(h, -h, 0), centre + Vec3(h, h, 0), centre + Vec3(-h, h, 0),
                centre + Vec3(-h, -h, 0)};
  g.closed = true;
  g.label = 0;
  g.radius = radius;
  g.height = centre.z();
  g.placement = SourcePlacement::Middle;
  g.source_segment = 1;
  return g;
}

}  // namespace nfscan
