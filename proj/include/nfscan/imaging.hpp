#pragma once

// dB field maps -> 100 x 100 grayscale training images, and labelled datasets.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "common.hpp"
#include "field_scan.hpp"
#include "geometry.hpp"
#include "mom.hpp"
#include "parallel.hpp"
#include "png_io.hpp"

namespace nfscan {

inline constexpr std::size_t kImageSide = 100;
inline constexpr std::size_t kImagePixels = kImageSide * kImageSide;
inline constexpr int kRenderFactor = 3;
inline constexpr int kUpsampleFactor = 10;
inline constexpr const char* kPipelineVersion = "nfscan-pipeline-1";

enum class Provenance : std::uint8_t { Synthetic = 0, Ingested = 1 };

struct ScanImage {
  std::string shape_id;
  /// Row-major 100 x 100, values in [0, 1].
  std::vector<float> pixels;
  int label = 0;
  Provenance provenance = Provenance::Synthetic;

  Eigen::MatrixXd matrix() const {
    Eigen::MatrixXd m(kImageSide, kImageSide);
    for (std::size_t r = 0; r < kImageSide; ++r)
      for (std::size_t c = 0; c < kImageSide; ++c) m(r, c) = pixels[r * kImageSide + c];
    return m;
  }
};

using Manifest = std::vector<std::pair<std::string, std::string>>;

struct Dataset {
  ProbeKind probe_kind = ProbeKind::H;
  Provenance provenance = Provenance::Synthetic;
  std::vector<ScanImage> images;
  Manifest manifest;

  std::size_t count(int label) const {
    return static_cast<std::size_t>(
        std::count_if(images.begin(), images.end(), [&](const ScanImage& im) { return im.label == label; }));
  }

  void validate() const {
    std::set<std::string> ids;
    for (const ScanImage& im : images) {
      if (!ids.insert(im.shape_id).second) throw FormatError("duplicate shape id " + im.shape_id);
      if (im.pixels.size() != kImagePixels) throw FormatError("image " + im.shape_id + " is not 100 x 100");
      if (im.label != 0 && im.label != 1) throw FormatError("image " + im.shape_id + " has a non-binary label");
      for (float p : im.pixels)
        if (!(p >= 0.0f && p <= 1.0f)) throw FormatError("image " + im.shape_id + " has a pixel outside [0, 1]");
    }
  }
};

// ---------------------------------------------------------------------------
// Raster operations

/// Bilinear resampling with pixel-centre alignment and edge clamping: output
/// pixel p samples source coordinate (p + 0.5) * in/out - 0.5.
inline Eigen::MatrixXd resize_bilinear(const Eigen::MatrixXd& in, long rows, long cols) {
  Eigen::MatrixXd out(rows, cols);
  const double fy = static_cast<double>(in.rows()) / rows, fx = static_cast<double>(in.cols()) / cols;
  auto coord = [](long p, double f, long n, long& i0, double& t) {
    const double s = std::clamp((p + 0.5) * f - 0.5, 0.0, static_cast<double>(n - 1));
    i0 = std::min(static_cast<long>(std::floor(s)), n - 1);
    t = s - i0;
  };
  for (long r = 0; r < rows; ++r) {
    long r0;
    double tr;
    coord(r, fy, in.rows(), r0, tr);
    const long r1 = std::min(r0 + 1, in.rows() - 1);
    for (long c = 0; c < cols; ++c) {
      long c0;
      double tc;
      coord(c, fx, in.cols(), c0, tc);
      const long c1 = std::min(c0 + 1, in.cols() - 1);
      const double top = (1 - tc) * in(r0, c0) + tc * in(r0, c1);
      const double bot = (1 - tc) * in(r1, c0) + tc * in(r1, c1);
      out(r, c) = (1 - tr) * top + tr * bot;
    }
  }
  return out;
}

/// Truncated (4 sigma) Gaussian taps, unnormalised.
inline std::vector<double> gaussian_taps(double sigma) {
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> taps(2 * radius + 1);
  for (int k = -radius; k <= radius; ++k) taps[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
  return taps;
}

/// Separable Gaussian blur; taps falling outside the image are dropped and the
/// remaining weights renormalised.
inline Eigen::MatrixXd gaussian_blur(const Eigen::MatrixXd& in, double sigma_rows, double sigma_cols) {
  auto pass = [](const Eigen::MatrixXd& src, double sigma, bool along_rows) {
    if (sigma <= 0) return src;
    const std::vector<double> taps = gaussian_taps(sigma);
    const int radius = static_cast<int>(taps.size() / 2);
    Eigen::MatrixXd dst(src.rows(), src.cols());
    const long n = along_rows ? src.rows() : src.cols();
    for (long r = 0; r < src.rows(); ++r) {
      for (long c = 0; c < src.cols(); ++c) {
        const long centre = along_rows ? r : c;
        double acc = 0, wsum = 0;
        for (int k = -radius; k <= radius; ++k) {
          const long idx = centre + k;
          if (idx < 0 || idx >= n) continue;
          const double w = taps[k + radius];
          acc += w * (along_rows ? src(idx, c) : src(r, idx));
          wsum += w;
        }
        dst(r, c) = acc / wsum;
      }
    }
    return dst;
  };
  return pass(pass(in, sigma_rows, true), sigma_cols, false);
}

inline constexpr double kSigmaPerFactor = 0.4;

/// Resizes to rows x cols. When shrinking, blurs with sigma = 0.4 * factor
/// (per axis) before resampling at output pixel centres; equal sizes are an
/// identity; growing is plain bilinear.
inline Eigen::MatrixXd resize_antialiased(const Eigen::MatrixXd& in, long rows, long cols) {
  if (in.rows() == rows && in.cols() == cols) return in;
  const double fy = static_cast<double>(in.rows()) / rows, fx = static_cast<double>(in.cols()) / cols;
  const double sy = fy > 1 ? kSigmaPerFactor * fy : 0.0, sx = fx > 1 ? kSigmaPerFactor * fx : 0.0;
  Eigen::MatrixXd out = resize_bilinear(gaussian_blur(in, sy, sx), rows, cols);
  return out.cwiseMax(0.0).cwiseMin(1.0);
}

/// dB map in [-60, 0] -> intensities in [0, 1], upsampled x10 bilinearly.
inline Eigen::MatrixXd render_grayscale(const Eigen::MatrixXd& db_map) {
  for (long r = 0; r < db_map.rows(); ++r)
    for (long c = 0; c < db_map.cols(); ++c)
      if (!(db_map(r, c) >= kDbFloor - 1e-12 && db_map(r, c) <= 1e-12))
        throw FormatError("dB value " + std::to_string(db_map(r, c)) + " outside [-60, 0]");
  const Eigen::MatrixXd gray = ((db_map.array() - kDbFloor) / -kDbFloor).cwiseMax(0.0).cwiseMin(1.0).matrix();
  return resize_bilinear(gray, db_map.rows() * kUpsampleFactor, db_map.cols() * kUpsampleFactor);
}

/// 300 x 300 raster -> 100 x 100 (Gaussian sigma 1.2, sampled at block centres).
inline Eigen::MatrixXd downsample_antialiased(const Eigen::MatrixXd& image) {
  return resize_antialiased(image, kImageSide, kImageSide);
}

inline std::vector<float> to_pixels(const Eigen::MatrixXd& m) {
  std::vector<float> px(static_cast<std::size_t>(m.size()));
  for (long r = 0; r < m.rows(); ++r)
    for (long c = 0; c < m.cols(); ++c)
      px[static_cast<std::size_t>(r * m.cols() + c)] = static_cast<float>(std::clamp(m(r, c), 0.0, 1.0));
  return px;
}

// ---------------------------------------------------------------------------
// Synthetic datasets

struct ImagingConfig {
  SolveConfig solve;
  ProbeGrid grid;
  Combine combine = Combine::Total;
  MeshOptions mesh;
  std::size_t jobs = 0;

  Manifest manifest_entries() const {
    std::ostringstream f, v, g;
    f << std::setprecision(17) << solve.frequency;
    v << std::setprecision(17) << solve.source_voltage;
    g << std::setprecision(17) << grid.nx << 'x' << grid.ny << ' ' << grid.extent_x << 'x' << grid.extent_y << " @"
      << grid.plane_height;
    return {{"pipeline_version", kPipelineVersion},
            {"frequency", f.str()},
            {"source_voltage", v.str()},
            {"ground_plane", solve.ground_plane ? "true" : "false"},
            {"grid", g.str()},
            {"combine", to_string(combine)},
            {"render_factor", std::to_string(kRenderFactor)},
            {"blur_sigma", "1.2"}};
  }
};

struct ShapeScan {
  CurrentSolution solution;
  FieldMap e_map;
  FieldMap h_map;
};

inline ShapeScan scan_shape(const WireGeometry& g, const ImagingConfig& cfg, bool want_e = true, bool want_h = true) {
  ShapeScan s;
  s.solution = solve_wire(g, cfg.solve, cfg.mesh);
  if (want_e) s.e_map = compute_field_map(s.solution, cfg.grid, ProbeKind::E, cfg.solve);
  if (want_h) s.h_map = compute_field_map(s.solution, cfg.grid, ProbeKind::H, cfg.solve);
  return s;
}

/// Field map -> dB -> grayscale raster -> 100 x 100 pixels.
inline std::vector<float> image_pixels(const FieldMap& map, Combine combine) {
  return to_pixels(downsample_antialiased(render_grayscale(field_magnitude_db(map, combine))));
}

/// One dataset per requested probe kind, solving each shape once.
inline std::vector<Dataset> build_datasets(const std::vector<WireGeometry>& library, const std::vector<ProbeKind>& kinds,
                                           const ImagingConfig& cfg, const Manifest& extra = {}) {
  const bool want_e = std::find(kinds.begin(), kinds.end(), ProbeKind::E) != kinds.end();
  const bool want_h = std::find(kinds.begin(), kinds.end(), ProbeKind::H) != kinds.end();
  std::vector<std::array<std::vector<float>, 2>> pixels(library.size());
  parallel_for(library.size(), cfg.jobs, [&](std::size_t i) {
    const ShapeScan s = scan_shape(library[i], cfg, want_e, want_h);
    if (want_e) pixels[i][0] = image_pixels(s.e_map, cfg.combine);
    if (want_h) pixels[i][1] = image_pixels(s.h_map, cfg.combine);
  });
  std::vector<Dataset> out;
  for (ProbeKind k : kinds) {
    Dataset d;
    d.probe_kind = k;
    d.provenance = Provenance::Synthetic;
    d.manifest = cfg.manifest_entries();
    d.manifest.emplace(d.manifest.begin(), "probe_kind", std::string(1, to_char(k)));
    d.manifest.insert(d.manifest.end(), extra.begin(), extra.end());
    d.manifest.emplace_back("count_label0", std::to_string(std::count_if(library.begin(), library.end(), [](auto& g) { return g.label == 0; })));
    d.manifest.emplace_back("count_label1", std::to_string(std::count_if(library.begin(), library.end(), [](auto& g) { return g.label == 1; })));
    for (std::size_t i = 0; i < library.size(); ++i)
      d.images.push_back({library[i].id, pixels[i][k == ProbeKind::E ? 0 : 1], library[i].label, Provenance::Synthetic});
    d.validate();
    out.push_back(std::move(d));
  }
  return out;
}

inline Dataset build_dataset(const std::vector<WireGeometry>& library, ProbeKind kind, const ImagingConfig& cfg,
                             const Manifest& extra = {}) {
  return std::move(build_datasets(library, {kind}, cfg, extra).front());
}

// ---------------------------------------------------------------------------
// Binary dataset file
//
//   "NFSCANDS" | u32 version | u8 probe ('E'/'H') | u8 provenance | u32 count
//   per image: u16 id length | id bytes | u8 label | 10000 x f32
// All integers and reals little-endian.

inline constexpr char kDatasetMagic[8] = {'N', 'F', 'S', 'C', 'A', 'N', 'D', 'S'};
inline constexpr std::uint32_t kDatasetVersion = 1;

namespace detail {

template <class T>
void put_le(std::ostream& os, T value) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t b = 0; b < sizeof(T); ++b) os.put(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * b)) & 0xFF));
}

template <class T>
T get_le(std::istream& is, const std::string& name) {
  std::uint64_t v = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    const int c = is.get();
    if (c == EOF) throw FormatError(name + ": unexpected end of file");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * b);
  }
  return static_cast<T>(v);
}

}  // namespace detail

inline void write_dataset(std::ostream& os, const Dataset& d) {
  os.write(kDatasetMagic, sizeof kDatasetMagic);
  detail::put_le<std::uint32_t>(os, kDatasetVersion);
  detail::put_le<std::uint8_t>(os, static_cast<std::uint8_t>(d.probe_kind));
  detail::put_le<std::uint8_t>(os, static_cast<std::uint8_t>(d.provenance));
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(d.images.size()));
  for (const ScanImage& im : d.images) {
    detail::put_le<std::uint16_t>(os, static_cast<std::uint16_t>(im.shape_id.size()));
    os.write(im.shape_id.data(), static_cast<std::streamsize>(im.shape_id.size()));
    detail::put_le<std::uint8_t>(os, static_cast<std::uint8_t>(im.label));
    for (float p : im.pixels) detail::put_le<std::uint32_t>(os, std::bit_cast<std::uint32_t>(p));
  }
}

inline Dataset read_dataset(std::istream& is, const std::string& name = "dataset") {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kDatasetMagic, 8) != 0)
    throw FormatError(name + ": bad magic bytes (not an nfscan dataset file)");
  const auto version = detail::get_le<std::uint32_t>(is, name);
  if (version != kDatasetVersion) throw FormatError(name + ": unsupported dataset version " + std::to_string(version));
  Dataset d;
  const auto probe = detail::get_le<std::uint8_t>(is, name);
  if (probe != 'E' && probe != 'H') throw FormatError(name + ": invalid probe kind byte");
  d.probe_kind = static_cast<ProbeKind>(probe);
  const auto prov = detail::get_le<std::uint8_t>(is, name);
  if (prov > 1) throw FormatError(name + ": invalid provenance byte");
  d.provenance = static_cast<Provenance>(prov);
  const auto count = detail::get_le<std::uint32_t>(is, name);
  for (std::uint32_t i = 0; i < count; ++i) {
    ScanImage im;
    im.provenance = d.provenance;
    const auto len = detail::get_le<std::uint16_t>(is, name);
    im.shape_id.resize(len);
    if (!is.read(im.shape_id.data(), len)) throw FormatError(name + ": truncated shape id");
    im.label = detail::get_le<std::uint8_t>(is, name);
    im.pixels.resize(kImagePixels);
    for (float& p : im.pixels) p = std::bit_cast<float>(detail::get_le<std::uint32_t>(is, name));
    d.images.push_back(std::move(im));
  }
  if (is.peek() != EOF) throw FormatError(name + ": trailing bytes after " + std::to_string(count) + " images");
  try {
    d.validate();
  } catch (const FormatError& e) {
    throw FormatError(name + ": " + e.what());
  }
  return d;
}

inline void write_manifest(std::ostream& os, const Manifest& m) {
  for (const auto& [k, v] : m) os << k << " = " << v << '\n';
}

inline Manifest read_manifest(std::istream& is) {
  Manifest m;
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find(" = ");
    if (line.empty() || line[0] == '#') continue;
    if (eq == std::string::npos) throw FormatError("manifest line without ' = ': " + line);
    m.emplace_back(line.substr(0, eq), line.substr(eq + 3));
  }
  return m;
}

inline void save_dataset(const std::filesystem::path& path, const Dataset& d) {
  {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError(path.string() + ": cannot create");
    write_dataset(os, d);
  }
  std::ofstream ms(path.string() + ".manifest");
  write_manifest(ms, d.manifest);
}

inline Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError(path.string() + ": cannot open dataset file");
  Dataset d = read_dataset(is, path.string());
  std::ifstream ms(path.string() + ".manifest");
  if (ms) d.manifest = read_manifest(ms);
  return d;
}

// ---------------------------------------------------------------------------
// External rasters

/// Ingestion failure listing every offending file.
class IngestError : public FormatError {
 public:
  explicit IngestError(std::vector<std::string> failures)
      : FormatError(join(failures)), failures_(std::move(failures)) {}
  const std::vector<std::string>& failures() const noexcept { return failures_; }

 private:
  static std::string join(const std::vector<std::string>& f) {
    std::string s = "ingestion failed:";
    for (const auto& x : f) s += "\n  " + x;
    return s;
  }
  std::vector<std::string> failures_;
};

/// Reads `filename,label` lines.
inline std::map<std::string, int> read_label_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError(path.string() + ": cannot open label manifest");
  std::map<std::string, int> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected filename,label");
    const std::string label = line.substr(comma + 1);
    if (label != "0" && label != "1") throw FormatError(path.string() + ":" + std::to_string(lineno) + ": label must be 0 or 1");
    labels[line.substr(0, comma)] = label == "1" ? 1 : 0;
  }
  return labels;
}

/// Decodes a raster to [0, 1]: PNG by bit depth, text grids by their declared range.
inline Eigen::MatrixXd load_raster(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".png" || ext == ".PNG") return read_png_gray(path);
  if (ext == ".grid") {
    std::ifstream is(path);
    if (!is) throw FormatError(path.string() + ": cannot open");
    const TextGrid g = read_text_grid(is, path.string());
    return ((g.values.array() - g.range_lo) / (g.range_hi - g.range_lo)).matrix();
  }
  throw FormatError(path.string() + ": unknown raster format (expected .png or .grid)");
}

inline Dataset ingest_external(const std::vector<std::filesystem::path>& files, const std::filesystem::path& labels_path,
                               ProbeKind kind) {
  const std::map<std::string, int> labels = read_label_manifest(labels_path);
  std::vector<std::string> failures;
  std::set<std::string> seen;
  Dataset d;
  d.probe_kind = kind;
  d.provenance = Provenance::Ingested;
  for (const auto& f : files) {
    const std::string name = f.filename().string();
    seen.insert(name);
    const auto it = labels.find(name);
    if (it == labels.end()) {
      failures.push_back(name + ": missing label");
      continue;
    }
    try {
      const Eigen::MatrixXd raw = load_raster(f);
      ScanImage im;
      im.shape_id = f.stem().string();
      im.label = it->second;
      im.provenance = Provenance::Ingested;
      im.pixels = to_pixels(resize_antialiased(raw.cwiseMax(0.0).cwiseMin(1.0), kImageSide, kImageSide));
      d.images.push_back(std::move(im));
    } catch (const Error& e) {
      failures.push_back(name + ": " + e.what());
    }
  }
  for (const auto& [name, label] : labels)
    if (!seen.count(name)) failures.push_back(name + ": unknown file (listed in labels but not supplied)");
  if (!failures.empty()) throw IngestError(std::move(failures));
  d.manifest = {{"pipeline_version", kPipelineVersion},
                {"probe_kind", std::string(1, to_char(kind))},
                {"provenance", "ingested"},
                {"labels", labels_path.filename().string()},
                {"count_label0", std::to_string(d.count(0))},
                {"count_label1", std::to_string(d.count(1))}};
  d.validate();
  return d;
}

/// Writes every image as `<id>.grid` (range 0..1) plus `labels.csv`, the
/// layout ingest_external accepts.
inline std::vector<std::filesystem::path> export_dataset_grids(const Dataset& d, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> files;
  std::ofstream labels(dir / "labels.csv");
  for (const ScanImage& im : d.images) {
    TextGrid g;
    g.shape = im.shape_id;
    g.kind = std::string(1, to_char(d.probe_kind));
    g.range_lo = 0.0;
    g.range_hi = 1.0;
    g.grid.extent_x = g.grid.extent_y = 0.3;
    g.values = im.matrix();
    const auto path = dir / (im.shape_id + ".grid");
    std::ofstream os(path);
    write_text_grid(os, g);
    labels << im.shape_id << ".grid," << im.label << '\n';
    files.push_back(path);
  }
  return files;
}

/// Tiles images into a cols-wide gallery (row-major order).
inline Eigen::MatrixXd gallery(const std::vector<Eigen::MatrixXd>& tiles, int cols, int gap = 2) {
  if (tiles.empty()) return Eigen::MatrixXd::Ones(1, 1);
  const long th = tiles.front().rows(), tw = tiles.front().cols();
  const int rows = static_cast<int>((tiles.size() + cols - 1) / cols);
  Eigen::MatrixXd out = Eigen::MatrixXd::Ones(rows * (th + gap) - gap, cols * (tw + gap) - gap);
  for (std::size_t k = 0; k < tiles.size(); ++k) {
    const long r = static_cast<long>(k / cols), c = static_cast<long>(k % cols);
    out.block(r * (th + gap), c * (tw + gap), th, tw) = tiles[k];
  }
  return out;
}

}  // namespace nfscan
