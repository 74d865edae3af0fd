#pragma once

// Run configuration: INI text with every key defaulted. The resolved
// configuration is written next to each run's outputs so the run can be
// repeated from that file alone.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "classifiers/classifier.hpp"
#include "evaluation.hpp"
#include "geometry.hpp"
#include "imaging.hpp"

namespace nfscan {

struct RunConfig {
  std::uint64_t seed = 7;
  std::vector<ProbeKind> probes{ProbeKind::H, ProbeKind::E};
  std::vector<ClassifierKind> classifiers{kAllClassifiers.begin(), kAllClassifiers.end()};
  std::filesystem::path out = "nfscan-out";
  /// 0 = all available cores.
  std::size_t jobs = 0;
  bool record_timing = false;
  LibraryConfig library;
  ImagingConfig imaging;
  /// Hyperparameters indexed by ClassifierKind.
  std::vector<Hyperparameters> hyperparameters = default_hyperparameters();

  static std::vector<Hyperparameters> default_hyperparameters() {
    std::vector<Hyperparameters> v;
    for (auto k : kAllClassifiers) v.push_back(ClassifierSpec::defaults(k).params);
    return v;
  }

  ClassifierSpec spec(ClassifierKind k) const {
    return {k, hyperparameters[static_cast<std::size_t>(k)], seed};
  }

  void validate() const {
    if (probes.empty()) throw ConfigError("no probe kinds selected");
    if (classifiers.empty()) throw ConfigError("no classifiers selected");
    if (out.empty()) throw ConfigError("output directory is empty");
    library.validate();
    imaging.solve.validate();
    imaging.grid.validate();
    if (!(imaging.mesh.min_length > 0)) throw ConfigError("mesh.min_length must be positive");
    if (!(imaging.mesh.max_wavelength_fraction > 0)) throw ConfigError("mesh.max_wavelength_fraction must be positive");
    if (imaging.mesh.max_length < 0) throw ConfigError("mesh.max_length must be non-negative");
    if (imaging.mesh.refine < 1) throw ConfigError("mesh.refine must be >= 1");
    if (std::abs(library.extent_x - imaging.grid.extent_x) > 1e-12 ||
        std::abs(library.extent_y - imaging.grid.extent_y) > 1e-12)
      throw ConfigError("library footprint and probe grid extent differ");
    for (auto k : kAllClassifiers) spec(k).validate();
  }
};

namespace detail {

using boost::property_tree::ptree;

inline std::string format_value(double v) { return format_double(v); }
inline std::string format_value(bool v) { return v ? "true" : "false"; }
template <class T>
  requires std::is_integral_v<T>
std::string format_value(T v) {
  return std::to_string(v);
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

inline void parse_value(const std::string& key, const std::string& text, double& out) {
  try {
    std::size_t used = 0;
    out = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + text + "'");
  }
}
inline void parse_value(const std::string& key, const std::string& text, bool& out) {
  if (text == "true" || text == "1" || text == "yes") out = true;
  else if (text == "false" || text == "0" || text == "no") out = false;
  else throw ConfigError(key + ": expected true/false, got '" + text + "'");
}
template <class T>
  requires std::is_integral_v<T>
void parse_value(const std::string& key, const std::string& text, T& out) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    if (std::is_unsigned_v<T> && v < 0) throw std::out_of_range(text);
    out = static_cast<T>(v);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got '" + text + "'");
  }
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

/// Visits every (section, key, field) of the configuration.
template <class Cfg, class F>
void config_fields(Cfg& c, F&& f) {
  f("run", "seed", c.seed);
  f("run", "jobs", c.jobs);
  f("run", "record_timing", c.record_timing);
  auto& L = c.library;
  f("library", "extent_x", L.extent_x);
  f("library", "extent_y", L.extent_y);
  f("library", "height", L.height);
  f("library", "radius", L.radius);
  f("library", "side_length", L.side_length);
  f("library", "side_jitter", L.side_jitter);
  f("library", "fillet_min", L.fillet_min);
  f("library", "fillet_max", L.fillet_max);
  f("library", "arc_piece", L.arc_piece);
  f("library", "margin", L.margin);
  f("library", "per_class", L.per_class);
  auto& S = c.imaging.solve;
  f("solver", "frequency", S.frequency);
  f("solver", "source_voltage", S.source_voltage);
  f("solver", "ground_plane", S.ground_plane);
  auto& M = c.imaging.mesh;
  f("mesh", "min_length", M.min_length);
  f("mesh", "max_wavelength_fraction", M.max_wavelength_fraction);
  f("mesh", "max_length", M.max_length);
  f("mesh", "refine", M.refine);
  auto& G = c.imaging.grid;
  f("grid", "nx", G.nx);
  f("grid", "ny", G.ny);
  f("grid", "extent_x", G.extent_x);
  f("grid", "extent_y", G.extent_y);
  f("grid", "plane_height", G.plane_height);
}

}  // namespace detail

/// Serializes every key, defaults included.
inline std::string to_ini(const RunConfig& c) {
  std::ostringstream os;
  std::string section;
  auto join = [](const auto& items, auto name) {
    std::string s;
    for (const auto& i : items) s += (s.empty() ? "" : ",") + std::string(name(i));
    return s;
  };
  auto emit = [&](const char* sec, const char* key, const auto& value) {
    if (section != sec) {
      if (section == "run") {
        os << "probes = " << join(c.probes, [](ProbeKind k) { return std::string(1, to_char(k)); }) << '\n';
        os << "classifiers = " << join(c.classifiers, [](ClassifierKind k) { return to_string(k); }) << '\n';
        os << "out = " << c.out.string() << "\n\n[imaging]\ncombine = " << to_string(c.imaging.combine) << '\n';
      }
      os << (section.empty() ? "" : "\n") << '[' << sec << "]\n";
      section = sec;
    }
    os << key << " = " << detail::format_value(value) << '\n';
  };
  detail::config_fields(c, emit);
  for (auto k : kAllClassifiers) {
    std::visit(
        [&](const auto& p) {
          using P = std::decay_t<decltype(p)>;
          P::fields(p, [&](const char* key, const auto& v) { emit(to_string(k).data(), key, v); });
        },
        c.hyperparameters[static_cast<std::size_t>(k)]);
  }
  return os.str();
}

/// Parses INI text over the defaults. Unknown sections or keys are errors.
inline RunConfig parse_ini(std::istream& is, const std::string& name = "config") {
  detail::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(name + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  RunConfig c;
  std::set<std::string> used;
  auto lookup = [&](const std::string& sec, const std::string& key) -> std::optional<std::string> {
    const auto v = tree.get_optional<std::string>(detail::ptree::path_type(sec + "/" + key, '/'));
    if (v) used.insert(sec + "." + key);
    return v ? std::optional(detail::trim(*v)) : std::nullopt;
  };
  detail::config_fields(c, [&](const char* sec, const char* key, auto& field) {
    if (auto v = lookup(sec, key)) detail::parse_value(std::string(sec) + "." + key, *v, field);
  });
  if (auto v = lookup("run", "probes")) {
    c.probes.clear();
    for (const auto& p : detail::split_list(*v)) c.probes.push_back(parse_probe_kind(p));
  }
  if (auto v = lookup("run", "classifiers")) {
    c.classifiers.clear();
    for (const auto& p : detail::split_list(*v)) c.classifiers.push_back(parse_classifier_kind(p));
  }
  if (auto v = lookup("run", "out")) c.out = *v;
  if (auto v = lookup("imaging", "combine")) c.imaging.combine = parse_combine(*v);
  for (auto k : kAllClassifiers) {
    std::visit(
        [&](auto& p) {
          using P = std::decay_t<decltype(p)>;
          P::fields(p, [&](const char* key, auto& field) {
            if (auto v = lookup(std::string(to_string(k)), key))
              detail::parse_value(std::string(to_string(k)) + "." + key, *v, field);
          });
        },
        c.hyperparameters[static_cast<std::size_t>(k)]);
  }
  for (const auto& [sec, sub] : tree) {
    if (sub.empty()) throw ConfigError(name + ": key '" + sec + "' outside any section");
    for (const auto& [key, val] : sub)
      if (!used.count(sec + "." + key)) throw ConfigError(name + ": unknown key [" + sec + "] " + key);
  }
  c.imaging.jobs = c.jobs;
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError(path.string() + ": cannot open config file");
  return parse_ini(is, path.string());
}

/// Manifest entries for dataset files: the generating configuration.
inline Manifest config_manifest(const RunConfig& c) {
  Manifest m{{"seed", std::to_string(c.seed)}};
  detail::config_fields(c, [&](const char* sec, const char* key, const auto& v) {
    const std::string s(sec);
    if (s == "library") m.emplace_back(s + "." + key, detail::format_value(v));
  });
  m.emplace_back("mesh.min_length", format_double(c.imaging.mesh.min_length));
  m.emplace_back("mesh.max_wavelength_fraction", format_double(c.imaging.mesh.max_wavelength_fraction));
  m.emplace_back("mesh.max_length", format_double(c.imaging.mesh.max_length));
  m.emplace_back("mesh.refine", std::to_string(c.imaging.mesh.refine));
  return m;
}

}  // namespace nfscan
