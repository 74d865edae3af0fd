#pragma once

#include <complex>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace nfscan {

using cplx = std::complex<double>;
using Vec3 = Eigen::Vector3d;
using CVec3 = Eigen::Vector3cd;

namespace constants {
inline constexpr double c0 = 299792458.0;
inline constexpr double mu0 = 4.0e-7 * std::numbers::pi;
inline constexpr double eps0 = 1.0 / (mu0 * c0 * c0);
inline constexpr double eta0 = mu0 * c0;
inline constexpr double pi = std::numbers::pi;
}  // namespace constants

inline double wavelength(double frequency) { return constants::c0 / frequency; }
inline double wavenumber(double frequency) { return 2.0 * constants::pi * frequency / constants::c0; }

/// Base of every error thrown by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class GeometryError : public Error {
 public:
  using Error::Error;
};

class SolverError : public Error {
 public:
  SolverError(const std::string& what, double condition = 0.0) : Error(what), condition_(condition) {}
  double condition() const noexcept { return condition_; }

 private:
  double condition_;
};

class FieldError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

enum class ProbeKind : std::uint8_t { E = 'E', H = 'H' };

inline char to_char(ProbeKind k) { return static_cast<char>(k); }

inline ProbeKind parse_probe_kind(const std::string& s) {
  if (s == "e" || s == "E") return ProbeKind::E;
  if (s == "h" || s == "H") return ProbeKind::H;
  throw ConfigError("unknown probe kind '" + s + "' (expected e or h)");
}

}  // namespace nfscan
