#pragma once

// Little-endian binary encoding helpers for model files.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Core>

#include "common.hpp"

namespace nfscan {

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& os) : os_(os) {}

  template <class T>
    requires std::is_arithmetic_v<T>
  void put(T value) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                    std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
    U bits;
    if constexpr (std::is_floating_point_v<T>)
      bits = std::bit_cast<U>(value);
    else
      bits = static_cast<U>(value);
    for (std::size_t b = 0; b < sizeof(U); ++b) os_.put(static_cast<char>((bits >> (8 * b)) & 0xFF));
  }

  void put(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    os_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

  template <class T>
  void put(const std::vector<T>& v) {
    put<std::uint64_t>(v.size());
    for (const T& x : v) put(x);
  }

  template <class Derived>
  void put_matrix(const Eigen::DenseBase<Derived>& m) {
    put<std::uint64_t>(static_cast<std::uint64_t>(m.rows()));
    put<std::uint64_t>(static_cast<std::uint64_t>(m.cols()));
    for (long r = 0; r < m.rows(); ++r)
      for (long c = 0; c < m.cols(); ++c) put(m(r, c));
  }

 private:
  std::ostream& os_;
};

class BinaryReader {
 public:
  BinaryReader(std::istream& is, std::string name) : is_(is), name_(std::move(name)) {}

  template <class T>
    requires std::is_arithmetic_v<T>
  T get() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                    std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
    U bits = 0;
    for (std::size_t b = 0; b < sizeof(U); ++b) {
      const int c = is_.get();
      if (c == EOF) throw FormatError(name_ + ": unexpected end of file");
      bits |= static_cast<U>(static_cast<U>(static_cast<unsigned char>(c)) << (8 * b));
    }
    if constexpr (std::is_floating_point_v<T>)
      return std::bit_cast<T>(bits);
    else
      return static_cast<T>(bits);
  }

  std::string get_string() {
    const auto n = get<std::uint32_t>();
    std::string s(n, '\0');
    if (!is_.read(s.data(), n)) throw FormatError(name_ + ": truncated string");
    return s;
  }

  template <class T>
  std::vector<T> get_vector() {
    const auto n = checked_size(get<std::uint64_t>());
    std::vector<T> v(n);
    for (auto& x : v) x = get<T>();
    return v;
  }

  template <class Matrix>
  Matrix get_matrix() {
    const auto rows = checked_size(get<std::uint64_t>());
    const auto cols = checked_size(get<std::uint64_t>());
    if (rows != 0 && cols > (std::size_t{1} << 34) / rows) throw FormatError(name_ + ": implausible matrix size");
    Matrix m(static_cast<long>(rows), static_cast<long>(cols));
    for (long r = 0; r < m.rows(); ++r)
      for (long c = 0; c < m.cols(); ++c) m(r, c) = get<typename Matrix::Scalar>();
    return m;
  }

  const std::string& name() const { return name_; }

 private:
  std::size_t checked_size(std::uint64_t n) const {
    if (n > (std::uint64_t{1} << 34)) throw FormatError(name_ + ": implausible element count");
    return static_cast<std::size_t>(n);
  }

  std::istream& is_;
  std::string name_;
};

}  // namespace nfscan
