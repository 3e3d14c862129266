#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

namespace spikemap {

using cplx = std::complex<double>;
using Vec3 = std::array<double, 3>;
/// Row m holds the gradient of component m: jac[m][k] = d(A_m)/d(x_k).
using Mat3 = std::array<Vec3, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

/// Base of every error thrown by the toolkit. `code()` maps onto the C API status values.
class Error : public std::runtime_error {
 public:
  enum class Code {
    InvalidArgument = 1,
    Parse = 2,
    Domain = 3,
    Assumption = 4,
    Bracket = 5,
    NonConvergence = 6,
    BoundaryMass = 7,
    Io = 8,
    GridMismatch = 9,
    Unsupported = 10,
  };

  Error(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : Error(Code::Parse, what + " at position " + std::to_string(position)), position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(Code::Domain, what) {}
};

class GridMismatchError : public Error {
 public:
  explicit GridMismatchError(const std::string& what) : Error(Code::GridMismatch, what) {}
};

[[noreturn]] inline void fail(Error::Code code, const std::string& what) { throw Error(code, what); }

inline void require(bool condition, const std::string& what) {
  if (!condition) fail(Error::Code::InvalidArgument, what);
}

}  // namespace spikemap
