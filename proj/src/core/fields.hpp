#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "core/common.hpp"

namespace spikemap {

/// Uniform node-centred grid. Node (i, j, k) sits at origin + (idx - (n - 1) / 2) * spacing,
/// so `origin` is the centre of the box.
struct Grid3 {
  std::array<int, 3> dims{8, 8, 8};
  double spacing = 1.0;
  Vec3 origin{0.0, 0.0, 0.0};

  /// Cube with n nodes per axis whose outermost nodes sit at distance `radius` from `center`.
  static Grid3 cube(int n, double radius, const Vec3& center = {0.0, 0.0, 0.0});

  void validate() const;
  std::size_t size() const {
    return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
           static_cast<std::size_t>(dims[2]);
  }
  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims[0]) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(k));
  }
  double coord(int axis, int idx) const { return origin[axis] + (idx - 0.5 * (dims[axis] - 1)) * spacing; }
  Vec3 point(int i, int j, int k) const { return {coord(0, i), coord(1, j), coord(2, k)}; }
  Vec3 point(std::size_t n) const {
    const auto nx = static_cast<std::size_t>(dims[0]), ny = static_cast<std::size_t>(dims[1]);
    return point(static_cast<int>(n % nx), static_cast<int>((n / nx) % ny), static_cast<int>(n / (nx * ny)));
  }
  /// Distance from the centre to the outermost node along the shortest axis.
  double half_extent() const;
  /// Volume of the union of the h^3 cells attached to the nodes.
  double cell_volume() const { return spacing * spacing * spacing; }
  double box_volume() const { return static_cast<double>(size()) * cell_volume(); }
  /// Nodes within `layers` of a face.
  bool in_shell(int i, int j, int k, int layers) const;

  bool operator==(const Grid3& other) const;
  bool operator!=(const Grid3& other) const { return !(*this == other); }
};

void require_same_grid(const Grid3& a, const Grid3& b, const char* what);

template <class T>
class Field3 {
 public:
  Field3() = default;
  explicit Field3(const Grid3& grid, T fill = T{}) : grid_(grid), values_(grid.size(), fill) { grid.validate(); }
  Field3(const Grid3& grid, std::vector<T> values) : grid_(grid), values_(std::move(values)) {
    grid.validate();
    require(values_.size() == grid_.size(), "field value count does not match grid");
  }

  const Grid3& grid() const { return grid_; }
  std::size_t size() const { return values_.size(); }
  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }
  std::vector<T>& storage() { return values_; }
  const std::vector<T>& storage() const { return values_; }

  T& operator[](std::size_t n) { return values_[n]; }
  const T& operator[](std::size_t n) const { return values_[n]; }
  T& at(int i, int j, int k) { return values_[grid_.index(i, j, k)]; }
  const T& at(int i, int j, int k) const { return values_[grid_.index(i, j, k)]; }

  /// Fills every node with fn(point).
  template <class Fn>
  static Field3 sample(const Grid3& grid, Fn&& fn) {
    Field3 out(grid);
    for (int k = 0; k < grid.dims[2]; ++k)
      for (int j = 0; j < grid.dims[1]; ++j)
        for (int i = 0; i < grid.dims[0]; ++i) out.at(i, j, k) = fn(grid.point(i, j, k));
    return out;
  }

 private:
  Grid3 grid_;
  std::vector<T> values_;
};

using RealField3 = Field3<double>;
using ComplexField3 = Field3<cplx>;

template <class T>
struct VectorField3 {
  std::array<Field3<T>, 3> component;
  const Grid3& grid() const { return component[0].grid(); }
};

using RealVectorField3 = VectorField3<double>;
using ComplexVectorField3 = VectorField3<cplx>;

/// Second-order central differences, one-sided second-order stencils on the faces.
/// order = 4 switches the interior to the fourth-order five-point stencil.
template <class T>
VectorField3<T> gradient(const Field3<T>& f, int order = 2);

/// Seven-point Laplacian; faces use the one-sided second-order second-derivative stencil.
template <class T>
Field3<T> laplacian(const Field3<T>& f);

/// (eps / i) grad(u) - A u, with node-sampled A and central differences.
ComplexVectorField3 covariant_derivative(const ComplexField3& u, const RealVectorField3& A, double eps);

struct Quadrature {
  double value = 0.0;
  /// Share of integral(|f|) carried by the two outermost node layers.
  double boundary_fraction = 0.0;
  bool boundary_warning = false;
};

inline constexpr double kBoundaryWarnFraction = 1e-6;

/// Midpoint rule, weight h^3 per node.
Quadrature integrate(const RealField3& f);
double integral(const RealField3& f);

RealField3 modulus(const ComplexField3& u);
RealField3 modulus_squared(const ComplexField3& u);
ComplexField3 to_complex(const RealField3& f);
/// Share of sum |u|^2 held by nodes within `layers` of the faces.
double boundary_mass_fraction(const ComplexField3& u, int layers = 2);
/// sqrt(h^3 sum |u|^2)
double l2_norm(std::span<const cplx> u, double cell_volume);

/// Binary snapshot: 64-byte header (magic "SPKF", version, dims, spacing, origin, kind)
/// followed by little-endian float64 samples in x-fastest order, complex values as (re, im).
struct Snapshot {
  Grid3 grid;
  bool is_complex = true;
  std::vector<cplx> values;
};

inline constexpr std::uint32_t kSnapshotVersion = 1;

void write_snapshot(const std::string& path, const ComplexField3& u);
void write_snapshot(const std::string& path, const RealField3& u);
std::vector<unsigned char> encode_snapshot(const Snapshot& snap);
Snapshot decode_snapshot(std::span<const unsigned char> bytes);
Snapshot read_snapshot(const std::string& path);
ComplexField3 read_complex_snapshot(const std::string& path);

}  // namespace spikemap
