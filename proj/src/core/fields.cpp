#include "core/fields.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace spikemap {

Grid3 Grid3::cube(int n, double radius, const Vec3& center) {
  require(n >= 8, "grid needs at least 8 nodes per axis");
  require(radius > 0.0, "grid radius must be positive");
  Grid3 g;
  g.dims = {n, n, n};
  g.spacing = 2.0 * radius / (n - 1);
  g.origin = center;
  return g;
}

void Grid3::validate() const {
  for (int d : dims) require(d >= 8, "grid needs at least 8 nodes per axis");
  require(spacing > 0.0 && std::isfinite(spacing), "grid spacing must be positive");
  for (double o : origin) require(std::isfinite(o), "grid origin must be finite");
}

double Grid3::half_extent() const {
  int n = std::min({dims[0], dims[1], dims[2]});
  return 0.5 * (n - 1) * spacing;
}

bool Grid3::in_shell(int i, int j, int k, int layers) const {
  return i < layers || j < layers || k < layers || i >= dims[0] - layers || j >= dims[1] - layers ||
         k >= dims[2] - layers;
}

bool Grid3::operator==(const Grid3& other) const {
  auto close = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)); };
  return dims == other.dims && close(spacing, other.spacing) && close(origin[0], other.origin[0]) &&
         close(origin[1], other.origin[1]) && close(origin[2], other.origin[2]);
}

void require_same_grid(const Grid3& a, const Grid3& b, const char* what) {
  if (a != b) throw GridMismatchError(std::string("grid mismatch: ") + what);
}

namespace {

// Derivative of a line of samples at position idx along one axis.
template <class T, class Get>
T line_derivative(Get&& get, int idx, int n, double h, int order) {
  if (order == 4 && idx >= 2 && idx + 2 < n) {
    return (-get(idx + 2) + 8.0 * get(idx + 1) - 8.0 * get(idx - 1) + get(idx - 2)) / (12.0 * h);
  }
  if (idx >= 1 && idx + 1 < n) return (get(idx + 1) - get(idx - 1)) / (2.0 * h);
  if (idx == 0) return (-3.0 * get(0) + 4.0 * get(1) - get(2)) / (2.0 * h);
  return (3.0 * get(n - 1) - 4.0 * get(n - 2) + get(n - 3)) / (2.0 * h);
}

template <class T, class Get>
T line_second(Get&& get, int idx, int n, double h) {
  if (idx >= 1 && idx + 1 < n) return (get(idx + 1) - 2.0 * get(idx) + get(idx - 1)) / (h * h);
  if (idx == 0) return (2.0 * get(0) - 5.0 * get(1) + 4.0 * get(2) - get(3)) / (h * h);
  return (2.0 * get(n - 1) - 5.0 * get(n - 2) + 4.0 * get(n - 3) - get(n - 4)) / (h * h);
}

}  // namespace

template <class T>
VectorField3<T> gradient(const Field3<T>& f, int order) {
  require(order == 2 || order == 4, "gradient order must be 2 or 4");
  const Grid3& g = f.grid();
  VectorField3<T> out{{Field3<T>(g), Field3<T>(g), Field3<T>(g)}};
  const double h = g.spacing;
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i) {
        out.component[0].at(i, j, k) =
            line_derivative<T>([&](int m) { return f.at(m, j, k); }, i, g.dims[0], h, order);
        out.component[1].at(i, j, k) =
            line_derivative<T>([&](int m) { return f.at(i, m, k); }, j, g.dims[1], h, order);
        out.component[2].at(i, j, k) =
            line_derivative<T>([&](int m) { return f.at(i, j, m); }, k, g.dims[2], h, order);
      }
  return out;
}

template <class T>
Field3<T> laplacian(const Field3<T>& f) {
  const Grid3& g = f.grid();
  Field3<T> out(g);
  const double h = g.spacing;
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i) {
        out.at(i, j, k) = line_second<T>([&](int m) { return f.at(m, j, k); }, i, g.dims[0], h) +
                          line_second<T>([&](int m) { return f.at(i, m, k); }, j, g.dims[1], h) +
                          line_second<T>([&](int m) { return f.at(i, j, m); }, k, g.dims[2], h);
      }
  return out;
}

template VectorField3<double> gradient(const Field3<double>&, int);
template VectorField3<cplx> gradient(const Field3<cplx>&, int);
template Field3<double> laplacian(const Field3<double>&);
template Field3<cplx> laplacian(const Field3<cplx>&);

ComplexVectorField3 covariant_derivative(const ComplexField3& u, const RealVectorField3& A, double eps) {
  require(eps > 0.0, "eps must be positive");
  for (const auto& c : A.component) require_same_grid(u.grid(), c.grid(), "covariant_derivative");
  ComplexVectorField3 grad = gradient(u);
  const cplx factor = eps / cplx(0.0, 1.0);
  for (int axis = 0; axis < 3; ++axis) {
    auto& out = grad.component[axis];
    const auto& a = A.component[axis];
    for (std::size_t n = 0; n < out.size(); ++n) out[n] = factor * out[n] - a[n] * u[n];
  }
  return grad;
}

Quadrature integrate(const RealField3& f) {
  const Grid3& g = f.grid();
  double total = 0.0, total_abs = 0.0, shell_abs = 0.0;
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i) {
        double v = f.at(i, j, k);
        total += v;
        total_abs += std::abs(v);
        if (g.in_shell(i, j, k, 2)) shell_abs += std::abs(v);
      }
  Quadrature q;
  q.value = total * g.cell_volume();
  q.boundary_fraction = total_abs > 0.0 ? shell_abs / total_abs : 0.0;
  q.boundary_warning = q.boundary_fraction > kBoundaryWarnFraction;
  return q;
}

double integral(const RealField3& f) { return integrate(f).value; }

RealField3 modulus(const ComplexField3& u) {
  RealField3 out(u.grid());
  for (std::size_t n = 0; n < u.size(); ++n) out[n] = std::abs(u[n]);
  return out;
}

RealField3 modulus_squared(const ComplexField3& u) {
  RealField3 out(u.grid());
  for (std::size_t n = 0; n < u.size(); ++n) out[n] = std::norm(u[n]);
  return out;
}

ComplexField3 to_complex(const RealField3& f) {
  ComplexField3 out(f.grid());
  for (std::size_t n = 0; n < f.size(); ++n) out[n] = f[n];
  return out;
}

double boundary_mass_fraction(const ComplexField3& u, int layers) {
  const Grid3& g = u.grid();
  double total = 0.0, shell = 0.0;
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i) {
        double m = std::norm(u.at(i, j, k));
        total += m;
        if (g.in_shell(i, j, k, layers)) shell += m;
      }
  return total > 0.0 ? shell / total : 0.0;
}

double l2_norm(std::span<const cplx> u, double cell_volume) {
  double s = 0.0;
  for (const cplx& v : u) s += std::norm(v);
  return std::sqrt(s * cell_volume);
}

// ---------------------------------------------------------------------------
// Snapshot format

namespace {

constexpr std::size_t kHeaderSize = 64;

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<unsigned char>((v >> (8 * b)) & 0xffu));
}

void put_f64(std::vector<unsigned char>& out, double d) {
  auto v = std::bit_cast<std::uint64_t>(d);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<unsigned char>((v >> (8 * b)) & 0xffu));
}

std::uint32_t get_u32(std::span<const unsigned char> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(in[at + b]) << (8 * b);
  return v;
}

double get_f64(std::span<const unsigned char> in, std::size_t at) {
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(in[at + b]) << (8 * b);
  return std::bit_cast<double>(v);
}

void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Error::Code::Io, "cannot open snapshot for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(Error::Code::Io, "failed writing snapshot: " + path);
}

}  // namespace

std::vector<unsigned char> encode_snapshot(const Snapshot& snap) {
  snap.grid.validate();
  require(snap.values.size() == snap.grid.size(), "snapshot value count does not match grid");
  std::vector<unsigned char> out;
  out.reserve(kHeaderSize + snap.values.size() * (snap.is_complex ? 16 : 8));
  for (char c : {'S', 'P', 'K', 'F'}) out.push_back(static_cast<unsigned char>(c));
  put_u32(out, kSnapshotVersion);
  for (int d : snap.grid.dims) put_u32(out, static_cast<std::uint32_t>(d));
  put_f64(out, snap.grid.spacing);
  for (double o : snap.grid.origin) put_f64(out, o);
  put_u32(out, snap.is_complex ? 1u : 0u);
  out.resize(kHeaderSize, 0);
  for (const cplx& v : snap.values) {
    put_f64(out, v.real());
    if (snap.is_complex) put_f64(out, v.imag());
  }
  return out;
}

Snapshot decode_snapshot(std::span<const unsigned char> bytes) {
  if (bytes.size() < kHeaderSize || std::memcmp(bytes.data(), "SPKF", 4) != 0)
    fail(Error::Code::Io, "not an SPKF snapshot");
  if (get_u32(bytes, 4) != kSnapshotVersion)
    fail(Error::Code::Io, "unsupported SPKF version " + std::to_string(get_u32(bytes, 4)));
  Snapshot snap;
  for (int a = 0; a < 3; ++a) snap.grid.dims[a] = static_cast<int>(get_u32(bytes, 8 + 4 * a));
  snap.grid.spacing = get_f64(bytes, 20);
  for (int a = 0; a < 3; ++a) snap.grid.origin[a] = get_f64(bytes, 28 + 8 * a);
  std::uint32_t kind = get_u32(bytes, 52);
  if (kind > 1) fail(Error::Code::Io, "unknown SPKF value kind");
  snap.is_complex = kind == 1;
  try {
    snap.grid.validate();
  } catch (const Error& e) {
    fail(Error::Code::Io, std::string("invalid SPKF grid: ") + e.what());
  }
  const std::size_t stride = snap.is_complex ? 16 : 8;
  if (bytes.size() != kHeaderSize + snap.grid.size() * stride) fail(Error::Code::Io, "truncated SPKF payload");
  snap.values.resize(snap.grid.size());
  for (std::size_t n = 0; n < snap.values.size(); ++n) {
    std::size_t at = kHeaderSize + n * stride;
    double re = get_f64(bytes, at);
    double im = snap.is_complex ? get_f64(bytes, at + 8) : 0.0;
    if (!std::isfinite(re) || !std::isfinite(im)) fail(Error::Code::Io, "non-finite value in SPKF payload");
    snap.values[n] = {re, im};
  }
  return snap;
}

void write_snapshot(const std::string& path, const ComplexField3& u) {
  write_bytes(path, encode_snapshot({u.grid(), true, u.storage()}));
}

void write_snapshot(const std::string& path, const RealField3& u) {
  Snapshot snap{u.grid(), false, {}};
  snap.values.assign(u.storage().begin(), u.storage().end());
  write_bytes(path, encode_snapshot(snap));
}

Snapshot read_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Error::Code::Io, "cannot open snapshot: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_snapshot(bytes);
}

ComplexField3 read_complex_snapshot(const std::string& path) {
  Snapshot snap = read_snapshot(path);
  return ComplexField3(snap.grid, std::move(snap.values));
}

}  // namespace spikemap
