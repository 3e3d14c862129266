#include <cstdio>
#include <filesystem>

#include "core/fields.hpp"
#include "core/magnetic.hpp"
#include "doctest.h"

using namespace spikemap;

namespace {

template <class T, class Fn>
double max_interior_error(const Field3<T>& f, int layers, Fn&& exact) {
  const Grid3& g = f.grid();
  double err = 0.0;
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i) {
        if (g.in_shell(i, j, k, layers)) continue;
        err = std::max(err, std::abs(f.at(i, j, k) - exact(g.point(i, j, k))));
      }
  return err;
}

double sin_gradient_error(int n) {
  Grid3 g = Grid3::cube(n, 1.5);
  auto f = RealField3::sample(g, [](const Vec3& x) { return std::sin(x[0]); });
  auto grad = gradient(f);
  return max_interior_error(grad.component[0], 1, [](const Vec3& x) { return std::cos(x[0]); });
}

double gaussian_laplacian_error(int n) {
  Grid3 g = Grid3::cube(n, 3.0);
  auto f = RealField3::sample(g, [](const Vec3& x) { return std::exp(-dot(x, x)); });
  auto lap = laplacian(f);
  return max_interior_error(lap, 1, [](const Vec3& x) {
    double r2 = dot(x, x);
    return (4.0 * r2 - 6.0) * std::exp(-r2);
  });
}

}  // namespace

TEST_CASE("grid geometry") {
  Grid3 g = Grid3::cube(11, 5.0, {1.0, 0.0, -1.0});
  CHECK(g.spacing == doctest::Approx(1.0));
  CHECK(g.point(0, 5, 10)[0] == doctest::Approx(-4.0));
  CHECK(g.point(0, 5, 10)[2] == doctest::Approx(4.0));
  CHECK(g.size() == 1331u);
  Grid3 bad = g;
  bad.dims = {4, 8, 8};
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = g;
  bad.spacing = 0.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("gradient: constants, affine exactness, second-order refinement") {
  Grid3 g = Grid3::cube(12, 2.0);
  auto c = RealField3(g, 3.0);
  auto gc = gradient(c);
  for (int a = 0; a < 3; ++a) CHECK(max_interior_error(gc.component[a], 0, [](const Vec3&) { return 0.0; }) == 0.0);

  auto f = ComplexField3::sample(g, [](const Vec3& x) { return cplx(x[0], 0.0); });
  auto gf = gradient(f);
  CHECK(max_interior_error(gf.component[0], 0, [](const Vec3&) { return cplx(1.0); }) < 1e-12);
  CHECK(max_interior_error(gf.component[1], 0, [](const Vec3&) { return cplx(0.0); }) < 1e-12);

  // Refinement oracle: halving h divides the error by about four.
  double e1 = sin_gradient_error(31), e2 = sin_gradient_error(61);
  double order = std::log2(e1 / e2);
  CHECK(order == doctest::Approx(2.0).epsilon(0.05));
  double C = e1 / std::pow(Grid3::cube(31, 1.5).spacing, 2);
  CHECK(sin_gradient_error(16) <= 1.1 * C * std::pow(Grid3::cube(16, 1.5).spacing, 2));
}

TEST_CASE("laplacian: quadratic exactness and refinement") {
  Grid3 g = Grid3::cube(10, 2.0);
  auto f = RealField3::sample(g, [](const Vec3& x) { return dot(x, x); });
  auto lap = laplacian(f);
  CHECK(max_interior_error(lap, 0, [](const Vec3&) { return 6.0; }) < 1e-10);
  auto c = laplacian(RealField3(g, 2.0));
  CHECK(max_interior_error(c, 0, [](const Vec3&) { return 0.0; }) == 0.0);

  double e1 = gaussian_laplacian_error(25), e2 = gaussian_laplacian_error(49);
  CHECK(std::log2(e1 / e2) == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("covariant derivative") {
  Grid3 g = Grid3::cube(16, 2.0);
  auto u = ComplexField3::sample(g, [](const Vec3& x) { return cplx(std::exp(-dot(x, x)), 0.5 * x[1]); });
  RealVectorField3 zero{{RealField3(g), RealField3(g), RealField3(g)}};
  auto d0 = covariant_derivative(u, zero, 0.7);
  auto grad = gradient(u);
  for (int a = 0; a < 3; ++a)
    for (std::size_t n = 0; n < g.size(); ++n)
      CHECK(std::abs(d0.component[a][n] - 0.7 / cplx(0.0, 1.0) * grad.component[a][n]) < 1e-14);

  const Vec3 a{0.3, -1.0, 2.0};
  RealVectorField3 A{{RealField3(g, a[0]), RealField3(g, a[1]), RealField3(g, a[2])}};
  auto dc = covariant_derivative(ComplexField3(g, cplx(1.5)), A, 1.0);
  for (int k = 0; k < 3; ++k) CHECK(std::abs(dc.component[k][100] + a[k] * 1.5) < 1e-14);

  // Plane wave exp(i A.x) with matching constant A: D u vanishes up to the stencil error.
  auto pw = [&](int n) {
    Grid3 gg = Grid3::cube(n, 2.0);
    auto w = ComplexField3::sample(gg, [&](const Vec3& x) { return std::exp(cplx(0.0, dot(a, x))); });
    RealVectorField3 AA{{RealField3(gg, a[0]), RealField3(gg, a[1]), RealField3(gg, a[2])}};
    auto d = covariant_derivative(w, AA, 1.0);
    double m = 0.0;
    for (int k = 0; k < 3; ++k) m = std::max(m, max_interior_error(d.component[k], 1, [](const Vec3&) { return cplx(0.0); }));
    return m;
  };
  double e1 = pw(21), e2 = pw(41);
  CHECK(e2 < 0.02);
  CHECK(std::log2(e1 / e2) == doctest::Approx(2.0).epsilon(0.1));

  RealVectorField3 other{{RealField3(Grid3::cube(12, 2.0)), RealField3(Grid3::cube(12, 2.0)),
                          RealField3(Grid3::cube(12, 2.0))}};
  CHECK_THROWS_AS(covariant_derivative(u, other, 1.0), GridMismatchError);
}

TEST_CASE("quadrature") {
  Grid3 g = Grid3::cube(9, 4.0);
  CHECK(integral(RealField3(g, 1.0)) == doctest::Approx(g.box_volume()).epsilon(1e-14));

  Grid3 gg = Grid3::cube(81, 8.0);
  auto gauss = RealField3::sample(gg, [](const Vec3& x) { return std::exp(-dot(x, x)); });
  Quadrature q = integrate(gauss);
  CHECK(std::abs(q.value - std::pow(M_PI, 1.5)) < 1e-8);
  CHECK_FALSE(q.boundary_warning);

  auto odd = RealField3::sample(gg, [](const Vec3& x) { return x[0] * std::exp(-dot(x, x)); });
  CHECK(std::abs(integral(odd)) < 1e-14);

  // Linearity and positivity.
  auto h = RealField3::sample(gg, [](const Vec3& x) { return 1.0 / (1.0 + dot(x, x)); });
  RealField3 mix(gg);
  for (std::size_t n = 0; n < gg.size(); ++n) mix[n] = 2.0 * gauss[n] - 3.0 * h[n];
  CHECK(integral(mix) == doctest::Approx(2.0 * integral(gauss) - 3.0 * integral(h)).epsilon(1e-11));
  CHECK(integral(h) > 0.0);

  // A slowly decaying field trips the boundary warning.
  CHECK(integrate(h).boundary_warning);
}

TEST_CASE("h norm") {
  ModelSpec unit;
  Grid3 g = Grid3::cube(24, 6.0);
  CHECK(h_norm_squared(ComplexField3(g), unit, 1.0) == 0.0);

  // Real u = exp(-|x|^2 / 2), A = 0, V = 1: the standard H1 norm in closed form.
  Grid3 fine = Grid3::cube(40, 6.0);
  auto u = ComplexField3::sample(fine, [](const Vec3& x) { return cplx(std::exp(-0.5 * dot(x, x))); });
  const double mass = std::pow(M_PI, 1.5);           // int exp(-|x|^2)
  const double kinetic = 1.5 * std::pow(M_PI, 1.5);  // int |x|^2 exp(-|x|^2)
  CHECK(h_norm_squared(u, unit, 1.0) == doctest::Approx(kinetic + mass).epsilon(1e-3));

  // Bounded below by V0 int |u|^2 for a magnetic model.
  ModelSpec m;
  m.V = PotentialExpr::parse("2 + x1^2");
  m.A = {PotentialExpr::parse("-x2"), PotentialExpr::parse("x1"), PotentialExpr::constant(0.0)};
  auto w = ComplexField3::sample(g, [](const Vec3& x) { return std::exp(cplx(-0.5 * dot(x, x), x[0] - x[2])); });
  CHECK(h_norm_squared(w, m, 0.5) >= 2.0 * integral(modulus_squared(w)));
}

TEST_CASE("snapshot round trip") {
  Grid3 g = Grid3::cube(8, 1.0, {0.5, -0.25, 2.0});
  auto u = ComplexField3::sample(g, [](const Vec3& x) { return cplx(x[0], x[1] * x[2]); });
  auto path = (std::filesystem::temp_directory_path() / "spikemap_test_snapshot.spkf").string();
  write_snapshot(path, u);
  ComplexField3 v = read_complex_snapshot(path);
  CHECK(v.grid() == g);
  for (std::size_t n = 0; n < g.size(); ++n) CHECK(v[n] == u[n]);
  std::remove(path.c_str());

  Snapshot s{g, true, u.storage()};
  auto bytes = encode_snapshot(s);
  REQUIRE(bytes.size() == 64 + 16 * g.size());
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "SPKF");
  bytes[0] = 'X';
  CHECK_THROWS_AS(decode_snapshot(bytes), Error);
}
