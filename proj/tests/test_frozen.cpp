#include "core/frozen.hpp"
#include "core/lattice.hpp"
#include "core/magnetic.hpp"
#include "doctest.h"

using namespace spikemap;

namespace {

RadialProfile scaled(RadialProfile w, double c) {
  for (auto& v : w.u) v *= c;
  for (auto& v : w.du) v *= c;
  w.tail_C *= c;
  w.tail_D *= c;
  w.alpha *= c;
  return w;
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

}  // namespace

TEST_CASE("shooting: unit profile is Richardson consistent") {
  Nonlinearity nl = Nonlinearity::power(1.0, 3.0);
  RadialProfile w = shoot_radial(FrozenPoint::constant(1.0, 1.0), nl);
  ShootingOptions fine;
  fine.dr_scale *= 0.5;
  RadialProfile w2 = shoot_radial(FrozenPoint::constant(1.0, 1.0), nl, fine);
  CHECK(w.alpha > 0.0);
  CHECK(w.bracket_width < 1e-12);
  CHECK(w.residual_rms < 1e-8);
  CHECK(rel(w.alpha, w2.alpha) < 1e-6);
  CHECK(rel(w.energy, w2.energy) < 1e-6);
  // Positive and decreasing, negligible at the end of the grid.
  for (std::size_t j = 1; j < w.n(); ++j) {
    REQUIRE(w.u[j] > 0.0);
    REQUIRE(w.u[j] < w.u[j - 1]);
  }
  CHECK(w.value_at(w.r_max()) < 1e-10 * w.alpha);
  CHECK(w.du[0] == 0.0);
}

TEST_CASE("shooting: scaling laws") {
  for (double p : {2.0, 3.0, 4.0}) {
    Nonlinearity nl = Nonlinearity::power(1.0, p);
    RadialProfile w = shoot_radial(FrozenPoint::constant(1.0, 1.0), nl);
    // u = (V/K)^(1/(p-1)) w(sqrt(V) x)
    RadialProfile u4 = shoot_radial(FrozenPoint::constant(4.0, 1.0), nl);
    CHECK(rel(u4.alpha, std::pow(4.0, 1.0 / (p - 1.0)) * w.alpha) < 1e-6);
    CHECK(rel(u4.value_at(0.5), std::pow(4.0, 1.0 / (p - 1.0)) * w.value_at(1.0)) < 1e-6);
    RadialProfile k2 = shoot_radial(FrozenPoint::constant(1.0, 2.0), nl);
    CHECK(rel(k2.alpha, std::pow(0.5, 1.0 / (p - 1.0)) * w.alpha) < 1e-6);
    CHECK(rel(k2.energy, std::pow(2.0, -2.0 / (p - 1.0)) * w.energy) < 1e-6);
  }
}

TEST_CASE("nehari projection") {
  Nonlinearity nl = Nonlinearity::power(1.0, 3.0);
  FrozenPoint pt = FrozenPoint::constant(1.5, 0.8);
  RadialProfile w = shoot_radial(pt, nl);
  CHECK(nehari_project(w, pt, nl) == doctest::Approx(1.0).epsilon(1e-8));

  RadialProfile trial = scaled(w, 1.7);
  double closed = nehari_project(trial, pt, nl);
  double bisect = nehari_project(trial, pt, nl, true);
  CHECK(rel(bisect, closed) < 1e-10);
  CHECK(closed == doctest::Approx(1.0 / 1.7).epsilon(1e-8));
  CHECK(nehari_project(scaled(w, 2.0), pt, nl) == doctest::Approx(0.5).epsilon(1e-8));

  NehariTerms none;
  none.quadratic = 1.0;
  none.nonlinear = [](double) { return 0.0; };
  CHECK_THROWS_AS(nehari_scale(none, Nonlinearity::custom([](double s) { return s; }, [](double s) { return s * s / 4; }, 4.0), true),
                  Error);
}

TEST_CASE("canonical energy") {
  double E3 = canonical_energy(3.0);
  for (double p : {2.0, 3.0, 4.0}) CHECK(canonical_energy(p) > 0.0);
  for (double p : {2.0, 3.0, 4.0})
    CHECK(rel(canonical_energy(p, 2.5), std::pow(2.5, -2.0 / (p - 1.0)) * canonical_energy(p)) < 1e-6);
  ShootingOptions fine;
  fine.dr_scale *= 0.5;
  GroundEnergySample s = sigma_r(FrozenPoint::constant(1.0, 1.0), Nonlinearity::power(1.0, 3.0), fine);
  CHECK(rel(s.sigma, E3) < 1e-6);
}

TEST_CASE("sigma_r examples and explicit map") {
  Nonlinearity nl = Nonlinearity::power(1.0, 3.0);
  double E3 = canonical_energy(3.0);
  CHECK(rel(sigma_r(FrozenPoint::constant(1.0, 1.0), nl).sigma, E3) < 1e-6);
  CHECK(rel(sigma_r(FrozenPoint::constant(4.0, 1.0), nl).sigma, 2.0 * E3) < 1e-6);
  CHECK(rel(sigma_r(FrozenPoint::constant(1.0, 2.0), nl).sigma, 0.5 * E3) < 1e-6);

  ModelSpec unit;
  GroundEnergySample e = sigma_r_explicit({3.0, -1.0, 2.0}, unit);
  CHECK(rel(e.sigma, E3) < 1e-14);
  CHECK(norm(e.grad_sigma) == 0.0);

  ModelSpec m;
  m.V = PotentialExpr::parse("1 + 0.3*x1^2 + 0.1*sin(x2)");
  m.K = PotentialExpr::parse("1 + 0.5*exp(-dist2(1, 0, 0))");
  for (double p : {2.0, 3.0, 4.0}) {
    m.nonlinearity = Nonlinearity::power(1.0, p);
    for (Vec3 z : {Vec3{0.2, 0.1, 0.0}, Vec3{-1.0, 2.0, 0.5}, Vec3{1.3, -0.7, 0.2}}) {
      GroundEnergySample ex = sigma_r_explicit(z, m);
      GroundEnergySample sh = sigma_r(FrozenPoint::at(m, z), m.nonlinearity);
      CHECK(rel(sh.sigma, ex.sigma) < 1e-6);
      // Analytic gradient against central differences of the explicit map.
      for (int a = 0; a < 3; ++a) {
        Vec3 zp = z, zm = z;
        zp[a] += 1e-5;
        zm[a] -= 1e-5;
        double fd = (sigma_r_explicit(zp, m).sigma - sigma_r_explicit(zm, m).sigma) / 2e-5;
        CHECK(std::abs(ex.grad_sigma[a] - fd) < 1e-6 * std::max(1.0, std::abs(fd)));
      }
    }
  }

  ModelSpec custom;
  custom.nonlinearity = Nonlinearity::custom([](double s) { return s; }, [](double s) { return 0.25 * s * s; }, 4.0);
  CHECK_THROWS_AS(sigma_r_explicit({0.0, 0.0, 0.0}, custom), Error);
}

TEST_CASE("sigma monotone in V and K") {
  Nonlinearity nl = Nonlinearity::power(1.0, 3.0);
  const double Vs[] = {0.5, 1.0, 2.0, 4.0};
  const double Ks[] = {0.5, 1.0, 2.0};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = sigma_explicit_value(Vs[i], Ks[j], 3.0);
      if (i + 1 < 4) CHECK(sigma_explicit_value(Vs[i + 1], Ks[j], 3.0) > s);
      if (j + 1 < 3) CHECK(sigma_explicit_value(Vs[i], Ks[j + 1], 3.0) < s);
    }
}

TEST_CASE("custom f that is secretly a power matches the power path") {
  Nonlinearity secret = Nonlinearity::custom([](double s) { return std::sqrt(s); },
                                             [](double s) { return s * std::sqrt(s) / 3.0; }, 3.0);
  Nonlinearity power = Nonlinearity::power(1.0, 2.0);
  FrozenPoint pt = FrozenPoint::constant(1.7, 0.6);
  CHECK(rel(sigma_r(pt, secret).sigma, sigma_r(pt, power).sigma) < 1e-6);
}

TEST_CASE("constrained minimization and the identification") {
  Nonlinearity nl = Nonlinearity::power(1.0, 3.0);
  FrozenPoint pt = FrozenPoint::constant(1.3, 0.9);
  ConstrainedSigma c = constrained_sigma(pt, nl);
  GroundEnergySample s = sigma_r(pt, nl);
  CHECK(c.max_constraint_error < 1e-10);
  CHECK((c.T_initial - c.sigma_raw) / c.T_initial < 1e-6);
  CHECK(rel(c.sigma_identified, s.sigma) < 1e-4);
}

TEST_CASE("3D real flow against shooting") {
  Nonlinearity nl = Nonlinearity::power(1.0, 3.0);
  FrozenPoint pt = FrozenPoint::constant(1.0, 1.0);
  Grid3 g = Grid3::cube(48, 10.0);
  GroundStateResult details;
  RealField3 u = gradient_flow_3d_real(pt, nl, g, &details);
  CHECK(details.converged);
  CHECK(rel(details.energy, canonical_energy(3.0)) < 0.02);
  CHECK(details.nehari_slack < 1e-10);
  for (const auto& r : details.trace) REQUIRE(r.nehari_slack < 1e-10);
  // Symmetric under a quarter turn about the x3 axis.
  double diff = 0.0, top = 0.0;
  const int n = g.dims[0];
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        diff = std::max(diff, std::abs(u.at(i, j, k) - u.at(n - 1 - j, i, k)));
        top = std::max(top, std::abs(u.at(i, j, k)));
      }
  CHECK(diff / top < 1e-3);
}
