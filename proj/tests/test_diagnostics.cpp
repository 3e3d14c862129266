#include "core/diagnostics.hpp"
#include "core/landscape.hpp"
#include "doctest.h"

using namespace spikemap;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

ModelSpec trap_model() {
  ModelSpec m;
  m.V = PotentialExpr::parse("1 + 0.5*r2");
  m.K = PotentialExpr::parse("1 + 0.5*exp(-dist2(1, 0, 0))");
  m.A = {PotentialExpr::parse("-0.5*x2"), PotentialExpr::parse("0.5*x1"), PotentialExpr::constant(0.0)};
  m.nonlinearity = Nonlinearity::power(1.0, 2.0);
  return m;
}

ModelSpec constant_A(const Vec3& a) {
  ModelSpec m;
  m.A = {PotentialExpr::constant(a[0]), PotentialExpr::constant(a[1]), PotentialExpr::constant(a[2])};
  return m;
}

ComplexField3 twisted(const RealField3& w, const Vec3& a, double eps = 1.0, const Vec3& z0 = {0.0, 0.0, 0.0}) {
  const Grid3& g = w.grid();
  ComplexField3 out(g);
  for (std::size_t n = 0; n < g.size(); ++n) out[n] = std::exp(cplx(0.0, dot(a, g.point(n) - z0) / eps)) * w[n];
  return out;
}

RealField3 ground_state(const Grid3& g, double V = 1.0, double K = 1.0, double p = 3.0) {
  GroundStateResult d;
  RealField3 w = gradient_flow_3d_real(FrozenPoint::constant(V, K), Nonlinearity::power(1.0, p), g, &d);
  REQUIRE(d.converged);
  return w;
}

ComplexField3 as_complex(const RealField3& w) {
  ComplexField3 out(w.grid());
  for (std::size_t n = 0; n < w.size(); ++n) out[n] = w[n];
  return out;
}

}  // namespace

TEST_CASE("diamagnetic check") {
  Grid3 g = Grid3::cube(24, 6.0);
  ModelSpec unit;
  auto w = RealField3::sample(g, [](const Vec3& x) { return std::exp(-0.5 * dot(x, x)); });
  CHECK(std::abs(diamagnetic_check(as_complex(w), unit, 1.0).min_slack) < 1e-14);

  // A phase twist with A = 0 adds |a| w to |D u| on top of |grad w|.
  DiamagneticResult t = diamagnetic_check(twisted(w, {0.6, 0.0, 0.8}), unit, 1.0);
  CHECK(t.min_slack >= 0.0);
  CHECK(t.nodes > 0u);

  ModelSpec m = trap_model();
  MagneticSolveConfig c;
  c.grid = Grid3::cube(32, 5.0);
  MagneticSolution s = solve_magnetic(m, c);
  REQUIRE(s.converged);
  CHECK(diamagnetic_check(s.u, m, s.eps).min_slack >= -1e-10);
}

TEST_CASE("current density") {
  Grid3 g = Grid3::cube(41, 5.0);
  auto w = RealField3::sample(g, [](const Vec3& x) { return std::exp(-0.5 * dot(x, x)); });
  CurrentDensity real = current_density(as_complex(w));
  CHECK(real.sup_normalized == 0.0);

  const Vec3 a{0.3, -0.2, 0.5};
  CurrentDensity j = current_density(twisted(w, a));
  CHECK(j.sup_normalized > 0.1);
  // Re(i conj(U) grad U) = -a w^2 up to the stencil error of the phase derivative.
  const int c = 20;
  const double w0 = w.at(c, c, c);
  for (int k = 0; k < 3; ++k)
    CHECK(j.field.component[k].at(c, c, c) == doctest::Approx(-a[k] * w0 * w0).epsilon(2e-2));

  ModelSpec m = trap_model();
  const Vec3 z{0.5, -0.3, 0.2};
  MagneticSolution s = solve_frozen_magnetic(z, m, Grid3::cube(40, 11.0));
  REQUIRE(s.converged);
  CHECK(current_density(phase_factor_split(s.u, z, m).U).sup_normalized < 1e-6);
}

TEST_CASE("pucci-serrin residual") {
  // All-constant coefficients: every term vanishes.
  Grid3 g = Grid3::cube(24, 8.0);
  RealField3 w = ground_state(g);
  IdentityResidual zero = pucci_serrin_residual(twisted(w, {0.3, 0.1, 0.0}), {0.0, 0.0, 0.0}, 1.0, constant_A({0.3, 0.1, 0.0}));
  CHECK(norm(zero.residual) == 0.0);

  // Rescaled solver output: small, shrinking under refinement, and sensitive to noise.
  ModelSpec m = trap_model();
  auto run = [&](int n) {
    MagneticSolveConfig c;
    c.grid = Grid3::cube(n, 5.0);
    MagneticSolution s = solve_magnetic(m, c);
    REQUIRE(s.converged);
    return s;
  };
  MagneticSolution coarse = run(32), fine = run(48);
  const double r_coarse = pucci_serrin_residual(rescale(coarse, coarse.spike), coarse.spike, 1.0, m).relative;
  const double r_fine = pucci_serrin_residual(rescale(fine, fine.spike), fine.spike, 1.0, m).relative;
  CHECK(r_fine < 1e-2);
  const double order = std::log(r_coarse / r_fine) / std::log(coarse.u.grid().spacing / fine.u.grid().spacing);
  CHECK(order >= 1.5);

  ComplexField3 noisy = add_noise(fine.u, 0.05, 3);
  MagneticSolution perturbed = fine;
  perturbed.u = noisy;
  const double r_noisy = pucci_serrin_residual(rescale(perturbed, fine.spike), fine.spike, 1.0, m).relative;
  CHECK(r_noisy >= 10.0 * r_fine);

  // Mass on the box boundary is refused.
  auto flat = ComplexField3::sample(Grid3::cube(16, 2.0), [](const Vec3&) { return cplx(1.0); });
  CHECK_THROWS_AS(pucci_serrin_residual(flat, {0.0, 0.0, 0.0}, 1.0, m), Error);
}

TEST_CASE("limit identity residual") {
  ModelSpec m = trap_model();
  m.nonlinearity = Nonlinearity::power(1.0, 3.0);
  Grid3 g = Grid3::cube(40, 9.0);

  // Critical coefficients at z: residual zero whatever A' is.
  ModelSpec flat;
  flat.A = m.A;
  RealField3 w = ground_state(g);
  CHECK(norm(limit_identity_residual(as_complex(w), {0.3, 0.2, 0.1}, flat).residual) == 0.0);

  // Real profile: the bracket is the gradient of the explicit map.
  for (Vec3 z : {Vec3{0.4, 0.0, 0.0}, Vec3{0.8, -0.6, 0.3}}) {
    RadialProfile prof = shoot_radial(FrozenPoint::at(m, z), m.nonlinearity);
    IdentityResidual r = limit_identity_residual(prof, z, m);
    Vec3 grad = sigma_r_explicit(z, m).grad_sigma;
    for (int k = 0; k < 3; ++k)
      CHECK(std::abs(r.residual[k] - grad[k]) <= 1e-4 * std::max(norm(grad), 1e-12));
  }

  // Phase twist: the A' term adds -<dA/dx_k, a> int U^2.
  const Vec3 z{0.5, 0.5, 0.0};
  FrozenPoint pt = FrozenPoint::at(m, z);
  RealField3 wz = ground_state(g, pt.Vz, pt.Kz);
  const Vec3 a{0.2, -0.4, 0.1};
  IdentityResidual base = limit_identity_residual(as_complex(wz), z, m);
  IdentityResidual tw = limit_identity_residual(twisted(wz, a), z, m);
  // Integrated current of exp(i a.x) w under the fourth-order central stencil, by hand:
  // -(8 sin(a h) w_n (w_{n+1} + w_{n-1}) - sin(2 a h) w_n (w_{n+2} + w_{n-2})) / (12 h) per axis.
  const double h = g.spacing;
  Vec3 J{};
  for (int k = 2; k < g.dims[2] - 2; ++k)
    for (int j = 2; j < g.dims[1] - 2; ++j)
      for (int i = 2; i < g.dims[0] - 2; ++i) {
        const int idx[3] = {i, j, k};
        for (int ax = 0; ax < 3; ++ax) {
          auto at = [&](int off) {
            int q[3] = {idx[0], idx[1], idx[2]};
            q[ax] += off;
            return wz.at(q[0], q[1], q[2]);
          };
          const double wn = at(0);
          J[ax] -= (8.0 * std::sin(a[ax] * h) * wn * (at(1) + at(-1)) -
                    std::sin(2.0 * a[ax] * h) * wn * (at(2) + at(-2))) / (12.0 * h);
        }
      }
  J = g.cell_volume() * J;
  CoefficientSample c = m.sample(z);
  for (int k = 0; k < 3; ++k) {
    double expected = 0.0;
    for (int j = 0; j < 3; ++j) expected += c.dA[j][k] * J[j];
    CHECK(std::abs(tw.residual[k] - base.residual[k] - expected) <= 1e-6 * std::max(1.0, std::abs(expected)));
  }
  // Continuum value -<dA/dx_k, a> int w^2, approached as h -> 0.
  RealField3 w2(g);
  for (std::size_t n = 0; n < g.size(); ++n) w2[n] = wz[n] * wz[n];
  const double mass = integral(w2);
  for (int ax = 0; ax < 3; ++ax) CHECK(J[ax] == doctest::Approx(-a[ax] * mass).epsilon(0.2));
}

TEST_CASE("decay fit") {
  // Synthetic Yukawa tail exp(-alpha r) / (1 + r).
  const double alpha = 1.3;
  RadialProfile syn;
  syn.dr = 0.01;
  for (int j = 0; j <= 3000; ++j) {
    double r = j * syn.dr;
    syn.u.push_back(std::exp(-alpha * r) / (1.0 + r));
    syn.du.push_back(-(alpha + 1.0 / (1.0 + r)) * syn.u.back());
  }
  syn.alpha = 1.0;
  syn.tail_start = syn.r_max();
  DecayFit f = decay_fit(syn, 8.0, 18.0);
  CHECK(rel(f.corrected_rate, alpha) < 1e-2);
  CHECK(f.samples == 256u);
  CHECK_THROWS_AS(decay_fit(syn, 5.0, 5.0), Error);

  for (double V : {1.0, 2.5}) {
    RadialProfile w = shoot_radial(FrozenPoint::constant(V, 1.0), Nonlinearity::power(1.0, 3.0));
    auto [r1, r2] = default_decay_window(w);
    DecayFit d = decay_fit(w, r1, r2);
    CHECK(rel(d.corrected_rate, std::sqrt(V)) < 0.02);
  }

  // Solver output respects the lower rate sqrt(V0 / 2).
  ModelSpec m = trap_model();
  MagneticSolveConfig c;
  c.grid = Grid3::cube(48, 10.0);
  MagneticSolution s = solve_magnetic(m, c);
  REQUIRE(s.converged);
  auto [r1, r2] = default_decay_window(s.u, s.spike);
  DecayFit d = decay_fit(s.u, s.spike, r1, r2);
  CHECK(d.samples > 0u);
  CHECK(d.raw_rate >= std::sqrt(0.5) * 0.95);
  CHECK(d.corrected_rate >= std::sqrt(0.5) * 0.95);
}

TEST_CASE("directional derivative of the ground-energy map") {
  ModelSpec flat;
  DirectionalDerivative d0 = directional_derivative_sigma({1.0, 2.0, 3.0}, {1.0, 0.0, 0.0}, flat);
  CHECK(d0.left == 0.0);
  CHECK(d0.right == 0.0);

  ModelSpec m = trap_model();
  for (double p : {2.0, 3.0}) {
    m.nonlinearity = Nonlinearity::power(1.0, p);
    const Vec3 z{0.7, -0.2, 0.4};
    const Vec3 w = (1.0 / std::sqrt(3.0)) * Vec3{1.0, 1.0, -1.0};
    DirectionalDerivative d = directional_derivative_sigma(z, w, m);
    CHECK(d.left >= d.right);
    const double exact = dot(sigma_r_explicit(z, m).grad_sigma, w);
    CHECK(rel(d.left, exact) < 1e-4);
    // Central difference of the shooting map.
    const double h = 1e-4;
    const double fd = (sigma_r(FrozenPoint::at(m, z + h * w), m.nonlinearity).sigma -
                       sigma_r(FrozenPoint::at(m, z - h * w), m.nonlinearity).sigma) / (2.0 * h);
    CHECK(std::abs(fd - d.left) < 1e-3 * std::max(1.0, std::abs(d.left)));
  }
}

TEST_CASE("clarke critical test") {
  // Smooth strict minimum.
  auto bowl = [](const Vec3& z) { return 1.0 + dot(z, z); };
  ClarkeVerdict min = clarke_critical_test({0.0, 0.0, 0.0}, bowl);
  CHECK(min.member);
  CHECK(min.margin > 0.0);

  // Smooth non-critical point of the explicit map: margin close to -|grad|.
  ModelSpec m = trap_model();
  const Vec3 z{0.6, 0.3, -0.2};
  ClarkeVerdict v = clarke_critical_test(z, m);
  const double g = norm(sigma_r_explicit(z, m).grad_sigma);
  CHECK_FALSE(v.member);
  REQUIRE(v.smooth_member.has_value());
  CHECK_FALSE(*v.smooth_member);
  CHECK(v.margin <= -0.9 * g);
  CHECK(v.margin >= -1.05 * g);

  // Max of two sheets at the crossing: member exactly when 0 lies between the sheet gradients.
  auto quad = [](const Vec3& z) { return z[1] * z[1] + z[2] * z[2]; };
  auto kink = [&](double s1, double s2) {
    return [=](const Vec3& z) { return std::max(s1 * z[0], s2 * z[0]) + quad(z); };
  };
  CHECK(clarke_critical_test({0.0, 0.0, 0.0}, kink(1.0, -2.0)).member);
  CHECK(clarke_critical_test({0.0, 0.0, 0.0}, kink(-0.5, 3.0)).member);
  ClarkeVerdict no = clarke_critical_test({0.0, 0.0, 0.0}, kink(1.0, 2.0));
  CHECK_FALSE(no.member);
  CHECK(no.margin == doctest::Approx(-1.0).epsilon(1e-2));
}

TEST_CASE("gamma bounds") {
  ModelSpec m = trap_model();
  m.nonlinearity = Nonlinearity::power(1.0, 3.0);
  Grid3 g = Grid3::cube(32, 8.0);
  const Vec3 z{0.6, 0.2, 0.0};
  const Vec3 w = (1.0 / std::sqrt(2.0)) * Vec3{1.0, 0.0, 1.0};
  FrozenPoint pt = FrozenPoint::at(m, z);
  RealField3 wz = ground_state(g, pt.Vz, pt.Kz);

  // Constant-phase orbit of one member: a single value.
  ComplexField3 U = twisted(wz, {0.2, 0.1, -0.3});
  GammaPM orbit = gamma_pm(z, w, m, {U}, 16);
  CHECK(orbit.gamma_minus == doctest::Approx(orbit.gamma_plus).epsilon(1e-12));
  CHECK(orbit.phase_spread <= 1e-12 * std::max(1.0, std::abs(orbit.gamma_minus)));

  // Real member: the bracket has no current term.
  RealField3 w2(g), Fw(g);
  for (std::size_t n = 0; n < g.size(); ++n) {
    w2[n] = wz[n] * wz[n];
    Fw[n] = m.nonlinearity.F(w2[n]);
  }
  CoefficientSample c = m.sample(z);
  const double expected = 0.5 * dot(c.gradV, w) * integral(w2) - dot(c.gradK, w) * integral(Fw);
  CHECK(gamma_bracket(as_complex(wz), z, w, m) == doctest::Approx(expected).epsilon(1e-12));

  // At the critical point of the explicit map both bounds vanish.
  ModelSpec bump;
  bump.V = PotentialExpr::parse("1 + r2");
  bump.K = PotentialExpr::parse("1 + 0.5*exp(-dist2(1, 0, 0))");
  bump.A = m.A;
  const Vec3 zc{0.360356720155, 0.0, 0.0};
  CHECK(norm(sigma_r_explicit(zc, bump).grad_sigma) < 1e-9);
  RadialProfile prof = shoot_radial(FrozenPoint::at(bump, zc), bump.nonlinearity);
  IdentityResidual scale = limit_identity_residual(prof, zc, bump);
  const double top = std::max(scale.scale[0], std::max(scale.scale[1], scale.scale[2]));
  std::vector<ComplexField3> members = radial_solutions(bump)(zc);
  for (const Vec3& d : direction_net(0, 1)) {
    GammaPM gp = gamma_pm(zc, d, bump, members);
    CHECK(std::abs(gp.gamma_minus) < 1e-4 * top);
    CHECK(std::abs(gp.gamma_plus) < 1e-4 * top);
  }
}

TEST_CASE("concentration metrics on a manufactured family") {
  // Constant coefficients and u_eps(x) = w((x - z0) / eps) exp(i a.(x - z0) / eps) on grids that
  // scale with eps: every member is the same lattice field, so both metrics sit at the
  // discretization floor for all eps.
  const Vec3 a{0.3, 0.0, -0.2};
  ModelSpec m = constant_A(a);
  const Vec3 z0{0.5, -0.5, 0.25};
  RadialProfile w = shoot_radial(FrozenPoint::constant(1.0, 1.0), m.nonlinearity);
  std::vector<MagneticSolution> family;
  const double eps_list[] = {1.0, 0.5, 0.25};
  for (double eps : eps_list) {
    Grid3 g = Grid3::cube(49, 8.0 * eps, z0);
    ComplexField3 u(g);
    for (std::size_t n = 0; n < g.size(); ++n) {
      Vec3 y = (1.0 / eps) * (g.point(n) - z0);
      u[n] = std::exp(cplx(0.0, dot(a, y))) * w.value_at(norm(y));
    }
    MagneticSolution s;
    s.u = u;
    s.eps = eps;
    s.energy_J = energy_J(u, m, eps);
    s.scaled_energy = s.energy_J / (eps * eps * eps);
    s.spike = spike_location(u);
    family.push_back(std::move(s));
  }
  ConcentrationStudy st = concentration_metrics(family, z0, m);
  CHECK(st.sigma_at_target == doctest::Approx(canonical_energy(3.0)).epsilon(1e-12));
  for (const auto& row : st.rows) CHECK(row.value_at_target == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(st.energy_gap_decreasing);
  for (const auto& row : st.rows) {
    CHECK(row.energy_gap < 0.02 * st.sigma_at_target);
    CHECK(row.energy_gap == doctest::Approx(st.rows.front().energy_gap).epsilon(1e-10));
    CHECK(row.tail.back() < 1e-4);
  }
  CHECK(st.energy_concentrates);
  CHECK(st.pointwise_concentrates);

  // Far from the spike the pointwise metric fails.
  ConcentrationStudy far = concentration_metrics(family, z0 + Vec3{2.0, 0.0, 0.0}, m);
  CHECK_FALSE(far.pointwise_concentrates);
  CHECK(far.rows.back().value_at_target < 1e-3);

  // Scaled energies measured against the wrong sigma: only the energetic verdict fails.
  ModelSpec deeper = m;
  deeper.V = PotentialExpr::constant(4.0);
  ConcentrationStudy off = concentration_metrics(family, z0, deeper);
  CHECK(off.sigma_at_target == doctest::Approx(2.0 * canonical_energy(3.0)).epsilon(1e-12));
  CHECK_FALSE(off.energy_concentrates);
  CHECK(off.pointwise_concentrates);

  // Tails that thicken as eps shrinks but stay uniformly small still concentrate.
  std::vector<MagneticSolution> thick = family;
  for (MagneticSolution& s : thick) {
    const Grid3& g = s.u.grid();
    for (std::size_t n = 0; n < g.size(); ++n) {
      const double y = norm(g.point(n) - z0) / s.eps;
      s.u[n] *= std::exp(-0.05 * s.eps * y * y);
    }
  }
  ConcentrationStudy th = concentration_metrics(thick, z0, m);
  CHECK_FALSE(th.tail_decreasing);
  CHECK(th.pointwise_concentrates);

  std::vector<MagneticSolution> wrong{family[1], family[0]};
  CHECK_THROWS_AS(concentration_metrics(wrong, z0, m), Error);
}

TEST_CASE("diagnose and noise") {
  Grid3 g = Grid3::cube(16, 3.0);
  auto u = ComplexField3::sample(g, [](const Vec3& x) { return cplx(std::exp(-dot(x, x))); });
  ComplexField3 a = add_noise(u, 0.1, 42), b = add_noise(u, 0.1, 42), c = add_noise(u, 0.1, 43);
  double d = 0.0, e = 0.0;
  for (std::size_t n = 0; n < g.size(); ++n) {
    d = std::max(d, std::abs(a[n] - b[n]));
    e = std::max(e, std::abs(a[n] - c[n]));
  }
  CHECK(d == 0.0);
  CHECK(e > 0.0);
  ComplexField3 none = add_noise(u, 0.0, 42);
  for (std::size_t n = 0; n < g.size(); ++n) REQUIRE(none[n] == u[n]);

  ModelSpec m = trap_model();
  MagneticSolveConfig cfg;
  cfg.grid = Grid3::cube(40, 5.0);
  MagneticSolution s = solve_magnetic(m, cfg);
  REQUIRE(s.converged);
  DiagnosticsReport clean = diagnose(s.u, m, s.eps);
  CHECK(clean.failures().empty());
  DiagnosticsReport noisy = diagnose(add_noise(s.u, 0.25, 5), m, s.eps);
  auto f = noisy.failures();
  CHECK(std::find(f.begin(), f.end(), "residual") != f.end());
  CHECK(std::find(f.begin(), f.end(), "pucci_serrin") != f.end());
}
