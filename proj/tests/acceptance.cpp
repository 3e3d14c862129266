// Acceptance suite: one PASS/FAIL line per criterion.
//   spikemap_acceptance [--slow]
// The concentration-trend criterion runs only with --slow or SPIKEMAP_ENABLE_SLOW_TESTS=1.
#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "core/diagnostics.hpp"
#include "core/landscape.hpp"
#include "core/parallel.hpp"

using namespace spikemap;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

struct Outcome {
  bool pass = true;
  std::vector<std::string> details;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    details.push_back(std::string(ok ? "" : "[x] ") + what);
  }
};

// Every solver output, for the criteria that range over all of them.
struct Output {
  std::string name;
  ComplexField3 u;
  ModelSpec model;
  double eps = 1.0;
};
std::vector<Output> g_outputs;

void log(const std::string& s) {
  std::fprintf(stderr, "  %s\n", s.c_str());
  std::fflush(stderr);
}

ModelSpec trap_model(double p) {
  ModelSpec m;
  m.V = PotentialExpr::parse("1 + 0.5*r2");
  m.K = PotentialExpr::parse("1 + 0.5*exp(-dist2(1, 0, 0))");
  m.A = {PotentialExpr::parse("-0.5*x2"), PotentialExpr::parse("0.5*x1"), PotentialExpr::constant(0.0)};
  m.nonlinearity = Nonlinearity::power(1.0, p);
  return m;
}

ModelSpec bump_model(double p = 3.0) {
  ModelSpec m;
  m.V = PotentialExpr::parse("1 + r2");
  m.K = PotentialExpr::parse("1 + 0.5*exp(-dist2(1, 0, 0))");
  m.nonlinearity = Nonlinearity::power(1.0, p);
  return m;
}

// 1. Shooting against the closed-form ground-energy map.
Outcome explicit_formula() {
  Outcome o;
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (double p : {2.0, 3.0, 4.0}) {
    const double E = canonical_energy(p);
    const double a = (5.0 - p) / (2.0 * p - 2.0), b = 2.0 / (p - 1.0);
    for (double V : {0.5, 1.0, 2.0, 4.0})
      for (double K : {0.5, 1.0, 2.0}) {
        const double shot = sigma_r(FrozenPoint::constant(V, K), Nonlinearity::power(1.0, p)).sigma;
        worst = std::max(worst, rel(shot, E * std::pow(V, a) * std::pow(K, -b)));
      }
  }
  const double t = seconds_since(t0);
  o.check(worst < 1e-6, fmt("max rel err %.2e < 1e-6 over 36 (V, K, p)", worst));
  o.check(t < 30.0, fmt("runtime %.1f s < 30 s", t));
  return o;
}

// 2 and 3. Frozen magnetic solves with non-zero constant A(z).
Outcome frozen_energy(Outcome& representation) {
  Outcome o;
  ModelSpec m = trap_model(3.0);
  const Vec3 z{0.5, -0.3, 0.2};
  const double sigma = sigma_r(FrozenPoint::at(m, z), m.nonlinearity).sigma;
  const double radius = 10.0 / std::sqrt(m.V.eval(z));
  double err48 = 0.0;
  for (int n : {48, 96}) {
    const auto t0 = Clock::now();
    MagneticSolution s = solve_frozen_magnetic(z, m, Grid3::cube(n, radius));
    log(fmt("frozen magnetic %d^3: %d iterations, %.1f s", n, s.iterations, seconds_since(t0)));
    const double e = rel(s.energy_J, sigma);
    if (n == 48) {
      o.check(s.converged && e < 0.02, fmt("48^3: rel gap to shooting %.2e < 2e-2", e));
      err48 = e;
    } else {
      o.check(s.converged && e < 0.005, fmt("96^3: rel gap %.2e < 5e-3", e));
      o.check(e < err48, fmt("gap shrinks under refinement (%.2e -> %.2e)", err48, e));
    }
    PhaseSplit split = phase_factor_split(s.u, z, m);
    const double j = current_density(split.U).sup_normalized;
    representation.check(j < 1e-6, fmt("%d^3 at z = (0.5, -0.3, 0.2): current density %.2e < 1e-6", n, j));
    representation.check(split.imag_fraction < 1e-6,
                         fmt("%d^3: imaginary fraction %.2e < 1e-6", n, split.imag_fraction));
    g_outputs.push_back({fmt("frozen-magnetic %d^3", n), s.u, m, 1.0});
  }
  // Further points with different A(z).
  for (Vec3 zz : {Vec3{1.2, 0.4, 0.0}, Vec3{-0.6, 0.9, -0.3}}) {
    MagneticSolution s = solve_frozen_magnetic(zz, m, Grid3::cube(48, 10.0 / std::sqrt(m.V.eval(zz))));
    PhaseSplit split = phase_factor_split(s.u, zz, m);
    const double j = current_density(split.U).sup_normalized;
    representation.check(s.converged && j < 1e-6 && split.imag_fraction < 1e-6,
                         fmt("48^3 at z = (%g, %g, %g): current %.2e, imaginary %.2e", zz[0], zz[1], zz[2], j,
                             split.imag_fraction));
    g_outputs.push_back({"frozen-magnetic 48^3 (second point)", s.u, m, 1.0});
  }
  return o;
}

// 4. Pucci-Serrin residual of rescaled full-problem solutions.
Outcome pucci_serrin() {
  Outcome o;
  ModelSpec m = trap_model(2.0);
  std::vector<double> h, r;
  MagneticSolution at48;
  for (int n : {32, 48, 64}) {
    MagneticSolveConfig c;
    c.grid = Grid3::cube(n, 5.0);
    const auto t0 = Clock::now();
    MagneticSolution s = solve_magnetic(m, c);
    log(fmt("full problem %d^3: %d iterations, %.1f s", n, s.iterations, seconds_since(t0)));
    if (!s.converged) {
      o.check(false, fmt("%d^3 solve did not converge", n));
      return o;
    }
    const double res = pucci_serrin_residual(rescale(s, s.spike), s.spike, s.eps, m).relative;
    h.push_back(c.grid.spacing);
    r.push_back(res);
    log(fmt("%d^3: relative Pucci-Serrin residual %.3e", n, res));
    if (n == 48) at48 = s;
    g_outputs.push_back({fmt("full problem %d^3", n), s.u, m, s.eps});
  }
  o.check(r[1] < 1e-2, fmt("48^3 relative residual %.2e < 1e-2", r[1]));
  // Least-squares slope of log r against log h.
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) mx += std::log(h[i]) / h.size(), my += std::log(r[i]) / h.size();
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    sxy += (std::log(h[i]) - mx) * (std::log(r[i]) - my);
    sxx += std::pow(std::log(h[i]) - mx, 2);
  }
  const double order = sxy / sxx;
  o.check(order >= 1.5, fmt("observed order %.2f >= 1.5 over 32^3, 48^3, 64^3", order));
  MagneticSolution noisy = at48;
  noisy.u = add_noise(at48.u, 0.05, 11);
  const double rn = pucci_serrin_residual(rescale(noisy, at48.spike), at48.spike, at48.eps, m).relative;
  o.check(rn >= 10.0 * r[1], fmt("5%% noise inflates the residual %.1fx >= 10x", rn / r[1]));
  return o;
}

// Extra full-problem outputs: constant A, a smaller eps and a random seed.
// Extra outputs for the invariance checks; a failed solve is reported by those checks.
std::string g_extra_error;

void more_outputs() {
  ModelSpec shifted;
  shifted.A = {PotentialExpr::constant(0.4), PotentialExpr::constant(-0.3), PotentialExpr::constant(0.2)};
  MagneticSolveConfig c;
  c.grid = Grid3::cube(40, 10.0);
  MagneticSolution s = solve_magnetic(shifted, c);
  g_outputs.push_back({"full problem, constant A", s.u, shifted, 1.0});

  ModelSpec m = trap_model(3.0);
  MagneticSolveConfig ce;
  ce.eps = 0.5;
  ce.grid = Grid3::cube(48, 4.0);
  MagneticSolution se = solve_magnetic(m, ce);
  g_outputs.push_back({"full problem, eps = 0.5", se.u, m, 0.5});

  MagneticSolveConfig cr;
  cr.grid = Grid3::cube(40, 6.0);
  cr.seed = SeedPolicy::Random;
  cr.random_seed = 5;
  MagneticSolution sr = solve_magnetic(m, cr);
  g_outputs.push_back({"full problem, random seed", sr.u, m, 1.0});
}

// 5. Polynomial gauge changes on every output.
Outcome gauge() {
  Outcome o;
  o.check(g_extra_error.empty(), "extra outputs solved" + (g_extra_error.empty() ? std::string() : ": " + g_extra_error));
  const PotentialExpr chi = PotentialExpr::parse("0.3*x1^2*x2 - 0.2*x3^3 + 0.5*x1*x3 - 0.7*x2");
  double worst_e = 0.0, worst_n = 0.0;
  for (const Output& out : g_outputs) {
    auto [v, mv] = gauge_transform(out.u, out.model, {chi}, out.eps);
    worst_e = std::max(worst_e, rel(energy_J(v, mv, out.eps), energy_J(out.u, out.model, out.eps)));
    worst_n = std::max(worst_n, rel(h_norm_squared(v, mv, out.eps), h_norm_squared(out.u, out.model, out.eps)));
  }
  o.check(worst_e < 1e-12, fmt("energy: max rel change %.2e < 1e-12 over %zu outputs", worst_e, g_outputs.size()));
  o.check(worst_n < 1e-12, fmt("norm: max rel change %.2e < 1e-12", worst_n));
  return o;
}

// 6. Diamagnetic slack on every output.
Outcome diamagnetic() {
  Outcome o;
  o.check(g_extra_error.empty(), "extra outputs solved" + (g_extra_error.empty() ? std::string() : ": " + g_extra_error));
  double worst = std::numeric_limits<double>::infinity();
  std::string where;
  for (const Output& out : g_outputs) {
    const double s = diamagnetic_check(out.u, out.model, out.eps).min_slack;
    if (s < worst) worst = s, where = out.name;
  }
  o.check(worst >= -1e-10, fmt("min slack %.2e >= -1e-10 (%s)", worst, where.c_str()));
  return o;
}

// 7. Decay rates.
Outcome decay() {
  Outcome o;
  ModelSpec m = trap_model(3.0);
  double worst = 0.0;
  for (Vec3 z : {Vec3{0.0, 0.0, 0.0}, Vec3{0.5, -0.3, 0.2}, Vec3{1.5, 1.0, -0.5}}) {
    for (double p : {2.0, 3.0, 4.0}) {
      m.nonlinearity = Nonlinearity::power(1.0, p);
      RadialProfile w = shoot_radial(FrozenPoint::at(m, z), m.nonlinearity);
      auto [r1, r2] = default_decay_window(w);
      worst = std::max(worst, rel(decay_fit(w, r1, r2).corrected_rate, std::sqrt(m.V.eval(z))));
    }
  }
  o.check(worst < 0.02, fmt("frozen states: corrected rate within %.2e of sqrt(V(z)) (< 2e-2)", worst));
  double lowest = std::numeric_limits<double>::infinity();
  std::string where;
  int short_windows = 0;
  for (const Output& out : g_outputs) {
    const double V0 = validate_assumptions(out.model).V0;
    const Vec3 c = spike_location(out.u);
    auto [r1, r2] = default_decay_window(out.u, c);
    // Same fallback as diagnose() when the box is small against the spike.
    if (r1 >= r2) r1 = 0.5 * r2, ++short_windows;
    DecayFit d = decay_fit(out.u, c, r1, r2);
    const double ratio = d.raw_rate / std::sqrt(V0 / 2.0);
    if (ratio < lowest) lowest = ratio, where = out.name;
  }
  o.check(lowest >= 0.95, fmt("all outputs: raw rate / sqrt(V0/2) >= %.3f (>= 0.95; lowest: %s; %d of %zu fits on the short window)",
                           lowest, where.c_str(), short_windows, g_outputs.size()));
  return o;
}

// 8. S = S_p on the harmonic-V, Gaussian-K model.
Outcome s_equals_sp() {
  Outcome o;
  const Region region{{-2, -2, -2}, {2, 2, 2}};
  for (double p : {2.0, 3.0, 4.0}) {
    ModelSpec m = bump_model(p);
    CriticalSetResult s = find_S(sweep_sigma(region, {9, 9, 9}, m), m);
    CriticalSetResult sp = find_Sp(m, p, region, {5, 5, 5});
    double gap = 0.0, alg = 0.0;
    bool same_size = s.points.size() == sp.points.size() && !s.points.empty();
    for (const auto& a : s.points) {
      double d = std::numeric_limits<double>::infinity();
      for (const auto& b : sp.points) d = std::min(d, norm(a.z - b.z));
      gap = std::max(gap, d);
    }
    for (const auto& b : sp.points) {
      CoefficientSample c = m.sample(b.z);
      alg = std::max(alg, norm((5.0 - p) * c.K * c.gradV - 4.0 * c.V * c.gradK));
    }
    o.check(same_size && gap < 1e-6 && alg < 1e-8,
            fmt("p = %g: %zu point(s), set distance %.1e < 1e-6, algebraic residual %.1e < 1e-8", p,
                s.points.size(), gap, alg));
  }
  return o;
}

// 9. Clarke test against the smooth verdict, and finite differences of the map.
Outcome clarke() {
  Outcome o;
  ModelSpec m = bump_model();
  ClarkeOptions opts;
  opts.sample_ball_with_net = false;
  std::vector<Vec3> probes;
  for (int k = 0; k < 20; ++k)
    for (int j = 0; j < 20; ++j)
      for (int i = 0; i < 20; ++i) probes.push_back({(-10 + i) / 10.0, (-10 + j) / 10.0, (-10 + k) / 10.0});
  const std::size_t lattice = probes.size();
  probes.push_back({0.360356720155, 0.0, 0.0});  // the critical point itself
  std::vector<char> agree(probes.size(), 0);
  parallel_for(probes.size(), [&](std::size_t n) {
    ClarkeVerdict v = clarke_critical_test(probes[n], m, opts);
    agree[n] = v.smooth_member.has_value() && *v.smooth_member == v.member;
  });
  std::size_t bad = 0;
  for (char a : agree) bad += !a;
  o.check(bad == 0, fmt("%zu of %zu probes disagree (20^3 lattice plus the critical point)", bad, lattice + 1));
  double worst = 0.0;
  for (Vec3 z : {Vec3{0.2, 0.1, -0.3}, Vec3{0.8, -0.5, 0.4}, Vec3{-0.7, 0.0, 0.9}}) {
    for (Vec3 w : direction_net(4, 3)) {
      const double d = directional_derivative_sigma(z, w, m).left;
      const double hh = 1e-4;
      const double fd = (sigma_r(FrozenPoint::at(m, z + hh * w), m.nonlinearity).sigma -
                         sigma_r(FrozenPoint::at(m, z - hh * w), m.nonlinearity).sigma) / (2.0 * hh);
      worst = std::max(worst, std::abs(fd - d) / std::max(1.0, std::abs(d)));
    }
  }
  o.check(worst < 1e-3, fmt("directional derivative vs central differences: %.1e < 1e-3", worst));
  return o;
}

// 10. Drift of S_p toward Crit K as p -> 5.
Outcome drift() {
  Outcome o;
  // Distances from the first computation, kept as regression values.
  const double frozen[] = {0.63964327984506475, 0.37125319312347282, 0.18790745610396165, 0.037507783833108377};
  DriftStudy d = p_to_5_study(bump_model(), {3.0, 4.0, 4.5, 4.9}, Region{{-2, -2, -2}, {2, 2, 2}}, {5, 5, 5});
  o.check(d.strictly_decreasing && d.rows.size() == 4, "distances strictly decreasing over p = 3, 4, 4.5, 4.9");
  const double ratio = d.rows.back().distance / d.rows.front().distance;
  o.check(ratio < 0.5, fmt("distance(4.9) / distance(3) = %.4f < 0.5", ratio));
  double worst = 0.0;
  for (std::size_t i = 0; i < d.rows.size() && i < 4; ++i) worst = std::max(worst, rel(d.rows[i].distance, frozen[i]));
  o.check(worst < 1e-8, fmt("matches the recorded distances to %.1e (< 1e-8)", worst));
  return o;
}

// 11. Concentration along an eps family.
Outcome concentration() {
  Outcome o;
  ModelSpec m;
  m.V = PotentialExpr::parse("1 + r2");
  m.A = {PotentialExpr::parse("-0.5*x2"), PotentialExpr::parse("0.5*x1"), PotentialExpr::constant(0.0)};  // B = e3
  const Vec3 zmin{0.0, 0.0, 0.0};
  const Vec3 offset{0.013, -0.007, 0.005};  // boxes off the symmetry centre
  std::vector<MagneticSolution> family;
  for (double eps : {0.4, 0.2, 0.1}) {
    MagneticSolveConfig c;
    c.eps = eps;
    c.grid = Grid3::cube(64, 12.0 * eps, offset);
    const auto t0 = Clock::now();
    MagneticSolution s = solve_magnetic(m, c);
    log(fmt("eps %g: %d iterations, %.1f s, spike (%.2e, %.2e, %.2e)", eps, s.iterations, seconds_since(t0),
            s.spike[0], s.spike[1], s.spike[2]));
    o.check(s.converged, fmt("eps %g converged", eps));
    family.push_back(std::move(s));
  }
  const double sigma = sigma_r_explicit(zmin, m).sigma;
  bool decreasing = true;
  for (std::size_t i = 1; i < family.size(); ++i)
    decreasing = decreasing && norm(family[i].spike - zmin) < norm(family[i - 1].spike - zmin);
  o.check(decreasing, fmt("spike distance to the minimizer %.2e, %.2e, %.2e decreasing", norm(family[0].spike),
                          norm(family[1].spike), norm(family[2].spike)));
  const double gap = rel(family.back().scaled_energy, sigma);
  o.check(gap < 0.1, fmt("eps^-3 J at eps = 0.1 within %.2e of sigma (< 0.1)", gap));
  ConcentrationStudy st = concentration_metrics(family, zmin, m);
  for (const auto& r : st.rows)
    log(fmt("eps %g: value at minimizer %.4f, tail(8 eps) %.3e, energy gap %.4e", r.eps, r.value_at_target,
            r.tail.empty() ? 0.0 : r.tail.back(), r.energy_gap));
  o.check(st.pointwise_concentrates == st.energy_concentrates,
          fmt("pointwise verdict %s, energetic verdict %s", st.pointwise_concentrates ? "yes" : "no",
              st.energy_concentrates ? "yes" : "no"));
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  bool slow = false;
  for (int i = 1; i < argc; ++i) slow = slow || std::strcmp(argv[i], "--slow") == 0;
  if (const char* env = std::getenv("SPIKEMAP_ENABLE_SLOW_TESTS")) slow = slow || std::strcmp(env, "1") == 0;

  struct Row {
    int id;
    const char* name;
    Outcome out;
    double seconds;
  };
  std::vector<Row> rows;
  auto run = [&](int id, const char* name, const std::function<Outcome()>& fn) {
    std::fprintf(stderr, "[%d] %s\n", id, name);
    const auto t0 = Clock::now();
    Outcome out;
    try {
      out = fn();
    } catch (const std::exception& e) {
      out.check(false, std::string("threw: ") + e.what());
    }
    rows.push_back({id, name, out, seconds_since(t0)});
  };

  Outcome representation;
  run(1, "explicit ground-energy map", explicit_formula);
  run(2, "complex frozen energy equals the real one", [&] { return frozen_energy(representation); });
  rows.push_back({3, "current density and real representation", representation, 0.0});
  run(4, "Pucci-Serrin identity", pucci_serrin);
  try {
    more_outputs();
  } catch (const std::exception& e) {
    g_extra_error = e.what();
  }
  run(5, "gauge invariance", gauge);
  run(6, "diamagnetic inequality", diamagnetic);
  run(7, "decay bound", decay);
  run(8, "S = S_p in the power case", s_equals_sp);
  run(9, "Clarke reduction", clarke);
  run(10, "p -> 5 drift", drift);
  if (slow) run(11, "concentration trend", concentration);

  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.id < b.id; });
  int failed = 0;
  for (const Row& r : rows) {
    std::printf("%s [%d] %s (%.1f s)\n", r.out.pass ? "PASS" : "FAIL", r.id, r.name, r.seconds);
    for (const auto& d : r.out.details) std::printf("       %s\n", d.c_str());
    failed += !r.out.pass;
  }
  if (!slow) std::printf("SKIP [11] concentration trend (run with --slow or SPIKEMAP_ENABLE_SLOW_TESTS=1)\n");
  std::printf("%d of %zu criteria failed\n", failed, rows.size());
  return failed == 0 ? 0 : 1;
}
