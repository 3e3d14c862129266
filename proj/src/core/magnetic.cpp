#include "core/magnetic.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <random>

namespace spikemap {

const char* to_string(SeedPolicy s) {
  switch (s) {
    case SeedPolicy::FrozenProfile: return "frozen";
    case SeedPolicy::Random: return "random";
    case SeedPolicy::File: return "file";
  }
  return "?";
}

SeedPolicy seed_policy_from_string(const std::string& s) {
  if (s == "frozen") return SeedPolicy::FrozenProfile;
  if (s == "random") return SeedPolicy::Random;
  if (s == "file") return SeedPolicy::File;
  fail(Error::Code::InvalidArgument, "unknown seed policy '" + s + "' (expected frozen, random or file)");
}

void MagneticSolveConfig::validate() const {
  require(std::isfinite(eps) && eps > 0.0, "eps must be positive");
  grid.validate();
  require(max_iters >= 1, "max_iters must be at least 1");
  require(tol > 0.0 && tol < 1.0, "tol must lie in (0, 1)");
  require(boundary_mass_limit > 0.0, "boundary_mass_limit must be positive");
  require(random_amplitude >= 0.0 && random_amplitude < 1.0, "random_amplitude must lie in [0, 1)");
  if (seed == SeedPolicy::File) require(!seed_file.empty(), "seed policy 'file' needs seed_file");
}

double energy_J(const ComplexField3& u, const ModelSpec& model, double eps) {
  LatticeOperator op(u.grid(), Coefficients::of_model(model), eps);
  return energy_J(op, u.values(), model.nonlinearity);
}

double h_norm_squared(const ComplexField3& u, const ModelSpec& model, double eps) {
  LatticeOperator op(u.grid(), Coefficients::of_model(model), eps);
  return op.quadratic_form(u.values());
}

namespace {

/// w(|x - c| / scale) exp(i A . (x - c) / scale)
ComplexField3 profile_seed(const RadialProfile& w, const Grid3& grid, const Vec3& c, const Vec3& A, double scale) {
  return ComplexField3::sample(grid, [&](const Vec3& x) {
    Vec3 d = x - c;
    return w.value_at(norm(d) / scale) * std::polar(1.0, dot(A, d) / scale);
  });
}

void perturb(ComplexField3& u, std::uint64_t seed, double amplitude) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> radius(0.0, 1.0), angle(0.0, 2.0 * M_PI);
  for (auto& v : u.storage()) v *= 1.0 + amplitude * std::sqrt(radius(rng)) * std::polar(1.0, angle(rng));
}

ComplexField3 make_seed(const MagneticSolveConfig& cfg, const FrozenPoint& point, const Nonlinearity& nl,
                        const Vec3& center, double scale) {
  if (cfg.seed == SeedPolicy::File) {
    ComplexField3 u = read_complex_snapshot(cfg.seed_file);
    if (u.grid() != cfg.grid) throw GridMismatchError("seed snapshot grid does not match the solver grid");
    return u;
  }
  RadialProfile w = shoot_radial(point, nl);
  ComplexField3 u = profile_seed(w, cfg.grid, center, point.Az, scale);
  if (cfg.seed == SeedPolicy::Random) perturb(u, cfg.random_seed, cfg.random_amplitude);
  return u;
}

MagneticSolution run(const LatticeOperator& op, const Nonlinearity& nl, ComplexField3 seed,
                     const MagneticSolveConfig& cfg, double eps) {
  GroundStateOptions gopts;
  gopts.max_iters = cfg.max_iters;
  gopts.tol = cfg.tol;
  GroundStateResult r = solve_ground_state(op, nl, std::move(seed), gopts);
  MagneticSolution sol;
  sol.eps = eps;
  sol.energy_J = r.energy;
  sol.residual_rms = r.residual;
  sol.nehari_slack = r.nehari_slack;
  sol.iterations = r.iterations;
  sol.converged = r.converged;
  sol.trace = std::move(r.trace);
  sol.u = std::move(r.u);
  double e3 = eps * eps * eps;
  sol.scaled_energy = sol.energy_J / e3;
  double m = l2_norm(sol.u.values(), op.cell_volume());
  sol.scaled_mass = m * m / e3;
  sol.spike = spike_location(sol.u);
  sol.boundary_mass = boundary_mass_fraction(sol.u);
  if (sol.boundary_mass > cfg.boundary_mass_limit) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "boundary mass fraction %.3g exceeds the limit %.3g; enlarge the box",
                  sol.boundary_mass, cfg.boundary_mass_limit);
    fail(Error::Code::BoundaryMass, buf);
  }
  return sol;
}

}  // namespace

Vec3 default_seed_center(const ModelSpec& model, const Grid3& grid) {
  const bool power = model.nonlinearity.is_power();
  const int m = power ? 17 : 5;
  double best = std::numeric_limits<double>::infinity();
  const Vec3 mid = grid.origin;
  Vec3 arg = mid;
  // Stay two layers inside so the seed is not clipped by the faces.
  auto pick = [&](int axis, int s) {
    int lo = std::min(2, grid.dims[axis] - 1), hi = std::max(lo, grid.dims[axis] - 3);
    return grid.coord(axis, lo + (hi - lo) * s / (m - 1));
  };
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b)
      for (int c = 0; c < m; ++c) {
        Vec3 z{pick(0, a), pick(1, b), pick(2, c)};
        double s;
        if (power) {
          double V = model.V.eval(z), K = model.K.eval(z);
          if (V <= 0.0 || K <= 0.0) continue;
          s = sigma_explicit_value(V, K, model.nonlinearity.p(), model.nonlinearity.lambda());
        } else {
          s = sigma_r(FrozenPoint::at(model, z), model.nonlinearity).sigma;
        }
        // Flat stretches of sigma resolve to the sample nearest the grid centre.
        const double tie = std::isfinite(best) ? 1e-12 * std::max(1.0, std::abs(best)) : 0.0;
        if (!std::isfinite(best) || s < best - tie || (s <= best + tie && norm(z - mid) < norm(arg - mid))) {
          best = std::min(best, s);
          arg = z;
        }
      }
  require(std::isfinite(best), "no admissible seed centre inside the grid");
  return arg;
}

MagneticSolution solve_magnetic(const ModelSpec& model, const MagneticSolveConfig& cfg) {
  cfg.validate();
  Vec3 c = cfg.seed_center ? *cfg.seed_center : default_seed_center(model, cfg.grid);
  LatticeOperator op(cfg.grid, Coefficients::of_model(model), cfg.eps);
  ComplexField3 seed = make_seed(cfg, FrozenPoint::at(model, c), model.nonlinearity, c, cfg.eps);
  MagneticSolution sol = run(op, model.nonlinearity, std::move(seed), cfg, cfg.eps);
  sol.seed_center = c;
  return sol;
}

MagneticSolution solve_frozen_magnetic(const Vec3& z, const ModelSpec& model, const Grid3& grid,
                                       const MagneticSolveConfig& base) {
  MagneticSolveConfig cfg = base;
  cfg.eps = 1.0;
  cfg.grid = grid;
  cfg.validate();
  FrozenPoint point = FrozenPoint::at(model, z);
  LatticeOperator op(grid, Coefficients::frozen(model, z), 1.0);
  ComplexField3 seed = make_seed(cfg, point, model.nonlinearity, grid.origin, 1.0);
  MagneticSolution sol = run(op, model.nonlinearity, std::move(seed), cfg, 1.0);
  sol.seed_center = grid.origin;
  return sol;
}

RealField3 gradient_flow_3d_real(const FrozenPoint& point, const Nonlinearity& nonlin, const Grid3& grid,
                                 GroundStateResult* details) {
  LatticeOperator op(grid, Coefficients::constant(point.Vz, point.Kz), 1.0);
  RadialProfile w = shoot_radial(point, nonlin);
  ComplexField3 seed = to_complex(sample_profile(w, grid, grid.origin));
  GroundStateResult r = solve_ground_state(op, nonlin, std::move(seed));
  RealField3 out(grid);
  for (std::size_t n = 0; n < out.size(); ++n) out[n] = r.u[n].real();
  if (details) *details = std::move(r);
  return out;
}

ComplexField3 rescale(const ComplexField3& u, double eps, const Vec3& z0) {
  require(eps > 0.0, "rescale needs eps > 0");
  Grid3 g = u.grid();
  g.spacing = u.grid().spacing / eps;
  g.origin = (1.0 / eps) * (u.grid().origin - z0);
  return ComplexField3(g, u.storage());
}

ComplexField3 rescale(const MagneticSolution& sol, const Vec3& z0) { return rescale(sol.u, sol.eps, z0); }

cplx interpolate(const ComplexField3& u, const Vec3& x) {
  const Grid3& g = u.grid();
  int i0[3];
  double t[3];
  for (int a = 0; a < 3; ++a) {
    double s = (x[a] - g.coord(a, 0)) / g.spacing;
    if (s < -1e-9 || s > g.dims[a] - 1 + 1e-9) return 0.0;
    s = std::clamp(s, 0.0, static_cast<double>(g.dims[a] - 1));
    i0[a] = std::min(static_cast<int>(std::floor(s)), g.dims[a] - 2);
    t[a] = s - i0[a];
  }
  cplx acc = 0.0;
  for (int c = 0; c < 8; ++c) {
    double w = 1.0;
    int idx[3];
    for (int a = 0; a < 3; ++a) {
      int bit = (c >> a) & 1;
      idx[a] = i0[a] + bit;
      w *= bit ? t[a] : 1.0 - t[a];
    }
    if (w != 0.0) acc += w * u.at(idx[0], idx[1], idx[2]);
  }
  return acc;
}

ComplexField3 rescale_to(const ComplexField3& u, double eps, const Vec3& z0, const Grid3& target) {
  require(eps > 0.0, "rescale needs eps > 0");
  const Grid3& g = u.grid();
  double slack = 1e-9 * g.spacing;
  return ComplexField3::sample(target, [&](const Vec3& y) {
    Vec3 x = z0 + eps * y;
    for (int a = 0; a < 3; ++a)
      if (x[a] < g.coord(a, 0) - slack || x[a] > g.coord(a, g.dims[a] - 1) + slack)
        fail(Error::Code::InvalidArgument, "rescale target grid reaches outside the source box");
    return interpolate(u, x);
  });
}

PdeResidual pde_residual(const ComplexField3& u, const ModelSpec& model, double eps, ResidualForm form) {
  return pde_residual(u, Coefficients::of_model(model), model.nonlinearity, eps, form);
}

PdeResidual pde_residual(const ComplexField3& u, const Coefficients& coef, const Nonlinearity& nl, double eps,
                         ResidualForm form) {
  const Grid3& g = u.grid();
  PdeResidual out;
  double rsum = 0.0, usum = 0.0;
  std::size_t count = 0;
  if (form == ResidualForm::Lattice) {
    LatticeOperator op(g, coef, eps);
    out.field = lattice_residual(op, u, nl);
    for (std::size_t n = 0; n < u.size(); ++n) {
      rsum += std::norm(out.field[n]);
      usum += std::norm(u[n]);
    }
    count = u.size();
  } else {
    const cplx I(0.0, 1.0);
    ComplexField3 lap = laplacian(u);
    ComplexVectorField3 grad = gradient(u, 2);
    out.field = ComplexField3(g);
    const double s = coef.scale();
    for (int k = 0; k < g.dims[2]; ++k)
      for (int j = 0; j < g.dims[1]; ++j)
        for (int i = 0; i < g.dims[0]; ++i) {
          if (g.in_shell(i, j, k, 2)) continue;
          std::size_t n = g.index(i, j, k);
          CoefficientSample c = coef.sample(g.point(i, j, k));
          cplx Agrad = c.A[0] * grad.component[0][n] + c.A[1] * grad.component[1][n] + c.A[2] * grad.component[2][n];
          cplx r = -eps * eps * lap[n] - (2.0 * eps / I) * Agrad + dot(c.A, c.A) * u[n] -
                   (eps / I) * (s * c.divA) * u[n] + c.V * u[n] - c.K * nl.f(std::norm(u[n])) * u[n];
          out.field[n] = r;
          rsum += std::norm(r);
          usum += std::norm(u[n]);
          ++count;
        }
  }
  out.rms = count ? std::sqrt(rsum / static_cast<double>(count)) : 0.0;
  out.relative = usum > 0.0 ? std::sqrt(rsum / usum) : 0.0;
  return out;
}

PhaseSplit phase_factor_split(const ComplexField3& v, const Vec3& Az) {
  const Grid3& g = v.grid();
  PhaseSplit out;
  out.U = ComplexField3(g);
  double best = -1.0;
  std::size_t arg = 0;
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i) {
        std::size_t n = g.index(i, j, k);
        out.U[n] = std::polar(1.0, -dot(Az, g.point(i, j, k))) * v[n];
        double m = std::abs(out.U[n]);
        if (m > best) {
          best = m;
          arg = n;
        }
      }
  out.omega = std::arg(out.U[arg]);
  cplx rot = std::polar(1.0, -out.omega);
  double worst = 0.0;
  for (std::size_t n = 0; n < out.U.size(); ++n) worst = std::max(worst, std::abs((rot * out.U[n]).imag()));
  out.imag_fraction = best > 0.0 ? worst / best : 0.0;
  return out;
}

PhaseSplit phase_factor_split(const ComplexField3& v, const Vec3& z, const ModelSpec& model) {
  return phase_factor_split(v, model.A_at(z));
}

Vec3 spike_location(const ComplexField3& u) {
  const Grid3& g = u.grid();
  double best = -1.0;
  int at[3] = {0, 0, 0};
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i) {
        double m = std::abs(u.at(i, j, k));
        if (m > best) {
          best = m;
          at[0] = i, at[1] = j, at[2] = k;
        }
      }
  Vec3 x = g.point(at[0], at[1], at[2]);
  for (int a = 0; a < 3; ++a) {
    if (at[a] == 0 || at[a] == g.dims[a] - 1) continue;
    int lo[3] = {at[0], at[1], at[2]}, hi[3] = {at[0], at[1], at[2]};
    --lo[a];
    ++hi[a];
    double fm = std::abs(u.at(lo[0], lo[1], lo[2])), fp = std::abs(u.at(hi[0], hi[1], hi[2]));
    double curv = fm - 2.0 * best + fp;
    if (curv < 0.0) x[a] += 0.5 * g.spacing * (fm - fp) / curv;
  }
  return x;
}

}  // namespace spikemap
