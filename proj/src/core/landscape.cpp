#include "core/landscape.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>

#include "core/parallel.hpp"
#include "json.hpp"

namespace spikemap {

void Region::validate() const {
  for (int a = 0; a < 3; ++a) {
    require(std::isfinite(lo[a]) && std::isfinite(hi[a]), "region bounds must be finite");
    require(lo[a] < hi[a], "region is empty along axis " + std::to_string(a + 1));
  }
}

bool Region::contains(const Vec3& z, double pad) const {
  for (int a = 0; a < 3; ++a)
    if (z[a] < lo[a] - pad || z[a] > hi[a] + pad) return false;
  return true;
}

Vec3 lattice_node(const Region& region, const Resolution& res, int i, int j, int k) {
  const int idx[3] = {i, j, k};
  Vec3 z;
  for (int a = 0; a < 3; ++a)
    z[a] = res[a] > 1 ? region.lo[a] + (region.hi[a] - region.lo[a]) * idx[a] / (res[a] - 1)
                      : 0.5 * (region.lo[a] + region.hi[a]);
  return z;
}

namespace {

void validate_resolution(const Resolution& res) {
  for (int a = 0; a < 3; ++a) require(res[a] >= 1, "lattice resolution must be at least 1 per axis");
}

std::size_t lattice_size(const Resolution& res) {
  return static_cast<std::size_t>(res[0]) * static_cast<std::size_t>(res[1]) * static_cast<std::size_t>(res[2]);
}

std::array<int, 3> unflatten(const Resolution& res, std::size_t n) {
  int i = static_cast<int>(n % static_cast<std::size_t>(res[0]));
  n /= static_cast<std::size_t>(res[0]);
  int j = static_cast<int>(n % static_cast<std::size_t>(res[1]));
  int k = static_cast<int>(n / static_cast<std::size_t>(res[1]));
  return {i, j, k};
}

bool solve3(const Mat3& M, const Vec3& b, Vec3& x) {
  double a[3][4];
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) a[r][c] = M[r][c];
    a[r][3] = b[r];
  }
  double scale = 0.0;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) scale = std::max(scale, std::abs(a[r][c]));
  if (scale == 0.0) return false;
  for (int c = 0; c < 3; ++c) {
    int piv = c;
    for (int r = c + 1; r < 3; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    if (std::abs(a[piv][c]) <= 1e-14 * scale) return false;
    for (int k = 0; k < 4; ++k) std::swap(a[c][k], a[piv][k]);
    for (int r = c + 1; r < 3; ++r) {
      double q = a[r][c] / a[c][c];
      for (int k = c; k < 4; ++k) a[r][k] -= q * a[c][k];
    }
  }
  for (int r = 2; r >= 0; --r) {
    double s = a[r][3];
    for (int k = r + 1; k < 3; ++k) s -= a[r][k] * x[k];
    x[r] = s / a[r][r];
  }
  return true;
}

struct NewtonResult {
  Vec3 z{};
  double residual = 0.0;
  double last_step = 0.0;
  bool converged = false;
  std::string note;
};

/// Damped Newton for F(z) = 0 with backtracking on |F|. Converged means |F| <= tol and the last
/// full step was shorter than 1e-6 (a vanishing F in a flat far field does not count).
NewtonResult damped_newton(const std::function<Vec3(const Vec3&)>& F, const std::function<Mat3(const Vec3&)>& J,
                           Vec3 z, double tol, double max_step, int max_iters = 100) {
  NewtonResult out;
  Vec3 f = F(z);
  double fn = norm(f);
  for (int it = 0; it < max_iters; ++it) {
    Vec3 d;
    if (!solve3(J(z), (-1.0) * f, d)) {
      out.note = "singular Jacobian";
      break;
    }
    double len = norm(d);
    out.last_step = len;
    if (len > max_step) d = (max_step / len) * d;
    double alpha = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 30; ++ls) {
      Vec3 zt = z + alpha * d;
      Vec3 ft = F(zt);
      double fnt = norm(ft);
      if (std::isfinite(fnt) && fnt <= (1.0 - 1e-4 * alpha) * fn) {
        z = zt;
        f = ft;
        fn = fnt;
        moved = true;
        break;
      }
      alpha *= 0.5;
    }
    if (fn <= tol && out.last_step < 1e-6) {
      out.converged = true;
      break;
    }
    if (!moved) {
      // No descent left: accept only if already at the root.
      if (fn <= tol) {
        Vec3 d2;
        if (solve3(J(z), (-1.0) * f, d2)) out.last_step = norm(d2);
        out.converged = out.last_step < 1e-6;
      }
      if (!out.converged) out.note = "line search stalled";
      break;
    }
  }
  if (!out.converged && out.note.empty()) out.note = "iteration limit";
  out.z = z;
  out.residual = fn;
  return out;
}

void add_unique(std::vector<CriticalPoint>& pts, const CriticalPoint& p, double radius) {
  for (auto& q : pts)
    if (norm(q.z - p.z) <= radius) {
      if (p.residual < q.residual) q = p;
      return;
    }
  pts.push_back(p);
}

void sort_points(std::vector<CriticalPoint>& pts) {
  std::sort(pts.begin(), pts.end(), [](const CriticalPoint& a, const CriticalPoint& b) { return a.z < b.z; });
}

/// Gradient and Hessian of log sigma = const + a log V - b log K.
struct LogSigma {
  const ModelSpec& model;
  double a, b;

  Vec3 grad(const Vec3& z) const {
    Dual3 v = model.V_at(z), k = model.K_at(z);
    return (a / v.value) * v.grad - (b / k.value) * k.grad;
  }
  Mat3 jac(const Vec3& z) const {
    Dual3 v = model.V_at(z), k = model.K_at(z);
    Mat3 hv = ModelSpec::hessian(model.V, z), hk = ModelSpec::hessian(model.K, z);
    Mat3 m{};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        m[i][j] = a * (hv[i][j] / v.value - v.grad[i] * v.grad[j] / (v.value * v.value)) -
                  b * (hk[i][j] / k.value - k.grad[i] * k.grad[j] / (k.value * k.value));
    return m;
  }
};

std::vector<std::size_t> gradient_minima(const GroundEnergyMap& map) {
  const Resolution& r = map.resolution;
  std::vector<std::size_t> out;
  for (std::size_t n = 0; n < map.samples.size(); ++n) {
    double g = norm(map.samples[n].grad_sigma);
    if (!std::isfinite(map.samples[n].sigma)) continue;
    auto [i, j, k] = unflatten(r, n);
    bool is_min = true;
    for (int dk = -1; dk <= 1 && is_min; ++dk)
      for (int dj = -1; dj <= 1 && is_min; ++dj)
        for (int di = -1; di <= 1 && is_min; ++di) {
          int ii = i + di, jj = j + dj, kk = k + dk;
          if ((di == 0 && dj == 0 && dk == 0) || ii < 0 || jj < 0 || kk < 0 || ii >= r[0] || jj >= r[1] ||
              kk >= r[2])
            continue;
          const auto& s = map.at(ii, jj, kk);
          if (std::isfinite(s.sigma) && norm(s.grad_sigma) < g) is_min = false;
        }
    if (is_min) out.push_back(n);
  }
  return out;
}

}  // namespace

const GroundEnergySample& GroundEnergyMap::at(int i, int j, int k) const {
  return samples[static_cast<std::size_t>(i) +
                 static_cast<std::size_t>(resolution[0]) *
                     (static_cast<std::size_t>(j) + static_cast<std::size_t>(resolution[1]) * k)];
}

std::string GroundEnergyMap::to_csv() const {
  std::string s = "z1,z2,z3,sigma,grad1,grad2,grad3,method\n";
  char buf[256];
  for (const auto& e : samples) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%s\n", e.z[0], e.z[1], e.z[2], e.sigma,
                  e.grad_sigma[0], e.grad_sigma[1], e.grad_sigma[2], to_string(e.method));
    s += buf;
  }
  return s;
}

GroundEnergyMap sweep_sigma(const Region& region, const Resolution& res, const ModelSpec& model, bool force_shooting) {
  region.validate();
  validate_resolution(res);
  GroundEnergyMap map;
  map.region = region;
  map.resolution = res;
  const std::size_t N = lattice_size(res);
  map.samples.resize(N);
  std::vector<std::string> errors(N);
  const bool fast = model.nonlinearity.is_power() && !force_shooting;
  if (fast) canonical_energy(model.nonlinearity.p(), model.nonlinearity.lambda());
  parallel_for(N, [&](std::size_t n) {
    auto [i, j, k] = unflatten(res, n);
    Vec3 z = lattice_node(region, res, i, j, k);
    try {
      map.samples[n] = fast ? sigma_r_explicit(z, model) : sigma_r(FrozenPoint::at(model, z), model.nonlinearity);
    } catch (const Error& e) {
      GroundEnergySample s;
      s.z = z;
      s.sigma = std::numeric_limits<double>::quiet_NaN();
      s.method = fast ? SigmaMethod::Explicit : SigmaMethod::Shooting;
      s.note = e.what();
      map.samples[n] = s;
      errors[n] = e.what();
    }
  });
  for (std::size_t n = 0; n < N; ++n)
    if (!errors[n].empty()) {
      auto [i, j, k] = unflatten(res, n);
      map.failures.push_back("node (" + std::to_string(i) + "," + std::to_string(j) + "," + std::to_string(k) +
                             "): " + errors[n]);
    }
  return map;
}

const char* to_string(CriticalKind k) {
  switch (k) {
    case CriticalKind::S: return "S";
    case CriticalKind::Sp: return "Sp";
    case CriticalKind::Sstar: return "Sstar";
    case CriticalKind::CritK: return "CritK";
  }
  return "?";
}

std::string CriticalSetResult::to_json() const {
  using nlohmann::json;
  auto pts = [](const std::vector<CriticalPoint>& v) {
    json a = json::array();
    for (const auto& p : v)
      a.push_back({{"z", {p.z[0], p.z[1], p.z[2]}}, {"residual", p.residual}, {"method", p.method}, {"note", p.note}});
    return a;
  };
  json j;
  j["kind"] = to_string(kind);
  if (kind == CriticalKind::Sp || kind == CriticalKind::S) j["p"] = p;
  j["degenerate"] = degenerate;
  j["acceptance"] = acceptance;
  j["points"] = pts(points);
  j["rejected"] = pts(rejected);
  j["notes"] = notes;
  return j.dump(2);
}

CriticalSetResult find_S(const GroundEnergyMap& map, const ModelSpec& model) {
  CriticalSetResult out;
  out.kind = CriticalKind::S;
  const Nonlinearity& nl = model.nonlinearity;
  out.p = nl.is_power() ? nl.p() : 0.0;
  double max_grad = 0.0, max_sigma = 0.0;
  for (const auto& s : map.samples)
    if (std::isfinite(s.sigma)) {
      max_grad = std::max(max_grad, norm(s.grad_sigma));
      max_sigma = std::max(max_sigma, s.sigma);
    }
  if (max_grad <= 1e-12 * std::max(1.0, max_sigma)) {
    out.degenerate = true;
    out.notes.push_back("ground-energy map is constant on the region: every point is critical");
    return out;
  }
  const double pad = 1e-9 * std::max(1.0, map.region.diameter());
  const double max_step = 0.25 * map.region.diameter();
  std::vector<std::size_t> seeds = gradient_minima(map);
  if (nl.is_power()) {
    out.acceptance = 1e-8;
    const double p = nl.p();
    LogSigma ls{model, (5.0 - p) / (2.0 * p - 2.0), 2.0 / (p - 1.0)};
    for (std::size_t n : seeds) {
      NewtonResult r = damped_newton([&](const Vec3& z) { return ls.grad(z); },
                                     [&](const Vec3& z) { return ls.jac(z); }, map.samples[n].z, 1e-13, max_step);
      if (!r.converged || !map.region.contains(r.z, pad)) {
        out.notes.push_back("seed dropped: " + (r.converged ? std::string("root left the region") : r.note));
        continue;
      }
      GroundEnergySample s = sigma_r_explicit(r.z, model);
      double g = norm(s.grad_sigma);
      if (g >= out.acceptance) {
        out.notes.push_back("seed dropped: gradient above acceptance");
        continue;
      }
      add_unique(out.points, {r.z, g, "newton-explicit", ""}, 1e-7);
    }
  } else {
    // Shooting gradients carry ~1e-10 relative noise; acceptance is relative to sigma.
    out.acceptance = 1e-6 * std::max(1.0, max_sigma);
    auto grad = [&](const Vec3& z) { return sigma_r(FrozenPoint::at(model, z), nl).grad_sigma; };
    auto jac = [&](const Vec3& z) {
      const double h = 1e-4;
      Mat3 m{};
      for (int j = 0; j < 3; ++j) {
        Vec3 zp = z, zm = z;
        zp[j] += h;
        zm[j] -= h;
        Vec3 gp = grad(zp), gm = grad(zm);
        for (int i = 0; i < 3; ++i) m[i][j] = (gp[i] - gm[i]) / (2.0 * h);
      }
      return m;
    };
    ClarkeOptions copts;
    copts.random_directions = 0;
    copts.sample_ball_with_net = false;
    copts.lambdas = {1e-3};
    for (std::size_t n : seeds) {
      NewtonResult r = damped_newton(grad, jac, map.samples[n].z, out.acceptance, max_step, 30);
      if (r.residual > out.acceptance || !map.region.contains(r.z, pad)) {
        out.notes.push_back("seed dropped: " + (r.residual > out.acceptance ? r.note : "root left the region"));
        continue;
      }
      ClarkeVerdict v = clarke_critical_test(r.z, model, copts);
      add_unique(out.points,
                 {r.z, r.residual, "newton-shooting", std::string("clarke ") + (v.member ? "member" : "non-member") +
                                                          ", margin " + std::to_string(v.margin)},
                 1e-6);
    }
  }
  sort_points(out.points);
  return out;
}

CriticalSetResult find_Sp(const ModelSpec& model, double p, const Region& region, const Resolution& seeds) {
  region.validate();
  validate_resolution(seeds);
  require(p > 1.0 && p < 5.0, "find_Sp needs 1 < p < 5");
  CriticalSetResult out;
  out.kind = CriticalKind::Sp;
  out.p = p;
  out.acceptance = 1e-8;
  auto G = [&](const Vec3& z) {
    Dual3 v = model.V_at(z), k = model.K_at(z);
    return ((5.0 - p) * k.value) * v.grad - (4.0 * v.value) * k.grad;
  };
  auto J = [&](const Vec3& z) {
    Dual3 v = model.V_at(z), k = model.K_at(z);
    Mat3 hv = ModelSpec::hessian(model.V, z), hk = ModelSpec::hessian(model.K, z);
    Mat3 m{};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        m[i][j] = (5.0 - p) * (k.grad[j] * v.grad[i] + k.value * hv[i][j]) -
                  4.0 * (v.grad[j] * k.grad[i] + v.value * hk[i][j]);
    return m;
  };
  auto threshold = [&](const Vec3& z) {
    return 1e-8 * (1.0 + norm(model.V_at(z).grad) + norm(model.K_at(z).grad));
  };
  const std::size_t N = lattice_size(seeds);
  bool all_zero = true;
  for (std::size_t n = 0; n < N && all_zero; ++n) {
    auto [i, j, k] = unflatten(seeds, n);
    if (norm(G(lattice_node(region, seeds, i, j, k))) > 1e-14) all_zero = false;
  }
  if (all_zero) {
    out.degenerate = true;
    out.notes.push_back("the algebraic condition holds at every seed: degenerate set");
    return out;
  }
  const double pad = 1e-9 * std::max(1.0, region.diameter());
  std::vector<NewtonResult> runs(N);
  parallel_for(N, [&](std::size_t n) {
    auto [i, j, k] = unflatten(seeds, n);
    runs[n] = damped_newton(G, J, lattice_node(region, seeds, i, j, k), 1e-14, 0.25 * region.diameter());
  });
  for (const auto& r : runs) {
    double thr = threshold(r.z);
    if (norm(G(r.z)) >= thr || !region.contains(r.z, pad)) continue;
    if (r.last_step >= 1e-6) continue;
    add_unique(out.points, {r.z, norm(G(r.z)), "newton-algebraic", ""}, 1e-7);
  }
  sort_points(out.points);
  return out;
}

SolutionsProvider radial_solutions(const ModelSpec& model, int n) {
  return [model, n](const Vec3& z) {
    FrozenPoint pt = FrozenPoint::at(model, z);
    RadialProfile w = shoot_radial(pt, model.nonlinearity);
    Grid3 g = Grid3::cube(n, 8.0 / std::sqrt(pt.Vz));
    return std::vector<ComplexField3>{to_complex(sample_profile(w, g))};
  };
}

SolutionsProvider frozen_magnetic_solutions(const ModelSpec& model, const Grid3& grid) {
  return [model, grid](const Vec3& z) {
    MagneticSolution s = solve_frozen_magnetic(z, model, grid);
    return std::vector<ComplexField3>{phase_factor_split(s.u, z, model).U};
  };
}

CriticalSetResult find_Sstar(const ModelSpec& model, const std::vector<Vec3>& candidates,
                             const SolutionsProvider& solutions, const SstarOptions& opts) {
  CriticalSetResult out;
  out.kind = CriticalKind::Sstar;
  out.acceptance = opts.tolerance;
  out.notes.push_back("solution set: the computed least-energy candidate and its constant-phase orbit");
  std::vector<Vec3> net = direction_net(opts.random_directions, opts.seed);
  for (const auto& z : candidates) {
    std::vector<ComplexField3> sols = solutions(z);
    require(!sols.empty(), "solutions provider returned an empty set");
    auto brackets = gamma_brackets(z, model, sols, opts.phase_samples);
    double scale = 0.0;
    for (const auto& U : sols) {
      IdentityResidual r = limit_identity_residual(U, z, model);
      for (int k = 0; k < 3; ++k) scale = std::max(scale, r.scale[k]);
    }
    double lo_minus = std::numeric_limits<double>::infinity(), hi_plus = -lo_minus;
    for (const auto& w : net) {
      GammaPM g = gamma_pm(brackets, w);
      lo_minus = std::min(lo_minus, g.gamma_minus);
      hi_plus = std::max(hi_plus, g.gamma_plus);
    }
    // Gamma^- >= 0 and Gamma^+ <= 0 along every net direction.
    double margin = std::min(lo_minus, -hi_plus);
    double rel = scale > 0.0 ? margin / scale : 0.0;
    CriticalPoint cp{z, rel, "gamma-bounds", ""};
    if (scale == 0.0) cp.note = "all bracket terms vanish";
    if (rel >= -opts.tolerance) {
      cp.residual = std::abs(std::min(rel, 0.0));
      out.points.push_back(cp);
    } else {
      out.rejected.push_back(cp);
    }
  }
  return out;
}

CriticalSetResult crit_K(const ModelSpec& model, const Region& region, const Resolution& seeds) {
  region.validate();
  validate_resolution(seeds);
  CriticalSetResult out;
  out.kind = CriticalKind::CritK;
  out.acceptance = 1e-10;
  if (model.K.is_constant()) {
    out.degenerate = true;
    out.notes.push_back("K is constant: every point is critical");
    return out;
  }
  auto G = [&](const Vec3& z) { return model.K_at(z).grad; };
  auto J = [&](const Vec3& z) { return ModelSpec::hessian(model.K, z); };
  const std::size_t N = lattice_size(seeds);
  bool all_zero = true;
  for (std::size_t n = 0; n < N && all_zero; ++n) {
    auto [i, j, k] = unflatten(seeds, n);
    if (norm(G(lattice_node(region, seeds, i, j, k))) > 0.0) all_zero = false;
  }
  if (all_zero) {
    out.degenerate = true;
    out.notes.push_back("grad K vanishes at every seed: degenerate set");
    return out;
  }
  const double pad = 1e-9 * std::max(1.0, region.diameter());
  std::vector<NewtonResult> runs(N);
  parallel_for(N, [&](std::size_t n) {
    auto [i, j, k] = unflatten(seeds, n);
    runs[n] = damped_newton(G, J, lattice_node(region, seeds, i, j, k), 1e-15, 0.25 * region.diameter());
  });
  for (const auto& r : runs) {
    double g = norm(G(r.z));
    if (g >= out.acceptance || r.last_step >= 1e-6 || !region.contains(r.z, pad)) continue;
    add_unique(out.points, {r.z, g, "newton-gradK", ""}, 1e-7);
  }
  sort_points(out.points);
  return out;
}

std::string DriftStudy::to_csv() const {
  std::string s = "p,distance,points,gap\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%zu,%d\n", r.p, r.distance, r.points, r.gap ? 1 : 0);
    s += buf;
  }
  return s;
}

DriftStudy p_to_5_study(const ModelSpec& model, const std::vector<double>& p_list, const Region& region,
                        const Resolution& seeds) {
  require(!p_list.empty(), "p list is empty");
  for (std::size_t i = 1; i < p_list.size(); ++i) require(p_list[i] > p_list[i - 1], "p list must increase");
  CriticalSetResult ck = crit_K(model, region, seeds);
  DriftStudy st;
  for (double p : p_list) {
    CriticalSetResult sp = find_Sp(model, p, region, seeds);
    DriftRow row;
    row.p = p;
    row.points = sp.points.size();
    if (sp.points.empty() || ck.points.empty()) {
      row.gap = true;
      row.distance = std::numeric_limits<double>::quiet_NaN();
    } else {
      for (const auto& s : sp.points) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& c : ck.points) best = std::min(best, norm(s.z - c.z));
        row.distance = std::max(row.distance, best);
      }
    }
    st.rows.push_back(row);
  }
  st.strictly_decreasing = true;
  for (std::size_t i = 0; i < st.rows.size(); ++i) {
    if (st.rows[i].gap) st.strictly_decreasing = false;
    if (i > 0 && !(st.rows[i].distance < st.rows[i - 1].distance)) st.strictly_decreasing = false;
  }
  return st;
}

}  // namespace spikemap
