#include "core/frozen.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <mutex>
#include <numbers>

namespace spikemap {

FrozenPoint FrozenPoint::at(const ModelSpec& model, const Vec3& z) {
  CoefficientSample c = model.sample(z);
  FrozenPoint p;
  p.z = z;
  p.Vz = c.V;
  p.Kz = c.K;
  p.Az = c.A;
  p.gradV = c.gradV;
  p.gradK = c.gradK;
  p.dA = c.dA;
  return p;
}

FrozenPoint FrozenPoint::constant(double V, double K, const Vec3& A) {
  FrozenPoint p;
  p.Vz = V;
  p.Kz = K;
  p.Az = A;
  return p;
}

double RadialProfile::value_at(double r) const {
  r = std::abs(r);
  if (r >= tail_start) {
    double k = std::sqrt(V);
    return tail_C * std::exp(-k * r) / r + tail_D * std::exp(-2.0 * k * r) / (r * r);
  }
  std::size_t j = std::min(static_cast<std::size_t>(r / dr), u.size() - 2);
  double h = dr, t = (r - j * dr) / h;
  double t2 = t * t, t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * u[j] + (t3 - 2 * t2 + t) * h * du[j] + (-2 * t3 + 3 * t2) * u[j + 1] +
         (t3 - t2) * h * du[j + 1];
}

double RadialProfile::derivative_at(double r) const {
  double sign = r < 0.0 ? -1.0 : 1.0;
  r = std::abs(r);
  if (r >= tail_start) {
    double k = std::sqrt(V);
    return -sign * (tail_C * std::exp(-k * r) * (k + 1.0 / r) / r +
                    tail_D * std::exp(-2.0 * k * r) * (2.0 * k + 2.0 / r) / (r * r));
  }
  std::size_t j = std::min(static_cast<std::size_t>(r / dr), u.size() - 2);
  double h = dr, t = (r - j * dr) / h;
  double t2 = t * t;
  return sign * ((6 * t2 - 6 * t) * u[j] / h + (3 * t2 - 4 * t + 1) * du[j] + (-6 * t2 + 6 * t) * u[j + 1] / h +
                 (3 * t2 - 2 * t) * du[j + 1]);
}

namespace {

enum class Fate { Overshoot, Undershoot, Undecided };

struct Trajectory {
  Fate fate = Fate::Undecided;
  std::size_t decided_at = 0;
  std::vector<double> u, v;
};

class Shooter {
 public:
  Shooter(double V, double K, const Nonlinearity& nl, double dr) : V_(V), K_(K), nl_(nl), dr_(dr) {}

  double g(double u) const { return V_ * u - K_ * nl_.f(u * u) * u; }
  double g_prime(double u) const {
    double delta = 1e-4 * std::max(u, 1e-300);
    return (g(u + delta) - g(u - delta)) / (2.0 * delta);
  }

  Trajectory run(double alpha, std::size_t max_steps, bool record) const {
    Trajectory t;
    if (record) {
      t.u.reserve(max_steps + 1);
      t.v.reserve(max_steps + 1);
      t.u.push_back(alpha);
      t.v.push_back(0.0);
    }
    // Series start: u = alpha + c r^2 + d r^4 + e r^6 with 6c = g, 20d = g' c, 42e = g' d + g'' c^2 / 2,
    // used for the first kSeriesSteps nodes where the 2/r coefficient spoils RK4.
    double c = g(alpha) / 6.0;
    double delta = 1e-4 * alpha;
    double gp = g_prime(alpha);
    double gpp = (g(alpha + delta) - 2.0 * g(alpha) + g(alpha - delta)) / (delta * delta);
    double d = gp * c / 20.0;
    double e = (gp * d + 0.5 * gpp * c * c) / 42.0;
    auto series = [&](double rr, double& uu, double& vv) {
      double r2 = rr * rr;
      uu = alpha + r2 * (c + r2 * (d + r2 * e));
      vv = rr * (2.0 * c + r2 * (4.0 * d + 6.0 * e * r2));
    };
    // Keep the series where |g'| r^2 < 1e-3 so its truncation stays below the RK4 error.
    const std::size_t series_steps = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::sqrt(1e-3 / std::max(std::abs(gp), 1e-300)) / dr_), 1, 8);
    double r = dr_;
    double u, v;
    series(r, u, v);
    auto rhs = [this](double rr, double uu, double vv, double& du, double& dv) {
      du = vv;
      dv = -2.0 * vv / rr + g(uu);
    };
    for (std::size_t step = 1; step <= max_steps; ++step) {
      if (record) {
        t.u.push_back(u);
        t.v.push_back(v);
      }
      if (t.fate == Fate::Undecided) {
        if (u < 0.0) {
          t.fate = Fate::Overshoot;
          t.decided_at = step;
        } else if (v > 0.0) {
          t.fate = Fate::Undershoot;
          t.decided_at = step;
        }
        if (t.fate != Fate::Undecided && !record) return t;
      }
      if (step == max_steps) break;
      if (step < series_steps) {
        r += dr_;
        series(r, u, v);
        continue;
      }
      double k1u, k1v, k2u, k2v, k3u, k3v, k4u, k4v;
      rhs(r, u, v, k1u, k1v);
      rhs(r + 0.5 * dr_, u + 0.5 * dr_ * k1u, v + 0.5 * dr_ * k1v, k2u, k2v);
      rhs(r + 0.5 * dr_, u + 0.5 * dr_ * k2u, v + 0.5 * dr_ * k2v, k3u, k3v);
      rhs(r + dr_, u + dr_ * k3u, v + dr_ * k3v, k4u, k4v);
      u += dr_ / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u);
      v += dr_ / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v);
      r += dr_;
      if (!std::isfinite(u) || !std::isfinite(v)) {
        if (t.fate == Fate::Undecided) {
          t.fate = u < 0.0 ? Fate::Overshoot : Fate::Undershoot;
          t.decided_at = step;
        }
        break;
      }
    }
    return t;
  }

 private:
  double V_, K_;
  const Nonlinearity& nl_;
  double dr_;
};

// Amplitude where K f(a^2) = V, the scale of the ground state.
double reference_amplitude(double V, double K, const Nonlinearity& nl) {
  if (nl.is_power()) return std::pow(V / (K * nl.lambda()), 1.0 / (nl.p() - 1.0));
  double lo = 0.0, hi = 1.0;
  int guard = 0;
  while (K * nl.f(hi * hi) < V) {
    lo = hi;
    hi *= 2.0;
    if (++guard > 200) fail(Error::Code::Bracket, "K f(s) never reaches V; no ground state scale");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    double m = 0.5 * (lo + hi);
    (K * nl.f(m * m) < V ? lo : hi) = m;
  }
  return 0.5 * (lo + hi);
}

// Composite Simpson on a uniform grid; drops the last sample when the count is even.
double simpson(const std::vector<double>& y, double h) {
  std::size_t n = y.size();
  if (n < 3) return 0.0;
  if (n % 2 == 0) --n;
  double s = y[0] + y[n - 1];
  for (std::size_t j = 1; j + 1 < n; ++j) s += (j % 2 == 1 ? 4.0 : 2.0) * y[j];
  return s * h / 3.0;
}

constexpr double kCoreCurvature = 7.0;

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

std::pair<double, double> find_bracket(double V, double K, const Nonlinearity& nonlin, double dr, double a0,
                                       const ShootingOptions& opts) {
  const std::size_t max_steps = static_cast<std::size_t>(std::ceil(60.0 / std::sqrt(V) / dr));
  Shooter shooter(V, K, nonlin, dr);
  // Ladder scan for an undershoot/overshoot pair.
  double lo = 0.0, hi = 0.0;
  Fate prev = Fate::Undecided;
  double prev_alpha = 0.0;
  const int steps = std::max(opts.ladder_steps, 2);
  for (int i = 0; i < steps; ++i) {
    double alpha = a0 * opts.ladder_low * std::pow(opts.ladder_high / opts.ladder_low, double(i) / (steps - 1));
    Fate f = shooter.run(alpha, max_steps, false).fate;
    if (prev == Fate::Undershoot && f == Fate::Overshoot) {
      lo = prev_alpha;
      hi = alpha;
      break;
    }
    prev = f;
    prev_alpha = alpha;
  }
  if (hi == 0.0)
    fail(Error::Code::Bracket, "no undershoot/overshoot bracket for u(0) in [" + fmt(a0 * opts.ladder_low) + ", " +
                                   fmt(a0 * opts.ladder_high) + "] at V=" + fmt(V) + ", K=" + fmt(K));

  int it = 0;
  for (; it < opts.max_bisections && (hi - lo) > opts.tol * hi; ++it) {
    double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    Fate f = shooter.run(mid, max_steps, false).fate;
    if (f == Fate::Overshoot) hi = mid;
    else if (f == Fate::Undershoot) lo = mid;
    else {
      lo = hi = mid;
      break;
    }
  }

  return {lo, hi};
}

}  // namespace

RadialProfile shoot_radial(const FrozenPoint& point, const Nonlinearity& nonlin, const ShootingOptions& opts) {
  const double V = point.Vz, K = point.Kz;
  require(V > 0.0 && K > 0.0, "shooting needs V(z) > 0 and K(z) > 0");
  require(opts.tol > 0.0 && opts.dr_scale > 0.0, "shooting tolerances must be positive");
  const double kappa = std::sqrt(V);
  const double a0 = reference_amplitude(V, K, nonlin);
  double dr = opts.dr_scale / kappa;
  auto bracket = find_bracket(V, K, nonlin, dr, a0, opts);
  // A sharp core (large |g'(u(0))| / V) needs a finer step; one re-solve at the adapted step.
  {
    Shooter probe(V, K, nonlin, dr);
    double curvature = std::sqrt(std::abs(probe.g_prime(bracket.first)) / V);
    if (curvature > kCoreCurvature) {
      dr *= kCoreCurvature / curvature;
      bracket = find_bracket(V, K, nonlin, dr, a0, opts);
    }
  }
  double lo = bracket.first, hi = bracket.second;
  const std::size_t max_steps = static_cast<std::size_t>(std::ceil(60.0 / kappa / dr));
  Shooter shooter(V, K, nonlin, dr);

  Trajectory tl = shooter.run(lo, max_steps, true);
  Trajectory th = shooter.run(hi, max_steps, true);
  // Keep the mean trajectory while the two shots agree, then switch to the decaying tail.
  std::size_t cut = std::min(tl.u.size(), th.u.size()) - 1;
  for (std::size_t j = 1; j < cut; ++j) {
    double m = 0.5 * (tl.u[j] + th.u[j]);
    if (m <= 0.0 || std::abs(tl.u[j] - th.u[j]) > 1e-6 * m || tl.v[j] > 0.0 || th.u[j] < 0.0) {
      cut = j > 1 ? j - 1 : 1;
      break;
    }
  }
  if (cut < 10) fail(Error::Code::Bracket, "shooting trajectories separate immediately; bracket failed");

  RadialProfile prof;
  prof.V = V;
  prof.K = K;
  prof.dr = dr;
  prof.alpha = 0.5 * (lo + hi);
  prof.bracket_width = (hi - lo) / hi;
  prof.u.resize(cut + 1);
  prof.du.resize(cut + 1);
  for (std::size_t j = 0; j <= cut; ++j) {
    prof.u[j] = 0.5 * (tl.u[j] + th.u[j]);
    prof.du[j] = 0.5 * (tl.v[j] + th.v[j]);
  }
  // Tail C e^{-k r} / r + D e^{-2 k r} / r^2, matched in value and slope at the cut. The D term
  // absorbs the leading nonlinear correction so the join has no kink.
  const double rc = cut * dr;
  {
    double p1 = std::exp(-kappa * rc) / rc, p2 = std::exp(-2.0 * kappa * rc) / (rc * rc);
    double q1 = -p1 * (kappa + 1.0 / rc), q2 = -p2 * (2.0 * kappa + 2.0 / rc);
    double det = p1 * q2 - p2 * q1;
    prof.tail_start = rc;
    prof.tail_C = (prof.u[cut] * q2 - p2 * prof.du[cut]) / det;
    prof.tail_D = (p1 * prof.du[cut] - q1 * prof.u[cut]) / det;
  }
  for (std::size_t j = cut + 1;; ++j) {
    double r = j * dr;
    double val = prof.value_at(r);
    prof.u.push_back(val);
    prof.du.push_back(prof.derivative_at(r));
    if (val < 1e-13 * prof.alpha) break;
  }

  // Integrals over R^3.
  const std::size_t n = prof.u.size();
  std::vector<double> wk(n), wm(n), wF(n), wf(n);
  for (std::size_t j = 0; j < n; ++j) {
    double r2 = prof.r(j) * prof.r(j), s = prof.u[j] * prof.u[j];
    wk[j] = r2 * prof.du[j] * prof.du[j];
    wm[j] = r2 * s;
    wF[j] = r2 * K * nonlin.F(s);
    wf[j] = r2 * K * nonlin.f(s) * s;
  }
  const double four_pi = 4.0 * std::numbers::pi;
  prof.kinetic = four_pi * simpson(wk, dr);
  prof.mass = four_pi * simpson(wm, dr);
  prof.potential_term = four_pi * simpson(wF, dr);
  prof.nehari_term = four_pi * simpson(wf, dr);
  prof.energy = 0.5 * (prof.kinetic + V * prof.mass) - prof.potential_term;

  // Radial residual with u'' from fourth-order differences of the stored slope, as an L2(R^3) norm relative to ||u||.
  double sum = 0.0, ref = 0.0;
  for (std::size_t j = 2; j + 2 < n; ++j) {
    const auto& u = prof.u;
    const auto& v = prof.du;
    double r = prof.r(j);
    double d2 = (-v[j + 2] + 8 * v[j + 1] - 8 * v[j - 1] + v[j - 2]) / (12 * dr);
    double res = -d2 - 2.0 * v[j] / r + V * u[j] - K * nonlin.f(u[j] * u[j]) * u[j];
    sum += r * r * res * res;
    ref += r * r * u[j] * u[j];
  }
  prof.residual_rms = ref > 0.0 ? std::sqrt(sum / ref) : 0.0;
  if (!(prof.energy > 0.0)) fail(Error::Code::Bracket, "shooting produced a non-positive action");
  return prof;
}

double nehari_scale(const NehariTerms& terms, const Nonlinearity& nonlin, bool force_bisection) {
  require(terms.quadratic > 0.0, "Nehari projection needs a nonzero trial function");
  if (nonlin.is_power() && !force_bisection && terms.power_moment >= 0.0) {
    double denom = nonlin.lambda() * terms.power_moment;
    if (!(denom > 0.0)) fail(Error::Code::Bracket, "no positive Nehari root: nonlinear term vanishes");
    return std::pow(terms.quadratic / denom, 1.0 / (nonlin.p() - 1.0));
  }
  require(static_cast<bool>(terms.nonlinear), "Nehari projection needs the nonlinear term");
  auto gap = [&](double t) { return terms.nonlinear(t) - terms.quadratic; };
  double lo = 0.0, hi = 1.0;
  int guard = 0;
  while (gap(hi) < 0.0) {
    lo = hi;
    hi *= 2.0;
    if (++guard > 400) fail(Error::Code::Bracket, "no positive Nehari root: trial orthogonal to the nonlinear term");
  }
  if (lo == 0.0) {
    while (gap(hi * 0.5) > 0.0 && hi > 1e-300) hi *= 0.5;
    lo = hi * 0.5;
  }
  for (int it = 0; it < 200 && hi - lo > 1e-16 * hi; ++it) {
    double m = 0.5 * (lo + hi);
    if (m <= lo || m >= hi) break;
    (gap(m) < 0.0 ? lo : hi) = m;
  }
  return 0.5 * (lo + hi);
}

double nehari_project(const RadialProfile& trial, const FrozenPoint& point, const Nonlinearity& nonlin,
                      bool force_bisection) {
  const std::size_t n = trial.u.size();
  std::vector<double> wk(n), wm(n), wp(n);
  for (std::size_t j = 0; j < n; ++j) {
    double r2 = trial.r(j) * trial.r(j), a = std::abs(trial.u[j]);
    wk[j] = r2 * trial.du[j] * trial.du[j];
    wm[j] = r2 * a * a;
    wp[j] = nonlin.is_power() ? r2 * point.Kz * std::pow(a, nonlin.p() + 1.0) : 0.0;
  }
  const double four_pi = 4.0 * std::numbers::pi;
  NehariTerms terms;
  terms.quadratic = four_pi * (simpson(wk, trial.dr) + point.Vz * simpson(wm, trial.dr));
  if (nonlin.is_power()) terms.power_moment = four_pi * simpson(wp, trial.dr);
  terms.nonlinear = [&](double t) {
    std::vector<double> w(n);
    for (std::size_t j = 0; j < n; ++j) {
      double r2 = trial.r(j) * trial.r(j), s = trial.u[j] * trial.u[j];
      w[j] = r2 * point.Kz * nonlin.f(t * t * s) * s;
    }
    return four_pi * simpson(w, trial.dr);
  };
  return nehari_scale(terms, nonlin, force_bisection);
}

const char* to_string(SigmaMethod m) {
  switch (m) {
    case SigmaMethod::Shooting: return "shooting";
    case SigmaMethod::Explicit: return "explicit";
    case SigmaMethod::Flow3d: return "flow3d";
  }
  return "unknown";
}

GroundEnergySample sigma_r(const FrozenPoint& point, const Nonlinearity& nonlin, const ShootingOptions& opts) {
  RadialProfile prof = shoot_radial(point, nonlin, opts);
  GroundEnergySample s;
  s.z = point.z;
  s.sigma = prof.energy;
  s.method = SigmaMethod::Shooting;
  if (nonlin.is_power()) {
    double p = nonlin.p();
    double a = (5.0 - p) / (2.0 * p - 2.0), b = 2.0 / (p - 1.0);
    s.grad_sigma = s.sigma * ((a / point.Vz) * point.gradV - (b / point.Kz) * point.gradK);
  } else {
    s.grad_sigma = (0.5 * prof.mass) * point.gradV - (prof.potential_term / point.Kz) * point.gradK;
  }
  return s;
}

namespace {
std::mutex g_cache_mutex;
std::map<std::pair<double, double>, double> g_cache;
}  // namespace

double canonical_energy(double p, double lambda) {
  {
    std::lock_guard lock(g_cache_mutex);
    auto it = g_cache.find({p, lambda});
    if (it != g_cache.end()) return it->second;
  }
  Nonlinearity nl = Nonlinearity::power(lambda, p);
  double e = shoot_radial(FrozenPoint::constant(1.0, 1.0), nl).energy;
  std::lock_guard lock(g_cache_mutex);
  g_cache[{p, lambda}] = e;
  return e;
}

void clear_canonical_energy_cache() {
  std::lock_guard lock(g_cache_mutex);
  g_cache.clear();
}

double sigma_explicit_value(double V, double K, double p, double lambda) {
  require(V > 0.0 && K > 0.0, "explicit ground energy needs V > 0 and K > 0");
  return canonical_energy(p, lambda) * std::pow(V, (5.0 - p) / (2.0 * p - 2.0)) * std::pow(K, -2.0 / (p - 1.0));
}

GroundEnergySample sigma_r_explicit(const Vec3& z, const ModelSpec& model) {
  const Nonlinearity& nl = model.nonlinearity;
  if (!nl.is_power()) fail(Error::Code::Unsupported, "explicit ground energy is only available for power f");
  Dual3 v = model.V_at(z), k = model.K_at(z);
  if (!(v.value > 0.0) || !(k.value > 0.0))
    fail(Error::Code::Assumption, "explicit ground energy needs V(z) > 0 and K(z) > 0");
  const double p = nl.p();
  const double a = (5.0 - p) / (2.0 * p - 2.0), b = 2.0 / (p - 1.0);
  GroundEnergySample s;
  s.z = z;
  s.sigma = sigma_explicit_value(v.value, k.value, p, nl.lambda());
  s.grad_sigma = s.sigma * ((a / v.value) * v.grad - (b / k.value) * k.grad);
  s.method = SigmaMethod::Explicit;
  return s;
}

namespace {

// Thomas algorithm for a symmetric tridiagonal system; diag and off are not modified.
void tridiag_solve(const std::vector<double>& diag, const std::vector<double>& off, std::vector<double>& x) {
  const std::size_t n = diag.size();
  std::vector<double> c(n), d(n);
  c[0] = off[0] / diag[0];
  d[0] = x[0] / diag[0];
  for (std::size_t i = 1; i < n; ++i) {
    double m = diag[i] - off[i - 1] * c[i - 1];
    c[i] = i + 1 < n ? off[i] / m : 0.0;
    d[i] = (x[i] - off[i - 1] * d[i - 1]) / m;
  }
  x[n - 1] = d[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) x[i] = d[i] - c[i] * x[i + 1];
}

}  // namespace

ConstrainedSigma constrained_sigma(const FrozenPoint& point, const Nonlinearity& nonlin,
                                   const ConstrainedOptions& opts) {
  RadialProfile w = shoot_radial(point, nonlin);
  const double V = point.Vz, K = point.Kz;
  const double P_w = w.potential_term - 0.5 * V * w.mass;
  if (!(P_w > 0.0)) fail(Error::Code::Bracket, "constraint infeasible: P(u) <= 0 for the shooting profile");
  ConstrainedSigma out;
  out.dilation = std::pow(P_w, -1.0 / 3.0);

  // Unknowns u_0 .. u_{N-1}; u_N = 0.
  const double dr = opts.dr_scale / std::sqrt(V);
  const std::size_t N = static_cast<std::size_t>(std::ceil(out.dilation * w.r_max() / dr));
  const double four_pi = 4.0 * std::numbers::pi;
  std::vector<double> a(N), c(N);
  for (std::size_t j = 0; j < N; ++j) {
    double r0 = j * dr, r1 = (j + 1) * dr;
    a[j] = four_pi * (r1 * r1 * r1 - r0 * r0 * r0) / (3.0 * dr * dr);
    c[j] = four_pi * r0 * r0 * dr;
  }
  std::vector<double> u(N);
  for (std::size_t j = 0; j < N; ++j) u[j] = w.value_at(j * dr / out.dilation);

  auto G = [&](double x) { return K * nonlin.F(x * x) - 0.5 * V * x * x; };
  auto g = [&](double x) { return K * nonlin.f(x * x) * x - V * x; };
  auto T_of = [&](const std::vector<double>& x) {
    double s = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
      double d = (j + 1 < N ? x[j + 1] : 0.0) - x[j];
      s += a[j] * d * d;
    }
    return s;
  };
  auto P_of = [&](const std::vector<double>& x) {
    double s = 0.0;
    for (std::size_t j = 0; j < N; ++j) s += c[j] * G(x[j]);
    return s;
  };
  auto grad_T = [&](const std::vector<double>& x) {
    std::vector<double> gT(N);
    for (std::size_t j = 0; j < N; ++j) {
      double left = j > 0 ? a[j - 1] * (x[j] - x[j - 1]) : 0.0;
      double right = a[j] * ((j + 1 < N ? x[j + 1] : 0.0) - x[j]);
      gT[j] = 2.0 * (left - right);
    }
    return gT;
  };
  auto grad_P = [&](const std::vector<double>& x) {
    std::vector<double> gP(N);
    for (std::size_t j = 0; j < N; ++j) gP[j] = c[j] * g(x[j]);
    return gP;
  };
  // Preconditioner B = stiffness + V * lumped mass (+ a tiny shift for the r = 0 row).
  std::vector<double> diag(N), off(N, 0.0);
  for (std::size_t j = 0; j < N; ++j) {
    diag[j] = (j > 0 ? a[j - 1] : 0.0) + a[j] + V * c[j] + (j == 0 ? 1e-12 * a[0] : 0.0);
    if (j + 1 < N) off[j] = -a[j];
  }
  auto dotv = [](const std::vector<double>& x, const std::vector<double>& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
  };
  auto project = [&](std::vector<double>& x) {
    for (int k = 0; k < 50; ++k) {
      double P = P_of(x);
      double err = std::abs(P - 1.0);
      if (err < 1e-14) break;
      std::vector<double> gP = grad_P(x);
      std::vector<double> y = gP;
      tridiag_solve(diag, off, y);
      double delta = (1.0 - P) / dotv(gP, y);
      for (std::size_t i = 0; i < N; ++i) x[i] += delta * y[i];
    }
    return std::abs(P_of(x) - 1.0);
  };

  out.max_constraint_error = project(u);
  double T = T_of(u);
  out.T_initial = T;
  int it = 0;
  for (; it < opts.max_iters; ++it) {
    std::vector<double> gT = grad_T(u), gP = grad_P(u);
    std::vector<double> yT = gT, yP = gP;
    tridiag_solve(diag, off, yT);
    tridiag_solve(diag, off, yP);
    double mu = dotv(gT, yP) / dotv(gP, yP);
    std::vector<double> d(N);
    for (std::size_t i = 0; i < N; ++i) d[i] = -(yT[i] - mu * yP[i]);
    double slope = dotv(gT, d) - mu * dotv(gP, d);
    if (-slope < opts.tol * T) break;
    double tau = 0.5;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls, tau *= 0.5) {
      std::vector<double> trial(N);
      for (std::size_t i = 0; i < N; ++i) trial[i] = u[i] + tau * d[i];
      double cerr = project(trial);
      double Tn = T_of(trial);
      if (Tn <= T) {
        u.swap(trial);
        out.max_constraint_error = std::max(out.max_constraint_error, cerr);
        accepted = T - Tn > opts.tol * T;
        T = Tn;
        break;
      }
    }
    if (!accepted) break;
  }
  out.iterations = it;
  out.sigma_raw = T;
  out.sigma_identified = std::sqrt(T * T * T / 54.0);
  return out;
}

RealField3 sample_profile(const RadialProfile& profile, const Grid3& grid, const Vec3& center) {
  return RealField3::sample(grid, [&](const Vec3& x) { return profile.value_at(norm(x - center)); });
}

}  // namespace spikemap
