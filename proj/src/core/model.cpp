#include "core/model.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace spikemap {

namespace {

std::string fmt_point(const Vec3& x) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "(%.6g, %.6g, %.6g)", x[0], x[1], x[2]);
  return buf;
}

// Fritsch-Carlson slopes for monotone cubic Hermite interpolation.
std::vector<double> pchip_slopes(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  std::vector<double> h(n - 1), delta(n - 1), d(n, 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    h[i] = x[i + 1] - x[i];
    delta[i] = (y[i + 1] - y[i]) / h[i];
  }
  if (n == 2) {
    d[0] = d[1] = delta[0];
    return d;
  }
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (delta[i - 1] * delta[i] <= 0.0) {
      d[i] = 0.0;
    } else {
      double w1 = 2.0 * h[i] + h[i - 1], w2 = h[i] + 2.0 * h[i - 1];
      d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
    }
  }
  auto end_slope = [](double h0, double h1, double d0, double d1) {
    double s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (s * d0 <= 0.0) return 0.0;
    if (d0 * d1 <= 0.0 && std::abs(s) > std::abs(3.0 * d0)) return 3.0 * d0;
    return s;
  };
  d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
  d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
  return d;
}

double hermite(double x0, double x1, double y0, double y1, double d0, double d1, double x) {
  double h = x1 - x0, t = (x - x0) / h;
  double t2 = t * t, t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * h * d0 + (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * h * d1;
}

// Exact integral of the cubic Hermite piece from x0 to x (Simpson is exact on cubics).
double hermite_integral(double x0, double x1, double y0, double y1, double d0, double d1, double x) {
  double m = 0.5 * (x0 + x);
  return (x - x0) / 6.0 *
         (hermite(x0, x1, y0, y1, d0, d1, x0) + 4.0 * hermite(x0, x1, y0, y1, d0, d1, m) +
          hermite(x0, x1, y0, y1, d0, d1, x));
}

}  // namespace

Nonlinearity Nonlinearity::power(double lambda, double p, double theta) {
  require(std::isfinite(p) && p > 1.0 && p < 5.0, "power nonlinearity needs p in the open interval (1, 5)");
  require(std::isfinite(lambda) && lambda > 0.0, "power nonlinearity needs lambda > 0");
  Nonlinearity n;
  n.kind_ = Kind::Power;
  n.lambda_ = lambda;
  n.p_ = p;
  n.theta_ = theta > 0.0 ? theta : p + 1.0;
  require(n.theta_ > 2.0, "theta must exceed 2");
  n.label_ = "power";
  return n;
}

Nonlinearity Nonlinearity::custom(std::function<double(double)> f, std::function<double(double)> F, double theta,
                                  std::string label) {
  require(static_cast<bool>(f) && static_cast<bool>(F), "custom nonlinearity needs both f and F");
  require(theta > 2.0, "theta must exceed 2");
  Nonlinearity n;
  n.kind_ = Kind::Custom;
  n.theta_ = theta;
  n.f_ = std::move(f);
  n.F_ = std::move(F);
  n.label_ = std::move(label);
  return n;
}

Nonlinearity Nonlinearity::table(std::vector<double> s, std::vector<double> f, double theta, std::string label) {
  require(s.size() == f.size() && s.size() >= 2, "nonlinearity table needs at least two (s, f) rows");
  require(theta > 2.0, "theta must exceed 2");
  for (std::size_t i = 0; i < s.size(); ++i) {
    require(std::isfinite(s[i]) && std::isfinite(f[i]), "nonlinearity table values must be finite");
    require(s[i] >= 0.0, "nonlinearity table needs s >= 0");
    if (i > 0) require(s[i] > s[i - 1], "nonlinearity table s column must be strictly increasing");
  }
  if (s.front() > 0.0) {
    s.insert(s.begin(), 0.0);
    f.insert(f.begin(), 0.0);
  }
  require(f.front() == 0.0, "nonlinearity table needs f(0) = 0");
  require(s.size() >= 3, "nonlinearity table needs at least two positive nodes");
  Nonlinearity n;
  n.kind_ = Kind::Table;
  n.theta_ = theta;
  n.label_ = std::move(label);
  n.tslope_ = pchip_slopes(s, f);
  n.tF_.assign(s.size(), 0.0);
  for (std::size_t i = 0; i + 1 < s.size(); ++i)
    n.tF_[i + 1] = n.tF_[i] + 0.5 * hermite_integral(s[i], s[i + 1], f[i], f[i + 1], n.tslope_[i],
                                                      n.tslope_[i + 1], s[i + 1]);
  const std::size_t last = s.size() - 1;
  require(f[last] > 0.0 && f[last - 1] > 0.0, "nonlinearity table must end with positive f values");
  n.tail_exponent_ = std::log(f[last] / f[last - 1]) / std::log(s[last] / s[last - 1]);
  n.ts_ = std::move(s);
  n.tf_ = std::move(f);
  return n;
}

Nonlinearity Nonlinearity::from_table_file(const std::string& path, double theta) {
  std::ifstream in(path);
  if (!in) fail(Error::Code::Io, "cannot open nonlinearity table: " + path);
  std::vector<double> s, f;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    double a, b;
    if (!(row >> a)) continue;
    if (!(row >> b)) throw ParseError("nonlinearity table row needs two numbers (line " + std::to_string(lineno) + ")", 0);
    s.push_back(a);
    f.push_back(b);
  }
  return table(std::move(s), std::move(f), theta, path);
}

double Nonlinearity::f(double s) const {
  switch (kind_) {
    case Kind::Power:
      return s <= 0.0 ? 0.0 : lambda_ * std::pow(s, 0.5 * (p_ - 1.0));
    case Kind::Custom:
      return f_(s);
    case Kind::Table: {
      if (s <= 0.0) return 0.0;
      const std::size_t last = ts_.size() - 1;
      if (s >= ts_[last]) return tf_[last] * std::pow(s / ts_[last], tail_exponent_);
      std::size_t i = static_cast<std::size_t>(std::upper_bound(ts_.begin(), ts_.end(), s) - ts_.begin()) - 1;
      return hermite(ts_[i], ts_[i + 1], tf_[i], tf_[i + 1], tslope_[i], tslope_[i + 1], s);
    }
  }
  return 0.0;
}

double Nonlinearity::F(double s) const {
  switch (kind_) {
    case Kind::Power:
      return s <= 0.0 ? 0.0 : lambda_ * std::pow(s, 0.5 * (p_ + 1.0)) / (p_ + 1.0);
    case Kind::Custom:
      return F_(s);
    case Kind::Table: {
      if (s <= 0.0) return 0.0;
      const std::size_t last = ts_.size() - 1;
      if (s >= ts_[last]) {
        double q = tail_exponent_ + 1.0;
        return tF_[last] + 0.5 * tf_[last] * ts_[last] / q * (std::pow(s / ts_[last], q) - 1.0);
      }
      std::size_t i = static_cast<std::size_t>(std::upper_bound(ts_.begin(), ts_.end(), s) - ts_.begin()) - 1;
      return tF_[i] + 0.5 * hermite_integral(ts_[i], ts_[i + 1], tf_[i], tf_[i + 1], tslope_[i], tslope_[i + 1], s);
    }
  }
  return 0.0;
}

std::string Nonlinearity::describe() const {
  char buf[128];
  if (kind_ == Kind::Power) {
    std::snprintf(buf, sizeof buf, "power(lambda=%.17g, p=%.17g, theta=%.17g)", lambda_, p_, theta_);
  } else {
    std::snprintf(buf, sizeof buf, "%s(theta=%.17g)", kind_ == Kind::Custom ? "custom" : "table", theta_);
  }
  return buf;
}

CoefficientSample ModelSpec::sample(const Vec3& x) const {
  CoefficientSample c;
  Dual3 v = V.eval_with_gradient(x), k = K.eval_with_gradient(x);
  c.V = v.value;
  c.gradV = v.grad;
  c.K = k.value;
  c.gradK = k.grad;
  for (int m = 0; m < 3; ++m) {
    Dual3 a = A[m].eval_with_gradient(x);
    c.A[m] = a.value;
    c.dA[m] = a.grad;
  }
  c.divA = c.dA[0][0] + c.dA[1][1] + c.dA[2][2];
  return c;
}

Mat3 ModelSpec::hessian(const PotentialExpr& e, const Vec3& x) {
  Mat3 h{};
  for (int i = 0; i < 3; ++i) h[i] = e.derivative(i).eval_with_gradient(x).grad;
  return h;
}

bool ModelSpec::has_magnetic_field_terms() const {
  return !(A[0].is_constant() && A[1].is_constant() && A[2].is_constant());
}

std::pair<ComplexField3, ModelSpec> gauge_transform(const ComplexField3& u, const ModelSpec& model,
                                                    const GaugeFunction& chi, double eps) {
  require(eps > 0.0, "eps must be positive");
  ModelSpec out = model;
  for (int k = 0; k < 3; ++k) out.A[k] = model.A[k] + chi.chi.derivative(k);
  const Grid3& g = u.grid();
  ComplexField3 v(g);
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i)
        v.at(i, j, k) = std::polar(1.0, chi.chi.eval(g.point(i, j, k)) / eps) * u.at(i, j, k);
  return {std::move(v), std::move(out)};
}

namespace {

std::vector<Vec3> direction_net(int count) {
  std::vector<Vec3> dirs;
  for (int a = -1; a <= 1; ++a)
    for (int b = -1; b <= 1; ++b)
      for (int c = -1; c <= 1; ++c) {
        if (a == 0 && b == 0 && c == 0) continue;
        Vec3 d{double(a), double(b), double(c)};
        dirs.push_back((1.0 / norm(d)) * d);
      }
  dirs.resize(std::min<std::size_t>(dirs.size(), static_cast<std::size_t>(std::max(count, 1))));
  return dirs;
}

double fit_growth(const std::vector<double>& r, const std::vector<double>& m) {
  // Least squares slope of log m against r over the finite, positive entries.
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < r.size(); ++i)
    if (std::isfinite(m[i]) && m[i] > 0.0) pts.emplace_back(r[i], std::log(m[i]));
  if (pts.size() < 2) return 0.0;
  double sx = 0, sy = 0, sxx = 0, sxy = 0, n = static_cast<double>(pts.size());
  for (auto [x, y] : pts) {
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  double den = n * sxx - sx * sx;
  return den > 0.0 ? (n * sxy - sx * sy) / den : 0.0;
}

}  // namespace

ValidationReport validate_assumptions(const ModelSpec& model, const ValidationLattice& lattice) {
  ValidationReport rep;
  rep.min_V = std::numeric_limits<double>::infinity();
  rep.max_K = -std::numeric_limits<double>::infinity();
  rep.min_K = std::numeric_limits<double>::infinity();
  auto visit = [&](const Vec3& x) {
    double v = model.V.eval(x), k = model.K.eval(x);
    if (!(v > 0.0)) fail(Error::Code::Assumption, "V = " + std::to_string(v) + " <= 0 at " + fmt_point(x));
    if (!(k > 0.0)) fail(Error::Code::Assumption, "K = " + std::to_string(k) + " <= 0 at " + fmt_point(x));
    if (v < rep.min_V) {
      rep.min_V = v;
      rep.argmin_V = x;
    }
    if (k > rep.max_K) {
      rep.max_K = k;
      rep.argmax_K = x;
    }
    rep.min_K = std::min(rep.min_K, k);
  };
  const Grid3& box = lattice.box;
  box.validate();
  for (int k = 0; k < box.dims[2]; ++k)
    for (int j = 0; j < box.dims[1]; ++j)
      for (int i = 0; i < box.dims[0]; ++i) visit(box.point(i, j, k));

  // Growth ladder: the spheres also feed the positivity checks while V, K stay finite.
  auto dirs = direction_net(lattice.directions_per_radius);
  std::vector<double> m_dA, m_gV, m_gK;
  for (double r : lattice.radii) {
    double a = 0.0, gv = 0.0, gk = 0.0;
    bool finite = true;
    for (const Vec3& d : dirs) {
      Vec3 x = box.origin + r * d;
      try {
        CoefficientSample c = model.sample(x);
        if (!(c.V > 0.0)) fail(Error::Code::Assumption, "V = " + std::to_string(c.V) + " <= 0 at " + fmt_point(x));
        if (!(c.K > 0.0)) fail(Error::Code::Assumption, "K = " + std::to_string(c.K) + " <= 0 at " + fmt_point(x));
        rep.min_V = std::min(rep.min_V, c.V);
        rep.max_K = std::max(rep.max_K, c.K);
        double s = 0.0;
        for (const auto& row : c.dA) s += dot(row, row);
        a = std::max(a, std::sqrt(s));
        gv = std::max(gv, norm(c.gradV));
        gk = std::max(gk, norm(c.gradK));
      } catch (const DomainError&) {
        finite = false;
      }
    }
    double inf = std::numeric_limits<double>::infinity();
    m_dA.push_back(finite ? a : inf);
    m_gV.push_back(finite ? gv : inf);
    m_gK.push_back(finite ? gk : inf);
    if (!finite) rep.notes.push_back("coefficients not finite on the sphere of radius " + std::to_string(r));
  }
  rep.gamma_dA = fit_growth(lattice.radii, m_dA);
  rep.gamma_gradV = fit_growth(lattice.radii, m_gV);
  rep.gamma_gradK = fit_growth(lattice.radii, m_gK);

  if (model.V0 > 0.0) {
    if (model.V0 > rep.min_V * (1.0 + 1e-12))
      fail(Error::Code::Assumption, "declared V0 = " + std::to_string(model.V0) + " exceeds sampled min V = " +
                                        std::to_string(rep.min_V) + " at " + fmt_point(rep.argmin_V));
    rep.V0 = model.V0;
  } else {
    rep.V0 = rep.min_V;
  }
  if (model.K0 > 0.0) {
    if (model.K0 < rep.max_K * (1.0 - 1e-12))
      fail(Error::Code::Assumption, "declared K0 = " + std::to_string(model.K0) + " is below sampled max K = " +
                                        std::to_string(rep.max_K) + " at " + fmt_point(rep.argmax_K));
    rep.K0 = model.K0;
  } else {
    rep.K0 = rep.max_K;
  }

  // Nonlinearity: f(0) = 0, f increasing, 0 < theta F(s) <= f(s) s.
  const Nonlinearity& nl = model.nonlinearity;
  std::vector<double> s = lattice.s_samples;
  if (s.empty())
    for (int e = -80; e <= 40; ++e) s.push_back(std::pow(10.0, e / 10.0));
  std::sort(s.begin(), s.end());
  if (nl.f(0.0) != 0.0) {
    ++rep.f_monotonic_violations;
    rep.notes.push_back("f(0) != 0");
  }
  double prev = nl.f(0.0);
  for (double si : s) {
    double fv = nl.f(si), Fv = nl.F(si);
    if (!(fv > prev)) {
      if (rep.f_monotonic_violations++ == 0) rep.notes.push_back("f not increasing at s = " + std::to_string(si));
    }
    prev = fv;
    double lhs = nl.theta() * Fv, rhs = fv * si;
    if (!(lhs > 0.0) || lhs > rhs * (1.0 + 1e-12)) {
      if (rep.theta_violations++ == 0)
        rep.notes.push_back("theta condition fails at s = " + std::to_string(si) + " (theta F = " +
                            std::to_string(lhs) + ", f s = " + std::to_string(rhs) + ")");
    }
  }
  return rep;
}

}  // namespace spikemap
