#include "core/lattice.hpp"

#include <limits>

#include "core/parallel.hpp"

namespace spikemap {

Coefficients Coefficients::of_model(const ModelSpec& model, const Vec3& z0, double scale) {
  require(scale > 0.0, "coefficient scale must be positive");
  Coefficients c;
  c.constant_ = false;
  c.model_ = model;
  c.z0_ = z0;
  c.scale_ = scale;
  return c;
}

Coefficients Coefficients::frozen(const ModelSpec& model, const Vec3& z) {
  CoefficientSample s = model.sample(z);
  Coefficients c = constant(s.V, s.K, s.A);
  c.z0_ = z;
  return c;
}

Coefficients Coefficients::constant(double V, double K, const Vec3& A) {
  Coefficients c;
  c.constant_ = true;
  c.fixed_.V = V;
  c.fixed_.K = K;
  c.fixed_.A = A;
  return c;
}

CoefficientSample Coefficients::sample(const Vec3& y) const {
  if (constant_) return fixed_;
  return model_.sample(z0_ + scale_ * y);
}

Vec3 Coefficients::A(const Vec3& y) const {
  if (constant_) return fixed_.A;
  return model_.A_at(z0_ + scale_ * y);
}

namespace {

// Gauss-Legendre nodes and weights on [0, 1].
constexpr double kGaussX[4] = {0.5 - 0.5 * 0.8611363115940526, 0.5 - 0.5 * 0.3399810435848563,
                               0.5 + 0.5 * 0.3399810435848563, 0.5 + 0.5 * 0.8611363115940526};
constexpr double kGaussW[4] = {0.5 * 0.3478548451374538, 0.5 * 0.6521451548625461, 0.5 * 0.6521451548625461,
                               0.5 * 0.3478548451374538};

// Slabs of z-planes for parallel loops with a fixed reduction order.
struct Slabs {
  int nz;
  int per;
  std::size_t count() const { return static_cast<std::size_t>((nz + per - 1) / per); }
  int begin(std::size_t c) const { return static_cast<int>(c) * per; }
  int end(std::size_t c) const { return std::min(nz, static_cast<int>(c + 1) * per); }
};

Slabs slabs_for(const Grid3& g) { return {g.dims[2], std::max(1, g.dims[2] / 16)}; }

template <class Link>
void kinetic_kernel(const Grid3& g, double c1, double c2, const Link& link, const cplx* u, cplx* out, int k0, int k1) {
  const int nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];
  const std::size_t stride[3] = {1, static_cast<std::size_t>(nx), static_cast<std::size_t>(nx) * ny};
  for (int k = k0; k < k1; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        const std::size_t n = g.index(i, j, k);
        const int idx[3] = {i, j, k};
        const int len[3] = {nx, ny, nz};
        const cplx un = u[n];
        cplx acc = 0.0;
        for (int a = 0; a < 3; ++a) {
          const std::size_t s = stride[a];
          const int m = idx[a];
          cplx t1 = 2.0 * un, t2 = 2.0 * un;
          if (m + 1 < len[a]) {
            cplx l = link(a, n);
            t1 -= l * u[n + s];
            if (m + 2 < len[a]) t2 -= l * link(a, n + s) * u[n + 2 * s];
          }
          if (m >= 1) {
            cplx l = std::conj(link(a, n - s));
            t1 -= l * u[n - s];
            if (m >= 2) t2 -= l * std::conj(link(a, n - 2 * s)) * u[n - 2 * s];
          }
          acc += c1 * t1 - c2 * t2;
        }
        out[n] = acc;
      }
}

double dot_re(std::span<const cplx> a, std::span<const cplx> b, const Grid3& g) {
  Slabs sl = slabs_for(g);
  const std::size_t plane = static_cast<std::size_t>(g.dims[0]) * g.dims[1];
  return ordered_sum(sl.count(), [&](std::size_t c) {
    double s = 0.0;
    for (std::size_t n = sl.begin(c) * plane; n < sl.end(c) * plane; ++n) s += (std::conj(a[n]) * b[n]).real();
    return s;
  });
}

}  // namespace

LatticeOperator::LatticeOperator(const Grid3& grid, const Coefficients& coef, double eps)
    : grid_(grid), coef_(coef), eps_(eps) {
  require(eps > 0.0, "eps must be positive");
  grid.validate();
  const std::size_t N = grid.size();
  V_.resize(N);
  K_.resize(N);
  uniform_ = coef.is_constant();
  const double h = grid.spacing;
  if (uniform_) {
    Vec3 A = coef.A({0.0, 0.0, 0.0});
    for (int a = 0; a < 3; ++a) uniform_link_[a] = std::polar(1.0, -A[a] * h / eps);
  } else {
    for (auto& l : links_) l.assign(N, cplx(1.0, 0.0));
  }
  Slabs sl = slabs_for(grid);
  parallel_for(sl.count(), [&](std::size_t c) {
    for (int k = sl.begin(c); k < sl.end(c); ++k)
      for (int j = 0; j < grid.dims[1]; ++j)
        for (int i = 0; i < grid.dims[0]; ++i) {
          const std::size_t n = grid.index(i, j, k);
          const Vec3 y = grid.point(i, j, k);
          CoefficientSample s = coef.sample(y);
          V_[n] = s.V;
          K_[n] = s.K;
          if (uniform_) continue;
          const int idx[3] = {i, j, k};
          for (int a = 0; a < 3; ++a) {
            if (idx[a] + 1 >= grid.dims[a]) continue;
            double integral = 0.0;
            for (int q = 0; q < 4; ++q) {
              Vec3 yq = y;
              yq[a] += kGaussX[q] * h;
              integral += kGaussW[q] * coef.A(yq)[a];
            }
            links_[a][n] = std::polar(1.0, -integral * h / eps);
          }
        }
  });
}

void LatticeOperator::apply_kinetic(std::span<const cplx> u, std::span<cplx> out) const {
  require(u.size() == grid_.size() && out.size() == grid_.size(), "lattice operand size mismatch");
  const double h2 = grid_.spacing * grid_.spacing;
  const double c1 = (4.0 / 3.0) * eps_ * eps_ / h2, c2 = (1.0 / 12.0) * eps_ * eps_ / h2;
  Slabs sl = slabs_for(grid_);
  if (uniform_) {
    auto link = [this](int a, std::size_t) { return uniform_link_[a]; };
    parallel_for(sl.count(), [&](std::size_t c) {
      kinetic_kernel(grid_, c1, c2, link, u.data(), out.data(), sl.begin(c), sl.end(c));
    });
  } else {
    auto link = [this](int a, std::size_t n) { return links_[a][n]; };
    parallel_for(sl.count(), [&](std::size_t c) {
      kinetic_kernel(grid_, c1, c2, link, u.data(), out.data(), sl.begin(c), sl.end(c));
    });
  }
}

void LatticeOperator::apply(std::span<const cplx> u, std::span<cplx> out) const {
  apply_kinetic(u, out);
  for (std::size_t n = 0; n < u.size(); ++n) out[n] += V_[n] * u[n];
}

double LatticeOperator::kinetic_form(std::span<const cplx> u) const {
  std::vector<cplx> hu(u.size());
  apply_kinetic(u, hu);
  return dot_re(u, hu, grid_) * cell_volume();
}

double LatticeOperator::quadratic_form(std::span<const cplx> u) const {
  std::vector<cplx> lu(u.size());
  apply(u, lu);
  return dot_re(u, lu, grid_) * cell_volume();
}

double LatticeOperator::potential_energy(std::span<const cplx> u, const Nonlinearity& nl) const {
  Slabs sl = slabs_for(grid_);
  const std::size_t plane = static_cast<std::size_t>(grid_.dims[0]) * grid_.dims[1];
  return ordered_sum(sl.count(),
                     [&](std::size_t c) {
                       double s = 0.0;
                       for (std::size_t n = sl.begin(c) * plane; n < sl.end(c) * plane; ++n)
                         s += K_[n] * nl.F(std::norm(u[n]));
                       return s;
                     }) *
         cell_volume();
}

ComplexVectorField3 LatticeOperator::covariant_gradient(const ComplexField3& u) const {
  require_same_grid(grid_, u.grid(), "covariant_gradient");
  const Grid3& g = grid_;
  ComplexVectorField3 out{{ComplexField3(g), ComplexField3(g), ComplexField3(g)}};
  const std::size_t stride[3] = {1, static_cast<std::size_t>(g.dims[0]),
                                 static_cast<std::size_t>(g.dims[0]) * g.dims[1]};
  const cplx factor = eps_ / cplx(0.0, 2.0 * g.spacing);
  for (int k = 1; k + 1 < g.dims[2]; ++k)
    for (int j = 1; j + 1 < g.dims[1]; ++j)
      for (int i = 1; i + 1 < g.dims[0]; ++i) {
        const std::size_t n = g.index(i, j, k);
        for (int a = 0; a < 3; ++a) {
          const std::size_t s = stride[a];
          out.component[a][n] = factor * (link(a, n) * u[n + s] - std::conj(link(a, n - s)) * u[n - s]);
        }
      }
  return out;
}

CgResult conjugate_gradient(const LatticeOperator& op, std::span<const cplx> b, std::span<cplx> x, double rel_tol,
                            int max_iters, std::vector<cplx>* Ax_out) {
  const std::size_t N = b.size();
  const Grid3& g = op.grid();
  std::vector<cplx> r(N), p(N), Ap(N);
  op.apply(x, Ap);
  for (std::size_t n = 0; n < N; ++n) r[n] = b[n] - Ap[n];
  const double bnorm = std::sqrt(dot_re(b, b, g));
  CgResult res;
  if (bnorm == 0.0) {
    std::fill(x.begin(), x.end(), cplx(0.0));
    res.converged = true;
    if (Ax_out) Ax_out->assign(N, cplx(0.0));
    return res;
  }
  p = r;
  double rr = dot_re(r, r, g);
  int it = 0;
  while (std::sqrt(rr) > rel_tol * bnorm && it < max_iters) {
    op.apply(p, Ap);
    double alpha = rr / dot_re(p, Ap, g);
    for (std::size_t n = 0; n < N; ++n) {
      x[n] += alpha * p[n];
      r[n] -= alpha * Ap[n];
    }
    double rr_new = dot_re(r, r, g);
    double beta = rr_new / rr;
    rr = rr_new;
    for (std::size_t n = 0; n < N; ++n) p[n] = r[n] + beta * p[n];
    ++it;
  }
  res.iterations = it;
  res.relative_residual = std::sqrt(rr) / bnorm;
  res.converged = res.relative_residual <= rel_tol;
  if (Ax_out) {
    Ax_out->resize(N);
    for (std::size_t n = 0; n < N; ++n) (*Ax_out)[n] = b[n] - r[n];
  }
  return res;
}

double energy_J(const LatticeOperator& op, std::span<const cplx> u, const Nonlinearity& nl) {
  return 0.5 * op.quadratic_form(u) - op.potential_energy(u, nl);
}

namespace {

NehariTerms lattice_nehari_terms(const LatticeOperator& op, std::span<const cplx> u, const Nonlinearity& nl,
                                 double quadratic) {
  NehariTerms t;
  t.quadratic = quadratic;
  const double dv = op.cell_volume();
  auto K = op.K();
  if (nl.is_power()) {
    double s = 0.0;
    for (std::size_t n = 0; n < u.size(); ++n) s += K[n] * std::pow(std::abs(u[n]), nl.p() + 1.0);
    t.power_moment = s * dv;
  }
  t.nonlinear = [&op, u, &nl, dv](double scale) {
    auto K = op.K();
    double s = 0.0;
    for (std::size_t n = 0; n < u.size(); ++n) {
      double m = std::norm(u[n]);
      s += K[n] * nl.f(scale * scale * m) * m;
    }
    return s * dv;
  };
  return t;
}

}  // namespace

double nehari_scale(const LatticeOperator& op, std::span<const cplx> u, const Nonlinearity& nl, bool force_bisection) {
  return nehari_scale(lattice_nehari_terms(op, u, nl, op.quadratic_form(u)), nl, force_bisection);
}

double nehari_slack(const LatticeOperator& op, std::span<const cplx> u, const Nonlinearity& nl) {
  double q = op.quadratic_form(u);
  if (q == 0.0) return 0.0;
  double s = 0.0;
  auto K = op.K();
  for (std::size_t n = 0; n < u.size(); ++n) {
    double m = std::norm(u[n]);
    s += K[n] * nl.f(m) * m;
  }
  return std::abs(q - s * op.cell_volume()) / q;
}

ComplexField3 lattice_residual(const LatticeOperator& op, const ComplexField3& u, const Nonlinearity& nl) {
  require_same_grid(op.grid(), u.grid(), "lattice_residual");
  ComplexField3 r(u.grid());
  op.apply(u.values(), r.values());
  auto K = op.K();
  for (std::size_t n = 0; n < u.size(); ++n) r[n] -= K[n] * nl.f(std::norm(u[n])) * u[n];
  return r;
}

namespace {

/// Type-II Anderson acceleration for real-linear combinations of complex vectors.
class AndersonMixer {
 public:
  explicit AndersonMixer(std::size_t depth) : depth_(depth) {}

  void clear() {
    dF_.clear();
    dG_.clear();
    have_prev_ = false;
  }

  /// Given g = G(u) and f = g - u, returns the mixed iterate.
  std::vector<cplx> step(const std::vector<cplx>& g, const std::vector<cplx>& f) {
    if (have_prev_) {
      std::vector<cplx> df(f.size()), dg(g.size());
      for (std::size_t n = 0; n < f.size(); ++n) {
        df[n] = f[n] - prev_f_[n];
        dg[n] = g[n] - prev_g_[n];
      }
      dF_.push_back(std::move(df));
      dG_.push_back(std::move(dg));
      if (dF_.size() > depth_) {
        dF_.erase(dF_.begin());
        dG_.erase(dG_.begin());
      }
    }
    prev_f_ = f;
    prev_g_ = g;
    have_prev_ = true;
    const std::size_t m = dF_.size();
    if (m == 0) return g;
    // Normal equations with a relative Tikhonov floor.
    std::vector<double> A(m * m), b(m);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        double s = 0.0;
        for (std::size_t n = 0; n < f.size(); ++n) s += (std::conj(dF_[i][n]) * dF_[j][n]).real();
        A[i * m + j] = A[j * m + i] = s;
      }
      double s = 0.0;
      for (std::size_t n = 0; n < f.size(); ++n) s += (std::conj(dF_[i][n]) * f[n]).real();
      b[i] = s;
    }
    double trace = 0.0;
    for (std::size_t i = 0; i < m; ++i) trace += A[i * m + i];
    for (std::size_t i = 0; i < m; ++i) A[i * m + i] += 1e-12 * trace;
    std::vector<double> gamma = solve_dense(A, b, m);
    std::vector<cplx> out = g;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t n = 0; n < out.size(); ++n) out[n] -= gamma[i] * dG_[i][n];
    return out;
  }

 private:
  static std::vector<double> solve_dense(std::vector<double> A, std::vector<double> b, std::size_t m) {
    for (std::size_t c = 0; c < m; ++c) {
      std::size_t piv = c;
      for (std::size_t r = c + 1; r < m; ++r)
        if (std::abs(A[r * m + c]) > std::abs(A[piv * m + c])) piv = r;
      for (std::size_t k = 0; k < m; ++k) std::swap(A[c * m + k], A[piv * m + k]);
      std::swap(b[c], b[piv]);
      if (A[c * m + c] == 0.0) continue;
      for (std::size_t r = c + 1; r < m; ++r) {
        double q = A[r * m + c] / A[c * m + c];
        for (std::size_t k = c; k < m; ++k) A[r * m + k] -= q * A[c * m + k];
        b[r] -= q * b[c];
      }
    }
    std::vector<double> x(m, 0.0);
    for (std::size_t c = m; c-- > 0;) {
      double s = b[c];
      for (std::size_t k = c + 1; k < m; ++k) s -= A[c * m + k] * x[k];
      x[c] = A[c * m + c] != 0.0 ? s / A[c * m + c] : 0.0;
    }
    return x;
  }

  std::size_t depth_;
  std::vector<std::vector<cplx>> dF_, dG_;
  std::vector<cplx> prev_f_, prev_g_;
  bool have_prev_ = false;
};

}  // namespace

GroundStateResult solve_ground_state(const LatticeOperator& op, const Nonlinearity& nl, ComplexField3 seed,
                                     const GroundStateOptions& opts) {
  require_same_grid(op.grid(), seed.grid(), "solve_ground_state seed");
  const std::size_t N = seed.size();
  const Grid3& g = op.grid();
  auto K = op.K();
  GroundStateResult out;
  std::vector<cplx> u = std::move(seed.storage());
  {
    double t = nehari_scale(op, u, nl);
    for (auto& v : u) v *= t;
  }
  std::vector<cplx> Lu(N), Nu(N), w(N), Lw;
  double cg_tol = 1e-6;
  double best_residual = std::numeric_limits<double>::infinity();
  AndersonMixer anderson(static_cast<std::size_t>(std::max(0, opts.anderson_depth)));
  for (int it = 0;; ++it) {
    op.apply(u, Lu);
    for (std::size_t n = 0; n < N; ++n) Nu[n] = K[n] * nl.f(std::norm(u[n])) * u[n];
    double q = dot_re(u, Lu, g) * op.cell_volume();
    double nl_work = dot_re(u, Nu, g) * op.cell_volume();
    double rnorm = 0.0, nnorm = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      rnorm += std::norm(Lu[n] - Nu[n]);
      nnorm += std::norm(Nu[n]);
    }
    IterationRecord rec;
    rec.iter = it;
    rec.energy = 0.5 * q - op.potential_energy(u, nl);
    rec.residual = nnorm > 0.0 ? std::sqrt(rnorm / nnorm) : 0.0;
    rec.nehari_slack = q > 0.0 ? std::abs(q - nl_work) / q : 0.0;
    out.energy = rec.energy;
    out.residual = rec.residual;
    out.nehari_slack = rec.nehari_slack;
    out.iterations = it;
    if (!std::isfinite(rec.energy) || !std::isfinite(rec.residual) || nnorm == 0.0) {
      out.trace.push_back(rec);
      fail(Error::Code::NonConvergence, "ground-state iteration diverged at iteration " + std::to_string(it));
    }
    if (rec.residual < opts.tol) {
      out.trace.push_back(rec);
      out.converged = true;
      break;
    }
    if (it >= opts.max_iters) {
      out.trace.push_back(rec);
      break;
    }
    // w = L^{-1} N(u), warm-started from u (the fixed point satisfies w = u).
    cg_tol = std::max(opts.cg_floor, std::min(1e-3, 0.05 * rec.residual));
    w = u;
    CgResult cg = conjugate_gradient(op, Nu, w, cg_tol, opts.cg_max_iters, &Lw);
    rec.cg_iters = cg.iterations;
    out.trace.push_back(rec);
    double qw = dot_re(w, Lw, g) * op.cell_volume();
    double t = nehari_scale(lattice_nehari_terms(op, w, nl, qw), nl);
    for (auto& v : w) v *= t;
    if (opts.anderson_depth <= 0) {
      u.swap(w);
      continue;
    }
    // Anderson mixing on the fixed-point map G(u) = t L^{-1} N(u); history restarts when the
    // residual grows past twice its best value.
    best_residual = std::min(best_residual, rec.residual);
    if (rec.residual > 2.0 * best_residual) anderson.clear();
    std::vector<cplx> f(N);
    for (std::size_t n = 0; n < N; ++n) f[n] = w[n] - u[n];
    std::vector<cplx> mixed = anderson.step(w, f);
    double tm = nehari_scale(op, mixed, nl);
    for (std::size_t n = 0; n < N; ++n) u[n] = tm * mixed[n];
  }
  out.u = ComplexField3(g, std::move(u));
  return out;
}

}  // namespace spikemap
