#pragma once

#include <span>
#include <vector>

#include "core/frozen.hpp"

namespace spikemap {

/// Coefficient source for lattice problems on a y-grid: the model at x = z0 + scale * y, or
/// constants. Derivatives returned by `sample` are taken with respect to x.
class Coefficients {
 public:
  static Coefficients of_model(const ModelSpec& model, const Vec3& z0 = {0.0, 0.0, 0.0}, double scale = 1.0);
  /// V(z), K(z), A(z) frozen; all derivatives zero.
  static Coefficients frozen(const ModelSpec& model, const Vec3& z);
  static Coefficients constant(double V, double K, const Vec3& A = {0.0, 0.0, 0.0});

  CoefficientSample sample(const Vec3& y) const;
  Vec3 A(const Vec3& y) const;
  bool is_constant() const { return constant_; }
  const Vec3& z0() const { return z0_; }
  double scale() const { return scale_; }

 private:
  bool constant_ = true;
  ModelSpec model_;
  Vec3 z0_{};
  double scale_ = 1.0;
  CoefficientSample fixed_{};
};

/// Gauge-covariant fourth-order lattice for (eps/i grad - A)^2 + V with zero values outside the
/// grid. Links U(n, a) = exp(-(i/eps) * integral of A_a along the edge n -> n + h e_a), the
/// two-step link is the product of the two unit links.
class LatticeOperator {
 public:
  LatticeOperator(const Grid3& grid, const Coefficients& coef, double eps);

  const Grid3& grid() const { return grid_; }
  double eps() const { return eps_; }
  double cell_volume() const { return grid_.cell_volume(); }
  std::span<const double> V() const { return V_; }
  std::span<const double> K() const { return K_; }
  const Coefficients& coefficients() const { return coef_; }
  cplx link(int axis, std::size_t node) const { return uniform_ ? uniform_link_[axis] : links_[axis][node]; }

  /// out = H u (kinetic part only).
  void apply_kinetic(std::span<const cplx> u, std::span<cplx> out) const;
  /// out = (H + V) u.
  void apply(std::span<const cplx> u, std::span<cplx> out) const;
  /// int |D u|^2 in the lattice form (= h^3 <u, H u>).
  double kinetic_form(std::span<const cplx> u) const;
  /// int |D u|^2 + V |u|^2.
  double quadratic_form(std::span<const cplx> u) const;
  /// h^3 sum K F(|u|^2).
  double potential_energy(std::span<const cplx> u, const Nonlinearity& nl) const;
  /// Central link differences (eps/i)(U u_{n+1} - conj(U') u_{n-1}) / 2h; zero on the outer layer.
  ComplexVectorField3 covariant_gradient(const ComplexField3& u) const;

 private:
  Grid3 grid_;
  Coefficients coef_;
  double eps_;
  std::vector<double> V_, K_;
  bool uniform_ = false;
  std::array<cplx, 3> uniform_link_{};
  std::array<std::vector<cplx>, 3> links_;
};

/// Complex conjugate gradients for the Hermitian positive definite (H + V).
struct CgResult {
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};
CgResult conjugate_gradient(const LatticeOperator& op, std::span<const cplx> b, std::span<cplx> x, double rel_tol,
                            int max_iters, std::vector<cplx>* Ax_out = nullptr);

double energy_J(const LatticeOperator& op, std::span<const cplx> u, const Nonlinearity& nl);
/// Scale t with the Nehari condition for t u on this lattice.
double nehari_scale(const LatticeOperator& op, std::span<const cplx> u, const Nonlinearity& nl,
                    bool force_bisection = false);
/// |J'(u)[u]| / ||u||^2 with ||u||^2 the quadratic form.
double nehari_slack(const LatticeOperator& op, std::span<const cplx> u, const Nonlinearity& nl);
/// (H + V) u - K f(|u|^2) u.
ComplexField3 lattice_residual(const LatticeOperator& op, const ComplexField3& u, const Nonlinearity& nl);

struct GroundStateOptions {
  int max_iters = 400;
  double tol = 1e-9;  // ||L u - N(u)|| / ||N(u)||
  int cg_max_iters = 4000;
  double cg_floor = 1e-13;
  /// History length of the Anderson mixing; 0 runs the plain iteration.
  int anderson_depth = 5;
};

struct IterationRecord {
  int iter = 0;
  double energy = 0.0;
  double residual = 0.0;
  double nehari_slack = 0.0;
  int cg_iters = 0;
};

struct GroundStateResult {
  ComplexField3 u;
  double energy = 0.0;
  double residual = 0.0;
  double nehari_slack = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<IterationRecord> trace;
};

/// Nehari-normalized Sobolev iteration u <- t L^{-1} N(u) from `seed`.
GroundStateResult solve_ground_state(const LatticeOperator& op, const Nonlinearity& nl, ComplexField3 seed,
                                     const GroundStateOptions& opts = {});

}  // namespace spikemap
