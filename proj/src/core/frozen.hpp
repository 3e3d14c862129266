#pragma once

#include <functional>
#include <string>
#include <vector>

#include "core/model.hpp"

namespace spikemap {

/// Coefficients of the limiting problem frozen at z.
struct FrozenPoint {
  Vec3 z{};
  double Vz = 1.0;
  double Kz = 1.0;
  Vec3 Az{};
  Vec3 gradV{};
  Vec3 gradK{};
  Mat3 dA{};

  static FrozenPoint at(const ModelSpec& model, const Vec3& z);
  static FrozenPoint constant(double V, double K, const Vec3& A = {0.0, 0.0, 0.0});
};

/// Radial ground state u(r) of -u'' - (2/r) u' + V u = K f(u^2) u on r_j = j * dr, with an
/// analytic tail C exp(-k r) / r + D exp(-2 k r) / r^2, k = sqrt(V), attached from `tail_start` on.
struct RadialProfile {
  double V = 1.0;
  double K = 1.0;
  double dr = 0.0;
  std::vector<double> u;
  std::vector<double> du;
  double tail_start = 0.0;
  double tail_C = 0.0;
  double tail_D = 0.0;

  double alpha = 0.0;          // u(0)
  double bracket_width = 0.0;  // final shooting bracket on u(0), relative
  double residual_rms = 0.0;   // ||radial PDE residual|| / ||u|| in L2(R^3)
  double energy = 0.0;         // I_z(u)
  double kinetic = 0.0;        // int |grad u|^2
  double mass = 0.0;           // int u^2
  double potential_term = 0.0; // int K F(u^2)
  double nehari_term = 0.0;    // int K f(u^2) u^2

  std::size_t n() const { return u.size(); }
  double r(std::size_t j) const { return static_cast<double>(j) * dr; }
  double r_max() const { return r(u.size() - 1); }
  /// Cubic Hermite interpolation on the grid, analytic tail beyond it.
  double value_at(double r) const;
  double derivative_at(double r) const;
};

struct ShootingOptions {
  double tol = 1e-15;      // relative bracket width on u(0)
  double dr_scale = 2e-3;  // dr = dr_scale / sqrt(V)
  int max_bisections = 80;
  double ladder_low = 0.1;
  double ladder_high = 100.0;
  int ladder_steps = 60;
};

RadialProfile shoot_radial(const FrozenPoint& point, const Nonlinearity& nonlin, const ShootingOptions& opts = {});

/// Scale t > 0 with I'(tu)[tu] = 0, given the quadratic part Q = int |Du|^2 + V |u|^2 and
/// the map t -> int K f(t^2 |u|^2) |u|^2. The power case uses `power_moment` = int K |u|^(p+1)
/// in closed form unless `force_bisection` is set.
struct NehariTerms {
  double quadratic = 0.0;
  std::function<double(double)> nonlinear;
  double power_moment = -1.0;
};
double nehari_scale(const NehariTerms& terms, const Nonlinearity& nonlin, bool force_bisection = false);
/// Nehari scale of a radial trial profile.
double nehari_project(const RadialProfile& trial, const FrozenPoint& point, const Nonlinearity& nonlin,
                      bool force_bisection = false);

enum class SigmaMethod { Shooting, Explicit, Flow3d };
const char* to_string(SigmaMethod m);

struct GroundEnergySample {
  Vec3 z{};
  double sigma = 0.0;
  Vec3 grad_sigma{};
  SigmaMethod method = SigmaMethod::Shooting;
  std::string note;
};

/// Least energy of the frozen problem at `point` by shooting. The gradient uses the explicit
/// power-law formula when available, the directional-derivative integrals otherwise.
GroundEnergySample sigma_r(const FrozenPoint& point, const Nonlinearity& nonlin, const ShootingOptions& opts = {});

/// Least energy at V = K = 1 for the power nonlinearity; cached per (p, lambda).
double canonical_energy(double p, double lambda = 1.0);
void clear_canonical_energy_cache();

/// E(p) V^((5-p)/(2p-2)) K^(-2/(p-1)) with its analytic gradient. Power nonlinearity only.
GroundEnergySample sigma_r_explicit(const Vec3& z, const ModelSpec& model);
double sigma_explicit_value(double V, double K, double p, double lambda = 1.0);

/// min int |grad u|^2 subject to P(u) = int K F(u^2) - V u^2 / 2 = 1 on a radial P1 grid.
struct ConstrainedSigma {
  double sigma_raw = 0.0;      // min T on the constraint
  double sigma_identified = 0.0;  // sqrt(sigma_raw^3 / 54), the value comparable with sigma_r
  double T_initial = 0.0;      // T of the dilated shooting profile
  double max_constraint_error = 0.0;
  int iterations = 0;
  double dilation = 0.0;       // s with u_s(x) = w(x / s) on the constraint
};
struct ConstrainedOptions {
  double dr_scale = 1e-3;
  int max_iters = 200;
  double tol = 1e-12;
};
ConstrainedSigma constrained_sigma(const FrozenPoint& point, const Nonlinearity& nonlin,
                                   const ConstrainedOptions& opts = {});

/// Samples the radial profile on a grid, centred at `center`.
RealField3 sample_profile(const RadialProfile& profile, const Grid3& grid, const Vec3& center = {0.0, 0.0, 0.0});

}  // namespace spikemap
