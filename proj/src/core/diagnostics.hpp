#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "core/magnetic.hpp"

namespace spikemap {

struct DiamagneticResult {
  double min_slack = 0.0;  // min over interior nodes of |D u| - eps |grad |u||
  Vec3 argmin{};
  std::size_t nodes = 0;
};
/// Uses the link differences of the solver lattice, for which the inequality holds node by node.
DiamagneticResult diamagnetic_check(const ComplexField3& u, const ModelSpec& model, double eps);
DiamagneticResult diamagnetic_check(const ComplexField3& u, const LatticeOperator& op);

struct CurrentDensity {
  RealVectorField3 field;  // Re(i conj(U) grad U)
  double sup_normalized = 0.0;  // sup |j| / (sup |U| * sup |grad U|)
};
CurrentDensity current_density(const ComplexField3& U);

/// Per-axis integrals with their denominators (sum of absolute values of the constituent terms).
struct IdentityResidual {
  Vec3 residual{};
  Vec3 scale{};
  double relative = 0.0;  // max_k |residual_k| / max_k scale_k
  double boundary_mass = 0.0;
  std::vector<std::string> notes;
};

/// For each k: int <dA/dx_k, A>|v|^2 - Re<(1/i) grad v, (dA/dx_k) v> + (dV/dx_k)|v|^2 / 2
/// - (dK/dx_k) F(|v|^2), coefficients at z0 + eps y for the nodes y of v. Throws
/// Error::Code::BoundaryMass when more than 1e-4 of the mass sits on the two outer layers.
IdentityResidual pucci_serrin_residual(const ComplexField3& v, const Vec3& z0, double eps, const ModelSpec& model);

/// For each k: <dA/dx_k(z0), int Re(i conj(U) grad U)> + dV/dx_k(z0) int |U|^2 / 2
/// - dK/dx_k(z0) int F(|U|^2).
IdentityResidual limit_identity_residual(const ComplexField3& U, const Vec3& z0, const ModelSpec& model);
/// Same bracket for a real radial profile (no current term).
IdentityResidual limit_identity_residual(const RadialProfile& U, const Vec3& z0, const ModelSpec& model);

struct DecayFit {
  double raw_rate = 0.0;        // -slope of log |u| against r
  double corrected_rate = 0.0;  // -slope of log(r |u|) against r
  double r1 = 0.0, r2 = 0.0;
  std::size_t samples = 0;
};
/// Least squares over 256 radii in [r1, r2]; samples with |u| <= 1e-12 max |u| are dropped.
DecayFit decay_fit(const RadialProfile& u, double r1, double r2);
/// Shell maxima of |u| around `center` with shell width = spacing.
DecayFit decay_fit(const ComplexField3& u, const Vec3& center, double r1, double r2);
/// [2 FWHM, radius where u falls to 1e-10 u(0)].
std::pair<double, double> default_decay_window(const RadialProfile& u);
/// [2 FWHM, 0.7 * distance from the centre to the nearest face].
std::pair<double, double> default_decay_window(const ComplexField3& u, const Vec3& center);

/// One-sided derivatives of the ground-energy map along w from the computed ground state:
/// (dV/dw) int w^2 / 2 - (dK/dw) int F(w^2). The solution set is a singleton, so left = right.
struct DirectionalDerivative {
  double left = 0.0;
  double right = 0.0;
};
DirectionalDerivative directional_derivative_sigma(const Vec3& z, const Vec3& w, const ModelSpec& model);

struct ClarkeOptions {
  double rho = 1e-3;
  std::vector<double> lambdas{1e-3, 5e-4, 2.5e-4};
  int random_directions = 50;
  std::uint64_t seed = 7;
  /// Ball samples: the centre plus rho times each net direction.
  bool sample_ball_with_net = true;
};

struct ClarkeVerdict {
  bool member = false;
  double margin = 0.0;  // min over the net of the sampled generalized directional derivative
  std::optional<bool> smooth_member;  // grad sigma = 0 test when the explicit map is available
  double grad_norm = 0.0;
  int directions = 0;
  int evaluations = 0;
  std::string confidence;
};

/// 26 lattice directions followed by `random` unit vectors.
std::vector<Vec3> direction_net(int random, std::uint64_t seed);

ClarkeVerdict clarke_critical_test(const Vec3& z, const std::function<double(const Vec3&)>& sigma,
                                   const ClarkeOptions& opts = {});
/// Power f uses the explicit map, otherwise shooting.
ClarkeVerdict clarke_critical_test(const Vec3& z, const ModelSpec& model, const ClarkeOptions& opts = {});

struct GammaPM {
  double gamma_minus = 0.0;  // sup of the bracket over the solution set
  double gamma_plus = 0.0;   // inf
  double phase_spread = 0.0;  // spread of the bracket over the constant-phase orbit of each member
};
/// Bracket <dA/dw, int Re(i conj(U) grad U)> + (dV/dw) int |U|^2 / 2 - (dK/dw) int F(|U|^2) at z.
double gamma_bracket(const ComplexField3& U, const Vec3& z, const Vec3& w, const ModelSpec& model);
GammaPM gamma_pm(const Vec3& z, const Vec3& w, const ModelSpec& model, const std::vector<ComplexField3>& solutions,
                 int phase_samples = 8);
/// The bracket is linear in w: brackets[s][q] holds its coefficient vector for solution s rotated by
/// the q-th phase, so the bounds along many directions cost one pass over the fields.
std::vector<std::vector<Vec3>> gamma_brackets(const Vec3& z, const ModelSpec& model,
                                              const std::vector<ComplexField3>& solutions, int phase_samples = 8);
GammaPM gamma_pm(const std::vector<std::vector<Vec3>>& brackets, const Vec3& w);

struct ConcentrationRow {
  double eps = 0.0;
  Vec3 spike{};
  double scaled_energy = 0.0;
  double value_at_target = 0.0;  // |u(z0)| / sup |u|
  std::vector<double> tail;      // sup |u| outside B(z0, eps rho) / sup |u|, per rho
  double energy_gap = 0.0;       // |eps^-3 J - sigma(z0)|
};

struct ConcentrationStudy {
  std::vector<double> eps_list;
  std::vector<double> rho_ladder;
  Vec3 target_z{};
  double sigma_at_target = 0.0;
  std::vector<ConcentrationRow> rows;
  bool energy_gap_decreasing = false;
  bool tail_decreasing = false;
  bool pointwise_concentrates = false;
  bool energy_concentrates = false;

  std::string to_csv() const;
};

/// Family sorted by strictly decreasing eps. Pointwise verdict: over the finer half of the family,
/// |u(z0)| >= sup|u| / 2 and the tail beyond eps * max(rho) stays below 1e-2 of the peak. Energetic
/// verdict: over the same members, the scaled energy is within 5% of sigma at z0.
ConcentrationStudy concentration_metrics(const std::vector<MagneticSolution>& family, const Vec3& z0,
                                         const ModelSpec& model, std::vector<double> rho_ladder = {2.0, 4.0, 8.0});

struct DiagnosticsReport {
  double diamagnetic_slack_min = 0.0;
  double current_density_norm = 0.0;
  IdentityResidual pucci_serrin;
  DecayFit decay;
  double decay_lower_bound = 0.0;  // sqrt(V0 / 2)
  double nehari_slack = 0.0;
  double pde_residual = 0.0;  // relative lattice residual
  double imag_fraction = 0.0;
  Vec3 spike{};
  double eps = 1.0;
  std::vector<std::string> notes;

  struct Thresholds {
    double diamagnetic = -1e-10;
    double pde_residual = 1e-6;
    double pucci_serrin = 1e-2;
    double decay_slack = 0.05;
  };
  /// Names of the hard checks that fail.
  std::vector<std::string> failures(const Thresholds& t) const;
  std::vector<std::string> failures() const { return failures(Thresholds{}); }
  std::string to_json() const;
};

DiagnosticsReport diagnose(const ComplexField3& u, const ModelSpec& model, double eps);

/// u (1 + level xi) with xi complex Gaussian, E|xi|^2 = 1, one draw per node.
ComplexField3 add_noise(const ComplexField3& u, double level, std::uint64_t seed);

}  // namespace spikemap
