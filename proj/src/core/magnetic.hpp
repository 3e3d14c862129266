#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "core/lattice.hpp"

namespace spikemap {

enum class SeedPolicy { FrozenProfile, Random, File };
const char* to_string(SeedPolicy s);
SeedPolicy seed_policy_from_string(const std::string& s);

struct MagneticSolveConfig {
  double eps = 1.0;
  Grid3 grid = Grid3::cube(48, 10.0);
  int max_iters = 400;
  double tol = 1e-9;
  SeedPolicy seed = SeedPolicy::FrozenProfile;
  /// Centre of the seed; defaults to the lattice minimizer of the ground-energy map.
  std::optional<Vec3> seed_center;
  std::uint64_t random_seed = 1;
  /// Amplitude of the multiplicative random perturbation for SeedPolicy::Random.
  double random_amplitude = 0.5;
  std::string seed_file;
  double boundary_mass_limit = 1e-8;

  void validate() const;
};

struct MagneticSolution {
  ComplexField3 u;
  double eps = 1.0;
  double energy_J = 0.0;
  double residual_rms = 0.0;  // ||L u - N(u)|| / ||N(u)||
  double nehari_slack = 0.0;
  Vec3 spike{};
  double scaled_energy = 0.0;  // eps^-3 J
  double scaled_mass = 0.0;    // eps^-3 ||u||^2_{L2}
  double boundary_mass = 0.0;
  int iterations = 0;
  bool converged = false;
  Vec3 seed_center{};
  std::vector<IterationRecord> trace;
};

/// J_eps(u) = 1/2 int |D u|^2 + V |u|^2 - int K F(|u|^2) on the gauge-covariant lattice.
double energy_J(const ComplexField3& u, const ModelSpec& model, double eps);
/// int |D u|^2 + V |u|^2 on the gauge-covariant lattice.
double h_norm_squared(const ComplexField3& u, const ModelSpec& model, double eps);

/// Least-energy candidate of the full problem. Throws Error::Code::BoundaryMass when the converged
/// field carries more than cfg.boundary_mass_limit of its mass on the two outer layers. A run that
/// hits max_iters returns with converged = false and the trace filled.
MagneticSolution solve_magnetic(const ModelSpec& model, const MagneticSolveConfig& cfg);
/// Limiting problem with V, K, A frozen at z, eps = 1.
MagneticSolution solve_frozen_magnetic(const Vec3& z, const ModelSpec& model, const Grid3& grid,
                                       const MagneticSolveConfig& base = {});
/// Real least-energy state of the frozen problem with A = 0 (the I_z flow).
RealField3 gradient_flow_3d_real(const FrozenPoint& point, const Nonlinearity& nonlin, const Grid3& grid,
                                 GroundStateResult* details = nullptr);

/// Seed centre: minimizer of the ground-energy map over a coarse sub-lattice of the grid.
Vec3 default_seed_center(const ModelSpec& model, const Grid3& grid);

/// v(y) = u(z0 + eps y) by relabelling the grid (exact, no interpolation).
ComplexField3 rescale(const MagneticSolution& sol, const Vec3& z0);
ComplexField3 rescale(const ComplexField3& u, double eps, const Vec3& z0);
/// v(y) = u(z0 + eps y) trilinearly interpolated onto `target`; throws when a target node maps
/// outside the source box.
ComplexField3 rescale_to(const ComplexField3& u, double eps, const Vec3& z0, const Grid3& target);

enum class ResidualForm { Lattice, Expanded };
struct PdeResidual {
  ComplexField3 field;
  double rms = 0.0;       // sqrt(mean |r|^2) over the evaluated nodes
  double relative = 0.0;  // ||r||_{L2} / ||u||_{L2} over the evaluated nodes
};
/// Lattice: the discrete operator the solver uses. Expanded: -eps^2 Lap u - (2 eps / i) A.grad u
/// + |A|^2 u - (eps / i)(div A) u + V u - K f u with second-order stencils and analytic div A,
/// evaluated away from the two outer layers.
PdeResidual pde_residual(const ComplexField3& u, const ModelSpec& model, double eps,
                         ResidualForm form = ResidualForm::Lattice);
PdeResidual pde_residual(const ComplexField3& u, const Coefficients& coef, const Nonlinearity& nl, double eps,
                         ResidualForm form = ResidualForm::Lattice);

struct PhaseSplit {
  ComplexField3 U;       // exp(-i A(z).x) v
  double omega = 0.0;    // phase of U at the modulus maximum
  double imag_fraction = 0.0;  // max |Im(exp(-i omega) U)| / max |U|
};
PhaseSplit phase_factor_split(const ComplexField3& v, const Vec3& z, const ModelSpec& model);
PhaseSplit phase_factor_split(const ComplexField3& v, const Vec3& Az);

/// Location of max |u| refined by a parabola through the neighbours along each axis.
Vec3 spike_location(const ComplexField3& u);
/// Trilinear interpolation of u at x; zero outside the box.
cplx interpolate(const ComplexField3& u, const Vec3& x);

}  // namespace spikemap
