#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "core/diagnostics.hpp"

namespace spikemap {

/// Axis-aligned box [lo, hi].
struct Region {
  Vec3 lo{-1.0, -1.0, -1.0};
  Vec3 hi{1.0, 1.0, 1.0};

  void validate() const;
  bool contains(const Vec3& z, double pad = 0.0) const;
  double diameter() const { return norm(hi - lo); }
};

using Resolution = std::array<int, 3>;

/// Node (i, j, k) of the lattice with `res` nodes per axis spanning `region`.
Vec3 lattice_node(const Region& region, const Resolution& res, int i, int j, int k);

struct GroundEnergyMap {
  Region region;
  Resolution resolution{1, 1, 1};
  std::vector<GroundEnergySample> samples;  // x-fastest
  std::vector<std::string> failures;        // per-sample solver failures

  const GroundEnergySample& at(int i, int j, int k) const;
  /// Header z1,z2,z3,sigma,grad1,grad2,grad3,method.
  std::string to_csv() const;
};

/// Power f uses the explicit map; otherwise (or with force_shooting) one shooting solve per node,
/// dispatched in parallel.
GroundEnergyMap sweep_sigma(const Region& region, const Resolution& res, const ModelSpec& model,
                            bool force_shooting = false);

enum class CriticalKind { S, Sp, Sstar, CritK };
const char* to_string(CriticalKind k);

struct CriticalPoint {
  Vec3 z{};
  double residual = 0.0;
  std::string method;
  std::string note;
};

struct CriticalSetResult {
  CriticalKind kind = CriticalKind::S;
  std::vector<CriticalPoint> points;
  double p = 0.0;
  bool degenerate = false;
  double acceptance = 0.0;  // residual threshold used for every reported point
  std::vector<CriticalPoint> rejected;  // candidates that failed, residual = signed margin
  std::vector<std::string> notes;

  std::string to_json() const;
};

/// Power f: damped Newton on the analytic gradient of the explicit map, seeded from lattice minima
/// of |grad sigma|; accepted when |grad sigma| < 1e-8. Other f: the same on the shooting gradient
/// with a finite-difference Jacobian, followed by a Clarke verdict recorded per point.
CriticalSetResult find_S(const GroundEnergyMap& map, const ModelSpec& model);

/// Roots of G(z) = (5 - p) K grad V - 4 V grad K by Newton from every seed node; accepted when
/// |G| < 1e-8 (1 + |grad V| + |grad K|).
CriticalSetResult find_Sp(const ModelSpec& model, double p, const Region& region, const Resolution& seeds);

/// Solutions of the frozen problem at z (the solution-set proxy for the gamma bounds).
using SolutionsProvider = std::function<std::vector<ComplexField3>(const Vec3& z)>;
/// Shooting ground state at z sampled on a cube of n nodes whose radius is 8 / sqrt(V(z)).
SolutionsProvider radial_solutions(const ModelSpec& model, int n = 96);
/// Frozen magnetic least-energy state at z on `grid`, phase split with A(z).
SolutionsProvider frozen_magnetic_solutions(const ModelSpec& model, const Grid3& grid);

struct SstarOptions {
  double tolerance = 1e-4;  // relative to the largest bracket term
  int random_directions = 50;
  std::uint64_t seed = 7;
  int phase_samples = 8;
};
CriticalSetResult find_Sstar(const ModelSpec& model, const std::vector<Vec3>& candidates,
                             const SolutionsProvider& solutions, const SstarOptions& opts = {});

/// Damped Newton on grad K from every seed node; accepted when |grad K| < 1e-10.
CriticalSetResult crit_K(const ModelSpec& model, const Region& region, const Resolution& seeds);

struct DriftRow {
  double p = 0.0;
  double distance = 0.0;  // max over S_p of the distance to Crit(K)
  std::size_t points = 0;
  bool gap = false;       // S_p empty
};

struct DriftStudy {
  std::vector<DriftRow> rows;
  bool strictly_decreasing = false;
  std::string to_csv() const;
};

DriftStudy p_to_5_study(const ModelSpec& model, const std::vector<double>& p_list, const Region& region,
                        const Resolution& seeds);

}  // namespace spikemap
