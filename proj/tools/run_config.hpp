#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace spikemap::cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Vec3 = std::array<double, 3>;

struct ModelSection {
  std::string V, K;
  std::string A1 = "0", A2 = "0", A3 = "0";
  std::string nonlinearity = "power";  // power | table
  double lambda = 1.0;
  double p = 3.0;
  std::string table;
  std::optional<double> theta;
  std::optional<double> V0, K0;
};

struct SolverSection {
  int n = 48;
  double radius = 10.0;
  Vec3 center{0.0, 0.0, 0.0};
  std::vector<double> eps{1.0};
  int max_iters = 400;
  double tol = 1e-9;
  std::string seed = "frozen";  // frozen | random | file
  std::optional<Vec3> seed_center;
  unsigned long long random_seed = 1;
  double random_amplitude = 0.5;
  std::string seed_file;
  double boundary_mass_limit = 1e-8;
};

struct FrozenSection {
  Vec3 z{0.0, 0.0, 0.0};
};

struct LandscapeSection {
  Vec3 lo{-1.0, -1.0, -1.0};
  Vec3 hi{1.0, 1.0, 1.0};
  std::array<int, 3> resolution{9, 9, 9};
  std::array<int, 3> seeds{5, 5, 5};
  std::vector<double> p_list;
  bool force_shooting = false;
  bool sstar = false;
  std::string sstar_provider = "radial";  // radial | frozen-magnetic
};

struct DiagnosticsSection {
  bool enabled = true;
  std::optional<Vec3> target;
  std::vector<double> rho{2.0, 4.0, 8.0};
};

struct OutputSection {
  std::string dir = "spikemap_out";
};

/// Parsed [model], [solver], [frozen], [landscape], [diagnostics], [output] sections.
struct RunConfig {
  ModelSection model;
  SolverSection solver;
  FrozenSection frozen;
  LandscapeSection landscape;
  DiagnosticsSection diagnostics;
  OutputSection output;

  /// INI text: "key = value" lines under "[section]" headers, '#' or ';' comments.
  /// Unknown sections or keys, duplicates and malformed values throw ConfigError.
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::string& path);
  /// Canonical text: every key of every section in a fixed order, numbers with 17 digits.
  std::string serialize() const;
  /// Model section as the JSON object accepted by sm_model_create.
  std::string model_json() const;
  /// Solver section at one eps as the JSON object accepted by sm_solve_magnetic.
  std::string solver_json(double eps) const;
};

/// 64-bit FNV-1a.
unsigned long long fnv1a(const std::string& bytes);
std::string hex64(unsigned long long h);

}  // namespace spikemap::cli
