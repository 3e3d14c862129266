#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "core/expr.hpp"
#include "core/fields.hpp"

namespace spikemap {

/// Nonlinearity f(s), s = |u|^2, with primitive F(s) = (1/2) * integral_0^s f.
class Nonlinearity {
 public:
  enum class Kind { Power, Custom, Table };

  /// f(s) = lambda * s^((p - 1) / 2). theta defaults to p + 1, the exact superlinearity constant.
  static Nonlinearity power(double lambda, double p, double theta = 0.0);
  /// User closures. F must be the primitive (1/2) * integral_0^s f.
  static Nonlinearity custom(std::function<double(double)> f, std::function<double(double)> F, double theta,
                             std::string label = "custom");
  /// Monotone cubic (PCHIP) interpolation of tabulated f, F integrated exactly on each piece,
  /// power-law extrapolation past the last node. A node at s = 0 with f = 0 is added if absent.
  static Nonlinearity table(std::vector<double> s, std::vector<double> f, double theta, std::string label = "table");
  /// Two-column text file "s f" (comma or whitespace separated, '#' comments).
  static Nonlinearity from_table_file(const std::string& path, double theta);

  Kind kind() const { return kind_; }
  bool is_power() const { return kind_ == Kind::Power; }
  double lambda() const { return lambda_; }
  double p() const { return p_; }
  double theta() const { return theta_; }
  const std::string& label() const { return label_; }

  double f(double s) const;
  double F(double s) const;
  std::string describe() const;

 private:
  Kind kind_ = Kind::Power;
  double lambda_ = 1.0;
  double p_ = 3.0;
  double theta_ = 4.0;
  std::string label_ = "power";
  std::function<double(double)> f_, F_;
  // Table data.
  std::vector<double> ts_, tf_, tslope_, tF_;
  double tail_exponent_ = 1.0;
};

/// Coefficients and their first derivatives at one point.
struct CoefficientSample {
  double V = 0.0;
  Vec3 gradV{};
  double K = 0.0;
  Vec3 gradK{};
  Vec3 A{};
  Mat3 dA{};  // dA[m][k] = d(A_m)/d(x_k)
  double divA = 0.0;
};

struct ModelSpec {
  PotentialExpr V = PotentialExpr::constant(1.0);
  PotentialExpr K = PotentialExpr::constant(1.0);
  std::array<PotentialExpr, 3> A{};
  Nonlinearity nonlinearity = Nonlinearity::power(1.0, 3.0);
  /// Declared lower bound of V and upper bound of K; 0 means "take the sampled value".
  double V0 = 0.0;
  double K0 = 0.0;

  CoefficientSample sample(const Vec3& x) const;
  Dual3 V_at(const Vec3& x) const { return V.eval_with_gradient(x); }
  Dual3 K_at(const Vec3& x) const { return K.eval_with_gradient(x); }
  Vec3 A_at(const Vec3& x) const { return {A[0].eval(x), A[1].eval(x), A[2].eval(x)}; }
  /// hess[i][j] = d2 e / dx_i dx_j through symbolic differentiation.
  static Mat3 hessian(const PotentialExpr& e, const Vec3& x);
  bool has_magnetic_field_terms() const;
};

struct GaugeFunction {
  PotentialExpr chi;
};

/// A~ = A + grad chi, u~ = exp(i chi / eps) u.
std::pair<ComplexField3, ModelSpec> gauge_transform(const ComplexField3& u, const ModelSpec& model,
                                                    const GaugeFunction& chi, double eps);

struct ValidationLattice {
  Grid3 box = Grid3::cube(9, 4.0);
  /// Radii for the growth fit; directions sampled on each sphere.
  std::vector<double> radii{1.0, 2.0, 4.0, 8.0, 16.0, 32.0};
  int directions_per_radius = 26;
  /// s values for the nonlinearity checks.
  std::vector<double> s_samples;
};

struct ValidationReport {
  double min_V = 0.0;
  Vec3 argmin_V{};
  double max_K = 0.0;
  Vec3 argmax_K{};
  double min_K = 0.0;
  double V0 = 0.0;
  double K0 = 0.0;
  int f_monotonic_violations = 0;
  int theta_violations = 0;
  /// Fitted exponential growth rates (slope of log max |.| against radius).
  double gamma_dA = 0.0;
  double gamma_gradV = 0.0;
  double gamma_gradK = 0.0;
  std::vector<std::string> notes;
  bool ok() const { return f_monotonic_violations == 0 && theta_violations == 0; }
};

/// Samples V, K and f. Throws Error::Code::Assumption if V <= 0 or K <= 0 at any sample, or if a
/// declared V0 / K0 contradicts the samples.
ValidationReport validate_assumptions(const ModelSpec& model, const ValidationLattice& lattice = {});

}  // namespace spikemap
