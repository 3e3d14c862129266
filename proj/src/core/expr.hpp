#pragma once

#include <memory>
#include <string>
#include <string_view>

#include "core/common.hpp"

namespace spikemap {

/// Value and gradient of a scalar function of x = (x1, x2, x3).
struct Dual3 {
  double value = 0.0;
  Vec3 grad{0.0, 0.0, 0.0};
};

/// Immutable expression tree over x1, x2, x3 with exact forward-mode gradients.
///
/// Grammar:
///   expr   := term (('+' | '-') term)*
///   term   := unary (('*' | '/') unary)*
///   unary  := ('+' | '-') unary | power
///   power  := atom ('^' unary)?            right associative, binds tighter than unary minus
///   atom   := number | name | name '(' args ')' | '(' expr ')'
/// Names: x1 x2 x3 (aliases x y z), pi, r2 = |x|^2.
/// Functions: exp log sin cos tanh sqrt abs, dist2(a1, a2, a3) = |x - a|^2 with constant a.
class PotentialExpr {
 public:
  struct Node;

  PotentialExpr();  // constant zero
  static PotentialExpr parse(std::string_view text);
  static PotentialExpr constant(double c);
  static PotentialExpr coordinate(int axis);

  double eval(const Vec3& x) const;
  Dual3 eval_with_gradient(const Vec3& x) const;
  /// Symbolic partial derivative along `axis`, constant-folded.
  PotentialExpr derivative(int axis) const;
  /// Fully parenthesized text that parses back to an equivalent tree.
  std::string to_string() const;
  /// True when the tree has no coordinate dependence.
  bool is_constant() const;

  friend PotentialExpr operator+(const PotentialExpr& a, const PotentialExpr& b);
  friend PotentialExpr operator-(const PotentialExpr& a, const PotentialExpr& b);
  friend PotentialExpr operator*(const PotentialExpr& a, const PotentialExpr& b);
  friend PotentialExpr operator/(const PotentialExpr& a, const PotentialExpr& b);
  PotentialExpr operator-() const;

  explicit PotentialExpr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<const Node>& node() const { return node_; }

 private:
  std::shared_ptr<const Node> node_;
};

}  // namespace spikemap
