#include "core/expr.hpp"

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <numbers>
#include <vector>

namespace spikemap {

struct PotentialExpr::Node {
  enum class Kind { Const, Var, Add, Sub, Mul, Div, Pow, Neg, Exp, Log, Sin, Cos, Tanh, Sqrt, Abs, Sign, Dist2 };
  Kind kind = Kind::Const;
  double c = 0.0;
  int axis = 0;
  Vec3 a{0.0, 0.0, 0.0};
  std::shared_ptr<const Node> lhs, rhs;
};

namespace {

using Node = PotentialExpr::Node;
using Kind = Node::Kind;
using NodePtr = std::shared_ptr<const Node>;

NodePtr make_const(double c) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::Const;
  n->c = c;
  return n;
}

NodePtr make_var(int axis) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::Var;
  n->axis = axis;
  return n;
}

NodePtr make_dist2(const Vec3& a) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::Dist2;
  n->a = a;
  return n;
}

bool is_const(const NodePtr& n, double value) { return n->kind == Kind::Const && n->c == value; }
bool is_const(const NodePtr& n) { return n->kind == Kind::Const; }

NodePtr make_unary(Kind kind, NodePtr arg);

NodePtr make_binary(Kind kind, NodePtr lhs, NodePtr rhs) {
  switch (kind) {
    case Kind::Add:
      if (is_const(lhs, 0.0)) return rhs;
      if (is_const(rhs, 0.0)) return lhs;
      if (is_const(lhs) && is_const(rhs)) return make_const(lhs->c + rhs->c);
      break;
    case Kind::Sub:
      if (is_const(rhs, 0.0)) return lhs;
      if (is_const(lhs, 0.0)) return make_unary(Kind::Neg, rhs);
      if (is_const(lhs) && is_const(rhs)) return make_const(lhs->c - rhs->c);
      break;
    case Kind::Mul:
      if (is_const(lhs, 0.0) || is_const(rhs, 0.0)) return make_const(0.0);
      if (is_const(lhs, 1.0)) return rhs;
      if (is_const(rhs, 1.0)) return lhs;
      if (is_const(lhs) && is_const(rhs)) return make_const(lhs->c * rhs->c);
      break;
    case Kind::Div:
      if (is_const(lhs, 0.0) && !is_const(rhs, 0.0)) return make_const(0.0);
      if (is_const(rhs, 1.0)) return lhs;
      break;
    case Kind::Pow:
      if (is_const(rhs, 0.0)) return make_const(1.0);
      if (is_const(rhs, 1.0)) return lhs;
      break;
    default:
      break;
  }
  auto n = std::make_shared<Node>();
  n->kind = kind;
  n->lhs = std::move(lhs);
  n->rhs = std::move(rhs);
  return n;
}

NodePtr make_unary(Kind kind, NodePtr arg) {
  if (kind == Kind::Neg) {
    if (is_const(arg)) return make_const(-arg->c);
    if (arg->kind == Kind::Neg) return arg->lhs;
  }
  auto n = std::make_shared<Node>();
  n->kind = kind;
  n->lhs = std::move(arg);
  return n;
}

Dual3 scale(const Dual3& d, double value, double factor) {
  return {value, {factor * d.grad[0], factor * d.grad[1], factor * d.grad[2]}};
}

bool has_gradient(const Dual3& d) { return d.grad[0] != 0.0 || d.grad[1] != 0.0 || d.grad[2] != 0.0; }

Dual3 eval_node(const Node& n, const Vec3& x) {
  switch (n.kind) {
    case Kind::Const:
      return {n.c, {0.0, 0.0, 0.0}};
    case Kind::Var: {
      Dual3 d{x[n.axis], {0.0, 0.0, 0.0}};
      d.grad[n.axis] = 1.0;
      return d;
    }
    case Kind::Dist2: {
      Vec3 diff = x - n.a;
      return {dot(diff, diff), 2.0 * diff};
    }
    case Kind::Neg: {
      Dual3 a = eval_node(*n.lhs, x);
      return scale(a, -a.value, -1.0);
    }
    case Kind::Add:
    case Kind::Sub: {
      Dual3 a = eval_node(*n.lhs, x), b = eval_node(*n.rhs, x);
      double s = n.kind == Kind::Add ? 1.0 : -1.0;
      return {a.value + s * b.value, a.grad + s * b.grad};
    }
    case Kind::Mul: {
      Dual3 a = eval_node(*n.lhs, x), b = eval_node(*n.rhs, x);
      return {a.value * b.value, b.value * a.grad + a.value * b.grad};
    }
    case Kind::Div: {
      Dual3 a = eval_node(*n.lhs, x), b = eval_node(*n.rhs, x);
      if (b.value == 0.0) throw DomainError("division by zero");
      double q = a.value / b.value;
      return {q, (1.0 / b.value) * (a.grad - q * b.grad)};
    }
    case Kind::Pow: {
      Dual3 a = eval_node(*n.lhs, x);
      if (n.rhs->kind == Kind::Const) {
        double c = n.rhs->c;
        if (a.value == 0.0 && c < 0.0) throw DomainError("zero raised to a negative power");
        if (a.value < 0.0 && c != std::floor(c)) throw DomainError("negative base with non-integer exponent");
        double v = std::pow(a.value, c);
        if (!has_gradient(a)) return {v, {0.0, 0.0, 0.0}};
        if (a.value == 0.0 && c < 1.0) throw DomainError("power not differentiable at zero base");
        return scale(a, v, c * std::pow(a.value, c - 1.0));
      }
      Dual3 b = eval_node(*n.rhs, x);
      if (a.value <= 0.0) throw DomainError("non-positive base with variable exponent");
      double la = std::log(a.value);
      double v = std::exp(b.value * la);
      return {v, v * (la * b.grad + (b.value / a.value) * a.grad)};
    }
    case Kind::Exp: {
      Dual3 a = eval_node(*n.lhs, x);
      double v = std::exp(a.value);
      return scale(a, v, v);
    }
    case Kind::Log: {
      Dual3 a = eval_node(*n.lhs, x);
      if (a.value <= 0.0) throw DomainError("log of a non-positive value");
      return scale(a, std::log(a.value), 1.0 / a.value);
    }
    case Kind::Sin: {
      Dual3 a = eval_node(*n.lhs, x);
      return scale(a, std::sin(a.value), std::cos(a.value));
    }
    case Kind::Cos: {
      Dual3 a = eval_node(*n.lhs, x);
      return scale(a, std::cos(a.value), -std::sin(a.value));
    }
    case Kind::Tanh: {
      Dual3 a = eval_node(*n.lhs, x);
      double t = std::tanh(a.value);
      return scale(a, t, 1.0 - t * t);
    }
    case Kind::Sqrt: {
      Dual3 a = eval_node(*n.lhs, x);
      if (a.value < 0.0) throw DomainError("sqrt of a negative value");
      double s = std::sqrt(a.value);
      if (!has_gradient(a)) return {s, {0.0, 0.0, 0.0}};
      if (s == 0.0) throw DomainError("sqrt not differentiable at zero");
      return scale(a, s, 0.5 / s);
    }
    case Kind::Abs: {
      Dual3 a = eval_node(*n.lhs, x);
      double sg = a.value > 0.0 ? 1.0 : (a.value < 0.0 ? -1.0 : 0.0);
      return scale(a, std::abs(a.value), sg);
    }
    case Kind::Sign: {
      Dual3 a = eval_node(*n.lhs, x);
      return {a.value > 0.0 ? 1.0 : (a.value < 0.0 ? -1.0 : 0.0), {0.0, 0.0, 0.0}};
    }
  }
  return {};
}

NodePtr derive(const NodePtr& n, int axis) {
  auto d = [axis](const NodePtr& m) { return derive(m, axis); };
  auto add = [](NodePtr a, NodePtr b) { return make_binary(Kind::Add, std::move(a), std::move(b)); };
  auto sub = [](NodePtr a, NodePtr b) { return make_binary(Kind::Sub, std::move(a), std::move(b)); };
  auto mul = [](NodePtr a, NodePtr b) { return make_binary(Kind::Mul, std::move(a), std::move(b)); };
  auto div = [](NodePtr a, NodePtr b) { return make_binary(Kind::Div, std::move(a), std::move(b)); };
  switch (n->kind) {
    case Kind::Const:
    case Kind::Sign:
      return make_const(0.0);
    case Kind::Var:
      return make_const(n->axis == axis ? 1.0 : 0.0);
    case Kind::Dist2:
      return mul(make_const(2.0), sub(make_var(axis), make_const(n->a[axis])));
    case Kind::Neg:
      return make_unary(Kind::Neg, d(n->lhs));
    case Kind::Add:
      return add(d(n->lhs), d(n->rhs));
    case Kind::Sub:
      return sub(d(n->lhs), d(n->rhs));
    case Kind::Mul:
      return add(mul(d(n->lhs), n->rhs), mul(n->lhs, d(n->rhs)));
    case Kind::Div:
      return div(sub(mul(d(n->lhs), n->rhs), mul(n->lhs, d(n->rhs))), mul(n->rhs, n->rhs));
    case Kind::Pow: {
      if (n->rhs->kind == Kind::Const) {
        double c = n->rhs->c;
        return mul(mul(make_const(c), make_binary(Kind::Pow, n->lhs, make_const(c - 1.0))), d(n->lhs));
      }
      NodePtr log_a = make_unary(Kind::Log, n->lhs);
      return mul(n, add(mul(d(n->rhs), log_a), div(mul(n->rhs, d(n->lhs)), n->lhs)));
    }
    case Kind::Exp:
      return mul(n, d(n->lhs));
    case Kind::Log:
      return div(d(n->lhs), n->lhs);
    case Kind::Sin:
      return mul(make_unary(Kind::Cos, n->lhs), d(n->lhs));
    case Kind::Cos:
      return mul(make_unary(Kind::Neg, make_unary(Kind::Sin, n->lhs)), d(n->lhs));
    case Kind::Tanh:
      return mul(sub(make_const(1.0), mul(n, n)), d(n->lhs));
    case Kind::Sqrt:
      return div(d(n->lhs), mul(make_const(2.0), n));
    case Kind::Abs:
      return mul(make_unary(Kind::Sign, n->lhs), d(n->lhs));
  }
  return make_const(0.0);
}

std::string format_number(double c) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", c);
  std::string s = buf;
  return c < 0.0 ? "(" + s + ")" : s;
}

const char* function_name(Kind k) {
  switch (k) {
    case Kind::Exp: return "exp";
    case Kind::Log: return "log";
    case Kind::Sin: return "sin";
    case Kind::Cos: return "cos";
    case Kind::Tanh: return "tanh";
    case Kind::Sqrt: return "sqrt";
    case Kind::Abs: return "abs";
    case Kind::Sign: return "sign";
    default: return "";
  }
}

void print(const Node& n, std::string& out) {
  switch (n.kind) {
    case Kind::Const:
      out += format_number(n.c);
      return;
    case Kind::Var:
      out += "x" + std::to_string(n.axis + 1);
      return;
    case Kind::Dist2:
      out += "dist2(" + format_number(n.a[0]) + "," + format_number(n.a[1]) + "," + format_number(n.a[2]) + ")";
      return;
    case Kind::Neg:
      out += "(-";
      print(*n.lhs, out);
      out += ")";
      return;
    case Kind::Add:
    case Kind::Sub:
    case Kind::Mul:
    case Kind::Div:
    case Kind::Pow: {
      static const char ops[] = {'+', '-', '*', '/', '^'};
      out += "(";
      print(*n.lhs, out);
      out += ops[static_cast<int>(n.kind) - static_cast<int>(Kind::Add)];
      print(*n.rhs, out);
      out += ")";
      return;
    }
    default:
      out += function_name(n.kind);
      out += "(";
      print(*n.lhs, out);
      out += ")";
  }
}

bool depends_on_x(const Node& n) {
  switch (n.kind) {
    case Kind::Const: return false;
    case Kind::Var:
    case Kind::Dist2: return true;
    default:
      return (n.lhs && depends_on_x(*n.lhs)) || (n.rhs && depends_on_x(*n.rhs));
  }
}

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  NodePtr parse() {
    NodePtr e = expr();
    skip();
    if (pos_ != text_.size()) throw ParseError("unexpected character '" + std::string(1, text_[pos_]) + "'", pos_);
    return e;
  }

 private:
  void skip() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  bool accept(char c) {
    skip();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!accept(c)) {
      if (pos_ >= text_.size()) throw ParseError(std::string("expected '") + c + "' but input ended", pos_);
      throw ParseError(std::string("expected '") + c + "'", pos_);
    }
  }

  NodePtr expr() {
    NodePtr lhs = term();
    for (;;) {
      if (accept('+')) lhs = make_binary(Kind::Add, lhs, term());
      else if (accept('-')) lhs = make_binary(Kind::Sub, lhs, term());
      else return lhs;
    }
  }

  NodePtr term() {
    NodePtr lhs = unary();
    for (;;) {
      if (accept('*')) lhs = make_binary(Kind::Mul, lhs, unary());
      else if (accept('/')) lhs = make_binary(Kind::Div, lhs, unary());
      else return lhs;
    }
  }

  NodePtr unary() {
    if (accept('-')) return make_unary(Kind::Neg, unary());
    if (accept('+')) return unary();
    return power();
  }

  NodePtr power() {
    NodePtr base = atom();
    if (accept('^')) return make_binary(Kind::Pow, base, unary());
    return base;
  }

  double number_literal() {
    skip();
    std::string buf(text_.substr(pos_));
    char* end = nullptr;
    double v = std::strtod(buf.c_str(), &end);
    std::size_t used = static_cast<std::size_t>(end - buf.c_str());
    if (used == 0) throw ParseError("expected a number", pos_);
    pos_ += used;
    return v;
  }

  double signed_number() {
    bool neg = false;
    for (;;) {
      if (accept('-')) neg = !neg;
      else if (accept('+')) continue;
      else break;
    }
    skip();
    if (pos_ < text_.size() && text_.substr(pos_, 2) == "pi" &&
        (pos_ + 2 == text_.size() || !std::isalnum(static_cast<unsigned char>(text_[pos_ + 2])))) {
      pos_ += 2;
      return neg ? -std::numbers::pi : std::numbers::pi;
    }
    double v = number_literal();
    return neg ? -v : v;
  }

  NodePtr atom() {
    skip();
    if (pos_ >= text_.size()) throw ParseError("unexpected end of input", pos_);
    char ch = text_[pos_];
    if (ch == '(') {
      ++pos_;
      NodePtr e = expr();
      expect(')');
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(ch)) || ch == '.') return make_const(number_literal());
    if (std::isalpha(static_cast<unsigned char>(ch)) || ch == '_') {
      std::size_t start = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
        ++pos_;
      std::string name(text_.substr(start, pos_ - start));
      return named(name, start);
    }
    throw ParseError("unexpected character '" + std::string(1, ch) + "'", pos_);
  }

  NodePtr named(const std::string& name, std::size_t start) {
    if (name == "x1" || name == "x") return make_var(0);
    if (name == "x2" || name == "y") return make_var(1);
    if (name == "x3" || name == "z") return make_var(2);
    if (name == "pi") return make_const(std::numbers::pi);
    if (name == "r2") return make_dist2({0.0, 0.0, 0.0});
    if (name == "dist2") {
      expect('(');
      Vec3 a;
      a[0] = signed_number();
      expect(',');
      a[1] = signed_number();
      expect(',');
      a[2] = signed_number();
      expect(')');
      return make_dist2(a);
    }
    static const std::pair<const char*, Kind> functions[] = {
        {"exp", Kind::Exp},   {"log", Kind::Log},   {"sin", Kind::Sin}, {"cos", Kind::Cos},
        {"tanh", Kind::Tanh}, {"sqrt", Kind::Sqrt}, {"abs", Kind::Abs}, {"sign", Kind::Sign}};
    for (const auto& [fname, kind] : functions) {
      if (name == fname) {
        expect('(');
        NodePtr arg = expr();
        expect(')');
        return make_unary(kind, arg);
      }
    }
    throw ParseError("unknown identifier '" + name + "'", start);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

PotentialExpr::PotentialExpr() : node_(make_const(0.0)) {}

PotentialExpr PotentialExpr::parse(std::string_view text) { return PotentialExpr(Parser(text).parse()); }

PotentialExpr PotentialExpr::constant(double c) { return PotentialExpr(make_const(c)); }

PotentialExpr PotentialExpr::coordinate(int axis) {
  require(axis >= 0 && axis < 3, "coordinate axis must be 0, 1 or 2");
  return PotentialExpr(make_var(axis));
}

double PotentialExpr::eval(const Vec3& x) const { return eval_with_gradient(x).value; }

Dual3 PotentialExpr::eval_with_gradient(const Vec3& x) const {
  for (double xi : x)
    if (!std::isfinite(xi)) throw DomainError("evaluation point is not finite");
  Dual3 d = eval_node(*node_, x);
  if (!std::isfinite(d.value) || !std::isfinite(d.grad[0]) || !std::isfinite(d.grad[1]) ||
      !std::isfinite(d.grad[2]))
    throw DomainError("expression " + to_string() + " is not finite at the evaluation point");
  return d;
}

PotentialExpr PotentialExpr::derivative(int axis) const {
  require(axis >= 0 && axis < 3, "derivative axis must be 0, 1 or 2");
  return PotentialExpr(derive(node_, axis));
}

std::string PotentialExpr::to_string() const {
  std::string out;
  print(*node_, out);
  return out;
}

bool PotentialExpr::is_constant() const { return !depends_on_x(*node_); }

PotentialExpr operator+(const PotentialExpr& a, const PotentialExpr& b) {
  return PotentialExpr(make_binary(Kind::Add, a.node(), b.node()));
}
PotentialExpr operator-(const PotentialExpr& a, const PotentialExpr& b) {
  return PotentialExpr(make_binary(Kind::Sub, a.node(), b.node()));
}
PotentialExpr operator*(const PotentialExpr& a, const PotentialExpr& b) {
  return PotentialExpr(make_binary(Kind::Mul, a.node(), b.node()));
}
PotentialExpr operator/(const PotentialExpr& a, const PotentialExpr& b) {
  return PotentialExpr(make_binary(Kind::Div, a.node(), b.node()));
}
PotentialExpr PotentialExpr::operator-() const { return PotentialExpr(make_unary(Kind::Neg, node_)); }

}  // namespace spikemap
