#pragma once

#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>

namespace odis {

class ExprError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using EvalEnv = std::unordered_map<std::string, double>;

/// Immutable symbolic expression over named variables.
///
/// Language: numbers, variables, + - * / ^, unary minus, parentheses,
/// sin cos exp log sqrt tanh, constant pi. Power is right-associative.
/// Supports exact differentiation (any order) and tree substitution, which
/// is what manufactured-solution generation and weight-derivative
/// evaluation rely on.
class Expr {
 public:
  Expr();  // constant 0

  static Expr constant(double v);
  static Expr var(const std::string& name);
  static Expr parse(const std::string& src);  // throws ExprError

  Expr operator+(const Expr& o) const;
  Expr operator-(const Expr& o) const;
  Expr operator*(const Expr& o) const;
  Expr operator/(const Expr& o) const;
  Expr operator-() const;
  Expr pow(const Expr& e) const;

  /// d/d(name); exact, with simplification.
  Expr diff(const std::string& name) const;
  /// n-th derivative.
  Expr diff_n(const std::string& name, int order) const;
  /// Replace variables by expressions (simultaneous).
  Expr subst(const std::unordered_map<std::string, Expr>& map) const;

  double eval(const EvalEnv& env) const;  // throws ExprError on unbound var
  bool is_constant() const;
  bool is_zero() const;  // structural zero after simplification
  double constant_value() const;

  std::set<std::string> variables() const;
  std::string to_string() const;

  friend Expr ex_sin(const Expr& e);
  friend Expr ex_cos(const Expr& e);
  friend Expr ex_exp(const Expr& e);
  friend Expr ex_log(const Expr& e);
  friend Expr ex_sqrt(const Expr& e);
  friend Expr ex_tanh(const Expr& e);

  struct Node;  // implementation detail, defined in expr.cpp

 private:
  explicit Expr(std::shared_ptr<const Node> n) : n_(std::move(n)) {}
  std::shared_ptr<const Node> n_;
};

Expr ex_sin(const Expr& e);
Expr ex_cos(const Expr& e);
Expr ex_exp(const Expr& e);
Expr ex_log(const Expr& e);
Expr ex_sqrt(const Expr& e);
Expr ex_tanh(const Expr& e);

}  // namespace odis
