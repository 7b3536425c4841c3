#include "odis/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <vector>

namespace odis {

namespace {
enum class Kind {
  Const,
  Var,
  Add,
  Sub,
  Mul,
  Div,
  Pow,
  Neg,
  Sin,
  Cos,
  Exp,
  Log,
  Sqrt,
  Tanh
};
}  // namespace

struct Expr::Node {
  Kind kind;
  double value = 0.0;   // Const
  std::string name;     // Var
  std::shared_ptr<const Node> a, b;
};

namespace {

using NodePtr = std::shared_ptr<const Expr::Node>;

NodePtr make_const(double v) {
  auto n = std::make_shared<Expr::Node>();
  n->kind = Kind::Const;
  n->value = v;
  return n;
}

NodePtr make_var(const std::string& name) {
  auto n = std::make_shared<Expr::Node>();
  n->kind = Kind::Var;
  n->name = name;
  return n;
}

NodePtr make_node(Kind k, NodePtr a, NodePtr b = nullptr) {
  auto n = std::make_shared<Expr::Node>();
  n->kind = k;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}

bool is_const(const NodePtr& n, double v) {
  return n->kind == Kind::Const && n->value == v;
}
bool is_const(const NodePtr& n) { return n->kind == Kind::Const; }

// Smart constructors with constant folding and identity elimination.
NodePtr mk_add(NodePtr a, NodePtr b) {
  if (is_const(a) && is_const(b)) return make_const(a->value + b->value);
  if (is_const(a, 0.0)) return b;
  if (is_const(b, 0.0)) return a;
  return make_node(Kind::Add, std::move(a), std::move(b));
}

NodePtr mk_sub(NodePtr a, NodePtr b) {
  if (is_const(a) && is_const(b)) return make_const(a->value - b->value);
  if (is_const(b, 0.0)) return a;
  if (is_const(a, 0.0)) return make_node(Kind::Neg, std::move(b));
  return make_node(Kind::Sub, std::move(a), std::move(b));
}

NodePtr mk_neg(NodePtr a) {
  if (is_const(a)) return make_const(-a->value);
  if (a->kind == Kind::Neg) return a->a;
  return make_node(Kind::Neg, std::move(a));
}

NodePtr mk_mul(NodePtr a, NodePtr b) {
  if (is_const(a) && is_const(b)) return make_const(a->value * b->value);
  if (is_const(a, 0.0) || is_const(b, 0.0)) return make_const(0.0);
  if (is_const(a, 1.0)) return b;
  if (is_const(b, 1.0)) return a;
  if (is_const(a, -1.0)) return mk_neg(b);
  if (is_const(b, -1.0)) return mk_neg(a);
  return make_node(Kind::Mul, std::move(a), std::move(b));
}

NodePtr mk_div(NodePtr a, NodePtr b) {
  if (is_const(a) && is_const(b) && b->value != 0.0)
    return make_const(a->value / b->value);
  if (is_const(a, 0.0)) return make_const(0.0);
  if (is_const(b, 1.0)) return a;
  return make_node(Kind::Div, std::move(a), std::move(b));
}

NodePtr mk_pow(NodePtr a, NodePtr b) {
  if (is_const(b, 0.0)) return make_const(1.0);
  if (is_const(b, 1.0)) return a;
  if (is_const(a) && is_const(b)) return make_const(std::pow(a->value, b->value));
  if (is_const(a, 0.0)) return make_const(0.0);
  if (is_const(a, 1.0)) return make_const(1.0);
  return make_node(Kind::Pow, std::move(a), std::move(b));
}

NodePtr mk_fun(Kind k, NodePtr a) {
  if (is_const(a)) {
    double v = a->value;
    switch (k) {
      case Kind::Sin: return make_const(std::sin(v));
      case Kind::Cos: return make_const(std::cos(v));
      case Kind::Exp: return make_const(std::exp(v));
      case Kind::Log: return make_const(std::log(v));
      case Kind::Sqrt: return make_const(std::sqrt(v));
      case Kind::Tanh: return make_const(std::tanh(v));
      default: break;
    }
  }
  return make_node(k, std::move(a));
}

NodePtr diff_node(const NodePtr& n, const std::string& v);

NodePtr diff_pow(const NodePtr& n, const std::string& v) {
  // a^b: power rule when the exponent is constant, else via exp(b*log(a)).
  const NodePtr& a = n->a;
  const NodePtr& b = n->b;
  NodePtr da = diff_node(a, v);
  if (is_const(b)) {
    double e = b->value;
    return mk_mul(make_const(e), mk_mul(mk_pow(a, make_const(e - 1.0)), da));
  }
  NodePtr db = diff_node(b, v);
  // (a^b)' = a^b * (b' log a + b a'/a)
  NodePtr term = mk_add(mk_mul(db, mk_fun(Kind::Log, a)), mk_div(mk_mul(b, da), a));
  return mk_mul(n, term);
}

NodePtr diff_node(const NodePtr& n, const std::string& v) {
  switch (n->kind) {
    case Kind::Const: return make_const(0.0);
    case Kind::Var: return make_const(n->name == v ? 1.0 : 0.0);
    case Kind::Add: return mk_add(diff_node(n->a, v), diff_node(n->b, v));
    case Kind::Sub: return mk_sub(diff_node(n->a, v), diff_node(n->b, v));
    case Kind::Neg: return mk_neg(diff_node(n->a, v));
    case Kind::Mul:
      return mk_add(mk_mul(diff_node(n->a, v), n->b),
                    mk_mul(n->a, diff_node(n->b, v)));
    case Kind::Div:
      return mk_div(mk_sub(mk_mul(diff_node(n->a, v), n->b),
                           mk_mul(n->a, diff_node(n->b, v))),
                    mk_pow(n->b, make_const(2.0)));
    case Kind::Pow: return diff_pow(n, v);
    case Kind::Sin: return mk_mul(mk_fun(Kind::Cos, n->a), diff_node(n->a, v));
    case Kind::Cos:
      return mk_neg(mk_mul(mk_fun(Kind::Sin, n->a), diff_node(n->a, v)));
    case Kind::Exp: return mk_mul(mk_fun(Kind::Exp, n->a), diff_node(n->a, v));
    case Kind::Log: return mk_div(diff_node(n->a, v), n->a);
    case Kind::Sqrt:
      return mk_div(diff_node(n->a, v),
                    mk_mul(make_const(2.0), mk_fun(Kind::Sqrt, n->a)));
    case Kind::Tanh: {
      NodePtr th = mk_fun(Kind::Tanh, n->a);
      NodePtr sech2 = mk_sub(make_const(1.0), mk_mul(th, th));
      return mk_mul(sech2, diff_node(n->a, v));
    }
  }
  throw ExprError("diff: unknown node kind");
}

NodePtr subst_node(const NodePtr& n,
                   const std::unordered_map<std::string, Expr>& map,
                   const std::unordered_map<std::string, NodePtr>& raw) {
  switch (n->kind) {
    case Kind::Const: return n;
    case Kind::Var: {
      auto it = raw.find(n->name);
      return it != raw.end() ? it->second : n;
    }
    case Kind::Add:
      return mk_add(subst_node(n->a, map, raw), subst_node(n->b, map, raw));
    case Kind::Sub:
      return mk_sub(subst_node(n->a, map, raw), subst_node(n->b, map, raw));
    case Kind::Mul:
      return mk_mul(subst_node(n->a, map, raw), subst_node(n->b, map, raw));
    case Kind::Div:
      return mk_div(subst_node(n->a, map, raw), subst_node(n->b, map, raw));
    case Kind::Pow:
      return mk_pow(subst_node(n->a, map, raw), subst_node(n->b, map, raw));
    case Kind::Neg: return mk_neg(subst_node(n->a, map, raw));
    default: return mk_fun(n->kind, subst_node(n->a, map, raw));
  }
}

double eval_node(const Expr::Node* n, const EvalEnv& env) {
  switch (n->kind) {
    case Kind::Const: return n->value;
    case Kind::Var: {
      auto it = env.find(n->name);
      if (it == env.end()) throw ExprError("unbound variable '" + n->name + "'");
      return it->second;
    }
    case Kind::Add: return eval_node(n->a.get(), env) + eval_node(n->b.get(), env);
    case Kind::Sub: return eval_node(n->a.get(), env) - eval_node(n->b.get(), env);
    case Kind::Mul: return eval_node(n->a.get(), env) * eval_node(n->b.get(), env);
    case Kind::Div: return eval_node(n->a.get(), env) / eval_node(n->b.get(), env);
    case Kind::Neg: return -eval_node(n->a.get(), env);
    case Kind::Pow: {
      double base = eval_node(n->a.get(), env);
      double e = eval_node(n->b.get(), env);
      double ri;
      if (std::modf(e, &ri) == 0.0 && std::abs(e) <= 64.0) {
        // integer exponent fast path keeps negative bases exact
        double r = 1.0;
        double m = base;
        long k = std::labs(static_cast<long>(ri));
        while (k) {
          if (k & 1) r *= m;
          m *= m;
          k >>= 1;
        }
        return ri < 0 ? 1.0 / r : r;
      }
      return std::pow(base, e);
    }
    case Kind::Sin: return std::sin(eval_node(n->a.get(), env));
    case Kind::Cos: return std::cos(eval_node(n->a.get(), env));
    case Kind::Exp: return std::exp(eval_node(n->a.get(), env));
    case Kind::Log: return std::log(eval_node(n->a.get(), env));
    case Kind::Sqrt: return std::sqrt(eval_node(n->a.get(), env));
    case Kind::Tanh: return std::tanh(eval_node(n->a.get(), env));
  }
  throw ExprError("eval: unknown node kind");
}

void collect_vars(const NodePtr& n, std::set<std::string>& out) {
  if (!n) return;
  if (n->kind == Kind::Var) out.insert(n->name);
  collect_vars(n->a, out);
  collect_vars(n->b, out);
}

void print_node(const NodePtr& n, std::ostringstream& os);

void print_child(const NodePtr& n, std::ostringstream& os) {
  bool paren = n->kind == Kind::Add || n->kind == Kind::Sub ||
               n->kind == Kind::Neg || n->kind == Kind::Div ||
               n->kind == Kind::Mul;
  if (paren) os << '(';
  print_node(n, os);
  if (paren) os << ')';
}

void print_node(const NodePtr& n, std::ostringstream& os) {
  switch (n->kind) {
    case Kind::Const: os << n->value; return;
    case Kind::Var: os << n->name; return;
    case Kind::Add: print_node(n->a, os); os << " + "; print_node(n->b, os); return;
    case Kind::Sub: print_node(n->a, os); os << " - "; print_child(n->b, os); return;
    case Kind::Mul: print_child(n->a, os); os << "*"; print_child(n->b, os); return;
    case Kind::Div: print_child(n->a, os); os << "/"; print_child(n->b, os); return;
    case Kind::Neg: os << "-"; print_child(n->a, os); return;
    case Kind::Pow: print_child(n->a, os); os << "^"; print_child(n->b, os); return;
    case Kind::Sin: os << "sin("; print_node(n->a, os); os << ")"; return;
    case Kind::Cos: os << "cos("; print_node(n->a, os); os << ")"; return;
    case Kind::Exp: os << "exp("; print_node(n->a, os); os << ")"; return;
    case Kind::Log: os << "log("; print_node(n->a, os); os << ")"; return;
    case Kind::Sqrt: os << "sqrt("; print_node(n->a, os); os << ")"; return;
    case Kind::Tanh: os << "tanh("; print_node(n->a, os); os << ")"; return;
  }
}

// ---- recursive-descent parser ----

struct Parser {
  const std::string& s;
  size_t pos = 0;

  explicit Parser(const std::string& src) : s(src) {}

  void skip_ws() {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  }

  bool eat(char c) {
    skip_ws();
    if (pos < s.size() && s[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ExprError("parse error at position " + std::to_string(pos) + ": " +
                    msg + " in \"" + s + "\"");
  }

  NodePtr parse_expr() {
    NodePtr lhs = parse_term();
    for (;;) {
      skip_ws();
      if (eat('+')) {
        lhs = mk_add(lhs, parse_term());
      } else if (eat('-')) {
        lhs = mk_sub(lhs, parse_term());
      } else {
        return lhs;
      }
    }
  }

  NodePtr parse_term() {
    NodePtr lhs = parse_unary();
    for (;;) {
      skip_ws();
      if (eat('*')) {
        lhs = mk_mul(lhs, parse_unary());
      } else if (eat('/')) {
        lhs = mk_div(lhs, parse_unary());
      } else {
        return lhs;
      }
    }
  }

  NodePtr parse_unary() {
    skip_ws();
    if (eat('-')) return mk_neg(parse_unary());
    if (eat('+')) return parse_unary();
    return parse_power();
  }

  NodePtr parse_power() {
    NodePtr base = parse_primary();
    skip_ws();
    if (eat('^')) return mk_pow(base, parse_unary());  // right-assoc, allows -n
    return base;
  }

  NodePtr parse_primary() {
    skip_ws();
    if (pos >= s.size()) fail("unexpected end of input");
    char c = s[pos];
    if (c == '(') {
      ++pos;
      NodePtr inner = parse_expr();
      if (!eat(')')) fail("expected ')'");
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      char* end = nullptr;
      double v = std::strtod(s.c_str() + pos, &end);
      if (end == s.c_str() + pos) fail("bad number");
      pos = end - s.c_str();
      return make_const(v);
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t start = pos;
      while (pos < s.size() &&
             (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_'))
        ++pos;
      std::string name = s.substr(start, pos - start);
      skip_ws();
      if (pos < s.size() && s[pos] == '(') {
        ++pos;
        NodePtr arg = parse_expr();
        if (!eat(')')) fail("expected ')' after function argument");
        if (name == "sin") return mk_fun(Kind::Sin, arg);
        if (name == "cos") return mk_fun(Kind::Cos, arg);
        if (name == "exp") return mk_fun(Kind::Exp, arg);
        if (name == "log") return mk_fun(Kind::Log, arg);
        if (name == "sqrt") return mk_fun(Kind::Sqrt, arg);
        if (name == "tanh") return mk_fun(Kind::Tanh, arg);
        fail("unknown function '" + name + "'");
      }
      if (name == "pi") return make_const(M_PI);
      return make_var(name);
    }
    fail(std::string("unexpected character '") + c + "'");
  }
};

}  // namespace

Expr::Expr() : n_(make_const(0.0)) {}

Expr Expr::constant(double v) { return Expr(make_const(v)); }
Expr Expr::var(const std::string& name) { return Expr(make_var(name)); }

Expr Expr::parse(const std::string& src) {
  Parser p(src);
  NodePtr n = p.parse_expr();
  p.skip_ws();
  if (p.pos != src.size()) p.fail("trailing input");
  return Expr(n);
}

Expr Expr::operator+(const Expr& o) const { return Expr(mk_add(n_, o.n_)); }
Expr Expr::operator-(const Expr& o) const { return Expr(mk_sub(n_, o.n_)); }
Expr Expr::operator*(const Expr& o) const { return Expr(mk_mul(n_, o.n_)); }
Expr Expr::operator/(const Expr& o) const { return Expr(mk_div(n_, o.n_)); }
Expr Expr::operator-() const { return Expr(mk_neg(n_)); }
Expr Expr::pow(const Expr& e) const { return Expr(mk_pow(n_, e.n_)); }

Expr Expr::diff(const std::string& name) const {
  return Expr(diff_node(n_, name));
}

Expr Expr::diff_n(const std::string& name, int order) const {
  Expr e = *this;
  for (int i = 0; i < order; ++i) e = e.diff(name);
  return e;
}

Expr Expr::subst(const std::unordered_map<std::string, Expr>& map) const {
  std::unordered_map<std::string, NodePtr> raw;
  raw.reserve(map.size());
  for (const auto& [k, v] : map) raw.emplace(k, v.n_);
  return Expr(subst_node(n_, map, raw));
}

double Expr::eval(const EvalEnv& env) const { return eval_node(n_.get(), env); }

bool Expr::is_constant() const { return n_->kind == Kind::Const; }
bool Expr::is_zero() const { return is_const(n_, 0.0); }

double Expr::constant_value() const {
  if (!is_constant()) throw ExprError("not a constant expression");
  return n_->value;
}

std::set<std::string> Expr::variables() const {
  std::set<std::string> out;
  collect_vars(n_, out);
  return out;
}

std::string Expr::to_string() const {
  std::ostringstream os;
  print_node(n_, os);
  return os.str();
}

Expr ex_sin(const Expr& e) { return Expr(mk_fun(Kind::Sin, e.n_)); }
Expr ex_cos(const Expr& e) { return Expr(mk_fun(Kind::Cos, e.n_)); }
Expr ex_exp(const Expr& e) { return Expr(mk_fun(Kind::Exp, e.n_)); }
Expr ex_log(const Expr& e) { return Expr(mk_fun(Kind::Log, e.n_)); }
Expr ex_sqrt(const Expr& e) { return Expr(mk_fun(Kind::Sqrt, e.n_)); }
Expr ex_tanh(const Expr& e) { return Expr(mk_fun(Kind::Tanh, e.n_)); }

}  // namespace odis
