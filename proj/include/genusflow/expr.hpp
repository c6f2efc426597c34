#pragma once

// Expression trees over x, y, t: parsing, printing, differentiation and a
// compiled stack evaluator and a shared-subexpression program.

#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <memory>
#include <numbers>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "genusflow/error.hpp"

namespace genusflow {

enum class Op { constant, var, neg, sin, cos, exp, add, sub, mul, div, pow };

struct ExprNode;

/// Immutable, cheaply copyable handle to an expression tree.
class Expr {
 public:
  Expr();  // constant 0
  explicit Expr(std::shared_ptr<const ExprNode> n) : node_(std::move(n)) {}

  const ExprNode& node() const { return *node_; }
  const ExprNode* operator->() const { return node_.get(); }

 private:
  std::shared_ptr<const ExprNode> node_;
};

struct ExprNode {
  Op op = Op::constant;
  double value = 0.0;  // constant
  char var = 0;        // 'x', 'y' or 't'
  int exponent = 0;    // pow
  Expr lhs{nullptr};   // unary uses lhs only
  Expr rhs{nullptr};
};

inline Expr::Expr() : node_(std::make_shared<const ExprNode>()) {}

namespace expr {

inline Expr make(ExprNode n) { return Expr(std::make_shared<const ExprNode>(std::move(n))); }

inline Expr constant(double v) {
  ExprNode n;
  n.value = v;
  return make(std::move(n));
}

inline Expr variable(char v) {
  if (v != 'x' && v != 'y' && v != 't') {
    throw Error(ErrorKind::unknown_identifier, std::string("unknown variable '") + v + "'");
  }
  ExprNode n;
  n.op = Op::var;
  n.var = v;
  return make(std::move(n));
}

inline Expr unary(Op op, Expr a) {
  ExprNode n;
  n.op = op;
  n.lhs = std::move(a);
  return make(std::move(n));
}

inline Expr binary(Op op, Expr a, Expr b) {
  ExprNode n;
  n.op = op;
  n.lhs = std::move(a);
  n.rhs = std::move(b);
  return make(std::move(n));
}

inline Expr power(Expr a, int k) {
  if (k < 0) throw Error(ErrorKind::input, "negative exponent");
  ExprNode n;
  n.op = Op::pow;
  n.lhs = std::move(a);
  n.exponent = k;
  return make(std::move(n));
}

inline Expr x() { return variable('x'); }
inline Expr y() { return variable('y'); }
inline Expr t() { return variable('t'); }
inline Expr neg(Expr a) { return unary(Op::neg, std::move(a)); }
inline Expr sin(Expr a) { return unary(Op::sin, std::move(a)); }
inline Expr cos(Expr a) { return unary(Op::cos, std::move(a)); }
inline Expr exp(Expr a) { return unary(Op::exp, std::move(a)); }
inline Expr add(Expr a, Expr b) { return binary(Op::add, std::move(a), std::move(b)); }
inline Expr sub(Expr a, Expr b) { return binary(Op::sub, std::move(a), std::move(b)); }
inline Expr mul(Expr a, Expr b) { return binary(Op::mul, std::move(a), std::move(b)); }
inline Expr div(Expr a, Expr b) { return binary(Op::div, std::move(a), std::move(b)); }

inline bool is_const(const Expr& e, double v) {
  return e->op == Op::constant && e->value == v;
}

// Constructors that fold constants and apply 0/1 identities only.
inline Expr s_neg(Expr a) {
  if (a->op == Op::constant) return constant(-a->value);
  return neg(std::move(a));
}
inline Expr s_add(Expr a, Expr b) {
  if (a->op == Op::constant && b->op == Op::constant) return constant(a->value + b->value);
  if (is_const(a, 0.0)) return b;
  if (is_const(b, 0.0)) return a;
  return add(std::move(a), std::move(b));
}
inline Expr s_sub(Expr a, Expr b) {
  if (a->op == Op::constant && b->op == Op::constant) return constant(a->value - b->value);
  if (is_const(b, 0.0)) return a;
  if (is_const(a, 0.0)) return s_neg(std::move(b));
  return sub(std::move(a), std::move(b));
}
inline Expr s_mul(Expr a, Expr b) {
  if (a->op == Op::constant && b->op == Op::constant) return constant(a->value * b->value);
  if (is_const(a, 0.0) || is_const(b, 0.0)) return constant(0.0);
  if (is_const(a, 1.0)) return b;
  if (is_const(b, 1.0)) return a;
  return mul(std::move(a), std::move(b));
}
inline Expr s_div(Expr a, Expr b) {
  if (a->op == Op::constant && b->op == Op::constant && b->value != 0.0) {
    return constant(a->value / b->value);
  }
  if (is_const(a, 0.0) && !is_const(b, 0.0)) return constant(0.0);
  if (is_const(b, 1.0)) return a;
  return div(std::move(a), std::move(b));
}
inline Expr s_pow(Expr a, int k) {
  if (k == 0) return constant(1.0);
  if (k == 1) return a;
  if (a->op == Op::constant) return constant(std::pow(a->value, k));
  return power(std::move(a), k);
}

}  // namespace expr

/// Structural equality; constants compare bitwise-exact.
inline bool structurally_equal(const Expr& a, const Expr& b) {
  if (&a.node() == &b.node()) return true;
  if (a->op != b->op) return false;
  switch (a->op) {
    case Op::constant: return a->value == b->value;
    case Op::var: return a->var == b->var;
    case Op::neg: case Op::sin: case Op::cos: case Op::exp:
      return structurally_equal(a->lhs, b->lhs);
    case Op::pow: return a->exponent == b->exponent && structurally_equal(a->lhs, b->lhs);
    default:
      return structurally_equal(a->lhs, b->lhs) && structurally_equal(a->rhs, b->rhs);
  }
}

inline bool depends_on(const Expr& e, char v) {
  switch (e->op) {
    case Op::constant: return false;
    case Op::var: return e->var == v;
    case Op::neg: case Op::sin: case Op::cos: case Op::exp: case Op::pow:
      return depends_on(e->lhs, v);
    default: return depends_on(e->lhs, v) || depends_on(e->rhs, v);
  }
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Fully parenthesized text that parses back to the same tree.
inline std::string to_string(const Expr& e) {
  switch (e->op) {
    case Op::constant: {
      const std::string s = format_double(e->value);
      return e->value < 0 || std::signbit(e->value) ? "(" + s + ")" : s;
    }
    case Op::var: return std::string(1, e->var);
    case Op::neg: return "(-(" + to_string(e->lhs) + "))";
    case Op::sin: return "sin(" + to_string(e->lhs) + ")";
    case Op::cos: return "cos(" + to_string(e->lhs) + ")";
    case Op::exp: return "exp(" + to_string(e->lhs) + ")";
    case Op::pow: return "(" + to_string(e->lhs) + "^" + std::to_string(e->exponent) + ")";
    case Op::add: return "(" + to_string(e->lhs) + " + " + to_string(e->rhs) + ")";
    case Op::sub: return "(" + to_string(e->lhs) + " - " + to_string(e->rhs) + ")";
    case Op::mul: return "(" + to_string(e->lhs) + " * " + to_string(e->rhs) + ")";
    case Op::div: return "(" + to_string(e->lhs) + " / " + to_string(e->rhs) + ")";
  }
  return "?";
}

/// Named sub-expressions available to the parser.
using ExprEnv = std::map<std::string, Expr, std::less<>>;

namespace detail {

class Parser {
 public:
  Parser(std::string_view src, const ExprEnv* env) : s_(src), env_(env) {}

  Expr parse() {
    Expr e = parse_sum();
    skip_ws();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw SyntaxError(pos_, msg); }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  char peek() {
    skip_ws();
    return pos_ < s_.size() ? s_[pos_] : '\0';
  }

  Expr parse_sum() {
    Expr lhs = parse_product();
    for (;;) {
      const char c = peek();
      if (c != '+' && c != '-') return lhs;
      ++pos_;
      Expr rhs = parse_product();
      lhs = c == '+' ? expr::add(lhs, rhs) : expr::sub(lhs, rhs);
    }
  }

  Expr parse_product() {
    Expr lhs = parse_unary();
    for (;;) {
      const char c = peek();
      if (c != '*' && c != '/') return lhs;
      ++pos_;
      Expr rhs = parse_unary();
      lhs = c == '*' ? expr::mul(lhs, rhs) : expr::div(lhs, rhs);
    }
  }

  bool number_ahead() {
    skip_ws();
    return pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.');
  }

  Expr parse_unary() {
    if (peek() != '-') return parse_power();
    ++pos_;
    if (number_ahead()) {
      // A literal directly after unary minus is a negative constant unless
      // an exponent binds tighter.
      const std::size_t save = pos_;
      const double v = lex_number();
      if (peek() != '^') return expr::constant(-v);
      pos_ = save;
    }
    return expr::neg(parse_unary());
  }

  Expr parse_power() {
    Expr base = parse_primary();
    if (peek() != '^') return base;
    ++pos_;
    skip_ws();
    const std::size_t at = pos_;
    const Expr ex = parse_exponent();
    const double v = fold(ex, at);
    if (!(v >= 0.0) || v != std::floor(v) || v > 1e6) {
      throw SyntaxError(at, "exponent must be a non-negative integer");
    }
    return expr::power(base, static_cast<int>(v));
  }

  // Exponent: right-associative power of a primary, optionally negated so
  // that a negative exponent gets a precise diagnostic.
  Expr parse_exponent() {
    if (peek() == '-') {
      ++pos_;
      return expr::neg(parse_exponent());
    }
    return parse_power();
  }

  double fold(const Expr& e, std::size_t at) const {
    switch (e->op) {
      case Op::constant: return e->value;
      case Op::neg: return -fold(e->lhs, at);
      case Op::pow: return std::pow(fold(e->lhs, at), e->exponent);
      case Op::add: return fold(e->lhs, at) + fold(e->rhs, at);
      case Op::sub: return fold(e->lhs, at) - fold(e->rhs, at);
      case Op::mul: return fold(e->lhs, at) * fold(e->rhs, at);
      case Op::div: return fold(e->lhs, at) / fold(e->rhs, at);
      default: throw SyntaxError(at, "exponent must be a constant integer");
    }
  }

  double lex_number() {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.')) {
      ++pos_;
    }
    if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
      std::size_t q = pos_ + 1;
      if (q < s_.size() && (s_[q] == '+' || s_[q] == '-')) ++q;
      if (q < s_.size() && std::isdigit(static_cast<unsigned char>(s_[q]))) {
        pos_ = q;
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      }
    }
    const std::string tok(s_.substr(start, pos_ - start));
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size() || tok == ".") {
      pos_ = start;
      fail("malformed number '" + tok + "'");
    }
    return v;
  }

  Expr parse_primary() {
    const char c = peek();
    if (c == '\0') fail("unexpected end of input");
    if (c == '(') {
      ++pos_;
      Expr e = parse_sum();
      if (peek() != ')') fail("expected ')'");
      ++pos_;
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return expr::constant(lex_number());
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (pos_ < s_.size() &&
             (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) {
        ++pos_;
      }
      const std::string_view name = s_.substr(start, pos_ - start);
      if (name == "sin" || name == "cos" || name == "exp") {
        if (peek() != '(') fail("expected '(' after " + std::string(name));
        ++pos_;
        Expr arg = parse_sum();
        if (peek() != ')') fail("expected ')'");
        ++pos_;
        const Op op = name == "sin" ? Op::sin : name == "cos" ? Op::cos : Op::exp;
        return expr::unary(op, arg);
      }
      if (name == "x" || name == "y" || name == "t") return expr::variable(name[0]);
      if (name == "pi") return expr::constant(std::numbers::pi);
      if (env_ != nullptr) {
        if (auto it = env_->find(name); it != env_->end()) return it->second;
      }
      throw Error(ErrorKind::unknown_identifier,
                  "unknown identifier '" + std::string(name) + "' at offset " + std::to_string(start));
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  std::string_view s_;
  const ExprEnv* env_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Infix grammar: + - * / ^ (integer exponent), unary minus, parentheses,
/// sin/cos/exp calls, variables x y t, the constant pi and names from env.
inline Expr parse_expr(std::string_view text, const ExprEnv& env = {}) {
  return detail::Parser(text, &env).parse();
}

/// Symbolic partial derivative.
inline Expr diff(const Expr& e, char v) {
  using namespace expr;
  switch (e->op) {
    case Op::constant: return constant(0.0);
    case Op::var: return constant(e->var == v ? 1.0 : 0.0);
    case Op::neg: return s_neg(diff(e->lhs, v));
    case Op::sin: return s_mul(cos(e->lhs), diff(e->lhs, v));
    case Op::cos: return s_mul(s_neg(sin(e->lhs)), diff(e->lhs, v));
    case Op::exp: return s_mul(e, diff(e->lhs, v));
    case Op::add: return s_add(diff(e->lhs, v), diff(e->rhs, v));
    case Op::sub: return s_sub(diff(e->lhs, v), diff(e->rhs, v));
    case Op::mul:
      return s_add(s_mul(diff(e->lhs, v), e->rhs), s_mul(e->lhs, diff(e->rhs, v)));
    case Op::div:
      return s_div(s_sub(s_mul(diff(e->lhs, v), e->rhs), s_mul(e->lhs, diff(e->rhs, v))),
                   s_pow(e->rhs, 2));
    case Op::pow:
      return s_mul(s_mul(constant(e->exponent), s_pow(e->lhs, e->exponent - 1)), diff(e->lhs, v));
  }
  return constant(0.0);
}

namespace detail {

inline double eval_raw(const Expr& e, double x, double y, double t) {
  switch (e->op) {
    case Op::constant: return e->value;
    case Op::var: return e->var == 'x' ? x : e->var == 'y' ? y : t;
    case Op::neg: return -eval_raw(e->lhs, x, y, t);
    case Op::sin: return std::sin(eval_raw(e->lhs, x, y, t));
    case Op::cos: return std::cos(eval_raw(e->lhs, x, y, t));
    case Op::exp: return std::exp(eval_raw(e->lhs, x, y, t));
    case Op::add: return eval_raw(e->lhs, x, y, t) + eval_raw(e->rhs, x, y, t);
    case Op::sub: return eval_raw(e->lhs, x, y, t) - eval_raw(e->rhs, x, y, t);
    case Op::mul: return eval_raw(e->lhs, x, y, t) * eval_raw(e->rhs, x, y, t);
    case Op::div: return eval_raw(e->lhs, x, y, t) / eval_raw(e->rhs, x, y, t);
    case Op::pow: {
      const double b = eval_raw(e->lhs, x, y, t);
      double r = 1.0;
      for (int k = 0; k < e->exponent; ++k) r *= b;
      return r;
    }
  }
  return 0.0;
}

}  // namespace detail

/// Tree-walking evaluation; non-finite results raise an evaluation error.
inline double eval_expr(const Expr& e, double x, double y, double t = 0.0) {
  const double v = detail::eval_raw(e, x, y, t);
  if (!std::isfinite(v)) {
    throw Error(ErrorKind::evaluation, "non-finite value of " + to_string(e));
  }
  return v;
}

/// Flattened postfix program for fast repeated evaluation. Returns IEEE
/// results without the finiteness check; callers check where it matters.
class CompiledExpr {
 public:
  CompiledExpr() { code_.push_back({Code::push, 0.0, 0}); depth_ = 1; }
  explicit CompiledExpr(const Expr& e) {
    int d = 0;
    emit(e, d);
  }

  double operator()(double x, double y, double t) const {
    if (depth_ <= 64) {
      std::array<double, 64> st;
      return run(st.data(), x, y, t);
    }
    std::vector<double> st(depth_);
    return run(st.data(), x, y, t);
  }

  std::size_t size() const { return code_.size(); }

 private:
  enum class Code : unsigned char { push, px, py, pt, neg, sin, cos, exp, add, sub, mul, div, sq, pow };
  struct Ins {
    Code code;
    double value;
    int n;
  };

  void emit(const Expr& e, int& d) {
    auto push = [&](Ins i) {
      code_.push_back(i);
      ++d;
      depth_ = std::max(depth_, d);
    };
    switch (e->op) {
      case Op::constant: push({Code::push, e->value, 0}); return;
      case Op::var:
        push({e->var == 'x' ? Code::px : e->var == 'y' ? Code::py : Code::pt, 0.0, 0});
        return;
      case Op::neg: emit(e->lhs, d); code_.push_back({Code::neg, 0.0, 0}); return;
      case Op::sin: emit(e->lhs, d); code_.push_back({Code::sin, 0.0, 0}); return;
      case Op::cos: emit(e->lhs, d); code_.push_back({Code::cos, 0.0, 0}); return;
      case Op::exp: emit(e->lhs, d); code_.push_back({Code::exp, 0.0, 0}); return;
      case Op::pow:
        emit(e->lhs, d);
        code_.push_back({e->exponent == 2 ? Code::sq : Code::pow, 0.0, e->exponent});
        return;
      default: break;
    }
    emit(e->lhs, d);
    emit(e->rhs, d);
    const Code c = e->op == Op::add ? Code::add : e->op == Op::sub ? Code::sub
                 : e->op == Op::mul ? Code::mul : Code::div;
    code_.push_back({c, 0.0, 0});
    --d;
  }

  double run(double* st, double x, double y, double t) const {
    int sp = -1;
    for (const Ins& i : code_) {
      switch (i.code) {
        case Code::push: st[++sp] = i.value; break;
        case Code::px: st[++sp] = x; break;
        case Code::py: st[++sp] = y; break;
        case Code::pt: st[++sp] = t; break;
        case Code::neg: st[sp] = -st[sp]; break;
        case Code::sin: st[sp] = std::sin(st[sp]); break;
        case Code::cos: st[sp] = std::cos(st[sp]); break;
        case Code::exp: st[sp] = std::exp(st[sp]); break;
        case Code::add: st[sp - 1] += st[sp]; --sp; break;
        case Code::sub: st[sp - 1] -= st[sp]; --sp; break;
        case Code::mul: st[sp - 1] *= st[sp]; --sp; break;
        case Code::div: st[sp - 1] /= st[sp]; --sp; break;
        case Code::sq: st[sp] *= st[sp]; break;
        case Code::pow: {
          double r = 1.0;
          for (int k = 0; k < i.n; ++k) r *= st[sp];
          st[sp] = r;
          break;
        }
      }
    }
    return st[0];
  }

  std::vector<Ins> code_;
  int depth_ = 0;
};

/// Several expressions compiled into one register program. Structurally
/// identical subtrees are evaluated once per call.
class ExprProgram {
 public:
  ExprProgram() = default;
  explicit ExprProgram(const std::vector<Expr>& outputs) {
    std::map<const ExprNode*, int> seen;
    for (const Expr& e : outputs) out_.push_back(slot(e, seen));
  }

  std::size_t outputs() const { return out_.size(); }
  std::size_t size() const { return code_.size(); }

  /// Writes one value per output expression to `res`.
  void operator()(double x, double y, double t, double* res) const {
    if (code_.size() <= 256) {
      std::array<double, 256> r;
      run(r.data(), x, y, t, res);
      return;
    }
    std::vector<double> r(code_.size());
    run(r.data(), x, y, t, res);
  }

 private:
  struct Ins {
    Op op;
    char var;
    int exponent;
    double value;
    int a, b;
  };
  using Key = std::tuple<int, char, int, std::uint64_t, int, int>;

  int slot(const Expr& e, std::map<const ExprNode*, int>& seen) {
    if (auto it = seen.find(&e.node()); it != seen.end()) return it->second;
    Ins ins{e->op, e->op == Op::var ? e->var : '\0', e->op == Op::pow ? e->exponent : 0,
            e->op == Op::constant ? e->value : 0.0, -1, -1};
    if (e->op != Op::constant && e->op != Op::var) ins.a = slot(e->lhs, seen);
    if (e->op == Op::add || e->op == Op::sub || e->op == Op::mul || e->op == Op::div) ins.b = slot(e->rhs, seen);
    const Key key{static_cast<int>(ins.op), ins.var, ins.exponent, std::bit_cast<std::uint64_t>(ins.value), ins.a, ins.b};
    auto [it, fresh] = index_.try_emplace(key, static_cast<int>(code_.size()));
    if (fresh) code_.push_back(ins);
    seen.emplace(&e.node(), it->second);
    return it->second;
  }

  void run(double* r, double x, double y, double t, double* res) const {
    const std::size_t n = code_.size();
    for (std::size_t k = 0; k < n; ++k) {
      const Ins& i = code_[k];
      switch (i.op) {
        case Op::constant: r[k] = i.value; break;
        case Op::var: r[k] = i.var == 'x' ? x : i.var == 'y' ? y : t; break;
        case Op::neg: r[k] = -r[i.a]; break;
        case Op::sin: r[k] = std::sin(r[i.a]); break;
        case Op::cos: r[k] = std::cos(r[i.a]); break;
        case Op::exp: r[k] = std::exp(r[i.a]); break;
        case Op::add: r[k] = r[i.a] + r[i.b]; break;
        case Op::sub: r[k] = r[i.a] - r[i.b]; break;
        case Op::mul: r[k] = r[i.a] * r[i.b]; break;
        case Op::div: r[k] = r[i.a] / r[i.b]; break;
        case Op::pow: {
          double v = 1.0;
          for (int j = 0; j < i.exponent; ++j) v *= r[i.a];
          r[k] = v;
          break;
        }
      }
    }
    for (std::size_t k = 0; k < out_.size(); ++k) res[k] = r[out_[k]];
  }

  std::vector<Ins> code_;
  std::vector<int> out_;
  std::map<Key, int> index_;
};

}  // namespace genusflow
