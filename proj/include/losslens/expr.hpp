#pragma once

// Target functions f(x, y) typed in by the user.
//
// Grammar (recursive descent):
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := ('-' | '+') unary | power
//   power   := primary ('^' unary)?
//   primary := number | 'x' | 'y' | 'pi' | 'e' | name '(' expr ')' | '(' expr ')'
// so '^' binds tighter than unary minus and is right associative.

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <numbers>
#include <string>
#include <string_view>
#include <utility>

#include "losslens/errors.hpp"

namespace losslens {

class UnknownIdentifier : public SyntaxError {
 public:
  UnknownIdentifier(std::size_t position, const std::string& name)
      : SyntaxError(position, "unknown identifier '" + name + "'"), name_(name) {}
  const char* kind() const noexcept override { return "unknown_identifier"; }
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

enum class UnaryOp { neg, sin, cos, tan, exp, log, abs, sqrt };
enum class BinaryOp { add, sub, mul, div, pow };

inline std::string_view to_string(UnaryOp op) {
  switch (op) {
    case UnaryOp::neg: return "-";
    case UnaryOp::sin: return "sin";
    case UnaryOp::cos: return "cos";
    case UnaryOp::tan: return "tan";
    case UnaryOp::exp: return "exp";
    case UnaryOp::log: return "log";
    case UnaryOp::abs: return "abs";
    case UnaryOp::sqrt: return "sqrt";
  }
  return "?";
}

inline char to_char(BinaryOp op) {
  switch (op) {
    case BinaryOp::add: return '+';
    case BinaryOp::sub: return '-';
    case BinaryOp::mul: return '*';
    case BinaryOp::div: return '/';
    case BinaryOp::pow: return '^';
  }
  return '?';
}

struct ExprNode {
  enum class Kind { constant, variable, unary, binary };
  Kind kind = Kind::constant;
  double value = 0.0;    // constant
  std::string name;      // constant spelling ("pi", "e") or empty
  char var = 'x';        // variable
  UnaryOp uop = UnaryOp::neg;
  BinaryOp bop = BinaryOp::add;
  std::shared_ptr<const ExprNode> lhs, rhs;  // unary uses lhs only
};

// Immutable expression tree; copies share nodes.
class Expr {
 public:
  using Node = ExprNode;

  Expr() = default;
  explicit Expr(std::shared_ptr<const Node> root) : root_(std::move(root)) {}

  static Expr constant(double v, std::string name = {}) {
    auto n = std::make_shared<Node>();
    n->kind = Node::Kind::constant;
    n->value = v;
    n->name = std::move(name);
    return Expr(std::move(n));
  }
  static Expr variable(char v) {
    auto n = std::make_shared<Node>();
    n->kind = Node::Kind::variable;
    n->var = v;
    return Expr(std::move(n));
  }
  static Expr unary(UnaryOp op, Expr arg) {
    auto n = std::make_shared<Node>();
    n->kind = Node::Kind::unary;
    n->uop = op;
    n->lhs = arg.root_;
    return Expr(std::move(n));
  }
  static Expr binary(BinaryOp op, Expr a, Expr b) {
    auto n = std::make_shared<Node>();
    n->kind = Node::Kind::binary;
    n->bop = op;
    n->lhs = a.root_;
    n->rhs = b.root_;
    return Expr(std::move(n));
  }

  const Node* root() const { return root_.get(); }
  bool empty() const { return !root_; }

  double eval(double x, double y) const { return eval_node(*root_, x, y); }
  std::string str() const { return root_ ? print(*root_) : std::string{}; }

  friend bool operator==(const Expr& a, const Expr& b) {
    if (!a.root_ || !b.root_) return a.root_ == b.root_;
    return same(*a.root_, *b.root_);
  }

 private:
  static bool same(const Node& a, const Node& b) {
    if (a.kind != b.kind) return false;
    switch (a.kind) {
      case Node::Kind::constant: return a.value == b.value;
      case Node::Kind::variable: return a.var == b.var;
      case Node::Kind::unary: return a.uop == b.uop && same(*a.lhs, *b.lhs);
      case Node::Kind::binary: return a.bop == b.bop && same(*a.lhs, *b.lhs) && same(*a.rhs, *b.rhs);
    }
    return false;
  }

  static int precedence(const Node& n) {
    switch (n.kind) {
      case Node::Kind::constant:
      case Node::Kind::variable: return 5;
      case Node::Kind::unary: return n.uop == UnaryOp::neg ? 3 : 5;
      case Node::Kind::binary:
        switch (n.bop) {
          case BinaryOp::add:
          case BinaryOp::sub: return 1;
          case BinaryOp::mul:
          case BinaryOp::div: return 2;
          case BinaryOp::pow: return 4;
        }
    }
    return 0;
  }

  static std::string wrap(const Node& n, int min_prec) {
    std::string s = print(n);
    return precedence(n) < min_prec ? "(" + s + ")" : s;
  }

  static std::string print(const Node& n) {
    switch (n.kind) {
      case Node::Kind::constant: {
        if (!n.name.empty()) return n.name;
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", n.value);
        return n.value < 0 ? std::string("(") + buf + ")" : buf;
      }
      case Node::Kind::variable: return std::string(1, n.var);
      case Node::Kind::unary:
        if (n.uop == UnaryOp::neg) return "-" + wrap(*n.lhs, 3);
        return std::string(to_string(n.uop)) + "(" + print(*n.lhs) + ")";
      case Node::Kind::binary: {
        const int p = precedence(n);
        if (n.bop == BinaryOp::pow) return wrap(*n.lhs, 5) + "^" + wrap(*n.rhs, 3);
        return wrap(*n.lhs, p) + " " + to_char(n.bop) + " " + wrap(*n.rhs, p + 1);
      }
    }
    return {};
  }

  static double checked(const Node& n, double v) {
    if (!std::isfinite(v)) throw DomainError(print(n), "non-finite result");
    return v;
  }

  static double eval_node(const Node& n, double x, double y) {
    switch (n.kind) {
      case Node::Kind::constant: return n.value;
      case Node::Kind::variable: return n.var == 'x' ? x : y;
      case Node::Kind::unary: {
        const double a = eval_node(*n.lhs, x, y);
        switch (n.uop) {
          case UnaryOp::neg: return -a;
          case UnaryOp::sin: return std::sin(a);
          case UnaryOp::cos: return std::cos(a);
          case UnaryOp::tan: return checked(n, std::tan(a));
          case UnaryOp::exp: return checked(n, std::exp(a));
          case UnaryOp::log:
            if (a <= 0.0) throw DomainError(print(n), "log of nonpositive value");
            return std::log(a);
          case UnaryOp::abs: return std::abs(a);
          case UnaryOp::sqrt:
            if (a < 0.0) throw DomainError(print(n), "sqrt of negative value");
            return std::sqrt(a);
        }
        return a;
      }
      case Node::Kind::binary: {
        const double a = eval_node(*n.lhs, x, y);
        const double b = eval_node(*n.rhs, x, y);
        switch (n.bop) {
          case BinaryOp::add: return checked(n, a + b);
          case BinaryOp::sub: return checked(n, a - b);
          case BinaryOp::mul: return checked(n, a * b);
          case BinaryOp::div:
            if (b == 0.0) throw DomainError(print(n), "division by zero");
            return checked(n, a / b);
          case BinaryOp::pow: return checked(n, std::pow(a, b));
        }
      }
    }
    return 0.0;
  }

  std::shared_ptr<const Node> root_;
};

namespace detail {

class ExprParser {
 public:
  explicit ExprParser(std::string_view text) : text_(text) {}

  Expr parse() {
    skip_space();
    if (pos_ == text_.size()) throw SyntaxError(pos_, "empty expression");
    Expr e = parse_expr();
    skip_space();
    if (pos_ != text_.size()) {
      if (text_[pos_] == ')') throw SyntaxError(pos_, "unbalanced ')'");
      throw SyntaxError(pos_, std::string("unexpected '") + text_[pos_] + "'");
    }
    return e;
  }

 private:
  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  [[noreturn]] void unexpected() {
    if (pos_ >= text_.size()) throw SyntaxError(pos_, "unexpected end of input");
    throw SyntaxError(pos_, std::string("unexpected '") + text_[pos_] + "'");
  }

  Expr parse_expr() {
    Expr lhs = parse_term();
    for (;;) {
      if (accept('+'))
        lhs = Expr::binary(BinaryOp::add, lhs, parse_term());
      else if (accept('-'))
        lhs = Expr::binary(BinaryOp::sub, lhs, parse_term());
      else
        return lhs;
    }
  }

  Expr parse_term() {
    Expr lhs = parse_unary();
    for (;;) {
      if (accept('*'))
        lhs = Expr::binary(BinaryOp::mul, lhs, parse_unary());
      else if (accept('/'))
        lhs = Expr::binary(BinaryOp::div, lhs, parse_unary());
      else
        return lhs;
    }
  }

  Expr parse_unary() {
    if (accept('-')) return Expr::unary(UnaryOp::neg, parse_unary());
    if (accept('+')) return parse_unary();
    return parse_power();
  }

  Expr parse_power() {
    Expr base = parse_primary();
    if (accept('^')) return Expr::binary(BinaryOp::pow, base, parse_unary());
    return base;
  }

  Expr parse_primary() {
    skip_space();
    if (pos_ >= text_.size()) unexpected();
    const char c = text_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_identifier();
    if (accept('(')) {
      Expr inner = parse_expr();
      if (!accept(')')) unexpected();
      return inner;
    }
    unexpected();
  }

  Expr parse_number() {
    const std::size_t start = pos_;
    auto digits = [&] {
      std::size_t n = 0;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_, ++n;
      return n;
    };
    std::size_t n = digits();
    if (pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      n += digits();
    }
    if (n == 0) throw SyntaxError(start, "malformed number");
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      // Only an exponent if digits follow; otherwise leave 'e' for the caller.
      std::size_t look = pos_ + 1;
      if (look < text_.size() && (text_[look] == '+' || text_[look] == '-')) ++look;
      if (look < text_.size() && std::isdigit(static_cast<unsigned char>(text_[look]))) {
        pos_ = look;
        digits();
      }
    }
    const std::string literal(text_.substr(start, pos_ - start));
    return Expr::constant(std::strtod(literal.c_str(), nullptr));
  }

  Expr parse_identifier() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
      ++pos_;
    const std::string name(text_.substr(start, pos_ - start));
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == '(') {
      UnaryOp op;
      if (!function_named(name, op)) throw UnknownIdentifier(start, name);
      ++pos_;
      Expr arg = parse_expr();
      if (!accept(')')) unexpected();
      return Expr::unary(op, arg);
    }
    if (name == "x" || name == "y") return Expr::variable(name[0]);
    if (name == "pi") return Expr::constant(std::numbers::pi, "pi");
    if (name == "e") return Expr::constant(std::numbers::e, "e");
    throw UnknownIdentifier(start, name);
  }

  static bool function_named(const std::string& name, UnaryOp& op) {
    static constexpr std::pair<std::string_view, UnaryOp> table[] = {
        {"sin", UnaryOp::sin}, {"cos", UnaryOp::cos}, {"tan", UnaryOp::tan},   {"exp", UnaryOp::exp},
        {"log", UnaryOp::log}, {"abs", UnaryOp::abs}, {"sqrt", UnaryOp::sqrt},
    };
    for (const auto& [n, o] : table)
      if (n == name) {
        op = o;
        return true;
      }
    return false;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline Expr parse_expr(std::string_view text) { return detail::ExprParser(text).parse(); }

}  // namespace losslens
