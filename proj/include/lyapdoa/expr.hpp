#pragma once

// Expression trees for polynomial/rational vector fields.
//
// Grammar (whitespace insensitive):
//
//   system  := expr { ';' expr }
//   expr    := term { ('+' | '-') term }
//   term    := unary { ('*' | '/') unary }
//   unary   := ('-' | '+') unary | power
//   power   := primary [ '^' ['-'] integer ]
//   primary := number | identifier | '(' expr ')'
//
// Identifiers are state variables x1..xn or named parameters. Parameters are
// replaced by their values while parsing and constant subtrees are folded.

#include <charconv>
#include <cmath>
#include <cctype>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lyapdoa/error.hpp"
#include "lyapdoa/jet.hpp"

namespace lyapdoa::expr {

enum class Kind { Constant, Variable, Add, Sub, Mul, Div, Neg, Pow };

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
  Kind kind = Kind::Constant;
  double value = 0.0;  // Constant
  int index = 0;       // Variable (0-based)
  int exponent = 0;    // Pow
  NodePtr lhs;         // unary operand or left operand
  NodePtr rhs;

  static NodePtr constant(double v) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::Constant;
    n->value = v;
    return n;
  }
  static NodePtr variable(int i) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::Variable;
    n->index = i;
    return n;
  }
  static NodePtr binary(Kind k, NodePtr a, NodePtr b) {
    auto n = std::make_shared<Node>();
    n->kind = k;
    n->lhs = std::move(a);
    n->rhs = std::move(b);
    return n;
  }
  static NodePtr negate(NodePtr a) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::Neg;
    n->lhs = std::move(a);
    return n;
  }
  static NodePtr power(NodePtr a, int e) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::Pow;
    n->lhs = std::move(a);
    n->exponent = e;
    return n;
  }
};

namespace detail {

inline double ipow(double base, int e) {
  double r = 1.0;
  unsigned mag = static_cast<unsigned>(e < 0 ? -e : e);
  double b = base;
  while (mag > 0) {
    if (mag & 1u) r *= b;
    mag >>= 1u;
    if (mag > 0) b *= b;
  }
  return e < 0 ? 1.0 / r : r;
}

inline bool is_const(const NodePtr& n) { return n->kind == Kind::Constant; }

}  // namespace detail

// Builders that fold constant operands.
inline NodePtr make_binary(Kind k, NodePtr a, NodePtr b, std::size_t pos = 0) {
  if (detail::is_const(a) && detail::is_const(b)) {
    const double x = a->value, y = b->value;
    switch (k) {
      case Kind::Add: return Node::constant(x + y);
      case Kind::Sub: return Node::constant(x - y);
      case Kind::Mul: return Node::constant(x * y);
      case Kind::Div:
        if (y == 0.0) throw ParseError("constant division by zero", pos);
        return Node::constant(x / y);
      default: break;
    }
  }
  return Node::binary(k, std::move(a), std::move(b));
}

inline NodePtr make_neg(NodePtr a) {
  if (detail::is_const(a)) return Node::constant(-a->value);
  return Node::negate(std::move(a));
}

inline NodePtr make_pow(NodePtr a, int e, std::size_t pos = 0) {
  if (detail::is_const(a)) {
    if (e < 0 && a->value == 0.0) throw ParseError("constant division by zero", pos);
    return Node::constant(detail::ipow(a->value, e));
  }
  return Node::power(std::move(a), e);
}

using ParameterMap = std::map<std::string, double, std::less<>>;

class Parser {
 public:
  Parser(std::string_view src, int n_vars, const ParameterMap& params)
      : src_(src), n_vars_(n_vars), params_(params) {}

  std::vector<NodePtr> parse_system() {
    std::vector<NodePtr> out;
    out.push_back(parse_expr());
    skip_ws();
    while (peek() == ';') {
      ++pos_;
      skip_ws();
      if (at_end()) break;  // tolerate a trailing separator
      out.push_back(parse_expr());
      skip_ws();
    }
    if (!at_end()) fail(std::string("unexpected character '") + peek() + "'");
    return out;
  }

  NodePtr parse_single() {
    NodePtr e = parse_expr();
    skip_ws();
    if (!at_end()) fail(std::string("unexpected character '") + peek() + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, pos_); }
  [[nodiscard]] bool at_end() const { return pos_ >= src_.size(); }
  [[nodiscard]] char peek() const { return at_end() ? '\0' : src_[pos_]; }
  void skip_ws() {
    while (!at_end() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  NodePtr parse_expr() {
    NodePtr lhs = parse_term();
    for (;;) {
      skip_ws();
      const char c = peek();
      if (c != '+' && c != '-') return lhs;
      const std::size_t at = pos_++;
      NodePtr rhs = parse_term();
      lhs = make_binary(c == '+' ? Kind::Add : Kind::Sub, std::move(lhs), std::move(rhs), at);
    }
  }

  NodePtr parse_term() {
    NodePtr lhs = parse_unary();
    for (;;) {
      skip_ws();
      const char c = peek();
      if (c != '*' && c != '/') return lhs;
      const std::size_t at = pos_++;
      NodePtr rhs = parse_unary();
      lhs = make_binary(c == '*' ? Kind::Mul : Kind::Div, std::move(lhs), std::move(rhs), at);
    }
  }

  NodePtr parse_unary() {
    skip_ws();
    if (peek() == '-') {
      ++pos_;
      return make_neg(parse_unary());
    }
    if (peek() == '+') {
      ++pos_;
      return parse_unary();
    }
    return parse_power();
  }

  NodePtr parse_power() {
    NodePtr base = parse_primary();
    skip_ws();
    if (peek() != '^') return base;
    const std::size_t at = pos_++;
    skip_ws();
    bool negative = false;
    if (peek() == '-') {
      negative = true;
      ++pos_;
      skip_ws();
    }
    const std::size_t start = pos_;
    while (!at_end() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    if (start == pos_) fail("expected integer exponent after '^'");
    int e = 0;
    auto [ptr, ec] = std::from_chars(src_.data() + start, src_.data() + pos_, e);
    if (ec != std::errc()) {
      pos_ = start;
      fail("exponent out of range");
    }
    return make_pow(std::move(base), negative ? -e : e, at);
  }

  NodePtr parse_primary() {
    skip_ws();
    if (at_end()) fail("unexpected end of input");
    const char c = peek();
    if (c == '(') {
      ++pos_;
      NodePtr e = parse_expr();
      skip_ws();
      if (peek() != ')') fail("expected ')'");
      ++pos_;
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_identifier();
    fail(std::string("unexpected character '") + c + "'");
  }

  NodePtr parse_number() {
    const std::size_t start = pos_;
    while (!at_end() && (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.')) ++pos_;
    if (!at_end() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t p = pos_ + 1;
      if (p < src_.size() && (src_[p] == '+' || src_[p] == '-')) ++p;
      if (p < src_.size() && std::isdigit(static_cast<unsigned char>(src_[p]))) {
        pos_ = p;
        while (!at_end() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
      }
    }
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(src_.data() + start, src_.data() + pos_, v);
    if (ec != std::errc() || ptr != src_.data() + pos_) {
      pos_ = start;
      fail("malformed number");
    }
    return Node::constant(v);
  }

  NodePtr parse_identifier() {
    const std::size_t start = pos_;
    while (!at_end() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) ++pos_;
    const std::string_view id = src_.substr(start, pos_ - start);
    if (auto it = params_.find(id); it != params_.end()) return Node::constant(it->second);
    if (id.size() >= 2 && id[0] == 'x') {
      int idx = 0;
      auto [ptr, ec] = std::from_chars(id.data() + 1, id.data() + id.size(), idx);
      if (ec == std::errc() && ptr == id.data() + id.size() && id[1] != '0' && idx >= 1 && idx <= n_vars_)
        return Node::variable(idx - 1);
    }
    pos_ = start;
    fail("unknown identifier '" + std::string(id) + "'");
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int n_vars_;
  const ParameterMap& params_;
};

namespace detail {

inline int precedence(const Node& n) {
  switch (n.kind) {
    case Kind::Add:
    case Kind::Sub: return 1;
    case Kind::Mul:
    case Kind::Div: return 2;
    case Kind::Neg: return 3;
    case Kind::Pow: return 4;
    case Kind::Constant: return n.value < 0.0 || std::signbit(n.value) ? 3 : 5;
    case Kind::Variable: return 5;
  }
  return 5;
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline void print_into(const Node& n, std::string& out);

inline void print_operand(const Node& n, int min_prec, std::string& out) {
  if (precedence(n) < min_prec) {
    out += '(';
    print_into(n, out);
    out += ')';
  } else {
    print_into(n, out);
  }
}

inline void print_into(const Node& n, std::string& out) {
  switch (n.kind) {
    case Kind::Constant: out += format_double(n.value); return;
    case Kind::Variable: out += "x" + std::to_string(n.index + 1); return;
    case Kind::Add:
    case Kind::Sub:
      print_operand(*n.lhs, 1, out);
      out += n.kind == Kind::Add ? " + " : " - ";
      print_operand(*n.rhs, 2, out);
      return;
    case Kind::Mul:
    case Kind::Div:
      print_operand(*n.lhs, 2, out);
      out += n.kind == Kind::Mul ? "*" : "/";
      print_operand(*n.rhs, 3, out);
      return;
    case Kind::Neg:
      out += "-";
      print_operand(*n.lhs, 3, out);
      return;
    case Kind::Pow:
      print_operand(*n.lhs, 5, out);
      out += "^" + std::to_string(n.exponent);
      return;
  }
}

}  // namespace detail

/// Canonical text form; parse(print(e)) reproduces e structurally.
inline std::string print(const Node& n) {
  std::string out;
  detail::print_into(n, out);
  return out;
}

inline std::string print_system(std::span<const NodePtr> components) {
  std::string out;
  for (std::size_t i = 0; i < components.size(); ++i) {
    if (i) out += "; ";
    out += print(*components[i]);
  }
  return out;
}

/// Flat register program compiled from a set of trees. Each instruction writes
/// one slot; operands refer to earlier slots.
class Tape {
 public:
  enum class Op : unsigned char { Const, Var, Add, Sub, Mul, Div, Neg, Pow };
  struct Instr {
    Op op;
    int a = -1;
    int b = -1;
    int exponent = 0;
    double value = 0.0;
  };

  Tape() = default;
  explicit Tape(std::span<const NodePtr> outputs) {
    for (const auto& root : outputs) outputs_.push_back(emit(root));
  }

  [[nodiscard]] std::size_t size() const noexcept { return code_.size(); }
  [[nodiscard]] std::span<const int> outputs() const noexcept { return outputs_; }
  [[nodiscard]] const Instr& at(std::size_t i) const { return code_[i]; }

  /// Text of the subexpression computed by slot i (diagnostics).
  [[nodiscard]] std::string describe(std::size_t i) const { return print(*nodes_[i]); }

  /// Scalar evaluation; scratch must hold size() doubles.
  void eval(std::span<const double> x, std::span<double> out, std::span<double> scratch) const {
    for (std::size_t i = 0; i < code_.size(); ++i) {
      const Instr& in = code_[i];
      double& r = scratch[i];
      switch (in.op) {
        case Op::Const: r = in.value; break;
        case Op::Var: r = x[static_cast<std::size_t>(in.a)]; break;
        case Op::Add: r = scratch[in.a] + scratch[in.b]; break;
        case Op::Sub: r = scratch[in.a] - scratch[in.b]; break;
        case Op::Mul: r = scratch[in.a] * scratch[in.b]; break;
        case Op::Div:
          if (scratch[in.b] == 0.0) throw EvaluationError(division_message(i, x));
          r = scratch[in.a] / scratch[in.b];
          break;
        case Op::Neg: r = -scratch[in.a]; break;
        case Op::Pow:
          if (in.exponent < 0 && scratch[in.a] == 0.0) throw EvaluationError(division_message(i, x));
          r = detail::ipow(scratch[in.a], in.exponent);
          break;
      }
    }
    for (std::size_t k = 0; k < outputs_.size(); ++k) out[k] = scratch[outputs_[k]];
  }

  /// Jet evaluation. xs holds n jets of length len back to back; out receives
  /// one jet per output. scratch must hold (size() + 3) * len doubles.
  void eval_jet(std::span<const double> xs, std::size_t len, std::span<double> out,
                std::span<double> scratch, std::span<const double> state_for_errors = {}) const {
    auto slot = [&](int i) { return scratch.subspan(static_cast<std::size_t>(i) * len, len); };
    std::span<double> extra = scratch.subspan(code_.size() * len, 3 * len);
    for (std::size_t i = 0; i < code_.size(); ++i) {
      const Instr& in = code_[i];
      std::span<double> r = slot(static_cast<int>(i));
      switch (in.op) {
        case Op::Const:
          for (std::size_t k = 0; k < len; ++k) r[k] = (k == 0) ? in.value : 0.0;
          break;
        case Op::Var: {
          auto src = xs.subspan(static_cast<std::size_t>(in.a) * len, len);
          for (std::size_t k = 0; k < len; ++k) r[k] = src[k];
          break;
        }
        case Op::Add: jet_kernels::add(slot(in.a), slot(in.b), r); break;
        case Op::Sub: jet_kernels::sub(slot(in.a), slot(in.b), r); break;
        case Op::Mul: jet_kernels::mul(slot(in.a), slot(in.b), r); break;
        case Op::Div:
          if (slot(in.b)[0] == 0.0) throw EvaluationError(division_message(i, state_for_errors));
          jet_kernels::div(slot(in.a), slot(in.b), r);
          break;
        case Op::Neg: jet_kernels::neg(slot(in.a), r); break;
        case Op::Pow: {
          const unsigned mag = static_cast<unsigned>(in.exponent < 0 ? -in.exponent : in.exponent);
          if (in.exponent >= 0) {
            jet_kernels::pow_uint(slot(in.a), mag, r, extra.subspan(0, 2 * len));
          } else {
            if (slot(in.a)[0] == 0.0) throw EvaluationError(division_message(i, state_for_errors));
            std::span<double> den = extra.subspan(2 * len, len);
            jet_kernels::pow_uint(slot(in.a), mag, den, extra.subspan(0, 2 * len));
            std::span<double> one = extra.subspan(0, len);
            for (std::size_t k = 0; k < len; ++k) one[k] = (k == 0) ? 1.0 : 0.0;
            jet_kernels::div(one, den, r);
          }
          break;
        }
      }
    }
    for (std::size_t k = 0; k < outputs_.size(); ++k) {
      auto src = slot(outputs_[k]);
      for (std::size_t j = 0; j < len; ++j) out[k * len + j] = src[j];
    }
  }

 private:
  int emit(const NodePtr& np) {
    const Node& n = *np;
    Instr in{};
    switch (n.kind) {
      case Kind::Constant: in.op = Op::Const; in.value = n.value; break;
      case Kind::Variable: in.op = Op::Var; in.a = n.index; break;
      case Kind::Add: in.op = Op::Add; break;
      case Kind::Sub: in.op = Op::Sub; break;
      case Kind::Mul: in.op = Op::Mul; break;
      case Kind::Div: in.op = Op::Div; break;
      case Kind::Neg: in.op = Op::Neg; break;
      case Kind::Pow: in.op = Op::Pow; in.exponent = n.exponent; break;
    }
    if (n.lhs && n.kind != Kind::Variable) in.a = emit(n.lhs);
    if (n.rhs) in.b = emit(n.rhs);
    code_.push_back(in);
    nodes_.push_back(np);
    return static_cast<int>(code_.size()) - 1;
  }

  std::string division_message(std::size_t i, std::span<const double> x) const {
    const Instr& in = code_[i];
    const std::size_t den = in.op == Op::Div ? static_cast<std::size_t>(in.b) : static_cast<std::size_t>(in.a);
    std::string msg = "division by zero in '" + describe(i) + "' (denominator '" + describe(den) + "')";
    if (!x.empty()) {
      msg += " at x = (";
      for (std::size_t k = 0; k < x.size(); ++k) {
        if (k) msg += ", ";
        msg += detail::format_double(x[k]);
      }
      msg += ")";
    }
    return msg;
  }

  std::vector<Instr> code_;
  std::vector<NodePtr> nodes_;
  std::vector<int> outputs_;
};

}  // namespace lyapdoa::expr
