#pragma once

// Scalar symbolic expressions over indexed variables. Used to define
// constraint/dynamics functions from problem files, to derive exact Jacobians
// and Hessians by repeated symbolic differentiation, and (via Tape) to
// evaluate large bundles of expressions with shared subterms in one pass.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sweepds/errors.hpp"

namespace sweepds::expr {

enum class Op : std::uint8_t {
  Const,
  Var,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Pow,  // constant exponent, stored in cval
  Cos,
  Sin,
  Exp,
  Sqrt,
};

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
  Op op;
  double cval = 0.0;
  int var = -1;
  NodePtr a;
  NodePtr b;
};

class Expr {
 public:
  Expr() : Expr(0.0) {}
  Expr(double v) : node_(make_node(Op::Const, v)) {}
  Expr(int v) : Expr(static_cast<double>(v)) {}

  static Expr var(int id) {
    Node n;
    n.op = Op::Var;
    n.var = id;
    return Expr(std::make_shared<const Node>(std::move(n)));
  }

  const NodePtr& node() const { return node_; }
  Op op() const { return node_->op; }

  bool is_const() const { return node_->op == Op::Const; }
  bool is_const(double v) const {
    return is_const() && node_->cval == v;
  }
  double const_value() const { return node_->cval; }

  explicit Expr(NodePtr n) : node_(std::move(n)) {}

 private:
  static NodePtr make_node(Op op, double c) {
    Node n;
    n.op = op;
    n.cval = c;
    return std::make_shared<const Node>(std::move(n));
  }

  NodePtr node_;
};

namespace detail {

inline Expr make_unary(Op op, const Expr& a, double cval = 0.0) {
  Node n;
  n.op = op;
  n.cval = cval;
  n.a = a.node();
  return Expr(std::make_shared<const Node>(std::move(n)));
}

inline Expr make_binary(Op op, const Expr& a, const Expr& b) {
  Node n;
  n.op = op;
  n.a = a.node();
  n.b = b.node();
  return Expr(std::make_shared<const Node>(std::move(n)));
}

}  // namespace detail

inline Expr operator+(const Expr& a, const Expr& b) {
  if (a.is_const() && b.is_const()) return Expr(a.const_value() + b.const_value());
  if (a.is_const(0.0)) return b;
  if (b.is_const(0.0)) return a;
  return detail::make_binary(Op::Add, a, b);
}

inline Expr operator-(const Expr& a) {
  if (a.is_const()) return Expr(-a.const_value());
  if (a.op() == Op::Neg) return Expr(a.node()->a);
  return detail::make_unary(Op::Neg, a);
}

inline Expr operator-(const Expr& a, const Expr& b) {
  if (a.is_const() && b.is_const()) return Expr(a.const_value() - b.const_value());
  if (b.is_const(0.0)) return a;
  if (a.is_const(0.0)) return -b;
  return detail::make_binary(Op::Sub, a, b);
}

inline Expr operator*(const Expr& a, const Expr& b) {
  if (a.is_const() && b.is_const()) return Expr(a.const_value() * b.const_value());
  if (a.is_const(0.0) || b.is_const(0.0)) return Expr(0.0);
  if (a.is_const(1.0)) return b;
  if (b.is_const(1.0)) return a;
  if (a.is_const(-1.0)) return -b;
  if (b.is_const(-1.0)) return -a;
  return detail::make_binary(Op::Mul, a, b);
}

inline Expr operator/(const Expr& a, const Expr& b) {
  if (a.is_const() && b.is_const()) return Expr(a.const_value() / b.const_value());
  if (a.is_const(0.0)) return Expr(0.0);
  if (b.is_const(1.0)) return a;
  return detail::make_binary(Op::Div, a, b);
}

inline Expr pow(const Expr& a, double p) {
  if (p == 0.0) return Expr(1.0);
  if (p == 1.0) return a;
  if (a.is_const()) return Expr(std::pow(a.const_value(), p));
  return detail::make_unary(Op::Pow, a, p);
}

inline Expr cos(const Expr& a) {
  if (a.is_const()) return Expr(std::cos(a.const_value()));
  return detail::make_unary(Op::Cos, a);
}

inline Expr sin(const Expr& a) {
  if (a.is_const()) return Expr(std::sin(a.const_value()));
  return detail::make_unary(Op::Sin, a);
}

inline Expr exp(const Expr& a) {
  if (a.is_const()) return Expr(std::exp(a.const_value()));
  return detail::make_unary(Op::Exp, a);
}

inline Expr sqrt(const Expr& a) {
  if (a.is_const()) return Expr(std::sqrt(a.const_value()));
  return detail::make_unary(Op::Sqrt, a);
}

inline Expr square(const Expr& a) { return pow(a, 2.0); }

// -------------------------------------------------------------------------
// Differentiation. Shared subgraphs are memoized per call so the derivative
// graph stays proportional to the input graph.

class DiffContext {
 public:
  explicit DiffContext(int var) : var_(var) {}

  Expr run(const Expr& e) {
    auto it = memo_.find(e.node().get());
    if (it != memo_.end()) return it->second;
    Expr d = compute(e);
    memo_.emplace(e.node().get(), d);
    return d;
  }

 private:
  Expr compute(const Expr& e) {
    const Node& n = *e.node();
    const auto sub = [&](const NodePtr& p) { return run(Expr(p)); };
    switch (n.op) {
      case Op::Const:
        return Expr(0.0);
      case Op::Var:
        return Expr(n.var == var_ ? 1.0 : 0.0);
      case Op::Add:
        return sub(n.a) + sub(n.b);
      case Op::Sub:
        return sub(n.a) - sub(n.b);
      case Op::Mul:
        return sub(n.a) * Expr(n.b) + Expr(n.a) * sub(n.b);
      case Op::Div: {
        Expr b(n.b);
        return sub(n.a) / b - Expr(n.a) * sub(n.b) / (b * b);
      }
      case Op::Neg:
        return -sub(n.a);
      case Op::Pow:
        return Expr(n.cval) * pow(Expr(n.a), n.cval - 1.0) * sub(n.a);
      case Op::Cos:
        return -sin(Expr(n.a)) * sub(n.a);
      case Op::Sin:
        return cos(Expr(n.a)) * sub(n.a);
      case Op::Exp:
        return exp(Expr(n.a)) * sub(n.a);
      case Op::Sqrt:
        return sub(n.a) / (Expr(2.0) * sqrt(Expr(n.a)));
    }
    throw Error("diff: unknown op");
  }

  int var_;
  std::unordered_map<const Node*, Expr> memo_;
};

inline Expr diff(const Expr& e, int var) { return DiffContext(var).run(e); }

// -------------------------------------------------------------------------
// Variable collection and substitution.

inline void collect_vars(const Expr& e, std::set<int>& out) {
  std::unordered_map<const Node*, bool> seen;
  std::vector<const Node*> stack{e.node().get()};
  while (!stack.empty()) {
    const Node* n = stack.back();
    stack.pop_back();
    if (seen.count(n)) continue;
    seen[n] = true;
    if (n->op == Op::Var) out.insert(n->var);
    if (n->a) stack.push_back(n->a.get());
    if (n->b) stack.push_back(n->b.get());
  }
}

inline std::set<int> variables(const Expr& e) {
  std::set<int> out;
  collect_vars(e, out);
  return out;
}

// Rebuilds the expression with every variable replaced through `map`.
class SubstContext {
 public:
  explicit SubstContext(std::function<Expr(int)> map) : map_(std::move(map)) {}

  Expr run(const Expr& e) {
    auto it = memo_.find(e.node().get());
    if (it != memo_.end()) return it->second;
    Expr r = compute(e);
    memo_.emplace(e.node().get(), r);
    return r;
  }

 private:
  Expr compute(const Expr& e) {
    const Node& n = *e.node();
    const auto sub = [&](const NodePtr& p) { return run(Expr(p)); };
    switch (n.op) {
      case Op::Const:
        return e;
      case Op::Var:
        return map_(n.var);
      case Op::Add:
        return sub(n.a) + sub(n.b);
      case Op::Sub:
        return sub(n.a) - sub(n.b);
      case Op::Mul:
        return sub(n.a) * sub(n.b);
      case Op::Div:
        return sub(n.a) / sub(n.b);
      case Op::Neg:
        return -sub(n.a);
      case Op::Pow:
        return pow(sub(n.a), n.cval);
      case Op::Cos:
        return cos(sub(n.a));
      case Op::Sin:
        return sin(sub(n.a));
      case Op::Exp:
        return exp(sub(n.a));
      case Op::Sqrt:
        return sqrt(sub(n.a));
    }
    throw Error("substitute: unknown op");
  }

  std::function<Expr(int)> map_;
  std::unordered_map<const Node*, Expr> memo_;
};

inline Expr substitute(const Expr& e, const std::function<Expr(int)>& map) {
  return SubstContext(map).run(e);
}

// -------------------------------------------------------------------------
// Slow-path evaluation with per-call memoization; fine for tests and one-off
// queries. Hot paths should compile a Tape instead.

inline double eval_scalar(const Expr& e, std::span<const double> vals) {
  std::unordered_map<const Node*, double> memo;
  std::function<double(const Node*)> go = [&](const Node* n) -> double {
    auto it = memo.find(n);
    if (it != memo.end()) return it->second;
    double r = 0.0;
    switch (n->op) {
      case Op::Const: r = n->cval; break;
      case Op::Var:
        if (n->var < 0 || n->var >= static_cast<int>(vals.size()))
          throw EvaluationError("eval: variable index out of range");
        r = vals[static_cast<std::size_t>(n->var)];
        break;
      case Op::Add: r = go(n->a.get()) + go(n->b.get()); break;
      case Op::Sub: r = go(n->a.get()) - go(n->b.get()); break;
      case Op::Mul: r = go(n->a.get()) * go(n->b.get()); break;
      case Op::Div: r = go(n->a.get()) / go(n->b.get()); break;
      case Op::Neg: r = -go(n->a.get()); break;
      case Op::Pow: r = std::pow(go(n->a.get()), n->cval); break;
      case Op::Cos: r = std::cos(go(n->a.get())); break;
      case Op::Sin: r = std::sin(go(n->a.get())); break;
      case Op::Exp: r = std::exp(go(n->a.get())); break;
      case Op::Sqrt: r = std::sqrt(go(n->a.get())); break;
    }
    memo[n] = r;
    return r;
  };
  return go(e.node().get());
}

// -------------------------------------------------------------------------
// Tape: a flat, topologically ordered instruction list for a bundle of
// expressions. Shared nodes (by identity) are evaluated once.

class Tape {
 public:
  static Tape compile(std::span<const Expr> outputs, int n_inputs) {
    Tape t;
    t.n_inputs_ = n_inputs;
    std::unordered_map<const Node*, std::int32_t> slot;
    std::function<std::int32_t(const Node*)> emit = [&](const Node* n) -> std::int32_t {
      auto it = slot.find(n);
      if (it != slot.end()) return it->second;
      Instr ins;
      ins.op = n->op;
      ins.c = n->cval;
      ins.var = n->var;
      if (n->a) ins.a = emit(n->a.get());
      if (n->b) ins.b = emit(n->b.get());
      if (n->op == Op::Var && (n->var < 0 || n->var >= n_inputs))
        throw Error("tape: variable index out of range");
      auto s = static_cast<std::int32_t>(t.code_.size());
      t.code_.push_back(ins);
      slot.emplace(n, s);
      return s;
    };
    t.out_slots_.reserve(outputs.size());
    for (const Expr& e : outputs) t.out_slots_.push_back(emit(e.node().get()));
    return t;
  }

  int n_inputs() const { return n_inputs_; }
  std::size_t n_outputs() const { return out_slots_.size(); }
  std::size_t size() const { return code_.size(); }

  // `work` is resized as needed; pass a reused buffer in hot loops.
  void eval(std::span<const double> in, std::span<double> out,
            std::vector<double>& work) const {
    if (static_cast<int>(in.size()) < n_inputs_)
      throw EvaluationError("tape eval: input vector too short");
    work.resize(code_.size());
    double* w = work.data();
    for (std::size_t i = 0; i < code_.size(); ++i) {
      const Instr& ins = code_[i];
      switch (ins.op) {
        case Op::Const: w[i] = ins.c; break;
        case Op::Var: w[i] = in[static_cast<std::size_t>(ins.var)]; break;
        case Op::Add: w[i] = w[ins.a] + w[ins.b]; break;
        case Op::Sub: w[i] = w[ins.a] - w[ins.b]; break;
        case Op::Mul: w[i] = w[ins.a] * w[ins.b]; break;
        case Op::Div: w[i] = w[ins.a] / w[ins.b]; break;
        case Op::Neg: w[i] = -w[ins.a]; break;
        case Op::Pow: w[i] = std::pow(w[ins.a], ins.c); break;
        case Op::Cos: w[i] = std::cos(w[ins.a]); break;
        case Op::Sin: w[i] = std::sin(w[ins.a]); break;
        case Op::Exp: w[i] = std::exp(w[ins.a]); break;
        case Op::Sqrt: w[i] = std::sqrt(w[ins.a]); break;
      }
    }
    for (std::size_t k = 0; k < out_slots_.size(); ++k)
      out[k] = w[out_slots_[k]];
  }

 private:
  struct Instr {
    Op op;
    std::int32_t a = -1;
    std::int32_t b = -1;
    double c = 0.0;
    std::int32_t var = -1;
  };

  std::vector<Instr> code_;
  std::vector<std::int32_t> out_slots_;
  int n_inputs_ = 0;
};

// -------------------------------------------------------------------------
// Parser for the problem-file grammar:
//   expr  := term (('+'|'-') term)*
//   term  := unary (('*'|'/') unary)*
//   unary := '-' unary | power
//   power := atom ('^' unary)?            exponent must fold to a constant
//   atom  := number | name | name '(' expr {',' expr} ')' | '(' expr ')'
// Functions: cos, sin, exp, sqrt (one argument), norm2sq (sum of squares).
// Variable names are resolved through a caller-supplied map.

class Parser {
 public:
  Parser(std::string_view src, std::function<Expr(std::string_view)> resolve)
      : src_(src), resolve_(std::move(resolve)) {}

  Expr parse() {
    Expr e = parse_expr();
    skip_ws();
    if (pos_ != src_.size()) fail("unexpected trailing input");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError("expression parse error at position " +
                     std::to_string(pos_) + ": " + msg + " in \"" +
                     std::string(src_) + "\"");
  }

  void skip_ws() {
    while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t' ||
                                  src_[pos_] == '\n' || src_[pos_] == '\r'))
      ++pos_;
  }

  bool eat(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  char peek() {
    skip_ws();
    return pos_ < src_.size() ? src_[pos_] : '\0';
  }

  Expr parse_expr() {
    Expr e = parse_term();
    for (;;) {
      if (eat('+')) {
        e = e + parse_term();
      } else if (eat('-')) {
        e = e - parse_term();
      } else {
        return e;
      }
    }
  }

  Expr parse_term() {
    Expr e = parse_unary();
    for (;;) {
      if (eat('*')) {
        e = e * parse_unary();
      } else if (eat('/')) {
        e = e / parse_unary();
      } else {
        return e;
      }
    }
  }

  Expr parse_unary() {
    if (eat('-')) return -parse_unary();
    return parse_power();
  }

  Expr parse_power() {
    Expr base = parse_atom();
    if (eat('^')) {
      Expr e = parse_unary();
      if (!e.is_const()) fail("exponent must be a constant");
      return pow(base, e.const_value());
    }
    return base;
  }

  Expr parse_atom() {
    skip_ws();
    if (pos_ >= src_.size()) fail("unexpected end of input");
    char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      Expr e = parse_expr();
      if (!eat(')')) fail("expected ')'");
      return e;
    }
    if ((c >= '0' && c <= '9') || c == '.') return parse_number();
    if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_')
      return parse_name();
    fail(std::string("unexpected character '") + c + "'");
  }

  Expr parse_number() {
    const char* begin = src_.data() + pos_;
    const char* end = src_.data() + src_.size();
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc()) fail("invalid number");
    pos_ = static_cast<std::size_t>(ptr - src_.data());
    return Expr(v);
  }

  Expr parse_name() {
    std::size_t start = pos_;
    while (pos_ < src_.size() &&
           ((src_[pos_] >= 'a' && src_[pos_] <= 'z') ||
            (src_[pos_] >= 'A' && src_[pos_] <= 'Z') ||
            (src_[pos_] >= '0' && src_[pos_] <= '9') || src_[pos_] == '_'))
      ++pos_;
    std::string_view name = src_.substr(start, pos_ - start);
    if (peek() == '(') {
      eat('(');
      std::vector<Expr> args;
      if (peek() != ')') {
        args.push_back(parse_expr());
        while (eat(',')) args.push_back(parse_expr());
      }
      if (!eat(')')) fail("expected ')' after arguments");
      return apply_function(name, args);
    }
    return resolve_(name);
  }

  Expr apply_function(std::string_view name, const std::vector<Expr>& args) {
    const auto need = [&](std::size_t n) {
      if (args.size() != n)
        fail(std::string(name) + ": expected " + std::to_string(n) +
             " argument(s), got " + std::to_string(args.size()));
    };
    if (name == "cos") { need(1); return cos(args[0]); }
    if (name == "sin") { need(1); return sin(args[0]); }
    if (name == "exp") { need(1); return exp(args[0]); }
    if (name == "sqrt") { need(1); return sqrt(args[0]); }
    if (name == "norm2sq") {
      if (args.empty()) fail("norm2sq: needs at least one argument");
      Expr s(0.0);
      for (const Expr& a : args) s = s + square(a);
      return s;
    }
    fail("unknown function '" + std::string(name) + "'");
  }

  std::string_view src_;
  std::function<Expr(std::string_view)> resolve_;
  std::size_t pos_ = 0;
};

inline Expr parse(std::string_view src,
                  const std::function<Expr(std::string_view)>& resolve) {
  return Parser(src, resolve).parse();
}

// Resolver for the standard naming scheme: x1..x<n_x> map to variable ids
// 0..n_x-1, t to id n_x, u1..u<n_u> to ids n_x+1..n_x+n_u. Components not
// allowed in a context pass 0 for their count (t: allow_t=false).
inline std::function<Expr(std::string_view)> standard_names(int n_x, bool allow_t,
                                                            int n_u,
                                                            int u_offset = -1) {
  // By default controls follow the time slot: x(0..n_x-1), t(n_x), u(n_x+1..).
  if (u_offset < 0) u_offset = n_x + 1;
  return [n_x, allow_t, n_u, u_offset](std::string_view name) -> Expr {
    auto index_of = [](std::string_view s) -> int {
      int v = 0;
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || ptr != s.data() + s.size()) return -1;
      return v;
    };
    if (name.size() >= 2 && name[0] == 'x') {
      int i = index_of(name.substr(1));
      if (i >= 1 && i <= n_x) return Expr::var(i - 1);
      throw ParseError("state variable out of range: " + std::string(name));
    }
    if (name == "t") {
      if (!allow_t) throw ParseError("'t' is not allowed in this context");
      return Expr::var(n_x);
    }
    if (name.size() >= 2 && name[0] == 'u') {
      int i = index_of(name.substr(1));
      if (i >= 1 && i <= n_u) return Expr::var(u_offset + i - 1);
      throw ParseError("control variable out of range: " + std::string(name));
    }
    if (name == "pi") return Expr(3.14159265358979323846);
    throw ParseError("unknown identifier: " + std::string(name));
  };
}

}  // namespace sweepds::expr
