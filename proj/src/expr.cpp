#include "contactum/expr.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <mutex>
#include <set>
#include <unordered_map>

namespace contactum {

namespace {

bool valid_identifier(std::string_view s) {
  if (s.empty() || !std::isalpha(static_cast<unsigned char>(s[0]))) return false;
  return std::all_of(s.begin() + 1, s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
  });
}

}  // namespace

// ---------------------------------------------------------------- Chart

Chart::Chart(std::vector<std::string> names, FiberKind kind)
    : names_(std::move(names)), kind_(kind), n_(0) {
  if (names_.size() < 3 || names_.size() % 2 == 0) {
    throw Error("chart needs 2n+1 coordinates with n >= 1, got " +
                std::to_string(names_.size()));
  }
  n_ = (names_.size() - 1) / 2;
  std::set<std::string, std::less<>> seen;
  for (const auto& name : names_) {
    if (!valid_identifier(name)) throw Error("invalid coordinate name '" + name + "'");
    if (!seen.insert(name).second) throw Error("duplicate coordinate name '" + name + "'");
  }
}

Chart Chart::standard(std::size_t n, FiberKind kind) {
  if (n == 0) throw Error("chart dimension n must be >= 1");
  const std::string fiber = kind == FiberKind::momentum ? "p" : "v";
  std::vector<std::string> names;
  if (n == 1) {
    names = {"q", fiber, "z"};
  } else {
    for (std::size_t i = 1; i <= n; ++i) names.push_back("q" + std::to_string(i));
    for (std::size_t i = 1; i <= n; ++i) names.push_back(fiber + std::to_string(i));
    names.push_back("z");
  }
  return Chart(std::move(names), kind);
}

std::optional<std::size_t> Chart::find(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  return std::nullopt;
}

std::size_t Chart::index_of(std::string_view name) const {
  if (auto i = find(name)) return *i;
  throw UnknownIdentifier(std::string(name));
}

// ---------------------------------------------------------------- Expr

namespace expr {

namespace {

Expr make(Op op, Expr a = nullptr, Expr b = nullptr) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}

double apply_unary(Op op, double x) {
  switch (op) {
    case Op::neg: return -x;
    case Op::exp: return std::exp(x);
    case Op::ln:
      if (!(x > 0.0)) throw EvalDomainError("ln of non-positive value");
      return std::log(x);
    case Op::sin: return std::sin(x);
    case Op::cos: return std::cos(x);
    default: break;
  }
  throw Error("internal: not a unary op");
}

double ipow(double x, int k) {
  double r = 1.0;
  double b = x;
  unsigned e = static_cast<unsigned>(k);
  while (e != 0) {
    if (e & 1U) r *= b;
    b *= b;
    e >>= 1U;
  }
  return r;
}

double checked_div(double a, double b) {
  if (b == 0.0) throw EvalDomainError("division by zero");
  return a / b;
}

}  // namespace

Expr constant(double v) {
  auto n = std::make_shared<Node>();
  n->op = Op::constant;
  n->value = v;
  return n;
}

Expr variable(std::size_t index) {
  auto n = std::make_shared<Node>();
  n->op = Op::variable;
  n->index = index;
  return n;
}

bool is_constant(const Expr& e) { return e->op == Op::constant; }
bool is_constant(const Expr& e, double v) { return e->op == Op::constant && e->value == v; }

Expr add(Expr a, Expr b) {
  if (is_constant(a) && is_constant(b)) return constant(a->value + b->value);
  if (is_constant(a, 0.0)) return b;
  if (is_constant(b, 0.0)) return a;
  return make(Op::add, std::move(a), std::move(b));
}

Expr sub(Expr a, Expr b) {
  if (is_constant(a) && is_constant(b)) return constant(a->value - b->value);
  if (is_constant(b, 0.0)) return a;
  if (is_constant(a, 0.0)) return neg(std::move(b));
  return make(Op::sub, std::move(a), std::move(b));
}

Expr mul(Expr a, Expr b) {
  if (is_constant(a) && is_constant(b)) return constant(a->value * b->value);
  if (is_constant(a, 0.0) || is_constant(b, 0.0)) return constant(0.0);
  if (is_constant(a, 1.0)) return b;
  if (is_constant(b, 1.0)) return a;
  if (is_constant(a, -1.0)) return neg(std::move(b));
  if (is_constant(b, -1.0)) return neg(std::move(a));
  return make(Op::mul, std::move(a), std::move(b));
}

Expr div(Expr a, Expr b) {
  if (is_constant(a) && is_constant(b) && b->value != 0.0) return constant(a->value / b->value);
  if (is_constant(b, 1.0)) return a;
  if (is_constant(a, 0.0) && !is_constant(b, 0.0)) return constant(0.0);
  return make(Op::div, std::move(a), std::move(b));
}

Expr neg(Expr a) {
  if (is_constant(a)) return constant(-a->value);
  if (a->op == Op::neg) return a->a;
  return make(Op::neg, std::move(a));
}

Expr pow(Expr a, int k) {
  if (k < 0) return div(constant(1.0), pow(std::move(a), -k));
  if (k == 0) return constant(1.0);
  if (k == 1) return a;
  if (is_constant(a)) return constant(ipow(a->value, k));
  auto n = std::make_shared<Node>();
  n->op = Op::pow;
  n->exponent = k;
  n->a = std::move(a);
  return n;
}

Expr exp(Expr a) {
  if (is_constant(a)) return constant(std::exp(a->value));
  return make(Op::exp, std::move(a));
}
Expr ln(Expr a) {
  if (is_constant(a) && a->value > 0.0) return constant(std::log(a->value));
  return make(Op::ln, std::move(a));
}
Expr sin(Expr a) {
  if (is_constant(a)) return constant(std::sin(a->value));
  return make(Op::sin, std::move(a));
}
Expr cos(Expr a) {
  if (is_constant(a)) return constant(std::cos(a->value));
  return make(Op::cos, std::move(a));
}

Expr derivative(const Expr& e, std::size_t var) {
  switch (e->op) {
    case Op::constant: return constant(0.0);
    case Op::variable: return constant(e->index == var ? 1.0 : 0.0);
    case Op::add: return add(derivative(e->a, var), derivative(e->b, var));
    case Op::sub: return sub(derivative(e->a, var), derivative(e->b, var));
    case Op::mul:
      return add(mul(derivative(e->a, var), e->b), mul(e->a, derivative(e->b, var)));
    case Op::div: {
      auto da = derivative(e->a, var);
      auto db = derivative(e->b, var);
      auto first = div(da, e->b);
      if (is_constant(db, 0.0)) return first;
      return sub(first, div(mul(e->a, db), pow(e->b, 2)));
    }
    case Op::neg: return neg(derivative(e->a, var));
    case Op::pow: {
      auto da = derivative(e->a, var);
      if (is_constant(da, 0.0)) return constant(0.0);
      return mul(mul(constant(e->exponent), pow(e->a, e->exponent - 1)), da);
    }
    case Op::exp: return mul(e, derivative(e->a, var));
    case Op::ln: return div(derivative(e->a, var), e->a);
    case Op::sin: return mul(cos(e->a), derivative(e->a, var));
    case Op::cos: return neg(mul(sin(e->a), derivative(e->a, var)));
  }
  throw Error("internal: unknown op");
}

double evaluate(const Expr& e, std::span<const double> x) {
  switch (e->op) {
    case Op::constant: return e->value;
    case Op::variable: return x[e->index];
    case Op::add: return evaluate(e->a, x) + evaluate(e->b, x);
    case Op::sub: return evaluate(e->a, x) - evaluate(e->b, x);
    case Op::mul: return evaluate(e->a, x) * evaluate(e->b, x);
    case Op::div: return checked_div(evaluate(e->a, x), evaluate(e->b, x));
    case Op::pow: return ipow(evaluate(e->a, x), e->exponent);
    default: return apply_unary(e->op, evaluate(e->a, x));
  }
}

namespace {

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) throw Error("cannot format constant");
  return std::string(buf.data(), ptr);
}

void print_to(const Expr& e, const std::vector<std::string>& names, std::string& out) {
  auto binary = [&](const char* sym) {
    out += '(';
    print_to(e->a, names, out);
    out += sym;
    print_to(e->b, names, out);
    out += ')';
  };
  auto call = [&](const char* fn) {
    out += fn;
    out += '(';
    print_to(e->a, names, out);
    out += ')';
  };
  switch (e->op) {
    case Op::constant:
      if (e->value < 0.0 || (e->value == 0.0 && std::signbit(e->value))) {
        out += "(-" + format_double(-e->value) + ")";
      } else {
        out += format_double(e->value);
      }
      return;
    case Op::variable: out += names.at(e->index); return;
    case Op::add: binary(" + "); return;
    case Op::sub: binary(" - "); return;
    case Op::mul: binary("*"); return;
    case Op::div: binary("/"); return;
    case Op::neg:
      out += "(-";
      print_to(e->a, names, out);
      out += ')';
      return;
    case Op::pow:
      out += '(';
      print_to(e->a, names, out);
      out += "^" + std::to_string(e->exponent) + ")";
      return;
    case Op::exp: call("exp"); return;
    case Op::ln: call("ln"); return;
    case Op::sin: call("sin"); return;
    case Op::cos: call("cos"); return;
  }
}

// Recursive-descent parser; positions are 0-based byte offsets.
class Parser {
 public:
  Parser(std::string_view text, const Chart& chart, const Params& params)
      : text_(text), chart_(chart), params_(params) {}

  Expr run() {
    auto e = parse_expr();
    skip_ws();
    if (pos_ != text_.size()) throw SyntaxError(pos_, "operator or end of input");
    return e;
  }

 private:
  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  bool accept(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  Expr parse_expr() {
    auto lhs = parse_term();
    for (;;) {
      if (accept('+')) {
        lhs = add(lhs, parse_term());
      } else if (accept('-')) {
        lhs = sub(lhs, parse_term());
      } else {
        return lhs;
      }
    }
  }

  Expr parse_term() {
    auto lhs = parse_unary();
    for (;;) {
      if (accept('*')) {
        lhs = mul(lhs, parse_unary());
      } else if (accept('/')) {
        lhs = div(lhs, parse_unary());
      } else {
        return lhs;
      }
    }
  }

  Expr parse_unary() {
    if (accept('-')) return neg(parse_unary());
    if (accept('+')) return parse_unary();
    return parse_power();
  }

  Expr parse_power() {
    auto base = parse_primary();
    if (!accept('^')) return base;
    skip_ws();
    const std::size_t at = pos_;
    auto exponent = parse_unary();
    if (!is_constant(exponent) || exponent->value != std::floor(exponent->value) ||
        std::abs(exponent->value) > 1e6) {
      throw SyntaxError(at, "integer exponent");
    }
    return pow(base, static_cast<int>(exponent->value));
  }

  Expr parse_primary() {
    skip_ws();
    if (pos_ >= text_.size()) throw SyntaxError(pos_, "expression");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      auto e = parse_expr();
      if (!accept(')')) throw SyntaxError(pos_, "')'");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c))) return parse_name();
    throw SyntaxError(pos_, "expression");
  }

  Expr parse_number() {
    const std::size_t start = pos_;
    auto digits = [&] {
      std::size_t k = 0;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        ++pos_;
        ++k;
      }
      return k;
    };
    std::size_t mantissa = digits();
    if (pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      mantissa += digits();
    }
    if (mantissa == 0) throw SyntaxError(start, "number");
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      ++pos_;
      if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
      if (digits() == 0) throw SyntaxError(pos_, "exponent digits");
    }
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text_.data() + start, text_.data() + pos_, v);
    if (ec != std::errc{} || ptr != text_.data() + pos_) throw SyntaxError(start, "number");
    return constant(v);
  }

  Expr parse_name() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
      ++pos_;
    }
    const std::string_view name = text_.substr(start, pos_ - start);
    const std::size_t after = pos_;
    if (accept('(')) {
      Expr (*fn)(Expr) = nullptr;
      if (name == "exp") fn = &expr::exp;
      if (name == "ln") fn = &expr::ln;
      if (name == "sin") fn = &expr::sin;
      if (name == "cos") fn = &expr::cos;
      if (fn == nullptr) throw UnknownIdentifier(std::string(name));
      auto arg = parse_expr();
      if (!accept(')')) throw SyntaxError(pos_, "')'");
      return fn(arg);
    }
    pos_ = after;
    if (auto idx = chart_.find(name)) return variable(*idx);
    if (auto it = params_.find(name); it != params_.end()) return constant(it->second);
    throw UnknownIdentifier(std::string(name));
  }

  std::string_view text_;
  const Chart& chart_;
  const Params& params_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string print(const Expr& e, const std::vector<std::string>& names) {
  std::string out;
  print_to(e, names, out);
  return out;
}

Expr parse(std::string_view text, const Chart& chart, const Params& params) {
  return Parser(text, chart, params).run();
}

}  // namespace expr

// ---------------------------------------------------------------- tape

namespace {

// Straight-line program over the DAG of an expression; shared subtrees
// (pointer identity) are evaluated once.
struct Tape {
  struct Instr {
    expr::Op op;
    double value;
    std::size_t index;
    int exponent;
    std::size_t a;
    std::size_t b;
  };
  std::vector<Instr> code;

  explicit Tape(const expr::Expr& root) {
    std::unordered_map<const expr::Node*, std::size_t> slot;
    emit(root, slot);
  }

  std::size_t emit(const expr::Expr& e, std::unordered_map<const expr::Node*, std::size_t>& slot) {
    if (auto it = slot.find(e.get()); it != slot.end()) return it->second;
    std::size_t a = 0;
    std::size_t b = 0;
    if (e->a) a = emit(e->a, slot);
    if (e->b) b = emit(e->b, slot);
    code.push_back({e->op, e->value, e->index, e->exponent, a, b});
    slot.emplace(e.get(), code.size() - 1);
    return code.size() - 1;
  }

  double run(std::span<const double> x) const {
    thread_local std::vector<double> reg;
    if (reg.size() < code.size()) reg.resize(code.size());
    for (std::size_t i = 0; i < code.size(); ++i) {
      const auto& in = code[i];
      double r = 0.0;
      switch (in.op) {
        case expr::Op::constant: r = in.value; break;
        case expr::Op::variable: r = x[in.index]; break;
        case expr::Op::add: r = reg[in.a] + reg[in.b]; break;
        case expr::Op::sub: r = reg[in.a] - reg[in.b]; break;
        case expr::Op::mul: r = reg[in.a] * reg[in.b]; break;
        case expr::Op::div:
          if (reg[in.b] == 0.0) throw EvalDomainError("division by zero");
          r = reg[in.a] / reg[in.b];
          break;
        case expr::Op::neg: r = -reg[in.a]; break;
        case expr::Op::pow: {
          double acc = 1.0;
          double base = reg[in.a];
          unsigned e = static_cast<unsigned>(in.exponent);
          while (e != 0) {
            if (e & 1U) acc *= base;
            base *= base;
            e >>= 1U;
          }
          r = acc;
          break;
        }
        case expr::Op::exp: r = std::exp(reg[in.a]); break;
        case expr::Op::ln:
          if (!(reg[in.a] > 0.0)) throw EvalDomainError("ln of non-positive value");
          r = std::log(reg[in.a]);
          break;
        case expr::Op::sin: r = std::sin(reg[in.a]); break;
        case expr::Op::cos: r = std::cos(reg[in.a]); break;
      }
      reg[i] = r;
    }
    return reg[code.size() - 1];
  }
};

}  // namespace

struct ScalarField::Impl {
  Chart chart;
  expr::Expr body;
  Tape tape;
  mutable std::mutex mutex;
  mutable std::map<std::size_t, std::shared_ptr<Impl>> children;

  Impl(Chart c, expr::Expr e) : chart(std::move(c)), body(std::move(e)), tape(body) {}

  std::shared_ptr<Impl> child(std::size_t index) const {
    std::lock_guard lock(mutex);
    auto& slot = children[index];
    if (!slot) slot = std::make_shared<Impl>(chart, expr::derivative(body, index));
    return slot;
  }
};

ScalarField::ScalarField(Chart chart, expr::Expr body)
    : impl_(std::make_shared<Impl>(std::move(chart), std::move(body))) {}

ScalarField::ScalarField(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

ScalarField ScalarField::parse(std::string_view text, const Chart& chart,
                               const expr::Params& params) {
  return ScalarField(chart, expr::parse(text, chart, params));
}

ScalarField ScalarField::constant(const Chart& chart, double v) {
  return ScalarField(chart, expr::constant(v));
}

ScalarField ScalarField::coordinate(const Chart& chart, std::size_t index) {
  if (index >= chart.dim()) throw DimensionMismatch(chart.dim(), index + 1);
  return ScalarField(chart, expr::variable(index));
}

const Chart& ScalarField::chart() const noexcept { return impl_->chart; }
const expr::Expr& ScalarField::body() const noexcept { return impl_->body; }

double ScalarField::eval(std::span<const double> x) const {
  if (x.size() != impl_->chart.dim()) throw DimensionMismatch(impl_->chart.dim(), x.size());
  return impl_->tape.run(x);
}

ScalarField ScalarField::diff(std::size_t index) const {
  if (index >= impl_->chart.dim()) throw DimensionMismatch(impl_->chart.dim(), index + 1);
  return ScalarField(impl_->child(index));
}

ScalarField ScalarField::diff(std::string_view name) const {
  return diff(impl_->chart.index_of(name));
}

Jet ScalarField::jet(const Eigen::VectorXd& x, int order) const {
  const std::size_t d = impl_->chart.dim();
  if (static_cast<std::size_t>(x.size()) != d) throw DimensionMismatch(d, static_cast<std::size_t>(x.size()));
  if (order < 0 || order > 3) throw Error("jet order must be in [0, 3]");
  const std::span<const double> pt(x.data(), d);
  Jet j;
  j.order = order;
  j.value = impl_->tape.run(pt);
  if (order == 0) return j;
  j.gradient.resize(static_cast<Eigen::Index>(d));
  std::vector<std::shared_ptr<Impl>> first(d);
  for (std::size_t i = 0; i < d; ++i) {
    first[i] = impl_->child(i);
    j.gradient[static_cast<Eigen::Index>(i)] = first[i]->tape.run(pt);
  }
  if (order == 1) return j;
  j.hessian.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  std::vector<std::vector<std::shared_ptr<Impl>>> second(d, std::vector<std::shared_ptr<Impl>>(d));
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t k = i; k < d; ++k) {
      second[i][k] = first[i]->child(k);
      const double v = second[i][k]->tape.run(pt);
      j.hessian(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = v;
      j.hessian(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = v;
    }
  }
  if (order == 2) return j;
  j.third.assign(d * d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t k = i; k < d; ++k) {
      for (std::size_t l = k; l < d; ++l) {
        const double v = second[i][k]->child(l)->tape.run(pt);
        const std::array<std::size_t, 3> idx{i, k, l};
        std::array<std::size_t, 3> p = idx;
        do {
          j.third[(p[0] * d + p[1]) * d + p[2]] = v;
        } while (std::next_permutation(p.begin(), p.end()));
      }
    }
  }
  return j;
}

Eigen::VectorXd ScalarField::gradient(const Eigen::VectorXd& x) const { return jet(x, 1).gradient; }

std::string ScalarField::str() const { return expr::print(impl_->body, impl_->chart.names()); }

namespace {
void require_same_chart(const ScalarField& a, const ScalarField& b) {
  if (!(a.chart() == b.chart())) throw Error("scalar fields live on different charts");
}
}  // namespace

ScalarField operator+(const ScalarField& a, const ScalarField& b) {
  require_same_chart(a, b);
  return ScalarField(a.chart(), expr::add(a.body(), b.body()));
}
ScalarField operator-(const ScalarField& a, const ScalarField& b) {
  require_same_chart(a, b);
  return ScalarField(a.chart(), expr::sub(a.body(), b.body()));
}
ScalarField operator*(const ScalarField& a, const ScalarField& b) {
  require_same_chart(a, b);
  return ScalarField(a.chart(), expr::mul(a.body(), b.body()));
}
ScalarField operator*(double a, const ScalarField& b) {
  return ScalarField(b.chart(), expr::mul(expr::constant(a), b.body()));
}
ScalarField operator-(const ScalarField& a) { return ScalarField(a.chart(), expr::neg(a.body())); }

}  // namespace contactum
