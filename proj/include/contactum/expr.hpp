#pragma once

// Scalar fields over a coordinate chart: parsing, exact symbolic
// differentiation and compiled pointwise evaluation.

#include <Eigen/Dense>

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "contactum/error.hpp"

namespace contactum {

enum class FiberKind { momentum, velocity };

/// Coordinate chart with block layout (q^1..q^n | p_1..p_n or v^1..v^n | z).
class Chart {
 public:
  Chart(std::vector<std::string> names, FiberKind kind);

  /// Default names: (q, p, z) for n = 1, (q1..qn, p1..pn, z) otherwise;
  /// velocities use the letter v.
  static Chart standard(std::size_t n, FiberKind kind);

  std::size_t n() const noexcept { return n_; }
  std::size_t dim() const noexcept { return names_.size(); }
  FiberKind kind() const noexcept { return kind_; }
  const std::vector<std::string>& names() const noexcept { return names_; }

  std::size_t q(std::size_t i) const noexcept { return i; }
  std::size_t fiber(std::size_t i) const noexcept { return n_ + i; }
  std::size_t z() const noexcept { return 2 * n_; }

  std::optional<std::size_t> find(std::string_view name) const;
  /// Throws UnknownIdentifier.
  std::size_t index_of(std::string_view name) const;

  bool operator==(const Chart& other) const {
    return kind_ == other.kind_ && names_ == other.names_;
  }

 private:
  std::vector<std::string> names_;
  FiberKind kind_;
  std::size_t n_;
};

/// All partial derivatives of a scalar up to `order` at a point.
struct Jet {
  int order = 0;
  double value = 0.0;
  Eigen::VectorXd gradient;  // order >= 1
  Eigen::MatrixXd hessian;   // order >= 2
  std::vector<double> third; // order >= 3, dense dim^3, symmetric

  double third_at(std::size_t i, std::size_t j, std::size_t k) const {
    const auto d = static_cast<std::size_t>(gradient.size());
    return third[(i * d + j) * d + k];
  }
};

namespace expr {

enum class Op { constant, variable, add, sub, mul, div, neg, pow, exp, ln, sin, cos };

struct Node;
using Expr = std::shared_ptr<const Node>;

struct Node {
  Op op;
  double value = 0.0;   // constant
  std::size_t index = 0; // variable
  int exponent = 0;     // pow
  Expr a;
  Expr b;
};

// Constructors apply constant folding and the 0/1 identities only.
Expr constant(double v);
Expr variable(std::size_t index);
Expr add(Expr a, Expr b);
Expr sub(Expr a, Expr b);
Expr mul(Expr a, Expr b);
Expr div(Expr a, Expr b);
Expr neg(Expr a);
Expr pow(Expr a, int k);
Expr exp(Expr a);
Expr ln(Expr a);
Expr sin(Expr a);
Expr cos(Expr a);

bool is_constant(const Expr& e, double v);
bool is_constant(const Expr& e);

Expr derivative(const Expr& e, std::size_t var);

/// Reference tree-walking evaluation (slow path; the compiled tape in
/// ScalarField is what callers normally use).
double evaluate(const Expr& e, std::span<const double> x);

/// Fully parenthesised text that parses back to an equivalent tree.
std::string print(const Expr& e, const std::vector<std::string>& names);

using Params = std::map<std::string, double, std::less<>>;

/// Grammar:
///   expr    := term (('+' | '-') term)*
///   term    := unary (('*' | '/') unary)*
///   unary   := ('+' | '-') unary | power
///   power   := primary ('^' unary)?        exponent must fold to an integer
///   primary := number | name | func '(' expr ')' | '(' expr ')'
///   func    := exp | ln | sin | cos
/// Names resolve against the chart first, then against `params`.
Expr parse(std::string_view text, const Chart& chart, const Params& params = {});

}  // namespace expr

/// Parsed expression bound to a chart. Copies share the body and the
/// derivative cache; the cache is internally synchronised.
class ScalarField {
 public:
  ScalarField(Chart chart, expr::Expr body);

  static ScalarField parse(std::string_view text, const Chart& chart,
                           const expr::Params& params = {});
  static ScalarField constant(const Chart& chart, double v);
  static ScalarField coordinate(const Chart& chart, std::size_t index);

  const Chart& chart() const noexcept;
  const expr::Expr& body() const noexcept;

  double eval(std::span<const double> x) const;
  double eval(const Eigen::VectorXd& x) const {
    return eval(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
  }

  ScalarField diff(std::size_t index) const;
  ScalarField diff(std::string_view name) const;

  /// order in {0, 1, 2, 3}. Mixed partials are taken in sorted index order,
  /// so the returned tensors are exactly symmetric.
  Jet jet(const Eigen::VectorXd& x, int order) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const;

  std::string str() const;

  // Algebra on fields over the same chart.
  friend ScalarField operator+(const ScalarField& a, const ScalarField& b);
  friend ScalarField operator-(const ScalarField& a, const ScalarField& b);
  friend ScalarField operator*(const ScalarField& a, const ScalarField& b);
  friend ScalarField operator*(double a, const ScalarField& b);
  friend ScalarField operator-(const ScalarField& a);

 private:
  struct Impl;
  explicit ScalarField(std::shared_ptr<Impl> impl);
  std::shared_ptr<Impl> impl_;
};

}  // namespace contactum
