#pragma once

// Jacobi and Dirac-Jacobi brackets on a contact manifold.
//
// With Lambda(alpha, beta) = alpha^T P beta and E = -R:
//   {f, g} = Lambda(df, dg) - f R(g) + g R(f)
// so that {1, f} = -R(f).

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "contactum/constraints.hpp"
#include "contactum/geometry.hpp"

namespace contactum {

/// A function known through its jets. Fields give every order; generated
/// constraints only values and gradients.
class Observable {
 public:
  using JetFn = std::function<Jet(const VectorXd&, int)>;

  Observable(std::string name, JetFn fn, int max_order);

  static Observable field(const ScalarField& f, std::string name = {});
  static Observable constant(double c, std::size_t dim);
  static Observable constraint(const ConstraintFunction& c);

  const std::string& name() const noexcept { return name_; }
  int max_order() const noexcept { return max_order_; }
  Jet jet(const VectorXd& x, int order) const;
  double value(const VectorXd& x) const { return jet(x, 0).value; }

 private:
  std::string name_;
  JetFn fn_;
  int max_order_;
};

/// Lambda, R and their first derivatives at a point.
struct LocalJacobi {
  VectorXd x;
  MatrixXd lambda;
  VectorXd reeb;
  std::vector<MatrixXd> d_lambda;  // empty unless requested
  std::vector<VectorXd> d_reeb;

  double bracket(const Jet& f, const Jet& g) const;
  /// Needs order-2 jets; returns value and gradient.
  Jet bracket_jet(const Jet& f, const Jet& g) const;
  double reeb_of(const Jet& f) const { return reeb.dot(f.gradient); }
  double lambda_of(const Jet& f, const Jet& g) const { return f.gradient.dot(lambda * g.gradient); }
};

class BracketContext {
 public:
  /// Requires a contact structure (invertible flat map) at evaluation points.
  explicit BracketContext(Structure structure);
  static BracketContext canonical(const Chart& chart) { return BracketContext(Structure::canonical_contact(chart)); }
  static BracketContext canonical(std::size_t n) { return BracketContext(Structure::canonical_contact(n)); }

  const Structure& structure() const noexcept { return structure_; }
  LocalJacobi local(const VectorXd& x, bool with_derivatives = false) const;

 private:
  Structure structure_;
};

double jacobi_bracket(const BracketContext& ctx, const Observable& f, const Observable& g, const VectorXd& x);
Jet jacobi_bracket_jet(const BracketContext& ctx, const Observable& f, const Observable& g, const VectorXd& x);

struct Classification {
  std::vector<std::size_t> second_class;  // indices into the constraint list
  std::vector<std::size_t> first_class;
  std::vector<int> ranks;                 // rank of C^{ab} per sample
  std::vector<MatrixXd> c_samples;        // full C^{ab} per sample
  std::vector<double> first_class_residuals;  // max |{chi, phi}| over samples, per first-class combination
};

/// Greedy extraction of a maximal second-class family, lowest indices first.
Classification classify(const BracketContext& ctx, const std::vector<Observable>& constraints,
                        const std::vector<VectorXd>& samples, double rank_tol = 1e-8);

class DiracJacobi {
 public:
  DiracJacobi(BracketContext ctx, std::vector<Observable> constraints, Classification cls,
              double max_condition = 1e12);

  const BracketContext& context() const noexcept { return ctx_; }
  const Classification& classification() const noexcept { return cls_; }
  const std::vector<Observable>& constraints() const noexcept { return constraints_; }

  /// C^{ab} over the second-class family.
  MatrixXd c_matrix(const VectorXd& x) const;
  double condition(const VectorXd& x) const;
  /// C_ab; SingularCMatrix above max_condition.
  MatrixXd c_inverse(const VectorXd& x) const;

  /// B^abar_a for the given first-class position, over the second-class family.
  Eigen::RowVectorXd combination(std::size_t first_class_pos, const VectorXd& x) const;
  /// chi^abar = phi^abar - B^abar_a phi^a (value and gradient).
  Observable first_class(std::size_t first_class_pos) const;

  double bracket(const Observable& f, const Observable& g, const VectorXd& x) const;
  Jet bracket_jet(const Observable& f, const Observable& g, const VectorXd& x) const;
  double bracket(const Jet& f, const Jet& g, const VectorXd& x) const;

  /// R_DJ(f) = R(f) + C_ab R(phi^b) (Lambda(dphi^a, df) + phi^a R(f)).
  double reeb(const Observable& f, const VectorXd& x) const;
  /// {f, 1}_DJ.
  double bracket_with_one(const Observable& f, const VectorXd& x) const;

  /// fdot = {H,f}_DJ - f R_DJ(H) + u_abar ({chi^abar, f}_DJ - f R_DJ(chi^abar)).
  double evolve(const Observable& h, const Observable& f, const VectorXd& x,
                const std::vector<double>& multipliers = {}) const;

 private:
  std::vector<Jet> second_class_jets(const VectorXd& x, int order) const;

  BracketContext ctx_;
  std::vector<Observable> constraints_;
  Classification cls_;
  double max_condition_;
};

}  // namespace contactum
