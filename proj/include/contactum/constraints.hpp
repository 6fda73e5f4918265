#pragma once

// Constraint algorithm for precontact Hamiltonian systems.
//
// Generated constraints are pointwise evaluators <gamma_H(x), w(x)> where w
// runs over a pivot frame of the complement of the current tangent space.
// The pivot structure is frozen at the first seed, so each generated
// constraint is a smooth function wherever ranks stay constant.

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "contactum/geometry.hpp"
#include "contactum/linalg.hpp"

namespace contactum {

struct ConstraintConfig {
  double rank_tol = 1e-8;
  double fd_step = 5e-3;        // relative step h_i = fd_step * (1 + |x_i|), 5-point stencil
  double grad_rank_tol = 1e-6;  // independence threshold for constraint gradients
  double value_tol = 1e-7;      // candidate counts as vanishing below this
  double newton_tol = 1e-10;
  int newton_max_iter = 50;
  int max_levels = 8;
  double residual_tol = 1e-8;
};

enum class Variant { plain, reeb_tangency };
enum class GradientMethod { analytic, finite_difference };

/// Reeb vector used to build gamma_H. Acts on the structure restricted to
/// the ambient submanifold (the whole space when there are no ambient
/// constraints); returns components in that frame.
class ReebChoice {
 public:
  using Custom = std::function<VectorXd(const VectorXd& x)>;

  ReebChoice() = default;
  static ReebChoice min_norm() { return {}; }
  /// R + c * Z with Z the first pivot-frame vector of ker flat.
  static ReebChoice shifted(double c);
  /// Explicit ambient vector field; projected onto the ambient tangent space.
  static ReebChoice custom(Custom field);

  VectorXd solve(const MatrixXd& flat, const VectorXd& eta, const MatrixXd& frame, const VectorXd& x,
                 double rank_tol) const;
  std::string describe() const;

 private:
  double shift_ = 0.0;
  Custom custom_;
};

/// The structure and gamma_H pulled back to the ambient submanifold at x.
/// Vectors u in the reduced frame correspond to ambient vectors frame * u.
struct Reduced {
  VectorXd x;
  StructureAtPoint ambient;
  MatrixXd frame;  // dim x k
  MatrixXd flat;   // frame^T B frame
  VectorXd eta;
  VectorXd reeb;   // ambient components
  VectorXd gamma;  // ambient gamma_H
  double h = 0.0;
  VectorXd dh;
};

class ConstraintSystem {
 public:
  ConstraintSystem(Structure structure, ScalarField hamiltonian, std::vector<ScalarField> ambient = {},
                   ReebChoice reeb = {}, ConstraintConfig cfg = {});

  const Structure& structure() const noexcept { return structure_; }
  const ScalarField& hamiltonian() const noexcept { return h_; }
  const std::vector<ScalarField>& ambient() const noexcept { return ambient_; }
  const ReebChoice& reeb_choice() const noexcept { return reeb_; }
  const ConstraintConfig& config() const noexcept { return cfg_; }
  ConstraintConfig& config() noexcept { return cfg_; }

  VectorXd ambient_values(const VectorXd& x) const;
  MatrixXd ambient_jacobian(const VectorXd& x) const;

  /// Freezes the pivot frame of the ambient constraints at x.
  void anchor(const VectorXd& x);
  bool anchored() const noexcept { return anchored_; }

  Reduced reduce(const VectorXd& x) const;

 private:
  Structure structure_;
  ScalarField h_;
  std::vector<ScalarField> ambient_;
  ReebChoice reeb_;
  ConstraintConfig cfg_;
  linalg::PivotFrame ambient_frame_;
  bool anchored_ = false;
};

/// Vector-valued constraint evaluator; rows of the Jacobian are gradients.
class ConstraintBlock {
 public:
  virtual ~ConstraintBlock() = default;
  virtual std::size_t size() const = 0;
  virtual VectorXd values(const VectorXd& x) const = 0;
  virtual MatrixXd jacobian(const VectorXd& x) const = 0;
  virtual GradientMethod method() const = 0;
};

using BlockPtr = std::shared_ptr<const ConstraintBlock>;

/// Central 5-point differences of a vector function.
MatrixXd fd_jacobian(const std::function<VectorXd(const VectorXd&)>& f, const VectorXd& x, double step);

/// Block of user-supplied fields with analytic gradients.
BlockPtr field_block(std::vector<ScalarField> fields);

struct ConstraintFunction {
  std::string id;
  int level = 0;
  std::string source;  // "user" or a pivot-frame descriptor
  std::optional<std::string> expression;
  BlockPtr block;
  std::size_t index = 0;

  double value(const VectorXd& x) const { return block->values(x)[static_cast<Eigen::Index>(index)]; }
  VectorXd gradient(const VectorXd& x) const {
    return block->jacobian(x).row(static_cast<Eigen::Index>(index)).transpose();
  }
  GradientMethod method() const { return block->method(); }
};

struct InfeasibilityCertificate {
  std::string constraint_id;
  int level = 0;
  std::string source;
  std::vector<double> values;        // candidate value at each seed
  std::vector<double> grad_residuals;  // distance of its gradient from the span of known ones
};

struct ConstraintTower {
  std::shared_ptr<const ConstraintSystem> system;
  Variant variant = Variant::plain;
  std::vector<ConstraintFunction> ambient;               // level 0
  std::vector<std::vector<ConstraintFunction>> levels;   // nonempty generated levels, in order
  std::vector<int> rank_history;  // stacked-gradient rank after each step
  int steps = 0;                  // complement/tangency steps executed
  bool stabilized = false;
  std::optional<InfeasibilityCertificate> certificate;
  std::vector<VectorXd> samples;  // seeds projected onto the final set
  std::size_t dropped_seeds = 0;

  std::vector<ConstraintFunction> all() const;  // ambient first
  std::size_t count() const;
  VectorXd values(const VectorXd& x) const;
  MatrixXd jacobian(const VectorXd& x) const;
  /// Only generated levels.
  MatrixXd generated_jacobian(const VectorXd& x) const;
  std::vector<BlockPtr> blocks() const;
};

/// perp(Delta) = { w : omega(v, w) = 0 for v in Delta }.
MatrixXd orth_complement(const StructureAtPoint& at, const MatrixXd& delta);
/// Left complement { w : omega(w, v) = 0 for v in Delta }.
MatrixXd left_complement(const StructureAtPoint& at, const MatrixXd& delta);

/// <gamma_H, X_a> over the pivot frame X_a of ker flat at x (min-norm Reeb).
std::vector<double> primary_constraints(const Structure& s, const ScalarField& h, const VectorXd& x,
                                        double rank_tol = 1e-8);

/// Damped Gauss-Newton projection onto the zero set of f. Returns nullopt
/// when it does not converge.
std::optional<VectorXd> newton_project(const std::function<VectorXd(const VectorXd&)>& f,
                                       const std::function<MatrixXd(const VectorXd&)>& jac, VectorXd x,
                                       double tol, int max_iter);

ConstraintTower run_algorithm(const ConstraintSystem& system, const std::vector<VectorXd>& seeds,
                              Variant variant = Variant::plain);
inline ConstraintTower run_algorithm_reeb_variant(const ConstraintSystem& system,
                                                  const std::vector<VectorXd>& seeds) {
  return run_algorithm(system, seeds, Variant::reeb_tangency);
}

/// Orthonormal ambient basis of the complement of T_x M within the ambient
/// submanifold, where M is cut out by the rows of g (ambient rows excluded).
MatrixXd complement_basis(const Reduced& r, const MatrixXd& g, double rank_tol);

/// max |<gamma_H, w>| over the orthonormal complement basis.
double complement_pairing(const Reduced& r, const MatrixXd& g, double rank_tol);
/// Residual of the min-norm solve of flat(X) = gamma_H with X tangent to M.
double restricted_solve_residual(const Reduced& r, const MatrixXd& g, double rank_tol);

/// max |Z(R(H))| over Z in the complement of T M_f, over samples.
double reeb_tangency_test(const ConstraintTower& tower, const std::vector<VectorXd>& samples);

struct MotionSolution {
  VectorXd field;
  MatrixXd freedom;  // columns span C cap T_x M_f
  double residual = 0.0;
  double tangency = 0.0;
};

MotionSolution solve_motion(const ConstraintTower& tower, const VectorXd& x, double on_manifold_tol = 1e-6);

}  // namespace contactum
