#pragma once

#include <Eigen/Dense>

#include <functional>
#include <vector>

#include "contactum/geometry.hpp"

namespace contactum {

struct LegendreImage {
  VectorXd target;    // (q, p, z) with p_i = dL/dv^i
  MatrixXd jacobian;  // d target / d source
};

struct SecondOrderSection {
  VectorXd x_tilde;
  double fiber_defect = 0.0;  // |a(x_tilde) - a(x)|
  double sode_defect = 0.0;   // |S(X) - Delta| at x_tilde
  double legendre_defect = 0.0;  // |FL(x_tilde) - y|
};

using VectorFieldFn = std::function<VectorXd(const VectorXd&)>;

class LagrangianSystem {
 public:
  /// L over a velocity chart (q, v, z).
  explicit LagrangianSystem(ScalarField lagrangian);

  const ScalarField& lagrangian() const noexcept { return l_; }
  const Chart& chart() const noexcept { return l_.chart(); }
  std::size_t n() const noexcept { return l_.chart().n(); }
  const Structure& structure() const noexcept { return structure_; }

  /// E_L = v^i dL/dv^i - L as a field.
  const ScalarField& energy_field() const noexcept { return energy_; }
  double energy(const VectorXd& x) const { return energy_.eval(x); }

  /// W_ij = d^2 L / dv^i dv^j.
  MatrixXd velocity_hessian(const VectorXd& x) const;

  LegendreImage legendre(const VectorXd& x) const;

  /// Orthonormal basis of ker (FL)_*.
  MatrixXd legendre_kernel(const VectorXd& x, double rank_tol = 1e-8) const;

  /// max |Z(f)| over the pivot-frame basis Z of ker (FL)_*, over samples.
  double fiber_constancy(const ScalarField& f, const std::vector<VectorXd>& samples,
                         double rank_tol = 1e-8) const;

  /// xi = v^i d_q + b^i d_v + L d_z with W b = rhs. SingularHessian when W is
  /// rank deficient at rank_tol.
  VectorXd regular_dynamics(const VectorXd& x, double rank_tol = 1e-8) const;

  /// d/dt(dL/dv^i) - dL/dq^i - (dL/dv^i)(dL/dz) along the jet
  /// (q, v = qdot, a = qddot, z, zdot).
  VectorXd herglotz_residual(const VectorXd& q, const VectorXd& v, const VectorXd& a, double z,
                             double zdot) const;

  /// x_tilde = (q, a, z) with a the q-block of X at x. Throws NotOnFiber when
  /// FL(x) != y and NotASolution when X does not solve flat(X) = gamma_E at x
  /// or its q-block is not constant along the fiber.
  SecondOrderSection second_order_section(const VectorFieldFn& field, const VectorXd& y,
                                          const VectorXd& x, double tol = 1e-8) const;

  /// Momentum chart used for Legendre images: names q.. kept, fibers p.
  Chart momentum_chart() const;

 private:
  ScalarField l_;
  Structure structure_;
  ScalarField energy_;
};

/// X* = S(X) - Delta, nonzero only in the velocity block.
VectorXd sode_deviation(const Chart& chart, const VectorXd& field, const VectorXd& x);

}  // namespace contactum
