#pragma once

// Pointwise evaluation of contact, precontact and cosymplectic structures.
//
// Matrices act on component vectors in the coordinate frame. For a one-form
// eta with J(i,j) = d_i eta_j:
//   D = J - J^T          D(i,j) = d eta(d_i, d_j)
//   B = -D + eta eta^T   so that <flat(v), w> = w^T B v = d eta(v,w) + eta(v) eta(w)

#include <Eigen/Dense>

#include <optional>
#include <vector>

#include "contactum/expr.hpp"

namespace contactum {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class StructureKind { contact, precontact };

struct StructureAtPoint {
  VectorXd x;
  VectorXd eta;
  MatrixXd jacobian;  // J(i,j) = d_i eta_j
  MatrixXd d_eta;
  MatrixXd flat;
  int rank = 0;
  StructureKind kind = StructureKind::contact;
  double rank_tol = 1e-8;

  std::size_t dim() const { return static_cast<std::size_t>(x.size()); }

  VectorXd apply_flat(const VectorXd& v) const { return flat * v; }
  double omega(const VectorXd& v, const VectorXd& w) const { return w.dot(flat * v); }

  /// Minimum-norm solution of flat(v) = alpha; InconsistentSystem when
  /// alpha is not in the image.
  VectorXd sharp(const VectorXd& alpha) const;

  /// Minimum-norm Reeb vector.
  VectorXd reeb() const;

  /// Orthonormal basis of ker flat.
  MatrixXd characteristic() const;

  /// Lambda(alpha, beta) = -d eta(v_alpha, v_beta) with flat(v_gamma) = gamma.
  double lambda(const VectorXd& alpha, const VectorXd& beta) const;

  /// gamma_H = dH - (H + R(H)) eta.
  VectorXd gamma(double h, const VectorXd& dh, const VectorXd& reeb) const;
};

class Structure {
 public:
  /// One-form given by its components over chart.
  Structure(Chart chart, std::vector<ScalarField> eta);

  /// eta = dz - p_i dq^i on (q, p, z).
  static Structure canonical_contact(std::size_t n);
  static Structure canonical_contact(const Chart& chart);

  /// eta_L = dz - (dL/dv^i) dq^i on (q, v, z).
  static Structure lagrangian_precontact(const ScalarField& lagrangian);

  const Chart& chart() const noexcept { return chart_; }
  const std::vector<ScalarField>& eta() const noexcept { return eta_; }

  /// With classify = false the rank and kind are left unset.
  StructureAtPoint at(const VectorXd& x, double rank_tol = 1e-8, bool classify = true) const;

  /// d_k B for k = 0..dim-1.
  std::vector<MatrixXd> flat_derivatives(const VectorXd& x) const;

 private:
  Chart chart_;
  std::vector<ScalarField> eta_;
};

/// Rank of flat, required equal at every sample and odd.
int form_class(const Structure& s, const std::vector<VectorXd>& samples, double rank_tol = 1e-8);

/// Class from the independent count rank(d eta) + [eta outside its row space].
int class_from_forms(const StructureAtPoint& at);

VectorXd gamma_h(const StructureAtPoint& at, const ScalarField& h,
                 const std::optional<VectorXd>& reeb = std::nullopt);

/// X_H = H_p d_q - (H_q + p H_z) d_p + (p H_p - H) d_z on (q, p, z).
VectorXd contact_hamiltonian_vf(const ScalarField& h, const VectorXd& x);

struct CosymplecticFields {
  VectorXd grad;
  VectorXd x_h;
  VectorXd e_h;
};

/// For Omega = dq ^ dp and eta = dz on (q, p, z).
CosymplecticFields cosymplectic_fields(const ScalarField& h, const VectorXd& x);

}  // namespace contactum
