#pragma once

// Fixed-step RK4 integration of contact Hamiltonian and Herglotz dynamics,
// and the Herglotz action along discrete curves.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "contactum/expr.hpp"

namespace contactum {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Trajectory {
  Chart chart;
  std::vector<double> times;
  std::vector<VectorXd> states;
  std::vector<double> energy;               // H, or E_L for Herglotz
  std::vector<double> eta_x;                // eta(X) at each state
  std::vector<double> constraint_residual;  // max |phi|, 0 without constraints

  std::size_t size() const { return times.size(); }
  const VectorXd& back() const { return states.back(); }

  /// Header t,<coords>,H,eta_X,constraint_residual; 17 significant digits.
  void write_csv(std::ostream& out) const;
  std::string csv() const;
};

/// Shortest round-trip free, locale independent, 17 significant digits.
std::string format_real(double v);

/// Darboux equations of H on (q, p, z). NonFiniteState on blow-up.
Trajectory integrate_contact(const ScalarField& h, const VectorXd& x0, double t_end, double dt,
                             const std::vector<ScalarField>& constraints = {});

/// (q, v, z) with qddot from the Herglotz equations and zdot = L, starting at
/// z = c. SingularHessian (with its time) when W degenerates on the way.
Trajectory integrate_herglotz(const ScalarField& l, const VectorXd& q0, const VectorXd& v0, double c,
                              double t_end, double dt, const std::vector<ScalarField>& constraints = {});

/// Node values of q at uniform times on [a, b].
struct DiscreteCurve {
  double a = 0.0;
  double b = 1.0;
  std::vector<VectorXd> nodes;
  double c = 0.0;

  static DiscreteCurve sample(const std::function<VectorXd(double)>& q, double a, double b, std::size_t count,
                              double c = 0.0);
  double spacing() const { return (b - a) / static_cast<double>(nodes.size() - 1); }
};

struct ActionProfile {
  double value = 0.0;             // Z(b)
  std::vector<double> z;          // Z at the nodes
  double herglotz_residual = 0.0; // max over interior nodes of the spline jet
};

/// Z solved by RK4 along the clamped cubic spline through the nodes
/// (end slopes from one-sided second-order differences).
ActionProfile action_profile(const ScalarField& l, const DiscreteCurve& curve, int substeps = 4);
double action(const ScalarField& l, const DiscreteCurve& curve, int substeps = 4);

struct StationarityResult {
  double max_derivative = 0.0;
  double herglotz_residual = 0.0;
};

/// max |(A(curve + eps v) - A(curve - eps v)) / (2 eps)| over random v with
/// v = 0 at the ends and interior entries uniform in [-1, 1].
StationarityResult stationarity_test(const ScalarField& l, const DiscreteCurve& curve, int n_directions = 16,
                                     double eps = 1e-4, std::uint64_t seed = 20240607);

}  // namespace contactum
