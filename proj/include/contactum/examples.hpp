#pragma once

// The two worked systems used for regression, plus the damped oscillator.

#include <vector>

#include "contactum/expr.hpp"

namespace contactum::examples {

// H = p^2/2 + q^2/2 + 0.1 z on (q, p, z).
ScalarField damped_oscillator();

// Example 1: L = m/2 (v1 + v2)^2 + mu/2 v3^2 + V + gamma z with
// m = mu = 1, gamma = 0.1, V = q1^2 + q2^2/2.
struct Example1 {
  double m = 1.0;
  double mu = 1.0;
  double gamma = 0.1;

  Chart velocity_chart() const;
  Chart momentum_chart() const;
  ScalarField potential() const;  // over the velocity chart
  ScalarField lagrangian() const;
  ScalarField hamiltonian() const;  // H1 on (q, p, z)
  std::vector<ScalarField> constraints() const;  // psi1 = p1 - p2, psi2 = V_1 - V_2
  ScalarField primary() const;  // phi1 = -V_1 + V_2 on the velocity chart
  expr::Params params() const;
};

// Example 2: L = (v1 + v2)^2 / 2 + q1 + q2 z.
struct Example2 {
  Chart velocity_chart() const;
  Chart momentum_chart() const;
  ScalarField lagrangian() const;
  ScalarField hamiltonian() const;  // H1 = p1^2/2 - q1 - q2 z
  std::vector<ScalarField> constraints() const;  // psi1, psi2, psi3 as listed
  ScalarField first_class_combination() const;  // (p1 - p2)(q2 - q1) + z - 1
  ScalarField listed_phi1() const;  // z - 1 on the velocity chart
  ScalarField listed_phi2() const;  // (v1+v2)^2/2 + q1 + q2 (z - 2)
  // Closed forms of the final set found by the algorithm: z - 1,
  // (v1+v2)^2/2 + q1 + q2 z, v1 + v2 - q2 (q1 + q2).
  std::vector<ScalarField> final_set() const;
};

}  // namespace contactum::examples
