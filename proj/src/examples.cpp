#include "contactum/examples.hpp"

namespace contactum::examples {

ScalarField damped_oscillator() {
  return ScalarField::parse("p^2/2 + q^2/2 + 0.1*z", Chart::standard(1, FiberKind::momentum));
}

Chart Example1::velocity_chart() const { return Chart::standard(3, FiberKind::velocity); }
Chart Example1::momentum_chart() const { return Chart::standard(3, FiberKind::momentum); }

expr::Params Example1::params() const { return {{"m", m}, {"mu", mu}, {"gamma", gamma}}; }

ScalarField Example1::potential() const { return ScalarField::parse("q1^2 + q2^2/2", velocity_chart()); }

ScalarField Example1::lagrangian() const {
  return ScalarField::parse("m/2*(v1 + v2)^2 + mu/2*v3^2 + q1^2 + q2^2/2 + gamma*z", velocity_chart(), params());
}

ScalarField Example1::hamiltonian() const {
  return ScalarField::parse("p1^2/(2*m) + p3^2/(2*mu) - (q1^2 + q2^2/2) - gamma*z", momentum_chart(), params());
}

std::vector<ScalarField> Example1::constraints() const {
  return {ScalarField::parse("p1 - p2", momentum_chart()), ScalarField::parse("2*q1 - q2", momentum_chart())};
}

ScalarField Example1::primary() const { return ScalarField::parse("-2*q1 + q2", velocity_chart()); }

Chart Example2::velocity_chart() const { return Chart::standard(2, FiberKind::velocity); }
Chart Example2::momentum_chart() const { return Chart::standard(2, FiberKind::momentum); }

ScalarField Example2::lagrangian() const {
  return ScalarField::parse("(v1 + v2)^2/2 + q1 + q2*z", velocity_chart());
}

ScalarField Example2::hamiltonian() const {
  return ScalarField::parse("p1^2/2 - q1 - q2*z", momentum_chart());
}

std::vector<ScalarField> Example2::constraints() const {
  return {ScalarField::parse("p1 - p2", momentum_chart()), ScalarField::parse("z - 1", momentum_chart()),
          ScalarField::parse("p1^2/2 + q1 + q2*(z - 2)", momentum_chart())};
}

ScalarField Example2::first_class_combination() const {
  return ScalarField::parse("(p1 - p2)*(q2 - q1) + z - 1", momentum_chart());
}

ScalarField Example2::listed_phi1() const { return ScalarField::parse("z - 1", velocity_chart()); }

ScalarField Example2::listed_phi2() const {
  return ScalarField::parse("(v1 + v2)^2/2 + q1 + q2*(z - 2)", velocity_chart());
}

std::vector<ScalarField> Example2::final_set() const {
  const Chart c = velocity_chart();
  return {ScalarField::parse("z - 1", c), ScalarField::parse("(v1 + v2)^2/2 + q1 + q2*z", c),
          ScalarField::parse("v1 + v2 - q2*(q1 + q2)", c)};
}

}  // namespace contactum::examples
