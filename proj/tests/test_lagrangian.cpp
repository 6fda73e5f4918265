#include <doctest.h>

#include <cmath>
#include <random>

#include "contactum/examples.hpp"
#include "contactum/geometry.hpp"
#include "contactum/lagrangian.hpp"
#include "support.hpp"

using namespace contactum;
using support::proj;
using support::vec;

namespace {

Chart tq1() { return Chart({"q", "v", "z"}, FiberKind::velocity); }

LagrangianSystem one_dim(const char* text) { return LagrangianSystem(ScalarField::parse(text, tq1())); }

Eigen::VectorXd e(Eigen::Index dim, Eigen::Index i) { return support::unit(dim, i); }

// Min-norm solution of flat X = gamma_E with X tangent to the zero set of
// the given closed-form constraints.
Eigen::VectorXd tangent_solution(const LagrangianSystem& sys, const std::vector<ScalarField>& cs,
                                 const Eigen::VectorXd& x) {
  const auto at = sys.structure().at(x);
  const Eigen::VectorXd gamma = gamma_h(at, sys.energy_field());
  const auto d = x.size();
  Eigen::MatrixXd a(d + static_cast<Eigen::Index>(cs.size()), d);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(a.rows());
  a.topRows(d) = at.flat;
  b.head(d) = gamma;
  for (std::size_t k = 0; k < cs.size(); ++k) a.row(d + static_cast<Eigen::Index>(k)) = cs[k].gradient(x).transpose();
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
  return cod.solve(b);
}

// Example 2 final set: z = 1, q1 = -2/q2^2 - q2, v1 + v2 = -2/q2.
Eigen::VectorXd example2_point(double q2, double v1) {
  const double s = -2.0 / q2;
  return vec({-2.0 / (q2 * q2) - q2, q2, v1, s - v1, 1.0});
}

std::vector<ScalarField> example2_final_constraints() {
  const Chart c = examples::Example2{}.velocity_chart();
  return {ScalarField::parse("z - 1", c), ScalarField::parse("v1 + v2 + 2/q2", c),
          ScalarField::parse("q1 + q2 + 2/q2^2", c)};
}

}  // namespace

TEST_CASE("energy") {
  LagrangianSystem ex2(examples::Example2{}.lagrangian());
  CHECK(ex2.energy(vec({0, 0, 1, 1, 1})) == doctest::Approx(2.0).epsilon(1e-15));
  // closed form 1/2 (v1+v2)^2 - q1 - q2 z
  std::mt19937 rng(1);
  for (int k = 0; k < 20; ++k) {
    const auto x = support::random_point(rng, 5, -3, 3);
    const double s = x[2] + x[3];
    CHECK(std::abs(ex2.energy(x) - (0.5 * s * s - x[0] - x[1] * x[4])) < 1e-12);
  }
  CHECK(one_dim("v").energy(vec({0.3, 2, 1})) == 0.0);
  LagrangianSystem ex1(examples::Example1{}.lagrangian());
  CHECK(ex1.energy(vec({1, 1, 0, 0, 0, 1, 2})) == doctest::Approx(-1.2).epsilon(1e-14));
}

TEST_CASE("Legendre transform") {
  LagrangianSystem ex2(examples::Example2{}.lagrangian());
  std::mt19937 rng(2);
  for (int k = 0; k < 10; ++k) {
    const auto x = support::random_point(rng, 5, -3, 3);
    const double s = x[2] + x[3];
    CHECK((ex2.legendre(x).target - vec({x[0], x[1], s, s, x[4]})).norm() < 1e-14);
  }
  CHECK((one_dim("v^2/2").legendre(vec({0.5, -2, 3})).target - vec({0.5, -2, 3})).norm() == 0.0);
  LagrangianSystem ex1(examples::Example1{}.lagrangian());
  CHECK((ex1.legendre(vec({0, 0, 0, 2, 3, 1, 0})).target - vec({0, 0, 0, 5, 5, 1, 0})).norm() < 1e-14);

  // Legendre jacobian against central differences of the target map
  for (int k = 0; k < 10; ++k) {
    const auto x = support::random_point(rng, 7, -2, 2);
    const auto img = ex1.legendre(x);
    for (Eigen::Index i = 0; i < 7; ++i) {
      const double h = 1e-5 * (1 + std::abs(x[i]));
      const Eigen::VectorXd col = (ex1.legendre(x + h * e(7, i)).target - ex1.legendre(x - h * e(7, i)).target) / (2 * h);
      CHECK((col - img.jacobian.col(i)).norm() < 1e-7);
    }
  }
}

TEST_CASE("kernel of the Legendre map") {
  std::mt19937 rng(3);
  for (int which = 1; which <= 2; ++which) {
    LagrangianSystem sys(which == 1 ? examples::Example1{}.lagrangian() : examples::Example2{}.lagrangian());
    const auto d = static_cast<Eigen::Index>(sys.chart().dim());
    const auto n = static_cast<Eigen::Index>(sys.n());
    const Eigen::MatrixXd expected = e(d, n) - e(d, n + 1);
    for (int k = 0; k < 10; ++k) {
      const auto x = support::random_point(rng, d, -2, 2);
      const auto kfl = sys.legendre_kernel(x);
      CHECK((proj(kfl) - proj(expected)).norm() < 1e-8);
      CHECK(kfl.topRows(n).norm() < 1e-12);
      CHECK(kfl.bottomRows(1).norm() < 1e-12);
      CHECK((sys.velocity_hessian(x) * kfl.middleRows(n, n)).norm() < 1e-12);
    }
  }
  CHECK(one_dim("v^2/2 - q").legendre_kernel(vec({1, 1, 1})).cols() == 0);
}

TEST_CASE("energy is constant along the fibers of FL") {
  std::mt19937 rng(4);
  LagrangianSystem ex2(examples::Example2{}.lagrangian());
  LagrangianSystem ex1(examples::Example1{}.lagrangian());
  std::vector<Eigen::VectorXd> s5, s7;
  for (int k = 0; k < 20; ++k) {
    s5.push_back(support::random_point(rng, 5, -3, 3));
    s7.push_back(support::random_point(rng, 7, -3, 3));
  }
  CHECK(ex2.fiber_constancy(ex2.energy_field(), s5) < 1e-12);
  CHECK(ex1.fiber_constancy(ex1.energy_field(), s7) < 1e-12);
  CHECK(ex2.fiber_constancy(ScalarField::coordinate(ex2.chart(), 2), s5) == doctest::Approx(1.0));
}

TEST_CASE("regular dynamics") {
  CHECK((one_dim("v^2/2").regular_dynamics(vec({0, 3, 0})) - vec({3, 0, 4.5})).norm() < 1e-14);
  CHECK((one_dim("v^2/2 - q").regular_dynamics(vec({0, 0, 0})) - vec({0, -1, 0})).norm() < 1e-14);
  CHECK((one_dim("v^2/2 - 0.1*z").regular_dynamics(vec({0, 2, 5})) - vec({2, -0.2, 1.5})).norm() < 1e-14);
  LagrangianSystem ex2(examples::Example2{}.lagrangian());
  CHECK_THROWS_AS(ex2.regular_dynamics(vec({0, 0, 1, 1, 1})), SingularHessian);

  // flat(xi) = gamma_E and the SODE condition, for a nonlinear regular L
  const Chart c2 = Chart::standard(2, FiberKind::velocity);
  LagrangianSystem sys(ScalarField::parse(
      "(1 + q1^2)*v1^2/2 + v2^2/2 + 0.3*v1*v2 - cos(q2) - 0.2*v1*z + 0.1*q1*z^2", c2));
  std::mt19937 rng(5);
  for (int k = 0; k < 20; ++k) {
    const auto x = support::random_point(rng, 5, -1.5, 1.5);
    const auto xi = sys.regular_dynamics(x);
    const auto at = sys.structure().at(x);
    const auto gamma = gamma_h(at, sys.energy_field());
    CHECK((at.flat * xi - gamma).norm() < 1e-9 * (1 + gamma.norm()));
    CHECK(sode_deviation(c2, xi, x).norm() < 1e-15);
    const auto r = sys.herglotz_residual(x.head(2), x.segment(2, 2), xi.segment(2, 2), x[4], xi[4]);
    CHECK(r.norm() < 1e-9);
  }
}

TEST_CASE("Herglotz residual") {
  auto damped = one_dim("v^2/2 - 0.1*z");
  CHECK(std::abs(damped.herglotz_residual(vec({0}), vec({1}), vec({-0.1}), 0, 0.5)[0]) < 1e-15);
  auto fall = one_dim("v^2/2 - q");
  CHECK(std::abs(fall.herglotz_residual(vec({0}), vec({0}), vec({-1}), 0, 0)[0]) < 1e-15);
  CHECK(fall.herglotz_residual(vec({0}), vec({0}), vec({0}), 0, 0)[0] == doctest::Approx(1.0));
}

TEST_CASE("deviation from the SODE condition") {
  const Chart c = tq1();
  CHECK(sode_deviation(c, vec({4, 7, 1}), vec({0, 4, 0})).norm() == 0.0);
  CHECK((sode_deviation(c, vec({2, 0, 0}), vec({0, 5, 0})) - vec({0, -3, 0})).norm() == 0.0);
}

TEST_CASE("pullback of the contact form by FL") {
  std::mt19937 rng(6);
  const std::vector<ScalarField> ls = {
      examples::Example1{}.lagrangian(), examples::Example2{}.lagrangian(),
      ScalarField::parse("(1 + q1^2)*v1^2/2 + v2^2/2 - v1*v2*z + sin(q2)*z", Chart::standard(2, FiberKind::velocity))};
  for (const auto& l : ls) {
    LagrangianSystem sys(l);
    const Structure can = Structure::canonical_contact(sys.momentum_chart());
    const auto d = static_cast<Eigen::Index>(sys.chart().dim());
    for (int k = 0; k < 50; ++k) {
      const auto x = support::random_point(rng, d, -2, 2);
      const auto img = sys.legendre(x);
      const Eigen::VectorXd pulled = img.jacobian.transpose() * can.at(img.target).eta;
      CHECK((pulled - sys.structure().at(x).eta).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("class is 2 rank W + 1") {
  std::mt19937 rng(7);
  const std::vector<ScalarField> ls = {examples::Example1{}.lagrangian(), examples::Example2{}.lagrangian(),
                                       ScalarField::parse("v1^2/2 + v2^2/2 + z*q1", Chart::standard(2, FiberKind::velocity))};
  for (const auto& l : ls) {
    LagrangianSystem sys(l);
    const auto d = static_cast<Eigen::Index>(sys.chart().dim());
    std::vector<Eigen::VectorXd> samples;
    std::vector<int> ranks;
    for (int k = 0; k < 10; ++k) {
      samples.push_back(support::random_point(rng, d, -2, 2));
      Eigen::FullPivLU<Eigen::MatrixXd> lu(sys.velocity_hessian(samples.back()));
      ranks.push_back(static_cast<int>(lu.rank()));
    }
    for (int r : ranks) CHECK(r == ranks.front());
    CHECK(form_class(sys.structure(), samples) == 2 * ranks.front() + 1);
  }
}

TEST_CASE("hyperregular pair: FL pushes the Lagrangian field to X_H") {
  // L = v^2/2 - q^2/2 - 0.1 z has p = v and H = p^2/2 + q^2/2 + 0.1 z
  auto sys = one_dim("v^2/2 - q^2/2 - 0.1*z");
  const auto h = examples::damped_oscillator();
  std::mt19937 rng(8);
  for (int k = 0; k < 20; ++k) {
    const auto x = support::random_point(rng, 3, -3, 3);
    const auto img = sys.legendre(x);
    const Eigen::VectorXd pushed = img.jacobian * sys.regular_dynamics(x);
    CHECK((pushed - contact_hamiltonian_vf(h, img.target)).norm() < 1e-8);
  }
}

TEST_CASE("second-order section") {
  SUBCASE("example 2") {
    LagrangianSystem sys(examples::Example2{}.lagrangian());
    const auto cs = example2_final_constraints();
    auto field = [&](const Eigen::VectorXd& x) { return tangent_solution(sys, cs, x); };
    std::mt19937 rng(9);
    std::uniform_real_distribution<double> q2s(0.5, 2.0), v1s(-2.0, 2.0);
    for (int k = 0; k < 10; ++k) {
      const double q2 = (k % 2 ? 1.0 : -1.0) * q2s(rng);
      const auto x = example2_point(q2, v1s(rng));
      const auto y = sys.legendre(x).target;
      const auto sec = sys.second_order_section(field, y, x);
      CHECK(sec.sode_defect < 1e-8);
      CHECK(sec.legendre_defect < 1e-8);
      CHECK(sec.fiber_defect < 1e-8);
      const auto xf = field(x);
      CHECK((sec.x_tilde.segment(2, 2) - xf.head(2)).norm() == 0.0);
      // deviation lemma
      CHECK((sys.legendre(x).jacobian * sode_deviation(sys.chart(), xf, x)).norm() < 1e-9);

      auto off = x;
      off[0] += 0.1;
      CHECK_THROWS_AS(sys.second_order_section(field, y, off), NotOnFiber);
    }
    // a field that is not a solution is refused
    const auto x = example2_point(1.3, 0.2);
    auto wrong = [](const Eigen::VectorXd& p) { return Eigen::VectorXd::Ones(p.size()); };
    CHECK_THROWS_AS(sys.second_order_section(wrong, sys.legendre(x).target, x), NotASolution);
  }
  SUBCASE("example 1") {
    examples::Example1 ex;
    LagrangianSystem sys(ex.lagrangian());
    const std::vector<ScalarField> cs = {ex.primary()};
    auto field = [&](const Eigen::VectorXd& x) { return tangent_solution(sys, cs, x); };
    std::mt19937 rng(10);
    for (int k = 0; k < 10; ++k) {
      auto x = support::random_point(rng, 7, -2, 2);
      x[1] = 2 * x[0];
      const auto y = sys.legendre(x).target;
      const auto sec = sys.second_order_section(field, y, x);
      CHECK(sec.sode_defect < 1e-8);
      CHECK(sec.legendre_defect < 1e-8);
      CHECK((sys.legendre(x).jacobian * sode_deviation(sys.chart(), field(x), x)).norm() < 1e-9);
    }
  }
  SUBCASE("regular system keeps the point") {
    auto sys = one_dim("v^2/2 - q^2/2 - 0.1*z");
    auto field = [&](const Eigen::VectorXd& x) { return sys.regular_dynamics(x); };
    const auto x = vec({0.3, -0.7, 1.1});
    const auto sec = sys.second_order_section(field, sys.legendre(x).target, x);
    CHECK((sec.x_tilde - x).norm() == 0.0);
  }
}
