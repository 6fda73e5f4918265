#include <doctest.h>

#include <cmath>
#include <random>
#include <thread>

#include "contactum/examples.hpp"
#include "contactum/geometry.hpp"
#include "contactum/lagrangian.hpp"
#include "support.hpp"

using namespace contactum;
using support::proj;
using support::vec;

namespace {

Chart can1() { return Chart::standard(1, FiberKind::momentum); }

// (a ^ b)(u, w) = a(u) b(w) - a(w) b(u)
double wedge(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& u,
             const Eigen::VectorXd& w) {
  return a.dot(u) * b.dot(w) - a.dot(w) * b.dot(u);
}

Eigen::VectorXd e(Eigen::Index dim, Eigen::Index i) { return support::unit(dim, i); }

}  // namespace

TEST_CASE("canonical contact form and flat matrix on (q,p,z)") {
  const Structure s = Structure::canonical_contact(1);
  const StructureAtPoint at = s.at(vec({1, 2, 0}));
  CHECK((at.eta - vec({-2, 0, 1})).norm() == doctest::Approx(0.0));
  CHECK((at.flat.col(0) - vec({4, 1, -2})).norm() < 1e-15);
  CHECK((at.flat.col(1) - vec({-1, 0, 0})).norm() < 1e-15);
  CHECK((at.flat.col(2) - vec({-2, 0, 1})).norm() < 1e-15);
  CHECK(at.kind == StructureKind::contact);

  const StructureAtPoint at2 = Structure::canonical_contact(2).at(vec({0.3, -1, 2, 5, 0.7}));
  // d eta = dq1 ^ dp1 + dq2 ^ dp2
  CHECK(at2.d_eta(0, 2) == 1.0);
  CHECK(at2.d_eta(0, 3) == 0.0);
  CHECK(at2.d_eta(1, 3) == 1.0);
}

TEST_CASE("flat pairing equals d eta(v,w) + eta(v) eta(w)") {
  std::mt19937 rng(11);
  const Structure s = Structure::canonical_contact(2);
  for (int k = 0; k < 50; ++k) {
    const auto x = support::random_point(rng, 5, -3, 3);
    const auto v = support::random_point(rng, 5);
    const auto w = support::random_point(rng, 5);
    const StructureAtPoint at = s.at(x);
    double deta = 0.0;
    for (int i = 0; i < 2; ++i) deta += wedge(e(5, i), e(5, 2 + i), v, w);
    const double expected = deta + at.eta.dot(v) * at.eta.dot(w);
    CHECK(std::abs(at.omega(v, w) - expected) < 1e-12);
  }

  // Example 1 with m = mu = 1: d eta_L = (dq1 + dq2) ^ (dv1 + dv2) + dq3 ^ dv3
  LagrangianSystem sys(examples::Example1{}.lagrangian());
  for (int k = 0; k < 50; ++k) {
    const auto x = support::random_point(rng, 7, -3, 3);
    const auto v = support::random_point(rng, 7);
    const auto w = support::random_point(rng, 7);
    const StructureAtPoint at = sys.structure().at(x);
    const double s1 = x[3] + x[4];
    const Eigen::VectorXd eta = vec({-s1, -s1, -x[5], 0, 0, 0, 1});
    CHECK((at.eta - eta).norm() < 1e-14);
    const double deta = wedge(e(7, 0) + e(7, 1), e(7, 3) + e(7, 4), v, w) + wedge(e(7, 2), e(7, 5), v, w);
    CHECK(std::abs(at.omega(v, w) - (deta + eta.dot(v) * eta.dot(w))) < 1e-12);
  }
}

TEST_CASE("Lagrangian one-forms") {
  SUBCASE("example 2: eta_L = dz - (v1+v2)(dq1+dq2)") {
    LagrangianSystem sys(examples::Example2{}.lagrangian());
    const auto x = vec({0.4, -1.2, 0.9, 1.6, 2.0});
    const auto at = sys.structure().at(x);
    CHECK((at.eta - vec({-2.5, -2.5, 0, 0, 1})).norm() < 1e-14);
  }
  SUBCASE("free particle is contact everywhere") {
    const auto l = ScalarField::parse("v^2/2", Chart({"q", "v", "z"}, FiberKind::velocity));
    LagrangianSystem sys(l);
    std::mt19937 rng(3);
    for (int k = 0; k < 10; ++k) {
      const auto at = sys.structure().at(support::random_point(rng, 3, -4, 4));
      CHECK((at.eta - vec({-at.x[1], 0, 1})).norm() < 1e-15);
      CHECK(at.kind == StructureKind::contact);
      CHECK(at.rank == 3);
    }
  }
}

TEST_CASE("form class") {
  std::mt19937 rng(5);
  std::vector<Eigen::VectorXd> s7, s5;
  for (int k = 0; k < 10; ++k) {
    s7.push_back(support::random_point(rng, 7, -2, 2));
    s5.push_back(support::random_point(rng, 5, -2, 2));
  }
  CHECK(form_class(LagrangianSystem(examples::Example1{}.lagrangian()).structure(), s7) == 5);
  CHECK(form_class(LagrangianSystem(examples::Example2{}.lagrangian()).structure(), s5) == 3);
  CHECK(form_class(Structure::canonical_contact(2), s5) == 5);

  const Chart c = can1();
  SUBCASE("rank jump is reported") {
    // eta = q dq: flat = eta eta^T has rank 1 off q = 0 and 0 on it
    Structure s(c, {ScalarField::coordinate(c, 0), ScalarField::constant(c, 0), ScalarField::constant(c, 0)});
    try {
      form_class(s, {vec({1, 0, 0}), vec({0, 0, 0})});
      FAIL("expected RankNotConstant");
    } catch (const RankNotConstant& err) {
      CHECK(err.ranks() == std::vector<int>{1, 0});
    }
  }
  SUBCASE("even rank is rejected") {
    // eta = q dz: d eta = dq ^ dz, flat has rank 2
    Structure s(c, {ScalarField::constant(c, 0), ScalarField::constant(c, 0), ScalarField::coordinate(c, 0)});
    CHECK_THROWS_AS(form_class(s, {vec({1, 0, 0})}), NotOdd);
  }
}

TEST_CASE("characteristic distribution") {
  std::mt19937 rng(8);
  SUBCASE("example 1") {
    LagrangianSystem sys(examples::Example1{}.lagrangian());
    Eigen::MatrixXd expected(7, 2);
    expected.col(0) = e(7, 0) - e(7, 1);
    expected.col(1) = e(7, 3) - e(7, 4);
    for (int k = 0; k < 10; ++k) {
      const auto at = sys.structure().at(support::random_point(rng, 7, -2, 2));
      const auto c = at.characteristic();
      CHECK((proj(c) - proj(expected)).norm() < 1e-8);
      CHECK((at.flat * c).norm() < 1e-12);
      CHECK((at.eta.transpose() * c).norm() < 1e-12);
    }
  }
  SUBCASE("example 2") {
    LagrangianSystem sys(examples::Example2{}.lagrangian());
    for (int k = 0; k < 10; ++k) {
      const auto x = support::random_point(rng, 5, -2, 2);
      const auto at = sys.structure().at(x);
      const auto c = at.characteristic();
      REQUIRE(c.cols() == 2);
      // eta and d eta only see q1 + q2 and v1 + v2
      Eigen::MatrixXd expected(5, 2);
      expected.col(0) = e(5, 2) - e(5, 3);
      expected.col(1) = e(5, 0) - e(5, 1);
      CHECK((proj(c) - proj(expected)).norm() < 1e-8);
    }
  }
  SUBCASE("contact case is empty") {
    CHECK(Structure::canonical_contact(1).at(vec({1, 2, 0})).characteristic().cols() == 0);
  }
}

TEST_CASE("Reeb vectors") {
  CHECK((Structure::canonical_contact(1).at(vec({1, 2, 0})).reeb() - vec({0, 0, 1})).norm() < 1e-15);

  const auto l = ScalarField::parse("v^2/2", Chart({"q", "v", "z"}, FiberKind::velocity));
  CHECK((LagrangianSystem(l).structure().at(vec({0, 3, 0})).reeb() - vec({0, 0, 1})).norm() < 1e-12);

  std::mt19937 rng(21);
  LagrangianSystem sys(examples::Example1{}.lagrangian());
  for (int k = 0; k < 20; ++k) {
    const auto at = sys.structure().at(support::random_point(rng, 7, -2, 2));
    const auto r = at.reeb();
    CHECK((at.flat * r - at.eta).norm() < 1e-9);
    CHECK(std::abs(at.eta.dot(r) - 1.0) < 1e-9);
    CHECK((at.characteristic().transpose() * r).norm() < 1e-9);
  }

  // contact case: unique
  const Structure s2 = Structure::canonical_contact(2);
  for (int k = 0; k < 20; ++k) {
    const auto at = s2.at(support::random_point(rng, 5, -3, 3));
    CHECK((at.reeb() - at.flat.inverse() * at.eta).norm() < 1e-9);
  }
}

TEST_CASE("gamma_H") {
  const Chart c = can1();
  const auto at = Structure::canonical_contact(1).at(vec({1, 2, 0}));
  CHECK((gamma_h(at, examples::damped_oscillator()) - vec({6.2, 2, -2.5})).norm() < 1e-14);
  CHECK(gamma_h(at, ScalarField::constant(c, 0)).norm() == 0.0);

  std::mt19937 rng(2);
  for (int k = 0; k < 10; ++k) {
    const auto x = support::random_point(rng, 3, -3, 3);
    const auto g = gamma_h(Structure::canonical_contact(1).at(x), ScalarField::parse("z", c));
    CHECK((g - vec({(x[2] + 1) * x[1], 0, -x[2]})).norm() < 1e-14);
  }
}

TEST_CASE("Reeb choice does not change pairings with characteristic vectors") {
  std::mt19937 rng(17);
  LagrangianSystem sys(examples::Example1{}.lagrangian());
  for (int k = 0; k < 20; ++k) {
    const auto at = sys.structure().at(support::random_point(rng, 7, -2, 2));
    const auto chi = at.characteristic();
    const Eigen::VectorXd r = at.reeb();
    const Eigen::VectorXd r2 = r + 0.73 * chi.col(0) - 1.9 * chi.col(1);
    const auto g1 = gamma_h(at, sys.energy_field(), r);
    const auto g2 = gamma_h(at, sys.energy_field(), r2);
    CHECK((chi.transpose() * (g1 - g2)).norm() < 1e-12);
  }
}

TEST_CASE("contact Hamiltonian vector field") {
  const Chart c = can1();
  CHECK((contact_hamiltonian_vf(examples::damped_oscillator(), vec({1, 2, 0})) - vec({2, -1.2, 1.5})).norm() <
        1e-14);
  CHECK((contact_hamiltonian_vf(ScalarField::parse("z", c), vec({0, 0, 1})) - vec({0, 0, -1})).norm() == 0.0);
  CHECK((contact_hamiltonian_vf(ScalarField::parse("p", c), vec({0.4, 1.7, -2})) - vec({1, 0, 0})).norm() <
        1e-15);

  std::mt19937 rng(4);
  const Structure s = Structure::canonical_contact(2);
  const Chart c2 = s.chart();
  const std::vector<ScalarField> hs = {
      ScalarField::parse("p1^2/2 + p2^2/2 + q1^2/2 + 0.3*q1*q2 + 0.1*z", c2),
      ScalarField::parse("q1*p2^3 - 2*z^2*p1 + q2*q1*z + 0.5", c2),
      ScalarField::parse("(p1 - q2)^2*(1 + z) - 3*q1*p1*p2 + z^3", c2),
  };
  for (const auto& h : hs) {
    for (int k = 0; k < 100; ++k) {
      const auto x = support::random_point(rng, 5, -2, 2);
      const auto at = s.at(x);
      const auto xh = contact_hamiltonian_vf(h, x);
      const Jet j = h.jet(x, 1);
      CHECK((at.flat * xh - gamma_h(at, h)).norm() < 1e-10 * (1 + xh.norm()));
      CHECK(std::abs(at.eta.dot(xh) + j.value) < 1e-10 * (1 + std::abs(j.value)));
      // dissipation: X_H(H) = -H R(H) with R = d_z
      CHECK(std::abs(j.gradient.dot(xh) + j.value * j.gradient[4]) < 1e-10 * (1 + j.gradient.norm() * xh.norm()));
    }
  }
}

TEST_CASE("cosymplectic fields") {
  const Chart c = can1();
  auto f = cosymplectic_fields(ScalarField::parse("p^2/2 + q^2/2 + z", c), vec({1, 2, 0}));
  CHECK((f.grad - vec({2, -1, 1})).norm() == 0.0);
  CHECK((f.x_h - vec({2, -1, 0})).norm() == 0.0);
  CHECK((f.e_h - vec({2, -1, 1})).norm() == 0.0);

  f = cosymplectic_fields(ScalarField::constant(c, 4), vec({1, 2, 3}));
  CHECK(f.grad.norm() == 0.0);
  CHECK(f.x_h.norm() == 0.0);
  CHECK((f.e_h - vec({0, 0, 1})).norm() == 0.0);

  f = cosymplectic_fields(ScalarField::parse("p", c), vec({0, 1, 0}));
  CHECK((f.e_h - vec({1, 0, 1})).norm() == 0.0);
}

TEST_CASE("Jacobi bivector") {
  const Structure s = Structure::canonical_contact(1);
  std::mt19937 rng(9);
  for (int k = 0; k < 10; ++k) {
    const auto x = support::random_point(rng, 3, -3, 3);
    const auto at = s.at(x);
    const auto dq = vec({1, 0, 0}), dp = vec({0, 1, 0}), dz = vec({0, 0, 1});
    CHECK(at.lambda(dq, dp) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(std::abs(at.lambda(dq, dz)) < 1e-12);
    CHECK(at.lambda(dp, dz) == doctest::Approx(x[1]).epsilon(1e-12));
    const auto a = support::random_point(rng, 3), b = support::random_point(rng, 3);
    CHECK(std::abs(at.lambda(a, b) + at.lambda(b, a)) < 1e-12);
    CHECK(std::abs(at.lambda(at.eta, b)) < 1e-12);
  }

  // precontact: Lambda(eta, .) still vanishes, and covectors outside the image are refused
  LagrangianSystem sys(examples::Example2{}.lagrangian());
  const auto at = sys.structure().at(vec({0.1, 0.2, 0.3, 0.4, 1.0}));
  const Eigen::VectorXd beta = at.flat * support::random_point(rng, 5);
  CHECK(std::abs(at.lambda(at.eta, beta)) < 1e-12);
  CHECK_THROWS_AS(at.sharp(vec({0, 0, 1, 0, 0})), InconsistentSystem);
}

TEST_CASE("structures are safe to evaluate concurrently") {
  LagrangianSystem sys(examples::Example1{}.lagrangian());
  const auto x = vec({0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7});
  const auto ref = sys.structure().at(x).flat;
  std::vector<std::thread> ts;
  std::vector<double> err(4, 1.0);
  for (int t = 0; t < 4; ++t) {
    ts.emplace_back([&, t] {
      double worst = 0.0;
      for (int k = 0; k < 200; ++k) worst = std::max(worst, (sys.structure().at(x).flat - ref).norm());
      err[static_cast<std::size_t>(t)] = worst;
    });
  }
  for (auto& t : ts) t.join();
  for (double v : err) CHECK(v == 0.0);
}
