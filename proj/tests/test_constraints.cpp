#include <doctest.h>

#include <cmath>
#include <random>

#include "contactum/constraints.hpp"
#include "contactum/examples.hpp"
#include "contactum/lagrangian.hpp"
#include "support.hpp"

using namespace contactum;
using support::proj;
using support::vec;

namespace {

Eigen::VectorXd e(Eigen::Index dim, Eigen::Index i) { return support::unit(dim, i); }

std::vector<Eigen::VectorXd> example1_seeds(int count, unsigned seed = 0) {
  std::mt19937 rng(seed);
  std::vector<Eigen::VectorXd> out;
  for (int k = 0; k < count; ++k) out.push_back(support::random_point(rng, 7));
  return out;
}

// Near the final set of example 2: q2 away from 0, z close to 1.
std::vector<Eigen::VectorXd> example2_seeds(int count, unsigned seed = 0) {
  std::mt19937 rng(seed);
  std::vector<Eigen::VectorXd> out;
  for (int k = 0; k < count; ++k) {
    auto x = support::random_point(rng, 5);
    x[1] = 0.5 + 0.5 * std::abs(x[1]);
    x[4] = 1 + 0.1 * x[4];
    out.push_back(x);
  }
  return out;
}

ConstraintSystem system_for(const LagrangianSystem& sys, ReebChoice reeb = {}) {
  return ConstraintSystem(sys.structure(), sys.energy_field(), {}, std::move(reeb));
}

double max_abs(const Eigen::VectorXd& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

// Hand-derived final set of example 2.
double example2_level2(const Eigen::VectorXd& x) {
  const double s = x[2] + x[3];
  return 0.5 * s * s + x[0] + x[1] * x[4];
}
double example2_level3(const Eigen::VectorXd& x) { return x[2] + x[3] - x[1] * (x[0] + x[1]); }

}  // namespace

TEST_CASE("orthogonal complements") {
  std::mt19937 rng(1);
  SUBCASE("full tangent space gives the characteristic distribution") {
    LagrangianSystem sys(examples::Example1{}.lagrangian());
    Eigen::MatrixXd chi(7, 2);
    chi.col(0) = e(7, 0) - e(7, 1);
    chi.col(1) = e(7, 3) - e(7, 4);
    for (int k = 0; k < 5; ++k) {
      const auto at = sys.structure().at(support::random_point(rng, 7, -2, 2));
      CHECK((proj(orth_complement(at, Eigen::MatrixXd::Identity(7, 7))) - proj(chi)).norm() < 1e-8);
      CHECK(orth_complement(at, Eigen::MatrixXd(7, 0)).cols() == 7);
    }
  }
  SUBCASE("example 2, tangent space of z = 1") {
    LagrangianSystem sys(examples::Example2{}.lagrangian());
    for (int k = 0; k < 5; ++k) {
      auto x = support::random_point(rng, 5, -2, 2);
      x[4] = 1;
      const auto at = sys.structure().at(x);
      Eigen::MatrixXd tp(5, 4);
      for (int i = 0; i < 4; ++i) tp.col(i) = e(5, i);
      const Eigen::MatrixXd perp = orth_complement(at, tp);
      Eigen::MatrixXd expected(5, 3);
      expected.col(0) = e(5, 0) - e(5, 1);
      expected.col(1) = e(5, 2) - e(5, 3);
      expected.col(2) = (x[2] + x[3]) * e(5, 2) + e(5, 4);
      CHECK((proj(perp) - proj(expected)).norm() < 1e-8);
    }
  }
  SUBCASE("complements turn intersections into sums") {
    LagrangianSystem sys(examples::Example1{}.lagrangian());
    for (int k = 0; k < 20; ++k) {
      const auto at = sys.structure().at(support::random_point(rng, 7, -2, 2));
      // Delta and Gamma contain C and share one more random direction
      Eigen::MatrixXd shared(7, 3);
      shared << at.characteristic(), Eigen::MatrixXd::Random(7, 1);
      Eigen::MatrixXd delta(7, 4), gamma(7, 4);
      delta << shared, Eigen::MatrixXd::Random(7, 1);
      gamma << shared, Eigen::MatrixXd::Random(7, 1);
      const Eigen::MatrixXd a = orth_complement(at, delta), b = orth_complement(at, gamma);
      Eigen::MatrixXd both(7, a.cols() + b.cols());
      both << a, b;
      CHECK((proj(orth_complement(at, shared)) - proj(both)).norm() < 1e-8);
    }
  }
  SUBCASE("left complement of the complement is Delta plus C") {
    for (int which = 1; which <= 2; ++which) {
      LagrangianSystem sys(which == 1 ? examples::Example1{}.lagrangian() : examples::Example2{}.lagrangian());
      const auto d = static_cast<Eigen::Index>(sys.chart().dim());
      for (int k = 0; k < 20; ++k) {
        const auto at = sys.structure().at(support::random_point(rng, d, -2, 2));
        const Eigen::MatrixXd delta = Eigen::MatrixXd::Random(d, 1 + k % (d - 1));
        const Eigen::MatrixXd chi = at.characteristic();
        Eigen::MatrixXd sum(d, delta.cols() + chi.cols());
        sum << delta, chi;
        CHECK((proj(left_complement(at, orth_complement(at, delta))) - proj(sum)).norm() < 1e-8);
        CHECK((proj(orth_complement(at, left_complement(at, delta))) - proj(sum)).norm() < 1e-8);
      }
    }
  }
}

TEST_CASE("primary constraints") {
  LagrangianSystem ex2(examples::Example2{}.lagrangian());
  auto p = primary_constraints(ex2.structure(), ex2.energy_field(), vec({0, 0, 1, 1, 1}));
  REQUIRE(p.size() == 2);
  CHECK(std::abs(p[0]) < 1e-14);
  CHECK(std::abs(p[1]) < 1e-14);
  p = primary_constraints(ex2.structure(), ex2.energy_field(), vec({0, 0, 1, 1, 2}));
  CHECK(p[0] == doctest::Approx(1.0).epsilon(1e-13));

  examples::Example1 ex;
  LagrangianSystem ex1(ex.lagrangian());
  p = primary_constraints(ex1.structure(), ex1.energy_field(), vec({0.5, 1.0, 0.3, 0.1, -0.4, 2, 0.7}));
  CHECK(std::abs(p[0]) < 1e-14);
  p = primary_constraints(ex1.structure(), ex1.energy_field(), vec({1, 0, 0.3, 0.1, -0.4, 2, 0.7}));
  CHECK(p[0] == doctest::Approx(-2.0).epsilon(1e-13));
  // values are Z(H) over the frame vectors: here -V_1 + V_2 and 0
  std::mt19937 rng(2);
  for (int k = 0; k < 20; ++k) {
    const auto x = support::random_point(rng, 7, -2, 2);
    p = primary_constraints(ex1.structure(), ex1.energy_field(), x);
    CHECK(std::abs(p[0] - ex.primary().eval(x)) < 1e-12);
    CHECK(std::abs(p[1]) < 1e-12);
  }

  LagrangianSystem reg(ScalarField::parse("v^2/2 - q", Chart({"q", "v", "z"}, FiberKind::velocity)));
  CHECK(primary_constraints(reg.structure(), reg.energy_field(), vec({1, 2, 3})).empty());
}

TEST_CASE("example 1 tower") {
  examples::Example1 ex;
  LagrangianSystem sys(ex.lagrangian());
  const auto seeds = example1_seeds(20);
  const auto tower = run_algorithm(system_for(sys), seeds);
  REQUIRE(tower.stabilized);
  REQUIRE(tower.levels.size() == 1);
  REQUIRE(tower.levels[0].size() == 1);
  CHECK(tower.samples.size() == 20);
  const auto& phi = tower.levels[0][0];
  CHECK(phi.id == "phi1.1");
  CHECK(phi.method() == GradientMethod::finite_difference);
  for (const auto& x : tower.samples) CHECK(std::abs(ex.primary().eval(x)) < 1e-8);
  // same zero set: the generated function is a multiple of -2 q1 + q2
  std::mt19937 rng(3);
  for (int k = 0; k < 20; ++k) {
    const auto x = support::random_point(rng, 7, -2, 2);
    CHECK(std::abs(phi.value(x) - ex.primary().eval(x)) < 1e-10);
    // gradient against plain central differences with another step
    Eigen::VectorXd fd(7);
    for (Eigen::Index i = 0; i < 7; ++i) {
      const double h = 1e-4;
      fd[i] = (phi.value(x + h * e(7, i)) - phi.value(x - h * e(7, i))) / (2 * h);
    }
    CHECK((phi.gradient(x) - fd).norm() < 1e-4 * (1 + fd.norm()));
  }
  CHECK(tower.rank_history == std::vector<int>{0, 1});

  SUBCASE("Reeb variant adds nothing") {
    const auto hat = run_algorithm_reeb_variant(system_for(sys), seeds);
    REQUIRE(hat.stabilized);
    CHECK(hat.count() == 1);
    for (const auto& x : hat.samples) CHECK(max_abs(tower.values(x)) < 1e-8);
    for (const auto& x : tower.samples) CHECK(max_abs(hat.values(x)) < 1e-8);
  }
  SUBCASE("tangency test and motion") {
    CHECK(reeb_tangency_test(tower, tower.samples) < 1e-9);
    for (const auto& x : tower.samples) {
      const auto m = solve_motion(tower, x);
      CHECK(m.residual < 1e-8);
      CHECK(m.tangency < 1e-6);
      // C cap T P_f = span{d_v1 - d_v2}
      REQUIRE(m.freedom.cols() == 1);
      CHECK((proj(m.freedom) - proj(e(7, 3) - e(7, 4))).norm() < 1e-8);
      const auto at = sys.structure().at(x);
      const auto gamma = gamma_h(at, sys.energy_field());
      const Eigen::VectorXd moved = m.field + 0.37 * m.freedom.col(0);
      CHECK((at.flat * moved - gamma).norm() < 1e-8);
      CHECK(std::abs(ex.primary().gradient(x).dot(moved)) < 1e-6);
    }
    auto off = tower.samples.front();
    off[0] += 0.1;
    CHECK_THROWS_AS(solve_motion(tower, off), NotOnManifold);
  }
}

TEST_CASE("example 2 towers") {
  LagrangianSystem sys(examples::Example2{}.lagrangian());
  const auto seeds = example2_seeds(8);

  SUBCASE("plain variant") {
    const auto tower = run_algorithm(system_for(sys), seeds);
    REQUIRE(tower.stabilized);
    REQUIRE(tower.levels.size() == 3);
    for (const auto& l : tower.levels) CHECK(l.size() == 1);
    CHECK(tower.samples.size() + tower.dropped_seeds == seeds.size());
    CHECK(tower.samples.size() >= 6);
    for (const auto& x : tower.samples) {
      CHECK(std::abs(x[4] - 1) < 1e-8);
      CHECK(std::abs(example2_level2(x)) < 1e-7);
      CHECK(std::abs(example2_level3(x)) < 1e-7);
      // lower levels vanish on higher ones
      for (const auto& l : tower.levels) CHECK(std::abs(l[0].value(x)) < 1e-8);
    }
    // level 1 is z - 1 up to a factor
    std::mt19937 rng(4);
    for (int k = 0; k < 10; ++k) {
      auto x = seeds[static_cast<std::size_t>(k % 8)];
      x[4] = 1.0;
      CHECK(std::abs(tower.levels[0][0].value(x)) < 1e-10);
      x[4] = 1.2;
      CHECK(std::abs(tower.levels[0][0].value(x)) > 1e-3);
    }
    // level 2 vanishes exactly where the hand-derived function does (on z = 1)
    for (const auto& s : tower.samples) {
      auto x = s;
      x[2] += 0.2;
      x[0] = -0.5 * (x[2] + x[3]) * (x[2] + x[3]) - x[1];
      CHECK(std::abs(tower.levels[1][0].value(x)) < 1e-7);
      x[0] += 0.3;
      CHECK(std::abs(tower.levels[1][0].value(x)) > 1e-3);
    }
    CHECK(reeb_tangency_test(tower, tower.samples) > 1e-3);
    for (const auto& x : tower.samples) {
      const auto m = solve_motion(tower, x);
      CHECK(m.residual < 1e-8);
      CHECK(m.tangency < 1e-6);
      CHECK(m.freedom.cols() == 1);
    }
  }
  SUBCASE("Reeb variant is infeasible") {
    const auto tower = run_algorithm_reeb_variant(system_for(sys), seeds);
    CHECK_FALSE(tower.stabilized);
    REQUIRE(tower.certificate);
    CHECK(tower.certificate->level == 2);
    for (double v : tower.certificate->values) CHECK(std::abs(v - 1.0) < 1e-9);
  }
  SUBCASE("level cap") {
    auto cs = system_for(sys);
    cs.config().max_levels = 1;
    CHECK_THROWS_AS(run_algorithm(cs, seeds), MaxLevelsExceeded);
  }
}

TEST_CASE("final sets do not depend on the Reeb field") {
  SUBCASE("example 1") {
    examples::Example1 ex;
    LagrangianSystem sys(ex.lagrangian());
    const auto seeds = example1_seeds(10, 5);
    const auto a = run_algorithm(system_for(sys), seeds);
    const auto b = run_algorithm(system_for(sys, ReebChoice::shifted(0.8)), seeds);
    const auto c = run_algorithm(system_for(sys, ReebChoice::shifted(-2.5)), seeds);
    REQUIRE((a.stabilized && b.stabilized && c.stabilized));
    for (const auto& x : a.samples) {
      CHECK(max_abs(b.values(x)) < 1e-6);
      CHECK(max_abs(c.values(x)) < 1e-6);
    }
    for (const auto& x : c.samples) CHECK(max_abs(a.values(x)) < 1e-6);
  }
  SUBCASE("example 2") {
    LagrangianSystem sys(examples::Example2{}.lagrangian());
    const auto seeds = example2_seeds(6, 7);
    const auto a = run_algorithm(system_for(sys), seeds);
    const auto b = run_algorithm(system_for(sys, ReebChoice::shifted(1.5)), seeds);
    REQUIRE((a.stabilized && b.stabilized));
    CHECK(a.count() == b.count());
    for (const auto& x : a.samples) CHECK(max_abs(b.values(x)) < 1e-6);
    for (const auto& x : b.samples) CHECK(max_abs(a.values(x)) < 1e-6);
  }
}

TEST_CASE("complement pairing and restricted solve agree") {
  examples::Example1 ex;
  LagrangianSystem sys(ex.lagrangian());
  auto cs = system_for(sys);
  cs.anchor(vec({0, 0, 0, 0, 0, 0, 0}));
  std::mt19937 rng(6);
  int on = 0;
  for (int k = 0; k < 100; ++k) {
    auto x = support::random_point(rng, 7, -2, 2);
    if (k % 2 == 0) {
      x[1] = 2 * x[0];
      ++on;
    }
    const Reduced r = cs.reduce(x);
    for (int level = 0; level < 2; ++level) {
      const Eigen::MatrixXd g = level == 0 ? Eigen::MatrixXd(0, 7) : Eigen::MatrixXd(ex.primary().gradient(x).transpose());
      const bool paired = complement_pairing(r, g, 1e-8) < 1e-8;
      const bool solvable = restricted_solve_residual(r, g, 1e-8) < 1e-8;
      CHECK(paired == solvable);
      if (level == 0) CHECK(paired == (k % 2 == 0));
    }
  }
  CHECK(on == 50);
}

TEST_CASE("regular systems need no constraints") {
  LagrangianSystem sys(ScalarField::parse("v^2/2 - q^2/2 - 0.1*z", Chart({"q", "v", "z"}, FiberKind::velocity)));
  std::mt19937 rng(8);
  std::vector<Eigen::VectorXd> seeds;
  for (int k = 0; k < 5; ++k) seeds.push_back(support::random_point(rng, 3));
  const auto tower = run_algorithm(system_for(sys), seeds);
  CHECK(tower.stabilized);
  CHECK(tower.count() == 0);
  CHECK(reeb_tangency_test(tower, tower.samples) == 0.0);
  for (const auto& x : tower.samples) {
    const auto m = solve_motion(tower, x);
    CHECK(m.freedom.cols() == 0);
    CHECK((m.field - sys.regular_dynamics(x)).norm() < 1e-9);
  }
}

TEST_CASE("rank changes across seeds abort") {
  LagrangianSystem sys(ScalarField::parse("q^2*v^2/2", Chart({"q", "v", "z"}, FiberKind::velocity)));
  CHECK_THROWS_AS(run_algorithm(system_for(sys), {vec({1, 1, 0}), vec({0, 1, 0})}), RankNotConstant);
}

TEST_CASE("ambient constraints") {
  examples::Example1 ex;
  LagrangianSystem sys(ex.lagrangian());
  ConstraintSystem cs(sys.structure(), sys.energy_field(), {ex.primary()});
  const auto tower = run_algorithm(cs, example1_seeds(10, 9));
  REQUIRE(tower.stabilized);
  CHECK(tower.ambient.size() == 1);
  CHECK(tower.levels.empty());
  for (const auto& x : tower.samples) {
    CHECK(std::abs(ex.primary().eval(x)) < 1e-10);
    const auto m = solve_motion(tower, x);
    CHECK(m.residual < 1e-8);
    CHECK(m.tangency < 1e-8);
  }
}
