#include <doctest.h>

#include <cmath>
#include <random>
#include <thread>

#include "contactum/expr.hpp"

using namespace contactum;

namespace {

Chart can1() { return Chart::standard(1, FiberKind::momentum); }
Chart tq2() { return Chart::standard(2, FiberKind::velocity); }

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double d : v) x[i++] = d;
  return x;
}

// Random smooth expression over three variables, built as text so the parser
// is exercised too. Domains stay safe: ln and division get positive arguments.
std::string random_text(std::mt19937& rng, int depth) {
  std::uniform_int_distribution<int> pick(0, depth <= 0 ? 1 : 9);
  std::uniform_real_distribution<double> coef(-2.0, 2.0);
  const char* vars[] = {"q", "p", "z"};
  switch (pick(rng)) {
    case 0: return std::to_string(coef(rng));
    case 1: return vars[std::uniform_int_distribution<int>(0, 2)(rng)];
    case 2: return "(" + random_text(rng, depth - 1) + " + " + random_text(rng, depth - 1) + ")";
    case 3: return "(" + random_text(rng, depth - 1) + " - " + random_text(rng, depth - 1) + ")";
    case 4: return "(" + random_text(rng, depth - 1) + " * " + random_text(rng, depth - 1) + ")";
    case 5: return "(" + random_text(rng, depth - 1) + ")^" + std::to_string(std::uniform_int_distribution<int>(0, 3)(rng));
    case 6: return "sin(" + random_text(rng, depth - 1) + ")";
    case 7: return "cos(" + random_text(rng, depth - 1) + ")";
    case 8: return "ln(1.5 + (" + random_text(rng, depth - 1) + ")^2)";
    default: return "(" + random_text(rng, depth - 1) + ")/(2 + sin(" + random_text(rng, depth - 1) + "))";
  }
}

}  // namespace

TEST_CASE("parse and evaluate") {
  auto f = ScalarField::parse("p^2/2 + q^2/2 + 0.1*z", can1());
  CHECK(f.eval(vec({1, 2, 0})) == doctest::Approx(2.5));
  CHECK(ScalarField::parse("-q^2", can1()).eval(vec({3, 0, 0})) == doctest::Approx(-9));
  CHECK(ScalarField::parse("2^-1 * q", can1()).eval(vec({3, 0, 0})) == doctest::Approx(1.5));
  CHECK(ScalarField::parse("1.5e1 - .5", can1()).eval(vec({0, 0, 0})) == doctest::Approx(14.5));
  CHECK(ScalarField::parse("exp(ln(q))", can1()).eval(vec({3, 0, 0})) == doctest::Approx(3));
  CHECK(ScalarField::parse("q - p - z", can1()).eval(vec({1, 1, 1})) == doctest::Approx(-1));
  CHECK(ScalarField::parse("q / p / z", can1()).eval(vec({8, 2, 2})) == doctest::Approx(2));
}

TEST_CASE("parse errors") {
  try {
    ScalarField::parse("q1 +", tq2());
    FAIL("expected SyntaxError");
  } catch (const SyntaxError& e) {
    CHECK(e.position() == 4);
  }
  try {
    ScalarField::parse("0.5*(dq1 + dq2)^2", tq2());
    FAIL("expected UnknownIdentifier");
  } catch (const UnknownIdentifier& e) {
    CHECK(e.name() == "dq1");
  }
  CHECK_THROWS_AS(ScalarField::parse("q^p", can1()), SyntaxError);
  CHECK_THROWS_AS(ScalarField::parse("q^1.5", can1()), SyntaxError);
  CHECK_THROWS_AS(ScalarField::parse("(q + p", can1()), SyntaxError);
  CHECK_THROWS_AS(ScalarField::parse("q p", can1()), SyntaxError);
  CHECK_THROWS_AS(ScalarField::parse("tan(q)", can1()), UnknownIdentifier);
  CHECK_THROWS_AS(ScalarField::parse("", can1()), SyntaxError);
}

TEST_CASE("params substitute named constants") {
  expr::Params params{{"gamma", 0.1}};
  auto f = ScalarField::parse("gamma*z", can1(), params);
  CHECK(f.eval(vec({0, 0, 2})) == doctest::Approx(0.2));
}

TEST_CASE("evaluation domain errors are raised at evaluation time") {
  auto f = ScalarField::parse("1/q", can1());
  CHECK_THROWS_AS(f.eval(vec({0, 0, 0})), EvalDomainError);
  CHECK(f.eval(vec({2, 0, 0})) == doctest::Approx(0.5));
  CHECK_THROWS_AS(ScalarField::parse("ln(q)", can1()).eval(vec({-1, 0, 0})), EvalDomainError);
  CHECK_THROWS_AS(f.eval(vec({1, 2})), DimensionMismatch);
}

TEST_CASE("differentiate") {
  auto h = ScalarField::parse("p^2/2 + q^2/2 + 0.1*z", can1());
  CHECK(h.diff("p").eval(vec({0, 2, 0})) == doctest::Approx(2));
  auto hz = h.diff("z");
  CHECK(expr::is_constant(hz.body(), 0.1));
  CHECK_THROWS_AS(h.diff("w"), UnknownIdentifier);

  auto l = ScalarField::parse("0.5*(v1 + v2)^2 + q1 + q2*z", tq2());
  CHECK(l.diff("v1").eval(vec({0, 0, 3, 4, 1})) == doctest::Approx(7));
}

TEST_CASE("jets") {
  auto h = ScalarField::parse("p^2/2 + q^2/2 + 0.1*z", can1());
  Jet j = h.jet(vec({1, 2, 0}), 1);
  CHECK(j.value == doctest::Approx(2.5));
  CHECK(j.gradient[0] == doctest::Approx(1));
  CHECK(j.gradient[1] == doctest::Approx(2));
  CHECK(j.gradient[2] == doctest::Approx(0.1));

  Jet c = ScalarField::parse("3", can1()).jet(vec({0.3, -1, 2}), 2);
  CHECK(c.gradient.cwiseAbs().maxCoeff() == 0.0);
  CHECK(c.hessian.cwiseAbs().maxCoeff() == 0.0);

  auto l = ScalarField::parse("0.5*(v1 + v2)^2 + q1 + q2*z", tq2());
  Jet lj = l.jet(vec({0, 0, 1, 1, 1}), 2);
  CHECK(lj.hessian.block(2, 2, 2, 2).isApprox(Eigen::Matrix2d::Ones()));

  Jet t = ScalarField::parse("q^2*p*z", can1()).jet(vec({1, 2, 3}), 3);
  CHECK(t.third_at(0, 0, 1) == doctest::Approx(2 * 3));
  CHECK(t.third_at(1, 0, 0) == doctest::Approx(6));
  CHECK(t.third_at(0, 1, 2) == doctest::Approx(2));
  CHECK_THROWS_AS(l.jet(vec({0, 0, 1}), 1), DimensionMismatch);
}

TEST_CASE("property: symbolic partials match central differences") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  int checked = 0;
  while (checked < 100) {
    auto f = ScalarField::parse(random_text(rng, 4), can1());
    Eigen::VectorXd x(3);
    for (int i = 0; i < 3; ++i) x[i] = u(rng);
    Jet j;
    try {
      j = f.jet(x, 2);
    } catch (const EvalDomainError&) {
      continue;
    }
    for (int i = 0; i < 3; ++i) {
      const double h = 1e-5 * (1 + std::abs(x[i]));
      Eigen::VectorXd xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      const double fd = (f.eval(xp) - f.eval(xm)) / (2 * h);
      CHECK(std::abs(j.gradient[i] - fd) / (1 + std::abs(j.gradient[i])) < 1e-6);
    }
    CHECK(j.hessian == j.hessian.transpose());
    ++checked;
  }
}

TEST_CASE("property: print round-trips through parse") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int k = 0; k < 50; ++k) {
    auto f = ScalarField::parse(random_text(rng, 4), can1());
    auto g = ScalarField::parse(f.str(), can1());
    auto d = f.diff(0);
    auto dg = ScalarField::parse(d.str(), can1());
    for (int s = 0; s < 50; ++s) {
      Eigen::VectorXd x(3);
      for (int i = 0; i < 3; ++i) x[i] = u(rng);
      try {
        CHECK(std::abs(f.eval(x) - g.eval(x)) < 1e-12);
        CHECK(std::abs(d.eval(x) - dg.eval(x)) < 1e-12);
      } catch (const EvalDomainError&) {
      }
    }
  }
}

TEST_CASE("derivative cache is safe under concurrent readers") {
  auto f = ScalarField::parse("sin(q)*p^3 + exp(z*q)", can1());
  Eigen::VectorXd x = vec({0.3, 0.7, -0.2});
  const Jet ref = ScalarField::parse("sin(q)*p^3 + exp(z*q)", can1()).jet(x, 3);
  std::vector<std::thread> pool;
  std::vector<int> ok(8, 0);
  for (int t = 0; t < 8; ++t) {
    pool.emplace_back([&, t] {
      const Jet j = f.jet(x, 3);
      ok[static_cast<std::size_t>(t)] = j.third == ref.third && j.hessian == ref.hessian;
    });
  }
  for (auto& th : pool) th.join();
  for (int v : ok) CHECK(v == 1);
}

TEST_CASE("chart validation and default names") {
  CHECK(Chart::standard(1, FiberKind::momentum).names() == std::vector<std::string>{"q", "p", "z"});
  CHECK(Chart::standard(2, FiberKind::velocity).names() ==
        std::vector<std::string>{"q1", "q2", "v1", "v2", "z"});
  CHECK_THROWS_AS(Chart({"q", "q", "z"}, FiberKind::momentum), Error);
  CHECK_THROWS_AS(Chart({"q", "p"}, FiberKind::momentum), Error);
  CHECK_THROWS_AS(Chart({"q", "1p", "z"}, FiberKind::momentum), Error);
  CHECK_THROWS_AS(Chart::standard(0, FiberKind::momentum), Error);
}
