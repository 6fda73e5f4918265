#include <algorithm>
#include <cmath>
#include <random>

#include "contactum/app.hpp"
#include "contactum/brackets.hpp"
#include "contactum/error.hpp"
#include "contactum/examples.hpp"
#include "contactum/geometry.hpp"
#include "contactum/lagrangian.hpp"

namespace contactum::app {

namespace {

using Index = Eigen::Index;

namespace inv {
const char* const klass = "geometry: class is the constant odd rank of the flat map";
const char* const characteristic = "geometry: characteristic distribution equals ker flat";
const char* const complement = "constraints: complement of the full tangent space is the characteristic distribution";
const char* const reeb = "geometry: flat(R) = eta";
const char* const pullback = "lagrangian: FL pulls eta back to eta_L";
const char* const kernel = "lagrangian: ker (FL)_* spans the listed directions";
const char* const fiber = "lagrangian: fiber constancy of functions on the fibers of FL";
const char* const tower = "constraints: tower levels and zero sets match the listed constraints";
const char* const reeb_variant = "constraints: Reeb-tangency variant result";
const char* const reeb_choice = "constraints: final zero set does not depend on the Reeb field";
const char* const tangency = "constraints: Reeb tangency test";
const char* const motion = "constraints: equations of motion solvable on the final set";
const char* const classify = "brackets: classification rank and second-class family";
const char* const c_matrix = "brackets: C matrix entries";
const char* const first_class = "brackets: first-class combination vanishes with all constraints on M_f";
const char* const jacobi = "brackets: Jacobi bracket values";
const char* const dirac = "brackets: Dirac-Jacobi values agree across routes";
const char* const reeb_dj = "brackets: R_DJ on M_f";
const char* const evolution = "brackets: Dirac-Jacobi evolution";
const char* const casimir = "brackets: second-class constraints are Casimirs";
const char* const section = "lagrangian: constructed x_tilde is second order and maps to y";
const char* const deviation = "lagrangian: deviation X* lies in ker (FL)_*";
}  // namespace inv

class Table {
 public:
  explicit Table(std::string name) : name_(std::move(name)) {}

  void add(const std::string& id, const std::string& quantity, json expected, json got, double tol, bool pass,
           const std::string& invariant) {
    rows_.push_back({{"id", id},
                     {"quantity", quantity},
                     {"expected", std::move(expected)},
                     {"got", std::move(got)},
                     {"tol", tol},
                     {"status", pass ? "PASS" : "FAIL"},
                     {"invariant", invariant}});
  }

  void near(const std::string& id, const std::string& quantity, double expected, double got, double tol,
            const std::string& invariant) {
    add(id, quantity, expected, got, tol, std::isfinite(got) && std::abs(got - expected) <= tol, invariant);
  }

  /// Worst of expected(x) - got(x) over points, reported as that point's pair.
  void near_all(const std::string& id, const std::string& quantity, const std::vector<VectorXd>& points,
                const std::function<double(const VectorXd&)>& expected,
                const std::function<double(const VectorXd&)>& got, double tol, const std::string& invariant) {
    double worst = -1.0, e = 0.0, g = 0.0;
    for (const auto& x : points) {
      const double ev = expected(x), gv = got(x);
      const double d = std::isfinite(gv) ? std::abs(gv - ev) : INFINITY;
      if (d > worst) {
        worst = d;
        e = ev;
        g = gv;
      }
    }
    near(id, quantity, e, g, tol, invariant);
  }

  void below(const std::string& id, const std::string& quantity, double got, double tol,
             const std::string& invariant) {
    add(id, quantity, 0.0, got, tol, std::isfinite(got) && got < tol, invariant);
  }

  void equal(const std::string& id, const std::string& quantity, json expected, json got,
             const std::string& invariant) {
    const bool pass = expected == got;
    add(id, quantity, std::move(expected), std::move(got), 0.0, pass, invariant);
  }

  void error(const std::string& id, const std::string& quantity, const std::string& what,
             const std::string& invariant) {
    add(id, quantity, nullptr, "error: " + what, 0.0, false, invariant);
  }

  /// Runs fn, turning a library error into a FAIL row.
  void guard(const std::string& id, const std::string& invariant, const std::function<void()>& fn) {
    try {
      fn();
    } catch (const Error& e) {
      error(id, "evaluation", e.what(), invariant);
    }
  }

  const std::string& name() const { return name_; }
  const json& rows() const { return rows_; }

 private:
  std::string name_;
  json rows_ = json::array();
};

double max_over(const std::vector<VectorXd>& points, const std::function<double(const VectorXd&)>& f) {
  double worst = 0.0;
  for (const auto& x : points) {
    const double v = f(x);
    worst = std::isfinite(v) ? std::max(worst, std::abs(v)) : INFINITY;
  }
  return worst;
}

double max_abs(const VectorXd& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

MatrixXd projector(const MatrixXd& a) {
  if (a.cols() == 0) return MatrixXd::Zero(a.rows(), a.rows());
  Eigen::JacobiSVD<MatrixXd> svd(a, Eigen::ComputeThinU);
  const auto& s = svd.singularValues();
  Index r = 0;
  while (r < s.size() && s[r] > 1e-10 * s[0]) ++r;
  const MatrixXd u = svd.matrixU().leftCols(r);
  return u * u.transpose();
}

VectorXd unit(Index dim, Index i) { return VectorXd::Unit(dim, i); }

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}
  double operator()(double lo = -1.0, double hi = 1.0) { return lo + (hi - lo) * u_(rng_); }
  VectorXd point(Index dim) {
    VectorXd x(dim);
    for (Index i = 0; i < dim; ++i) x[i] = (*this)();
    return x;
  }
  std::vector<VectorXd> points(Index dim, std::size_t count) {
    std::vector<VectorXd> out;
    for (std::size_t k = 0; k < count; ++k) out.push_back(point(dim));
    return out;
  }

 private:
  std::mt19937_64 rng_;
  std::uniform_real_distribution<double> u_{0.0, 1.0};
};

ConstraintSystem lagrangian_system(const LagrangianSystem& sys, ReebChoice reeb = {}) {
  return ConstraintSystem(sys.structure(), sys.energy_field(), {}, std::move(reeb));
}

// Structure rows shared by both examples.
void structure_rows(Table& t, const std::string& ex, const LagrangianSystem& sys, int expected_class,
                    const std::vector<VectorXd>& points, const MatrixXd& kernel) {
  t.guard(ex + ".class", inv::klass, [&] {
    t.equal(ex + ".class", "class of eta_L at 20 random points", expected_class,
            form_class(sys.structure(), points, 1e-8), inv::klass);
  });
  t.guard(ex + ".reeb", inv::reeb, [&] {
    t.below(ex + ".reeb", "max |flat(R) - eta_L| at 20 random points", max_over(points, [&](const VectorXd& x) {
              const auto at = sys.structure().at(x);
              return (at.flat * at.reeb() - at.eta).norm();
            }),
            1e-9, inv::reeb);
  });
  t.guard(ex + ".legendre_kernel", inv::kernel, [&] {
    t.below(ex + ".legendre_kernel", "max projector gap between ker (FL)_* and span{d_v1 - d_v2}",
            max_over(points,
                     [&](const VectorXd& x) { return (projector(sys.legendre_kernel(x)) - projector(kernel)).norm(); }),
            1e-8, inv::kernel);
  });
  t.guard(ex + ".fiber_energy", inv::fiber, [&] {
    t.below(ex + ".fiber_energy", "fiber constancy of E_L at 20 random points",
            sys.fiber_constancy(sys.energy_field(), points), 1e-12, inv::fiber);
  });
}

void pullback_rows(Table& t, const std::string& ex, const LagrangianSystem& sys, Sampler& rng) {
  t.guard(ex + ".pullback", inv::pullback, [&] {
    const auto dim = static_cast<Index>(sys.chart().dim());
    const Structure target = Structure::canonical_contact(sys.chart().n());
    const auto points = rng.points(dim, 50);
    t.below(ex + ".pullback", "max |FL^* eta - eta_L| at 50 random points", max_over(points, [&](const VectorXd& x) {
              const auto fl = sys.legendre(x);
              const VectorXd eta = target.at(fl.target, 1e-8, false).eta;
              return max_abs(fl.jacobian.transpose() * eta - sys.structure().at(x, 1e-8, false).eta);
            }),
            1e-10, inv::pullback);
  });
}

// Solutions and second-order sections at the final-set samples.
void motion_rows(Table& constraints, Table& second, const std::string& ex, const LagrangianSystem& sys,
                 const ConstraintTower& tower, Index freedom, const std::string& set = "final-set") {
  const auto& samples = tower.samples;
  std::vector<MotionSolution> sol(samples.size());
  std::vector<SecondOrderSection> sec(samples.size());
  std::vector<double> dev(samples.size());
  std::vector<std::string> err(samples.size());
  const VectorFieldFn field = [&](const VectorXd& x) { return solve_motion(tower, x, section_manifold_tol).field; };
  parallel_for(samples.size(), [&](std::size_t i) {
    try {
      const VectorXd& x = samples[i];
      sol[i] = solve_motion(tower, x);
      const auto fl = sys.legendre(x);
      sec[i] = sys.second_order_section(field, fl.target, x);
      dev[i] = (fl.jacobian * sode_deviation(sys.chart(), sol[i].field, x)).norm();
    } catch (const Error& e) {
      err[i] = e.what();
    }
  });
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!err[i].empty()) {
      second.error(ex + ".second_order", "section at " + set + " sample " + std::to_string(i), err[i], inv::section);
      return;
    }
  }
  double residual = 0.0, sode = 0.0, leg = 0.0, fib = 0.0, worst_dev = 0.0;
  Index fmin = samples.empty() ? -1 : sol.front().freedom.cols(), fmax = fmin;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    residual = std::max(residual, sol[i].residual);
    fmin = std::min(fmin, sol[i].freedom.cols());
    fmax = std::max(fmax, sol[i].freedom.cols());
    sode = std::max(sode, sec[i].sode_defect);
    leg = std::max(leg, sec[i].legendre_defect);
    fib = std::max(fib, sec[i].fiber_defect);
    worst_dev = std::max(worst_dev, dev[i]);
  }
  const std::string where = " over " + std::to_string(samples.size()) + " " + set + " samples";
  constraints.below(ex + ".motion", "max residual of flat(X) = gamma_H with X tangent" + where, residual, 1e-8,
                    inv::motion);
  constraints.equal(ex + ".freedom", "dimension of C cap T M_f" + where, freedom,
                    fmin == fmax ? json(fmin) : json("varies"), inv::motion);
  second.below(ex + ".sode", "max |S(X) - Delta| at x_tilde" + where, sode, 1e-8, inv::section);
  second.below(ex + ".legendre", "max |FL(x_tilde) - y|" + where, leg, 1e-8, inv::section);
  second.below(ex + ".fiber", "max change of the q-block of X between x and x_tilde" + where, fib, 1e-8,
               inv::section);
  second.below(ex + ".deviation", "max |FL_*(X*)|" + where, worst_dev, 1e-9, inv::deviation);
}

json table_doc(const std::string& example, const Table& t) {
  return {{"schema", 1}, {"example", example}, {"table", t.name()}, {"rows", t.rows()}};
}

Bundle finish(const std::string& example, std::uint64_t seed, const std::vector<Table>& tables) {
  Bundle b;
  json failures = json::array();
  std::size_t total = 0;
  for (const auto& t : tables) {
    b.files[t.name() + ".json"] = table_doc(example, t);
    for (const auto& row : t.rows()) {
      ++total;
      if (row["status"] != "PASS")
        failures.push_back({{"table", t.name()}, {"id", row["id"]}, {"invariant", row["invariant"]}});
    }
  }
  b.exit_code = failures.empty() ? exit_code::ok : exit_code::reproduce_failed;
  b.files["summary.json"] = {{"schema", 1},
                             {"example", example},
                             {"seed", seed},
                             {"rows", total},
                             {"passed", total - failures.size()},
                             {"failed", failures.size()},
                             {"failures", failures},
                             {"status", failures.empty() ? "PASS" : "FAIL"},
                             {"exit_code", b.exit_code}};
  return b;
}

Bundle example1(std::uint64_t seed) {
  const examples::Example1 ex;
  Sampler rng(seed);
  Table structure("structure"), constraints("constraints"), classification("classification"), brackets("brackets"),
      second("second_order");
  const LagrangianSystem sys(ex.lagrangian());
  const auto points = rng.points(7, 20);

  structure_rows(structure, "E1", sys, 5, points, unit(7, 3) - unit(7, 4));
  structure.guard("E1.characteristic", inv::characteristic, [&] {
    MatrixXd c(7, 2);
    c << unit(7, 0) - unit(7, 1), unit(7, 3) - unit(7, 4);
    structure.below("E1.characteristic", "max projector gap between ker flat and span{d_q1 - d_q2, d_v1 - d_v2}",
                    max_over(points,
                             [&](const VectorXd& x) {
                               return (projector(sys.structure().at(x).characteristic()) - projector(c)).norm();
                             }),
                    1e-8, inv::characteristic);
    structure.below("E1.complement", "max projector gap between the complement of TM and ker flat",
                    max_over(points,
                             [&](const VectorXd& x) {
                               const auto at = sys.structure().at(x);
                               return (projector(orth_complement(at, MatrixXd::Identity(7, 7))) -
                                       projector(at.characteristic()))
                                   .norm();
                             }),
                    1e-8, inv::complement);
  });
  pullback_rows(structure, "E1", sys, rng);

  // Lagrangian constraint tower.
  const ScalarField phi1 = ex.primary();
  constraints.guard("E1.tower", inv::tower, [&] {
    const ConstraintSystem cs = lagrangian_system(sys);
    const auto tower = run_algorithm(cs, points);
    constraints.equal("E1.tower.stabilized", "tower stabilizes", true, tower.stabilized, inv::tower);
    constraints.equal("E1.tower.levels", "number of nontrivial levels", 1, tower.levels.size(), inv::tower);
    constraints.equal("E1.tower.samples", "seeds retained on the final set", points.size(), tower.samples.size(),
                      inv::tower);
    constraints.below("E1.tower.membership", "max |-2 q1 + q2| at final-set samples",
                      max_over(tower.samples, [&](const VectorXd& x) { return phi1.eval(x); }), 1e-8, inv::tower);
    std::vector<VectorXd> listed;
    for (int k = 0; k < 20; ++k) {
      VectorXd x = rng.point(7);
      x[1] = 2 * x[0];
      listed.push_back(x);
    }
    constraints.below("E1.tower.converse", "max |tower constraints| at 20 points of {q2 = 2 q1}",
                      max_over(listed, [&](const VectorXd& x) { return max_abs(tower.values(x)); }), 1e-8,
                      inv::tower);

    const auto hat = run_algorithm(cs, points, Variant::reeb_tangency);
    constraints.equal("E1.reeb_variant.feasible", "Reeb variant stabilizes without certificate", true,
                      hat.stabilized && !hat.certificate, inv::reeb_variant);
    constraints.equal("E1.reeb_variant.count", "Reeb variant constraint count", tower.count(), hat.count(),
                      inv::reeb_variant);
    constraints.below("E1.reeb_variant.same_set", "max |plain tower constraints| at Reeb-variant samples",
                      max_over(hat.samples, [&](const VectorXd& x) { return max_abs(tower.values(x)); }), 1e-8,
                      inv::reeb_variant);

    const auto shifted = run_algorithm(lagrangian_system(sys, ReebChoice::shifted(0.8)), points);
    constraints.below("E1.reeb_choice", "max |constraints with R + 0.8 Z| at plain samples and back",
                      std::max(max_over(tower.samples, [&](const VectorXd& x) { return max_abs(shifted.values(x)); }),
                               max_over(shifted.samples, [&](const VectorXd& x) { return max_abs(tower.values(x)); })),
                      1e-6, inv::reeb_choice);
    constraints.below("E1.tangency", "Reeb tangency test on the final set", reeb_tangency_test(tower, tower.samples),
                      1e-9, inv::tangency);
    motion_rows(constraints, second, "E1", sys, tower, 1);
  });

  // Hamiltonian side with psi1 = p1 - p2, psi2 = 2 q1 - q2.
  const Chart chart = ex.momentum_chart();
  const BracketContext ctx = BracketContext::canonical(chart);
  const auto psi = ex.constraints();
  const std::vector<Observable> obs = {Observable::field(psi[0], "psi1"), Observable::field(psi[1], "psi2")};
  std::vector<VectorXd> mf;
  for (int k = 0; k < 20; ++k) {
    VectorXd x = rng.point(7);
    x[1] = 2 * x[0];
    x[4] = x[3];
    if (k == 0) x[2] = 0.7;
    mf.push_back(x);
  }
  auto coord = [&](const char* name) { return Observable::field(ScalarField::parse(name, chart), name); };
  const Observable q1 = coord("q1"), q2 = coord("q2"), q3 = coord("q3"), p1 = coord("p1"), p2 = coord("p2"),
                   p3 = coord("p3"), z = coord("z");

  classification.guard("E1.classify", inv::classify, [&] {
    const auto cls = classify(ctx, obs, mf);
    classification.equal("E1.classify.second_class", "second-class family", json::array({"psi1", "psi2"}),
                         [&] {
                           json out = json::array();
                           for (auto i : cls.second_class) out.push_back(obs[i].name());
                           return out;
                         }(),
                         inv::classify);
    const auto [rlo, rhi] = std::minmax_element(cls.ranks.begin(), cls.ranks.end());
    classification.equal("E1.classify.rank", "rank of C at 20 samples of M_f", 2,
                         *rlo == *rhi ? json(*rlo) : json("varies"), inv::classify);
    classification.near_all(
        "E1.C12", "C^12 = {psi1, psi2} = F at 20 samples of M_f", mf, [](const VectorXd&) { return 3.0; },
        [&](const VectorXd& x) { return jacobi_bracket(ctx, obs[0], obs[1], x); }, 1e-9, inv::c_matrix);

    const DiracJacobi dj(ctx, obs, cls);
    const auto dpsi2 = [&](const VectorXd& x) { return psi[1].gradient(x); };
    const auto F = [&](const VectorXd& x) { return jacobi_bracket(ctx, obs[0], obs[1], x); };
    struct Route {
      std::string id;
      std::string quantity;
      const Observable& f;
      const Observable& g;
      std::function<double(const VectorXd&)> display;
      std::function<double(const VectorXd&)> expected;
    };
    const std::vector<Route> routes = {
        {"q1_p1", "{q1, p1}_DJ", q1, p1, [&](const VectorXd& x) { return dpsi2(x)[1] / F(x); },
         [](const VectorXd&) { return -1.0 / 3.0; }},
        {"q1_p2", "{q1, p2}_DJ", q1, p2, [&](const VectorXd& x) { return dpsi2(x)[1] / F(x); },
         [](const VectorXd&) { return -1.0 / 3.0; }},
        {"q2_p1", "{q2, p1}_DJ", q2, p1, [&](const VectorXd& x) { return -dpsi2(x)[0] / F(x); },
         [](const VectorXd&) { return -2.0 / 3.0; }},
        {"q2_p2", "{q2, p2}_DJ", q2, p2, [&](const VectorXd& x) { return -dpsi2(x)[0] / F(x); },
         [](const VectorXd&) { return -2.0 / 3.0; }},
        {"q1_p3", "{q1, p3}_DJ", q1, p3, [&](const VectorXd& x) { return dpsi2(x)[2] / F(x); },
         [](const VectorXd&) { return 0.0; }},
        {"q3_p3", "{q3, p3}_DJ", q3, p3, [](const VectorXd&) { return -1.0; },
         [](const VectorXd&) { return -1.0; }},
        {"q3_z", "{q3, z}_DJ", q3, z, [](const VectorXd& x) { return -x[2]; },
         [](const VectorXd& x) { return -x[2]; }},
        {"q1_z", "{q1, z}_DJ on M_f", q1, z, [&](const VectorXd& x) { return -x[0] + psi[1].eval(x) / F(x); },
         [](const VectorXd& x) { return -x[0]; }},
        {"q2_z", "{q2, z}_DJ on M_f", q2, z, [&](const VectorXd& x) { return -x[1] - psi[1].eval(x) / F(x); },
         [](const VectorXd& x) { return -x[1]; }},
    };
    for (const auto& r : routes) {
      const auto cm = [&](const VectorXd& x) { return dj.bracket(r.f, r.g, x); };
      brackets.near_all("E1.DJ." + r.id + ".c_matrix", r.quantity + " by the C-matrix formula at 20 samples of M_f",
                        mf, r.expected, cm, 1e-9, inv::dirac);
      brackets.near_all("E1.DJ." + r.id + ".display", r.quantity + " by the per-coordinate display", mf,
                        r.expected, r.display, 1e-9, inv::dirac);
      brackets.below("E1.DJ." + r.id + ".agree", r.quantity + ": max |C-matrix route - display route|",
                     max_over(mf, [&](const VectorXd& x) { return cm(x) - r.display(x); }), 1e-9, inv::dirac);
    }
    brackets.near("E1.DJ.q3_z.at_0.7", "{q3, z}_DJ at q3 = 0.7", -0.7, dj.bracket(q3, z, mf.front()), 1e-9,
                  inv::dirac);
    brackets.below("E1.casimir", "max |{psi_a, f}_DJ| over coordinates f at samples of M_f",
                   max_over(mf,
                            [&](const VectorXd& x) {
                              double w = 0.0;
                              for (const auto& f : {q1, q2, q3, p1, p2, p3, z})
                                for (const auto& c : obs) w = std::max(w, std::abs(dj.bracket(c, f, x)));
                              return w;
                            }),
                   1e-9, inv::casimir);
    brackets.below("E1.R_DJ", "max |R_DJ(psi_a)| at samples of M_f",
                   max_over(mf,
                            [&](const VectorXd& x) {
                              return std::max(std::abs(dj.reeb(obs[0], x)), std::abs(dj.reeb(obs[1], x)));
                            }),
                   1e-9, inv::reeb_dj);
    const Observable h = Observable::field(ex.hamiltonian(), "H");
    brackets.near_all(
        "E1.evolve.q3", "q3 rate from the Dirac-Jacobi evolution against p3 / mu", mf,
        [&](const VectorXd& x) { return x[5] / ex.mu; }, [&](const VectorXd& x) { return dj.evolve(h, q3, x); },
        1e-9, inv::evolution);
  });

  return finish("example1", seed, {structure, constraints, classification, brackets, second});
}

Bundle example2(std::uint64_t seed) {
  const examples::Example2 ex;
  Sampler rng(seed);
  Table structure("structure"), constraints("constraints"), classification("classification"), brackets("brackets"),
      second("second_order");
  const LagrangianSystem sys(ex.lagrangian());
  const auto points = rng.points(5, 20);

  structure_rows(structure, "E2", sys, 3, points, unit(5, 2) - unit(5, 3));
  structure.guard("E2.characteristic", inv::characteristic, [&] {
    const VectorXd w = unit(5, 2) - unit(5, 3);
    structure.equal("E2.characteristic.dim", "dimension of ker flat at a random point", 2,
                    sys.structure().at(points.front()).characteristic().cols(), inv::characteristic);
    structure.below("E2.characteristic.contains", "max distance of d_v1 - d_v2 from ker flat",
                    max_over(points,
                             [&](const VectorXd& x) {
                               const MatrixXd c = sys.structure().at(x).characteristic();
                               return (projector(c) * w - w).norm();
                             }),
                    1e-8, inv::characteristic);
    structure.near_all(
        "E2.fiber_v1", "fiber derivative of v1 along the kernel frame", points, [](const VectorXd&) { return 1.0; },
        [&](const VectorXd& x) {
          return sys.fiber_constancy(ScalarField::parse("v1", sys.chart()), std::vector<VectorXd>{x});
        },
        1e-12, inv::fiber);
  });
  pullback_rows(structure, "E2", sys, rng);

  // Seeds near the final set: q2 away from 0, z close to 1.
  std::vector<VectorXd> seeds;
  for (int k = 0; k < 20; ++k) {
    VectorXd x = rng.point(5);
    x[1] = 0.5 + 0.5 * std::abs(x[1]);
    x[4] = 1 + 0.1 * x[4];
    seeds.push_back(x);
  }
  const ScalarField phi1 = ex.listed_phi1(), phi2 = ex.listed_phi2();
  // Points of the listed zero sets {z = 1} and {z = 1, phi2 = 0}.
  std::vector<VectorXd> level1_points, level2_points;
  for (int k = 0; k < 20; ++k) {
    VectorXd x = rng.point(5);
    x[4] = 1.0;
    level1_points.push_back(x);
    const double s = x[2] + x[3];
    x[0] = -0.5 * s * s - x[1] * (x[4] - 2);
    level2_points.push_back(x);
  }
  constraints.guard("E2.tower", inv::tower, [&] {
    const ConstraintSystem cs = lagrangian_system(sys);
    const auto tower = run_algorithm(cs, seeds);
    constraints.equal("E2.tower.stabilized", "tower stabilizes", true, tower.stabilized, inv::tower);
    constraints.equal("E2.tower.levels", "number of nontrivial levels", 2, tower.levels.size(), inv::tower);
    if (!tower.levels.empty()) {
      const auto& g1 = tower.levels[0].front();
      constraints.below("E2.tower.level1.membership", "max |z - 1| at final-set samples",
                        max_over(tower.samples, [&](const VectorXd& x) { return phi1.eval(x); }), 1e-8, inv::tower);
      constraints.below("E2.tower.level1.converse", "max |level-1 constraint| at 20 points of {z = 1}",
                        max_over(level1_points, [&](const VectorXd& x) { return g1.value(x); }), 1e-8, inv::tower);
    }
    if (tower.levels.size() > 1) {
      const auto& g2 = tower.levels[1].front();
      constraints.below("E2.tower.level2.membership",
                        "max |(v1+v2)^2/2 + q1 + q2 (z - 2)| at final-set samples",
                        max_over(tower.samples, [&](const VectorXd& x) { return phi2.eval(x); }), 1e-8, inv::tower);
      constraints.below("E2.tower.level2.converse",
                        "max |level-2 constraint| at 20 points of {z = 1, (v1+v2)^2/2 + q1 + q2 (z - 2) = 0}",
                        max_over(level2_points, [&](const VectorXd& x) { return g2.value(x); }), 1e-8, inv::tower);
    }
    const double tangency = reeb_tangency_test(tower, tower.samples);
    constraints.add("E2.tangency", "Reeb tangency test on the final set (bounded away from 0)", "> 0.001", tangency,
                    1e-3, tangency > 1e-3, inv::tangency);

    const auto hat = run_algorithm(cs, seeds, Variant::reeb_tangency);
    constraints.equal("E2.reeb_variant.infeasible", "Reeb variant issues an infeasibility certificate", true,
                      hat.certificate.has_value(), inv::reeb_variant);
    if (hat.certificate) {
      double worst = 0.0, got = 1.0;
      for (double v : hat.certificate->values)
        if (std::abs(v - 1.0) >= worst) {
          worst = std::abs(v - 1.0);
          got = v;
        }
      constraints.near("E2.reeb_variant.constant", "value of the certified constant constraint at the seeds", 1.0, got,
                       1e-9, inv::reeb_variant);
    }

    // Second-order checks need gradients beyond what nested differences of
    // the generated constraints resolve, so they run on the closed forms
    // after those are matched against the generated set.
    const auto closed = ex.final_set();
    constraints.below("E2.closed_form.membership", "max |closed-form final set| at final-set samples",
                      max_over(tower.samples,
                               [&](const VectorXd& x) {
                                 double w = 0.0;
                                 for (const auto& c : closed) w = std::max(w, std::abs(c.eval(x)));
                                 return w;
                               }),
                      1e-6, inv::tower);
    const ConstraintSystem exact(sys.structure(), sys.energy_field(), closed);
    const auto exact_tower = run_algorithm(exact, tower.samples);
    constraints.equal("E2.closed_form.closed", "closed-form final set generates no further levels", 0,
                      exact_tower.levels.size(), inv::tower);
    constraints.below("E2.closed_form.converse", "max |generated constraints| at points of the closed-form set",
                      max_over(exact_tower.samples, [&](const VectorXd& x) { return max_abs(tower.values(x)); }),
                      1e-6, inv::tower);
    motion_rows(constraints, second, "E2", sys, exact_tower, 1, "closed-form final-set");
  });

  // Hamiltonian side with the listed psi1, psi2, psi3.
  const Chart chart = ex.momentum_chart();
  const BracketContext ctx = BracketContext::canonical(chart);
  const auto psi = ex.constraints();
  const std::vector<Observable> obs = {Observable::field(psi[0], "psi1"), Observable::field(psi[1], "psi2"),
                                       Observable::field(psi[2], "psi3")};
  std::vector<VectorXd> mf;
  for (int k = 0; k < 20; ++k) {
    VectorXd x = rng.point(5);
    x[3] = x[2];
    x[4] = 1.0;
    x[0] = x[1] - 0.5 * x[2] * x[2];
    mf.push_back(x);
  }
  const auto anywhere = rng.points(5, 20);
  const std::vector<VectorXd> mf10(mf.begin(), mf.begin() + 10);

  brackets.guard("E2.jacobi", inv::jacobi, [&] {
    brackets.near_all(
        "E2.psi1_psi2", "{psi1, psi2} at 20 random points", anywhere, [](const VectorXd&) { return 0.0; },
        [&](const VectorXd& x) { return jacobi_bracket(ctx, obs[0], obs[1], x); }, 1e-9, inv::jacobi);
    brackets.near_all(
        "E2.psi1_psi3", "{psi1, psi3} against 3 - z at 20 random points", anywhere,
        [](const VectorXd& x) { return 3.0 - x[4]; },
        [&](const VectorXd& x) { return jacobi_bracket(ctx, obs[0], obs[2], x); }, 1e-9, inv::jacobi);
    brackets.near_all(
        "E2.psi1_psi3.z1", "{psi1, psi3} at 20 samples of M_f (z = 1)", mf, [](const VectorXd&) { return 2.0; },
        [&](const VectorXd& x) { return jacobi_bracket(ctx, obs[0], obs[2], x); }, 1e-9, inv::jacobi);
    brackets.near_all(
        "E2.psi2_psi3", "{psi2, psi3} against -2 (q2 - q1) at 10 samples of M_f", mf10,
        [](const VectorXd& x) { return -2.0 * (x[1] - x[0]); },
        [&](const VectorXd& x) { return jacobi_bracket(ctx, obs[1], obs[2], x); }, 1e-9, inv::jacobi);
  });

  classification.guard("E2.classify", inv::classify, [&] {
    const auto cls = classify(ctx, obs, mf);
    const auto [rlo, rhi] = std::minmax_element(cls.ranks.begin(), cls.ranks.end());
    classification.equal("E2.classify.rank", "rank of C at 20 samples of M_f", 2,
                         *rlo == *rhi ? json(*rlo) : json("varies"), inv::classify);
    auto names = [&](const std::vector<std::size_t>& idx) {
      json out = json::array();
      for (auto i : idx) out.push_back(obs[i].name());
      return out;
    };
    classification.equal("E2.classify.second_class", "second-class family", json::array({"psi1", "psi3"}),
                         names(cls.second_class), inv::classify);
    classification.equal("E2.classify.first_class", "first-class family", json::array({"psi2"}),
                         names(cls.first_class), inv::classify);
    double fc = 0.0;
    for (double r : cls.first_class_residuals) fc = std::max(fc, r);
    classification.below("E2.first_class.residual", "max |{chi, psi_a}| at samples of M_f", fc, 1e-6,
                         inv::first_class);

    const DiracJacobi dj(ctx, obs, cls);
    if (cls.first_class.size() != 1) return;
    const Observable chi = dj.first_class(0);
    const ScalarField combo = ex.first_class_combination();
    classification.near_all(
        "E2.first_class.value", "chi against (p1 - p2)(q2 - q1) + z - 1 at samples of M_f", mf,
        [&](const VectorXd& x) { return combo.eval(x); }, [&](const VectorXd& x) { return chi.value(x); }, 1e-9,
        inv::first_class);
    classification.below("E2.first_class.gradient", "max |d chi - d((p1 - p2)(q2 - q1) + z - 1)| on M_f",
                         max_over(mf,
                                  [&](const VectorXd& x) {
                                    return max_abs(chi.jet(x, 1).gradient - combo.gradient(x));
                                  }),
                         1e-9, inv::first_class);

    brackets.near_all(
        "E2.R_DJ.chi", "R_DJ(chi) against R(chi) at samples of M_f", mf,
        [&](const VectorXd& x) { return ctx.local(x).reeb_of(chi.jet(x, 1)); },
        [&](const VectorXd& x) { return dj.reeb(chi, x); }, 1e-9, inv::reeb_dj);
    const Observable h = Observable::field(ex.hamiltonian(), "H");
    const Observable z = Observable::field(ScalarField::parse("z", chart), "z");
    brackets.near_all(
        "E2.evolve.z", "z rate from the Dirac-Jacobi evolution with zero multipliers at samples of M_f", mf,
        [](const VectorXd&) { return 0.0; }, [&](const VectorXd& x) { return dj.evolve(h, z, x); }, 1e-9,
        inv::evolution);
    brackets.below("E2.evolve.second_class", "max rate of psi1 and psi3 at samples of M_f",
                   max_over(mf,
                            [&](const VectorXd& x) {
                              return std::max(std::abs(dj.evolve(h, obs[0], x)), std::abs(dj.evolve(h, obs[2], x)));
                            }),
                   1e-9, inv::evolution);
  });

  return finish("example2", seed, {structure, constraints, classification, brackets, second});
}

}  // namespace

Bundle reproduce(std::string_view example, std::uint64_t seed) {
  if (example == "example1") return example1(seed);
  if (example == "example2") return example2(seed);
  throw ConfigError("unknown example '" + std::string(example) + "' (expected example1 or example2)");
}

}  // namespace contactum::app
