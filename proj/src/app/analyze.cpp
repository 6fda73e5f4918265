#include <algorithm>
#include <cmath>
#include <sstream>

#include "contactum/app.hpp"
#include "contactum/brackets.hpp"
#include "contactum/error.hpp"
#include "contactum/geometry.hpp"
#include "contactum/lagrangian.hpp"

namespace contactum::app {

namespace {

constexpr double tangency_tol = 1e-6;
constexpr double classification_tol = 1e-6;
constexpr double deviation_tol = 1e-9;
constexpr double fiber_tol = 1e-9;
constexpr std::size_t table_samples = 3;

const char* status_of(bool ok) { return ok ? "PASS" : "FAIL"; }

ConstraintConfig constraint_config(const Tolerances& t) {
  ConstraintConfig c;
  c.rank_tol = t.rank_tol;
  c.fd_step = t.fd_step;
  c.residual_tol = t.residual_tol;
  return c;
}

json tower_json(const ConstraintTower& t) {
  json ambient = json::array();
  for (const auto& c : t.ambient) ambient.push_back({{"id", c.id}, {"expression", c.expression.value_or("")}});
  json levels = json::array();
  for (const auto& level : t.levels) {
    json items = json::array();
    for (const auto& c : level) {
      json item = {{"id", c.id}, {"source", c.source}};
      item["gradient"] = c.method() == GradientMethod::analytic ? "analytic" : "finite_difference";
      items.push_back(item);
    }
    levels.push_back({{"level", level.front().level}, {"constraints", items}});
  }
  return {{"ambient", ambient},
          {"levels", levels},
          {"level_count", t.levels.size()},
          {"rank_history", t.rank_history},
          {"steps", t.steps},
          {"stabilized", t.stabilized},
          {"samples", t.samples.size()},
          {"dropped_seeds", t.dropped_seeds}};
}

json certificate_json(const InfeasibilityCertificate& c) {
  const auto [lo, hi] = std::minmax_element(c.values.begin(), c.values.end());
  json out = {{"constraint_id", c.constraint_id},
              {"level", c.level},
              {"source", c.source},
              {"values", c.values},
              {"gradient_residuals", c.grad_residuals}};
  if (!c.values.empty()) {
    out["constant_value"] = *lo;
    out["spread"] = *hi - *lo;
  }
  return out;
}

std::vector<VectorXd> head(const std::vector<VectorXd>& v, std::size_t k) {
  return {v.begin(), v.begin() + static_cast<std::ptrdiff_t>(std::min(k, v.size()))};
}

json solutions_json(const ConstraintTower& tower, double tol) {
  const auto& samples = tower.samples;
  std::vector<json> rows(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) {
    try {
      const auto m = solve_motion(tower, samples[i]);
      rows[i] = {{"residual", m.residual},
                 {"tangency", m.tangency},
                 {"freedom_dim", m.freedom.cols()},
                 {"status", status_of(m.residual < tol && m.tangency < tangency_tol)}};
    } catch (const Error& e) {
      rows[i] = {{"error", e.what()}, {"status", "FAIL"}};
    }
  });
  double worst = 0.0;
  bool ok = true;
  for (const auto& r : rows) {
    if (r.contains("residual")) worst = std::max(worst, r["residual"].get<double>());
    ok = ok && r["status"] == "PASS";
  }
  return {{"tol", tol}, {"tangency_tol", tangency_tol}, {"max_residual", worst}, {"status", status_of(ok)},
          {"samples", rows}};
}

json second_order_json(const LagrangianSystem& sys, const ConstraintTower& tower, double tol) {
  const auto& samples = tower.samples;
  std::vector<json> rows(samples.size());
  const VectorFieldFn field = [&](const VectorXd& x) { return solve_motion(tower, x, section_manifold_tol).field; };
  parallel_for(samples.size(), [&](std::size_t i) {
    const VectorXd& x = samples[i];
    try {
      const VectorXd y = sys.legendre(x).target;
      const auto sec = sys.second_order_section(field, y, x, tol);
      const double dev = (sys.legendre(x).jacobian * sode_deviation(sys.chart(), field(x), x)).norm();
      const bool ok = sec.sode_defect < tol && sec.legendre_defect < tol && sec.fiber_defect < tol &&
                      dev < deviation_tol;
      rows[i] = {{"x_tilde", to_json(sec.x_tilde)},
                 {"sode_defect", sec.sode_defect},
                 {"legendre_defect", sec.legendre_defect},
                 {"fiber_defect", sec.fiber_defect},
                 {"deviation", dev},
                 {"status", status_of(ok)}};
    } catch (const Error& e) {
      rows[i] = {{"error", e.what()}, {"status", "FAIL"}};
    }
  });
  bool ok = true;
  for (const auto& r : rows) ok = ok && r["status"] == "PASS";
  return {{"tol", tol}, {"deviation_tol", deviation_tol}, {"status", status_of(ok)}, {"samples", rows}};
}

json hamiltonian_brackets(const SystemConfig& cfg, const Structure& structure, const ScalarField& h,
                          const ConstraintTower& tower, json& report) {
  const BracketContext ctx(structure);
  const Chart chart = cfg.chart();
  std::vector<Observable> constraints;
  for (const auto& c : tower.all()) {
    if (c.expression) {
      constraints.push_back(Observable::field(ScalarField::parse(*c.expression, chart, cfg.params), c.id));
    } else {
      constraints.push_back(Observable::constraint(c));
    }
  }
  const auto samples = tower.samples;
  const Classification cls = classify(ctx, constraints, samples, cfg.tolerances.rank_tol);
  auto ids = [&](const std::vector<std::size_t>& idx) {
    json out = json::array();
    for (auto i : idx) out.push_back(constraints[i].name());
    return out;
  };
  json c_samples = json::array();
  for (std::size_t k = 0; k < std::min(table_samples, cls.c_samples.size()); ++k)
    c_samples.push_back(to_json(cls.c_samples[k]));
  bool fc_ok = true;
  for (double r : cls.first_class_residuals) fc_ok = fc_ok && r < classification_tol;
  report["classification"] = {{"constraints", ids([&] {
                                 std::vector<std::size_t> all(constraints.size());
                                 for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
                                 return all;
                               }())},
                              {"second_class", ids(cls.second_class)},
                              {"first_class", ids(cls.first_class)},
                              {"ranks", cls.ranks},
                              {"c_samples", c_samples},
                              {"first_class_residuals", cls.first_class_residuals},
                              {"tol", classification_tol},
                              {"status", status_of(fc_ok)}};

  const DiracJacobi dj(ctx, constraints, cls);
  std::vector<Observable> obs;
  if (cfg.observables.empty()) {
    for (std::size_t i = 0; i < chart.dim(); ++i)
      obs.push_back(Observable::field(ScalarField::coordinate(chart, i), chart.names()[i]));
  } else {
    for (const auto& e : cfg.observables) obs.push_back(Observable::field(ScalarField::parse(e, chart, cfg.params), e));
  }
  const auto points = head(samples, table_samples);
  json table = json::array();
  for (std::size_t i = 0; i < obs.size(); ++i)
    for (std::size_t j = i + 1; j < obs.size(); ++j) {
      json jac = json::array(), dir = json::array();
      for (const auto& x : points) {
        jac.push_back(jacobi_bracket(ctx, obs[i], obs[j], x));
        dir.push_back(dj.bracket(obs[i], obs[j], x));
      }
      table.push_back({{"f", obs[i].name()}, {"g", obs[j].name()}, {"jacobi", jac}, {"dirac_jacobi", dir}});
    }
  json evolution = json::array();
  const Observable ham = Observable::field(h, "H");
  for (const auto& f : obs) {
    json values = json::array();
    for (const auto& x : points) values.push_back(dj.evolve(ham, f, x));
    evolution.push_back({{"f", f.name()}, {"rate", values}});
  }
  json pts = json::array();
  for (const auto& x : points) pts.push_back(to_json(x));
  return {{"points", pts}, {"pairs", table}, {"evolution", evolution}};
}

}  // namespace

Report analyze(SystemConfig cfg, const AnalyzeOptions& opt) {
  if (opt.seed) cfg.seed = *opt.seed;
  if (opt.rank_tol) cfg.tolerances.rank_tol = *opt.rank_tol;
  if (opt.fd_step) cfg.tolerances.fd_step = *opt.fd_step;
  if (!(cfg.tolerances.rank_tol > 0)) throw ConfigError("--rank-tol must be positive");
  if (!(cfg.tolerances.fd_step > 0)) throw ConfigError("--fd-step must be positive");

  Report rep;
  json& r = rep.body;
  const Chart chart = cfg.chart();
  r["schema"] = 1;
  r["command"] = "analyze";
  r["seed"] = cfg.seed;
  r["variant"] = opt.variant == Variant::plain ? "plain" : "reeb";
  r["system"] = {{"kind", cfg.kind == SystemKind::lagrangian ? "lagrangian" : "hamiltonian"},
                 {"n", cfg.n},
                 {"coordinates", chart.names()},
                 {"expression", cfg.expression},
                 {"params", cfg.params}};
  r["tolerances"] = {{"rank_tol", cfg.tolerances.rank_tol},
                     {"fd_step", cfg.tolerances.fd_step},
                     {"residual_tol", cfg.tolerances.residual_tol}};

  auto fail = [&](const std::string& status, const std::string& what, int code) {
    r["status"] = status;
    r["error"] = what;
    r["exit_code"] = code;
    rep.exit_code = code;
    return rep;
  };

  try {
    const ScalarField f = cfg.function();
    const auto seeds = cfg.seed_points();
    r["seeds"] = seeds.size();
    std::optional<LagrangianSystem> lag;
    if (cfg.kind == SystemKind::lagrangian) lag.emplace(f);
    const Structure structure = lag ? lag->structure() : Structure::canonical_contact(chart);
    const ScalarField h = lag ? lag->energy_field() : f;

    const int cls = form_class(structure, seeds, cfg.tolerances.rank_tol);
    r["structure"] = {{"class", cls},
                      {"kind", static_cast<std::size_t>(cls) == chart.dim() ? "contact" : "precontact"},
                      {"rank_tol", cfg.tolerances.rank_tol},
                      {"samples", seeds.size()}};
    if (lag) {
      const auto& x = seeds.front();
      r["legendre"] = {{"kernel_dim", lag->legendre_kernel(x, cfg.tolerances.rank_tol).cols()},
                       {"energy_fiber_constancy", lag->fiber_constancy(h, seeds, cfg.tolerances.rank_tol)},
                       {"tol", fiber_tol}};
    }

    const ConstraintSystem system(structure, h, cfg.constraints(true), ReebChoice{},
                                  constraint_config(cfg.tolerances));
    const ConstraintTower tower = run_algorithm(system, seeds, opt.variant);
    r["tower"] = tower_json(tower);
    if (tower.certificate) {
      r["certificate"] = certificate_json(*tower.certificate);
      return fail("empty_final_manifold", "constraint " + tower.certificate->constraint_id +
                                              " is a nonzero constant on the current set",
                  exit_code::empty_manifold);
    }
    r["certificate"] = nullptr;

    const double tangency = reeb_tangency_test(tower, tower.samples);
    r["reeb_tangency"] = {{"value", tangency}, {"tol", tangency_tol}, {"reeb_tangent", tangency < tangency_tol}};
    r["solutions"] = solutions_json(tower, cfg.tolerances.residual_tol);

    json checks = json::array();
    for (const auto& u : cfg.user_constraints) {
      if (u.level == 0) continue;
      const ScalarField g = ScalarField::parse(u.expression, chart, cfg.params);
      double worst = 0.0;
      for (const auto& x : tower.samples) worst = std::max(worst, std::abs(g.eval(x)));
      checks.push_back({{"expression", u.expression},
                        {"level", u.level},
                        {"max_abs_on_final_set", worst},
                        {"tol", cfg.tolerances.residual_tol},
                        {"status", status_of(worst < cfg.tolerances.residual_tol)}});
    }
    r["user_constraint_checks"] = checks;

    if (lag) {
      r["second_order"] = second_order_json(*lag, tower, cfg.tolerances.residual_tol);
    } else {
      r["brackets"] = hamiltonian_brackets(cfg, structure, h, tower, r);
    }
  } catch (const RankNotConstant& e) {
    r["ranks"] = e.ranks();
    return fail("rank_not_constant", e.what(), exit_code::rank);
  } catch (const NotOdd& e) {
    return fail("not_odd", e.what(), exit_code::rank);
  } catch (const MaxLevelsExceeded& e) {
    return fail("max_levels_exceeded", e.what(), exit_code::rank);
  } catch (const SingularCMatrix& e) {
    r["condition"] = e.condition();
    return fail("singular_c_matrix", e.what(), exit_code::rank);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    return fail("error", e.what(), exit_code::usage);
  }
  r["status"] = "ok";
  r["exit_code"] = exit_code::ok;
  return rep;
}

Trajectory integrate(const SystemConfig& cfg, const IntegrateOptions& opt) {
  const std::size_t dim = 2 * cfg.n + 1;
  const auto x0 = opt.x0 ? opt.x0 : cfg.x0;
  if (!x0) throw ConfigError("no initial state: give x0 in the config or --x0");
  if (static_cast<std::size_t>(x0->size()) != dim)
    throw ConfigError("x0 has " + std::to_string(x0->size()) + " entries, expected " + std::to_string(dim));
  const double t = opt.t.value_or(cfg.t.value_or(1.0));
  const double dt = opt.dt.value_or(cfg.dt.value_or(1e-3));
  if (!(dt > 0) || !std::isfinite(dt)) throw ConfigError("dt must be positive, got " + format_real(dt));
  if (!(t >= 0) || !std::isfinite(t)) throw ConfigError("t must be nonnegative, got " + format_real(t));

  const ScalarField f = cfg.function();
  std::vector<ScalarField> cs = cfg.constraints(true);
  for (auto& c : cfg.constraints(false)) cs.push_back(std::move(c));
  if (cfg.kind == SystemKind::hamiltonian) return integrate_contact(f, *x0, t, dt, cs);
  const auto n = static_cast<Eigen::Index>(cfg.n);
  return integrate_herglotz(f, x0->head(n), x0->segment(n, n), (*x0)[2 * n], t, dt, cs);
}

std::string trajectory_summary(const Trajectory& tr) {
  double residual = 0.0, eta = 0.0;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    residual = std::max(residual, tr.constraint_residual[i]);
    eta = std::max(eta, std::abs(tr.eta_x[i] + tr.energy[i]));
  }
  std::ostringstream s;
  s << "steps=" << (tr.size() - 1) << " t=" << format_real(tr.times.back())
    << " final_H=" << format_real(tr.energy.back()) << " max_constraint_residual=" << format_real(residual)
    << " max_eta_defect=" << format_real(eta);
  return s.str();
}

}  // namespace contactum::app
