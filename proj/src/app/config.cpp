#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "contactum/app.hpp"
#include "contactum/error.hpp"

namespace contactum::app {

namespace {

[[noreturn]] void field_error(const std::string& path, const std::string& what) {
  throw ConfigError("field '" + path + "': " + what);
}

std::string at(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

double number(const json& j, const std::string& path) {
  if (!j.is_number()) field_error(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) field_error(path, "expected a finite number");
  return v;
}

double positive(const json& j, const std::string& path) {
  const double v = number(j, path);
  if (!(v > 0)) field_error(path, "must be positive");
  return v;
}

std::uint64_t count(const json& j, const std::string& path) {
  if (!j.is_number_integer()) field_error(path, "expected an integer");
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  const auto v = j.get<std::int64_t>();
  if (v < 0) field_error(path, "must be nonnegative");
  return static_cast<std::uint64_t>(v);
}

std::string text(const json& j, const std::string& path) {
  if (!j.is_string()) field_error(path, "expected a string");
  return j.get<std::string>();
}

const json& array(const json& j, const std::string& path) {
  if (!j.is_array()) field_error(path, "expected an array");
  return j;
}

VectorXd point(const json& j, const std::string& path, std::size_t dim) {
  array(j, path);
  if (j.size() != dim)
    field_error(path, "expected " + std::to_string(dim) + " coordinates, got " + std::to_string(j.size()));
  VectorXd x(static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < dim; ++i) x[static_cast<Eigen::Index>(i)] = number(j[i], at(path, i));
  return x;
}

void check_expression(const std::string& expression, const Chart& chart, const expr::Params& params,
                      const std::string& path) {
  try {
    ScalarField::parse(expression, chart, params);
  } catch (const Error& e) {
    field_error(path, e.what());
  }
}

std::pair<std::size_t, std::size_t> line_column(std::string_view s, std::size_t byte) {
  std::size_t line = 1, column = 1;
  for (std::size_t i = 0; i + 1 < byte && i < s.size(); ++i) {
    if (s[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return {line, column};
}

const std::set<std::string>& known_fields() {
  static const std::set<std::string> k = {"kind",       "n",          "names",     "expression",
                                          "params",     "seeds",      "seed_box",  "samples",
                                          "seed",       "tolerances", "user_constraints",
                                          "observables", "x0",        "t",         "dt"};
  return k;
}

}  // namespace

Chart SystemConfig::chart() const {
  const auto fiber = kind == SystemKind::lagrangian ? FiberKind::velocity : FiberKind::momentum;
  if (names.empty()) return Chart::standard(n, fiber);
  return Chart(names, fiber);
}

ScalarField SystemConfig::function() const { return ScalarField::parse(expression, chart(), params); }

std::vector<ScalarField> SystemConfig::constraints(bool ambient) const {
  std::vector<ScalarField> out;
  const Chart c = chart();
  for (const auto& u : user_constraints)
    if ((u.level == 0) == ambient) out.push_back(ScalarField::parse(u.expression, c, params));
  return out;
}

std::vector<VectorXd> SystemConfig::seed_points() const {
  if (!seeds.empty()) return seeds;
  const std::size_t dim = 2 * n + 1;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<VectorXd> out;
  for (std::size_t k = 0; k < samples; ++k) {
    VectorXd x(static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < dim; ++i) {
      const auto [lo, hi] = seed_box.empty() ? std::pair{-1.0, 1.0} : seed_box[i];
      x[static_cast<Eigen::Index>(i)] = lo + (hi - lo) * u(rng);
    }
    out.push_back(x);
  }
  return out;
}

SystemConfig parse_config(std::string_view source) {
  json doc;
  try {
    doc = json::parse(source.begin(), source.end());
  } catch (const json::parse_error& e) {
    const auto [line, column] = line_column(source, e.byte);
    std::string what = e.what();
    if (const auto p = what.find("error: "); p != std::string::npos) what = what.substr(p + 7);
    throw ConfigError("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + what);
  }
  if (!doc.is_object()) throw ConfigError("line 1, column 1: config must be a JSON object");
  for (const auto& [key, value] : doc.items())
    if (!known_fields().count(key)) field_error(key, "unknown field");

  SystemConfig cfg;
  if (!doc.contains("kind")) field_error("kind", "missing");
  const std::string kind = text(doc["kind"], "kind");
  if (kind == "lagrangian") {
    cfg.kind = SystemKind::lagrangian;
  } else if (kind == "hamiltonian") {
    cfg.kind = SystemKind::hamiltonian;
  } else {
    field_error("kind", "expected \"lagrangian\" or \"hamiltonian\", got \"" + kind + "\"");
  }

  if (!doc.contains("n")) field_error("n", "missing");
  cfg.n = count(doc["n"], "n");
  if (cfg.n < 1) field_error("n", "must be at least 1");
  if (cfg.n > 64) field_error("n", "must be at most 64");
  const std::size_t dim = 2 * cfg.n + 1;

  if (doc.contains("names")) {
    const auto& names = array(doc["names"], "names");
    if (names.size() != dim) field_error("names", "expected " + std::to_string(dim) + " names");
    for (std::size_t i = 0; i < names.size(); ++i) cfg.names.push_back(text(names[i], at("names", i)));
    try {
      cfg.chart();
    } catch (const Error& e) {
      field_error("names", e.what());
    }
  }

  if (doc.contains("params")) {
    if (!doc["params"].is_object()) field_error("params", "expected an object");
    for (const auto& [key, value] : doc["params"].items()) cfg.params[key] = number(value, "params." + key);
  }

  if (!doc.contains("expression")) field_error("expression", "missing");
  cfg.expression = text(doc["expression"], "expression");
  const Chart chart = cfg.chart();
  check_expression(cfg.expression, chart, cfg.params, "expression");

  if (doc.contains("seeds")) {
    const auto& seeds = array(doc["seeds"], "seeds");
    for (std::size_t i = 0; i < seeds.size(); ++i) cfg.seeds.push_back(point(seeds[i], at("seeds", i), dim));
  }
  if (doc.contains("seed_box")) {
    const auto& box = array(doc["seed_box"], "seed_box");
    if (box.size() != dim) field_error("seed_box", "expected " + std::to_string(dim) + " intervals");
    for (std::size_t i = 0; i < dim; ++i) {
      const VectorXd r = point(box[i], at("seed_box", i), 2);
      if (!(r[0] <= r[1])) field_error(at("seed_box", i), "expected [lo, hi] with lo <= hi");
      cfg.seed_box.emplace_back(r[0], r[1]);
    }
  }
  if (doc.contains("samples")) {
    cfg.samples = count(doc["samples"], "samples");
    if (cfg.samples < 1) field_error("samples", "must be at least 1");
  }
  if (doc.contains("seed")) cfg.seed = count(doc["seed"], "seed");

  if (doc.contains("tolerances")) {
    const auto& tol = doc["tolerances"];
    if (!tol.is_object()) field_error("tolerances", "expected an object");
    for (const auto& [key, value] : tol.items()) {
      const std::string path = "tolerances." + key;
      if (key == "rank_tol") {
        cfg.tolerances.rank_tol = positive(value, path);
      } else if (key == "fd_step") {
        cfg.tolerances.fd_step = positive(value, path);
      } else if (key == "residual_tol") {
        cfg.tolerances.residual_tol = positive(value, path);
      } else {
        field_error(path, "unknown field");
      }
    }
  }

  if (doc.contains("user_constraints")) {
    const auto& list = array(doc["user_constraints"], "user_constraints");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string path = at("user_constraints", i);
      UserConstraint u;
      if (list[i].is_string()) {
        u.expression = list[i].get<std::string>();
      } else if (list[i].is_object()) {
        if (!list[i].contains("expression")) field_error(path + ".expression", "missing");
        u.expression = text(list[i]["expression"], path + ".expression");
        if (list[i].contains("level")) u.level = static_cast<int>(count(list[i]["level"], path + ".level"));
      } else {
        field_error(path, "expected a string or an object");
      }
      check_expression(u.expression, chart, cfg.params, path + ".expression");
      cfg.user_constraints.push_back(u);
    }
  }

  if (doc.contains("observables")) {
    const auto& list = array(doc["observables"], "observables");
    for (std::size_t i = 0; i < list.size(); ++i) {
      cfg.observables.push_back(text(list[i], at("observables", i)));
      check_expression(cfg.observables.back(), chart, cfg.params, at("observables", i));
    }
  }

  if (doc.contains("x0")) cfg.x0 = point(doc["x0"], "x0", dim);
  if (doc.contains("t")) {
    cfg.t = number(doc["t"], "t");
    if (*cfg.t < 0) field_error("t", "must be nonnegative");
  }
  if (doc.contains("dt")) cfg.dt = positive(doc["dt"], "dt");
  return cfg;
}

SystemConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  try {
    return parse_config(s.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace contactum::app
