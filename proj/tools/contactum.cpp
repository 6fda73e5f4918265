#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "contactum/app.hpp"
#include "contactum/error.hpp"

namespace app = contactum::app;

namespace {

Eigen::VectorXd parse_list(const std::string& text) {
  std::vector<double> values;
  std::stringstream s(text);
  std::string item;
  while (std::getline(s, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
    if (used == 0 || used != item.size()) throw contactum::ConfigError("--x0: cannot read '" + item + "' as a number");
    values.push_back(v);
  }
  return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

int run_analyze(const std::string& config, const std::string& out, const std::string& variant,
                const app::AnalyzeOptions& base) {
  app::AnalyzeOptions opt = base;
  opt.variant = variant == "reeb" ? contactum::Variant::reeb_tangency : contactum::Variant::plain;
  const auto report = app::analyze(app::load_config(config), opt);
  const std::string text = app::dump(report.body);
  if (out.empty()) {
    std::cout << text;
  } else {
    app::write_atomic(out, text);
  }
  if (report.exit_code != app::exit_code::ok)
    std::cerr << "contactum: " << report.body.value("status", "") << ": " << report.body.value("error", "") << "\n";
  return report.exit_code;
}

int run_integrate(const std::string& config, const std::string& out, const app::IntegrateOptions& opt) {
  const auto cfg = app::load_config(config);
  try {
    const auto tr = app::integrate(cfg, opt);
    if (out.empty()) {
      tr.write_csv(std::cout);
    } else {
      app::write_atomic(out, tr.csv());
    }
    std::cerr << app::trajectory_summary(tr) << "\n";
  } catch (const contactum::SingularHessian& e) {
    std::cerr << "contactum: singular velocity Hessian at t = " << contactum::format_real(e.time()) << ": "
              << e.what() << "\n";
    return app::exit_code::dynamics;
  } catch (const contactum::NonFiniteState& e) {
    std::cerr << "contactum: non-finite state at t = " << contactum::format_real(e.time()) << "\n";
    return app::exit_code::dynamics;
  }
  return app::exit_code::ok;
}

int run_reproduce(const std::string& example, const std::string& out, std::uint64_t seed) {
  const auto bundle = app::reproduce(example, seed);
  const std::filesystem::path dir = out.empty() ? std::filesystem::path(example) : std::filesystem::path(out);
  for (const auto& [name, doc] : bundle.files) app::write_atomic(dir / name, app::dump(doc));
  const auto& summary = bundle.files.at("summary.json");
  std::cout << example << ": " << summary["passed"].get<std::size_t>() << "/" << summary["rows"].get<std::size_t>()
            << " rows PASS\n";
  for (const auto& f : summary["failures"])
    std::cout << "FAIL " << f["table"].get<std::string>() << " " << f["id"].get<std::string>() << " ("
              << f["invariant"].get<std::string>() << ")\n";
  return bundle.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Contact Hamiltonian and Lagrangian systems: constraint algorithm, brackets, integration"};
  cli.require_subcommand(1);

  std::string config, out, variant = "plain", x0, example;
  std::optional<std::uint64_t> seed;
  std::optional<double> rank_tol, fd_step, t, dt;

  auto* analyze = cli.add_subcommand("analyze", "Run the constraint algorithm and write a JSON report");
  analyze->add_option("config", config, "System config (JSON)")->required();
  analyze->add_option("--out", out, "Report path (stdout when omitted)");
  analyze->add_option("--variant", variant, "Constraint algorithm variant")->check(CLI::IsMember({"plain", "reeb"}));
  analyze->add_option("--seed", seed, "Sampling seed (overrides the config)");
  analyze->add_option("--rank-tol", rank_tol, "Rank tolerance");
  analyze->add_option("--fd-step", fd_step, "Relative finite-difference step");

  auto* integrate = cli.add_subcommand("integrate", "Integrate the dynamics and write a CSV trajectory");
  integrate->add_option("config", config, "System config (JSON)")->required();
  integrate->add_option("--out", out, "CSV path (stdout when omitted)");
  integrate->add_option("--x0", x0, "Initial state, comma separated (q, p or v, z)");
  integrate->add_option("--t", t, "Final time");
  integrate->add_option("--dt", dt, "Step size");

  auto* reproduce = cli.add_subcommand("reproduce", "Check the worked examples and write a report bundle");
  reproduce->add_option("example", example, "example1 or example2")->required();
  reproduce->add_option("--out", out, "Output directory (default: the example id)");
  reproduce->add_option("--seed", seed, "Sampling seed");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? 0 : app::exit_code::usage;
  }

  try {
    if (*analyze) {
      app::AnalyzeOptions opt;
      opt.seed = seed;
      opt.rank_tol = rank_tol;
      opt.fd_step = fd_step;
      return run_analyze(config, out, variant, opt);
    }
    if (*integrate) {
      app::IntegrateOptions opt;
      if (!x0.empty()) opt.x0 = parse_list(x0);
      opt.t = t;
      opt.dt = dt;
      return run_integrate(config, out, opt);
    }
    return run_reproduce(example, out, seed.value_or(0));
  } catch (const contactum::ConfigError& e) {
    std::cerr << "contactum: config error: " << e.what() << "\n";
    return app::exit_code::usage;
  } catch (const std::exception& e) {
    std::cerr << "contactum: " << e.what() << "\n";
    return app::exit_code::usage;
  }
}
