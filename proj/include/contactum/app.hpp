#pragma once

// Configuration-driven front end: JSON system configs, analysis reports,
// trajectories and the two worked-example bundles.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "contactum/constraints.hpp"
#include "contactum/dynamics.hpp"
#include "contactum/expr.hpp"

namespace contactum::app {

using nlohmann::json;

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int usage = 1;
inline constexpr int empty_manifold = 2;
inline constexpr int rank = 3;
inline constexpr int dynamics = 4;
inline constexpr int reproduce_failed = 5;
}  // namespace exit_code

// Membership guard when evaluating a solution at x_tilde: nested finite
// differences in generated constraints leave noise of about 1e-7 there.
inline constexpr double section_manifold_tol = 1e-5;

struct Tolerances {
  double rank_tol = 1e-8;
  double fd_step = 5e-3;
  double residual_tol = 1e-8;
};

struct UserConstraint {
  std::string expression;
  int level = 0;  // 0: ambient, imposed from the start; >= 1: checked on the final set
};

enum class SystemKind { lagrangian, hamiltonian };

struct SystemConfig {
  SystemKind kind = SystemKind::hamiltonian;
  std::size_t n = 0;
  std::vector<std::string> names;
  std::string expression;
  expr::Params params;
  std::vector<VectorXd> seeds;
  std::vector<std::pair<double, double>> seed_box;  // per coordinate, default [-1, 1]
  std::size_t samples = 20;
  std::uint64_t seed = 0;
  Tolerances tolerances;
  std::vector<UserConstraint> user_constraints;
  std::vector<std::string> observables;
  std::optional<VectorXd> x0;
  std::optional<double> t;
  std::optional<double> dt;

  Chart chart() const;
  ScalarField function() const;
  std::vector<ScalarField> constraints(bool ambient) const;
  /// Explicit seeds, or `samples` points drawn from seed_box with `seed`.
  std::vector<VectorXd> seed_points() const;
};

/// ConfigError carries line and column for malformed JSON and the field path
/// for invalid values.
SystemConfig parse_config(std::string_view text);
SystemConfig load_config(const std::filesystem::path& path);

struct AnalyzeOptions {
  Variant variant = Variant::plain;
  std::optional<std::uint64_t> seed;
  std::optional<double> rank_tol;
  std::optional<double> fd_step;
};

struct Report {
  json body;
  int exit_code = exit_code::ok;
};

/// Never throws for failures of the algorithm itself; they are recorded in
/// the report together with the exit code.
Report analyze(SystemConfig cfg, const AnalyzeOptions& opt);

struct IntegrateOptions {
  std::optional<VectorXd> x0;
  std::optional<double> t;
  std::optional<double> dt;
};

/// SingularHessian and NonFiniteState propagate with their times.
Trajectory integrate(const SystemConfig& cfg, const IntegrateOptions& opt);
std::string trajectory_summary(const Trajectory& tr);

struct Bundle {
  std::map<std::string, json> files;  // file name -> document
  int exit_code = exit_code::ok;
};

/// example1 or example2; ConfigError for anything else.
Bundle reproduce(std::string_view example, std::uint64_t seed = 0);

/// Two-space indentation and a trailing newline.
std::string dump(const json& doc);
/// Writes to a sibling temporary file, then renames over the target.
void write_atomic(const std::filesystem::path& path, const std::string& content);

/// CONTACTUM_THREADS if set and positive, otherwise the hardware count.
unsigned thread_cap();
/// Runs fn(0..count-1) on up to thread_cap() threads; rethrows the first
/// exception by index.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

json to_json(const VectorXd& v);
json to_json(const MatrixXd& m);

}  // namespace contactum::app
