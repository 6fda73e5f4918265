#include "contactum/dynamics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ostream>
#include <random>
#include <sstream>

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>

#include "contactum/error.hpp"
#include "contactum/geometry.hpp"
#include "contactum/lagrangian.hpp"

namespace contactum {

namespace {

using Index = Eigen::Index;
using Field = std::function<VectorXd(double, const VectorXd&)>;

VectorXd rk4_step(const Field& f, double t, const VectorXd& x, double h) {
  const VectorXd k1 = f(t, x);
  const VectorXd k2 = f(t + h / 2, x + h / 2 * k1);
  const VectorXd k3 = f(t + h / 2, x + h / 2 * k2);
  const VectorXd k4 = f(t + h, x + h * k3);
  return x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
}

void check_step(double t_end, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("dt must be positive and finite");
  if (!(t_end >= 0.0) || !std::isfinite(t_end)) throw ConfigError("t_end must be nonnegative and finite");
}

double residual(const std::vector<ScalarField>& constraints, const VectorXd& x) {
  double r = 0.0;
  for (const auto& c : constraints) r = std::max(r, std::abs(c.eval(x)));
  return r;
}

// Fixed steps of dt with a shorter final step when dt does not divide t_end.
template <class Record>
Trajectory integrate(const Chart& chart, const Field& f, VectorXd x, double t_end, double dt, Record record) {
  Trajectory tr{chart, {}, {}, {}, {}, {}};
  double steps = std::ceil(t_end / dt - 1e-9);
  if (steps < 0) steps = 0;
  const auto n = static_cast<long long>(steps);
  tr.times.reserve(static_cast<std::size_t>(n + 1));
  record(tr, 0.0, x);
  double t = 0.0;
  for (long long k = 1; k <= n; ++k) {
    const double next = k == n ? t_end : static_cast<double>(k) * dt;
    x = rk4_step(f, t, x, next - t);
    if (!x.allFinite()) throw NonFiniteState("state became non-finite", next);
    t = next;
    record(tr, t, x);
  }
  return tr;
}

}  // namespace

std::string format_real(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

void Trajectory::write_csv(std::ostream& out) const {
  out << 't';
  for (const auto& name : chart.names()) out << ',' << name;
  out << ",H,eta_X,constraint_residual\n";
  for (std::size_t i = 0; i < times.size(); ++i) {
    out << format_real(times[i]);
    for (Index k = 0; k < states[i].size(); ++k) out << ',' << format_real(states[i][k]);
    out << ',' << format_real(energy[i]) << ',' << format_real(eta_x[i]) << ','
        << format_real(constraint_residual[i]) << '\n';
  }
}

std::string Trajectory::csv() const {
  std::ostringstream s;
  write_csv(s);
  return s.str();
}

Trajectory integrate_contact(const ScalarField& h, const VectorXd& x0, double t_end, double dt,
                             const std::vector<ScalarField>& constraints) {
  check_step(t_end, dt);
  const auto& chart = h.chart();
  if (static_cast<std::size_t>(x0.size()) != chart.dim()) throw DimensionMismatch(chart.dim(), x0.size());
  const Index n = static_cast<Index>(chart.n());
  const Field f = [&h](double, const VectorXd& x) { return contact_hamiltonian_vf(h, x); };
  return integrate(chart, f, x0, t_end, dt, [&](Trajectory& tr, double t, const VectorXd& x) {
    const VectorXd v = contact_hamiltonian_vf(h, x);
    tr.times.push_back(t);
    tr.states.push_back(x);
    tr.energy.push_back(h.eval(x));
    tr.eta_x.push_back(v[2 * n] - x.segment(n, n).dot(v.head(n)));
    tr.constraint_residual.push_back(residual(constraints, x));
  });
}

Trajectory integrate_herglotz(const ScalarField& l, const VectorXd& q0, const VectorXd& v0, double c,
                              double t_end, double dt, const std::vector<ScalarField>& constraints) {
  check_step(t_end, dt);
  const LagrangianSystem sys(l);
  const Index n = static_cast<Index>(sys.n());
  if (q0.size() != n) throw DimensionMismatch(sys.n(), q0.size());
  if (v0.size() != n) throw DimensionMismatch(sys.n(), v0.size());
  VectorXd x0(2 * n + 1);
  x0 << q0, v0, c;
  const Field f = [&sys](double t, const VectorXd& x) {
    try {
      return sys.regular_dynamics(x);
    } catch (const SingularHessian& e) {
      throw SingularHessian(e.what(), t);
    }
  };
  return integrate(sys.chart(), f, x0, t_end, dt, [&](Trajectory& tr, double t, const VectorXd& x) {
    const VectorXd xi = f(t, x);
    const VectorXd grad = l.gradient(x);
    tr.times.push_back(t);
    tr.states.push_back(x);
    tr.energy.push_back(sys.energy(x));
    // eta_L = dz - (dL/dv) dq
    tr.eta_x.push_back(xi[2 * n] - grad.segment(n, n).dot(xi.head(n)));
    tr.constraint_residual.push_back(residual(constraints, x));
  });
}

DiscreteCurve DiscreteCurve::sample(const std::function<VectorXd(double)>& q, double a, double b, std::size_t count,
                                    double c) {
  if (count < 3) throw ConfigError("a discrete curve needs at least 3 nodes");
  DiscreteCurve curve{a, b, {}, c};
  for (std::size_t i = 0; i < count; ++i)
    curve.nodes.push_back(q(a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1)));
  return curve;
}

namespace {

class CurveSpline {
 public:
  explicit CurveSpline(const DiscreteCurve& curve) {
    const std::size_t m = curve.nodes.size();
    if (m < 3) throw ConfigError("a discrete curve needs at least 3 nodes");
    if (!(curve.b > curve.a)) throw ConfigError("curve interval must satisfy a < b");
    const double h = curve.spacing();
    const Index n = curve.nodes.front().size();
    std::vector<double> y(m);
    for (Index k = 0; k < n; ++k) {
      for (std::size_t i = 0; i < m; ++i) {
        if (curve.nodes[i].size() != n) throw DimensionMismatch(static_cast<std::size_t>(n), curve.nodes[i].size());
        y[i] = curve.nodes[i][k];
      }
      const double left = (-3 * y[0] + 4 * y[1] - y[2]) / (2 * h);
      const double right = (3 * y[m - 1] - 4 * y[m - 2] + y[m - 3]) / (2 * h);
      splines_.emplace_back(y.data(), m, curve.a, h, left, right);
    }
  }

  Index dim() const { return static_cast<Index>(splines_.size()); }

  VectorXd q(double t) const {
    VectorXd out(dim());
    for (Index k = 0; k < dim(); ++k) out[k] = splines_[static_cast<std::size_t>(k)](t);
    return out;
  }
  VectorXd dq(double t) const {
    VectorXd out(dim());
    for (Index k = 0; k < dim(); ++k) out[k] = splines_[static_cast<std::size_t>(k)].prime(t);
    return out;
  }
  VectorXd ddq(double t) const {
    VectorXd out(dim());
    for (Index k = 0; k < dim(); ++k) out[k] = splines_[static_cast<std::size_t>(k)].double_prime(t);
    return out;
  }

 private:
  std::vector<boost::math::interpolators::cardinal_cubic_b_spline<double>> splines_;
};

}  // namespace

ActionProfile action_profile(const ScalarField& l, const DiscreteCurve& curve, int substeps) {
  const CurveSpline spline(curve);
  const Index n = spline.dim();
  if (static_cast<std::size_t>(2 * n + 1) != l.chart().dim()) throw DimensionMismatch(l.chart().dim(), 2 * n + 1);
  VectorXd x(2 * n + 1);
  auto point = [&](double t, double z) {
    x << spline.q(t), spline.dq(t), z;
    return x;
  };
  const Field f = [&](double t, const VectorXd& z) {
    VectorXd out(1);
    out[0] = l.eval(point(t, z[0]));
    return out;
  };

  ActionProfile prof;
  const std::size_t m = curve.nodes.size();
  const double h = curve.spacing() / substeps;
  VectorXd z(1);
  z[0] = curve.c;
  prof.z.push_back(curve.c);
  for (std::size_t i = 0; i + 1 < m; ++i) {
    const double t0 = curve.a + static_cast<double>(i) * curve.spacing();
    for (int s = 0; s < substeps; ++s) z = rk4_step(f, t0 + s * h, z, h);
    prof.z.push_back(z[0]);
  }
  prof.value = z[0];

  const LagrangianSystem sys(l);
  for (std::size_t i = 1; i + 1 < m; ++i) {
    const double t = curve.a + static_cast<double>(i) * curve.spacing();
    const VectorXd q = spline.q(t), v = spline.dq(t), a = spline.ddq(t);
    const double zi = prof.z[i];
    const double zdot = l.eval(point(t, zi));
    prof.herglotz_residual =
        std::max(prof.herglotz_residual, sys.herglotz_residual(q, v, a, zi, zdot).cwiseAbs().maxCoeff());
  }
  return prof;
}

double action(const ScalarField& l, const DiscreteCurve& curve, int substeps) {
  return action_profile(l, curve, substeps).value;
}

StationarityResult stationarity_test(const ScalarField& l, const DiscreteCurve& curve, int n_directions, double eps,
                                     std::uint64_t seed) {
  StationarityResult res;
  res.herglotz_residual = action_profile(l, curve).herglotz_residual;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const std::size_t m = curve.nodes.size();
  const Index n = curve.nodes.front().size();
  for (int d = 0; d < n_directions; ++d) {
    DiscreteCurve plus = curve, minus = curve;
    for (std::size_t i = 1; i + 1 < m; ++i)
      for (Index k = 0; k < n; ++k) {
        const double v = u(rng);
        plus.nodes[i][k] += eps * v;
        minus.nodes[i][k] -= eps * v;
      }
    const double deriv = (action(l, plus) - action(l, minus)) / (2 * eps);
    res.max_derivative = std::max(res.max_derivative, std::abs(deriv));
  }
  return res;
}

}  // namespace contactum
