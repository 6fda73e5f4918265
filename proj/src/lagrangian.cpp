#include "contactum/lagrangian.hpp"

#include "contactum/linalg.hpp"

namespace contactum {

namespace {

ScalarField build_energy(const ScalarField& l) {
  const Chart& c = l.chart();
  ScalarField e = -l;
  for (std::size_t i = 0; i < c.n(); ++i) {
    e = e + ScalarField::coordinate(c, c.fiber(i)) * l.diff(c.fiber(i));
  }
  return e;
}

Eigen::Index ix(std::size_t i) { return static_cast<Eigen::Index>(i); }

}  // namespace

LagrangianSystem::LagrangianSystem(ScalarField lagrangian)
    : l_(std::move(lagrangian)),
      structure_(Structure::lagrangian_precontact(l_)),
      energy_(build_energy(l_)) {
  if (l_.chart().kind() != FiberKind::velocity) {
    throw Error("a Lagrangian must be defined on a velocity chart");
  }
}

MatrixXd LagrangianSystem::velocity_hessian(const VectorXd& x) const {
  const std::size_t n = this->n();
  const Jet j = l_.jet(x, 2);
  return j.hessian.block(ix(n), ix(n), ix(n), ix(n));
}

LegendreImage LagrangianSystem::legendre(const VectorXd& x) const {
  const Chart& c = chart();
  const std::size_t n = c.n();
  const Jet j = l_.jet(x, 2);
  LegendreImage out;
  out.target = x;
  out.jacobian = MatrixXd::Identity(ix(c.dim()), ix(c.dim()));
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = ix(c.fiber(i));
    out.target[row] = j.gradient[row];
    out.jacobian.row(row) = j.hessian.row(row);
  }
  return out;
}

MatrixXd LagrangianSystem::legendre_kernel(const VectorXd& x, double rank_tol) const {
  return linalg::null_space(legendre(x).jacobian, rank_tol);
}

double LagrangianSystem::fiber_constancy(const ScalarField& f, const std::vector<VectorXd>& samples,
                                         double rank_tol) const {
  double worst = 0.0;
  for (const auto& x : samples) {
    const MatrixXd jac = legendre(x).jacobian;
    const MatrixXd k = linalg::frame_vectors(jac, linalg::pivot_frame(jac, rank_tol));
    if (k.cols() == 0) continue;
    const VectorXd g = f.gradient(x);
    worst = std::max(worst, (k.transpose() * g).cwiseAbs().maxCoeff());
  }
  return worst;
}

VectorXd LagrangianSystem::regular_dynamics(const VectorXd& x, double rank_tol) const {
  const Chart& c = chart();
  const std::size_t n = c.n();
  const Jet j = l_.jet(x, 2);
  const auto nn = ix(n);
  const MatrixXd w = j.hessian.block(nn, nn, nn, nn);
  if (linalg::rank(w, rank_tol) < static_cast<int>(n)) {
    throw SingularHessian("velocity Hessian is singular");
  }
  const auto zi = ix(c.z());
  const VectorXd v = x.segment(nn, nn);
  VectorXd rhs(nn);
  for (Eigen::Index k = 0; k < nn; ++k) {
    const Eigen::Index vk = nn + k;
    rhs[k] = j.gradient[k] + j.gradient[vk] * j.gradient[zi] -
             j.hessian.block(vk, 0, 1, nn).row(0).dot(v) - j.value * j.hessian(vk, zi);
  }
  const VectorXd b = w.fullPivLu().solve(rhs);
  VectorXd out(x.size());
  out << v, b, j.value;
  return out;
}

VectorXd LagrangianSystem::herglotz_residual(const VectorXd& q, const VectorXd& v, const VectorXd& a,
                                             double z, double zdot) const {
  const Chart& c = chart();
  const auto nn = ix(c.n());
  VectorXd x(ix(c.dim()));
  x << q, v, z;
  const Jet j = l_.jet(x, 2);
  const auto zi = ix(c.z());
  VectorXd r(nn);
  for (Eigen::Index i = 0; i < nn; ++i) {
    const Eigen::Index vi = nn + i;
    r[i] = j.hessian.block(vi, 0, 1, nn).row(0).dot(v) + j.hessian.block(vi, nn, 1, nn).row(0).dot(a) +
           j.hessian(vi, zi) * zdot - j.gradient[i] - j.gradient[vi] * j.gradient[zi];
  }
  return r;
}

SecondOrderSection LagrangianSystem::second_order_section(const VectorFieldFn& field, const VectorXd& y,
                                                          const VectorXd& x, double tol) const {
  const auto nn = ix(n());
  const double fiber_gap = (legendre(x).target - y).norm();
  if (fiber_gap > tol) throw NotOnFiber("FL(x) differs from y by " + std::to_string(fiber_gap));

  const VectorXd xf = field(x);
  const StructureAtPoint at = structure_.at(x);
  const VectorXd gamma = gamma_h(at, energy_);
  const double motion = (at.flat * xf - gamma).norm();
  if (motion > tol * (1.0 + gamma.norm())) {
    throw NotASolution("field does not solve the equations of motion at x (residual " +
                       std::to_string(motion) + ")");
  }

  SecondOrderSection out;
  const VectorXd a = xf.head(nn);
  out.x_tilde = x;
  out.x_tilde.segment(nn, nn) = a;
  const VectorXd xt = field(out.x_tilde);
  out.fiber_defect = (xt.head(nn) - a).norm();
  out.sode_defect = sode_deviation(chart(), xt, out.x_tilde).norm();
  out.legendre_defect = (legendre(out.x_tilde).target - y).norm();
  return out;
}

Chart LagrangianSystem::momentum_chart() const {
  const Chart& c = chart();
  Chart standard = Chart::standard(c.n(), FiberKind::momentum);
  std::vector<std::string> names = c.names();
  for (std::size_t i = 0; i < c.n(); ++i) names[c.fiber(i)] = standard.names()[c.fiber(i)];
  return Chart(std::move(names), FiberKind::momentum);
}

VectorXd sode_deviation(const Chart& chart, const VectorXd& field, const VectorXd& x) {
  const auto nn = ix(chart.n());
  VectorXd out = VectorXd::Zero(x.size());
  out.segment(nn, nn) = field.head(nn) - x.segment(nn, nn);
  return out;
}

}  // namespace contactum
