#include "contactum/geometry.hpp"

#include <cmath>

#include "contactum/linalg.hpp"

namespace contactum {

namespace {

double consistency_tol(const MatrixXd& a, const VectorXd& b) {
  const double scale = a.size() == 0 ? 1.0 : std::max(1.0, a.cwiseAbs().maxCoeff());
  return 1e-7 * scale * (1.0 + b.norm());
}

}  // namespace

VectorXd StructureAtPoint::sharp(const VectorXd& alpha) const {
  if (alpha.size() != x.size()) throw DimensionMismatch(dim(), static_cast<std::size_t>(alpha.size()));
  VectorXd v = linalg::min_norm_solve(flat, alpha, rank_tol);
  const double res = (flat * v - alpha).norm();
  if (res > consistency_tol(flat, alpha)) {
    throw InconsistentSystem("covector is not in the image of the flat map", res);
  }
  return v;
}

VectorXd StructureAtPoint::reeb() const { return sharp(eta); }

MatrixXd StructureAtPoint::characteristic() const { return linalg::null_space(flat, rank_tol); }

double StructureAtPoint::lambda(const VectorXd& alpha, const VectorXd& beta) const {
  return -sharp(alpha).dot(d_eta * sharp(beta));
}

VectorXd StructureAtPoint::gamma(double h, const VectorXd& dh, const VectorXd& r) const {
  return dh - (h + r.dot(dh)) * eta;
}

Structure::Structure(Chart chart, std::vector<ScalarField> eta)
    : chart_(std::move(chart)), eta_(std::move(eta)) {
  if (eta_.size() != chart_.dim()) throw DimensionMismatch(chart_.dim(), eta_.size());
  for (const auto& e : eta_) {
    if (!(e.chart() == chart_)) throw Error("one-form component defined on another chart");
  }
}

Structure Structure::canonical_contact(std::size_t n) {
  return canonical_contact(Chart::standard(n, FiberKind::momentum));
}

Structure Structure::canonical_contact(const Chart& chart) {
  std::vector<ScalarField> eta;
  const std::size_t n = chart.n();
  for (std::size_t i = 0; i < n; ++i) eta.push_back(-ScalarField::coordinate(chart, chart.fiber(i)));
  for (std::size_t i = 0; i < n; ++i) eta.push_back(ScalarField::constant(chart, 0.0));
  eta.push_back(ScalarField::constant(chart, 1.0));
  return Structure(chart, std::move(eta));
}

Structure Structure::lagrangian_precontact(const ScalarField& lagrangian) {
  const Chart& chart = lagrangian.chart();
  std::vector<ScalarField> eta;
  const std::size_t n = chart.n();
  for (std::size_t i = 0; i < n; ++i) eta.push_back(-lagrangian.diff(chart.fiber(i)));
  for (std::size_t i = 0; i < n; ++i) eta.push_back(ScalarField::constant(chart, 0.0));
  eta.push_back(ScalarField::constant(chart, 1.0));
  return Structure(chart, std::move(eta));
}

StructureAtPoint Structure::at(const VectorXd& x, double rank_tol, bool classify) const {
  const auto d = static_cast<Eigen::Index>(chart_.dim());
  if (x.size() != d) throw DimensionMismatch(chart_.dim(), static_cast<std::size_t>(x.size()));
  StructureAtPoint s;
  s.x = x;
  s.rank_tol = rank_tol;
  s.eta.resize(d);
  s.jacobian.resize(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const Jet jet = eta_[static_cast<std::size_t>(j)].jet(x, 1);
    s.eta[j] = jet.value;
    s.jacobian.col(j) = jet.gradient;
  }
  s.d_eta = s.jacobian - s.jacobian.transpose();
  s.flat = -s.d_eta + s.eta * s.eta.transpose();
  if (!classify) return s;
  s.rank = linalg::rank(s.flat, rank_tol);
  s.kind = s.rank == d ? StructureKind::contact : StructureKind::precontact;
  return s;
}

std::vector<MatrixXd> Structure::flat_derivatives(const VectorXd& x) const {
  const auto d = static_cast<Eigen::Index>(chart_.dim());
  VectorXd eta(d);
  MatrixXd jac(d, d);
  std::vector<MatrixXd> hess;  // hess[j](k,i) = d_k d_i eta_j
  for (Eigen::Index j = 0; j < d; ++j) {
    const Jet jet = eta_[static_cast<std::size_t>(j)].jet(x, 2);
    eta[j] = jet.value;
    jac.col(j) = jet.gradient;
    hess.push_back(jet.hessian);
  }
  std::vector<MatrixXd> out;
  for (Eigen::Index k = 0; k < d; ++k) {
    MatrixXd dd(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) {
        dd(i, j) = hess[static_cast<std::size_t>(j)](k, i) - hess[static_cast<std::size_t>(i)](k, j);
      }
    }
    const VectorXd de = jac.row(k).transpose();
    out.push_back(-dd + de * eta.transpose() + eta * de.transpose());
  }
  return out;
}

int class_from_forms(const StructureAtPoint& at) {
  const int r2 = linalg::rank(at.d_eta, at.rank_tol);
  MatrixXd stacked(at.d_eta.rows() + 1, at.d_eta.cols());
  stacked << at.d_eta, at.eta.transpose();
  const int with_eta = linalg::rank(stacked, at.rank_tol);
  return r2 + (with_eta > r2 ? 1 : 0);
}

int form_class(const Structure& s, const std::vector<VectorXd>& samples, double rank_tol) {
  if (samples.empty()) throw Error("form_class needs at least one sample point");
  std::vector<int> ranks;
  for (const auto& x : samples) ranks.push_back(s.at(x, rank_tol).rank);
  for (int r : ranks) {
    if (r != ranks.front()) throw RankNotConstant("flat map rank varies across samples", ranks);
  }
  const int r = ranks.front();
  if (r % 2 == 0) throw NotOdd(r);
  const int check = class_from_forms(s.at(samples.front(), rank_tol));
  if (check != r) {
    throw Error("class " + std::to_string(check) + " from d eta and eta disagrees with flat rank " +
                std::to_string(r));
  }
  return r;
}

VectorXd gamma_h(const StructureAtPoint& at, const ScalarField& h, const std::optional<VectorXd>& reeb) {
  const Jet j = h.jet(at.x, 1);
  const VectorXd r = reeb ? *reeb : at.reeb();
  return at.gamma(j.value, j.gradient, r);
}

VectorXd contact_hamiltonian_vf(const ScalarField& h, const VectorXd& x) {
  const Chart& c = h.chart();
  const Jet j = h.jet(x, 1);
  const std::size_t n = c.n();
  VectorXd out(static_cast<Eigen::Index>(c.dim()));
  const auto zi = static_cast<Eigen::Index>(c.z());
  const double hz = j.gradient[zi];
  double p_hp = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto qi = static_cast<Eigen::Index>(c.q(i));
    const auto pi = static_cast<Eigen::Index>(c.fiber(i));
    out[qi] = j.gradient[pi];
    out[pi] = -(j.gradient[qi] + x[pi] * hz);
    p_hp += x[pi] * j.gradient[pi];
  }
  out[zi] = p_hp - j.value;
  return out;
}

CosymplecticFields cosymplectic_fields(const ScalarField& h, const VectorXd& x) {
  const Chart& c = h.chart();
  const Jet j = h.jet(x, 1);
  CosymplecticFields f;
  f.grad.resize(static_cast<Eigen::Index>(c.dim()));
  for (std::size_t i = 0; i < c.n(); ++i) {
    const auto qi = static_cast<Eigen::Index>(c.q(i));
    const auto pi = static_cast<Eigen::Index>(c.fiber(i));
    f.grad[qi] = j.gradient[pi];
    f.grad[pi] = -j.gradient[qi];
  }
  const auto zi = static_cast<Eigen::Index>(c.z());
  f.grad[zi] = j.gradient[zi];
  f.x_h = f.grad;
  f.x_h[zi] = 0.0;
  f.e_h = f.x_h;
  f.e_h[zi] = 1.0;
  return f;
}

}  // namespace contactum
