#include "contactum/brackets.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "contactum/error.hpp"
#include "contactum/linalg.hpp"

namespace contactum {

namespace {

using Index = Eigen::Index;

Jet constant_jet(double c, std::size_t dim, int order) {
  Jet j;
  j.order = order;
  j.value = c;
  const auto d = static_cast<Index>(dim);
  if (order >= 1) j.gradient = VectorXd::Zero(d);
  if (order >= 2) j.hessian = MatrixXd::Zero(d, d);
  if (order >= 3) j.third.assign(dim * dim * dim, 0.0);
  return j;
}

// Rank with a floor so a matrix of pure rounding noise counts as zero.
int noisy_rank(const MatrixXd& m, double rank_tol, double scale) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  const double cut = rank_tol * std::max(s.size() ? s[0] : 0.0, scale);
  int r = 0;
  for (Index i = 0; i < s.size(); ++i)
    if (s[i] > cut) ++r;
  return r;
}

MatrixXd sub(const MatrixXd& c, const std::vector<std::size_t>& rows, const std::vector<std::size_t>& cols) {
  MatrixXd out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j)
      out(static_cast<Index>(i), static_cast<Index>(j)) = c(static_cast<Index>(rows[i]), static_cast<Index>(cols[j]));
  return out;
}

MatrixXd invert(const MatrixXd& c, double max_condition) {
  if (c.size() == 0) return c;
  const double cond = linalg::condition(c);
  if (!(cond <= max_condition))
    throw SingularCMatrix("second-class matrix is singular (condition " + std::to_string(cond) + ")", cond);
  return Eigen::FullPivLU<MatrixXd>(c).inverse();
}

}  // namespace

Observable::Observable(std::string name, JetFn fn, int max_order)
    : name_(std::move(name)), fn_(std::move(fn)), max_order_(max_order) {}

Observable Observable::field(const ScalarField& f, std::string name) {
  if (name.empty()) name = f.str();
  return Observable(std::move(name), [f](const VectorXd& x, int order) { return f.jet(x, order); }, 3);
}

Observable Observable::constant(double c, std::size_t dim) {
  return Observable(
      std::to_string(c), [c, dim](const VectorXd&, int order) { return constant_jet(c, dim, order); }, 3);
}

Observable Observable::constraint(const ConstraintFunction& c) {
  return Observable(
      c.id,
      [c](const VectorXd& x, int order) {
        Jet j;
        j.order = order;
        j.value = c.value(x);
        if (order >= 1) j.gradient = c.gradient(x);
        return j;
      },
      1);
}

Jet Observable::jet(const VectorXd& x, int order) const {
  if (order > max_order_)
    throw Error("observable '" + name_ + "' has derivatives up to order " + std::to_string(max_order_) +
                ", order " + std::to_string(order) + " requested");
  return fn_(x, order);
}

// Written as a(f, g) - a(g, f) so that swapping the arguments negates the
// result exactly.
double LocalJacobi::bracket(const Jet& f, const Jet& g) const {
  const auto half = [&](const Jet& a, const Jet& b) {
    return 0.5 * a.gradient.dot(lambda * b.gradient) - a.value * reeb.dot(b.gradient);
  };
  return half(f, g) - half(g, f);
}

Jet LocalJacobi::bracket_jet(const Jet& f, const Jet& g) const {
  if (f.order < 2 || g.order < 2) throw Error("bracket gradient needs second derivatives");
  if (d_lambda.empty()) throw Error("bracket gradient needs derivatives of Lambda");
  Jet out;
  out.order = 1;
  out.value = bracket(f, g);
  const Index d = x.size();
  out.gradient.resize(d);
  const VectorXd pg = lambda * g.gradient;
  const VectorXd pf = lambda.transpose() * f.gradient;
  const double rg = reeb.dot(g.gradient);
  const double rf = reeb.dot(f.gradient);
  for (Index k = 0; k < d; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    const VectorXd hf = f.hessian.col(k);
    const VectorXd hg = g.hessian.col(k);
    out.gradient[k] = hf.dot(pg) + f.gradient.dot(d_lambda[ks] * g.gradient) + pf.dot(hg) -
                      f.gradient[k] * rg - f.value * (d_reeb[ks].dot(g.gradient) + reeb.dot(hg)) +
                      g.gradient[k] * rf + g.value * (d_reeb[ks].dot(f.gradient) + reeb.dot(hf));
  }
  return out;
}

BracketContext::BracketContext(Structure structure) : structure_(std::move(structure)) {}

LocalJacobi BracketContext::local(const VectorXd& x, bool with_derivatives) const {
  const auto at = structure_.at(x, 1e-8, false);
  Eigen::FullPivLU<MatrixXd> lu(at.flat);
  if (!lu.isInvertible()) throw Error("brackets need a contact structure; flat map is singular here");
  const MatrixXd binv = lu.inverse();
  LocalJacobi loc;
  loc.x = x;
  loc.lambda = -binv.transpose() * at.d_eta * binv;
  loc.reeb = binv * at.eta;
  if (!with_derivatives) return loc;

  const auto db = structure_.flat_derivatives(x);
  const Index d = x.size();
  loc.d_lambda.reserve(static_cast<std::size_t>(d));
  loc.d_reeb.reserve(static_cast<std::size_t>(d));
  for (Index k = 0; k < d; ++k) {
    const auto& dbk = db[static_cast<std::size_t>(k)];
    const VectorXd deta = at.jacobian.row(k).transpose();
    const MatrixXd dd = -dbk + deta * at.eta.transpose() + at.eta * deta.transpose();
    const MatrixXd dinv = -binv * dbk * binv;
    loc.d_lambda.push_back(-dinv.transpose() * at.d_eta * binv - binv.transpose() * dd * binv -
                           binv.transpose() * at.d_eta * dinv);
    loc.d_reeb.push_back(dinv * at.eta + binv * deta);
  }
  return loc;
}

double jacobi_bracket(const BracketContext& ctx, const Observable& f, const Observable& g, const VectorXd& x) {
  return ctx.local(x).bracket(f.jet(x, 1), g.jet(x, 1));
}

Jet jacobi_bracket_jet(const BracketContext& ctx, const Observable& f, const Observable& g, const VectorXd& x) {
  return ctx.local(x, true).bracket_jet(f.jet(x, 2), g.jet(x, 2));
}

Classification classify(const BracketContext& ctx, const std::vector<Observable>& constraints,
                        const std::vector<VectorXd>& samples, double rank_tol) {
  Classification cls;
  const std::size_t m = constraints.size();
  std::vector<double> scales;
  for (const auto& x : samples) {
    const auto loc = ctx.local(x);
    std::vector<Jet> jets;
    jets.reserve(m);
    double g = 0.0;
    for (const auto& c : constraints) {
      jets.push_back(c.jet(x, 1));
      g = std::max(g, jets.back().gradient.norm());
    }
    MatrixXd c(static_cast<Index>(m), static_cast<Index>(m));
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = 0; b < m; ++b)
        c(static_cast<Index>(a), static_cast<Index>(b)) = a == b ? 0.0 : loc.bracket(jets[a], jets[b]);
    scales.push_back(g * g * std::max({1.0, loc.lambda.norm(), loc.reeb.norm()}));
    cls.ranks.push_back(noisy_rank(c, rank_tol, scales.back()));
    cls.c_samples.push_back(std::move(c));
  }
  if (std::adjacent_find(cls.ranks.begin(), cls.ranks.end(), std::not_equal_to<>()) != cls.ranks.end())
    throw RankNotConstant("rank of the constraint bracket matrix varies over samples", cls.ranks);
  const int target = cls.ranks.empty() ? 0 : cls.ranks.front();

  auto nondegenerate = [&](const std::vector<std::size_t>& idx) {
    for (std::size_t s = 0; s < samples.size(); ++s) {
      const MatrixXd c = sub(cls.c_samples[s], idx, idx);
      if (noisy_rank(c, rank_tol, scales[s]) != static_cast<int>(idx.size())) return false;
    }
    return true;
  };

  std::vector<bool> used(m, false);
  for (std::size_t a = 0; a < m && static_cast<int>(cls.second_class.size()) < target; ++a) {
    if (used[a]) continue;
    for (std::size_t b = a + 1; b < m; ++b) {
      if (used[b]) continue;
      auto trial = cls.second_class;
      trial.push_back(a);
      trial.push_back(b);
      if (nondegenerate(trial)) {
        cls.second_class = std::move(trial);
        used[a] = used[b] = true;
        break;
      }
    }
  }
  if (static_cast<int>(cls.second_class.size()) != target)
    throw RankNotConstant("no second-class family of full rank was found", cls.ranks);
  std::sort(cls.second_class.begin(), cls.second_class.end());
  for (std::size_t a = 0; a < m; ++a)
    if (!used[a]) cls.first_class.push_back(a);

  std::vector<std::size_t> all(m);
  for (std::size_t i = 0; i < m; ++i) all[i] = i;
  for (const std::size_t abar : cls.first_class) {
    double worst = 0.0;
    for (const auto& c : cls.c_samples) {
      const MatrixXd css = sub(c, cls.second_class, cls.second_class);
      const MatrixXd cas = sub(c, {abar}, cls.second_class);
      const MatrixXd b = css.size() ? MatrixXd(cas * Eigen::FullPivLU<MatrixXd>(css).inverse()) : cas;
      const MatrixXd row = sub(c, {abar}, all) - (css.size() ? MatrixXd(b * sub(c, cls.second_class, all))
                                                             : MatrixXd::Zero(1, static_cast<Index>(m)));
      worst = std::max(worst, row.cwiseAbs().maxCoeff());
    }
    cls.first_class_residuals.push_back(worst);
  }
  return cls;
}

DiracJacobi::DiracJacobi(BracketContext ctx, std::vector<Observable> constraints, Classification cls,
                         double max_condition)
    : ctx_(std::move(ctx)),
      constraints_(std::move(constraints)),
      cls_(std::move(cls)),
      max_condition_(max_condition) {}

std::vector<Jet> DiracJacobi::second_class_jets(const VectorXd& x, int order) const {
  std::vector<Jet> out;
  out.reserve(cls_.second_class.size());
  for (const auto a : cls_.second_class) out.push_back(constraints_[a].jet(x, order));
  return out;
}

namespace {

MatrixXd bracket_matrix(const LocalJacobi& loc, const std::vector<Jet>& phi) {
  const auto n = static_cast<Index>(phi.size());
  MatrixXd c = MatrixXd::Zero(n, n);
  for (Index a = 0; a < n; ++a)
    for (Index b = a + 1; b < n; ++b) {
      c(a, b) = loc.bracket(phi[static_cast<std::size_t>(a)], phi[static_cast<std::size_t>(b)]);
      c(b, a) = -c(a, b);
    }
  return c;
}

}  // namespace

MatrixXd DiracJacobi::c_matrix(const VectorXd& x) const {
  return bracket_matrix(ctx_.local(x), second_class_jets(x, 1));
}

double DiracJacobi::condition(const VectorXd& x) const {
  const MatrixXd c = c_matrix(x);
  return c.size() ? linalg::condition(c) : 1.0;
}

MatrixXd DiracJacobi::c_inverse(const VectorXd& x) const { return invert(c_matrix(x), max_condition_); }

Eigen::RowVectorXd DiracJacobi::combination(std::size_t pos, const VectorXd& x) const {
  const auto loc = ctx_.local(x);
  const auto phi = second_class_jets(x, 1);
  const Jet lead = constraints_.at(cls_.first_class.at(pos)).jet(x, 1);
  Eigen::RowVectorXd cas(static_cast<Index>(phi.size()));
  for (std::size_t a = 0; a < phi.size(); ++a) cas[static_cast<Index>(a)] = loc.bracket(lead, phi[a]);
  if (phi.empty()) return cas;
  return cas * invert(bracket_matrix(loc, phi), max_condition_);
}

Observable DiracJacobi::first_class(std::size_t pos) const {
  const std::size_t abar = cls_.first_class.at(pos);
  bool second_order = true;
  for (const auto a : cls_.second_class) second_order = second_order && constraints_[a].max_order() >= 2;
  const DiracJacobi self = *this;
  return Observable(
      "chi_" + constraints_[abar].name(),
      [self, abar, second_order](const VectorXd& x, int order) {
        const int need = order >= 1 && second_order ? 2 : 1;
        const auto loc = self.ctx_.local(x, need == 2);
        const auto phi = self.second_class_jets(x, need);
        const Jet lead = self.constraints_[abar].jet(x, need);
        const auto s = static_cast<Index>(phi.size());
        Jet out;
        out.order = std::min(order, 1);
        out.value = lead.value;
        if (order >= 1) out.gradient = lead.gradient;
        if (s == 0) return out;

        const MatrixXd cinv = invert(bracket_matrix(loc, phi), self.max_condition_);
        Eigen::RowVectorXd cas(s);
        for (Index a = 0; a < s; ++a) cas[a] = loc.bracket(lead, phi[static_cast<std::size_t>(a)]);
        const Eigen::RowVectorXd b = cas * cinv;
        for (Index a = 0; a < s; ++a) {
          const auto& p = phi[static_cast<std::size_t>(a)];
          out.value -= b[a] * p.value;
          if (order >= 1) out.gradient -= b[a] * p.gradient;
        }
        if (order < 1 || need < 2) return out;

        // - phi^a dB_a, with dB = dC_{abar,S} C^-1 - B dC_SS C^-1
        const Index d = x.size();
        std::vector<Jet> cas_j;
        for (Index a = 0; a < s; ++a) cas_j.push_back(loc.bracket_jet(lead, phi[static_cast<std::size_t>(a)]));
        std::vector<std::vector<Jet>> css_j(static_cast<std::size_t>(s), std::vector<Jet>(static_cast<std::size_t>(s)));
        for (Index a = 0; a < s; ++a)
          for (Index c = a + 1; c < s; ++c)
            css_j[static_cast<std::size_t>(a)][static_cast<std::size_t>(c)] =
                loc.bracket_jet(phi[static_cast<std::size_t>(a)], phi[static_cast<std::size_t>(c)]);
        VectorXd phis(s);
        for (Index a = 0; a < s; ++a) phis[a] = phi[static_cast<std::size_t>(a)].value;
        for (Index k = 0; k < d; ++k) {
          Eigen::RowVectorXd dcas(s);
          MatrixXd dcss = MatrixXd::Zero(s, s);
          for (Index a = 0; a < s; ++a) {
            dcas[a] = cas_j[static_cast<std::size_t>(a)].gradient[k];
            for (Index c = a + 1; c < s; ++c) {
              dcss(a, c) = css_j[static_cast<std::size_t>(a)][static_cast<std::size_t>(c)].gradient[k];
              dcss(c, a) = -dcss(a, c);
            }
          }
          const Eigen::RowVectorXd db = (dcas - b * dcss) * cinv;
          out.gradient[k] -= db.dot(phis.transpose());
        }
        return out;
      },
      1);
}

double DiracJacobi::bracket(const Jet& f, const Jet& g, const VectorXd& x) const {
  const auto loc = ctx_.local(x);
  const auto phi = second_class_jets(x, 1);
  double v = loc.bracket(f, g);
  if (phi.empty()) return v;
  const MatrixXd cinv = invert(bracket_matrix(loc, phi), max_condition_);
  const auto s = static_cast<Index>(phi.size());
  VectorXd fa(s), gb(s);
  for (Index a = 0; a < s; ++a) {
    fa[a] = loc.bracket(f, phi[static_cast<std::size_t>(a)]);
    gb[a] = loc.bracket(phi[static_cast<std::size_t>(a)], g);
  }
  return v - 0.5 * (fa.dot(cinv * gb) - gb.dot(cinv * fa));
}

double DiracJacobi::bracket(const Observable& f, const Observable& g, const VectorXd& x) const {
  return bracket(f.jet(x, 1), g.jet(x, 1), x);
}

Jet DiracJacobi::bracket_jet(const Observable& f, const Observable& g, const VectorXd& x) const {
  const auto loc = ctx_.local(x, true);
  const Jet fj = f.jet(x, 2);
  const Jet gj = g.jet(x, 2);
  const auto phi = second_class_jets(x, 2);
  Jet out = loc.bracket_jet(fj, gj);
  if (phi.empty()) return out;
  const auto s = static_cast<Index>(phi.size());
  std::vector<Jet> fa, gb;
  for (const auto& p : phi) {
    fa.push_back(loc.bracket_jet(fj, p));
    gb.push_back(loc.bracket_jet(p, gj));
  }
  std::vector<std::vector<Jet>> cj(static_cast<std::size_t>(s), std::vector<Jet>(static_cast<std::size_t>(s)));
  MatrixXd c = MatrixXd::Zero(s, s);
  for (Index a = 0; a < s; ++a)
    for (Index b = a + 1; b < s; ++b) {
      auto& j = cj[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
      j = loc.bracket_jet(phi[static_cast<std::size_t>(a)], phi[static_cast<std::size_t>(b)]);
      c(a, b) = j.value;
      c(b, a) = -j.value;
    }
  const MatrixXd cinv = invert(c, max_condition_);
  VectorXd fv(s), gv(s);
  for (Index a = 0; a < s; ++a) {
    fv[a] = fa[static_cast<std::size_t>(a)].value;
    gv[a] = gb[static_cast<std::size_t>(a)].value;
  }
  out.value -= 0.5 * (fv.dot(cinv * gv) - gv.dot(cinv * fv));
  for (Index k = 0; k < x.size(); ++k) {
    VectorXd dfv(s), dgv(s);
    MatrixXd dc = MatrixXd::Zero(s, s);
    for (Index a = 0; a < s; ++a) {
      dfv[a] = fa[static_cast<std::size_t>(a)].gradient[k];
      dgv[a] = gb[static_cast<std::size_t>(a)].gradient[k];
      for (Index b = a + 1; b < s; ++b) {
        dc(a, b) = cj[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)].gradient[k];
        dc(b, a) = -dc(a, b);
      }
    }
    const MatrixXd dcinv = -cinv * dc * cinv;
    out.gradient[k] -= dfv.dot(cinv * gv) + fv.dot(dcinv * gv) + fv.dot(cinv * dgv);
  }
  return out;
}

double DiracJacobi::reeb(const Observable& f, const VectorXd& x) const {
  const auto loc = ctx_.local(x);
  const Jet fj = f.jet(x, 1);
  const auto phi = second_class_jets(x, 1);
  const double rf = loc.reeb_of(fj);
  if (phi.empty()) return rf;
  const MatrixXd cinv = invert(bracket_matrix(loc, phi), max_condition_);
  double v = rf;
  for (std::size_t a = 0; a < phi.size(); ++a)
    for (std::size_t b = 0; b < phi.size(); ++b)
      v += cinv(static_cast<Index>(a), static_cast<Index>(b)) * loc.reeb_of(phi[b]) *
           (loc.lambda_of(phi[a], fj) + phi[a].value * rf);
  return v;
}

double DiracJacobi::bracket_with_one(const Observable& f, const VectorXd& x) const {
  return bracket(f.jet(x, 1), constant_jet(1.0, static_cast<std::size_t>(x.size()), 1), x);
}

double DiracJacobi::evolve(const Observable& h, const Observable& f, const VectorXd& x,
                           const std::vector<double>& multipliers) const {
  if (!multipliers.empty() && multipliers.size() != cls_.first_class.size())
    throw DimensionMismatch(cls_.first_class.size(), multipliers.size());
  const Jet fj = f.jet(x, 1);
  double v = bracket(h.jet(x, 1), fj, x) - fj.value * reeb(h, x);
  for (std::size_t i = 0; i < multipliers.size(); ++i) {
    if (multipliers[i] == 0.0) continue;
    const Observable chi = first_class(i);
    v += multipliers[i] * (bracket(chi.jet(x, 1), fj, x) - fj.value * reeb(chi, x));
  }
  return v;
}

}  // namespace contactum
