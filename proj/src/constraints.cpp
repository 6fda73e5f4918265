#include "contactum/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

namespace contactum {

namespace {

Eigen::Index ix(std::size_t i) { return static_cast<Eigen::Index>(i); }

MatrixXd stack_rows(const std::vector<MatrixXd>& parts, Eigen::Index cols) {
  Eigen::Index rows = 0;
  for (const auto& p : parts) rows += p.rows();
  MatrixXd out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p;
    at += p.rows();
  }
  return out;
}

// Gradients computed by finite differences. Subclasses evaluate every
// candidate row; a block built by select() shares the parent's cache.
class FdBlock : public ConstraintBlock {
 public:
  FdBlock(double step, std::vector<std::size_t> pick, std::shared_ptr<struct JacobianCache> cache);

  std::size_t size() const final { return pick_.size(); }
  VectorXd values(const VectorXd& x) const final { return take(full_values(x)); }
  MatrixXd jacobian(const VectorXd& x) const final;
  GradientMethod method() const final { return GradientMethod::finite_difference; }

  virtual VectorXd full_values(const VectorXd& x) const = 0;

 protected:
  const std::vector<std::size_t>& pick() const { return pick_; }
  std::vector<std::size_t> picked(const std::vector<std::size_t>& keep) const {
    std::vector<std::size_t> out;
    for (auto k : keep) out.push_back(pick_[k]);
    return out;
  }
  const std::shared_ptr<JacobianCache>& cache() const { return cache_; }
  double step() const { return step_; }

 private:
  VectorXd take(const VectorXd& all) const {
    VectorXd out(ix(pick_.size()));
    for (std::size_t i = 0; i < pick_.size(); ++i) out[ix(i)] = all[ix(pick_[i])];
    return out;
  }

  double step_;
  std::vector<std::size_t> pick_;
  std::shared_ptr<JacobianCache> cache_;
};

struct JacobianCache {
  static constexpr std::size_t capacity = 64;
  std::mutex mutex;
  std::vector<std::pair<VectorXd, MatrixXd>> entries;  // oldest first

  std::optional<MatrixXd> find(const VectorXd& x) {
    std::lock_guard lock(mutex);
    for (const auto& [k, v] : entries) {
      if (k.size() == x.size() && k == x) return v;
    }
    return std::nullopt;
  }
  void store(const VectorXd& x, const MatrixXd& j) {
    std::lock_guard lock(mutex);
    if (entries.size() >= capacity) entries.erase(entries.begin());
    entries.emplace_back(x, j);
  }
};

FdBlock::FdBlock(double step, std::vector<std::size_t> pick, std::shared_ptr<JacobianCache> cache)
    : step_(step), pick_(std::move(pick)), cache_(cache ? std::move(cache) : std::make_shared<JacobianCache>()) {}

MatrixXd FdBlock::jacobian(const VectorXd& x) const {
  auto full = cache_->find(x);
  if (!full) {
    full = fd_jacobian([this](const VectorXd& p) { return full_values(p); }, x, step_);
    cache_->store(x, *full);
  }
  MatrixXd out(ix(pick_.size()), x.size());
  for (std::size_t i = 0; i < pick_.size(); ++i) out.row(ix(i)) = full->row(ix(pick_[i]));
  return out;
}

class FieldBlock : public ConstraintBlock {
 public:
  explicit FieldBlock(std::vector<ScalarField> fields) : fields_(std::move(fields)) {}
  std::size_t size() const override { return fields_.size(); }
  VectorXd values(const VectorXd& x) const override {
    VectorXd v(ix(fields_.size()));
    for (std::size_t i = 0; i < fields_.size(); ++i) v[ix(i)] = fields_[i].eval(x);
    return v;
  }
  MatrixXd jacobian(const VectorXd& x) const override {
    MatrixXd j(ix(fields_.size()), x.size());
    for (std::size_t i = 0; i < fields_.size(); ++i) j.row(ix(i)) = fields_[i].gradient(x).transpose();
    return j;
  }
  GradientMethod method() const override { return GradientMethod::analytic; }

 private:
  std::vector<ScalarField> fields_;
};

MatrixXd prior_jacobian(const std::vector<BlockPtr>& prior, const VectorXd& x) {
  std::vector<MatrixXd> parts;
  for (const auto& b : prior) parts.push_back(b->jacobian(x));
  return stack_rows(parts, x.size());
}

// Directional derivative; differenced sources only need one line search.
VectorXd derivative_along(const ConstraintBlock& b, const VectorXd& x, const VectorXd& dir, double step) {
  if (b.method() == GradientMethod::analytic) return b.jacobian(x) * dir;
  const double norm = dir.norm();
  if (norm == 0.0) return VectorXd::Zero(ix(b.size()));
  const double h = step * (1.0 + x.cwiseAbs().maxCoeff()) / norm;
  auto at = [&](double s) { return b.values(x + s * h * dir); };
  return (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2)) / (12.0 * h);
}

MatrixXd complement_matrix(const Reduced& r, const MatrixXd& g) {
  const MatrixXd gk = g * r.frame;
  MatrixXd m(r.flat.rows(), r.flat.cols() + gk.rows());
  m << r.flat.transpose(), -gk.transpose();
  return m;
}

// <gamma_H, w> over a frozen pivot frame of the complement of the tangent
// space cut out by the prior blocks.
class BarBlock : public FdBlock {
 public:
  BarBlock(std::shared_ptr<const ConstraintSystem> sys, std::vector<BlockPtr> prior, linalg::PivotFrame frame,
           std::vector<std::size_t> columns, std::shared_ptr<JacobianCache> cache = nullptr)
      : FdBlock(sys->config().fd_step, std::move(columns), std::move(cache)),
        sys_(std::move(sys)),
        prior_(std::move(prior)),
        frame_(std::move(frame)) {}

  VectorXd full_values(const VectorXd& x) const override {
    const Reduced r = sys_->reduce(x);
    const MatrixXd m = complement_matrix(r, prior_jacobian(prior_, x));
    const MatrixXd w = linalg::frame_vectors(m, frame_);
    const VectorXd gamma_red = r.frame.transpose() * r.gamma;
    return w.topRows(r.flat.rows()).transpose() * gamma_red;
  }

  BlockPtr select(const std::vector<std::size_t>& keep) const {
    return std::make_shared<BarBlock>(sys_, prior_, frame_, picked(keep), cache());
  }

  int free_column(std::size_t i) const { return frame_.free[pick()[i]]; }

 private:
  std::shared_ptr<const ConstraintSystem> sys_;
  std::vector<BlockPtr> prior_;
  linalg::PivotFrame frame_;
};

// R(phi) for the constraints of the source blocks.
class HatBlock : public FdBlock {
 public:
  HatBlock(std::shared_ptr<const ConstraintSystem> sys, std::vector<BlockPtr> sources, std::vector<std::size_t> rows,
           std::shared_ptr<JacobianCache> cache = nullptr)
      : FdBlock(sys->config().fd_step, std::move(rows), std::move(cache)),
        sys_(std::move(sys)),
        sources_(std::move(sources)) {}

  VectorXd full_values(const VectorXd& x) const override {
    const VectorXd reeb = sys_->reduce(x).reeb;
    std::vector<MatrixXd> parts;
    for (const auto& b : sources_) parts.push_back(derivative_along(*b, x, reeb, sys_->config().fd_step));
    return stack_rows(parts, 1);
  }

  BlockPtr select(const std::vector<std::size_t>& keep) const {
    return std::make_shared<HatBlock>(sys_, sources_, picked(keep), cache());
  }

 private:
  std::shared_ptr<const ConstraintSystem> sys_;
  std::vector<BlockPtr> sources_;
};

// Matrices holding differenced gradients are only accurate to about the
// gradient tolerance, so their rank decisions use it.
double complement_tol(const ConstraintConfig& cfg, bool generated) {
  return generated ? std::max(cfg.rank_tol, cfg.grad_rank_tol) : cfg.rank_tol;
}

double span_residual(const MatrixXd& g, const VectorXd& v) {
  if (g.rows() == 0) return v.norm();
  const MatrixXd q = linalg::range(g.transpose(), 1e-12);
  return (v - q * (q.transpose() * v)).norm();
}

}  // namespace

// ---------------------------------------------------------------- Reeb

ReebChoice ReebChoice::shifted(double c) {
  ReebChoice r;
  r.shift_ = c;
  return r;
}

ReebChoice ReebChoice::custom(Custom field) {
  ReebChoice r;
  r.custom_ = std::move(field);
  return r;
}

VectorXd ReebChoice::solve(const MatrixXd& flat, const VectorXd& eta, const MatrixXd& frame, const VectorXd& x,
                           double rank_tol) const {
  if (custom_) return frame * (linalg::pseudo_inverse(frame, 1e-12) * custom_(x));
  VectorXd y = linalg::min_norm_solve(flat, eta, rank_tol);
  if (shift_ != 0.0) {
    const auto pf = linalg::pivot_frame(flat.transpose(), rank_tol);
    if (!pf.free.empty()) y += shift_ * linalg::frame_vectors(flat.transpose(), pf).col(0);
  }
  return frame * y;
}

std::string ReebChoice::describe() const {
  if (custom_) return "custom";
  if (shift_ != 0.0) return "min_norm + " + std::to_string(shift_) + " * characteristic";
  return "min_norm";
}

// ---------------------------------------------------------------- system

ConstraintSystem::ConstraintSystem(Structure structure, ScalarField hamiltonian, std::vector<ScalarField> ambient,
                                   ReebChoice reeb, ConstraintConfig cfg)
    : structure_(std::move(structure)),
      h_(std::move(hamiltonian)),
      ambient_(std::move(ambient)),
      reeb_(std::move(reeb)),
      cfg_(cfg) {
  if (!(h_.chart() == structure_.chart())) throw Error("Hamiltonian and structure use different charts");
  for (const auto& a : ambient_) {
    if (!(a.chart() == structure_.chart())) throw Error("ambient constraint uses another chart");
  }
}

VectorXd ConstraintSystem::ambient_values(const VectorXd& x) const {
  return FieldBlock(ambient_).values(x);
}

MatrixXd ConstraintSystem::ambient_jacobian(const VectorXd& x) const {
  return FieldBlock(ambient_).jacobian(x);
}

void ConstraintSystem::anchor(const VectorXd& x) {
  if (!ambient_.empty()) {
    const MatrixXd g = ambient_jacobian(x);
    ambient_frame_ = linalg::pivot_frame(g, cfg_.rank_tol);
    if (ambient_frame_.pivots.size() != ambient_.size()) {
      throw RankNotConstant("ambient constraint gradients are dependent",
                            {static_cast<int>(ambient_frame_.pivots.size())});
    }
  }
  anchored_ = true;
}

Reduced ConstraintSystem::reduce(const VectorXd& x) const {
  Reduced r;
  r.x = x;
  r.ambient = structure_.at(x, cfg_.rank_tol, false);
  const auto d = x.size();
  if (ambient_.empty()) {
    r.frame = MatrixXd::Identity(d, d);
  } else {
    if (!anchored_) throw Error("constraint system used before anchoring");
    r.frame = linalg::frame_vectors(ambient_jacobian(x), ambient_frame_);
  }
  r.flat = r.frame.transpose() * r.ambient.flat * r.frame;
  r.eta = r.frame.transpose() * r.ambient.eta;
  r.reeb = reeb_.solve(r.flat, r.eta, r.frame, x, cfg_.rank_tol);
  const Jet j = h_.jet(x, 1);
  r.h = j.value;
  r.dh = j.gradient;
  r.gamma = r.ambient.gamma(r.h, r.dh, r.reeb);
  return r;
}

// ---------------------------------------------------------------- helpers

MatrixXd fd_jacobian(const std::function<VectorXd(const VectorXd&)>& f, const VectorXd& x, double step) {
  MatrixXd j;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = step * (1.0 + std::abs(x[i]));
    VectorXd p = x;
    auto at = [&](double s) {
      p[i] = x[i] + s * h;
      return f(p);
    };
    const VectorXd col = (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2)) / (12.0 * h);
    if (i == 0) j.resize(col.size(), x.size());
    j.col(i) = col;
  }
  if (x.size() == 0) j.resize(f(x).size(), 0);
  return j;
}

BlockPtr field_block(std::vector<ScalarField> fields) { return std::make_shared<FieldBlock>(std::move(fields)); }

namespace {
double product_scale(const MatrixXd& b, const MatrixXd& delta) {
  return b.norm() * delta.colwise().norm().maxCoeff();
}
}  // namespace

MatrixXd orth_complement(const StructureAtPoint& at, const MatrixXd& delta) {
  if (delta.cols() == 0) return MatrixXd::Identity(ix(at.dim()), ix(at.dim()));
  return linalg::null_space((at.flat * delta).transpose(), at.rank_tol, product_scale(at.flat, delta));
}

MatrixXd left_complement(const StructureAtPoint& at, const MatrixXd& delta) {
  if (delta.cols() == 0) return MatrixXd::Identity(ix(at.dim()), ix(at.dim()));
  return linalg::null_space(delta.transpose() * at.flat, at.rank_tol, product_scale(at.flat, delta));
}

std::vector<double> primary_constraints(const Structure& s, const ScalarField& h, const VectorXd& x,
                                        double rank_tol) {
  const StructureAtPoint at = s.at(x, rank_tol);
  const MatrixXd m = at.flat.transpose();
  const MatrixXd w = linalg::frame_vectors(m, linalg::pivot_frame(m, rank_tol));
  const VectorXd gamma = gamma_h(at, h);
  std::vector<double> out;
  for (Eigen::Index c = 0; c < w.cols(); ++c) out.push_back(gamma.dot(w.col(c)));
  return out;
}

std::optional<VectorXd> newton_project(const std::function<VectorXd(const VectorXd&)>& f,
                                       const std::function<MatrixXd(const VectorXd&)>& jac, VectorXd x,
                                       double tol, int max_iter) {
  // Gauss-Newton with minimum-norm steps. The Jacobian is kept while the
  // residual keeps halving (chord steps) and refreshed otherwise.
  VectorXd fx = f(x);
  MatrixXd pinv;
  bool fresh = false;
  for (int it = 0; it < max_iter; ++it) {
    if (fx.size() == 0 || fx.cwiseAbs().maxCoeff() < tol) return x;
    if (pinv.size() == 0) {
      pinv = linalg::pseudo_inverse(jac(x), 1e-10);
      fresh = true;
    }
    const VectorXd step = -pinv * fx;
    double alpha = 1.0;
    bool improved = false;
    VectorXd fn;
    for (int k = 0; k < 30; ++k) {
      const VectorXd xn = x + alpha * step;
      try {
        fn = f(xn);
      } catch (const EvalDomainError&) {
        alpha *= 0.5;
        continue;
      }
      if (fn.allFinite() && fn.norm() < fx.norm()) {
        improved = true;
        x = xn;
        break;
      }
      if (!fresh) break;
      alpha *= 0.5;
    }
    if (!improved) {
      if (fresh) break;
      pinv.resize(0, 0);
      continue;
    }
    const bool fast = fn.norm() < 0.5 * fx.norm();
    fx = fn;
    fresh = false;
    if (!fast || alpha < 1.0) pinv.resize(0, 0);
  }
  if (fx.size() == 0 || fx.cwiseAbs().maxCoeff() < tol) return x;
  return std::nullopt;
}

// ---------------------------------------------------------------- tower

std::vector<ConstraintFunction> ConstraintTower::all() const {
  std::vector<ConstraintFunction> out = ambient;
  for (const auto& l : levels) out.insert(out.end(), l.begin(), l.end());
  return out;
}

std::size_t ConstraintTower::count() const { return all().size(); }

std::vector<BlockPtr> ConstraintTower::blocks() const {
  std::vector<BlockPtr> out;
  for (const auto& l : levels) {
    if (!l.empty()) out.push_back(l.front().block);
  }
  return out;
}

VectorXd ConstraintTower::values(const VectorXd& x) const {
  std::vector<VectorXd> parts;
  if (!ambient.empty()) parts.push_back(system->ambient_values(x));
  for (const auto& b : blocks()) parts.push_back(b->values(x));
  Eigen::Index n = 0;
  for (const auto& p : parts) n += p.size();
  VectorXd out(n);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.segment(at, p.size()) = p;
    at += p.size();
  }
  return out;
}

MatrixXd ConstraintTower::generated_jacobian(const VectorXd& x) const { return prior_jacobian(blocks(), x); }

MatrixXd ConstraintTower::jacobian(const VectorXd& x) const {
  std::vector<MatrixXd> parts;
  if (!ambient.empty()) parts.push_back(system->ambient_jacobian(x));
  parts.push_back(generated_jacobian(x));
  return stack_rows(parts, x.size());
}

namespace {

struct StepOutcome {
  std::vector<std::size_t> accepted;
  std::optional<InfeasibilityCertificate> infeasible;
};

// Decides which candidates of a block become new constraints.
StepOutcome classify_candidates(const ConstraintBlock& block, const ConstraintTower& tower,
                                const std::vector<VectorXd>& pts, const ConstraintConfig& cfg,
                                const std::vector<double>& gamma_norms, int level,
                                const std::function<std::string(std::size_t)>& describe) {
  StepOutcome out;
  const std::size_t nc = block.size();
  std::vector<VectorXd> vals;
  for (const auto& p : pts) vals.push_back(block.values(p));
  std::vector<MatrixXd> known;
  std::vector<MatrixXd> cand_jac;
  std::vector<Eigen::Index> base_rows;
  for (std::size_t c = 0; c < nc; ++c) {
    bool vanishes = true;
    for (std::size_t s = 0; s < pts.size(); ++s) {
      if (std::abs(vals[s][ix(c)]) > cfg.value_tol * (1.0 + gamma_norms[s])) vanishes = false;
    }
    if (vanishes) continue;
    if (known.empty()) {
      for (const auto& p : pts) {
        known.push_back(tower.jacobian(p));
        base_rows.push_back(known.back().rows());
        cand_jac.push_back(block.jacobian(p));
      }
    }
    // Independence against everything known so far, and against what was
    // known before this step; a candidate that only depends on constraints
    // accepted in this step is revisited by the next step.
    std::vector<int> indep;
    std::vector<int> indep_base;
    std::vector<double> residuals;
    for (std::size_t s = 0; s < pts.size(); ++s) {
      const VectorXd g = cand_jac[s].row(ix(c)).transpose();
      double scale = std::max(1.0, g.norm());
      for (Eigen::Index r = 0; r < known[s].rows(); ++r) scale = std::max(scale, known[s].row(r).norm());
      const double res = span_residual(known[s], g);
      const double res_base = span_residual(known[s].topRows(base_rows[s]), g);
      residuals.push_back(res_base);
      indep.push_back(res > cfg.grad_rank_tol * scale ? 1 : 0);
      indep_base.push_back(res_base > cfg.grad_rank_tol * scale ? 1 : 0);
    }
    const auto all = static_cast<long>(pts.size());
    const auto n_indep = std::count(indep.begin(), indep.end(), 1);
    const auto n_indep_base = std::count(indep_base.begin(), indep_base.end(), 1);
    if (n_indep == all) {
      out.accepted.push_back(c);
      for (std::size_t s = 0; s < pts.size(); ++s) {
        MatrixXd grown(known[s].rows() + 1, known[s].cols());
        grown << known[s], cand_jac[s].row(ix(c));
        known[s] = grown;
      }
    } else if (n_indep == 0 && n_indep_base == all) {
      continue;
    } else if (n_indep_base == 0) {
      InfeasibilityCertificate cert;
      cert.level = level;
      cert.constraint_id = "phi" + std::to_string(level) + "." + std::to_string(c + 1);
      cert.source = describe(c);
      for (const auto& v : vals) cert.values.push_back(v[ix(c)]);
      cert.grad_residuals = residuals;
      out.infeasible = cert;
      return out;
    } else {
      std::vector<int> ranks;
      for (std::size_t s = 0; s < pts.size(); ++s) ranks.push_back(static_cast<int>(known[s].rows()) + indep[s]);
      throw RankNotConstant("generated constraint gradient rank varies across seeds", ranks);
    }
  }
  return out;
}

}  // namespace

ConstraintTower run_algorithm(const ConstraintSystem& system, const std::vector<VectorXd>& seeds, Variant variant) {
  auto sys = std::make_shared<ConstraintSystem>(system);
  const ConstraintConfig& cfg = sys->config();
  ConstraintTower tower;
  tower.variant = variant;
  for (std::size_t i = 0; i < sys->ambient().size(); ++i) {
    ConstraintFunction f;
    f.id = "psi" + std::to_string(i + 1);
    f.level = 0;
    f.source = "user";
    f.expression = sys->ambient()[i].str();
    f.block = field_block(sys->ambient());
    f.index = i;
    tower.ambient.push_back(f);
  }

  std::vector<VectorXd> pts;
  for (const auto& s : seeds) {
    if (static_cast<std::size_t>(s.size()) != sys->structure().chart().dim()) {
      throw DimensionMismatch(sys->structure().chart().dim(), static_cast<std::size_t>(s.size()));
    }
    if (sys->ambient().empty()) {
      pts.push_back(s);
      continue;
    }
    auto p = newton_project([&](const VectorXd& x) { return sys->ambient_values(x); },
                            [&](const VectorXd& x) { return sys->ambient_jacobian(x); }, s, cfg.newton_tol,
                            cfg.newton_max_iter);
    if (p) {
      pts.push_back(*p);
    } else {
      ++tower.dropped_seeds;
    }
  }
  if (pts.empty()) {
    tower.system = sys;
    tower.certificate = InfeasibilityCertificate{"ambient", 0, "seed projection", {}, {}};
    return tower;
  }
  sys->anchor(pts.front());
  tower.system = sys;
  tower.rank_history.push_back(static_cast<int>(sys->ambient().size()));

  std::vector<BlockPtr> pending_hat;
  auto gamma_norms = [&] {
    std::vector<double> out;
    for (const auto& p : pts) out.push_back(sys->reduce(p).gamma.norm());
    return out;
  };

  auto project_all = [&] {
    std::vector<VectorXd> kept;
    for (const auto& p : pts) {
      auto q = newton_project([&](const VectorXd& x) { return tower.values(x); },
                              [&](const VectorXd& x) { return tower.jacobian(x); }, p, cfg.newton_tol,
                              cfg.newton_max_iter);
      if (q) {
        kept.push_back(*q);
      } else {
        ++tower.dropped_seeds;
      }
    }
    pts = std::move(kept);
    return !pts.empty();
  };

  auto add_level = [&](const BlockPtr& block, int level, const std::function<std::string(std::size_t)>& source) {
    std::vector<ConstraintFunction> fs;
    for (std::size_t i = 0; i < block->size(); ++i) {
      ConstraintFunction f;
      f.id = "phi" + std::to_string(level) + "." + std::to_string(i + 1);
      f.level = level;
      f.source = source(i);
      f.block = block;
      f.index = i;
      fs.push_back(f);
    }
    tower.levels.push_back(fs);
    tower.rank_history.push_back(static_cast<int>(tower.count()));
  };

  for (;;) {
    bool added = false;

    // complement step
    if (tower.steps >= cfg.max_levels) throw MaxLevelsExceeded("constraint algorithm did not stabilize");
    const int level = ++tower.steps;
    {
      const auto prior = tower.blocks();
      const Reduced r0 = sys->reduce(pts.front());
      const MatrixXd m0 = complement_matrix(r0, prior_jacobian(prior, pts.front()));
      const double tol = complement_tol(cfg, !prior.empty());
      const auto frame = linalg::pivot_frame(m0, tol);
      std::vector<int> ranks;
      for (const auto& p : pts) {
        ranks.push_back(linalg::rank(complement_matrix(sys->reduce(p), prior_jacobian(prior, p)), tol));
      }
      for (int rk : ranks) {
        if (rk != static_cast<int>(frame.pivots.size())) {
          throw RankNotConstant("complement rank varies across seeds", ranks);
        }
      }
      std::vector<std::size_t> cols(frame.free.size());
      for (std::size_t i = 0; i < cols.size(); ++i) cols[i] = i;
      auto block = std::make_shared<BarBlock>(sys, prior, frame, cols);
      const auto& names = sys->structure().chart().names();
      auto describe = [&, block](std::size_t i) {
        const int col = block->free_column(i);
        std::string what = col < static_cast<int>(r0.flat.rows()) ? std::to_string(col) : "multiplier";
        if (sys->ambient().empty() && col < static_cast<int>(names.size())) what = names[static_cast<std::size_t>(col)];
        return "complement frame, step " + std::to_string(level) + ", free column " + what;
      };
      auto outcome = classify_candidates(*block, tower, pts, cfg, gamma_norms(), level, describe);
      if (outcome.infeasible) {
        tower.certificate = outcome.infeasible;
        tower.samples = pts;
        return tower;
      }
      if (!outcome.accepted.empty()) {
        auto chosen = block->select(outcome.accepted);
        std::vector<std::string> sources;
        for (auto c : outcome.accepted) sources.push_back(describe(c));
        add_level(chosen, level, [&](std::size_t i) { return sources[i]; });
        pending_hat.push_back(chosen);
        added = true;
        if (!project_all()) {
          tower.certificate = InfeasibilityCertificate{"projection", level, "seed projection", {}, {}};
          return tower;
        }
      }
    }

    // tangency step
    if (variant == Variant::reeb_tangency) {
      while (!pending_hat.empty()) {
        if (tower.steps >= cfg.max_levels) throw MaxLevelsExceeded("constraint algorithm did not stabilize");
        const int hl = ++tower.steps;
        std::size_t rows = 0;
        for (const auto& b : pending_hat) rows += b->size();
        std::vector<std::size_t> idx(rows);
        for (std::size_t i = 0; i < rows; ++i) idx[i] = i;
        std::vector<std::string> src_ids;
        for (const auto& l : tower.levels) {
          for (const auto& f : l) {
            for (const auto& b : pending_hat) {
              if (f.block == b) src_ids.push_back(f.id);
            }
          }
        }
        auto block = std::make_shared<HatBlock>(sys, pending_hat, idx);
        pending_hat.clear();
        auto describe = [src_ids](std::size_t i) {
          return "Reeb derivative of " + (i < src_ids.size() ? src_ids[i] : std::string("?"));
        };
        auto outcome = classify_candidates(*block, tower, pts, cfg, gamma_norms(), hl, describe);
        if (outcome.infeasible) {
          tower.certificate = outcome.infeasible;
          tower.samples = pts;
          return tower;
        }
        if (!outcome.accepted.empty()) {
          auto chosen = block->select(outcome.accepted);
          std::vector<std::string> sources;
          for (auto c : outcome.accepted) sources.push_back(describe(c));
          add_level(chosen, hl, [&](std::size_t i) { return sources[i]; });
          pending_hat.push_back(chosen);
          added = true;
          if (!project_all()) {
            tower.certificate = InfeasibilityCertificate{"projection", hl, "seed projection", {}, {}};
            return tower;
          }
        }
      }
    }

    if (!added) {
      tower.stabilized = true;
      tower.samples = pts;
      return tower;
    }
  }
}

// ---------------------------------------------------------------- motion

MatrixXd complement_basis(const Reduced& r, const MatrixXd& g, double rank_tol) {
  const MatrixXd m = complement_matrix(r, g);
  const MatrixXd n = linalg::null_space(m, rank_tol);
  const MatrixXd w = r.frame * n.topRows(r.flat.rows());
  return linalg::range(w, 1e-10);
}

double complement_pairing(const Reduced& r, const MatrixXd& g, double rank_tol) {
  const MatrixXd w = complement_basis(r, g, rank_tol);
  if (w.cols() == 0) return 0.0;
  return (w.transpose() * r.gamma).cwiseAbs().maxCoeff();
}

namespace {

struct RestrictedSolve {
  VectorXd field;
  MatrixXd freedom;
  double residual;
};

RestrictedSolve restricted_solve(const Reduced& r, const MatrixXd& g, double rank_tol) {
  const MatrixXd gk = g * r.frame;
  const MatrixXd k = gk.rows() == 0 ? MatrixXd::Identity(r.flat.cols(), r.flat.cols())
                                    : linalg::null_space(gk, rank_tol);
  const MatrixXd a = r.flat * k;
  const VectorXd rhs = r.frame.transpose() * r.gamma;
  const VectorXd y = linalg::min_norm_solve(a, rhs, rank_tol);
  RestrictedSolve out;
  out.residual = (a * y - rhs).norm();
  out.field = r.frame * (k * y);
  const MatrixXd free = r.frame * (k * linalg::null_space(a, rank_tol));
  out.freedom = linalg::range(free, 1e-10);
  return out;
}

}  // namespace

double restricted_solve_residual(const Reduced& r, const MatrixXd& g, double rank_tol) {
  return restricted_solve(r, g, rank_tol).residual;
}

double reeb_tangency_test(const ConstraintTower& tower, const std::vector<VectorXd>& samples) {
  const auto& sys = *tower.system;
  const auto& cfg = sys.config();
  double worst = 0.0;
  auto reeb_h = [&](const VectorXd& x) {
    const Reduced r = sys.reduce(x);
    VectorXd v(1);
    v[0] = r.reeb.dot(r.dh);
    return v;
  };
  for (const auto& x : samples) {
    const Reduced r = sys.reduce(x);
    const MatrixXd g = tower.generated_jacobian(x);
    const MatrixXd w = complement_basis(r, g, complement_tol(cfg, g.rows() > 0));
    if (w.cols() == 0) continue;
    const VectorXd grad = fd_jacobian(reeb_h, x, cfg.fd_step).row(0).transpose();
    worst = std::max(worst, (w.transpose() * grad).cwiseAbs().maxCoeff());
  }
  return worst;
}

MotionSolution solve_motion(const ConstraintTower& tower, const VectorXd& x, double on_manifold_tol) {
  const auto& sys = *tower.system;
  const auto& cfg = sys.config();
  const VectorXd vals = tower.values(x);
  if (vals.size() > 0 && vals.cwiseAbs().maxCoeff() > on_manifold_tol) {
    throw NotOnManifold("point violates tower constraints by " + std::to_string(vals.cwiseAbs().maxCoeff()));
  }
  const Reduced r = sys.reduce(x);
  const MatrixXd g = tower.generated_jacobian(x);
  const RestrictedSolve s = restricted_solve(r, g, complement_tol(cfg, g.rows() > 0));
  if (s.residual > cfg.residual_tol * (1.0 + r.gamma.norm())) {
    throw NoSolution("no tangent solution of the equations of motion (residual " + std::to_string(s.residual) + ")");
  }
  MotionSolution out;
  out.field = s.field;
  out.freedom = s.freedom;
  out.residual = s.residual;
  const MatrixXd j = tower.jacobian(x);
  out.tangency = j.rows() == 0 ? 0.0 : (j * s.field).cwiseAbs().maxCoeff();
  return out;
}

}  // namespace contactum
