#include "contactum/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "contactum/error.hpp"

namespace contactum::linalg {

namespace {

Eigen::JacobiSVD<MatrixXd> svd(const MatrixXd& a) {
  return Eigen::JacobiSVD<MatrixXd>(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
}

int count_above(const VectorXd& s, double rank_tol, double scale = 0.0) {
  if (s.size() == 0 || s[0] == 0.0) return 0;
  const double cut = rank_tol * std::max(s[0], scale);
  int r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s[i] > cut) ++r;
  }
  return r;
}

}  // namespace

int rank(const MatrixXd& a, double rank_tol) {
  if (a.size() == 0) return 0;
  Eigen::JacobiSVD<MatrixXd> d(a);
  return count_above(d.singularValues(), rank_tol);
}

MatrixXd null_space(const MatrixXd& a, double rank_tol, double scale) {
  const auto cols = a.cols();
  if (a.rows() == 0) return MatrixXd::Identity(cols, cols);
  auto d = svd(a);
  const int r = count_above(d.singularValues(), rank_tol, scale);
  return d.matrixV().rightCols(cols - r);
}

MatrixXd range(const MatrixXd& a, double rank_tol) {
  if (a.cols() == 0) return MatrixXd(a.rows(), 0);
  auto d = svd(a);
  const int r = count_above(d.singularValues(), rank_tol);
  return d.matrixU().leftCols(r);
}

MatrixXd pseudo_inverse(const MatrixXd& a, double rank_tol) {
  if (a.size() == 0) return MatrixXd::Zero(a.cols(), a.rows());
  Eigen::JacobiSVD<MatrixXd> d(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = d.singularValues();
  const int r = count_above(s, rank_tol);
  const VectorXd inv = s.head(r).cwiseInverse();
  return d.matrixV().leftCols(r) * inv.asDiagonal() * d.matrixU().leftCols(r).transpose();
}

VectorXd min_norm_solve(const MatrixXd& a, const VectorXd& b, double rank_tol) {
  if (a.size() == 0) return VectorXd::Zero(a.cols());
  Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod;
  cod.setThreshold(rank_tol);
  cod.compute(a);
  return cod.solve(b);
}

MatrixXd projector(const MatrixXd& basis, double rank_tol) {
  const MatrixXd q = range(basis, rank_tol);
  return q * q.transpose();
}

double condition(const MatrixXd& a) {
  if (a.size() == 0) return 1.0;
  Eigen::JacobiSVD<MatrixXd> d(a);
  const auto& s = d.singularValues();
  const double smin = s[s.size() - 1];
  if (smin == 0.0) return std::numeric_limits<double>::infinity();
  return s[0] / smin;
}

PivotFrame pivot_frame(const MatrixXd& a, double tol) {
  PivotFrame out;
  MatrixXd w = a;
  const double scale = a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
  std::vector<bool> used(static_cast<std::size_t>(a.rows()), false);
  for (auto c = static_cast<int>(a.cols()) - 1; c >= 0; --c) {
    int best = -1;
    double best_abs = 0.0;
    for (int r = 0; r < a.rows(); ++r) {
      if (used[static_cast<std::size_t>(r)]) continue;
      const double v = std::abs(w(r, c));
      if (v > best_abs) {
        best_abs = v;
        best = r;
      }
    }
    if (best < 0 || best_abs <= tol * scale) {
      out.free.push_back(c);
      continue;
    }
    used[static_cast<std::size_t>(best)] = true;
    out.rows.push_back(best);
    out.pivots.push_back(c);
    for (int r = 0; r < a.rows(); ++r) {
      if (used[static_cast<std::size_t>(r)]) continue;
      const double f = w(r, c) / w(best, c);
      w.row(r) -= f * w.row(best);
    }
  }
  std::reverse(out.free.begin(), out.free.end());
  return out;
}

MatrixXd frame_vectors(const MatrixXd& a, const PivotFrame& frame) {
  const auto k = static_cast<Eigen::Index>(frame.pivots.size());
  MatrixXd sub(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      sub(i, j) = a(frame.rows[static_cast<std::size_t>(i)], frame.pivots[static_cast<std::size_t>(j)]);
    }
  }
  Eigen::FullPivLU<MatrixXd> lu(sub);
  if (k > 0 && !lu.isInvertible()) {
    throw RankNotConstant("pivot block became singular away from the reference point", {});
  }
  MatrixXd out = MatrixXd::Zero(a.cols(), static_cast<Eigen::Index>(frame.free.size()));
  for (std::size_t m = 0; m < frame.free.size(); ++m) {
    const int f = frame.free[m];
    const auto col = static_cast<Eigen::Index>(m);
    out(f, col) = 1.0;
    if (k == 0) continue;
    VectorXd rhs(k);
    for (Eigen::Index i = 0; i < k; ++i) rhs[i] = a(frame.rows[static_cast<std::size_t>(i)], f);
    const VectorXd y = lu.solve(rhs);
    for (Eigen::Index j = 0; j < k; ++j) out(frame.pivots[static_cast<std::size_t>(j)], col) -= y[j];
  }
  return out;
}

}  // namespace contactum::linalg
