#pragma once

// Dense helpers on top of Eigen. Rank decisions use a relative threshold:
// singular values below rank_tol * (largest singular value) count as zero.

#include <Eigen/Dense>

#include <vector>

namespace contactum::linalg {

using Eigen::MatrixXd;
using Eigen::VectorXd;

int rank(const MatrixXd& a, double rank_tol);

/// Orthonormal basis (columns) of ker a.
/// Singular values at or below rank_tol * max(sigma_max, scale) count as
/// zero; pass the size of the factors when a may be pure rounding noise.
MatrixXd null_space(const MatrixXd& a, double rank_tol, double scale = 0.0);

/// Orthonormal basis (columns) of the column space of a.
MatrixXd range(const MatrixXd& a, double rank_tol);

/// Minimum-norm least-squares solution of a x = b.
VectorXd min_norm_solve(const MatrixXd& a, const VectorXd& b, double rank_tol);
MatrixXd pseudo_inverse(const MatrixXd& a, double rank_tol);

/// Orthogonal projector onto the span of the columns of basis.
MatrixXd projector(const MatrixXd& basis, double rank_tol = 1e-10);

/// 2-norm condition number; infinity for a rank-deficient square matrix.
double condition(const MatrixXd& a);

/// Pivot structure of Gaussian elimination that visits columns from the
/// last one to the first, picks the largest entry in each column (lowest
/// row index on ties) and skips columns whose best entry is below
/// tol * max|a|. Columns that are not pivots span ker a.
struct PivotFrame {
  std::vector<int> rows;
  std::vector<int> pivots;
  std::vector<int> free;
};

PivotFrame pivot_frame(const MatrixXd& a, double tol);

/// For each free column f: e_f - sum_p y_p e_p with a[rows, pivots] y = a[rows, f].
/// Evaluated at a matrix of the same shape but possibly a different point.
MatrixXd frame_vectors(const MatrixXd& a, const PivotFrame& frame);

}  // namespace contactum::linalg
