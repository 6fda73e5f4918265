#pragma once

#include <Eigen/Dense>

#include <initializer_list>
#include <random>
#include <vector>

namespace support {

inline Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double d : v) x[i++] = d;
  return x;
}

inline Eigen::VectorXd unit(Eigen::Index dim, Eigen::Index i) { return Eigen::VectorXd::Unit(dim, i); }

// Orthogonal projector onto the column span of a (SVD based, independent of
// the library's helpers).
inline Eigen::MatrixXd proj(const Eigen::MatrixXd& a) {
  if (a.cols() == 0) return Eigen::MatrixXd::Zero(a.rows(), a.rows());
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU);
  const auto& s = svd.singularValues();
  Eigen::Index r = 0;
  while (r < s.size() && s[r] > 1e-10 * s[0]) ++r;
  const Eigen::MatrixXd u = svd.matrixU().leftCols(r);
  return u * u.transpose();
}

inline Eigen::VectorXd random_point(std::mt19937& rng, Eigen::Index dim, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::VectorXd x(dim);
  for (Eigen::Index i = 0; i < dim; ++i) x[i] = u(rng);
  return x;
}

}  // namespace support
