#pragma once

#include <Eigen/Core>

namespace invrisk {

// Relative cutoff used both for pseudoinverse truncation and effective rank:
// singular values at or below kSvTolerance * sigma_max count as zero.
inline constexpr double kSvTolerance = 1e-12;

// Thin SVD of a p x m matrix: u is p x d, sigma is d non-increasing and
// nonnegative, vt is d x m, with d = min(p, m). Columns of u and rows of vt
// are orthonormal. Sign convention: the largest-magnitude entry of each right
// singular vector is positive, which makes decompositions reproducible across
// runs and backends.
struct SvdBundle {
  Eigen::MatrixXd u;
  Eigen::VectorXd sigma;
  Eigen::MatrixXd vt;

  Eigen::Index p() const { return u.rows(); }
  Eigen::Index m() const { return vt.cols(); }
  Eigen::Index d() const { return sigma.size(); }
};

SvdBundle svd(const Eigen::MatrixXd& a);

// Rank-k truncated Moore-Penrose pseudoinverse, m x p: V_{1:k} S_k^+ U_{1:k}^T.
// k = 0 yields the zero map. k above the effective rank is an error because
// the inverse would blow up along numerically null directions.
Eigen::MatrixXd truncated_pinv(const SvdBundle& s, Eigen::Index k);

// Coordinates of v in the row basis: basis_rows (d x m) times v (m).
Eigen::VectorXd project(const Eigen::MatrixXd& basis_rows,
                        const Eigen::VectorXd& v);

// Number of singular values above tol * sigma_max. Zero matrix has rank 0.
Eigen::Index effective_rank(const SvdBundle& s, double tol = kSvTolerance);

}  // namespace invrisk
