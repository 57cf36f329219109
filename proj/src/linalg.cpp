#include "invrisk/linalg.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <string>

#include "invrisk/errors.hpp"

namespace invrisk {
namespace {

void require_finite(const Eigen::MatrixXd& a) {
  if (!a.allFinite()) {
    throw ConfigError("svd input contains non-finite values");
  }
}

// Flip each singular pair so the dominant entry of the right singular vector
// is positive. SVD signs are otherwise arbitrary and backend-dependent.
void canonicalize_signs(SvdBundle& s) {
  for (Eigen::Index i = 0; i < s.d(); ++i) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index j = 0; j < s.m(); ++j) {
      double mag = std::abs(s.vt(i, j));
      if (mag > best) {
        best = mag;
        arg = j;
      }
    }
    if (s.vt(i, arg) < 0.0) {
      s.vt.row(i) = -s.vt.row(i);
      s.u.col(i) = -s.u.col(i);
    }
  }
}

}  // namespace

SvdBundle svd(const Eigen::MatrixXd& a) {
  if (a.rows() == 0 || a.cols() == 0) {
    throw ConfigError("svd input must be non-empty");
  }
  require_finite(a);

  SvdBundle out;
  // Divide-and-conquer pays off once the small dimension grows; below that
  // Eigen falls back to Jacobi internally anyway.
  if (std::min(a.rows(), a.cols()) >= 16) {
    Eigen::BDCSVD<Eigen::MatrixXd> dec(a,
                                       Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (dec.info() != Eigen::Success) {
      throw NumericError("svd did not converge");
    }
    out.u = dec.matrixU();
    out.sigma = dec.singularValues();
    out.vt = dec.matrixV().transpose();
  } else {
    Eigen::JacobiSVD<Eigen::MatrixXd> dec(
        a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (dec.info() != Eigen::Success) {
      throw NumericError("svd did not converge");
    }
    out.u = dec.matrixU();
    out.sigma = dec.singularValues();
    out.vt = dec.matrixV().transpose();
  }
  canonicalize_signs(out);
  return out;
}

Eigen::MatrixXd truncated_pinv(const SvdBundle& s, Eigen::Index k) {
  if (k < 0) {
    throw ConfigError("truncation rank must be nonnegative");
  }
  Eigen::Index rank = effective_rank(s);
  if (k > rank) {
    throw ConfigError("truncation rank " + std::to_string(k) +
                      " exceeds effective rank " + std::to_string(rank));
  }
  Eigen::MatrixXd pinv = Eigen::MatrixXd::Zero(s.m(), s.p());
  for (Eigen::Index i = 0; i < k; ++i) {
    pinv += s.vt.row(i).transpose() * (s.u.col(i).transpose() / s.sigma(i));
  }
  return pinv;
}

Eigen::VectorXd project(const Eigen::MatrixXd& basis_rows,
                        const Eigen::VectorXd& v) {
  if (basis_rows.cols() != v.size()) {
    throw ConfigError("projection shape mismatch: basis has " +
                      std::to_string(basis_rows.cols()) +
                      " columns, vector has " + std::to_string(v.size()) +
                      " entries");
  }
  return basis_rows * v;
}

Eigen::Index effective_rank(const SvdBundle& s, double tol) {
  if (s.d() == 0) {
    return 0;
  }
  double cutoff = tol * s.sigma(0);
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < s.d(); ++i) {
    if (s.sigma(i) > cutoff && s.sigma(i) > 0.0) {
      ++rank;
    }
  }
  return rank;
}

}  // namespace invrisk
