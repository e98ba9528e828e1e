#pragma once

#include <Eigen/Dense>

#include "panelbridge/errors.hpp"

namespace panelbridge::numerics {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Full SVD a = u * diag(s) * vt with s sorted descending.
struct SvdFactors {
  MatrixXd u;   // m x m
  VectorXd s;   // min(m, n), descending, >= 0
  MatrixXd vt;  // n x n
};

SvdFactors compute_svd(const MatrixXd& a);

// Moore-Penrose pseudoinverse via SVD. Singular values below the threshold
// are zeroed. tol < 0 selects the default 1e-12 * s_max * max(m, n).
MatrixXd pinv(const MatrixXd& a, double tol = -1.0);

// (k' w k + lambda I)^{-1} k' w b through a Cholesky factorization of the
// q x q normal-equation matrix. lambda = 0 requires k to have full column rank.
VectorXd ridge_solve(const MatrixXd& k, const MatrixXd& w, const VectorXd& b, double lambda);

// Number of singular values above tol * s_max. tol < 0 selects the
// machine-epsilon rule eps * max(m, n).
int rank_estimate(const MatrixXd& a, double tol = -1.0);

// Inverse standard normal CDF, rational approximation polished by one Newton
// step against the erfc-based CDF. Absolute error below 1e-9.
double normal_quantile(double p);

// Standard normal CDF.
double normal_cdf(double x);

}  // namespace panelbridge::numerics
