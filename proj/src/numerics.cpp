#include "panelbridge/numerics.hpp"

#include <cmath>
#include <limits>

namespace panelbridge::numerics {

namespace {

void require_finite(const MatrixXd& a, const char* who) {
  if (!a.allFinite()) throw Error(ErrorCode::NonFiniteInput, who);
}

}  // namespace

SvdFactors compute_svd(const MatrixXd& a) {
  require_finite(a, "compute_svd");
  Eigen::JacobiSVD<MatrixXd> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return SvdFactors{svd.matrixU(), svd.singularValues(), svd.matrixV().transpose()};
}

MatrixXd pinv(const MatrixXd& a, double tol) {
  require_finite(a, "pinv");
  Eigen::JacobiSVD<MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd& s = svd.singularValues();
  const double smax = s.size() > 0 ? s(0) : 0.0;
  if (tol < 0.0) tol = 1e-12 * static_cast<double>(std::max(a.rows(), a.cols()));
  const double cutoff = tol * smax;
  VectorXd sinv = VectorXd::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff && s(i) > 0.0) sinv(i) = 1.0 / s(i);
  }
  return svd.matrixV() * sinv.asDiagonal() * svd.matrixU().transpose();
}

VectorXd ridge_solve(const MatrixXd& k, const MatrixXd& w, const VectorXd& b, double lambda) {
  require_finite(k, "ridge_solve k");
  require_finite(w, "ridge_solve w");
  if (w.rows() != k.rows() || w.cols() != k.rows() || b.size() != k.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "ridge_solve shapes");
  }
  if (lambda < 0.0) throw Error(ErrorCode::DomainError, "ridge_solve lambda < 0");
  // PD check on the weight by Cholesky.
  Eigen::LLT<MatrixXd> wllt(w);
  if (wllt.info() != Eigen::Success) {
    throw Error(ErrorCode::NonPositiveDefiniteWeight, "weight matrix failed Cholesky");
  }
  const Eigen::Index q = k.cols();
  if (lambda == 0.0 && rank_estimate(k) < q) {
    throw Error(ErrorCode::SingularSystem, "lambda = 0 with rank-deficient k");
  }
  MatrixXd kw = k.transpose() * w;            // q x p
  MatrixXd normal = kw * k;                    // q x q
  normal.diagonal().array() += lambda;
  VectorXd rhs = kw * b;
  Eigen::LLT<MatrixXd> llt(normal);
  if (llt.info() == Eigen::Success) return llt.solve(rhs);
  Eigen::LDLT<MatrixXd> ldlt(normal);
  if (ldlt.info() != Eigen::Success) {
    throw Error(ErrorCode::SingularSystem, "normal equations not factorizable");
  }
  return ldlt.solve(rhs);
}

int rank_estimate(const MatrixXd& a, double tol) {
  require_finite(a, "rank_estimate");
  if (a.size() == 0) return 0;
  Eigen::JacobiSVD<MatrixXd> svd(a);
  const VectorXd& s = svd.singularValues();
  const double smax = s.size() > 0 ? s(0) : 0.0;
  if (tol < 0.0) {
    tol = std::numeric_limits<double>::epsilon() * static_cast<double>(std::max(a.rows(), a.cols()));
  }
  const double cutoff = tol * smax;
  int rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff && s(i) > 0.0) ++rank;
  }
  return rank;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::DomainError, "normal_quantile p outside (0,1)");

  // Rational approximation (Acklam), accurate to ~1.2e-9 before refinement.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    double q = p - 0.5;
    double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // One Newton step against the erfc-based CDF.
  static const double inv_sqrt2pi = 0.3989422804014327;
  double err = normal_cdf(x) - p;
  double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
  if (pdf > 0.0) x -= err / pdf;
  return x;
}

}  // namespace panelbridge::numerics
