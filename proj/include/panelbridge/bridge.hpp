#pragma once

#include <string>

#include <Eigen/Dense>

#include "panelbridge/panel.hpp"

namespace panelbridge::bridge {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

// Empirical GMM building blocks, with Z = (Y_post; X) and W = (Y_pre; X):
//   k_hat = E_n[(1-A) Z W'],  b_hat = E_n[(1-A) Z Y_0],
//   treated_w_mean = E_n[A W] / E_n[A].
struct MomentSystem {
  MatrixXd k_hat;           // (T1+d) x (T0+d)
  VectorXd b_hat;           // T1+d
  VectorXd treated_w_mean;  // T0+d
  double p_treated = 0.0;   // E_n[A]
  int n = 0;
  int t0 = 0;  // pre-period count, so (theta1, theta2) can be split off
  int d = 0;
};

// Transformation weights on (Y_pre; X).
struct BridgeCoefficients {
  VectorXd theta1;  // T0
  VectorXd theta2;  // d

  VectorXd stacked() const {
    VectorXd v(theta1.size() + theta2.size());
    v << theta1, theta2;
    return v;
  }
  static BridgeCoefficients split(const VectorXd& v, int t0) {
    return BridgeCoefficients{v.head(t0), v.tail(v.size() - t0)};
  }
};

struct WeightSpec {
  enum class Kind { Identity, Fixed, OptimalTwoStage };
  Kind kind = Kind::Identity;
  MatrixXd fixed;        // Kind::Fixed, symmetric positive definite
  double jitter = -1.0;  // Kind::OptimalTwoStage; < 0 selects 1e-8 * trace/dim

  static WeightSpec identity() { return {}; }
  static WeightSpec fixed_matrix(const MatrixXd& w) {
    return {Kind::Fixed, w, -1.0};
  }
  static WeightSpec optimal_two_stage(double jitter = -1.0) {
    return {Kind::OptimalTwoStage, MatrixXd(), jitter};
  }
};

// Identity / Fixed only; a two-stage weight needs data and is resolved inside
// the estimation drivers.
MatrixXd resolve_weight(const WeightSpec& spec, int dim);

struct Diagnostics {
  double moment_residual_norm = 0.0;  // || b_hat - k_hat theta ||
  VectorXd k_singular_values;
  int effective_rank = 0;
};

struct EstimateResult {
  double gamma_hat = 0.0;
  BridgeCoefficients theta;
  double sigma2_hat = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double lambda_used = 0.0;
  MatrixXd weight_used;  // the (T1+d) moment weight actually applied
  Diagnostics diagnostics;

  std::string to_json() const;
};

MomentSystem build_moment_system(const PanelDataset& data);

// lambda = c * n^(-beta); Theorem-level rates need beta inside (1/2, 1).
double default_lambda(int n, double c = 1.0, double beta = 0.75);

// theta = (k' w k + lambda I)^{-1} k' w b, the L2-regularized GMM solution
// targeting the minimal bridge coefficient. lambda must be positive.
BridgeCoefficients fit_bridge(const MomentSystem& system, const WeightSpec& weight, double lambda);

// General penalty lambda * theta' M theta; M = I reproduces fit_bridge
// bit-for-bit.
BridgeCoefficients fit_bridge_weighted_M(const MomentSystem& system, const MatrixXd& m_matrix,
                                         const WeightSpec& weight, double lambda);

// gamma = treated mean of W' theta.
double estimate_treated_mean(const MomentSystem& system, const BridgeCoefficients& theta);

// Per-unit plug-in influence values psi_i; the theta-direction matrix uses
// the lambda-regularized inverse, mirroring the variance estimator.
VectorXd influence_values(const PanelDataset& data, const BridgeCoefficients& theta,
                          double gamma_hat, const MatrixXd& weight, double lambda);

struct VarianceCi {
  double sigma2 = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

// sigma2 = E_n[psi^2] (uncentered) and gamma +- z_{1-rho/2} sqrt(sigma2 / n).
VarianceCi variance_and_ci(const VectorXd& psi, double gamma_hat, int n, double rho);

// Full single-dataset estimation under any WeightSpec (two-stage included).
EstimateResult estimate_bridge(const PanelDataset& data, const WeightSpec& weight, double lambda,
                               double rho = 0.05);

// Stage 1 identity weight -> Sigma_m estimate (symmetrized, eigenvalue floor)
// -> stage 2 with its inverse.
EstimateResult fit_two_stage(const PanelDataset& data, double lambda, double jitter = -1.0,
                             double rho = 0.05);

// Joint weighting for the whole-population counterfactual mean.
struct JointWeightSpec {
  enum class Kind { IdentityZero, Fixed, Optimal };
  Kind kind = Kind::IdentityZero;
  MatrixXd w11;       // (T1+d) x (T1+d)
  RowVectorXd w21;    // 1 x (T1+d) cross-moment block
  double jitter = -1.0;

  static JointWeightSpec identity() { return {}; }
  static JointWeightSpec fixed_blocks(const MatrixXd& w11, const RowVectorXd& w21) {
    return {Kind::Fixed, w11, w21, -1.0};
  }
  static JointWeightSpec optimal(double jitter = -1.0) {
    return {Kind::Optimal, MatrixXd(), RowVectorXd(), jitter};
  }
};

// gamma solves E_n[g(O; theta, gamma) - W21 W11^{-1} m(O; theta)] = 0 with
// g = W' theta - gamma over all units.
EstimateResult estimate_population_mean(const PanelDataset& data, double lambda,
                                        const JointWeightSpec& weight = {}, double rho = 0.05);

}  // namespace panelbridge::bridge
