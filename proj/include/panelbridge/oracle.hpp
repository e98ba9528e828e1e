#pragma once

#include <vector>

#include <Eigen/Dense>

#include "panelbridge/bridge.hpp"
#include "panelbridge/dgp.hpp"

namespace panelbridge::oracle {

using bridge::BridgeCoefficients;
using bridge::MomentSystem;
using dgp::ArDgpConfig;
using dgp::FactorDgpConfig;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Conditional (U, X) moments under the known selection model, estimated from
// 10^6 fixed-seed draws with propensity weighting. Cached per config.
struct SelectionMoments {
  double p_treated = 0.0;
  double p_control = 0.0;
  MatrixXd second_moment_control;  // E[(U;X)(U;X)' | A=0], (r+d) x (r+d)
  MatrixXd second_moment_treated;  // E[(U;X)(U;X)' | A=1]
  VectorXd mean_control;           // E[(U;X) | A=0]
  VectorXd mean_treated;           // E[(U;X) | A=1]

  MatrixXd cov_treated() const {
    return second_moment_treated - mean_treated * mean_treated.transpose();
  }
};

const SelectionMoments& selection_moments(const FactorDgpConfig& config);

struct PopulationMoments {
  MatrixXd k;                    // (T1+d) x (T0+d)
  VectorXd b;                    // T1+d
  VectorXd treated_w_mean;       // T0+d
  MatrixXd second_moment_block;  // E[(U;X)(U;X)' | A=0]
  double p_control = 0.0;
};

// K = P(A=0) [V_post B_post; 0 I] E[(U;X)(U;X)'|A=0] [V_pre' 0; B_pre' I]
// and b = K theta* for any bridge coefficient.
PopulationMoments population_K_b(const FactorDgpConfig& config);

// Population counterfactual mean for the treated, (V_0; b_0)' E[(U;X)|A=1].
double population_gamma(const FactorDgpConfig& config);

// Population-moment system usable by the estimation routines; n is a
// bookkeeping sample size only.
MomentSystem to_moment_system(const PopulationMoments& pm, int t0, int d, int n = 1000000);

// The affine solution set of V_pre' theta1 = V_0 with theta2 pinned.
struct BridgeSet {
  BridgeCoefficients particular;
  MatrixXd nullspace_basis;  // T0 x (T0 - r), orthonormal columns of ker(V_pre')

  int dimension() const { return static_cast<int>(nullspace_basis.cols()); }
};

BridgeSet bridge_set(const FactorDgpConfig& config);

// A member theta(c) = particular + basis c in theta1, theta2 re-derived.
BridgeCoefficients bridge_set_member(const FactorDgpConfig& config, const BridgeSet& set,
                                     const VectorXd& coeffs);

// theta*_min = K^+ b.
BridgeCoefficients theta_min_oracle(const PopulationMoments& pm, int t0, int d);

// Unique minimizer of theta' M theta over the bridge set, via the KKT system
// of the equality-constrained quadratic program.
BridgeCoefficients theta_M_oracle(const FactorDgpConfig& config, const MatrixXd& m_matrix);

struct IdentificationReport {
  bool cond1 = false;  // E[(U;X)(U;X)'|A=0] full rank
  bool cond2 = false;  // [V_post B_post; 0 I] full column rank r+d
  int rank1 = 0;
  int rank2 = 0;
  double margin1 = 0.0;  // smallest/largest singular value
  double margin2 = 0.0;  // (r+d)-th/largest singular value

  bool identified() const { return cond1 && cond2; }
  std::string to_json() const;
};

IdentificationReport identification_check(const FactorDgpConfig& config);

// AR-model conditional moments, plug-in with propensity weighting.
struct ArSelectionMoments {
  double p_treated = 0.0;
  double p_control = 0.0;
  MatrixXd second_moment_u0x;     // E[(U_0;X)(U_0;X)'|A=0]
  VectorXd mean_u0x_control;      // E[(U_0;X)|A=0]
  VectorXd mean_u0x_treated;      // E[(U_0;X)|A=1]
  MatrixXd sigma_u_init;          // E[U_{-T0} U_{-T0}'|A=0]
  MatrixXd sigma_u_init_x;        // E[U_{-T0} X'|A=0]
  std::vector<MatrixXd> sigma_eta;    // per t = -T0..T1-1, E[eta_t eta_t'|A=0]
  std::vector<MatrixXd> sigma_eta_x;  // per t, E[eta_t X'|A=0]
};

const ArSelectionMoments& ar_selection_moments(const ArDgpConfig& config);

struct TvStructure {
  MatrixXd rank_matrix;   // T0 x r pre-period structure (general form uses G blocks)
  MatrixXd v_post_tilde;  // T1 x r, rows V_t' Gamma_{(t-1):0}
  MatrixXd g11, g12, g21, g22;  // partitioned inverse of E[(U_0;X)(U_0;X)'|A=0]
  int rank_pre = 0;             // rank of rank_matrix (needs r)
  int rank_post = 0;            // rank of [v_post_tilde B_post; 0 I] (needs r+d)
  double margin_pre = 0.0;
  double margin_post = 0.0;

  bool identified(int r, int d) const { return rank_pre == r && rank_post == r + d; }
};

TvStructure tv_rank_matrix(const ArDgpConfig& config, bool general = false);

// Closed-form moment covariance Sigma_m at a bridge coefficient.
MatrixXd moment_covariance(const FactorDgpConfig& config, const BridgeCoefficients& theta);

struct AsymptoticVariance {
  double total = 0.0;
  double treated_term = 0.0;  // quadratic form in Cov((U,X)|A=1) plus pre-noise carry
  double moment_term = 0.0;   // Psi-weighted post-moment contribution
};

// E[psi^2] at the population quantities for a given weighting-matrix limit.
AsymptoticVariance asymptotic_variance_oracle(const FactorDgpConfig& config,
                                              const BridgeCoefficients& theta_target,
                                              const MatrixXd& weight_limit);

}  // namespace panelbridge::oracle
