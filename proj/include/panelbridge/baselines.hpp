#pragma once

#include <string>

#include <Eigen/Dense>

#include "panelbridge/dgp.hpp"
#include "panelbridge/panel.hpp"

namespace panelbridge::baselines {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct BaselineEstimate {
  double gamma_hat = 0.0;
  std::string method;
  VectorXd coefficients;  // theta_HR or w_VR when applicable
  MatrixXd factor_u;      // 4-step estimator: top-r eigenvector block
  VectorXd factor_v0;     // 4-step estimator: regression coefficients at t=0
  bool ridge_fallback = false;
};

// gamma = mean_pre(treated) - mean_pre(control) + mean_0(control).
BaselineEstimate estimate_did(const PanelDataset& data);

// Control-side regression of Y_0 on (Y_pre, X) without intercept; the fitted
// transform is averaged over treated units.
BaselineEstimate estimate_horizontal(const PanelDataset& data, double ridge = 0.0);

// Regression of the treated-average pre path on control pre outcomes across
// time. The unregularized form needs T0 > N0; otherwise a small ridge is
// applied and flagged.
BaselineEstimate estimate_vertical(const PanelDataset& data);

// Four-step factor estimator: cell-averaged second-moment matrix, top-r
// eigenvectors, cross-sectional regression at t = 0, imputation.
BaselineEstimate estimate_factor4step(const PanelDataset& data, int r);

struct BiasOracleResult {
  double bias_term = 0.0;      // B_HR or B_VR on the realized draws
  double variance_term = 0.0;  // V_HR or V_VR on the realized draws
  double bias_upper_bound = 0.0;  // +inf when the bound's precondition fails
};

// Large-N0 horizontal-regression limit, conditional on the realized latent
// draws (no covariates in the analyzed form).
BiasOracleResult bias_oracle_horizontal(const dgp::GroundTruth& truth,
                                        const dgp::FactorDgpConfig& config);

// Large-T0 vertical-regression limit, conditional on realized draws.
BiasOracleResult bias_oracle_vertical(const dgp::GroundTruth& truth,
                                      const dgp::FactorDgpConfig& config);

}  // namespace panelbridge::baselines
