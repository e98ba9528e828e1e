#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "panelbridge/panel.hpp"

namespace panelbridge::dgp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Treatment assignment model on (U, X). Logistic uses a linear index clipped
// so that propensities stay inside [0.01, 0.99]; Randomized ignores (U, X).
struct SelectionModel {
  enum class Kind { Logistic, Randomized };
  Kind kind = Kind::Logistic;
  VectorXd coef_u;  // r
  VectorXd coef_x;  // d
  double intercept = 0.0;
};

double propensity(const SelectionModel& sel, const VectorXd& u, const VectorXd& x);

struct CovariateSpec {
  bool first_constant = true;  // X_1 == 1 (intercept column)
  VectorXd mean;               // Gaussian part, length d - (first_constant ? 1 : 0)
  MatrixXd cov;                // PSD, same dimension as mean
};

// Y_t(0) = V_t' U + b_t' X + eps_t with time-invariant confounders U.
struct FactorDgpConfig {
  int n_units = 0;   // N
  int n_pre = 0;     // T0
  int n_post = 0;    // T1
  int n_cov = 0;     // d
  int n_factors = 0; // r

  MatrixXd loadings;   // (T0+1+T1) x r, rows V_t', t = -T0..T1
  MatrixXd cov_coefs;  // (T0+1+T1) x d, rows b_t'
  VectorXd confounder_mean;  // r
  MatrixXd confounder_cov;   // r x r PSD
  CovariateSpec covariate_spec;
  double noise_sigma = 1.0;
  // Optional equicorrelation inside the (pre, 0) and post error blocks; the
  // blocks stay independent of each other so the post moments remain valid.
  double noise_corr_pre0 = 0.0;
  double noise_corr_post = 0.0;
  SelectionModel selection;
  VectorXd effect_path;  // length T1+1 additive effect at t = 0..T1

  int n_periods() const { return n_pre + 1 + n_post; }
  VectorXd loading_at(int t) const { return loadings.row(t + n_pre).transpose(); }
  VectorXd cov_coef_at(int t) const {
    return n_cov > 0 ? VectorXd(cov_coefs.row(t + n_pre).transpose()) : VectorXd(0);
  }
  void check() const;
};

// Confounders follow U_{t} = Gamma_{t-1} U_{t-1} + eta_{t-1}; selection
// depends on (X, U_0) only.
struct ArDgpConfig {
  int n_units = 0, n_pre = 0, n_post = 0, n_cov = 0, n_factors = 0;
  MatrixXd loadings;   // (T0+1+T1) x r
  MatrixXd cov_coefs;  // (T0+1+T1) x d
  CovariateSpec covariate_spec;
  double noise_sigma = 1.0;
  SelectionModel selection;
  VectorXd effect_path;

  std::vector<MatrixXd> transitions;     // T0+T1 entries; Gamma_t maps U_t to U_{t+1}
  std::vector<MatrixXd> innovation_cov;  // 1 (shared) or T0+T1 entries, r x r PSD
  VectorXd init_mean;                    // U_{-T0} mean
  MatrixXd init_cov;                     // U_{-T0} covariance
  bool joint_normal = true;

  int n_periods() const { return n_pre + 1 + n_post; }
  VectorXd loading_at(int t) const { return loadings.row(t + n_pre).transpose(); }
  VectorXd cov_coef_at(int t) const {
    return n_cov > 0 ? VectorXd(cov_coefs.row(t + n_pre).transpose()) : VectorXd(0);
  }
  const MatrixXd& innovation_cov_at(int t) const {  // t = -T0 .. T1-1
    return innovation_cov.size() == 1 ? innovation_cov[0]
                                      : innovation_cov[static_cast<size_t>(t + n_pre)];
  }
  void check() const;
};

struct GroundTruth {
  MatrixXd confounders;  // N x r; U for the factor model, U_0 for the AR model
  std::vector<MatrixXd> confounder_path;  // AR only: n_periods entries of N x r
  std::vector<MatrixXd> innovation_path;  // AR only: T0+T1 entries of N x r
  MatrixXd noise;                         // N x n_periods idiosyncratic errors
  Eigen::VectorXi treatment;
  MatrixXd potential_y0;  // N x n_periods, Y_t(0)
  double gamma_true_sample = 0.0;      // (1/N1) sum_{treated} Y_0(0); NaN if N1 = 0
  double gamma_sample_all = 0.0;       // (1/N) sum_i Y_{i,0}(0)
  double gamma_true_population = 0.0;  // closed form under randomized selection, else NaN

  std::optional<FactorDgpConfig> factor_config;
  std::optional<ArDgpConfig> ar_config;
};

std::pair<PanelDataset, GroundTruth> simulate_factor(const FactorDgpConfig& config,
                                                     std::uint64_t seed);

// TWFE = factor model with r = 1, V_t = 1, and the time effects carried by a
// constant covariate. Rejects configs outside that shape.
std::pair<PanelDataset, GroundTruth> simulate_twfe(const FactorDgpConfig& config,
                                                   std::uint64_t seed);

std::pair<PanelDataset, GroundTruth> simulate_ar(const ArDgpConfig& config, std::uint64_t seed);

FactorDgpConfig make_twfe_config(int n_units, int n_pre, int n_post,
                                 const VectorXd& time_effects, double u_mean, double u_var,
                                 const SelectionModel& selection, double noise_sigma,
                                 const VectorXd& effect_path);

// Stable fingerprints used for plug-in moment caching and provenance stamps.
std::uint64_t fingerprint(const FactorDgpConfig& config);
std::uint64_t fingerprint(const ArDgpConfig& config);

}  // namespace panelbridge::dgp
