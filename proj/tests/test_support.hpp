#pragma once

// Shared scenario builders for the test suites.

#include <cmath>

#include "panelbridge/dgp.hpp"
#include "panelbridge/rng.hpp"

namespace pbtest {

using panelbridge::dgp::ArDgpConfig;
using panelbridge::dgp::FactorDgpConfig;
using panelbridge::dgp::SelectionModel;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Deterministic generic loadings: full-rank blocks without special structure.
inline MatrixXd generic_loadings(int periods, int r, double phase = 0.0) {
  MatrixXd v(periods, r);
  for (int t = 0; t < periods; ++t) {
    for (int j = 0; j < r; ++j) {
      v(t, j) = std::cos(0.9 * t + 1.3 * j + phase) + (j == 0 ? 1.0 : 0.0);
    }
  }
  return v;
}

inline FactorDgpConfig factor_config(int n, int t0, int t1, int r, int d, double sigma,
                                     double phase = 0.0) {
  FactorDgpConfig c;
  c.n_units = n;
  c.n_pre = t0;
  c.n_post = t1;
  c.n_cov = d;
  c.n_factors = r;
  c.loadings = generic_loadings(c.n_periods(), r, phase);
  c.cov_coefs = MatrixXd::Zero(c.n_periods(), d);
  for (int t = 0; t < c.n_periods(); ++t) {
    for (int j = 0; j < d; ++j) c.cov_coefs(t, j) = 0.4 + 0.15 * t + 0.3 * j + phase;
  }
  c.confounder_mean = VectorXd::Zero(r);
  c.confounder_cov = MatrixXd::Identity(r, r);
  c.covariate_spec.first_constant = d > 0;
  const int gauss = d - (d > 0 ? 1 : 0);
  c.covariate_spec.mean = VectorXd::Zero(gauss);
  c.covariate_spec.cov = MatrixXd::Identity(gauss, gauss);
  c.noise_sigma = sigma;
  c.selection.kind = SelectionModel::Kind::Logistic;
  c.selection.coef_u = VectorXd::Ones(r);
  c.selection.coef_x = VectorXd::Zero(d);
  c.selection.intercept = 0.0;
  c.effect_path = VectorXd::Constant(t1 + 1, 1.0);
  return c;
}

// Pure fixed-effects shape: unit loadings, no covariates.
inline FactorDgpConfig fe_config(int n, int t0, int t1, double sigma) {
  FactorDgpConfig c = factor_config(n, t0, t1, 1, 0, sigma);
  c.loadings = MatrixXd::Ones(c.n_periods(), 1);
  return c;
}

// Random identified config for sweep-style oracle checks.
inline FactorDgpConfig random_identified_config(panelbridge::rng::Stream& s) {
  const int r = 1 + static_cast<int>(s.next_u64() % 2);
  const int t0 = r + static_cast<int>(s.next_u64() % 3);
  const int t1 = r + static_cast<int>(s.next_u64() % 2);
  const int d = static_cast<int>(s.next_u64() % 3);
  FactorDgpConfig c = factor_config(200, t0, t1, r, d, 0.5 + s.next_uniform());
  for (int t = 0; t < c.n_periods(); ++t) {
    for (int j = 0; j < r; ++j) c.loadings(t, j) = s.next_normal();
    for (int j = 0; j < d; ++j) c.cov_coefs(t, j) = 0.5 * s.next_normal();
  }
  for (int j = 0; j < r; ++j) c.selection.coef_u(j) = 0.8 * s.next_normal();
  c.selection.intercept = 0.2 * s.next_normal();
  return c;
}

inline ArDgpConfig ar_config(int n, int t0, int t1, double gamma, double eta_var,
                             double sigma) {
  ArDgpConfig c;
  c.n_units = n;
  c.n_pre = t0;
  c.n_post = t1;
  c.n_cov = 0;
  c.n_factors = 1;
  c.loadings = MatrixXd::Ones(c.n_periods(), 1);
  for (int t = 0; t < c.n_periods(); ++t) c.loadings(t, 0) = 1.0 + 0.2 * std::cos(0.8 * t);
  c.cov_coefs = MatrixXd(c.n_periods(), 0);
  c.covariate_spec.first_constant = false;
  c.covariate_spec.mean = VectorXd(0);
  c.covariate_spec.cov = MatrixXd(0, 0);
  c.noise_sigma = sigma;
  c.selection.kind = SelectionModel::Kind::Logistic;
  c.selection.coef_u = VectorXd::Ones(1);
  c.selection.coef_x = VectorXd(0);
  c.effect_path = VectorXd::Constant(t1 + 1, 1.0);
  c.transitions.assign(t0 + t1, MatrixXd::Constant(1, 1, gamma));
  c.innovation_cov.assign(1, MatrixXd::Constant(1, 1, eta_var));
  c.init_mean = VectorXd::Zero(1);
  c.init_cov = MatrixXd::Identity(1, 1);
  return c;
}

}  // namespace pbtest
