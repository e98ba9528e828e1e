#include "panelbridge/bridge.hpp"

#include <cmath>

#include <json.hpp>

#include "panelbridge/numerics.hpp"

namespace panelbridge::bridge {

namespace {

// Per-unit W = (Y_pre; X) and Z = (Y_post; X) stacks.
struct Stacks {
  MatrixXd w;  // N x (T0+d)
  MatrixXd z;  // N x (T1+d)
};

Stacks make_stacks(const PanelDataset& data) {
  Stacks s;
  s.w.resize(data.n_units, data.n_pre + data.n_cov);
  s.w << data.y_pre, data.covariates;
  s.z.resize(data.n_units, data.n_post + data.n_cov);
  s.z << data.y_post, data.covariates;
  return s;
}

MatrixXd spd_inverse(const MatrixXd& m, ErrorCode on_failure, const char* who) {
  Eigen::LLT<MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) throw Error(on_failure, who);
  return llt.solve(MatrixXd::Identity(m.rows(), m.cols()));
}

// Sigma_m floor: symmetrize and lift the smallest eigenvalue to the jitter
// level (default 1e-8 * trace / dim) before inverting.
MatrixXd stabilize_moment_cov(MatrixXd sigma, double jitter) {
  sigma = 0.5 * (sigma + sigma.transpose()).eval();
  const int dim = static_cast<int>(sigma.rows());
  if (jitter < 0.0) jitter = 1e-8 * sigma.trace() / std::max(dim, 1);
  if (jitter <= 0.0) jitter = 1e-12;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sigma, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw Error(ErrorCode::EigenFailure, "moment covariance");
  if (es.eigenvalues().minCoeff() < jitter) {
    sigma.diagonal().array() += jitter;
  }
  return sigma;
}

// Rescale the covariance to unit mean eigenvalue before inverting. A positive
// multiple of the optimal weight has the same asymptotic variance, and with
// the scale pinned the penalty lambda keeps a moment-scale-free meaning.
double weight_scale(const MatrixXd& sigma) {
  const double s = sigma.trace() / std::max<int>(1, static_cast<int>(sigma.rows()));
  return s > 0.0 ? s : 1.0;
}

Diagnostics make_diagnostics(const MomentSystem& system, const BridgeCoefficients& theta) {
  Diagnostics diag;
  diag.moment_residual_norm = (system.b_hat - system.k_hat * theta.stacked()).norm();
  Eigen::JacobiSVD<MatrixXd> svd(system.k_hat);
  diag.k_singular_values = svd.singularValues();
  diag.effective_rank = numerics::rank_estimate(system.k_hat);
  return diag;
}

VectorXd moment_residuals(const Stacks& s, const PanelDataset& data,
                          const BridgeCoefficients& theta) {
  // (1-A_i) * (Y_{i,0} - W_i' theta), the scalar part of m.
  VectorXd resid = data.y_target - s.w * theta.stacked();
  for (int i = 0; i < data.n_units; ++i) {
    if (data.treatment(i) == 1) resid(i) = 0.0;
  }
  return resid;
}

}  // namespace

MatrixXd resolve_weight(const WeightSpec& spec, int dim) {
  switch (spec.kind) {
    case WeightSpec::Kind::Identity:
      return MatrixXd::Identity(dim, dim);
    case WeightSpec::Kind::Fixed: {
      if (spec.fixed.rows() != dim || spec.fixed.cols() != dim) {
        throw Error(ErrorCode::DimensionMismatch, "fixed weight dimension");
      }
      Eigen::LLT<MatrixXd> llt(spec.fixed);
      if (llt.info() != Eigen::Success) {
        throw Error(ErrorCode::NonPositiveDefiniteWeight, "fixed weight failed Cholesky");
      }
      return spec.fixed;
    }
    case WeightSpec::Kind::OptimalTwoStage:
      throw Error(ErrorCode::ConfigInvalid,
                  "two-stage weight needs unit-level data; use fit_two_stage/estimate_bridge");
  }
  throw Error(ErrorCode::ConfigInvalid, "unknown weight kind");
}

MomentSystem build_moment_system(const PanelDataset& data) {
  data.check();
  const int n = data.n_units;
  const int n1 = data.n_treated();
  if (n1 == n) throw Error(ErrorCode::DegenerateGroup, "no control units");
  Stacks s = make_stacks(data);

  MomentSystem sys;
  sys.n = n;
  sys.t0 = data.n_pre;
  sys.d = data.n_cov;
  sys.p_treated = static_cast<double>(n1) / n;

  const int pw = data.n_pre + data.n_cov;
  const int pz = data.n_post + data.n_cov;
  sys.k_hat = MatrixXd::Zero(pz, pw);
  sys.b_hat = VectorXd::Zero(pz);
  VectorXd treated_sum = VectorXd::Zero(pw);
  for (int i = 0; i < n; ++i) {
    if (data.treatment(i) == 0) {
      sys.k_hat.noalias() += s.z.row(i).transpose() * s.w.row(i);
      sys.b_hat.noalias() += s.z.row(i).transpose() * data.y_target(i);
    } else {
      treated_sum += s.w.row(i).transpose();
    }
  }
  sys.k_hat /= static_cast<double>(n);
  sys.b_hat /= static_cast<double>(n);
  sys.treated_w_mean = n1 > 0 ? VectorXd(treated_sum / n1) : VectorXd(VectorXd::Zero(pw));
  return sys;
}

double default_lambda(int n, double c, double beta) {
  if (!(beta > 0.5 && beta < 1.0)) {
    throw Error(ErrorCode::ExponentOutOfWindow, "beta must lie in (0.5, 1)");
  }
  if (n < 1 || c <= 0.0) throw Error(ErrorCode::DomainError, "default_lambda arguments");
  return c * std::pow(static_cast<double>(n), -beta);
}

BridgeCoefficients fit_bridge(const MomentSystem& system, const WeightSpec& weight,
                              double lambda) {
  if (lambda <= 0.0) throw Error(ErrorCode::DomainError, "fit_bridge requires lambda > 0");
  const MatrixXd w = resolve_weight(weight, static_cast<int>(system.k_hat.rows()));
  VectorXd theta = numerics::ridge_solve(system.k_hat, w, system.b_hat, lambda);
  return BridgeCoefficients::split(theta, system.t0);
}

BridgeCoefficients fit_bridge_weighted_M(const MomentSystem& system, const MatrixXd& m_matrix,
                                         const WeightSpec& weight, double lambda) {
  const int q = static_cast<int>(system.k_hat.cols());
  if (m_matrix.rows() != q || m_matrix.cols() != q) {
    throw Error(ErrorCode::DimensionMismatch, "penalty matrix must be (T0+d) square");
  }
  if (lambda <= 0.0) throw Error(ErrorCode::DomainError, "fit_bridge_weighted_M lambda > 0");
  if (m_matrix.isIdentity(0.0)) return fit_bridge(system, weight, lambda);

  const MatrixXd w = resolve_weight(weight, static_cast<int>(system.k_hat.rows()));
  MatrixXd kw = system.k_hat.transpose() * w;
  MatrixXd penalized = kw * system.k_hat + lambda * m_matrix;
  if (numerics::rank_estimate(penalized) < q) {
    throw Error(ErrorCode::SingularPenalizedSystem, "k'wk + lambda M is singular");
  }
  Eigen::LDLT<MatrixXd> ldlt(penalized);
  if (ldlt.info() != Eigen::Success) {
    throw Error(ErrorCode::SingularPenalizedSystem, "factorization failed");
  }
  VectorXd theta = ldlt.solve(kw * system.b_hat);
  return BridgeCoefficients::split(theta, system.t0);
}

double estimate_treated_mean(const MomentSystem& system, const BridgeCoefficients& theta) {
  if (!(system.p_treated > 0.0)) throw Error(ErrorCode::DegenerateGroup, "no treated units");
  if (theta.stacked().size() != system.treated_w_mean.size()) {
    throw Error(ErrorCode::DimensionMismatch, "theta length vs treated_w_mean");
  }
  return system.treated_w_mean.dot(theta.stacked());
}

VectorXd influence_values(const PanelDataset& data, const BridgeCoefficients& theta,
                          double gamma_hat, const MatrixXd& weight, double lambda) {
  data.check();
  const int n = data.n_units;
  const int pw = data.n_pre + data.n_cov;
  const int pz = data.n_post + data.n_cov;
  if (weight.rows() != pz || weight.cols() != pz) {
    throw Error(ErrorCode::DimensionMismatch, "influence weight dimension");
  }
  if (theta.stacked().size() != pw) {
    throw Error(ErrorCode::DimensionMismatch, "influence theta dimension");
  }
  MomentSystem sys = build_moment_system(data);
  Stacks s = make_stacks(data);

  // Psi = E_n[A W'] (k' w k + lambda I)^{-1} k' w, with the regularized
  // inverse rather than a pseudoinverse.
  MatrixXd kw = sys.k_hat.transpose() * weight;
  MatrixXd reg = kw * sys.k_hat;
  reg.diagonal().array() += lambda;
  Eigen::LDLT<MatrixXd> ldlt(reg);
  if (ldlt.info() != Eigen::Success) throw Error(ErrorCode::SingularSystem, "influence inverse");
  RowVectorXd aw = sys.p_treated * sys.treated_w_mean.transpose();  // E_n[A W']
  RowVectorXd psi_mat = aw * ldlt.solve(kw);                        // 1 x (T1+d)

  const VectorXd theta_vec = theta.stacked();
  VectorXd resid = moment_residuals(s, data, theta);
  VectorXd psi(n);
  const double pa = sys.p_treated;
  if (!(pa > 0.0)) throw Error(ErrorCode::DegenerateGroup, "no treated units");
  for (int i = 0; i < n; ++i) {
    const double g = data.treatment(i) == 1 ? (s.w.row(i).dot(theta_vec) - gamma_hat) : 0.0;
    const double m_part = psi_mat.dot(resid(i) * s.z.row(i));
    psi(i) = -(g + m_part) / pa;
  }
  return psi;
}

VarianceCi variance_and_ci(const VectorXd& psi, double gamma_hat, int n, double rho) {
  if (!(rho > 0.0 && rho < 1.0)) throw Error(ErrorCode::DomainError, "rho outside (0,1)");
  if (n < 1 || psi.size() < 1) throw Error(ErrorCode::DomainError, "empty influence vector");
  VarianceCi out;
  out.sigma2 = psi.squaredNorm() / psi.size();
  const double half =
      numerics::normal_quantile(1.0 - rho / 2.0) * std::sqrt(out.sigma2 / static_cast<double>(n));
  out.ci_lo = gamma_hat - half;
  out.ci_hi = gamma_hat + half;
  return out;
}

EstimateResult estimate_bridge(const PanelDataset& data, const WeightSpec& weight, double lambda,
                               double rho) {
  if (weight.kind == WeightSpec::Kind::OptimalTwoStage) {
    return fit_two_stage(data, lambda, weight.jitter, rho);
  }
  MomentSystem sys = build_moment_system(data);
  if (!(sys.p_treated > 0.0)) throw Error(ErrorCode::DegenerateGroup, "no treated units");
  const MatrixXd w = resolve_weight(weight, static_cast<int>(sys.k_hat.rows()));

  EstimateResult res;
  res.lambda_used = lambda;
  res.weight_used = w;
  res.theta = fit_bridge(sys, weight, lambda);
  res.gamma_hat = estimate_treated_mean(sys, res.theta);
  VectorXd psi = influence_values(data, res.theta, res.gamma_hat, w, lambda);
  VarianceCi vc = variance_and_ci(psi, res.gamma_hat, sys.n, rho);
  res.sigma2_hat = vc.sigma2;
  res.ci_lo = vc.ci_lo;
  res.ci_hi = vc.ci_hi;
  res.diagnostics = make_diagnostics(sys, res.theta);
  return res;
}

EstimateResult fit_two_stage(const PanelDataset& data, double lambda, double jitter, double rho) {
  MomentSystem sys = build_moment_system(data);
  if (!(sys.p_treated > 0.0)) throw Error(ErrorCode::DegenerateGroup, "no treated units");
  Stacks s = make_stacks(data);

  BridgeCoefficients theta_init = fit_bridge(sys, WeightSpec::identity(), lambda);
  VectorXd resid = moment_residuals(s, data, theta_init);
  const int pz = data.n_post + data.n_cov;
  MatrixXd sigma_m = MatrixXd::Zero(pz, pz);
  for (int i = 0; i < data.n_units; ++i) {
    if (resid(i) != 0.0) {
      sigma_m.noalias() += (resid(i) * resid(i)) * s.z.row(i).transpose() * s.z.row(i);
    }
  }
  sigma_m /= static_cast<double>(data.n_units);
  sigma_m /= weight_scale(sigma_m);
  sigma_m = stabilize_moment_cov(std::move(sigma_m), jitter);
  MatrixXd w = spd_inverse(sigma_m, ErrorCode::NonPositiveDefiniteWeight, "Sigma_m inverse");

  EstimateResult res;
  res.lambda_used = lambda;
  res.weight_used = w;
  res.theta = fit_bridge(sys, WeightSpec::fixed_matrix(w), lambda);
  res.gamma_hat = estimate_treated_mean(sys, res.theta);
  VectorXd psi = influence_values(data, res.theta, res.gamma_hat, w, lambda);
  VarianceCi vc = variance_and_ci(psi, res.gamma_hat, sys.n, rho);
  res.sigma2_hat = vc.sigma2;
  res.ci_lo = vc.ci_lo;
  res.ci_hi = vc.ci_hi;
  res.diagnostics = make_diagnostics(sys, res.theta);
  return res;
}

EstimateResult estimate_population_mean(const PanelDataset& data, double lambda,
                                        const JointWeightSpec& weight, double rho) {
  MomentSystem sys = build_moment_system(data);
  Stacks s = make_stacks(data);
  const int n = data.n_units;
  const int pz = data.n_post + data.n_cov;

  MatrixXd w11;
  RowVectorXd w21;
  if (weight.kind == JointWeightSpec::Kind::IdentityZero) {
    w11 = MatrixXd::Identity(pz, pz);
    w21 = RowVectorXd::Zero(pz);
  } else if (weight.kind == JointWeightSpec::Kind::Fixed) {
    if (weight.w11.rows() != pz || weight.w11.cols() != pz || weight.w21.size() != pz) {
      throw Error(ErrorCode::DimensionMismatch, "joint weight blocks");
    }
    w11 = weight.w11;
    w21 = weight.w21;
  } else {
    // Initial identity pass, then W11 = Sigma_m and W21 = Sigma_gm at the
    // initial estimates.
    BridgeCoefficients theta_init =
        fit_bridge(sys, WeightSpec::identity(), lambda);
    VectorXd fitted = s.w * theta_init.stacked();
    const double gamma_init = fitted.mean();
    VectorXd resid = moment_residuals(s, data, theta_init);
    MatrixXd sigma_m = MatrixXd::Zero(pz, pz);
    RowVectorXd sigma_gm = RowVectorXd::Zero(pz);
    for (int i = 0; i < n; ++i) {
      VectorXd mi = resid(i) * s.z.row(i).transpose();
      sigma_m.noalias() += mi * mi.transpose();
      sigma_gm.noalias() += (fitted(i) - gamma_init) * mi.transpose();
    }
    sigma_m /= static_cast<double>(n);
    sigma_gm /= static_cast<double>(n);
    // Joint rescaling keeps W21 W11^{-1} unchanged while pinning the scale of
    // the theta-stage weight.
    const double s = weight_scale(sigma_m);
    w11 = stabilize_moment_cov(sigma_m / s, weight.jitter);
    w21 = sigma_gm / s;
  }

  Eigen::LLT<MatrixXd> w11_llt(w11);
  if (w11_llt.info() != Eigen::Success) {
    throw Error(ErrorCode::NonPositiveDefiniteWeight, "W11 failed Cholesky");
  }
  MatrixXd w11_inv = w11_llt.solve(MatrixXd::Identity(pz, pz));

  EstimateResult res;
  res.lambda_used = lambda;
  res.weight_used = w11_inv;
  res.theta = fit_bridge(sys, WeightSpec::fixed_matrix(w11_inv), lambda);
  const VectorXd theta_vec = res.theta.stacked();
  const VectorXd m_bar = sys.b_hat - sys.k_hat * theta_vec;  // E_n[m(O; theta)]
  res.gamma_hat = (s.w * theta_vec).mean() - w21.dot(w11_llt.solve(m_bar));

  // Influence values for the whole-population moment pair.
  MatrixXd kw = sys.k_hat.transpose() * w11_inv;
  MatrixXd reg = kw * sys.k_hat;
  reg.diagonal().array() += lambda;
  Eigen::LDLT<MatrixXd> ldlt(reg);
  if (ldlt.info() != Eigen::Success) throw Error(ErrorCode::SingularSystem, "population inverse");
  RowVectorXd front = s.w.colwise().mean() + w21 * w11_inv * sys.k_hat;  // E_n[W'] + W21 W11^-1 K
  RowVectorXd psi_mat = front * ldlt.solve(kw) - w21 * w11_inv;

  VectorXd resid = moment_residuals(s, data, res.theta);
  VectorXd psi(n);
  for (int i = 0; i < n; ++i) {
    const double g = s.w.row(i).dot(theta_vec) - res.gamma_hat;
    psi(i) = -(g + psi_mat.dot(resid(i) * s.z.row(i)));
  }
  VarianceCi vc = variance_and_ci(psi, res.gamma_hat, n, rho);
  res.sigma2_hat = vc.sigma2;
  res.ci_lo = vc.ci_lo;
  res.ci_hi = vc.ci_hi;
  res.diagnostics = make_diagnostics(sys, res.theta);
  return res;
}

std::string EstimateResult::to_json() const {
  nlohmann::json j;
  j["gamma_hat"] = gamma_hat;
  j["theta1"] = std::vector<double>(theta.theta1.data(), theta.theta1.data() + theta.theta1.size());
  j["theta2"] = std::vector<double>(theta.theta2.data(), theta.theta2.data() + theta.theta2.size());
  j["sigma2_hat"] = sigma2_hat;
  j["ci"] = {ci_lo, ci_hi};
  j["lambda"] = lambda_used;
  nlohmann::json diag;
  diag["moment_residual_norm"] = diagnostics.moment_residual_norm;
  diag["k_singular_values"] = std::vector<double>(
      diagnostics.k_singular_values.data(),
      diagnostics.k_singular_values.data() + diagnostics.k_singular_values.size());
  diag["effective_rank"] = diagnostics.effective_rank;
  j["diagnostics"] = diag;
  return j.dump(2);
}

}  // namespace panelbridge::bridge
