#include "panelbridge/baselines.hpp"

#include <cmath>
#include <limits>

#include "panelbridge/numerics.hpp"
#include "panelbridge/oracle.hpp"

namespace panelbridge::baselines {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Groups {
  std::vector<int> treated;
  std::vector<int> control;
};

Groups split_groups(const PanelDataset& data) {
  Groups g;
  for (int i = 0; i < data.n_units; ++i) {
    (data.treatment(i) == 1 ? g.treated : g.control).push_back(i);
  }
  return g;
}

MatrixXd rows_of(const MatrixXd& m, const std::vector<int>& idx) {
  MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = m.row(idx[k]);
  return out;
}

VectorXd entries_of(const VectorXd& v, const std::vector<int>& idx) {
  VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (size_t k = 0; k < idx.size(); ++k) out(static_cast<Eigen::Index>(k)) = v(idx[k]);
  return out;
}

double smallest_singular(const MatrixXd& m) {
  Eigen::JacobiSVD<MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  return s.size() > 0 ? s(s.size() - 1) : 0.0;
}

}  // namespace

BaselineEstimate estimate_did(const PanelDataset& data) {
  data.check();
  Groups g = split_groups(data);
  const int n1 = static_cast<int>(g.treated.size());
  const int n0 = static_cast<int>(g.control.size());
  if (n1 == 0 || n0 == 0 || data.n_pre < 1) {
    throw Error(ErrorCode::DegenerateGroup, "did needs treated and control units");
  }
  double pre_treated = 0.0, pre_control = 0.0, zero_control = 0.0;
  for (int i : g.treated) pre_treated += data.y_pre.row(i).sum();
  for (int i : g.control) {
    pre_control += data.y_pre.row(i).sum();
    zero_control += data.y_target(i);
  }
  BaselineEstimate res;
  res.method = "did";
  res.gamma_hat = pre_treated / (static_cast<double>(data.n_pre) * n1) -
                  pre_control / (static_cast<double>(data.n_pre) * n0) + zero_control / n0;
  return res;
}

BaselineEstimate estimate_horizontal(const PanelDataset& data, double ridge) {
  data.check();
  if (ridge < 0.0) throw Error(ErrorCode::DomainError, "ridge must be >= 0");
  Groups g = split_groups(data);
  const int n0 = static_cast<int>(g.control.size());
  const int n1 = static_cast<int>(g.treated.size());
  if (n0 == 0 || n1 == 0) throw Error(ErrorCode::DegenerateGroup, "horizontal regression groups");
  const int p = data.n_pre + data.n_cov;

  MatrixXd design(n0, p);
  design.leftCols(data.n_pre) = rows_of(data.y_pre, g.control);
  if (data.n_cov > 0) design.rightCols(data.n_cov) = rows_of(data.covariates, g.control);
  VectorXd y = entries_of(data.y_target, g.control);

  if (ridge == 0.0) {
    if (n0 <= data.n_pre) {
      throw Error(ErrorCode::SingularDesign, "horizontal regression needs N0 > T0");
    }
    if (numerics::rank_estimate(design) < p) {
      throw Error(ErrorCode::SingularDesign, "control design is rank deficient");
    }
  }
  MatrixXd gram = design.transpose() * design;
  gram.diagonal().array() += ridge;
  Eigen::LDLT<MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success) {
    throw Error(ErrorCode::SingularDesign, "normal equations failed");
  }
  VectorXd theta = ldlt.solve(design.transpose() * y);

  MatrixXd treated(n1, p);
  treated.leftCols(data.n_pre) = rows_of(data.y_pre, g.treated);
  if (data.n_cov > 0) treated.rightCols(data.n_cov) = rows_of(data.covariates, g.treated);

  BaselineEstimate res;
  res.method = "horizontal";
  res.coefficients = theta;
  res.gamma_hat = (treated * theta).mean();
  return res;
}

BaselineEstimate estimate_vertical(const PanelDataset& data) {
  data.check();
  Groups g = split_groups(data);
  const int n0 = static_cast<int>(g.control.size());
  const int n1 = static_cast<int>(g.treated.size());
  if (n0 == 0 || n1 == 0) throw Error(ErrorCode::DegenerateGroup, "vertical regression groups");

  MatrixXd control_pre = rows_of(data.y_pre, g.control);  // N0 x T0
  VectorXd treated_avg = rows_of(data.y_pre, g.treated).colwise().mean().transpose();  // T0

  MatrixXd gram = control_pre * control_pre.transpose();  // N0 x N0
  VectorXd rhs = control_pre * treated_avg;

  BaselineEstimate res;
  res.method = "vertical";
  if (data.n_pre > n0) {
    if (numerics::rank_estimate(control_pre) < n0) {
      throw Error(ErrorCode::SingularDesign, "control paths are rank deficient");
    }
  } else {
    // T0 <= N0 leaves the Gram matrix singular; fall back to a small ridge.
    res.ridge_fallback = true;
    res.method = "vertical(ridge-fallback)";
    gram.diagonal().array() += 1e-8 * gram.trace() / std::max(n0, 1);
  }
  Eigen::LDLT<MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success) {
    throw Error(ErrorCode::SingularDesign, "vertical normal equations failed");
  }
  VectorXd w = ldlt.solve(rhs);
  res.coefficients = w;
  res.gamma_hat = w.dot(entries_of(data.y_target, g.control));
  return res;
}

BaselineEstimate estimate_factor4step(const PanelDataset& data, int r) {
  data.check();
  const int n = data.n_units;
  Groups g = split_groups(data);
  const int n0 = static_cast<int>(g.control.size());
  const int n1 = static_cast<int>(g.treated.size());
  if (r < 1 || r > std::min(n, data.n_pre) || n0 < r) {
    throw Error(ErrorCode::RankTooLarge, "factor rank vs panel dimensions");
  }
  if (n1 == 0) throw Error(ErrorCode::DegenerateGroup, "no treated units to impute");

  // Step 1: second-moment matrix with the control/treated cell-averaging rule.
  MatrixXd y_all(n, data.n_pre + 1);
  y_all.leftCols(data.n_pre) = data.y_pre;
  y_all.col(data.n_pre) = data.y_target;
  MatrixXd with_zero = y_all * y_all.transpose() / static_cast<double>(data.n_pre + 1);
  MatrixXd pre_only = data.y_pre * data.y_pre.transpose() / static_cast<double>(data.n_pre);
  MatrixXd sigma = pre_only;
  for (int i : g.control) {
    for (int j : g.control) sigma(i, j) = with_zero(i, j);
  }

  // Step 2: top-r eigenvectors of sigma / N.
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (sigma + sigma.transpose()) / n);
  if (es.info() != Eigen::Success) throw Error(ErrorCode::EigenFailure, "eigen decomposition");
  MatrixXd u_tilde = es.eigenvectors().rightCols(r);  // N x r, ascending order

  // Step 3: regress observed outcomes at t = 0 on u_tilde over controls.
  MatrixXd s_c = MatrixXd::Zero(r, r);
  VectorXd rhs = VectorXd::Zero(r);
  for (int i : g.control) {
    s_c.noalias() += u_tilde.row(i).transpose() * u_tilde.row(i);
    rhs += u_tilde.row(i).transpose() * data.y_target(i);
  }
  Eigen::FullPivLU<MatrixXd> lu(s_c);
  if (!lu.isInvertible()) throw Error(ErrorCode::EigenFailure, "control factor Gram singular");
  VectorXd v0 = lu.solve(rhs);

  // Step 4: impute the treated mean.
  double acc = 0.0;
  for (int i : g.treated) acc += u_tilde.row(i).dot(v0);

  BaselineEstimate res;
  res.method = "factor4step";
  res.factor_u = u_tilde;
  res.factor_v0 = v0;
  res.gamma_hat = acc / n1;
  return res;
}

BiasOracleResult bias_oracle_horizontal(const dgp::GroundTruth& truth,
                                        const dgp::FactorDgpConfig& config) {
  config.check();
  const int r = config.n_factors, t0 = config.n_pre;
  const double s2 = config.noise_sigma * config.noise_sigma;

  const oracle::SelectionMoments& sm = oracle::selection_moments(config);
  MatrixXd sigma_u0 = sm.second_moment_control.topLeftCorner(r, r) -
                      sm.mean_control.head(r) * sm.mean_control.head(r).transpose();
  if (numerics::rank_estimate(sigma_u0) < r) {
    throw Error(ErrorCode::SingularConfounderCov, "Cov(U|A=0) is singular");
  }

  std::vector<int> treated;
  for (int i = 0; i < truth.treatment.size(); ++i) {
    if (truth.treatment(i) == 1) treated.push_back(i);
  }
  if (treated.empty()) throw Error(ErrorCode::DegenerateGroup, "no treated draws");
  VectorXd u_bar = rows_of(truth.confounders, treated).colwise().mean().transpose();
  MatrixXd eps_t = rows_of(truth.noise, treated);
  VectorXd eps_pre_bar = eps_t.leftCols(t0).colwise().mean().transpose();
  const double eps0_bar = eps_t.col(t0).mean();

  const MatrixXd v_pre = config.loadings.topRows(t0);
  const VectorXd v0 = config.loading_at(0);
  const MatrixXd vv = v_pre.transpose() * v_pre;

  BiasOracleResult out;
  // B = -sigma^2 Ubar' (V'V Sigma_{U|0} + sigma^2 I)^{-1} V_0
  MatrixXd core = vv * sigma_u0;
  core.diagonal().array() += s2;
  Eigen::FullPivLU<MatrixXd> lu(core);
  if (!lu.isInvertible()) throw Error(ErrorCode::SingularConfounderCov, "bias core singular");
  out.bias_term = -s2 * u_bar.dot(lu.solve(v0));

  // V = epsbar_pre' V_pre (sigma^2 Sigma^{-1} + V'V)^{-1} V_0 - epsbar_0; the
  // middle inverse equals Sigma (V'V Sigma + sigma^2 I)^{-1}, which reuses the
  // bias core and tolerates sigma = 0.
  out.variance_term = eps_pre_bar.dot(v_pre * sigma_u0 * lu.solve(v0)) - eps0_bar;

  const double denom = smallest_singular(sigma_u0) * std::pow(smallest_singular(v_pre), 2) - s2;
  out.bias_upper_bound = denom > 0.0 ? s2 / denom * u_bar.norm() * v0.norm() : kInf;
  if (s2 == 0.0) out.bias_upper_bound = 0.0;
  return out;
}

BiasOracleResult bias_oracle_vertical(const dgp::GroundTruth& truth,
                                      const dgp::FactorDgpConfig& config) {
  config.check();
  const int r = config.n_factors, t0 = config.n_pre;
  const double s2 = config.noise_sigma * config.noise_sigma;

  const MatrixXd v_pre = config.loadings.topRows(t0);
  MatrixXd v_bar = v_pre.transpose() * v_pre / static_cast<double>(t0);  // (1/T0) sum V_t V_t'
  if (numerics::rank_estimate(v_bar) < r) {
    throw Error(ErrorCode::SingularVbar, "average loading outer product is singular");
  }

  std::vector<int> treated, control;
  for (int i = 0; i < truth.treatment.size(); ++i) {
    (truth.treatment(i) == 1 ? treated : control).push_back(i);
  }
  if (treated.empty() || control.empty()) {
    throw Error(ErrorCode::DegenerateGroup, "vertical oracle groups");
  }
  const int n0 = static_cast<int>(control.size());
  MatrixXd u_c = rows_of(truth.confounders, control);  // N0 x r
  VectorXd u_bar = rows_of(truth.confounders, treated).colwise().mean().transpose();
  VectorXd eps_c0 = entries_of(truth.noise.col(t0), control);
  const double eps_t0_bar = entries_of(truth.noise.col(t0), treated).mean();
  const VectorXd v0 = config.loading_at(0);

  const MatrixXd uu = u_c.transpose() * u_c;
  MatrixXd core = uu * v_bar;
  core.diagonal().array() += s2;
  Eigen::FullPivLU<MatrixXd> lu(core);
  if (!lu.isInvertible()) throw Error(ErrorCode::SingularVbar, "bias core singular");

  BiasOracleResult out;
  out.bias_term = -s2 * v0.dot(lu.solve(u_bar));
  // (U'U + sigma^2 Vbar^{-1})^{-1} = Vbar (U'U Vbar + sigma^2 I)^{-1}
  out.variance_term = eps_c0.dot(u_c * v_bar * lu.solve(u_bar)) - eps_t0_bar;

  const double denom =
      smallest_singular(uu / n0) * smallest_singular(v_bar) - s2 / static_cast<double>(n0);
  out.bias_upper_bound =
      denom > 0.0 ? s2 / (static_cast<double>(n0) * denom) * v0.norm() * u_bar.norm() : kInf;
  if (s2 == 0.0) out.bias_upper_bound = 0.0;
  return out;
}

}  // namespace panelbridge::baselines
