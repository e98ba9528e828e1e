#include "panelbridge/oracle.hpp"

#include <map>
#include <mutex>

#include <json.hpp>

#include "panelbridge/numerics.hpp"
#include "panelbridge/rng.hpp"

namespace panelbridge::oracle {

namespace {

constexpr std::uint64_t kPlugInSeed = 0x0C0FFEE5EEDull;
constexpr int kPlugInDraws = 1000000;

enum Tag : std::uint64_t {
  kTagConfounder = 1,
  kTagCovariate = 2,
  kTagInnovation = 5,
  kTagInitConfounder = 6,
};

// [V_block B_block; 0 I_d] stacked loading matrix for a period range.
MatrixXd loading_block(const MatrixXd& v_rows, const MatrixXd& b_rows, int d) {
  const int t = static_cast<int>(v_rows.rows());
  const int r = static_cast<int>(v_rows.cols());
  MatrixXd g = MatrixXd::Zero(t + d, r + d);
  g.topLeftCorner(t, r) = v_rows;
  if (d > 0) {
    g.topRightCorner(t, d) = b_rows;
    g.bottomRightCorner(d, d) = MatrixXd::Identity(d, d);
  }
  return g;
}

MatrixXd pre_loading_block(const FactorDgpConfig& c) {
  return loading_block(c.loadings.topRows(c.n_pre),
                       c.n_cov > 0 ? MatrixXd(c.cov_coefs.topRows(c.n_pre))
                                   : MatrixXd(c.n_pre, 0),
                       c.n_cov);
}

MatrixXd post_loading_block(const FactorDgpConfig& c) {
  return loading_block(c.loadings.bottomRows(c.n_post),
                       c.n_cov > 0 ? MatrixXd(c.cov_coefs.bottomRows(c.n_post))
                                   : MatrixXd(c.n_post, 0),
                       c.n_cov);
}

VectorXd target_coef(const FactorDgpConfig& c) {  // (V_0; b_0)
  VectorXd vb(c.n_factors + c.n_cov);
  vb.head(c.n_factors) = c.loading_at(0);
  if (c.n_cov > 0) vb.tail(c.n_cov) = c.cov_coef_at(0);
  return vb;
}

// Idiosyncratic-error covariance pieces implied by the config blocks.
struct NoiseMoments {
  MatrixXd pre_pre;   // T0 x T0
  VectorXd pre_zero;  // Cov(eps_pre, eps_0)
  double zero_var = 0.0;
  MatrixXd post_post;  // T1 x T1
};

NoiseMoments noise_moments(const FactorDgpConfig& c) {
  const double s2 = c.noise_sigma * c.noise_sigma;
  NoiseMoments nm;
  nm.pre_pre = MatrixXd::Constant(c.n_pre, c.n_pre, s2 * c.noise_corr_pre0);
  nm.pre_pre.diagonal().setConstant(s2);
  nm.pre_zero = VectorXd::Constant(c.n_pre, s2 * c.noise_corr_pre0);
  nm.zero_var = s2;
  nm.post_post = MatrixXd::Constant(c.n_post, c.n_post, s2 * c.noise_corr_post);
  nm.post_post.diagonal().setConstant(s2);
  return nm;
}

std::mutex cache_mutex;
std::map<std::uint64_t, SelectionMoments> factor_cache;
std::map<std::uint64_t, ArSelectionMoments> ar_cache;

SelectionMoments compute_selection_moments(const FactorDgpConfig& c) {
  const int r = c.n_factors, d = c.n_cov;
  const MatrixXd sqrt_u = rng::psd_sqrt(c.confounder_cov);
  const int gauss = d - (c.covariate_spec.first_constant && d > 0 ? 1 : 0);
  const MatrixXd sqrt_x = gauss > 0 ? rng::psd_sqrt(c.covariate_spec.cov) : MatrixXd(0, 0);

  const int dim = r + d;
  MatrixXd s0 = MatrixXd::Zero(dim, dim), s1 = MatrixXd::Zero(dim, dim);
  VectorXd m0 = VectorXd::Zero(dim), m1 = VectorXd::Zero(dim);
  double w0 = 0.0, w1 = 0.0;

  VectorXd ux(dim);
  for (int i = 0; i < kPlugInDraws; ++i) {
    const auto ui = static_cast<std::uint64_t>(i);
    rng::Stream su(rng::derive_key(kPlugInSeed, ui, kTagConfounder));
    rng::Stream sx(rng::derive_key(kPlugInSeed, ui, kTagCovariate));
    VectorXd u = c.confounder_mean + sqrt_u * su.next_normal_vector(r);
    ux.head(r) = u;
    VectorXd x(d);
    if (d > 0) {
      int off = 0;
      if (c.covariate_spec.first_constant) x(off++) = 1.0;
      if (gauss > 0) x.tail(gauss) = c.covariate_spec.mean + sqrt_x * sx.next_normal_vector(gauss);
      ux.tail(d) = x;
    }
    // Propensity weighting instead of Bernoulli draws halves the plug-in noise.
    const double p = dgp::propensity(c.selection, u, x);
    w1 += p;
    w0 += 1.0 - p;
    s1.noalias() += p * ux * ux.transpose();
    s0.noalias() += (1.0 - p) * ux * ux.transpose();
    m1 += p * ux;
    m0 += (1.0 - p) * ux;
  }
  SelectionMoments sm;
  sm.p_treated = w1 / kPlugInDraws;
  sm.p_control = w0 / kPlugInDraws;
  sm.second_moment_control = s0 / w0;
  sm.second_moment_treated = s1 / w1;
  sm.mean_control = m0 / w0;
  sm.mean_treated = m1 / w1;
  return sm;
}

ArSelectionMoments compute_ar_moments(const ArDgpConfig& c) {
  const int r = c.n_factors, d = c.n_cov, t0 = c.n_pre;
  const MatrixXd sqrt_init = rng::psd_sqrt(c.init_cov);
  std::vector<MatrixXd> sqrt_eta;
  for (const auto& cov : c.innovation_cov) sqrt_eta.push_back(rng::psd_sqrt(cov));
  auto sqrt_eta_at = [&](int t) -> const MatrixXd& {
    return sqrt_eta.size() == 1 ? sqrt_eta[0] : sqrt_eta[static_cast<size_t>(t + t0)];
  };
  const int gauss = d - (c.covariate_spec.first_constant && d > 0 ? 1 : 0);
  const MatrixXd sqrt_x = gauss > 0 ? rng::psd_sqrt(c.covariate_spec.cov) : MatrixXd(0, 0);

  const int dim = r + d;
  MatrixXd s0 = MatrixXd::Zero(dim, dim);
  VectorXd m0 = VectorXd::Zero(dim), m1 = VectorXd::Zero(dim);
  MatrixXd s_init = MatrixXd::Zero(r, r);
  MatrixXd s_init_x = MatrixXd::Zero(r, d);
  std::vector<MatrixXd> s_eta(t0, MatrixXd::Zero(r, r));
  std::vector<MatrixXd> s_eta_x(t0, MatrixXd::Zero(r, d));
  double w0 = 0.0, w1 = 0.0;

  VectorXd ux(dim);
  std::vector<VectorXd> etas(t0);
  for (int i = 0; i < kPlugInDraws; ++i) {
    const auto ui = static_cast<std::uint64_t>(i);
    rng::Stream s0s(rng::derive_key(kPlugInSeed, ui, kTagInitConfounder));
    rng::Stream sh(rng::derive_key(kPlugInSeed, ui, kTagInnovation));
    rng::Stream sx(rng::derive_key(kPlugInSeed, ui, kTagCovariate));

    VectorXd u_init = c.init_mean + sqrt_init * s0s.next_normal_vector(r);
    VectorXd u = u_init;
    for (int t = -t0; t < 0; ++t) {
      etas[t + t0] = sqrt_eta_at(t) * sh.next_normal_vector(r);
      u = c.transitions[static_cast<size_t>(t + t0)] * u + etas[t + t0];
    }
    ux.head(r) = u;  // U_0
    VectorXd x(d);
    if (d > 0) {
      int off = 0;
      if (c.covariate_spec.first_constant) x(off++) = 1.0;
      if (gauss > 0) x.tail(gauss) = c.covariate_spec.mean + sqrt_x * sx.next_normal_vector(gauss);
      ux.tail(d) = x;
    }
    const double p = dgp::propensity(c.selection, u, x);
    const double q = 1.0 - p;
    w1 += p;
    w0 += q;
    s0.noalias() += q * ux * ux.transpose();
    m0 += q * ux;
    m1 += p * ux;
    s_init.noalias() += q * u_init * u_init.transpose();
    if (d > 0) s_init_x.noalias() += q * u_init * x.transpose();
    for (int k = 0; k < t0; ++k) {
      s_eta[k].noalias() += q * etas[k] * etas[k].transpose();
      if (d > 0) s_eta_x[k].noalias() += q * etas[k] * x.transpose();
    }
  }

  ArSelectionMoments am;
  am.p_treated = w1 / kPlugInDraws;
  am.p_control = w0 / kPlugInDraws;
  am.second_moment_u0x = s0 / w0;
  am.mean_u0x_control = m0 / w0;
  am.mean_u0x_treated = m1 / w1;
  am.sigma_u_init = s_init / w0;
  am.sigma_u_init_x = s_init_x / w0;
  am.sigma_eta.resize(t0 + c.n_post);
  am.sigma_eta_x.resize(t0 + c.n_post);
  for (int k = 0; k < t0; ++k) {
    am.sigma_eta[k] = s_eta[k] / w0;
    am.sigma_eta_x[k] = s_eta_x[k] / w0;
  }
  // Post-period innovations are independent of (U_0, X) and hence of A, so
  // the conditional second moments equal the configured ones.
  for (int t = 0; t < c.n_post; ++t) {
    am.sigma_eta[t0 + t] = c.innovation_cov_at(t);
    am.sigma_eta_x[t0 + t] = MatrixXd::Zero(r, d);
  }
  return am;
}

// Gamma_{t_hi} Gamma_{t_hi-1} ... Gamma_{t_lo}, identity when t_hi < t_lo.
MatrixXd gamma_prod(const ArDgpConfig& c, int t_hi, int t_lo) {
  MatrixXd g = MatrixXd::Identity(c.n_factors, c.n_factors);
  for (int t = t_hi; t >= t_lo; --t) {
    g = g * c.transitions[static_cast<size_t>(t + c.n_pre)];
  }
  return g;
}

}  // namespace

const SelectionMoments& selection_moments(const FactorDgpConfig& config) {
  config.check();
  const std::uint64_t key = dgp::fingerprint(config);
  std::lock_guard<std::mutex> lock(cache_mutex);
  auto it = factor_cache.find(key);
  if (it == factor_cache.end()) {
    it = factor_cache.emplace(key, compute_selection_moments(config)).first;
  }
  return it->second;
}

const ArSelectionMoments& ar_selection_moments(const ArDgpConfig& config) {
  config.check();
  const std::uint64_t key = dgp::fingerprint(config);
  std::lock_guard<std::mutex> lock(cache_mutex);
  auto it = ar_cache.find(key);
  if (it == ar_cache.end()) {
    it = ar_cache.emplace(key, compute_ar_moments(config)).first;
  }
  return it->second;
}

PopulationMoments population_K_b(const FactorDgpConfig& config) {
  const SelectionMoments& sm = selection_moments(config);
  const MatrixXd g_pre = pre_loading_block(config);
  const MatrixXd g_post = post_loading_block(config);

  PopulationMoments pm;
  pm.p_control = sm.p_control;
  pm.second_moment_block = sm.second_moment_control;
  pm.k = sm.p_control * g_post * sm.second_moment_control * g_pre.transpose();
  pm.b = sm.p_control * g_post * sm.second_moment_control * target_coef(config);
  pm.treated_w_mean = g_pre * sm.mean_treated;
  return pm;
}

double population_gamma(const FactorDgpConfig& config) {
  const SelectionMoments& sm = selection_moments(config);
  return target_coef(config).dot(sm.mean_treated);
}

MomentSystem to_moment_system(const PopulationMoments& pm, int t0, int d, int n) {
  MomentSystem sys;
  sys.k_hat = pm.k;
  sys.b_hat = pm.b;
  sys.treated_w_mean = pm.treated_w_mean;
  sys.p_treated = 1.0 - pm.p_control;
  sys.n = n;
  sys.t0 = t0;
  sys.d = d;
  return sys;
}

BridgeSet bridge_set(const FactorDgpConfig& config) {
  config.check();
  const MatrixXd v_pre = config.loadings.topRows(config.n_pre);  // T0 x r
  if (numerics::rank_estimate(v_pre) < config.n_factors) {
    throw Error(ErrorCode::RankDeficientLoadings,
                "V_pre must have full column rank r; bridge functions may not exist");
  }
  const VectorXd v0 = config.loading_at(0);
  BridgeSet set;
  set.particular.theta1 = numerics::pinv(v_pre.transpose()) * v0;
  if (config.n_cov > 0) {
    const MatrixXd b_pre = config.cov_coefs.topRows(config.n_pre);
    set.particular.theta2 = config.cov_coef_at(0) - b_pre.transpose() * set.particular.theta1;
  } else {
    set.particular.theta2 = VectorXd(0);
  }
  // ker(V_pre') from the full SVD: right singular vectors past the rank.
  Eigen::JacobiSVD<MatrixXd> svd(v_pre.transpose(), Eigen::ComputeFullV);
  set.nullspace_basis = svd.matrixV().rightCols(config.n_pre - config.n_factors);
  return set;
}

BridgeCoefficients bridge_set_member(const FactorDgpConfig& config, const BridgeSet& set,
                                     const VectorXd& coeffs) {
  if (coeffs.size() != set.nullspace_basis.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "null-space coefficient length");
  }
  BridgeCoefficients theta;
  theta.theta1 = set.particular.theta1 + set.nullspace_basis * coeffs;
  if (config.n_cov > 0) {
    const MatrixXd b_pre = config.cov_coefs.topRows(config.n_pre);
    theta.theta2 = config.cov_coef_at(0) - b_pre.transpose() * theta.theta1;
  } else {
    theta.theta2 = VectorXd(0);
  }
  return theta;
}

BridgeCoefficients theta_min_oracle(const PopulationMoments& pm, int t0, int d) {
  VectorXd theta = numerics::pinv(pm.k) * pm.b;
  if (theta.size() != t0 + d) throw Error(ErrorCode::DimensionMismatch, "theta_min split");
  return BridgeCoefficients::split(theta, t0);
}

BridgeCoefficients theta_M_oracle(const FactorDgpConfig& config, const MatrixXd& m_matrix) {
  config.check();
  const int t0 = config.n_pre, d = config.n_cov, r = config.n_factors;
  if (m_matrix.rows() != t0 + d || m_matrix.cols() != t0 + d) {
    throw Error(ErrorCode::DimensionMismatch, "M must be (T0+d) square");
  }
  const MatrixXd v_pre = config.loadings.topRows(t0);
  if (numerics::rank_estimate(v_pre) < r) {
    throw Error(ErrorCode::RankDeficientLoadings, "V_pre rank deficient");
  }
  MatrixXd p = MatrixXd::Zero(t0 + d, t0);  // theta = p theta1 + q over the bridge set
  p.topRows(t0) = MatrixXd::Identity(t0, t0);
  VectorXd q = VectorXd::Zero(t0 + d);
  if (d > 0) {
    const MatrixXd b_pre = config.cov_coefs.topRows(t0);
    p.bottomRows(d) = -b_pre.transpose();
    q.tail(d) = config.cov_coef_at(0);
  }
  const MatrixXd reduced = p.transpose() * m_matrix * p;  // [I -B_pre] M [I; -B_pre']
  if (numerics::rank_estimate(reduced) < t0) {
    throw Error(ErrorCode::TargetNotUnique, "[I -B_pre] M [I; -B_pre'] is rank deficient");
  }

  MatrixXd kkt = MatrixXd::Zero(t0 + r, t0 + r);
  kkt.topLeftCorner(t0, t0) = 2.0 * reduced;
  kkt.topRightCorner(t0, r) = v_pre;
  kkt.bottomLeftCorner(r, t0) = v_pre.transpose();
  VectorXd rhs(t0 + r);
  rhs.head(t0) = -2.0 * p.transpose() * m_matrix * q;
  rhs.tail(r) = config.loading_at(0);
  Eigen::FullPivLU<MatrixXd> lu(kkt);
  if (!lu.isInvertible()) throw Error(ErrorCode::TargetNotUnique, "KKT system singular");
  VectorXd sol = lu.solve(rhs);

  BridgeCoefficients theta;
  theta.theta1 = sol.head(t0);
  if (d > 0) {
    const MatrixXd b_pre = config.cov_coefs.topRows(t0);
    theta.theta2 = config.cov_coef_at(0) - b_pre.transpose() * theta.theta1;
  } else {
    theta.theta2 = VectorXd(0);
  }
  return theta;
}

IdentificationReport identification_check(const FactorDgpConfig& config) {
  const SelectionMoments& sm = selection_moments(config);
  const int r = config.n_factors, d = config.n_cov;
  IdentificationReport rep;

  Eigen::JacobiSVD<MatrixXd> svd1(sm.second_moment_control);
  rep.rank1 = numerics::rank_estimate(sm.second_moment_control);
  rep.cond1 = rep.rank1 == r + d;
  const auto& s1 = svd1.singularValues();
  rep.margin1 = s1(0) > 0.0 ? s1(s1.size() - 1) / s1(0) : 0.0;

  const MatrixXd g_post = post_loading_block(config);
  Eigen::JacobiSVD<MatrixXd> svd2(g_post);
  rep.rank2 = numerics::rank_estimate(g_post);
  rep.cond2 = rep.rank2 == r + d;
  const auto& s2 = svd2.singularValues();
  rep.margin2 =
      (s2.size() >= r + d && s2(0) > 0.0) ? s2(r + d - 1) / s2(0) : 0.0;
  return rep;
}

std::string IdentificationReport::to_json() const {
  nlohmann::json j;
  j["cond1_second_moment_full_rank"] = cond1;
  j["cond2_post_loadings_full_rank"] = cond2;
  j["identified"] = identified();
  j["rank1"] = rank1;
  j["rank2"] = rank2;
  j["margin1"] = margin1;
  j["margin2"] = margin2;
  return j.dump(2);
}

TvStructure tv_rank_matrix(const ArDgpConfig& config, bool general) {
  config.check();
  const int r = config.n_factors, d = config.n_cov, t0 = config.n_pre, t1 = config.n_post;
  const ArSelectionMoments& am = ar_selection_moments(config);

  const MatrixXd sigma0 = am.second_moment_u0x.topLeftCorner(r, r);
  if (numerics::rank_estimate(sigma0) < r) {
    throw Error(ErrorCode::SingularSigma0, "E[U_0 U_0'|A=0] is singular");
  }

  TvStructure tv;
  // Partitioned inverse of the (r+d) second-moment matrix.
  if (d > 0) {
    const MatrixXd sxx = am.second_moment_u0x.bottomRightCorner(d, d);
    const MatrixXd sux = am.second_moment_u0x.topRightCorner(r, d);
    Eigen::FullPivLU<MatrixXd> lux(sxx);
    if (!lux.isInvertible()) {
      throw Error(ErrorCode::SingularSigma0, "E[XX'|A=0] is singular");
    }
    const MatrixXd sxx_inv = lux.inverse();
    const MatrixXd schur = sigma0 - sux * sxx_inv * sux.transpose();
    Eigen::FullPivLU<MatrixXd> lus(schur);
    if (!lus.isInvertible()) throw Error(ErrorCode::SingularSigma0, "Schur complement singular");
    tv.g11 = lus.inverse();
    tv.g12 = -tv.g11 * sux * sxx_inv;
    tv.g21 = -sxx_inv * sux.transpose() * tv.g11;
    tv.g22 = sxx_inv + sxx_inv * sux.transpose() * tv.g11 * sux * sxx_inv;
  } else {
    Eigen::FullPivLU<MatrixXd> lu0(sigma0);
    tv.g11 = lu0.inverse();
    tv.g12 = MatrixXd(r, 0);
    tv.g21 = MatrixXd(0, r);
    tv.g22 = MatrixXd(0, 0);
  }

  const MatrixXd gamma_to_zero = gamma_prod(config, -1, -t0);  // Gamma_{(-1):(-T0)}
  tv.rank_matrix.resize(t0, r);
  for (int s = 1; s <= t0; ++s) {
    const VectorXd v = config.loading_at(-s);
    // E[U_{-s} U_0' | A=0] assembled from the chain:
    //   Gamma_{(-s-1):(-T0)} Sigma_{U_{-T0}} Gamma'_{(-1):(-T0)}
    //   + sum_k Gamma_{(-s-1):(-s-k+1)} Sigma_{eta_{-s-k}} Gamma'_{(-1):(-s-k+1)}
    MatrixXd m_u0 = gamma_prod(config, -s - 1, -t0) * am.sigma_u_init * gamma_to_zero.transpose();
    MatrixXd m_x = MatrixXd::Zero(r, d);
    if (general && d > 0) {
      m_x = gamma_prod(config, -s - 1, -t0) * am.sigma_u_init_x;
    }
    for (int k = 1; k <= t0 - s; ++k) {
      const MatrixXd lead = gamma_prod(config, -s - 1, -s - k + 1);
      const MatrixXd trail = gamma_prod(config, -1, -s - k + 1);
      m_u0 += lead * am.sigma_eta[(-s - k) + t0] * trail.transpose();
      if (general && d > 0) m_x += lead * am.sigma_eta_x[(-s - k) + t0];
    }
    if (general) {
      tv.rank_matrix.row(s - 1) = v.transpose() * (m_u0 * tv.g11 + m_x * tv.g21);
    } else {
      tv.rank_matrix.row(s - 1) = v.transpose() * m_u0;
    }
  }

  tv.v_post_tilde.resize(t1, r);
  for (int t = 1; t <= t1; ++t) {
    tv.v_post_tilde.row(t - 1) = config.loading_at(t).transpose() * gamma_prod(config, t - 1, 0);
  }

  tv.rank_pre = numerics::rank_estimate(tv.rank_matrix);
  Eigen::JacobiSVD<MatrixXd> svd_pre(tv.rank_matrix);
  const auto& sp = svd_pre.singularValues();
  tv.margin_pre = (sp.size() >= r && sp(0) > 0.0) ? sp(r - 1) / sp(0) : 0.0;

  const MatrixXd post_block =
      loading_block(tv.v_post_tilde,
                    d > 0 ? MatrixXd(config.cov_coefs.bottomRows(t1)) : MatrixXd(t1, 0), d);
  tv.rank_post = numerics::rank_estimate(post_block);
  Eigen::JacobiSVD<MatrixXd> svd_post(post_block);
  const auto& sq = svd_post.singularValues();
  tv.margin_post = (sq.size() >= r + d && sq(0) > 0.0) ? sq(r + d - 1) / sq(0) : 0.0;
  return tv;
}

MatrixXd moment_covariance(const FactorDgpConfig& config, const BridgeCoefficients& theta) {
  const SelectionMoments& sm = selection_moments(config);
  const NoiseMoments nm = noise_moments(config);
  const MatrixXd g_post = post_loading_block(config);
  const int d = config.n_cov, t1 = config.n_post;

  const VectorXd th1 = theta.theta1;
  const double xi2 = nm.zero_var - 2.0 * th1.dot(nm.pre_zero) + th1.dot(nm.pre_pre * th1);
  MatrixXd zz = g_post * sm.second_moment_control * g_post.transpose();
  zz.topLeftCorner(t1, t1) += nm.post_post;
  return xi2 * sm.p_control * zz;
}

AsymptoticVariance asymptotic_variance_oracle(const FactorDgpConfig& config,
                                              const BridgeCoefficients& theta_target,
                                              const MatrixXd& weight_limit) {
  const SelectionMoments& sm = selection_moments(config);
  const NoiseMoments nm = noise_moments(config);
  const MatrixXd g_pre = pre_loading_block(config);
  const VectorXd vb = target_coef(config);
  const double p1 = sm.p_treated;
  if (!(p1 > 0.0) || !(sm.p_control > 0.0)) {
    throw Error(ErrorCode::DegenerateGroup, "population group probabilities");
  }

  // E[g^2] = P(A=1) ((V0;b0)' Cov((U,X)|A=1) (V0;b0) + theta1' Sigma_pre theta1).
  const VectorXd th1 = theta_target.theta1;
  const double g2 =
      p1 * (vb.dot(sm.cov_treated() * vb) + th1.dot(nm.pre_pre * th1));

  // Psi = E[A W'] (K' W K)^+ K' W evaluated at population quantities.
  const PopulationMoments pm = population_K_b(config);
  const Eigen::RowVectorXd aw = p1 * pm.treated_w_mean.transpose();
  const MatrixXd kw = pm.k.transpose() * weight_limit;
  const Eigen::RowVectorXd psi_row = aw * numerics::pinv(kw * pm.k) * kw;

  const MatrixXd sigma_m = moment_covariance(config, theta_target);
  const double mterm = psi_row.dot(sigma_m * psi_row.transpose());

  AsymptoticVariance av;
  av.treated_term = g2 / (p1 * p1);
  av.moment_term = mterm / (p1 * p1);
  av.total = av.treated_term + av.moment_term;
  return av;
}

}  // namespace panelbridge::oracle
