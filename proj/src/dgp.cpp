#include "panelbridge/dgp.hpp"

#include <cmath>
#include <limits>

#include "panelbridge/rng.hpp"

namespace panelbridge::dgp {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

enum Tag : std::uint64_t {
  kTagConfounder = 1,
  kTagCovariate = 2,
  kTagNoise = 3,
  kTagSelection = 4,
  kTagInnovation = 5,
  kTagInitConfounder = 6,
};

void check_psd_shape(const MatrixXd& m, int dim, const char* name) {
  if (m.rows() != dim || m.cols() != dim) {
    throw Error(ErrorCode::ConfigInvalid, std::string(name) + " has wrong shape");
  }
  if (!m.isApprox(m.transpose(), 1e-12)) {
    throw Error(ErrorCode::ConfigInvalid, std::string(name) + " is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(m, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() < -1e-10) {
    throw Error(ErrorCode::ConfigInvalid, std::string(name) + " is not PSD");
  }
}

void check_covariates(const CovariateSpec& spec, int d) {
  const int gauss = d - (spec.first_constant && d > 0 ? 1 : 0);
  if (spec.mean.size() != gauss) {
    throw Error(ErrorCode::ConfigInvalid, "covariate mean has wrong length");
  }
  if (gauss > 0) check_psd_shape(spec.cov, gauss, "covariate cov");
}

void check_selection(const SelectionModel& sel, int r, int d) {
  if (sel.kind == SelectionModel::Kind::Logistic) {
    if (sel.coef_u.size() != r || sel.coef_x.size() != d) {
      throw Error(ErrorCode::ConfigInvalid, "selection coefficient lengths");
    }
  }
}

void check_effect(const VectorXd& effect, int t1) {
  if (effect.size() != t1 + 1) {
    throw Error(ErrorCode::ConfigInvalid, "effect_path must have length T1+1");
  }
}

// Equicorrelated covariance block scaled to sigma^2.
MatrixXd equicorr_block(int n, double sigma, double rho) {
  MatrixXd m = MatrixXd::Constant(n, n, rho * sigma * sigma);
  m.diagonal().setConstant(sigma * sigma);
  return m;
}

struct NoiseSampler {
  bool trivial;  // plain sigma * z
  double sigma;
  MatrixXd sqrt_pre0;  // (T0+1) x (T0+1)
  MatrixXd sqrt_post;  // T1 x T1

  NoiseSampler(int t0, int t1, double sig, double rho_pre0, double rho_post)
      : trivial(rho_pre0 == 0.0 && rho_post == 0.0), sigma(sig) {
    if (!trivial) {
      if (std::abs(rho_pre0) > 1.0 || std::abs(rho_post) > 1.0) {
        throw Error(ErrorCode::ConfigInvalid, "noise correlations must lie in [-1,1]");
      }
      sqrt_pre0 = rng::psd_sqrt(equicorr_block(t0 + 1, sig, rho_pre0));
      sqrt_post = t1 > 0 ? rng::psd_sqrt(equicorr_block(t1, sig, rho_post)) : MatrixXd(0, 0);
    }
  }

  // One row of idiosyncratic errors, periods ordered -T0..T1.
  VectorXd draw(rng::Stream& s, int t0, int t1) const {
    VectorXd z = s.next_normal_vector(t0 + 1 + t1);
    if (trivial) return sigma * z;
    VectorXd eps(t0 + 1 + t1);
    eps.head(t0 + 1) = sqrt_pre0 * z.head(t0 + 1);
    if (t1 > 0) eps.tail(t1) = sqrt_post * z.tail(t1);
    return eps;
  }
};

VectorXd draw_covariates(rng::Stream& s, const CovariateSpec& spec, const MatrixXd& sqrt_cov,
                         int d) {
  VectorXd x(d);
  int offset = 0;
  if (spec.first_constant && d > 0) {
    x(0) = 1.0;
    offset = 1;
  }
  const int gauss = d - offset;
  if (gauss > 0) x.tail(gauss) = spec.mean + sqrt_cov * s.next_normal_vector(gauss);
  return x;
}

void mix_matrix(std::uint64_t& h, const MatrixXd& m) {
  h = rng::mix64(h ^ (static_cast<std::uint64_t>(m.rows()) * 0x9E37u + m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    std::uint64_t bits;
    double v = m.data()[i];
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(bits));
    h = rng::mix64(h ^ bits);
  }
}

void mix_vector(std::uint64_t& h, const VectorXd& v) { mix_matrix(h, MatrixXd(v)); }

void mix_selection(std::uint64_t& h, const SelectionModel& sel) {
  h = rng::mix64(h ^ static_cast<std::uint64_t>(sel.kind));
  mix_vector(h, sel.coef_u);
  mix_vector(h, sel.coef_x);
  std::uint64_t bits;
  std::memcpy(&bits, &sel.intercept, sizeof(bits));
  h = rng::mix64(h ^ bits);
}

}  // namespace

double propensity(const SelectionModel& sel, const VectorXd& u, const VectorXd& x) {
  double index = sel.intercept;
  if (sel.kind == SelectionModel::Kind::Logistic) {
    index += sel.coef_u.dot(u) + sel.coef_x.dot(x);
  }
  // Positivity by construction: clip the index at logit(0.01).
  const double bound = std::log(0.99 / 0.01);
  index = std::clamp(index, -bound, bound);
  return 1.0 / (1.0 + std::exp(-index));
}

void FactorDgpConfig::check() const {
  if (n_units < 1 || n_pre < 1 || n_post < 0 || n_cov < 0 || n_factors < 1) {
    throw Error(ErrorCode::ConfigInvalid, "factor config dimensions");
  }
  if (loadings.rows() != n_periods() || loadings.cols() != n_factors) {
    throw Error(ErrorCode::ConfigInvalid, "loadings must be (T0+1+T1) x r");
  }
  if (n_cov > 0 && (cov_coefs.rows() != n_periods() || cov_coefs.cols() != n_cov)) {
    throw Error(ErrorCode::ConfigInvalid, "cov_coefs must be (T0+1+T1) x d");
  }
  if (confounder_mean.size() != n_factors) {
    throw Error(ErrorCode::ConfigInvalid, "confounder_mean length");
  }
  check_psd_shape(confounder_cov, n_factors, "confounder_cov");
  check_covariates(covariate_spec, n_cov);
  check_selection(selection, n_factors, n_cov);
  check_effect(effect_path, n_post);
  if (noise_sigma < 0.0) throw Error(ErrorCode::ConfigInvalid, "noise_sigma < 0");
}

void ArDgpConfig::check() const {
  if (n_units < 1 || n_pre < 1 || n_post < 0 || n_cov < 0 || n_factors < 1) {
    throw Error(ErrorCode::ConfigInvalid, "ar config dimensions");
  }
  if (loadings.rows() != n_periods() || loadings.cols() != n_factors) {
    throw Error(ErrorCode::ConfigInvalid, "loadings must be (T0+1+T1) x r");
  }
  if (n_cov > 0 && (cov_coefs.rows() != n_periods() || cov_coefs.cols() != n_cov)) {
    throw Error(ErrorCode::ConfigInvalid, "cov_coefs must be (T0+1+T1) x d");
  }
  if (static_cast<int>(transitions.size()) != n_pre + n_post) {
    throw Error(ErrorCode::ConfigInvalid, "transitions must have T0+T1 entries");
  }
  for (const auto& g : transitions) {
    if (g.rows() != n_factors || g.cols() != n_factors) {
      throw Error(ErrorCode::ConfigInvalid, "transition matrix shape");
    }
  }
  if (innovation_cov.size() != 1 &&
      static_cast<int>(innovation_cov.size()) != n_pre + n_post) {
    throw Error(ErrorCode::ConfigInvalid, "innovation_cov must have 1 or T0+T1 entries");
  }
  for (const auto& c : innovation_cov) check_psd_shape(c, n_factors, "innovation_cov");
  if (init_mean.size() != n_factors) throw Error(ErrorCode::ConfigInvalid, "init_mean length");
  check_psd_shape(init_cov, n_factors, "init_cov");
  check_covariates(covariate_spec, n_cov);
  check_selection(selection, n_factors, n_cov);
  check_effect(effect_path, n_post);
  if (noise_sigma < 0.0) throw Error(ErrorCode::ConfigInvalid, "noise_sigma < 0");
  if (!joint_normal) {
    throw Error(ErrorCode::ConfigInvalid,
                "only the joint-normal innovation family is implemented");
  }
}

std::pair<PanelDataset, GroundTruth> simulate_factor(const FactorDgpConfig& config,
                                                     std::uint64_t seed) {
  config.check();
  const int n = config.n_units, t0 = config.n_pre, t1 = config.n_post;
  const int d = config.n_cov, r = config.n_factors, periods = config.n_periods();

  const MatrixXd sqrt_u = rng::psd_sqrt(config.confounder_cov);
  const int gauss = d - (config.covariate_spec.first_constant && d > 0 ? 1 : 0);
  const MatrixXd sqrt_x = gauss > 0 ? rng::psd_sqrt(config.covariate_spec.cov) : MatrixXd(0, 0);
  const NoiseSampler noise(t0, t1, config.noise_sigma, config.noise_corr_pre0,
                           config.noise_corr_post);

  PanelDataset data;
  data.n_units = n;
  data.n_pre = t0;
  data.n_post = t1;
  data.n_cov = d;
  data.treatment.resize(n);
  data.covariates.resize(n, d);
  data.y_pre.resize(n, t0);
  data.y_target.resize(n);
  data.y_post.resize(n, t1);

  GroundTruth truth;
  truth.confounders.resize(n, r);
  truth.noise.resize(n, periods);
  truth.potential_y0.resize(n, periods);
  truth.treatment.resize(n);
  truth.factor_config = config;

  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::uint64_t>(i);
    rng::Stream su(rng::derive_key(seed, ui, kTagConfounder));
    rng::Stream sx(rng::derive_key(seed, ui, kTagCovariate));
    rng::Stream se(rng::derive_key(seed, ui, kTagNoise));
    rng::Stream ss(rng::derive_key(seed, ui, kTagSelection));

    VectorXd u = config.confounder_mean + sqrt_u * su.next_normal_vector(r);
    VectorXd x = draw_covariates(sx, config.covariate_spec, sqrt_x, d);
    VectorXd eps = noise.draw(se, t0, t1);
    const double p = propensity(config.selection, u, x);
    const int a = ss.next_uniform() < p ? 1 : 0;

    truth.confounders.row(i) = u.transpose();
    truth.noise.row(i) = eps.transpose();
    truth.treatment(i) = a;
    data.treatment(i) = a;
    data.covariates.row(i) = x.transpose();

    for (int t = -t0; t <= t1; ++t) {
      double y0 = config.loading_at(t).dot(u) + eps(t + t0);
      if (d > 0) y0 += config.cov_coef_at(t).dot(x);
      truth.potential_y0(i, t + t0) = y0;
      double y = y0;
      if (a == 1 && t >= 0) y += config.effect_path(t);
      if (t < 0) data.y_pre(i, t + t0) = y;
      else if (t == 0) data.y_target(i) = y;
      else data.y_post(i, t - 1) = y;
    }
  }

  const int n1 = truth.treatment.sum();
  truth.gamma_true_sample =
      n1 > 0 ? (truth.treatment.cast<double>().dot(truth.potential_y0.col(t0)) / n1) : kNan;
  truth.gamma_sample_all = truth.potential_y0.col(t0).mean();
  if (config.selection.kind == SelectionModel::Kind::Randomized) {
    double g = config.loading_at(0).dot(config.confounder_mean);
    if (d > 0) {
      VectorXd mx(d);
      int off = 0;
      if (config.covariate_spec.first_constant) mx(off++) = 1.0;
      mx.tail(d - off) = config.covariate_spec.mean;
      g += config.cov_coef_at(0).dot(mx);
    }
    truth.gamma_true_population = g;
  } else {
    truth.gamma_true_population = kNan;
  }

  data.check();
  return {std::move(data), std::move(truth)};
}

std::pair<PanelDataset, GroundTruth> simulate_twfe(const FactorDgpConfig& config,
                                                   std::uint64_t seed) {
  config.check();
  const bool ones = (config.loadings.array() == 1.0).all();
  const bool intercept_only = config.n_cov == 1 && config.covariate_spec.first_constant;
  if (config.n_factors != 1 || !ones || !intercept_only) {
    throw Error(ErrorCode::ConfigInvalid,
                "twfe requires r=1, unit loadings, and a single constant covariate");
  }
  return simulate_factor(config, seed);
}

FactorDgpConfig make_twfe_config(int n_units, int n_pre, int n_post,
                                 const VectorXd& time_effects, double u_mean, double u_var,
                                 const SelectionModel& selection, double noise_sigma,
                                 const VectorXd& effect_path) {
  FactorDgpConfig cfg;
  cfg.n_units = n_units;
  cfg.n_pre = n_pre;
  cfg.n_post = n_post;
  cfg.n_cov = 1;
  cfg.n_factors = 1;
  cfg.loadings = MatrixXd::Ones(cfg.n_periods(), 1);
  if (time_effects.size() != cfg.n_periods()) {
    throw Error(ErrorCode::ConfigInvalid, "time_effects must have length T0+1+T1");
  }
  cfg.cov_coefs = time_effects;
  cfg.confounder_mean = VectorXd::Constant(1, u_mean);
  cfg.confounder_cov = MatrixXd::Constant(1, 1, u_var);
  cfg.covariate_spec.first_constant = true;
  cfg.covariate_spec.mean = VectorXd(0);
  cfg.covariate_spec.cov = MatrixXd(0, 0);
  cfg.noise_sigma = noise_sigma;
  cfg.selection = selection;
  cfg.effect_path = effect_path;
  return cfg;
}

std::pair<PanelDataset, GroundTruth> simulate_ar(const ArDgpConfig& config, std::uint64_t seed) {
  config.check();
  const int n = config.n_units, t0 = config.n_pre, t1 = config.n_post;
  const int d = config.n_cov, r = config.n_factors, periods = config.n_periods();
  const int steps = t0 + t1;

  const MatrixXd sqrt_init = rng::psd_sqrt(config.init_cov);
  std::vector<MatrixXd> sqrt_eta;
  for (size_t k = 0; k < config.innovation_cov.size(); ++k) {
    sqrt_eta.push_back(rng::psd_sqrt(config.innovation_cov[k]));
  }
  auto sqrt_eta_at = [&](int t) -> const MatrixXd& {  // t = -T0..T1-1
    return sqrt_eta.size() == 1 ? sqrt_eta[0] : sqrt_eta[static_cast<size_t>(t + t0)];
  };
  const int gauss = d - (config.covariate_spec.first_constant && d > 0 ? 1 : 0);
  const MatrixXd sqrt_x = gauss > 0 ? rng::psd_sqrt(config.covariate_spec.cov) : MatrixXd(0, 0);
  const NoiseSampler noise(t0, t1, config.noise_sigma, 0.0, 0.0);

  PanelDataset data;
  data.n_units = n;
  data.n_pre = t0;
  data.n_post = t1;
  data.n_cov = d;
  data.treatment.resize(n);
  data.covariates.resize(n, d);
  data.y_pre.resize(n, t0);
  data.y_target.resize(n);
  data.y_post.resize(n, t1);

  GroundTruth truth;
  truth.confounders.resize(n, r);
  truth.confounder_path.assign(periods, MatrixXd(n, r));
  truth.innovation_path.assign(steps, MatrixXd(n, r));
  truth.noise.resize(n, periods);
  truth.potential_y0.resize(n, periods);
  truth.treatment.resize(n);
  truth.ar_config = config;

  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::uint64_t>(i);
    rng::Stream s0(rng::derive_key(seed, ui, kTagInitConfounder));
    rng::Stream sh(rng::derive_key(seed, ui, kTagInnovation));
    rng::Stream sx(rng::derive_key(seed, ui, kTagCovariate));
    rng::Stream se(rng::derive_key(seed, ui, kTagNoise));
    rng::Stream ss(rng::derive_key(seed, ui, kTagSelection));

    VectorXd u = config.init_mean + sqrt_init * s0.next_normal_vector(r);
    truth.confounder_path[0].row(i) = u.transpose();
    for (int t = -t0; t < t1; ++t) {
      VectorXd eta = sqrt_eta_at(t) * sh.next_normal_vector(r);
      truth.innovation_path[t + t0].row(i) = eta.transpose();
      u = config.transitions[static_cast<size_t>(t + t0)] * u + eta;
      truth.confounder_path[t + t0 + 1].row(i) = u.transpose();
    }
    const VectorXd u0 = truth.confounder_path[t0].row(i).transpose();
    truth.confounders.row(i) = u0.transpose();

    VectorXd x = draw_covariates(sx, config.covariate_spec, sqrt_x, d);
    VectorXd eps = noise.draw(se, t0, t1);
    const double p = propensity(config.selection, u0, x);
    const int a = ss.next_uniform() < p ? 1 : 0;

    truth.noise.row(i) = eps.transpose();
    truth.treatment(i) = a;
    data.treatment(i) = a;
    data.covariates.row(i) = x.transpose();

    for (int t = -t0; t <= t1; ++t) {
      const VectorXd ut = truth.confounder_path[t + t0].row(i).transpose();
      double y0 = config.loading_at(t).dot(ut) + eps(t + t0);
      if (d > 0) y0 += config.cov_coef_at(t).dot(x);
      truth.potential_y0(i, t + t0) = y0;
      double y = y0;
      if (a == 1 && t >= 0) y += config.effect_path(t);
      if (t < 0) data.y_pre(i, t + t0) = y;
      else if (t == 0) data.y_target(i) = y;
      else data.y_post(i, t - 1) = y;
    }
  }

  const int n1 = truth.treatment.sum();
  truth.gamma_true_sample =
      n1 > 0 ? (truth.treatment.cast<double>().dot(truth.potential_y0.col(t0)) / n1) : kNan;
  truth.gamma_sample_all = truth.potential_y0.col(t0).mean();
  truth.gamma_true_population = kNan;
  if (config.selection.kind == SelectionModel::Kind::Randomized) {
    // E[U_0] from the chain mean recursion.
    VectorXd mu = config.init_mean;
    for (int t = -t0; t < 0; ++t) mu = config.transitions[static_cast<size_t>(t + t0)] * mu;
    double g = config.loading_at(0).dot(mu);
    if (d > 0) {
      VectorXd mx(d);
      int off = 0;
      if (config.covariate_spec.first_constant) mx(off++) = 1.0;
      mx.tail(d - off) = config.covariate_spec.mean;
      g += config.cov_coef_at(0).dot(mx);
    }
    truth.gamma_true_population = g;
  }

  data.check();
  return {std::move(data), std::move(truth)};
}

std::uint64_t fingerprint(const FactorDgpConfig& config) {
  std::uint64_t h = 0xFAC70Aull;
  h = rng::mix64(h ^ static_cast<std::uint64_t>(config.n_units));
  h = rng::mix64(h ^ static_cast<std::uint64_t>(config.n_pre));
  h = rng::mix64(h ^ static_cast<std::uint64_t>(config.n_post));
  h = rng::mix64(h ^ static_cast<std::uint64_t>(config.n_cov));
  h = rng::mix64(h ^ static_cast<std::uint64_t>(config.n_factors));
  mix_matrix(h, config.loadings);
  mix_matrix(h, config.cov_coefs);
  mix_vector(h, config.confounder_mean);
  mix_matrix(h, config.confounder_cov);
  h = rng::mix64(h ^ static_cast<std::uint64_t>(config.covariate_spec.first_constant));
  mix_vector(h, config.covariate_spec.mean);
  mix_matrix(h, config.covariate_spec.cov);
  mix_vector(h, VectorXd::Constant(1, config.noise_sigma));
  mix_vector(h, VectorXd::Constant(1, config.noise_corr_pre0));
  mix_vector(h, VectorXd::Constant(1, config.noise_corr_post));
  mix_selection(h, config.selection);
  mix_vector(h, config.effect_path);
  return h;
}

std::uint64_t fingerprint(const ArDgpConfig& config) {
  std::uint64_t h = 0xA12DC9ull;
  h = rng::mix64(h ^ static_cast<std::uint64_t>(config.n_units));
  h = rng::mix64(h ^ static_cast<std::uint64_t>(config.n_pre));
  h = rng::mix64(h ^ static_cast<std::uint64_t>(config.n_post));
  h = rng::mix64(h ^ static_cast<std::uint64_t>(config.n_cov));
  h = rng::mix64(h ^ static_cast<std::uint64_t>(config.n_factors));
  mix_matrix(h, config.loadings);
  mix_matrix(h, config.cov_coefs);
  h = rng::mix64(h ^ static_cast<std::uint64_t>(config.covariate_spec.first_constant));
  mix_vector(h, config.covariate_spec.mean);
  mix_matrix(h, config.covariate_spec.cov);
  mix_vector(h, VectorXd::Constant(1, config.noise_sigma));
  mix_selection(h, config.selection);
  mix_vector(h, config.effect_path);
  for (const auto& g : config.transitions) mix_matrix(h, g);
  for (const auto& c : config.innovation_cov) mix_matrix(h, c);
  mix_vector(h, config.init_mean);
  mix_matrix(h, config.init_cov);
  return h;
}

}  // namespace panelbridge::dgp
