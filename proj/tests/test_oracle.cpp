#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "panelbridge/bridge.hpp"
#include "panelbridge/numerics.hpp"
#include "panelbridge/oracle.hpp"
#include "test_support.hpp"

using namespace panelbridge;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

dgp::ArDgpConfig ar_with_covariates(int n, int t0, int t1, double gamma) {
  auto c = pbtest::ar_config(n, t0, t1, gamma, 0.3, 1.0);
  c.n_cov = 2;
  c.cov_coefs = MatrixXd::Zero(c.n_periods(), 2);
  for (int t = 0; t < c.n_periods(); ++t) {
    c.cov_coefs(t, 0) = 0.5 + 0.1 * t;
    c.cov_coefs(t, 1) = -0.3 + 0.05 * t;
  }
  c.covariate_spec.first_constant = true;
  c.covariate_spec.mean = VectorXd::Zero(1);
  c.covariate_spec.cov = MatrixXd::Identity(1, 1);
  c.selection.coef_x = VectorXd::Zero(2);
  c.selection.coef_x(1) = 0.4;
  return c;
}

}  // namespace

TEST_CASE("population moments: scalar factorization example") {
  // r=1, d=0, T0=T1=1, V = 1, U ~ N(0,1), randomized selection with p = 1/2:
  // K = P(A=0) E[U^2|A=0] = 0.5, b = 0.5 * V_0 * E[U^2|A=0] = 0.5.
  auto cfg = pbtest::factor_config(100, 1, 1, 1, 0, 1.0);
  cfg.loadings = MatrixXd::Ones(3, 1);
  cfg.selection.kind = dgp::SelectionModel::Kind::Randomized;
  cfg.selection.intercept = 0.0;
  auto pm = oracle::population_K_b(cfg);
  CHECK(pm.p_control == doctest::Approx(0.5).epsilon(1e-12));  // propensity is exact
  CHECK(pm.k(0, 0) == doctest::Approx(0.5).epsilon(2e-2));     // plug-in moment error
  CHECK(pm.b(0) == doctest::Approx(0.5).epsilon(2e-2));
}

TEST_CASE("population K has rank r+d on identified configs and K theta* = b") {
  rng::Stream s(rng::derive_key(77, 1));
  int tested = 0;
  while (tested < 6) {
    auto cfg = pbtest::random_identified_config(s);
    auto rep = oracle::identification_check(cfg);
    if (!rep.identified() || rep.margin1 < 1e-3 || rep.margin2 < 1e-3) continue;
    ++tested;
    auto pm = oracle::population_K_b(cfg);
    CHECK(numerics::rank_estimate(pm.k, 1e-7) == cfg.n_factors + cfg.n_cov);

    auto set = oracle::bridge_set(cfg);
    for (int k = 0; k < 10; ++k) {
      VectorXd c = s.next_normal_vector(set.dimension());
      auto theta = oracle::bridge_set_member(cfg, set, c);
      CHECK((pm.k * theta.stacked() - pm.b).norm() <= 1e-8 * std::max(1.0, pm.b.norm()));
    }
  }
}

TEST_CASE("bridge set: fixed-effects structure") {
  auto cfg = pbtest::fe_config(50, 4, 2, 1.0);
  auto set = oracle::bridge_set(cfg);
  for (int t = 0; t < 4; ++t) {
    CHECK(set.particular.theta1(t) == doctest::Approx(0.25).epsilon(1e-12));
  }
  CHECK(set.dimension() == 3);
  // Null-space directions keep 1' theta1 = 1.
  for (int j = 0; j < set.dimension(); ++j) {
    CHECK(std::abs(set.nullspace_basis.col(j).sum()) <= 1e-12);
  }
}

TEST_CASE("bridge set: unique when T0 = r, error when T0 < r") {
  auto unique_cfg = pbtest::factor_config(50, 2, 2, 2, 0, 1.0);
  auto set = oracle::bridge_set(unique_cfg);
  CHECK(set.dimension() == 0);

  auto bad = pbtest::factor_config(50, 1, 2, 2, 0, 1.0);
  try {
    (void)oracle::bridge_set(bad);
    FAIL("expected RankDeficientLoadings");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::RankDeficientLoadings);
  }
}

TEST_CASE("theta_min oracle: FE weights and projection equivalence") {
  auto fe = pbtest::fe_config(50, 5, 2, 1.0);
  auto pm = oracle::population_K_b(fe);
  auto theta = oracle::theta_min_oracle(pm, fe.n_pre, fe.n_cov);
  for (int t = 0; t < 5; ++t) CHECK(theta.theta1(t) == doctest::Approx(0.2).epsilon(1e-7));

  // Independent oracle: minimize the stacked norm over the affine bridge set
  // by projecting the particular solution along the null-space directions.
  auto cfg = pbtest::factor_config(50, 5, 3, 2, 1, 1.0);
  auto set = oracle::bridge_set(cfg);
  const int dim = set.dimension();
  const MatrixXd b_pre = cfg.cov_coefs.topRows(cfg.n_pre);
  MatrixXd directions(cfg.n_pre + cfg.n_cov, dim);
  directions.topRows(cfg.n_pre) = set.nullspace_basis;
  directions.bottomRows(cfg.n_cov) = -b_pre.transpose() * set.nullspace_basis;
  VectorXd part = set.particular.stacked();
  VectorXd coef = -(directions.transpose() * directions)
                       .ldlt()
                       .solve(directions.transpose() * part);
  VectorXd projected = part + directions * coef;

  auto pm2 = oracle::population_K_b(cfg);
  auto theta2 = oracle::theta_min_oracle(pm2, cfg.n_pre, cfg.n_cov);
  CHECK((theta2.stacked() - projected).norm() <= 1e-6);

  // Unique-bridge case: the oracle returns the only element.
  auto unique_cfg = pbtest::factor_config(50, 2, 2, 2, 0, 1.0);
  auto upm = oracle::population_K_b(unique_cfg);
  auto uset = oracle::bridge_set(unique_cfg);
  auto utheta = oracle::theta_min_oracle(upm, unique_cfg.n_pre, unique_cfg.n_cov);
  CHECK((utheta.stacked() - uset.particular.stacked()).norm() <= 1e-6);
}

TEST_CASE("theta_M oracle targets") {
  auto cfg = pbtest::factor_config(50, 4, 3, 2, 1, 1.0);
  const int t0 = cfg.n_pre, d = cfg.n_cov;

  // M = I agrees with the pseudoinverse route.
  auto pm = oracle::population_K_b(cfg);
  auto m_eye = oracle::theta_M_oracle(cfg, MatrixXd::Identity(t0 + d, t0 + d));
  auto t_min = oracle::theta_min_oracle(pm, t0, d);
  CHECK((m_eye.stacked() - t_min.stacked()).norm() <= 1e-6);

  // Partial norm: minimizes || theta1 || alone; with an orthonormal null
  // basis the optimum is the projection of the particular theta1.
  MatrixXd m_partial = MatrixXd::Zero(t0 + d, t0 + d);
  m_partial.topLeftCorner(t0, t0).setIdentity();
  auto t_par = oracle::theta_M_oracle(cfg, m_partial);
  auto set = oracle::bridge_set(cfg);
  VectorXd expected1 = set.particular.theta1 -
                       set.nullspace_basis * (set.nullspace_basis.transpose() *
                                              set.particular.theta1);
  CHECK((t_par.theta1 - expected1).norm() <= 1e-10);

  // Both targets identify the same population treated mean.
  auto sys = oracle::to_moment_system(pm, t0, d);
  const double g1 = bridge::estimate_treated_mean(sys, m_eye);
  const double g2 = bridge::estimate_treated_mean(sys, t_par);
  CHECK(std::abs(g1 - g2) <= 1e-8);

  try {
    (void)oracle::theta_M_oracle(cfg, MatrixXd::Zero(t0 + d, t0 + d));
    FAIL("expected TargetNotUnique");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TargetNotUnique);
  }
}

TEST_CASE("identification report flags rank shortfalls") {
  // T1 < r starves the post block of rows.
  auto short_cfg = pbtest::factor_config(50, 3, 1, 2, 0, 1.0);
  auto rep = oracle::identification_check(short_cfg);
  CHECK_FALSE(rep.cond2);

  // Collinear confounder components break condition 1.
  auto coll = pbtest::factor_config(50, 3, 2, 2, 0, 1.0);
  coll.confounder_cov << 1.0, 1.0, 1.0, 1.0;
  auto rep2 = oracle::identification_check(coll);
  CHECK_FALSE(rep2.cond1);

  auto good = pbtest::factor_config(50, 3, 2, 2, 1, 1.0);
  auto rep3 = oracle::identification_check(good);
  CHECK(rep3.cond1);
  CHECK(rep3.cond2);
  CHECK(rep3.margin1 > 1e-6);
  CHECK(rep3.margin2 > 1e-6);
  CHECK(rep3.to_json().find("identified") != std::string::npos);
}

TEST_CASE("tv structure: static reduction under identity transitions") {
  auto c = pbtest::ar_config(100, 3, 2, 1.0, 0.0, 1.0);  // Gamma = I, no innovations
  for (auto& g : c.transitions) g = MatrixXd::Identity(1, 1);
  auto tv = oracle::tv_rank_matrix(c, false);
  // Rows collapse to V_{-s} * E[U_init^2 | A=0]; compare against the
  // directly assembled static structure.
  const auto& am = oracle::ar_selection_moments(c);
  for (int s = 1; s <= 3; ++s) {
    const double expected = c.loading_at(-s)(0) * am.sigma_u_init(0, 0);
    CHECK(tv.rank_matrix(s - 1, 0) == doctest::Approx(expected).epsilon(1e-9));
  }
  CHECK(tv.rank_pre == 1);
  CHECK(tv.rank_post == 1);
  CHECK(tv.identified(1, 0));
}

TEST_CASE("tv structure: scalar hand expansion with randomized selection") {
  auto c = pbtest::ar_config(100, 2, 1, 0.0, 0.0, 1.0);
  c.transitions.clear();
  c.transitions.push_back(MatrixXd::Constant(1, 1, 0.6));  // Gamma_{-2}
  c.transitions.push_back(MatrixXd::Constant(1, 1, 0.8));  // Gamma_{-1}
  c.transitions.push_back(MatrixXd::Constant(1, 1, 0.7));  // Gamma_0
  c.innovation_cov.assign(1, MatrixXd::Constant(1, 1, 0.25));
  c.init_cov = MatrixXd::Constant(1, 1, 1.5);
  c.selection.kind = dgp::SelectionModel::Kind::Randomized;  // conditional = marginal

  auto tv = oracle::tv_rank_matrix(c, false);
  const double v1 = c.loading_at(-1)(0), v2 = c.loading_at(-2)(0);
  const double g2 = 0.6, g1 = 0.8;
  const double su = 1.5, se = 0.25;
  // Row for period -1: V_{-1} (Gamma_{-2} S_u (Gamma_{-1} Gamma_{-2}) + S_eta Gamma_{-1}).
  const double row1 = v1 * (g2 * su * g1 * g2 + se * g1);
  // Row for period -2: V_{-2} S_u (Gamma_{-1} Gamma_{-2}).
  const double row2 = v2 * su * g1 * g2;
  CHECK(tv.rank_matrix(0, 0) == doctest::Approx(row1).epsilon(2e-2));
  CHECK(tv.rank_matrix(1, 0) == doctest::Approx(row2).epsilon(2e-2));
  // Post row: V_1 Gamma_0.
  CHECK(tv.v_post_tilde(0, 0) == doctest::Approx(c.loading_at(1)(0) * 0.7).epsilon(1e-12));
}

TEST_CASE("tv structure: singular U_0 second moment is rejected") {
  auto c = pbtest::ar_config(100, 2, 1, 0.5, 0.0, 1.0);
  c.init_mean = VectorXd::Zero(1);
  c.init_cov = MatrixXd::Zero(1, 1);  // U identically zero along the chain
  try {
    (void)oracle::tv_rank_matrix(c, false);
    FAIL("expected SingularSigma0");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SingularSigma0);
  }
}

TEST_CASE("tv structure: G blocks reassemble the inverse second-moment matrix") {
  auto c = ar_with_covariates(100, 3, 2, 0.7);
  auto tv = oracle::tv_rank_matrix(c, true);
  const auto& am = oracle::ar_selection_moments(c);
  const int r = 1, d = 2;
  MatrixXd g(r + d, r + d);
  g.topLeftCorner(r, r) = tv.g11;
  g.topRightCorner(r, d) = tv.g12;
  g.bottomLeftCorner(d, r) = tv.g21;
  g.bottomRightCorner(d, d) = tv.g22;
  MatrixXd product = g * am.second_moment_u0x;
  CHECK((product - MatrixXd::Identity(r + d, r + d)).norm() <= 1e-8);
  CHECK(tv.rank_pre == r);
  CHECK(tv.rank_post == r + d);
}

TEST_CASE("bridge-set members satisfy the empirical moment equation at scale") {
  auto cfg = pbtest::factor_config(20000, 4, 3, 2, 1, 1.0);
  auto [data, truth] = dgp::simulate_factor(cfg, 55);
  auto set = oracle::bridge_set(cfg);
  rng::Stream s(rng::derive_key(8, 8));

  const int pz = data.n_post + data.n_cov;
  for (int rep = 0; rep < 5; ++rep) {
    VectorXd c = s.next_normal_vector(set.dimension());
    auto theta = oracle::bridge_set_member(cfg, set, c);
    // Component means and standard deviations of m(O; theta).
    VectorXd mean = VectorXd::Zero(pz);
    VectorXd sq = VectorXd::Zero(pz);
    for (int i = 0; i < data.n_units; ++i) {
      double resid = 0.0;
      if (data.treatment(i) == 0) {
        resid = data.y_target(i) - data.y_pre.row(i).dot(theta.theta1) -
                data.covariates.row(i).dot(theta.theta2);
      }
      for (int j = 0; j < pz; ++j) {
        const double z =
            j < data.n_post ? data.y_post(i, j) : data.covariates(i, j - data.n_post);
        const double m = data.treatment(i) == 0 ? resid * z : 0.0;
        mean(j) += m;
        sq(j) += m * m;
      }
    }
    mean /= data.n_units;
    for (int j = 0; j < pz; ++j) {
      const double var = sq(j) / data.n_units - mean(j) * mean(j);
      const double se = std::sqrt(std::max(var, 1e-30) / data.n_units);
      CHECK(std::abs(mean(j)) <= 5.0 * se);
    }
  }
}

TEST_CASE("empirical moment matrix converges to the population K") {
  auto cfg = pbtest::factor_config(10000, 3, 2, 2, 1, 1.0);
  auto base = cfg;
  base.n_units = 1;  // population quantities do not depend on N
  auto pm = oracle::population_K_b(base);
  for (int n : {10000, 40000}) {
    cfg.n_units = n;
    auto [data, truth] = dgp::simulate_factor(cfg, 17);
    auto sys = bridge::build_moment_system(data);
    CHECK((sys.k_hat - pm.k).norm() <= 5.0 * pm.k.norm() / std::sqrt(static_cast<double>(n)));
  }
}

TEST_CASE("asymptotic variance: noiseless collapse and optimal weighting inequality") {
  auto quiet = pbtest::factor_config(100, 3, 2, 2, 1, 0.0);
  auto set = oracle::bridge_set(quiet);
  auto av = oracle::asymptotic_variance_oracle(
      quiet, set.particular, MatrixXd::Identity(quiet.n_post + quiet.n_cov,
                                                quiet.n_post + quiet.n_cov));
  CHECK(av.moment_term == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(av.total == doctest::Approx(av.treated_term));
  CHECK(av.total > 0.0);

  rng::Stream s(rng::derive_key(99, 3));
  int tested = 0;
  while (tested < 20) {
    auto cfg = pbtest::random_identified_config(s);
    auto rep = oracle::identification_check(cfg);
    if (!rep.identified() || rep.margin1 < 1e-3 || rep.margin2 < 1e-3) continue;
    ++tested;
    auto pm = oracle::population_K_b(cfg);
    auto theta = oracle::theta_min_oracle(pm, cfg.n_pre, cfg.n_cov);
    const int pz = cfg.n_post + cfg.n_cov;
    auto sigma_m = oracle::moment_covariance(cfg, theta);
    auto id = oracle::asymptotic_variance_oracle(cfg, theta, MatrixXd::Identity(pz, pz));
    auto opt = oracle::asymptotic_variance_oracle(
        cfg, theta, sigma_m.llt().solve(MatrixXd::Identity(pz, pz)));
    CHECK(id.total >= opt.total - 1e-10 * std::max(1.0, opt.total));
  }
}
