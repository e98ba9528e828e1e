#include "panelbridge/harness.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <thread>

#include "panelbridge/baselines.hpp"
#include "panelbridge/numerics.hpp"
#include "panelbridge/oracle.hpp"
#include "panelbridge/rng.hpp"

namespace panelbridge::harness {

namespace {

constexpr const char* kCodeVersion = "panelbridge 0.1.0";
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

struct PopTargets {
  double treated = kNan;  // population counterfactual mean for the treated
  double all = kNan;      // population counterfactual mean for everyone
};

// Closed-form whole-population counterfactual mean (V_0; b_0)' E[(U; X)].
double population_gamma_all(const dgp::FactorDgpConfig& c) {
  double g = c.loading_at(0).dot(c.confounder_mean);
  if (c.n_cov > 0) {
    Eigen::VectorXd mx(c.n_cov);
    int off = 0;
    if (c.covariate_spec.first_constant) mx(off++) = 1.0;
    mx.tail(c.n_cov - off) = c.covariate_spec.mean;
    g += c.cov_coef_at(0).dot(mx);
  }
  return g;
}

double population_gamma_all(const dgp::ArDgpConfig& c) {
  Eigen::VectorXd mu = c.init_mean;
  for (int t = -c.n_pre; t < 0; ++t) mu = c.transitions[static_cast<size_t>(t + c.n_pre)] * mu;
  double g = c.loading_at(0).dot(mu);
  if (c.n_cov > 0) {
    Eigen::VectorXd mx(c.n_cov);
    int off = 0;
    if (c.covariate_spec.first_constant) mx(off++) = 1.0;
    mx.tail(c.n_cov - off) = c.covariate_spec.mean;
    g += c.cov_coef_at(0).dot(mx);
  }
  return g;
}

PopTargets population_targets(const DgpSpec& spec) {
  PopTargets t;
  if (spec.kind == DgpSpec::Kind::Ar) {
    auto base = spec.ar;
    base.n_units = 1;  // plug-in moments do not depend on N; keep the cache warm
    const auto& am = oracle::ar_selection_moments(base);
    Eigen::VectorXd vb(base.n_factors + base.n_cov);
    vb.head(base.n_factors) = base.loading_at(0);
    if (base.n_cov > 0) vb.tail(base.n_cov) = base.cov_coef_at(0);
    t.treated = vb.dot(am.mean_u0x_treated);
    t.all = population_gamma_all(base);
  } else {
    auto base = spec.factor;
    base.n_units = 1;
    t.treated = oracle::population_gamma(base);
    t.all = population_gamma_all(base);
  }
  return t;
}

struct RunOutcome {
  double estimate = 0.0;
  bool has_ci = false;
  double ci_lo = 0.0, ci_hi = 0.0;
  double lambda = 0.0;
};

RunOutcome run_estimator(EstimatorKind kind, const PanelDataset& data,
                         const ScenarioConfig& cfg, int dgp_rank) {
  RunOutcome out;
  const double lambda = bridge::default_lambda(data.n_units, cfg.lambda.c, cfg.lambda.beta);
  switch (kind) {
    case EstimatorKind::Did:
      out.estimate = baselines::estimate_did(data).gamma_hat;
      return out;
    case EstimatorKind::Horizontal:
      out.estimate = baselines::estimate_horizontal(data).gamma_hat;
      return out;
    case EstimatorKind::Vertical:
      out.estimate = baselines::estimate_vertical(data).gamma_hat;
      return out;
    case EstimatorKind::Factor4Step: {
      const int r = cfg.factor_rank > 0 ? cfg.factor_rank : dgp_rank;
      out.estimate = baselines::estimate_factor4step(data, r).gamma_hat;
      return out;
    }
    case EstimatorKind::BridgeIdentity:
    case EstimatorKind::BridgeTwoStage:
    case EstimatorKind::BridgePopulation:
    case EstimatorKind::BridgeDropPre:
    case EstimatorKind::BridgePreSubstitute: {
      bridge::EstimateResult res;
      if (kind == EstimatorKind::BridgeIdentity) {
        res = bridge::estimate_bridge(data, bridge::WeightSpec::identity(), lambda, cfg.rho);
      } else if (kind == EstimatorKind::BridgeTwoStage) {
        res = bridge::fit_two_stage(data, lambda, -1.0, cfg.rho);
      } else if (kind == EstimatorKind::BridgePopulation) {
        res = bridge::estimate_population_mean(data, lambda,
                                               bridge::JointWeightSpec::optimal(), cfg.rho);
      } else if (kind == EstimatorKind::BridgeDropPre) {
        res = bridge::estimate_bridge(drop_oldest_pre(data, cfg.pre_substitute),
                                      bridge::WeightSpec::identity(), lambda, cfg.rho);
      } else {
        res = bridge::estimate_bridge(use_pre_as_post(data, cfg.pre_substitute),
                                      bridge::WeightSpec::identity(), lambda, cfg.rho);
      }
      out.estimate = res.gamma_hat;
      out.has_ci = true;
      out.ci_lo = res.ci_lo;
      out.ci_hi = res.ci_hi;
      out.lambda = lambda;
      return out;
    }
  }
  throw Error(ErrorCode::ConfigInvalid, "unknown estimator");
}

}  // namespace

const char* estimator_name(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::Did: return "did";
    case EstimatorKind::Horizontal: return "horizontal";
    case EstimatorKind::Vertical: return "vertical";
    case EstimatorKind::Factor4Step: return "factor4step";
    case EstimatorKind::BridgeIdentity: return "bridge_identity";
    case EstimatorKind::BridgeTwoStage: return "bridge_two_stage";
    case EstimatorKind::BridgePopulation: return "bridge_population";
    case EstimatorKind::BridgeDropPre: return "bridge_drop_pre";
    case EstimatorKind::BridgePreSubstitute: return "bridge_pre_substitute";
  }
  return "unknown";
}

std::optional<EstimatorKind> estimator_from_name(const std::string& name) {
  static const EstimatorKind all[] = {
      EstimatorKind::Did,          EstimatorKind::Horizontal,
      EstimatorKind::Vertical,     EstimatorKind::Factor4Step,
      EstimatorKind::BridgeIdentity, EstimatorKind::BridgeTwoStage,
      EstimatorKind::BridgePopulation, EstimatorKind::BridgeDropPre,
      EstimatorKind::BridgePreSubstitute};
  for (EstimatorKind k : all) {
    if (name == estimator_name(k)) return k;
  }
  return std::nullopt;
}

std::uint64_t DgpSpec::fingerprint() const {
  std::uint64_t h = kind == Kind::Ar ? dgp::fingerprint(ar) : dgp::fingerprint(factor);
  return rng::mix64(h ^ static_cast<std::uint64_t>(kind));
}

void ScenarioConfig::check() const {
  if (replications < 1) throw Error(ErrorCode::ConfigInvalid, "replications must be >= 1");
  if (estimators.empty()) throw Error(ErrorCode::ConfigInvalid, "no estimators configured");
  if (rep_offset < 0) throw Error(ErrorCode::ConfigInvalid, "rep_offset must be >= 0");
  if (!(rho > 0.0 && rho < 1.0)) throw Error(ErrorCode::ConfigInvalid, "rho outside (0,1)");
  for (int n : n_sweep) {
    if (n < 2) throw Error(ErrorCode::ConfigInvalid, "sweep sizes must be >= 2");
  }
  if (dgp.kind == DgpSpec::Kind::Ar) dgp.ar.check(); else dgp.factor.check();
  const bool uses_sub =
      std::any_of(estimators.begin(), estimators.end(), [](EstimatorKind k) {
        return k == EstimatorKind::BridgeDropPre || k == EstimatorKind::BridgePreSubstitute;
      });
  if (uses_sub && pre_substitute <= 0) {
    throw Error(ErrorCode::ConfigInvalid, "pre_substitute must be set for the window estimators");
  }
}

const CellStats& McReport::cell(int n, EstimatorKind kind) const {
  for (const auto& c : cells) {
    if (c.n == n && c.estimator == kind) return c;
  }
  throw Error(ErrorCode::DomainError, "no such report cell");
}

McReport run_scenario(const ScenarioConfig& cfg) {
  cfg.check();
  std::vector<int> sweep = cfg.n_sweep;
  if (sweep.empty()) {
    sweep.push_back(cfg.dgp.kind == DgpSpec::Kind::Ar ? cfg.dgp.ar.n_units
                                                      : cfg.dgp.factor.n_units);
  }
  const int n_est = static_cast<int>(cfg.estimators.size());
  const int reps = cfg.replications;
  const int dgp_rank =
      cfg.dgp.kind == DgpSpec::Kind::Ar ? cfg.dgp.ar.n_factors : cfg.dgp.factor.n_factors;
  const PopTargets pop = population_targets(cfg.dgp);

  McReport report;
  report.master_seed = cfg.master_seed;
  report.code_version = kCodeVersion;
  std::uint64_t h = cfg.dgp.fingerprint();
  h = rng::mix64(h ^ static_cast<std::uint64_t>(cfg.replications));
  h = rng::mix64(h ^ cfg.master_seed);
  report.config_hash = h;

  report.records.resize(static_cast<size_t>(sweep.size()) * reps * n_est);
  auto slot = [&](int s, int rep, int e) -> RepRecord& {
    return report.records[(static_cast<size_t>(s) * reps + rep) * n_est + e];
  };

  // One task per (sweep point, replication): simulate once, run all estimators.
  const size_t n_tasks = sweep.size() * static_cast<size_t>(reps);
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const size_t task = next.fetch_add(1);
      if (task >= n_tasks) return;
      const int s = static_cast<int>(task / reps);
      const int rep = static_cast<int>(task % reps);
      const int rep_index = cfg.rep_offset + rep;
      const std::uint64_t sub_seed =
          rng::derive_key(cfg.master_seed, static_cast<std::uint64_t>(rep_index));

      PanelDataset data;
      dgp::GroundTruth truth;
      if (cfg.dgp.kind == DgpSpec::Kind::Ar) {
        auto c = cfg.dgp.ar;
        c.n_units = sweep[s];
        std::tie(data, truth) = dgp::simulate_ar(c, sub_seed);
      } else if (cfg.dgp.kind == DgpSpec::Kind::Twfe) {
        auto c = cfg.dgp.factor;
        c.n_units = sweep[s];
        std::tie(data, truth) = dgp::simulate_twfe(c, sub_seed);
      } else {
        auto c = cfg.dgp.factor;
        c.n_units = sweep[s];
        std::tie(data, truth) = dgp::simulate_factor(c, sub_seed);
      }

      for (int e = 0; e < n_est; ++e) {
        RepRecord& rec = slot(s, rep, e);
        rec.n = sweep[s];
        rec.rep_index = rep_index;
        rec.estimator = cfg.estimators[e];
        const bool whole_population = cfg.estimators[e] == EstimatorKind::BridgePopulation;
        if (cfg.reference_population) {
          rec.gamma_ref = whole_population ? pop.all : pop.treated;
        } else {
          rec.gamma_ref = whole_population ? truth.gamma_sample_all : truth.gamma_true_sample;
        }
        try {
          RunOutcome out = run_estimator(cfg.estimators[e], data, cfg, dgp_rank);
          rec.ok = true;
          rec.estimate = out.estimate;
          rec.has_ci = out.has_ci;
          rec.ci_lo = out.ci_lo;
          rec.ci_hi = out.ci_hi;
          rec.lambda = out.lambda;
        } catch (const Error& err) {
          rec.ok = false;
          rec.error = err.what();
        }
      }
    }
  };

  int threads = cfg.threads > 0 ? cfg.threads
                                : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min<int>(threads, static_cast<int>(n_tasks)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  // Deterministic fold over replication order.
  for (size_t s = 0; s < sweep.size(); ++s) {
    for (int e = 0; e < n_est; ++e) {
      CellStats cell;
      cell.n = sweep[s];
      cell.estimator = cfg.estimators[e];
      cell.replications = reps;
      const bool whole_population = cfg.estimators[e] == EstimatorKind::BridgePopulation;
      const double pop_target = whole_population ? pop.all : pop.treated;

      double sum = 0.0, sum2 = 0.0, width = 0.0, lambda = 0.0;
      int ok = 0, with_ci = 0, cover_sample = 0, cover_pop = 0;
      for (int rep = 0; rep < reps; ++rep) {
        const RepRecord& rec = slot(static_cast<int>(s), rep, e);
        if (!rec.ok) {
          ++cell.failures;
          continue;
        }
        ++ok;
        const double diff = rec.estimate - rec.gamma_ref;
        sum += diff;
        sum2 += diff * diff;
        if (rec.has_ci) {
          ++with_ci;
          width += rec.ci_hi - rec.ci_lo;
          lambda += rec.lambda;
          if (rec.ci_lo <= rec.gamma_ref && rec.gamma_ref <= rec.ci_hi) ++cover_sample;
          if (std::isfinite(pop_target) && rec.ci_lo <= pop_target && pop_target <= rec.ci_hi) {
            ++cover_pop;
          }
        }
      }
      if (ok > 0) {
        cell.mean_bias = sum / ok;
        cell.rmse = std::sqrt(sum2 / ok);
        const double var = ok > 1 ? (sum2 - sum * sum / ok) / (ok - 1) : 0.0;
        cell.mc_se = std::sqrt(std::max(var, 0.0) / ok);
      } else {
        cell.mean_bias = cell.rmse = cell.mc_se = kNan;
      }
      cell.coverage_sample = with_ci > 0 ? static_cast<double>(cover_sample) / with_ci : kNan;
      cell.coverage_pop = (with_ci > 0 && std::isfinite(pop_target))
                              ? static_cast<double>(cover_pop) / with_ci
                              : kNan;
      cell.mean_ci_width = with_ci > 0 ? width / with_ci : kNan;
      cell.mean_lambda = with_ci > 0 ? lambda / with_ci : kNan;
      report.cells.push_back(cell);
    }
  }
  return report;
}

std::vector<CoverageRow> coverage_summary(const McReport& report, double rho) {
  if (!(rho > 0.0 && rho < 1.0)) throw Error(ErrorCode::DomainError, "rho outside (0,1)");
  std::vector<CoverageRow> rows;
  for (const auto& cell : report.cells) {
    const double cov =
        std::isfinite(cell.coverage_pop) ? cell.coverage_pop : cell.coverage_sample;
    if (!std::isfinite(cov)) continue;
    CoverageRow row;
    row.n = cell.n;
    row.estimator = estimator_name(cell.estimator);
    row.coverage = cov;
    row.target = 1.0 - rho;
    const int reps = cell.replications - cell.failures;
    row.band = reps > 0 ? 3.0 * std::sqrt(rho * (1.0 - rho) / reps) : 0.0;
    row.pass = std::abs(cov - row.target) <= row.band;
    rows.push_back(row);
  }
  return rows;
}

std::string coverage_table(const std::vector<CoverageRow>& rows) {
  std::string out = "n,estimator,coverage,target,band,status\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%s,%.4f,%.4f,%.4f,%s\n", r.n, r.estimator.c_str(),
                  r.coverage, r.target, r.band, r.pass ? "pass" : "fail");
    out += buf;
  }
  return out;
}

void write_report_csv(const McReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::ParseError, "cannot write " + path);
  char head[160];
  std::snprintf(head, sizeof(head), "# config_hash=%016llx master_seed=%llu version=%s",
                static_cast<unsigned long long>(report.config_hash),
                static_cast<unsigned long long>(report.master_seed),
                report.code_version.c_str());
  out << head << "\n";
  out << "n,estimator,replications,failures,mean_bias,mc_se,rmse,coverage_sample,"
         "coverage_pop,mean_ci_width,mean_lambda\n";
  char buf[320];
  for (const auto& c : report.cells) {
    std::snprintf(buf, sizeof(buf), "%d,%s,%d,%d,%.10g,%.10g,%.10g,%.6g,%.6g,%.10g,%.10g\n",
                  c.n, estimator_name(c.estimator), c.replications, c.failures, c.mean_bias,
                  c.mc_se, c.rmse, c.coverage_sample, c.coverage_pop, c.mean_ci_width,
                  c.mean_lambda);
    out << buf;
  }
}

}  // namespace panelbridge::harness
