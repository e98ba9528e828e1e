#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "panelbridge/bridge.hpp"
#include "panelbridge/dgp.hpp"

namespace panelbridge::harness {

enum class EstimatorKind {
  Did,
  Horizontal,
  Vertical,
  Factor4Step,
  BridgeIdentity,
  BridgeTwoStage,
  BridgePopulation,
  BridgeDropPre,        // bridge on drop_oldest_pre(data, pre_substitute)
  BridgePreSubstitute,  // bridge with the oldest pre outcomes standing in for post
};

const char* estimator_name(EstimatorKind kind);
std::optional<EstimatorKind> estimator_from_name(const std::string& name);

struct LambdaSpec {
  double c = 1.0;
  double beta = 0.75;
};

struct DgpSpec {
  enum class Kind { Factor, Twfe, Ar };
  Kind kind = Kind::Factor;
  dgp::FactorDgpConfig factor;  // Factor and Twfe
  dgp::ArDgpConfig ar;

  std::uint64_t fingerprint() const;
};

struct ScenarioConfig {
  DgpSpec dgp;
  std::vector<EstimatorKind> estimators;
  int replications = 100;  // R
  std::uint64_t master_seed = 0;
  int rep_offset = 0;  // first replication index, for split runs
  LambdaSpec lambda;
  double rho = 0.05;
  std::vector<int> n_sweep;   // empty: single point at the configured N
  int factor_rank = -1;       // 4-step rank; -1 uses the DGP rank
  int pre_substitute = 0;     // columns for the DropPre / PreSubstitute pair
  bool reference_population = false;  // bias measured against population gamma
  int threads = 0;            // 0 = hardware concurrency

  void check() const;
};

// One replication of one estimator at one sweep point.
struct RepRecord {
  int n = 0;
  int rep_index = 0;
  EstimatorKind estimator = EstimatorKind::Did;
  bool ok = false;
  std::string error;
  double estimate = 0.0;
  double gamma_ref = 0.0;  // per-replication target (gamma^S by default)
  bool has_ci = false;
  double ci_lo = 0.0, ci_hi = 0.0;
  double lambda = 0.0;
};

struct CellStats {
  int n = 0;
  EstimatorKind estimator = EstimatorKind::Did;
  int replications = 0;
  int failures = 0;
  double mean_bias = 0.0;
  double mc_se = 0.0;  // standard error of mean_bias
  double rmse = 0.0;
  double coverage_sample = 0.0;  // CI covering the per-replication gamma ref
  double coverage_pop = 0.0;     // CI covering the population target (NaN if unknown)
  double mean_ci_width = 0.0;
  double mean_lambda = 0.0;
};

struct McReport {
  std::vector<CellStats> cells;
  std::vector<RepRecord> records;  // deterministic order: sweep, estimator, rep
  std::uint64_t config_hash = 0;
  std::uint64_t master_seed = 0;
  std::string code_version;

  const CellStats& cell(int n, EstimatorKind kind) const;
};

McReport run_scenario(const ScenarioConfig& cfg);

struct CoverageRow {
  int n = 0;
  std::string estimator;
  double coverage = 0.0;
  double target = 0.0;
  double band = 0.0;  // 3 binomial SEs
  bool pass = false;
};

// Empirical coverage against 1 - rho with +-3 binomial-SE bands.
std::vector<CoverageRow> coverage_summary(const McReport& report, double rho);

std::string coverage_table(const std::vector<CoverageRow>& rows);

void write_report_csv(const McReport& report, const std::string& path);

}  // namespace panelbridge::harness
