#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "panelbridge/errors.hpp"

namespace panelbridge {

// Observed rectangular panel. Time is laid out oldest to newest: y_pre
// columns cover t = -T0..-1, y_target is t = 0, y_post columns cover
// t = 1..T1. Treated units carry treated outcomes at t >= 0.
// Immutable by convention after construction.
struct PanelDataset {
  int n_units = 0;  // N
  int n_pre = 0;    // T0
  int n_post = 0;   // T1
  int n_cov = 0;    // d

  Eigen::VectorXi treatment;   // N, each 0 or 1
  Eigen::MatrixXd covariates;  // N x d
  Eigen::MatrixXd y_pre;       // N x T0
  Eigen::VectorXd y_target;    // N
  Eigen::MatrixXd y_post;      // N x T1

  int n_treated() const { return treatment.size() > 0 ? treatment.sum() : 0; }
  int n_control() const { return n_units - n_treated(); }

  // Throws ConfigInvalid / DimensionMismatch on inconsistent shapes or
  // non-finite / non-binary content.
  void check() const;
};

struct ValidationFinding {
  std::string code;    // "degenerate-group", "no-variation-column", "dimension-mismatch"
  std::string detail;
};

struct ValidationReport {
  int n_treated = 0;
  int n_control = 0;
  std::vector<ValidationFinding> issues;
  bool ok() const { return issues.empty(); }
};

// Column-name mapping for long-format CSV ingestion.
struct CsvSchema {
  std::string unit = "unit";
  std::string time = "time";
  std::string y = "y";
  std::string a = "a";
  std::string x_prefix = "x";  // covariate columns x1..xd
};

// Long format, one row per (unit, time); every pair must appear exactly once.
// Lines starting with '#' are ignored.
PanelDataset load_panel_csv(const std::string& path, const CsvSchema& schema = {});

// Inverse of load_panel_csv; numeric content round-trips bit-exactly for
// finite doubles. `comment` lines, if any, are written as leading '#' lines.
void write_panel_csv(const PanelDataset& data, const std::string& path,
                     const std::vector<std::string>& comments = {});

ValidationReport validate_panel(const PanelDataset& data);

// Replaces y_target by the row mean of (Y_0, ..., Y_L) and keeps only
// periods L+1..T1 as y_post. Pure transform; y_pre is unchanged.
PanelDataset aggregate_target(const PanelDataset& data, int horizon);

// Moves the oldest n_sub pre-treatment columns into the y_post slot (the
// invalid instrument substitution analyzed for time-varying confounders);
// the remaining columns stay as y_pre.
PanelDataset use_pre_as_post(const PanelDataset& data, int n_sub);

// Drops the oldest n_drop pre-treatment columns.
PanelDataset drop_oldest_pre(const PanelDataset& data, int n_drop);

}  // namespace panelbridge
