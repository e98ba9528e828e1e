#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <fstream>

#include "panelbridge/panel.hpp"
#include "panelbridge/rng.hpp"

using namespace panelbridge;

namespace {

std::string temp_path(const char* tag) {
  return std::string("pbtest_") + tag + ".csv";
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  f << text;
}

PanelDataset small_panel(int n_treated, int n_control, int t0 = 2, int t1 = 1, int d = 0) {
  PanelDataset p;
  p.n_units = n_treated + n_control;
  p.n_pre = t0;
  p.n_post = t1;
  p.n_cov = d;
  p.treatment.resize(p.n_units);
  rng::Stream s(rng::derive_key(11, 0));
  p.y_pre.resize(p.n_units, t0);
  p.y_target.resize(p.n_units);
  p.y_post.resize(p.n_units, t1);
  p.covariates.resize(p.n_units, d);
  for (int i = 0; i < p.n_units; ++i) {
    p.treatment(i) = i < n_treated ? 1 : 0;
    for (int t = 0; t < t0; ++t) p.y_pre(i, t) = s.next_normal();
    p.y_target(i) = s.next_normal();
    for (int t = 0; t < t1; ++t) p.y_post(i, t) = s.next_normal();
    for (int j = 0; j < d; ++j) p.covariates(i, j) = s.next_normal();
  }
  return p;
}

}  // namespace

TEST_CASE("load minimal balanced panel") {
  const std::string path = temp_path("minimal");
  write_file(path,
             "unit,time,y,a\n"
             "u1,-1,1.5,0\nu1,0,2.5,0\nu1,1,3.5,0\n"
             "u2,-1,4.5,1\nu2,0,5.5,1\nu2,1,6.5,1\n");
  PanelDataset p = load_panel_csv(path);
  CHECK(p.n_units == 2);
  CHECK(p.n_pre == 1);
  CHECK(p.n_post == 1);
  CHECK(p.n_cov == 0);
  CHECK(p.y_pre(0, 0) == 1.5);
  CHECK(p.y_target(1) == 5.5);
  CHECK(p.treatment(1) == 1);
  std::remove(path.c_str());
}

TEST_CASE("missing cell is detected") {
  const std::string path = temp_path("missing");
  write_file(path,
             "unit,time,y,a\n"
             "u1,-1,1,0\nu1,0,2,0\nu1,1,3,0\n"
             "u2,-1,4,1\nu2,1,6,1\n");  // (u2, 0) absent
  try {
    (void)load_panel_csv(path);
    FAIL("expected MissingCell");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingCell);
  }
  std::remove(path.c_str());
}

TEST_CASE("treatment must be constant within a unit") {
  const std::string path = temp_path("flip");
  write_file(path,
             "unit,time,y,a\n"
             "u1,-1,1,0\nu1,0,2,0\nu1,1,3,1\n"
             "u2,-1,4,1\nu2,0,5,1\nu2,1,6,1\n");
  try {
    (void)load_panel_csv(path);
    FAIL("expected TreatmentNotConstantWithinUnit");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TreatmentNotConstantWithinUnit);
  }
  std::remove(path.c_str());
}

TEST_CASE("duplicate rows and bad numbers are parse errors") {
  const std::string path = temp_path("dup");
  write_file(path,
             "unit,time,y,a\n"
             "u1,-1,1,0\nu1,-1,1,0\nu1,0,2,0\nu1,1,3,0\n");
  CHECK_THROWS_AS((void)load_panel_csv(path), Error);
  write_file(path, "unit,time,y,a\nu1,-1,oops,0\nu1,0,2,0\n");
  CHECK_THROWS_AS((void)load_panel_csv(path), Error);
  std::remove(path.c_str());
}

TEST_CASE("schema mapping renames columns") {
  const std::string path = temp_path("schema");
  write_file(path,
             "id,period,outcome,treated,x1\n"
             "a,-1,1,0,0.5\na,0,2,0,0.5\n"
             "b,-1,3,1,1.5\nb,0,4,1,1.5\n");
  CsvSchema schema;
  schema.unit = "id";
  schema.time = "period";
  schema.y = "outcome";
  schema.a = "treated";
  PanelDataset p = load_panel_csv(path, schema);
  CHECK(p.n_cov == 1);
  CHECK(p.covariates(1, 0) == 1.5);
  CHECK(p.n_post == 0);
  std::remove(path.c_str());
}

TEST_CASE("round trip is bit-exact for finite doubles") {
  PanelDataset p = small_panel(2, 3, 3, 2, 2);
  // Exercise awkward values.
  p.y_pre(0, 0) = 0.0;
  p.y_pre(0, 1) = -0.0;
  p.y_pre(0, 2) = 5e-324;          // smallest subnormal
  p.y_target(0) = 1.7976931348623157e308;
  p.y_post(0, 0) = -1e-300;
  p.covariates(0, 0) = 3.141592653589793;
  p.covariates(0, 1) = -2.2250738585072014e-308;

  const std::string path = temp_path("roundtrip");
  write_panel_csv(p, path, {"config=deadbeef seed=42"});
  PanelDataset q = load_panel_csv(path);
  REQUIRE(q.n_units == p.n_units);
  REQUIRE(q.n_pre == p.n_pre);
  REQUIRE(q.n_post == p.n_post);
  REQUIRE(q.n_cov == p.n_cov);
  CHECK(std::memcmp(p.y_pre.data(), q.y_pre.data(), sizeof(double) * p.y_pre.size()) == 0);
  CHECK(std::memcmp(p.y_target.data(), q.y_target.data(), sizeof(double) * p.y_target.size()) ==
        0);
  CHECK(std::memcmp(p.y_post.data(), q.y_post.data(), sizeof(double) * p.y_post.size()) == 0);
  CHECK(std::memcmp(p.covariates.data(), q.covariates.data(),
                    sizeof(double) * p.covariates.size()) == 0);
  std::remove(path.c_str());
}

TEST_CASE("validate_panel reports groups and flags") {
  PanelDataset all_treated = small_panel(4, 0);
  ValidationReport rep = validate_panel(all_treated);
  CHECK(rep.n_treated == 4);
  CHECK(rep.n_control == 0);
  REQUIRE(rep.issues.size() == 1);
  CHECK(rep.issues[0].code == "degenerate-group");
  CHECK(rep.issues[0].detail == "N0=0");

  PanelDataset balanced = small_panel(3, 5);
  rep = validate_panel(balanced);
  CHECK(rep.n_treated == 3);
  CHECK(rep.n_control == 5);
  CHECK(rep.ok());

  PanelDataset with_cov = small_panel(2, 2, 2, 1, 2);
  with_cov.covariates.col(1).setConstant(7.0);  // constant, not an intercept
  rep = validate_panel(with_cov);
  REQUIRE(rep.issues.size() == 1);
  CHECK(rep.issues[0].code == "no-variation-column");
  CHECK(rep.issues[0].detail == "x2");

  // Leading intercept column of ones is not flagged.
  with_cov.covariates.col(0).setConstant(1.0);
  with_cov.covariates.col(1) = Eigen::VectorXd::LinSpaced(4, 0.0, 3.0);
  rep = validate_panel(with_cov);
  CHECK(rep.ok());
}

TEST_CASE("aggregate_target averages the leading post periods") {
  PanelDataset p = small_panel(1, 1, 1, 2, 0);
  p.y_target(0) = 2.0;
  p.y_post(0, 0) = 4.0;
  p.y_post(0, 1) = 6.0;
  PanelDataset q = aggregate_target(p, 1);
  CHECK(q.y_target(0) == doctest::Approx(3.0));
  CHECK(q.n_post == 1);
  CHECK(q.y_post(0, 0) == 6.0);
  CHECK(q.y_pre == p.y_pre);

  try {
    (void)aggregate_target(p, 2);  // L = T1
    FAIL("expected HorizonTooLarge");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::HorizonTooLarge);
  }

  PanelDataset w = small_panel(1, 1, 1, 4, 0);
  CHECK(aggregate_target(w, 2).n_post == 2);
}

TEST_CASE("pre-for-post substitution reshapes the panel") {
  PanelDataset p = small_panel(1, 2, 4, 2, 1);
  PanelDataset sub = use_pre_as_post(p, 2);
  CHECK(sub.n_pre == 2);
  CHECK(sub.n_post == 2);
  CHECK(sub.y_post == p.y_pre.leftCols(2));
  CHECK(sub.y_pre == p.y_pre.rightCols(2));

  PanelDataset dropped = drop_oldest_pre(p, 2);
  CHECK(dropped.n_pre == 2);
  CHECK(dropped.y_post == p.y_post);
  CHECK(dropped.y_pre == p.y_pre.rightCols(2));
}
