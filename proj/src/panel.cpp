#include "panelbridge/panel.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

namespace panelbridge {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& tok, int lineno) {
  const char* begin = tok.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0') {
    throw Error(ErrorCode::ParseError,
                "bad numeric value '" + tok + "' on line " + std::to_string(lineno));
  }
  return v;
}

long parse_long(const std::string& tok, int lineno) {
  const char* begin = tok.c_str();
  char* end = nullptr;
  long v = std::strtol(begin, &end, 10);
  if (end == begin || *end != '\0') {
    throw Error(ErrorCode::ParseError,
                "bad integer value '" + tok + "' on line " + std::to_string(lineno));
  }
  return v;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void PanelDataset::check() const {
  if (n_units < 1 || n_pre < 1 || n_post < 0 || n_cov < 0) {
    throw Error(ErrorCode::ConfigInvalid, "panel dimensions");
  }
  if (treatment.size() != n_units || y_target.size() != n_units ||
      y_pre.rows() != n_units || y_pre.cols() != n_pre ||
      y_post.rows() != n_units || y_post.cols() != n_post ||
      covariates.rows() != n_units || covariates.cols() != n_cov) {
    throw Error(ErrorCode::DimensionMismatch, "panel matrices inconsistent with (N,T0,T1,d)");
  }
  for (int i = 0; i < n_units; ++i) {
    if (treatment(i) != 0 && treatment(i) != 1) {
      throw Error(ErrorCode::ConfigInvalid, "treatment must be 0 or 1");
    }
  }
  if (!y_pre.allFinite() || !y_target.allFinite() || !y_post.allFinite() ||
      !covariates.allFinite()) {
    throw Error(ErrorCode::ConfigInvalid, "panel has missing or non-finite cells");
  }
}

PanelDataset load_panel_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open " + path);

  std::string line;
  int lineno = 0;
  // Header (skipping comments).
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    header = split_csv_line(line);
    break;
  }
  if (header.empty()) throw Error(ErrorCode::ParseError, "empty CSV " + path);

  int col_unit = -1, col_time = -1, col_y = -1, col_a = -1;
  std::vector<int> col_x;  // index -> column
  for (int c = 0; c < static_cast<int>(header.size()); ++c) {
    const std::string& name = header[c];
    if (name == schema.unit) col_unit = c;
    else if (name == schema.time) col_time = c;
    else if (name == schema.y) col_y = c;
    else if (name == schema.a) col_a = c;
    else if (name.rfind(schema.x_prefix, 0) == 0) {
      const std::string idx = name.substr(schema.x_prefix.size());
      if (!idx.empty() && std::all_of(idx.begin(), idx.end(), ::isdigit)) {
        int j = std::stoi(idx);
        if (j >= 1) {
          if (static_cast<int>(col_x.size()) < j) col_x.resize(j, -1);
          col_x[j - 1] = c;
        }
      }
    }
  }
  if (col_unit < 0 || col_time < 0 || col_y < 0 || col_a < 0) {
    throw Error(ErrorCode::ParseError, "missing required columns in " + path);
  }
  for (size_t j = 0; j < col_x.size(); ++j) {
    if (col_x[j] < 0) {
      throw Error(ErrorCode::ParseError,
                  "covariate columns must be contiguous " + schema.x_prefix + "1..d");
    }
  }
  const int d = static_cast<int>(col_x.size());

  struct Row {
    long time;
    double y;
    int a;
    std::vector<double> x;
  };
  std::vector<std::string> unit_order;
  std::unordered_map<std::string, int> unit_index;
  std::vector<std::map<long, Row>> rows;  // per unit, keyed by time
  long tmin = 0, tmax = 0;
  bool any = false;

  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f = split_csv_line(line);
    if (f.size() != header.size()) {
      throw Error(ErrorCode::ParseError, "wrong field count on line " + std::to_string(lineno));
    }
    const std::string& uid = f[col_unit];
    auto it = unit_index.find(uid);
    int ui;
    if (it == unit_index.end()) {
      ui = static_cast<int>(unit_order.size());
      unit_index.emplace(uid, ui);
      unit_order.push_back(uid);
      rows.emplace_back();
    } else {
      ui = it->second;
    }
    Row r;
    r.time = parse_long(f[col_time], lineno);
    r.y = parse_double(f[col_y], lineno);
    double av = parse_double(f[col_a], lineno);
    if (av != 0.0 && av != 1.0) {
      throw Error(ErrorCode::ParseError, "a must be 0 or 1 on line " + std::to_string(lineno));
    }
    r.a = static_cast<int>(av);
    r.x.resize(d);
    for (int j = 0; j < d; ++j) r.x[j] = parse_double(f[col_x[j]], lineno);
    if (!rows[ui].emplace(r.time, std::move(r)).second) {
      throw Error(ErrorCode::ParseError, "duplicate (unit,time) on line " + std::to_string(lineno));
    }
    if (!any) {
      tmin = tmax = rows[ui].begin()->first;
      any = true;
    }
    tmin = std::min(tmin, rows[ui].rbegin()->first);
    tmin = std::min(tmin, rows[ui].begin()->first);
    tmax = std::max(tmax, rows[ui].rbegin()->first);
  }
  if (!any) throw Error(ErrorCode::ParseError, "no data rows in " + path);
  if (tmin > -1 || tmax < 0) {
    throw Error(ErrorCode::ParseError, "panel must cover at least one pre period and t=0");
  }

  const int n = static_cast<int>(unit_order.size());
  const int t0 = static_cast<int>(-tmin);
  const int t1 = static_cast<int>(tmax);

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

  for (int i = 0; i < n; ++i) {
    const auto& per_unit = rows[i];
    int a_seen = -1;
    for (long t = tmin; t <= tmax; ++t) {
      auto it = per_unit.find(t);
      if (it == per_unit.end()) {
        throw Error(ErrorCode::MissingCell,
                    "unit " + unit_order[i] + " missing time " + std::to_string(t));
      }
      const Row& r = it->second;
      if (a_seen < 0) {
        a_seen = r.a;
        data.treatment(i) = r.a;
        for (int j = 0; j < d; ++j) data.covariates(i, j) = r.x[j];
      } else if (r.a != a_seen) {
        throw Error(ErrorCode::TreatmentNotConstantWithinUnit, "unit " + unit_order[i]);
      } else {
        for (int j = 0; j < d; ++j) {
          if (r.x[j] != data.covariates(i, j)) {
            throw Error(ErrorCode::ParseError,
                        "covariate varies within unit " + unit_order[i] +
                            " (pack time-varying covariates explicitly)");
          }
        }
      }
      if (t < 0) data.y_pre(i, static_cast<int>(t + t0)) = r.y;
      else if (t == 0) data.y_target(i) = r.y;
      else data.y_post(i, static_cast<int>(t - 1)) = r.y;
    }
  }
  data.check();
  return data;
}

void write_panel_csv(const PanelDataset& data, const std::string& path,
                     const std::vector<std::string>& comments) {
  data.check();
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::ParseError, "cannot write " + path);
  for (const auto& c : comments) out << "# " << c << "\n";
  out << "unit,time,y,a";
  for (int j = 1; j <= data.n_cov; ++j) out << ",x" << j;
  out << "\n";
  for (int i = 0; i < data.n_units; ++i) {
    for (int t = -data.n_pre; t <= data.n_post; ++t) {
      double y;
      if (t < 0) y = data.y_pre(i, t + data.n_pre);
      else if (t == 0) y = data.y_target(i);
      else y = data.y_post(i, t - 1);
      out << i << ',' << t << ',' << format_double(y) << ',' << data.treatment(i);
      for (int j = 0; j < data.n_cov; ++j) out << ',' << format_double(data.covariates(i, j));
      out << "\n";
    }
  }
}

ValidationReport validate_panel(const PanelDataset& data) {
  ValidationReport rep;
  rep.n_treated = data.n_treated();
  rep.n_control = data.n_control();

  auto dims_ok = [&]() {
    return data.treatment.size() == data.n_units && data.y_target.size() == data.n_units &&
           data.y_pre.rows() == data.n_units && data.y_pre.cols() == data.n_pre &&
           data.y_post.rows() == data.n_units && data.y_post.cols() == data.n_post &&
           data.covariates.rows() == data.n_units && data.covariates.cols() == data.n_cov;
  };
  if (!dims_ok()) {
    rep.issues.push_back({"dimension-mismatch", "matrices inconsistent with (N,T0,T1,d)"});
    return rep;
  }
  if (rep.n_treated == 0) rep.issues.push_back({"degenerate-group", "N1=0"});
  if (rep.n_control == 0) rep.issues.push_back({"degenerate-group", "N0=0"});
  // Constant covariate columns are flagged except a leading intercept column.
  for (int j = 0; j < data.n_cov; ++j) {
    if (data.n_units < 2) break;
    bool constant = true;
    for (int i = 1; i < data.n_units && constant; ++i) {
      constant = data.covariates(i, j) == data.covariates(0, j);
    }
    if (constant && !(j == 0 && data.covariates(0, 0) == 1.0)) {
      rep.issues.push_back({"no-variation-column", "x" + std::to_string(j + 1)});
    }
  }
  return rep;
}

PanelDataset aggregate_target(const PanelDataset& data, int horizon) {
  data.check();
  if (horizon >= data.n_post) {
    throw Error(ErrorCode::HorizonTooLarge,
                "L=" + std::to_string(horizon) + " with T1=" + std::to_string(data.n_post));
  }
  if (horizon <= 0) throw Error(ErrorCode::DomainError, "horizon must be positive");

  PanelDataset out = data;
  const int keep = data.n_post - horizon;
  Eigen::VectorXd target(data.n_units);
  for (int i = 0; i < data.n_units; ++i) {
    double s = data.y_target(i);
    for (int l = 0; l < horizon; ++l) s += data.y_post(i, l);
    target(i) = s / static_cast<double>(horizon + 1);
  }
  out.y_target = target;
  out.y_post = data.y_post.rightCols(keep).eval();
  out.n_post = keep;
  out.check();
  return out;
}

PanelDataset use_pre_as_post(const PanelDataset& data, int n_sub) {
  data.check();
  if (n_sub <= 0 || n_sub >= data.n_pre) {
    throw Error(ErrorCode::DomainError, "n_sub must lie in (0, T0)");
  }
  PanelDataset out = data;
  out.y_post = data.y_pre.leftCols(n_sub).eval();
  out.n_post = n_sub;
  out.y_pre = data.y_pre.rightCols(data.n_pre - n_sub).eval();
  out.n_pre = data.n_pre - n_sub;
  out.check();
  return out;
}

PanelDataset drop_oldest_pre(const PanelDataset& data, int n_drop) {
  data.check();
  if (n_drop < 0 || n_drop >= data.n_pre) {
    throw Error(ErrorCode::DomainError, "n_drop must lie in [0, T0)");
  }
  PanelDataset out = data;
  out.y_pre = data.y_pre.rightCols(data.n_pre - n_drop).eval();
  out.n_pre = data.n_pre - n_drop;
  out.check();
  return out;
}

}  // namespace panelbridge
