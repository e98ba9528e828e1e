#include "panelbridge/config_json.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace panelbridge::config {

namespace {

using nlohmann::json;
using Eigen::MatrixXd;
using Eigen::VectorXd;

VectorXd parse_vector(const json& j) {
  if (!j.is_array()) throw Error(ErrorCode::ParseError, "expected an array");
  VectorXd v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

MatrixXd parse_matrix(const json& j) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) {
    throw Error(ErrorCode::ParseError, "expected a 2-d array");
  }
  const size_t rows = j.size(), cols = j[0].size();
  MatrixXd m(rows, cols);
  for (size_t i = 0; i < rows; ++i) {
    if (j[i].size() != cols) throw Error(ErrorCode::ParseError, "ragged matrix");
    for (size_t k = 0; k < cols; ++k) m(i, k) = j[i][k].get<double>();
  }
  return m;
}

VectorXd parse_effect(const json& j, int t1) {
  if (j.is_number()) return VectorXd::Constant(t1 + 1, j.get<double>());
  return parse_vector(j);
}

dgp::SelectionModel parse_selection(const json& j, int r, int d) {
  dgp::SelectionModel sel;
  const std::string kind = j.value("kind", "logistic");
  if (kind == "logistic") {
    sel.kind = dgp::SelectionModel::Kind::Logistic;
  } else if (kind == "randomized") {
    sel.kind = dgp::SelectionModel::Kind::Randomized;
  } else {
    throw Error(ErrorCode::ParseError, "selection kind must be logistic or randomized");
  }
  sel.intercept = j.value("intercept", 0.0);
  if (j.contains("coef_u")) {
    sel.coef_u = j["coef_u"].is_number() ? VectorXd::Constant(1, j["coef_u"].get<double>())
                                         : parse_vector(j["coef_u"]);
  } else {
    sel.coef_u = VectorXd::Zero(r);
  }
  sel.coef_x = j.contains("coef_x") ? parse_vector(j["coef_x"]) : VectorXd(VectorXd::Zero(d));
  return sel;
}

dgp::CovariateSpec parse_covariates(const json& j, int d) {
  dgp::CovariateSpec spec;
  spec.first_constant = j.value("first_constant", true);
  const int gauss = d - (spec.first_constant && d > 0 ? 1 : 0);
  spec.mean = j.contains("mean") ? parse_vector(j["mean"]) : VectorXd(VectorXd::Zero(gauss));
  spec.cov = j.contains("cov") ? parse_matrix(j["cov"])
                               : MatrixXd(MatrixXd::Identity(gauss, gauss));
  return spec;
}

dgp::FactorDgpConfig parse_factor(const json& j) {
  dgp::FactorDgpConfig c;
  c.n_units = j.at("n_units").get<int>();
  c.n_pre = j.at("n_pre").get<int>();
  c.n_post = j.at("n_post").get<int>();
  c.n_cov = j.value("n_cov", 0);
  c.n_factors = j.at("n_factors").get<int>();
  c.loadings = parse_matrix(j.at("loadings"));
  c.cov_coefs = c.n_cov > 0 ? parse_matrix(j.at("cov_coefs")) : MatrixXd(c.n_periods(), 0);
  c.confounder_mean = j.contains("confounder_mean") ? parse_vector(j["confounder_mean"])
                                                    : VectorXd(VectorXd::Zero(c.n_factors));
  c.confounder_cov = j.contains("confounder_cov")
                         ? parse_matrix(j["confounder_cov"])
                         : MatrixXd(MatrixXd::Identity(c.n_factors, c.n_factors));
  c.covariate_spec = parse_covariates(j.value("covariates", json::object()), c.n_cov);
  c.noise_sigma = j.value("noise_sigma", 1.0);
  c.noise_corr_pre0 = j.value("noise_corr_pre0", 0.0);
  c.noise_corr_post = j.value("noise_corr_post", 0.0);
  c.selection = parse_selection(j.value("selection", json::object()), c.n_factors, c.n_cov);
  c.effect_path = j.contains("effect") ? parse_effect(j["effect"], c.n_post)
                                       : VectorXd(VectorXd::Zero(c.n_post + 1));
  c.check();
  return c;
}

dgp::FactorDgpConfig parse_twfe(const json& j) {
  const int t1 = j.at("n_post").get<int>();
  dgp::SelectionModel sel = parse_selection(j.value("selection", json::object()), 1, 1);
  VectorXd effect = j.contains("effect") ? parse_effect(j["effect"], t1)
                                         : VectorXd(VectorXd::Zero(t1 + 1));
  auto cfg = dgp::make_twfe_config(
      j.at("n_units").get<int>(), j.at("n_pre").get<int>(), t1,
      parse_vector(j.at("time_effects")), j.value("u_mean", 0.0), j.value("u_var", 1.0), sel,
      j.value("noise_sigma", 1.0), effect);
  cfg.check();
  return cfg;
}

dgp::ArDgpConfig parse_ar(const json& j) {
  dgp::ArDgpConfig c;
  c.n_units = j.at("n_units").get<int>();
  c.n_pre = j.at("n_pre").get<int>();
  c.n_post = j.at("n_post").get<int>();
  c.n_cov = j.value("n_cov", 0);
  c.n_factors = j.at("n_factors").get<int>();
  c.loadings = parse_matrix(j.at("loadings"));
  c.cov_coefs = c.n_cov > 0 ? parse_matrix(j.at("cov_coefs")) : MatrixXd(c.n_periods(), 0);
  c.covariate_spec = parse_covariates(j.value("covariates", json::object()), c.n_cov);
  c.noise_sigma = j.value("noise_sigma", 1.0);
  c.selection = parse_selection(j.value("selection", json::object()), c.n_factors, c.n_cov);
  c.effect_path = j.contains("effect") ? parse_effect(j["effect"], c.n_post)
                                       : VectorXd(VectorXd::Zero(c.n_post + 1));

  const json& tr = j.at("transitions");
  const int steps = c.n_pre + c.n_post;
  if (tr.is_number()) {
    c.transitions.assign(steps, MatrixXd::Constant(1, 1, tr.get<double>()));
  } else if (tr.is_array() && !tr.empty() && tr[0].is_array() && !tr[0].empty() &&
             tr[0][0].is_array()) {
    for (const auto& g : tr) c.transitions.push_back(parse_matrix(g));
  } else {
    c.transitions.assign(steps, parse_matrix(tr));
  }
  const json& ic = j.at("innovation_cov");
  if (ic.is_number()) {
    c.innovation_cov.assign(1, MatrixXd::Constant(1, 1, ic.get<double>()));
  } else if (ic.is_array() && !ic.empty() && ic[0].is_array() && !ic[0].empty() &&
             ic[0][0].is_array()) {
    for (const auto& m : ic) c.innovation_cov.push_back(parse_matrix(m));
  } else {
    c.innovation_cov.assign(1, parse_matrix(ic));
  }
  c.init_mean = j.contains("init_mean") ? parse_vector(j["init_mean"])
                                        : VectorXd(VectorXd::Zero(c.n_factors));
  c.init_cov = j.contains("init_cov") ? parse_matrix(j["init_cov"])
                                      : MatrixXd(MatrixXd::Identity(c.n_factors, c.n_factors));
  c.joint_normal = j.value("joint_normal", true);
  c.check();
  return c;
}

harness::DgpSpec parse_dgp_spec(const json& j) {
  harness::DgpSpec spec;
  const std::string type = j.value("type", "factor");
  if (type == "factor") {
    spec.kind = harness::DgpSpec::Kind::Factor;
    spec.factor = parse_factor(j);
  } else if (type == "twfe") {
    spec.kind = harness::DgpSpec::Kind::Twfe;
    spec.factor = parse_twfe(j);
  } else if (type == "ar") {
    spec.kind = harness::DgpSpec::Kind::Ar;
    spec.ar = parse_ar(j);
  } else {
    throw Error(ErrorCode::ParseError, "dgp type must be factor, twfe, or ar");
  }
  return spec;
}

json parse_text(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::ParseError, "invalid JSON");
  return j;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

harness::DgpSpec dgp_spec_from_json_text(const std::string& text) {
  try {
    return parse_dgp_spec(parse_text(text));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

harness::DgpSpec load_dgp_spec(const std::string& path) {
  return dgp_spec_from_json_text(read_file(path));
}

harness::ScenarioConfig scenario_from_json_text(const std::string& text) {
  try {
    json j = parse_text(text);
    harness::ScenarioConfig cfg;
    cfg.dgp = parse_dgp_spec(j.at("dgp"));
    for (const auto& name : j.at("estimators")) {
      auto kind = harness::estimator_from_name(name.get<std::string>());
      if (!kind) {
        throw Error(ErrorCode::ParseError, "unknown estimator " + name.get<std::string>());
      }
      cfg.estimators.push_back(*kind);
    }
    cfg.replications = j.value("replications", 100);
    cfg.master_seed = j.value("master_seed", 0ull);
    cfg.rep_offset = j.value("rep_offset", 0);
    if (j.contains("lambda")) {
      cfg.lambda.c = j["lambda"].value("c", 1.0);
      cfg.lambda.beta = j["lambda"].value("beta", 0.75);
    }
    cfg.rho = j.value("ci_level", 0.05);
    if (j.contains("n_sweep")) {
      for (const auto& n : j["n_sweep"]) cfg.n_sweep.push_back(n.get<int>());
    }
    cfg.factor_rank = j.value("factor_rank", -1);
    cfg.pre_substitute = j.value("pre_substitute", 0);
    cfg.reference_population = j.value("reference_population", false);
    cfg.threads = j.value("threads", 0);
    cfg.check();
    return cfg;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

harness::ScenarioConfig load_scenario(const std::string& path) {
  return scenario_from_json_text(read_file(path));
}

}  // namespace panelbridge::config
