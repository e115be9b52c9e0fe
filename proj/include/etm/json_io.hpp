#pragma once

#include "etm/avar.hpp"

#include <json.hpp>

namespace etm {

using Json = nlohmann::ordered_json;

inline Json to_json(const Eigen::VectorXd& v) {
  Json j = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

inline Json to_json(const Eigen::MatrixXd& m) {
  Json j = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) j.push_back(to_json(Eigen::VectorXd(m.row(r).transpose())));
  return j;
}

inline Eigen::VectorXd vec_from_json(const Json& j) {
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[i] = j.at(i).get<double>();
  return v;
}

inline Json to_json(const EtmEstimate& e) {
  Json j;
  j["case"] = case_name(e.case_);
  j["tilt"] = {{"beta0", e.tilt.beta0}, {"beta1", to_json(e.tilt.beta1)}};
  j["conditional"] = {{"beta0c", e.conditional.beta0c}, {"beta1c", to_json(e.conditional.beta1c)}};
  j["rho_ell"] = e.rho_ell ? Json(*e.rho_ell) : Json(nullptr);
  j["rho_u"] = e.rho_u ? Json(*e.rho_u) : Json(nullptr);
  j["alpha"] = e.alpha ? Json(*e.alpha) : Json(nullptr);
  j["diagnostics"] = {{"iterations", e.diagnostics.iterations},
                      {"final_grad_norm", e.diagnostics.final_grad_norm},
                      {"converged", e.diagnostics.converged},
                      {"objective_value", e.diagnostics.objective_value}};
  j["warnings"] = e.warnings;
  return j;
}

inline EtmEstimate estimate_from_json(const Json& j) {
  EtmEstimate e;
  e.case_ = parse_case(j.at("case").get<std::string>());
  e.tilt.beta0 = j.at("tilt").at("beta0").get<double>();
  e.tilt.beta1 = vec_from_json(j.at("tilt").at("beta1"));
  e.conditional.beta0c = j.at("conditional").at("beta0c").get<double>();
  e.conditional.beta1c = vec_from_json(j.at("conditional").at("beta1c"));
  auto opt = [&](const char* k) -> std::optional<double> {
    if (!j.contains(k) || j.at(k).is_null()) return std::nullopt;
    return j.at(k).get<double>();
  };
  e.rho_ell = opt("rho_ell");
  e.rho_u = opt("rho_u");
  e.alpha = opt("alpha");
  if (j.contains("diagnostics")) {
    const Json& d = j.at("diagnostics");
    e.diagnostics.iterations = d.value("iterations", 0);
    e.diagnostics.converged = d.value("converged", false);
    if (d.contains("final_grad_norm") && d["final_grad_norm"].is_number())
      e.diagnostics.final_grad_norm = d["final_grad_norm"].get<double>();
    if (d.contains("objective_value") && d["objective_value"].is_number())
      e.diagnostics.objective_value = d["objective_value"].get<double>();
  }
  return e;
}

inline Json to_json(const VarianceReport& r) {
  Json j;
  j["case"] = case_name(r.case_);
  j["n"] = r.n;
  j["N"] = r.N;
  j["U_case"] = to_json(r.U_case);
  j["U_baseline"] = to_json(r.U_baseline);
  j["scaled_diff"] = to_json(r.scaled_diff);
  j["eigenvalues_desc"] = to_json(r.eigenvalues_desc);
  return j;
}

inline Json to_json(const SandwichBlocks& s) {
  return {{"H", to_json(s.H)}, {"G", to_json(s.G)}, {"U0", to_json(s.U0)}};
}

inline Json blocks_summary(const SBlocks& b) {
  return {{"a", b.a},
          {"s22", b.s22},
          {"s33", b.s33},
          {"s44", b.s44},
          {"delta_l", b.delta_l},
          {"delta_r", b.delta_r},
          {"delta_s", b.delta_s},
          {"alpha_star", b.alpha_star},
          {"normalization_gap", b.normalization_gap}};
}

}  // namespace etm
