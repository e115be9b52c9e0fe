#pragma once

#include "etm/mc_harness.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <variant>

namespace etm {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Flat TOML-style file: key = number | "string" | [items]; '#' starts a comment.
using ConfigValue = std::variant<double, std::string, std::vector<double>, std::vector<std::string>>;
using ConfigMap = std::map<std::string, std::pair<std::string, ConfigValue>>;  // raw text, value

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

inline double parse_number(const std::string& tok, int line) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(tok, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != tok.size())
    throw ConfigError("line " + std::to_string(line) + ": bad number '" + tok + "'");
  return v;
}

inline std::string parse_string(const std::string& tok, int line) {
  if (tok.size() < 2 || tok.front() != '"' || tok.back() != '"')
    throw ConfigError("line " + std::to_string(line) + ": bad string '" + tok + "'");
  return tok.substr(1, tok.size() - 2);
}

}  // namespace detail

inline ConfigMap parse_config(const std::string& text) {
  ConfigMap out;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string line = detail::trim(detail::strip_comment(raw));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    if (key.empty() || val.empty())
      throw ConfigError("line " + std::to_string(lineno) + ": empty key or value");
    if (out.count(key)) throw ConfigError("duplicate key '" + key + "'");
    ConfigValue v;
    if (val.front() == '[') {
      if (val.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": unclosed array");
      std::vector<std::string> items;
      std::stringstream ss(val.substr(1, val.size() - 2));
      std::string item;
      while (std::getline(ss, item, ',')) {
        item = detail::trim(item);
        if (!item.empty()) items.push_back(item);
      }
      if (!items.empty() && items.front().front() == '"') {
        std::vector<std::string> sv;
        for (const auto& it : items) sv.push_back(detail::parse_string(it, lineno));
        v = sv;
      } else {
        std::vector<double> dv;
        for (const auto& it : items) dv.push_back(detail::parse_number(it, lineno));
        v = dv;
      }
    } else if (val.front() == '"') {
      v = detail::parse_string(val, lineno);
    } else {
      v = detail::parse_number(val, lineno);
    }
    out[key] = {val, v};
  }
  return out;
}

struct ScenarioConfig {
  Scenario base;
  std::vector<double> rho_u_grid;
  std::vector<Case> cases;
  long mc_draws = 1'000'000;
};

namespace detail {

template <class T>
const T& get_as(const ConfigMap& m, const std::string& key) {
  const auto it = m.find(key);
  if (it == m.end()) throw ConfigError("missing key '" + key + "'");
  const T* v = std::get_if<T>(&it->second.second);
  if (!v) throw ConfigError("key '" + key + "' has the wrong type");
  return *v;
}

inline int get_int(const ConfigMap& m, const std::string& key) {
  const double v = get_as<double>(m, key);
  if (v != std::floor(v) || std::abs(v) > 2e9) throw ConfigError("key '" + key + "' must be an integer");
  return static_cast<int>(v);
}

inline Eigen::VectorXd get_vec(const ConfigMap& m, const std::string& key) {
  const auto& v = get_as<std::vector<double>>(m, key);
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace detail

inline ScenarioConfig scenario_from_config(const ConfigMap& m) {
  static const char* known[] = {"mu0", "mu1", "sigma_diag", "design", "n", "n1", "n2",
                                "rho_l_star", "rho_u_grid", "replications", "seed_base",
                                "cases", "mc_draws"};
  for (const auto& [k, v] : m) {
    (void)v;
    if (std::find_if(std::begin(known), std::end(known), [&](const char* s) { return k == s; }) ==
        std::end(known))
      throw ConfigError("unknown key '" + k + "'");
  }
  ScenarioConfig c;
  Scenario& s = c.base;
  s.pair.mu0 = detail::get_vec(m, "mu0");
  s.pair.mu1 = detail::get_vec(m, "mu1");
  s.pair.sigma_diag = detail::get_vec(m, "sigma_diag");
  try {
    s.design = parse_design(detail::get_as<std::string>(m, "design"));
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  s.n = detail::get_int(m, "n");
  s.n2 = detail::get_int(m, "n2");
  if (s.design == Design::OutcomeStratified) s.n1 = detail::get_int(m, "n1");
  else s.rho_l_star = detail::get_as<double>(m, "rho_l_star");
  c.rho_u_grid = detail::get_as<std::vector<double>>(m, "rho_u_grid");
  if (c.rho_u_grid.empty()) throw ConfigError("rho_u_grid is empty");
  s.rho_u_star = c.rho_u_grid.front();
  s.replications = detail::get_int(m, "replications");
  {
    const std::string raw = m.count("seed_base") ? m.at("seed_base").first : "0";
    try {
      std::size_t used = 0;
      s.seed_base = std::stoull(raw, &used);
      if (used != raw.size()) throw std::invalid_argument(raw);
    } catch (const std::exception&) {
      throw ConfigError("seed_base must be an unsigned integer");
    }
  }
  if (m.count("mc_draws")) c.mc_draws = detail::get_int(m, "mc_draws");
  const auto& cases = detail::get_as<std::vector<std::string>>(m, "cases");
  try {
    for (const auto& cs : cases) c.cases.push_back(parse_case(cs));
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (c.cases.empty()) throw ConfigError("cases is empty");
  for (double ru : c.rho_u_grid) {
    Scenario t = s;
    t.rho_u_star = ru;
    try {
      t.validate();
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }
  for (Case cs : c.cases) {
    if (cs == Case::Logistic) throw ConfigError("cases must be ETM cases (m1..m4)");
    if ((cs == Case::M3 || cs == Case::M4) != (s.design == Design::OutcomeStratified))
      throw ConfigError(std::string("case ") + case_name(cs) + " does not match design");
  }
  return c;
}

inline ScenarioConfig load_scenario(const std::string& path) {
  return scenario_from_config(parse_config(read_file(path)));
}

// Rows follow the grid, then the case list; grid entry j uses seed mix(seed_base, j)
// so every case at one rho_u sees the same datasets.
inline std::vector<McSummary> run_campaign(const ScenarioConfig& c, const SolverSettings& settings,
                                           int workers) {
  std::vector<McSummary> rows;
  for (std::size_t j = 0; j < c.rho_u_grid.size(); ++j) {
    Scenario s = c.base;
    s.rho_u_star = c.rho_u_grid[j];
    s.seed_base = mix_seed(c.base.seed_base, j);
    for (Case cs : c.cases) rows.push_back(run_scenario(s, cs, settings, workers));
  }
  return rows;
}

// Dataset CSV: header y,x1..xd; an empty y marks an unlabeled row.
inline Dataset parse_dataset_csv(const std::string& text, Design design) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty dataset file");
  std::vector<std::string> header;
  {
    std::stringstream ss(detail::trim(line));
    std::string h;
    while (std::getline(ss, h, ',')) header.push_back(detail::trim(h));
  }
  if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0] = header[0].substr(3);
  if (header.size() < 2 || header[0] != "y") throw IoError("header must be y,x1,...,xd");
  const std::size_t d = header.size() - 1;
  std::vector<std::vector<double>> lab, unl;
  std::vector<double> ys;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::trim(line);
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(detail::trim(cell));
    if (line.back() == ',') f.push_back("");
    if (f.size() != d + 1) throw IoError("line " + std::to_string(lineno) + ": wrong field count");
    std::vector<double> x(d);
    try {
      for (std::size_t j = 0; j < d; ++j) x[j] = detail::parse_number(f[j + 1], lineno);
    } catch (const ConfigError& e) {
      throw IoError(e.what());
    }
    if (f[0].empty()) {
      unl.push_back(x);
    } else if (f[0] == "0" || f[0] == "1") {
      ys.push_back(f[0] == "1" ? 1.0 : 0.0);
      lab.push_back(x);
    } else {
      throw IoError("line " + std::to_string(lineno) + ": y must be 0, 1 or empty");
    }
  }
  Eigen::MatrixXd lx(lab.size(), d), ux(unl.size(), d);
  for (std::size_t i = 0; i < lab.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) lx(i, j) = lab[i][j];
  for (std::size_t i = 0; i < unl.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) ux(i, j) = unl[i][j];
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(ys.data(), ys.size());
  return Dataset::from_x(lx, y, ux, design);
}

inline Dataset read_dataset_csv(const std::string& path, Design design) {
  return parse_dataset_csv(read_file(path), design);
}

inline std::string dataset_to_csv(const Dataset& ds) {
  std::ostringstream os;
  os << 'y';
  for (int j = 1; j <= ds.d(); ++j) os << ",x" << j;
  os << '\n';
  auto row = [&](const auto& z, const std::string& y) {
    os << y;
    for (int j = 1; j <= ds.d(); ++j) {
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g", z[j]);
      os << ',' << buf;
    }
    os << '\n';
  };
  for (int i = 0; i < ds.n(); ++i) row(ds.labeled_z.row(i), ds.labeled_y[i] == 1 ? "1" : "0");
  for (int i = 0; i < ds.n2(); ++i) row(ds.unlabeled_z.row(i), "");
  return os.str();
}

}  // namespace etm
