#include "etm/io.hpp"
#include "etm/json_io.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <thread>

using namespace etm;

namespace {

enum Exit { kOk = 0, kUsage = 1, kEstimation = 2, kIo = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path + "'");
}

void report_error(const char* kind, const std::string& msg) {
  Json j{{"error", kind}, {"message", msg}};
  std::cerr << j.dump() << '\n';
}

int default_workers() {
  const unsigned h = std::thread::hardware_concurrency();
  return h == 0 ? 1 : static_cast<int>(h);
}

Json comparison(const VarianceReport& r, const SBlocks& b) {
  Json j = to_json(r);
  const Eigen::MatrixXd base = r.U_baseline / r.n;
  const Eigen::VectorXd ev = sym_eig_desc(base);
  const double tol = 1e-4 * ev.cwiseAbs().maxCoeff();
  std::string verdict;
  if (r.scaled_diff.norm() <= 1e-6 * base.norm()) verdict = "equality";
  else if (psd_check(r.scaled_diff, tol)) verdict = "psd";
  else verdict = "not_psd";
  j["psd_tol"] = tol;
  j["verdict"] = verdict;
  const bool same_rho = std::abs(b.params.rho_l - b.params.rho_u) <= 1e-12;
  if (r.case_ == Case::M2 && same_rho) {
    const Eigen::MatrixXd g = conditional_transform(static_cast<int>(b.B.size()), b.params.rho_l);
    const Eigen::MatrixXd cb = g * base * g.transpose();
    const Eigen::MatrixXd cd = cb - g * (r.U_case / r.N) * g.transpose();
    j["conditional_scale_diff"] = to_json(cd);
    j["conditional_scale_verdict"] = cd.norm() <= 1e-6 * cb.norm() ? "equality" : "differs";
  }
  if (r.case_ == Case::M4 && same_rho) j["v"] = v_constant(b);
  j["blocks"] = blocks_summary(b);
  return j;
}

Design design_for(Case c, const std::string& flag) {
  Design d;
  try {
    d = parse_design(flag);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  if ((c == Case::M1 || c == Case::M2) && d != Design::RandomSampling)
    throw UsageError(std::string("case ") + case_name(c) + " needs --design rs");
  if ((c == Case::M3 || c == Case::M4) && d != Design::OutcomeStratified)
    throw UsageError(std::string("case ") + case_name(c) + " needs --design oss");
  return d;
}

struct FitArgs {
  std::string data, case_name = "logistic", design = "rs", out;
  std::optional<double> rho_u;
  bool with_avar = false;
  double grad_tol = 1e-10;
};

int cmd_fit(const FitArgs& a) {
  Case c;
  try {
    c = parse_case(a.case_name);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  const Design design = design_for(c, a.design);
  if (c == Case::M4 && !a.rho_u) throw UsageError("case m4 requires --rho-u");
  SolverSettings s;
  s.grad_tol = a.grad_tol;
  try {
    s.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  Dataset ds;
  try {
    ds = read_dataset_csv(a.data, design);
  } catch (const Error& e) {
    throw IoError(e.what());
  }
  const EtmEstimate est = fit_case(ds, c, a.rho_u.value_or(0.5), s);
  Json j;
  j["command"] = "fit";
  j["design"] = design_name(design);
  j["estimate"] = to_json(est);
  if (a.with_avar) {
    if (c == Case::Logistic) {
      j["variance"] = to_json(sandwich_avar(ds, est));
    } else {
      const SBlocks b = compute_s_blocks_plugin(ds, &est);
      j["variance"] = comparison(u_case(c, b), b);
    }
  }
  write_output(a.out, j.dump(2) + "\n");
  return kOk;
}

struct AvarArgs {
  std::string mode = "oracle", input, fit, case_name, design = "rs", out;
  std::optional<double> rho_u;
  std::optional<long> mc_draws;
  std::optional<std::uint64_t> seed;
  int workers = default_workers();
};

int cmd_avar(const AvarArgs& a) {
  Json j;
  j["command"] = "avar";
  j["mode"] = a.mode;
  Json reports = Json::array();
  if (a.mode == "plugin") {
    if (a.fit.empty()) throw UsageError("plug-in mode needs --fit <fit.json> from a prior fit");
    Json fj;
    try {
      fj = Json::parse(read_file(a.fit));
    } catch (const Json::exception& e) {
      throw IoError(std::string("bad fit JSON: ") + e.what());
    }
    EtmEstimate est;
    try {
      est = estimate_from_json(fj.contains("estimate") ? fj.at("estimate") : fj);
    } catch (const std::exception& e) {
      throw IoError(std::string("bad fit JSON: ") + e.what());
    }
    const std::string dflag = fj.contains("design") ? fj["design"].get<std::string>() : a.design;
    const Design design = design_for(est.case_, dflag);
    Dataset ds;
    try {
      ds = read_dataset_csv(a.input, design);
    } catch (const Error& e) {
      throw IoError(e.what());
    }
    if (est.case_ == Case::Logistic) {
      Json r = to_json(sandwich_avar(ds, est));
      r["case"] = "logistic";
      reports.push_back(r);
    } else {
      const SBlocks b = compute_s_blocks_plugin(ds, &est);
      reports.push_back(comparison(u_case(est.case_, b), b));
    }
  } else if (a.mode == "oracle") {
    ScenarioConfig cfg;
    try {
      cfg = load_scenario(a.input);
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    }
    std::vector<Case> cases = cfg.cases;
    if (!a.case_name.empty()) {
      try {
        cases = {parse_case(a.case_name)};
      } catch (const Error& e) {
        throw UsageError(e.what());
      }
      design_for(cases[0], design_name(cfg.base.design));
    }
    std::vector<double> grid = a.rho_u ? std::vector<double>{*a.rho_u} : cfg.rho_u_grid;
    IntegrationSpec spec;
    spec.mc_draws = a.mc_draws.value_or(cfg.mc_draws);
    spec.seed = a.seed.value_or(cfg.base.seed_base);
    spec.workers = a.workers;
    if (spec.mc_draws < 1) throw UsageError("--mc-draws must be >= 1");
    const TiltParams bt = true_params(cfg.base.pair);
    const DiscreteMeasure g0 = oracle_measure(cfg.base.pair, bt, spec);
    j["mc_draws"] = spec.mc_draws;
    j["seed"] = spec.seed;
    for (double ru : grid) {
      Scenario s = cfg.base;
      s.rho_u_star = ru;
      try {
        s.validate();
      } catch (const Error& e) {
        throw UsageError(e.what());
      }
      const SBlocks b = compute_s_blocks(g0, {bt, s.rho_l(), ru, SampleCounts::of(s)});
      for (Case c : cases) {
        Json r = comparison(u_case(c, b), b);
        r["rho_l_star"] = s.rho_l();
        r["rho_u_star"] = ru;
        reports.push_back(r);
      }
    }
  } else {
    throw UsageError("--mode must be oracle or plugin");
  }
  j["reports"] = reports;
  write_output(a.out, j.dump(2) + "\n");
  return kOk;
}

struct SimArgs {
  std::string scenario, out, case_name;
  std::optional<double> rho_u;
  std::optional<std::uint64_t> seed;
  int workers = default_workers();
  double grad_tol = 1e-10;
};

int cmd_simulate(const SimArgs& a) {
  ScenarioConfig cfg;
  try {
    cfg = load_scenario(a.scenario);
    if (a.seed) cfg.base.seed_base = *a.seed;
    if (a.rho_u) {
      check_prob(*a.rho_u, Errc::RhoOutOfRange, "--rho-u");
      cfg.rho_u_grid = {*a.rho_u};
    }
    if (!a.case_name.empty()) {
      cfg.cases = {parse_case(a.case_name)};
      design_for(cfg.cases[0], design_name(cfg.base.design));
    }
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  if (a.workers < 1) throw UsageError("--workers must be >= 1");
  SolverSettings s;
  s.grad_tol = a.grad_tol;
  try {
    s.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  const std::vector<McSummary> rows = run_campaign(cfg, s, a.workers);
  std::ostringstream os;
  write_mc_csv_header(os, cfg.base.pair.d() + 1);
  for (const auto& r : rows) {
    write_mc_csv_row(os, r);
    if (r.variance_degenerate)
      std::cerr << "note: rho_u=" << r.rho_u_star << " case " << case_name(r.case_)
                << ": fewer than 2 converged replications, variances reported as 0\n";
    for (const auto& f : r.failures) std::cerr << "replication failed: " << f << '\n';
  }
  write_output(a.out, os.str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised estimation under exponential tilt mixture models"};
  app.require_subcommand(1);

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "Fit an estimator on a dataset CSV");
  fit->add_option("data", fa.data, "Dataset CSV (header y,x1..xd; empty y = unlabeled)")->required();
  fit->add_option("--case", fa.case_name, "logistic|m1|m2|m3|m4");
  fit->add_option("--design", fa.design, "rs|oss");
  fit->add_option("--rho-u", fa.rho_u, "Known unlabeled class-1 proportion (m4)");
  fit->add_flag("--with-avar", fa.with_avar, "Add the plug-in variance report");
  fit->add_option("--out", fa.out, "Output JSON path (default stdout)");
  fit->add_option("--grad-tol", fa.grad_tol, "Stationarity tolerance");

  AvarArgs aa;
  auto* avar = app.add_subcommand("avar", "Asymptotic variance reports");
  avar->add_option("input", aa.input, "Scenario file (oracle) or dataset CSV (plugin)")->required();
  avar->add_option("--mode", aa.mode, "oracle|plugin");
  avar->add_option("--fit", aa.fit, "Fit JSON from a prior `fit` run (plugin mode)");
  avar->add_option("--case", aa.case_name, "Override the scenario case list");
  avar->add_option("--design", aa.design, "rs|oss (plugin mode, when the fit JSON lacks it)");
  avar->add_option("--rho-u", aa.rho_u, "Single rho_u* instead of the scenario grid");
  avar->add_option("--mc-draws", aa.mc_draws, "Oracle Monte Carlo draws");
  avar->add_option("--seed", aa.seed, "Oracle integration seed (default seed_base)");
  avar->add_option("--workers", aa.workers, "Worker threads");
  avar->add_option("--out", aa.out, "Output JSON path (default stdout)");

  SimArgs sa;
  auto* sim = app.add_subcommand("simulate", "Run the Monte Carlo campaign of a scenario file");
  sim->add_option("scenario", sa.scenario, "Scenario file")->required();
  sim->add_option("--out", sa.out, "Output CSV path (default stdout)");
  sim->add_option("--workers", sa.workers, "Worker threads");
  sim->add_option("--seed", sa.seed, "Override seed_base");
  sim->add_option("--case", sa.case_name, "Override the scenario case list");
  sim->add_option("--rho-u", sa.rho_u, "Single rho_u* instead of the scenario grid");
  sim->add_option("--grad-tol", sa.grad_tol, "Stationarity tolerance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }
  try {
    if (*fit) return cmd_fit(fa);
    if (*avar) return cmd_avar(aa);
    if (*sim) return cmd_simulate(sa);
  } catch (const UsageError& e) {
    report_error("usage", e.what());
    return kUsage;
  } catch (const ConfigError& e) {
    report_error("config", e.what());
    return kUsage;
  } catch (const IoError& e) {
    report_error("io", e.what());
    return kIo;
  } catch (const Error& e) {
    report_error(errc_name(e.code()), e.what());
    return kEstimation;
  }
  return kUsage;
}
