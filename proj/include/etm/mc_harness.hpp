#pragma once

#include "etm/etm_oss.hpp"
#include "etm/simgen.hpp"

#include <atomic>
#include <cstdio>
#include <ostream>
#include <thread>

namespace etm {

struct DiffSummary {
  Eigen::VectorXd ave_etm, ave_logistic, mvar_etm, mvar_logistic, lambda;
  Eigen::MatrixXd cov_etm, cov_logistic;
};

inline Eigen::MatrixXd sample_cov(const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd c = x.rowwise() - x.colwise().mean();
  return (c.transpose() * c) / static_cast<double>(x.rows() - 1);
}

inline DiffSummary summarize_diff(const Eigen::MatrixXd& etm, const Eigen::MatrixXd& logistic) {
  if (etm.rows() != logistic.rows() || etm.cols() != logistic.cols())
    throw Error(Errc::ShapeMismatch, "sample matrices differ in shape");
  if (etm.rows() < 2) throw Error(Errc::InvalidArgument, "summarize_diff needs R >= 2");
  DiffSummary s;
  s.ave_etm = etm.colwise().mean().transpose();
  s.ave_logistic = logistic.colwise().mean().transpose();
  s.cov_etm = sample_cov(etm);
  s.cov_logistic = sample_cov(logistic);
  s.mvar_etm = s.cov_etm.diagonal();
  s.mvar_logistic = s.cov_logistic.diagonal();
  s.lambda = sym_eig_desc(s.cov_logistic - s.cov_etm);
  return s;
}

struct McSummary {
  double rho_u_star = 0;
  Case case_ = Case::M3;
  Eigen::VectorXd ave_etm, ave_logistic, mvar_etm, mvar_logistic, lambda;
  // same moments on the conditional scale (beta0c, beta1c)
  Eigen::VectorXd mvar_etm_conditional, mvar_logistic_conditional;
  int n_converged = 0, n_failed = 0;
  bool variance_degenerate = false;
  // worst profiling-constraint residuals over converged replications
  double max_weight_sum_gap = 0, max_weight_tilt_gap = 0, max_alpha_norm_gap = 0;
  std::vector<std::string> failures;
};

struct Replication {
  bool ok = false;
  Eigen::VectorXd etm, logistic, etm_c, logistic_c;
  double weight_sum_gap = 0, weight_tilt_gap = 0, alpha_norm_gap = 0;
  std::string error;
};

inline EtmEstimate fit_case(const Dataset& ds, Case c, double rho_u_known,
                            const SolverSettings& settings) {
  switch (c) {
    case Case::Logistic: return fit_logistic(ds, settings);
    case Case::M1: return fit_m1(ds, settings);
    case Case::M2: return fit_m2(ds, settings);
    case Case::M3: return fit_m3(ds, settings);
    case Case::M4: return fit_m4(ds, rho_u_known, settings);
  }
  throw Error(Errc::InvalidArgument, "unknown case");
}

struct ConstraintGaps {
  double weight_sum = 0, weight_tilt = 0, alpha_norm = 0;
};

// Residuals of sum w = 1, sum w e = 1 and sum 1/(1-a+a e) = N (the last divided by N).
inline ConstraintGaps constraint_gaps(const Dataset& ds, const EtmEstimate& est) {
  ConstraintGaps g;
  if (!est.alpha) return g;
  const Eigen::VectorXd e = linear_predictor(ds.all_z(), est.tilt.vec()).array().exp();
  const double a = *est.alpha, N = ds.N();
  const Eigen::ArrayXd inv = (1 - a + a * e.array()).inverse();
  g.weight_sum = std::abs(inv.sum() / N - 1);
  g.weight_tilt = std::abs((inv * e.array()).sum() / N - 1);
  g.alpha_norm = std::abs(inv.sum() - N) / N;
  return g;
}

inline Replication run_replication(const Scenario& s, Case c, const SolverSettings& settings,
                                   std::uint64_t k) {
  Replication r;
  try {
    const Dataset ds = generate(s, k);
    const EtmEstimate e = fit_case(ds, c, s.rho_u_star, settings);
    const EtmEstimate l = fit_logistic(ds, settings);
    r.etm = e.tilt.vec();
    r.logistic = l.tilt.vec();
    r.etm_c = e.conditional.vec();
    r.logistic_c = l.conditional.vec();
    const ConstraintGaps g = constraint_gaps(ds, e);
    r.weight_sum_gap = g.weight_sum;
    r.weight_tilt_gap = g.weight_tilt;
    r.alpha_norm_gap = g.alpha_norm;
    r.ok = true;
  } catch (const Error& err) {
    r.error = err.what();
  }
  return r;
}

inline std::vector<Replication> run_replications(const Scenario& s, Case c,
                                                 const SolverSettings& settings, int workers) {
  std::vector<Replication> reps(s.replications);
  std::atomic<int> next{0};
  auto work = [&] {
    for (int k = next++; k < s.replications; k = next++)
      reps[k] = run_replication(s, c, settings, static_cast<std::uint64_t>(k));
  };
  const int w = std::max(1, std::min(workers, s.replications));
  if (w == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < w; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  return reps;
}

inline McSummary run_scenario(const Scenario& s, Case c, const SolverSettings& settings = {},
                              int workers = 1) {
  s.validate();
  if (c == Case::Logistic) throw Error(Errc::InvalidArgument, "run_scenario needs an ETM case");
  const bool oss = s.design == Design::OutcomeStratified;
  if ((c == Case::M3 || c == Case::M4) != oss)
    throw Error(Errc::InvalidArgument, "case does not match the scenario design");
  const std::vector<Replication> reps = run_replications(s, c, settings, workers);

  McSummary m;
  m.rho_u_star = s.rho_u_star;
  m.case_ = c;
  const int p = s.pair.d() + 1;
  std::vector<const Replication*> good;
  for (const auto& r : reps) {
    if (r.ok) {
      good.push_back(&r);
      m.max_weight_sum_gap = std::max(m.max_weight_sum_gap, r.weight_sum_gap);
      m.max_weight_tilt_gap = std::max(m.max_weight_tilt_gap, r.weight_tilt_gap);
      m.max_alpha_norm_gap = std::max(m.max_alpha_norm_gap, r.alpha_norm_gap);
    } else {
      m.failures.push_back(r.error);
    }
  }
  m.n_converged = static_cast<int>(good.size());
  m.n_failed = s.replications - m.n_converged;
  if (good.empty()) throw Error(Errc::AllReplicationsFailed, "no replication converged");

  const int R = m.n_converged;
  Eigen::MatrixXd se(R, p), sl(R, p), sec(R, p), slc(R, p);
  for (int i = 0; i < R; ++i) {
    se.row(i) = good[i]->etm.transpose();
    sl.row(i) = good[i]->logistic.transpose();
    sec.row(i) = good[i]->etm_c.transpose();
    slc.row(i) = good[i]->logistic_c.transpose();
  }
  if (R < 2) {
    m.variance_degenerate = true;
    m.ave_etm = se.colwise().mean().transpose();
    m.ave_logistic = sl.colwise().mean().transpose();
    m.mvar_etm = m.mvar_logistic = m.lambda = Eigen::VectorXd::Zero(p);
    m.mvar_etm_conditional = m.mvar_logistic_conditional = Eigen::VectorXd::Zero(p);
    return m;
  }
  const DiffSummary d = summarize_diff(se, sl);
  m.ave_etm = d.ave_etm;
  m.ave_logistic = d.ave_logistic;
  m.mvar_etm = d.mvar_etm;
  m.mvar_logistic = d.mvar_logistic;
  m.lambda = d.lambda;
  m.mvar_etm_conditional = sample_cov(sec).diagonal();
  m.mvar_logistic_conditional = sample_cov(slc).diagonal();
  return m;
}

inline std::string coef_name(int j) {
  return j == 0 ? "beta0" : "beta1_" + std::to_string(j);
}

inline std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline void write_mc_csv_header(std::ostream& os, int p) {
  os << "rho_u_star,case";
  for (const char* pre : {"ave_etm_", "ave_logistic_", "mvar_etm_", "mvar_logistic_"})
    for (int j = 0; j < p; ++j) os << ',' << pre << coef_name(j);
  for (int j = 1; j <= p; ++j) os << ",lambda_" << j;
  os << ",n_converged,n_failed,variance_degenerate\n";
}

inline void write_mc_csv_row(std::ostream& os, const McSummary& m) {
  os << fmt_num(m.rho_u_star) << ',' << case_name(m.case_);
  for (const Eigen::VectorXd* v : {&m.ave_etm, &m.ave_logistic, &m.mvar_etm, &m.mvar_logistic, &m.lambda})
    for (Eigen::Index j = 0; j < v->size(); ++j) os << ',' << fmt_num((*v)[j]);
  os << ',' << m.n_converged << ',' << m.n_failed << ',' << (m.variance_degenerate ? 1 : 0) << '\n';
}

}  // namespace etm
