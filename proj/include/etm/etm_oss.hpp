#pragma once

#include "etm/etm_rs.hpp"

namespace etm {

struct OssCounts {
  int n0 = 0, n1 = 0, n2 = 0;

  int n() const { return n0 + n1; }
  int N() const { return n() + n2; }
  double rho_l() const { return static_cast<double>(n1) / n(); }

  static OssCounts of(const Dataset& ds) { return {ds.n0(), ds.n1(), ds.n2()}; }
  void validate() const {
    if (n0 < 1 || n1 < 1 || n2 < 0) throw Error(Errc::InvalidArgument, "OSS counts");
  }
};

namespace detail {

inline EtmEstimate fit_oss(const Dataset& ds, Case c, std::optional<double> rho_u_known,
                           const SolverSettings& settings) {
  settings.validate();
  if (ds.design != Design::OutcomeStratified)
    throw Error(Errc::InvalidArgument, "estimator needs an OSS dataset");
  const OssCounts counts = OssCounts::of(ds);
  if (counts.n0 < 1 || counts.n1 < 1) throw Error(Errc::SingleClass, "OSS needs both strata");
  const EtmEstimate init = fit_logistic(ds, settings);
  BetaProfile prof{ds, inner_settings(settings), rho_u_known, {}};
  auto [x, diag] = newton_maximize(prof, init.tilt.vec(), settings);
  prof(x);
  diag.objective_value *= ds.N();
  EtmEstimate est;
  est.case_ = c;
  est.tilt = TiltParams::from_vec(x);
  est.conditional = to_conditional(est.tilt, counts.rho_l());
  est.rho_ell = counts.rho_l();
  est.rho_u = prof.last.rho_u;
  est.alpha = prof.last.alpha;
  est.diagnostics = diag;
  note_degenerate(est, prof.last);
  return est;
}

}  // namespace detail

inline EtmEstimate fit_m3(const Dataset& ds, const SolverSettings& settings = {}) {
  if (ds.n2() < 1) throw Error(Errc::InvalidArgument, "M3 needs unlabeled rows");
  return detail::fit_oss(ds, Case::M3, std::nullopt, settings);
}

inline EtmEstimate fit_m4(const Dataset& ds, double rho_u_known,
                          const SolverSettings& settings = {}) {
  check_prob(rho_u_known, Errc::RhoOutOfRange, "rho_u_known");
  return detail::fit_oss(ds, Case::M4, rho_u_known, settings);
}

// Profile objective pl_M4(beta) = kappa_oss(beta, rho_u, alpha_hat(beta)).
inline double profile_m4(const Dataset& ds, const TiltParams& beta, double rho_u_known,
                         const SolverSettings& settings = {}) {
  const double alpha = solve_alpha(ds.all_z(), beta, detail::inner_settings(settings));
  return kappa_oss(ds, beta, rho_u_known, alpha).value;
}

}  // namespace etm
