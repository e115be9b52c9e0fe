#pragma once

#include "etm/kappa.hpp"
#include "etm/supervised.hpp"

namespace etm {

namespace detail {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline bool infeasible(const Error& e) {
  switch (e.code()) {
    case Errc::OverflowGuardTripped:
    case Errc::NoInteriorRoot:
    case Errc::RhoOutOfRange:
    case Errc::AlphaOutOfRange:
    case Errc::MaxIterExceeded:
      return true;
    default:
      return false;
  }
}

struct InnerSolution {
  double alpha = 0.5;
  double rho_u = 0.5;
  bool alpha_degenerate = false;
  bool rho_degenerate = false;
};

// Root of the mixture equation, or the fallback when every tilt is 1.
inline double root_or_fallback(const Eigen::VectorXd& e, double fallback, const SolverSettings& s,
                               const char* what, bool& degenerate) {
  try {
    degenerate = false;
    return mixture_root(e, s, what);
  } catch (const Error& err) {
    if (err.code() != Errc::DegenerateTilts) throw;
    degenerate = true;
    return fallback;
  }
}

// Profile over beta with alpha (and rho_u unless fixed) eliminated.
// Objective is scaled by 1/N.
struct BetaProfile {
  const Dataset& ds;
  SolverSettings inner;
  std::optional<double> rho_u_fixed;
  InnerSolution last;

  InnerSolution solve_inner(const Eigen::VectorXd& beta) const {
    const Eigen::VectorXd eta_all = linear_predictor(ds.all_z(), beta);
    const Eigen::VectorXd e = eta_all.array().exp();
    InnerSolution in;
    in.alpha = root_or_fallback(e, ds.ybar(), inner, "alpha", in.alpha_degenerate);
    if (rho_u_fixed) {
      in.rho_u = *rho_u_fixed;
    } else {
      in.rho_u = root_or_fallback(e.tail(ds.n2()), ds.ybar(), inner, "rho_u", in.rho_degenerate);
    }
    return in;
  }

  Objective operator()(const Eigen::VectorXd& beta) {
    Objective o;
    const int p = ds.d() + 1;
    try {
      const InnerSolution in = solve_inner(beta);
      const KappaEval k = kappa_core(ds, beta, in.rho_u, in.alpha);
      const double N = ds.N();
      Eigen::MatrixXd h = k.hessian.topLeftCorner(p, p);
      const double kaa = k.hessian(p + 1, p + 1);
      if (kaa > 0) h -= k.hessian.block(0, p + 1, p, 1) * k.hessian.block(p + 1, 0, 1, p) / kaa;
      const double kqq = k.hessian(p, p);
      if (!rho_u_fixed && kqq < 0) h -= k.hessian.block(0, p, p, 1) * k.hessian.block(p, 0, 1, p) / kqq;
      o.value = k.value / N;
      o.grad = k.grad.head(p) / N;
      o.hess = h / N;
      last = in;
    } catch (const Error& e) {
      if (!infeasible(e)) throw;
      o.value = kNegInf;
    }
    return o;
  }
};

// M1 profile over (beta, logit rho) with alpha eliminated; scaled by 1/N.
struct M1Profile {
  const Dataset& ds;
  SolverSettings inner;
  InnerSolution last;
  Eigen::VectorXd natural_grad;

  Objective operator()(const Eigen::VectorXd& th) {
    Objective o;
    const int p = ds.d() + 1;
    try {
      const Eigen::VectorXd beta = th.head(p);
      const double rho = sigmoid(th[p]);
      const Eigen::VectorXd e = linear_predictor(ds.all_z(), beta).array().exp();
      InnerSolution in;
      in.alpha = root_or_fallback(e, ds.ybar(), inner, "alpha", in.alpha_degenerate);
      in.rho_u = rho;
      const KappaEval k = kappa_m1(ds, TiltParams::from_vec(beta), rho, in.alpha);
      const double N = ds.N();
      Eigen::MatrixXd h = k.hessian.topLeftCorner(p + 1, p + 1);
      const double kaa = k.hessian(p + 1, p + 1);
      if (kaa > 0)
        h -= k.hessian.block(0, p + 1, p + 1, 1) * k.hessian.block(p + 1, 0, 1, p + 1) / kaa;
      const Eigen::VectorXd g = k.grad.head(p + 1);
      const double jr = rho * (1 - rho);
      o.value = k.value / N;
      o.grad = g / N;
      o.grad[p] *= jr;
      o.hess = h / N;
      o.hess.row(p) *= jr;
      o.hess.col(p) *= jr;
      o.hess(p, p) += g[p] / N * jr * (1 - 2 * rho);
      natural_grad = g / N;
      last = in;
    } catch (const Error& e) {
      if (!infeasible(e)) throw;
      o.value = kNegInf;
    }
    return o;
  }
};

// Newton on the transformed scale, tightened until the natural-scale score
// meets grad_tol.
template <class P, class NaturalNorm>
std::pair<Eigen::VectorXd, SolveDiagnostics> maximize_natural(P& prof, Eigen::VectorXd x,
                                                             const SolverSettings& s,
                                                             NaturalNorm&& natural) {
  SolverSettings run = s;
  SolveDiagnostics total;
  for (int round = 0; round < 5; ++round) {
    auto [xr, d] = newton_maximize(prof, x, run);
    x = xr;
    total.iterations += d.iterations;
    total.objective_value = d.objective_value;
    prof(x);
    const double g = natural(prof);
    total.final_grad_norm = g;
    if (g <= s.grad_tol) {
      total.converged = true;
      return {x, total};
    }
    run.grad_tol = std::max(run.grad_tol * 0.5 * s.grad_tol / g, 1e-300);
  }
  throw Error(Errc::MaxIterExceeded, "natural-scale stationarity not reached", total);
}

inline void note_degenerate(EtmEstimate& est, const InnerSolution& in) {
  if (in.alpha_degenerate)
    est.warnings.push_back("DegenerateTilts: alpha unidentified, reported as labeled class-1 fraction");
  if (in.rho_degenerate)
    est.warnings.push_back("DegenerateTilts: rho_u unidentified, reported as labeled class-1 fraction");
}

inline void require_rs(const Dataset& ds) {
  if (ds.design != Design::RandomSampling)
    throw Error(Errc::InvalidArgument, "estimator needs a random-sampling dataset");
}

}  // namespace detail

inline EtmEstimate fit_m1(const Dataset& ds, const SolverSettings& settings = {}) {
  settings.validate();
  detail::require_rs(ds);
  const EtmEstimate init = fit_logistic(ds, settings);
  const int p = ds.d() + 1;
  Eigen::VectorXd th(p + 1);
  th.head(p) = init.tilt.vec();
  th[p] = logit(ds.ybar());
  detail::M1Profile prof{ds, detail::inner_settings(settings), {}, {}};
  auto [x, diag] = detail::maximize_natural(prof, th, settings, [](const detail::M1Profile& pr) {
    return pr.natural_grad.lpNorm<Eigen::Infinity>();
  });
  diag.objective_value *= ds.N();
  EtmEstimate est;
  est.case_ = Case::M1;
  const double rho = sigmoid(x[p]);
  est.tilt = TiltParams::from_vec(x.head(p));
  est.conditional = to_conditional(est.tilt, rho);
  est.rho_ell = rho;
  est.rho_u = rho;
  est.alpha = prof.last.alpha;
  est.diagnostics = diag;
  detail::note_degenerate(est, prof.last);
  return est;
}

inline EtmEstimate fit_m2(const Dataset& ds, const SolverSettings& settings = {}) {
  settings.validate();
  detail::require_rs(ds);
  if (ds.n2() < 1) throw Error(Errc::InvalidArgument, "M2 needs unlabeled rows");
  const EtmEstimate init = fit_logistic(ds, settings);
  detail::BetaProfile prof{ds, detail::inner_settings(settings), std::nullopt, {}};
  auto [x, diag] = newton_maximize(prof, init.tilt.vec(), settings);
  prof(x);
  // rho_l's score involves only labels, so rho_l = ybar in closed form
  const double rho_l = ds.ybar();
  EtmEstimate est;
  est.case_ = Case::M2;
  est.tilt = TiltParams::from_vec(x);
  est.conditional = to_conditional(est.tilt, rho_l);
  est.rho_ell = rho_l;
  est.rho_u = prof.last.rho_u;
  est.alpha = prof.last.alpha;
  diag.objective_value =
      diag.objective_value * ds.N() + detail::labeled_rho_term(ds, rho_l).value;
  est.diagnostics = diag;
  detail::note_degenerate(est, prof.last);
  return est;
}

}  // namespace etm
