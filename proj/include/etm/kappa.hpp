#pragma once

#include "etm/model.hpp"

namespace etm {

struct KappaEval {
  double value = 0;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hessian;
};

namespace detail {

// Per-row pieces of log(1-q+q e) with e = exp(eta).
struct MixTerm {
  double log;   // log(1-q+q e)
  double r;     // d/dq = (e-1)/den
  double s;     // d/deta = q e/den
  double cross; // d2/(deta dq) = e/den^2
};

inline MixTerm mix_term(double eta, double q) {
  const double e = std::exp(eta);
  const double den = 1 - q + q * e;
  MixTerm t;
  t.log = logaddexp(std::log1p(-q), std::log(q) + eta);
  t.r = (e - 1) / den;
  t.s = sigmoid(eta + logit(q));
  t.cross = (e / den) / den;
  return t;
}

// Sum_unl log(1-q+q e) - Sum_all log(1-a+a e) + Sum_{y=1} eta - N log N
// over layout (beta, q, a).
inline KappaEval kappa_core(const Dataset& ds, const Eigen::VectorXd& beta, double q, double a) {
  const int p = ds.d() + 1;
  const Eigen::VectorXd eta_l = linear_predictor(ds.labeled_z, beta);
  const Eigen::VectorXd eta_u = linear_predictor(ds.unlabeled_z, beta);
  const double N = ds.N();
  KappaEval k;
  k.grad = Eigen::VectorXd::Zero(p + 2);
  k.hessian = Eigen::MatrixXd::Zero(p + 2, p + 2);
  double val = ds.labeled_y.dot(eta_l) - N * std::log(N);
  Eigen::VectorXd gb = ds.labeled_z.transpose() * ds.labeled_y;
  Eigen::VectorXd wbb(ds.N());
  Eigen::VectorXd gbq = Eigen::VectorXd::Zero(p), gba = Eigen::VectorXd::Zero(p);
  double gq = 0, ga = 0, hqq = 0, haa = 0;

  auto all_row = [&](const auto& z, double eta, Eigen::Index i) {
    const MixTerm t = mix_term(eta, a);
    val -= t.log;
    gb.noalias() -= t.s * z.transpose();
    ga -= t.r;
    haa += t.r * t.r;
    gba.noalias() -= t.cross * z.transpose();
    wbb[i] = -t.s * (1 - t.s);
  };
  for (int i = 0; i < ds.n(); ++i) all_row(ds.labeled_z.row(i), eta_l[i], i);
  for (int i = 0; i < ds.n2(); ++i) {
    const auto z = ds.unlabeled_z.row(i);
    all_row(z, eta_u[i], ds.n() + i);
    const MixTerm t = mix_term(eta_u[i], q);
    val += t.log;
    gb.noalias() += t.s * z.transpose();
    gq += t.r;
    hqq -= t.r * t.r;
    gbq.noalias() += t.cross * z.transpose();
    wbb[ds.n() + i] += t.s * (1 - t.s);
  }
  const Eigen::MatrixXd Z = ds.all_z();
  k.value = val;
  k.grad.head(p) = gb;
  k.grad[p] = gq;
  k.grad[p + 1] = ga;
  k.hessian.topLeftCorner(p, p) = Z.transpose() * wbb.asDiagonal() * Z;
  k.hessian.block(0, p, p, 1) = gbq;
  k.hessian.block(p, 0, 1, p) = gbq.transpose();
  k.hessian.block(0, p + 1, p, 1) = gba;
  k.hessian.block(p + 1, 0, 1, p) = gba.transpose();
  k.hessian(p, p) = hqq;
  k.hessian(p + 1, p + 1) = haa;
  return k;
}

struct LabeledRhoTerm {
  double value, grad, hess;
};

// Sum_lab (1-y) log(1-rho) + y log(rho)
inline LabeledRhoTerm labeled_rho_term(const Dataset& ds, double rho) {
  const double n1 = ds.labeled_y.sum(), n0 = ds.n() - n1;
  return {n0 * std::log1p(-rho) + n1 * std::log(rho), n1 / rho - n0 / (1 - rho),
          -n1 / (rho * rho) - n0 / ((1 - rho) * (1 - rho))};
}

}  // namespace detail

// Layout (beta, rho, alpha).
inline KappaEval kappa_m1(const Dataset& ds, const TiltParams& beta, double rho, double alpha) {
  check_prob(rho, Errc::RhoOutOfRange, "rho");
  check_prob(alpha, Errc::AlphaOutOfRange, "alpha");
  KappaEval k = detail::kappa_core(ds, beta.vec(), rho, alpha);
  const int p = ds.d() + 1;
  const auto lt = detail::labeled_rho_term(ds, rho);
  k.value += lt.value;
  k.grad[p] += lt.grad;
  k.hessian(p, p) += lt.hess;
  return k;
}

// Layout (beta, rho_l, rho_u, alpha).
inline KappaEval kappa_m2(const Dataset& ds, const TiltParams& beta, double rho_l, double rho_u,
                          double alpha) {
  check_prob(rho_l, Errc::RhoOutOfRange, "rho_l");
  check_prob(rho_u, Errc::RhoOutOfRange, "rho_u");
  check_prob(alpha, Errc::AlphaOutOfRange, "alpha");
  const KappaEval c = detail::kappa_core(ds, beta.vec(), rho_u, alpha);
  const int p = ds.d() + 1;
  const auto lt = detail::labeled_rho_term(ds, rho_l);
  KappaEval k;
  k.value = c.value + lt.value;
  k.grad = Eigen::VectorXd::Zero(p + 3);
  k.hessian = Eigen::MatrixXd::Zero(p + 3, p + 3);
  // core index j -> m2 index: beta same, rho_u -> p+1, alpha -> p+2
  auto idx = [p](int j) { return j < p ? j : j + 1; };
  for (int i = 0; i < p + 2; ++i) {
    k.grad[idx(i)] = c.grad[i];
    for (int j = 0; j < p + 2; ++j) k.hessian(idx(i), idx(j)) = c.hessian(i, j);
  }
  k.grad[p] = lt.grad;
  k.hessian(p, p) = lt.hess;
  return k;
}

// Layout (beta, rho2, alpha); strata rho0 = 0 and rho1 = 1 are closed form.
inline KappaEval kappa_oss(const Dataset& ds, const TiltParams& beta, double rho2, double alpha) {
  if (ds.design != Design::OutcomeStratified)
    throw Error(Errc::InvalidArgument, "kappa_oss needs an OSS dataset");
  check_prob(rho2, Errc::RhoOutOfRange, "rho2");
  check_prob(alpha, Errc::AlphaOutOfRange, "alpha");
  return detail::kappa_core(ds, beta.vec(), rho2, alpha);
}

namespace detail {

inline double mixture_root(const Eigen::VectorXd& e, const SolverSettings& s, const char* what) {
  if (e.size() == 0) throw Error(Errc::NoInteriorRoot, std::string(what) + ": no rows");
  if (((e.array() - 1).abs() <= 1e-12).all())
    throw Error(Errc::DegenerateTilts, std::string(what) + ": all tilts equal 1");
  // f(q) = mean (e-1)/(1-q+q e), strictly decreasing; interior root iff
  // mean(e) > 1 and mean(1/e) > 1
  const double m = static_cast<double>(e.size());
  auto fd = [&](double q) {
    double f = 0, d = 0;
    for (Eigen::Index i = 0; i < e.size(); ++i) {
      const double r = (e[i] - 1) / (1 - q + q * e[i]);
      f += r;
      d -= r * r;
    }
    return std::pair<double, double>{f / m, d / m};
  };
  try {
    return solve_monotone_root(fd, 0.0, 1.0, s);
  } catch (const Error& err) {
    if (err.code() == Errc::NoSignChange)
      throw Error(Errc::NoInteriorRoot, std::string(what) + ": root outside (0,1)");
    throw;
  }
}

inline SolverSettings inner_settings(const SolverSettings& s) {
  SolverSettings in = s;
  in.grad_tol = std::max(s.grad_tol * 1e-3, 1e-14);
  return in;
}

}  // namespace detail

inline double solve_alpha(const Eigen::MatrixXd& all_z, const TiltParams& beta,
                          const SolverSettings& settings = {}) {
  const Eigen::VectorXd e = linear_predictor(all_z, beta.vec()).array().exp();
  return detail::mixture_root(e, settings, "alpha");
}

inline double solve_rho_u(const Eigen::MatrixXd& unlabeled_z, const TiltParams& beta,
                          const SolverSettings& settings = {}) {
  const Eigen::VectorXd e = linear_predictor(unlabeled_z, beta.vec()).array().exp();
  return detail::mixture_root(e, settings, "rho_u");
}

// Variants taking tilts directly.
inline double solve_alpha_tilts(const Eigen::VectorXd& e, const SolverSettings& settings = {}) {
  return detail::mixture_root(e, settings, "alpha");
}

}  // namespace etm
