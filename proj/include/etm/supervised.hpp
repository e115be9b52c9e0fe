#pragma once

#include "etm/model.hpp"

namespace etm {

struct SandwichBlocks {
  Eigen::MatrixXd H, G, U0;
};

// Average logistic log-likelihood in the conditional parameters.
inline Objective logistic_objective(const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                                    const Eigen::VectorXd& bc) {
  Objective o;
  Eigen::VectorXd eta;
  try {
    eta = linear_predictor(z, bc);
  } catch (const Error& e) {
    if (e.code() != Errc::OverflowGuardTripped) throw;
    o.value = -std::numeric_limits<double>::infinity();
    return o;
  }
  const double n = static_cast<double>(z.rows());
  Eigen::VectorXd p(eta.size()), w(eta.size());
  double ll = 0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    p[i] = sigmoid(eta[i]);
    w[i] = p[i] * (1 - p[i]);
    ll += y[i] * eta[i] - logaddexp(0.0, eta[i]);
  }
  o.value = ll / n;
  o.grad = z.transpose() * (y - p) / n;
  o.hess = -(z.transpose() * w.asDiagonal() * z) / n;
  return o;
}

inline EtmEstimate fit_logistic(const Dataset& ds, const SolverSettings& settings = {}) {
  settings.validate();
  const int n1 = ds.n1();
  if (n1 == 0 || n1 == ds.n()) throw Error(Errc::SingleClass, "labeled data contain one class");
  SolverSettings s = settings;
  s.divergence_cap = std::min(s.divergence_cap, 30.0);
  auto obj = [&](const Eigen::VectorXd& bc) {
    return logistic_objective(ds.labeled_z, ds.labeled_y, bc);
  };
  Eigen::VectorXd bc;
  SolveDiagnostics diag;
  try {
    std::tie(bc, diag) = newton_maximize(obj, Eigen::VectorXd::Zero(ds.d() + 1), s);
  } catch (const Error& e) {
    if (e.code() == Errc::Diverged)
      throw Error(Errc::Separation, "logistic coefficients diverge", *e.diagnostics);
    throw;
  }
  diag.objective_value *= ds.n();
  EtmEstimate est;
  est.case_ = Case::Logistic;
  // OSS fixes rho_l = n1/n, which equals ybar
  const double rho = static_cast<double>(n1) / ds.n();
  est.conditional = ConditionalParams::from_vec(bc);
  est.tilt = from_conditional(est.conditional, rho);
  est.rho_ell = rho;
  est.diagnostics = diag;
  return est;
}

// Stacked logistic scores (5a)-(5c) per labeled row, in order (beta, rho).
inline Eigen::MatrixXd logistic_scores(const Dataset& ds, const TiltParams& t, double rho) {
  const int p = ds.d() + 1;
  const Eigen::VectorXd eta = linear_predictor(ds.labeled_z, t.vec());
  Eigen::MatrixXd psi(ds.n(), p + 1);
  const double dl = rho * (1 - rho);
  for (int i = 0; i < ds.n(); ++i) {
    const double pr = sigmoid(eta[i] + logit(rho));
    const double y = ds.labeled_y[i];
    psi.row(i).head(p) = (y - pr) * ds.labeled_z.row(i);
    psi(i, p) = (y - rho) / dl;
  }
  return psi;
}

inline SandwichBlocks sandwich_avar(const Dataset& ds, const EtmEstimate& est) {
  if (est.case_ != Case::Logistic) throw Error(Errc::InvalidArgument, "needs a logistic estimate");
  if (ds.design != Design::RandomSampling)
    throw Error(Errc::InvalidArgument, "sandwich variance needs random sampling");
  const int p = ds.d() + 1;
  const double rho = *est.rho_ell, dl = rho * (1 - rho), n = ds.n();
  const Eigen::VectorXd eta = linear_predictor(ds.labeled_z, est.tilt.vec());
  const Eigen::MatrixXd psi = logistic_scores(ds, est.tilt, rho);
  SandwichBlocks sb;
  sb.H = Eigen::MatrixXd::Zero(p + 1, p + 1);
  for (int i = 0; i < ds.n(); ++i) {
    const Eigen::VectorXd z = ds.labeled_z.row(i).transpose();
    const double e = std::exp(eta[i]);
    const double den = 1 - rho + rho * e;
    const double pr = sigmoid(eta[i] + logit(rho));
    const double y = ds.labeled_y[i];
    sb.H.topLeftCorner(p, p) += pr * (1 - pr) * z * z.transpose();
    sb.H.topRightCorner(p, 1) += (e / den / den) * z;
    sb.H(p, p) += (dl + (y - rho) * (1 - 2 * rho)) / (dl * dl);
  }
  sb.H /= n;
  sb.G = psi.transpose() * psi / n;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(sb.H);
  if (!lu.isInvertible()) throw Error(Errc::SingularH, "H not invertible");
  const Eigen::MatrixXd Hinv = lu.inverse();
  sb.U0 = Hinv * sb.G * Hinv.transpose();
  sb.U0 = 0.5 * (sb.U0 + sb.U0.transpose()).eval();
  return sb;
}

}  // namespace etm
