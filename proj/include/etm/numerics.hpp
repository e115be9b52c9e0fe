#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>

namespace etm {

enum class Errc {
  InvalidArgument,
  NoSignChange,
  MaxIterExceeded,
  SingularHessian,
  Diverged,
  NonFiniteInput,
  DimensionMismatch,
  RhoOutOfRange,
  AlphaOutOfRange,
  NormalizationViolated,
  OverflowGuardTripped,
  SingleClass,
  Separation,
  SingularH,
  DegenerateTilts,
  NoInteriorRoot,
  MissingG0,
  MissingWeights,
  DegenerateS22,
  SingularBlock,
  NotApplicable,
  NonpositiveV,
  ShapeMismatch,
  AllReplicationsFailed,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::NoSignChange: return "NoSignChange";
    case Errc::MaxIterExceeded: return "MaxIterExceeded";
    case Errc::SingularHessian: return "SingularHessian";
    case Errc::Diverged: return "Diverged";
    case Errc::NonFiniteInput: return "NonFiniteInput";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::RhoOutOfRange: return "RhoOutOfRange";
    case Errc::AlphaOutOfRange: return "AlphaOutOfRange";
    case Errc::NormalizationViolated: return "NormalizationViolated";
    case Errc::OverflowGuardTripped: return "OverflowGuardTripped";
    case Errc::SingleClass: return "SingleClass";
    case Errc::Separation: return "Separation";
    case Errc::SingularH: return "SingularH";
    case Errc::DegenerateTilts: return "DegenerateTilts";
    case Errc::NoInteriorRoot: return "NoInteriorRoot";
    case Errc::MissingG0: return "MissingG0";
    case Errc::MissingWeights: return "MissingWeights";
    case Errc::DegenerateS22: return "DegenerateS22";
    case Errc::SingularBlock: return "SingularBlock";
    case Errc::NotApplicable: return "NotApplicable";
    case Errc::NonpositiveV: return "NonpositiveV";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::AllReplicationsFailed: return "AllReplicationsFailed";
  }
  return "Unknown";
}

struct SolverSettings {
  double grad_tol = 1e-10;
  int max_iter = 200;
  int step_halvings_max = 50;
  double boundary_eps = 1e-10;
  double divergence_cap = 1e6;

  void validate() const;
};

struct SolveDiagnostics {
  int iterations = 0;
  double final_grad_norm = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;
  double objective_value = std::numeric_limits<double>::quiet_NaN();
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}
  Error(Errc code, const std::string& msg, const SolveDiagnostics& d)
      : Error(code, msg) {
    diagnostics = d;
  }
  Errc code() const { return code_; }
  std::optional<SolveDiagnostics> diagnostics;

 private:
  Errc code_;
};

inline void SolverSettings::validate() const {
  if (!(grad_tol > 0) || max_iter < 1 || step_halvings_max < 0 ||
      !(boundary_eps > 0 && boundary_eps < 0.5) || !(divergence_cap > 0))
    throw Error(Errc::InvalidArgument, "bad solver settings");
}

// Safeguarded Newton on a monotone scalar function. fd(x) returns {f, f'}.
template <class F>
double solve_monotone_root(F&& fd, double lo, double hi, const SolverSettings& s) {
  double a = lo + s.boundary_eps, b = hi - s.boundary_eps;
  auto [fa, da] = fd(a);
  auto [fb, db] = fd(b);
  (void)da;
  (void)db;
  if (!std::isfinite(fa) || !std::isfinite(fb))
    throw Error(Errc::NonFiniteInput, "root bracket evaluation not finite");
  if (std::abs(fa) <= s.grad_tol) return a;
  if (std::abs(fb) <= s.grad_tol) return b;
  if ((fa > 0) == (fb > 0)) throw Error(Errc::NoSignChange, "endpoints share a sign");
  const bool increasing = fb > 0;
  double x = 0.5 * (a + b);
  for (int it = 0; it < s.max_iter + 64; ++it) {
    auto [fx, dx] = fd(x);
    if (!std::isfinite(fx)) throw Error(Errc::NonFiniteInput, "root evaluation not finite");
    if (std::abs(fx) <= s.grad_tol) return x;
    if ((fx > 0) == increasing) b = x; else a = x;
    double nx = (dx != 0 && std::isfinite(dx)) ? x - fx / dx : a - 1.0;
    if (!(nx > a && nx < b)) nx = 0.5 * (a + b);
    if (nx == x || b <= a) break;
    x = nx;
  }
  throw Error(Errc::MaxIterExceeded, "monotone root did not converge");
}

template <class F>
double solve_monotone_root_plain(F&& f, double lo, double hi, const SolverSettings& s) {
  return solve_monotone_root(
      [&](double x) {
        const double h = 1e-7 * (1.0 + std::abs(x));
        return std::pair<double, double>{f(x), (f(x + h) - f(x - h)) / (2 * h)};
      },
      lo, hi, s);
}

struct Objective {
  double value = 0;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
};

// Damped Newton ascent. Non-finite values mark infeasible trial points.
template <class F>
std::pair<Eigen::VectorXd, SolveDiagnostics> newton_maximize(F&& obj, Eigen::VectorXd x,
                                                            const SolverSettings& s) {
  SolveDiagnostics diag;
  Objective cur = obj(x);
  if (!std::isfinite(cur.value) || !cur.grad.allFinite())
    throw Error(Errc::NonFiniteInput, "objective not finite at initial point");
  for (int it = 0;; ++it) {
    diag.iterations = it;
    diag.objective_value = cur.value;
    diag.final_grad_norm = cur.grad.lpNorm<Eigen::Infinity>();
    if (diag.final_grad_norm <= s.grad_tol) {
      diag.converged = true;
      return {x, diag};
    }
    if (x.lpNorm<Eigen::Infinity>() > s.divergence_cap)
      throw Error(Errc::Diverged, "iterate norm exceeds cap", diag);
    if (it >= s.max_iter) throw Error(Errc::MaxIterExceeded, "newton iteration limit", diag);

    Eigen::VectorXd newton_dir;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(-cur.hess);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive() && cur.hess.allFinite()) {
      newton_dir = ldlt.solve(cur.grad);
      if (!newton_dir.allFinite() || newton_dir.dot(cur.grad) <= 0) newton_dir.resize(0);
    }
    const double slack = 16 * std::numeric_limits<double>::epsilon() * (1 + std::abs(cur.value));
    auto line_search = [&](const Eigen::VectorXd& dir) -> std::optional<std::pair<Eigen::VectorXd, Objective>> {
      double t = 1.0;
      for (int h = 0; h <= s.step_halvings_max; ++h, t *= 0.5) {
        Eigen::VectorXd trial = x + t * dir;
        Objective o = obj(trial);
        if (std::isfinite(o.value) && o.value >= cur.value - slack && o.grad.allFinite())
          return std::make_pair(trial, o);
      }
      return std::nullopt;
    };
    std::optional<std::pair<Eigen::VectorXd, Objective>> step;
    if (newton_dir.size()) step = line_search(newton_dir);
    if (!step) {
      // steepest ascent, scaled to a unit step in the max norm
      Eigen::VectorXd g = cur.grad / std::max(1.0, cur.grad.lpNorm<Eigen::Infinity>());
      step = line_search(g);
    }
    if (!step) throw Error(Errc::SingularHessian, "no ascent step found", diag);
    x = step->first;
    cur = step->second;
  }
}

inline Eigen::VectorXd sym_eig_desc(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw Error(Errc::DimensionMismatch, "matrix not square");
  if (!m.allFinite()) throw Error(Errc::NonFiniteInput, "matrix has non-finite entries");
  if (m.size() == 0) return {};
  Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().reverse();
}

// Central differences against an analytic gradient; f returns the value only.
template <class F>
bool grad_check(F&& f, const Eigen::VectorXd& point, const Eigen::VectorXd& analytic,
                double rel_tol) {
  if (!point.allFinite() || !analytic.allFinite())
    throw Error(Errc::NonFiniteInput, "grad_check input not finite");
  if (point.size() != analytic.size()) throw Error(Errc::DimensionMismatch, "gradient size");
  for (Eigen::Index i = 0; i < point.size(); ++i) {
    const double h = 1e-6 * (1 + std::abs(point[i]));
    Eigen::VectorXd p = point, q = point;
    p[i] += h;
    q[i] -= h;
    const double fp = f(p), fq = f(q);
    if (!std::isfinite(fp) || !std::isfinite(fq))
      throw Error(Errc::NonFiniteInput, "objective not finite near point");
    const double fd = (fp - fq) / (2 * h);
    const double err = std::abs(fd - analytic[i]);
    if (err > rel_tol * std::max(std::abs(fd), std::abs(analytic[i])) + 1e-8) return false;
  }
  return true;
}

inline double logit(double p) { return std::log(p / (1 - p)); }
inline double sigmoid(double t) {
  return t >= 0 ? 1 / (1 + std::exp(-t)) : std::exp(t) / (1 + std::exp(t));
}
// log(exp(a) + exp(b))
inline double logaddexp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

}  // namespace etm
