#pragma once

#include "etm/numerics.hpp"

#include <algorithm>
#include <string>
#include <vector>

namespace etm {

enum class Design { RandomSampling, OutcomeStratified };
enum class Case { Logistic, M1, M2, M3, M4 };

inline const char* case_name(Case c) {
  switch (c) {
    case Case::Logistic: return "logistic";
    case Case::M1: return "m1";
    case Case::M2: return "m2";
    case Case::M3: return "m3";
    case Case::M4: return "m4";
  }
  return "?";
}

inline Case parse_case(const std::string& s) {
  if (s == "logistic") return Case::Logistic;
  if (s == "m1") return Case::M1;
  if (s == "m2") return Case::M2;
  if (s == "m3") return Case::M3;
  if (s == "m4") return Case::M4;
  throw Error(Errc::InvalidArgument, "unknown case '" + s + "'");
}

inline const char* design_name(Design d) {
  return d == Design::RandomSampling ? "rs" : "oss";
}

inline Design parse_design(const std::string& s) {
  if (s == "rs") return Design::RandomSampling;
  if (s == "oss") return Design::OutcomeStratified;
  throw Error(Errc::InvalidArgument, "unknown design '" + s + "'");
}

constexpr double kEtaClamp = 700.0;

inline Eigen::MatrixXd augment(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd z(x.rows(), x.cols() + 1);
  z.col(0).setOnes();
  z.rightCols(x.cols()) = x;
  return z;
}

// Rows are stored as z = (1, x'); the intercept column is added once here.
struct Dataset {
  Eigen::MatrixXd labeled_z;
  Eigen::VectorXd labeled_y;
  Eigen::MatrixXd unlabeled_z;
  Design design = Design::RandomSampling;

  static Dataset from_x(const Eigen::MatrixXd& lx, const Eigen::VectorXd& y,
                        const Eigen::MatrixXd& ux, Design design) {
    if (lx.rows() != y.size()) throw Error(Errc::DimensionMismatch, "labels vs rows");
    if (ux.rows() > 0 && ux.cols() != lx.cols())
      throw Error(Errc::DimensionMismatch, "unlabeled column count");
    Dataset ds;
    ds.design = design;
    ds.labeled_z = augment(lx);
    ds.labeled_y = y;
    ds.unlabeled_z = ux.rows() > 0 ? augment(ux) : Eigen::MatrixXd(0, lx.cols() + 1);
    if (design == Design::OutcomeStratified) ds.sort_strata();
    ds.validate();
    return ds;
  }

  int n() const { return static_cast<int>(labeled_z.rows()); }
  int n1() const { return static_cast<int>(labeled_y.sum()); }
  int n0() const { return n() - n1(); }
  int n2() const { return static_cast<int>(unlabeled_z.rows()); }
  int N() const { return n() + n2(); }
  int d() const { return static_cast<int>(labeled_z.cols()) - 1; }
  double ybar() const { return labeled_y.mean(); }

  Eigen::MatrixXd all_z() const {
    Eigen::MatrixXd z(N(), labeled_z.cols());
    z.topRows(n()) = labeled_z;
    if (n2() > 0) z.bottomRows(n2()) = unlabeled_z;
    return z;
  }

  void validate() const {
    if (n() < 1 || d() < 1) throw Error(Errc::InvalidArgument, "dataset needs n>=1 and d>=1");
    if (unlabeled_z.cols() != labeled_z.cols())
      throw Error(Errc::DimensionMismatch, "unlabeled column count");
    if (!labeled_z.allFinite() || !unlabeled_z.allFinite() || !labeled_y.allFinite())
      throw Error(Errc::NonFiniteInput, "dataset has non-finite entries");
    for (Eigen::Index i = 0; i < labeled_y.size(); ++i)
      if (labeled_y[i] != 0.0 && labeled_y[i] != 1.0)
        throw Error(Errc::InvalidArgument, "labels must be 0 or 1");
    if (design == Design::OutcomeStratified)
      for (Eigen::Index i = 1; i < labeled_y.size(); ++i)
        if (labeled_y[i] < labeled_y[i - 1])
          throw Error(Errc::InvalidArgument, "OSS labels must be zeros then ones");
  }

 private:
  void sort_strata() {
    std::vector<Eigen::Index> idx(labeled_y.size());
    for (Eigen::Index i = 0; i < labeled_y.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return labeled_y[a] < labeled_y[b]; });
    Eigen::MatrixXd z(labeled_z.rows(), labeled_z.cols());
    Eigen::VectorXd y(labeled_y.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      z.row(i) = labeled_z.row(idx[i]);
      y[i] = labeled_y[idx[i]];
    }
    labeled_z = std::move(z);
    labeled_y = std::move(y);
  }
};

struct TiltParams {
  double beta0 = 0;
  Eigen::VectorXd beta1;

  Eigen::VectorXd vec() const {
    Eigen::VectorXd v(beta1.size() + 1);
    v[0] = beta0;
    v.tail(beta1.size()) = beta1;
    return v;
  }
  static TiltParams from_vec(const Eigen::VectorXd& v) {
    return {v[0], v.tail(v.size() - 1)};
  }
};

struct ConditionalParams {
  double beta0c = 0;
  Eigen::VectorXd beta1c;

  Eigen::VectorXd vec() const {
    Eigen::VectorXd v(beta1c.size() + 1);
    v[0] = beta0c;
    v.tail(beta1c.size()) = beta1c;
    return v;
  }
  static ConditionalParams from_vec(const Eigen::VectorXd& v) {
    return {v[0], v.tail(v.size() - 1)};
  }
};

struct EtmEstimate {
  Case case_ = Case::Logistic;
  TiltParams tilt;
  ConditionalParams conditional;
  std::optional<double> rho_ell;
  std::optional<double> rho_u;
  std::optional<double> alpha;
  SolveDiagnostics diagnostics;
  std::vector<std::string> warnings;
};

struct G0Weights {
  Eigen::VectorXd weights;
};

inline void check_prob(double p, Errc code, const char* what) {
  if (!(p > 0 && p < 1)) throw Error(code, std::string(what) + " must lie in (0,1)");
}

// z'beta with the overflow clamp; throws when the clamp is hit.
inline Eigen::VectorXd linear_predictor(const Eigen::MatrixXd& z, const Eigen::VectorXd& beta) {
  if (z.cols() != beta.size()) throw Error(Errc::DimensionMismatch, "z vs beta");
  Eigen::VectorXd eta = z * beta;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    if (std::isnan(eta[i])) throw Error(Errc::NonFiniteInput, "linear predictor is NaN");
    if (std::abs(eta[i]) > kEtaClamp)
      throw Error(Errc::OverflowGuardTripped, "linear predictor beyond clamp");
  }
  return eta;
}

inline double tilt_weight(const Eigen::VectorXd& x, const TiltParams& p) {
  if (x.size() != p.beta1.size()) throw Error(Errc::DimensionMismatch, "x vs beta1");
  const double eta = p.beta0 + x.dot(p.beta1);
  return std::exp(std::clamp(eta, -kEtaClamp, kEtaClamp));
}

inline ConditionalParams to_conditional(const TiltParams& p, double rho) {
  check_prob(rho, Errc::RhoOutOfRange, "rho");
  return {p.beta0 + logit(rho), p.beta1};
}

inline TiltParams from_conditional(const ConditionalParams& c, double rho) {
  check_prob(rho, Errc::RhoOutOfRange, "rho");
  return {c.beta0c - logit(rho), c.beta1c};
}

inline double posterior_prob(const Eigen::VectorXd& x, const ConditionalParams& c) {
  if (x.size() != c.beta1c.size()) throw Error(Errc::DimensionMismatch, "x vs beta1c");
  return sigmoid(c.beta0c + x.dot(c.beta1c));
}

inline G0Weights g0_weights(const Eigen::MatrixXd& all_z, const TiltParams& p, double alpha) {
  check_prob(alpha, Errc::AlphaOutOfRange, "alpha");
  const Eigen::VectorXd e = linear_predictor(all_z, p.vec()).array().exp();
  const double N = static_cast<double>(all_z.rows());
  G0Weights w;
  w.weights = (N * (1 - alpha + alpha * e.array())).inverse();
  const double s0 = w.weights.sum(), s1 = w.weights.dot(e);
  if (std::abs(s0 - 1) > 1e-6 || std::abs(s1 - 1) > 1e-6)
    throw Error(Errc::NormalizationViolated, "G0 weights do not normalize; stale alpha");
  return w;
}

inline double bayes_boundary(const TiltParams& p, double rho0, const Eigen::VectorXd& x0) {
  check_prob(rho0, Errc::RhoOutOfRange, "rho0");
  if (x0.size() != p.beta1.size()) throw Error(Errc::DimensionMismatch, "x0 vs beta1");
  return p.beta0 + logit(rho0) + x0.dot(p.beta1);
}

}  // namespace etm
