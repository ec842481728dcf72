#pragma once

#include <vector>

#include "crsos/mean_field.hpp"

namespace crsos {

/// Continuum description of the one-site law: P_k(t) = p(epsilon k,
/// epsilon^2 t) with a slowly varying profile p(l, s) obeying
/// dp/ds = A d^2(p^5)/dl^2. gamma is the similarity exponent of the
/// source solution (1/6 matches the equation; other values are accepted so
/// the mismatch can be measured). C0 is the integration constant of the
/// once-integrated profile equation; only the symmetric branch C0 = 0 has
/// the closed quartic-root profile, so nonzero values are rejected.
struct SelfSimilarParams {
  double A = 1.0;
  double C1 = 1.0;
  double epsilon = 0.01;
  double gamma = 1.0 / 6.0;
  double C0 = 0.0;
};

/// Diffusion coefficient of the continuum limit: collecting every bracket
/// monomial to leading order gives A = 2 * sum_i (c_i - d_i). Trust it only
/// together with continuum_order_check, which validates the collection
/// against the lattice derivative numerically.
double continuum_coefficient_A(const MeanFieldParams& prm);

/// Least-squares power law y ~ exp(log_prefactor) * x^exponent in log-log
/// space. Needs at least 5 points, all coordinates positive.
struct PowerLawFit {
  double exponent;
  double log_prefactor;
  double r_squared;
};

PowerLawFit fit_exponent(const std::vector<double>& x,
                         const std::vector<double>& y);

/// Sup-norm deviation between the lattice derivative and its continuum
/// prediction on a smooth profile, at one lattice spacing.
struct RefinementPoint {
  double epsilon;
  double deviation;
};

/// Samples exp(-l^2) on ladders of decreasing spacing and compares mf_rhs
/// against epsilon^2 A (d^2/dl^2)(profile^5). The fitted decay order of the
/// deviation is ~2 when c2 - c3 = d2 - d3 (the first correction cancels)
/// and ~1 otherwise. Requires A != 0 and at least 5 spacings.
struct OrderEstimate {
  double order;
  std::vector<RefinementPoint> points;
};

OrderEstimate continuum_order_check(const MeanFieldParams& prm,
                                    const std::vector<double>& epsilons);

/// Half-width of the profile support, sqrt(15 A C1).
double support_edge(const SelfSimilarParams& prm);

/// Source profile of dp/ds = A d^2(p^5)/dl^2, the m = 5 porous-medium
/// form: f(x) = (C1 - x^2 / (15 A))^(1/4) inside the support, 0 outside.
/// Requires A > 0 and C1 > 0.
double barenblatt_f(const SelfSimilarParams& prm, double x);

/// C1 making the profile integrate to one. The shape integral of
/// (1 - u^2)^(1/4) over [-1, 1] is computed by adaptive quadrature, then
/// C1 = (sqrt(15 A) * shape)^(-4/3).
double normalize_C1(double A);

/// Residual of the once-integrated profile equation
/// gamma x f + A (f^5)' - C0 at one point, with the derivative taken in
/// closed form and, as a cross-check, by central difference with step
/// fd_step. Zero (to roundoff) exactly at gamma = 1/6; off-exponent values
/// leave x f (gamma - 1/6).
struct OdeResidualSample {
  double x;
  double analytic;
  double finite_diff;
};

OdeResidualSample similarity_ode_residual_at(const SelfSimilarParams& prm,
                                             double x, double fd_step = 1e-6);

/// Max |residual| over sample points, which must lie strictly inside the
/// support. The finite-difference maximum is reported separately; it
/// carries the O(fd_step^2) truncation error and degrades within ~sqrt(h)
/// of the support edge, where the fifth power loses smoothness.
struct OdeResidualReport {
  double max_analytic = 0.0;
  double max_finite_diff = 0.0;
};

OdeResidualReport similarity_ode_residual(const SelfSimilarParams& prm,
                                          const std::vector<double>& xs,
                                          double fd_step = 1e-6);

/// Spreading solution p(l, s) = s^-gamma f(l s^-gamma); s must be positive.
double self_similar_P(const SelfSimilarParams& prm, double l, double s);

/// The same solution read on the lattice, P_k(t) = p(epsilon k,
/// epsilon^2 t), evaluated through the quartic root directly:
/// (C1 s^-4g - (epsilon k)^2 s^-6g / (15 A))^(1/4) with s = epsilon^2 t.
/// A genuinely different arithmetic route than self_similar_P, so the two
/// cross-validate each other to roundoff.
double pk_t(const SelfSimilarParams& prm, double k, double t);

/// Central-difference residual dp/ds - A d^2(p^5)/dl^2 of an arbitrary
/// profile at (l, s); shrinks as the square of the steps on a true
/// solution.
template <class Profile>
double pde_residual_of(Profile&& profile, double A, double l, double s,
                       double h_l, double h_s) {
  const double dt = (profile(l, s + h_s) - profile(l, s - h_s)) / (2.0 * h_s);
  const auto fifth = [&profile, s](double x) {
    const double v = profile(x, s);
    return v * v * v * v * v;
  };
  const double dll =
      (fifth(l - h_l) - 2.0 * fifth(l) + fifth(l + h_l)) / (h_l * h_l);
  return dt - A * dll;
}

/// pde_residual_of on the closed-form solution at one point. Stencils must
/// stay strictly inside the support at every probed time (one-sided
/// stencils are not supported), else a domain error.
double pde_residual(const SelfSimilarParams& prm, double l, double s,
                    double h_l, double h_s);

/// Max |pde_residual| over the tensor grid ls x ss.
double pde_residual(const SelfSimilarParams& prm,
                    const std::vector<double>& ls,
                    const std::vector<double>& ss, double h_l, double h_s);

/// Whether lattice moments run over k >= 0 only (heights) or the whole
/// symmetric support.
enum class SupportMode { nonnegative, symmetric };

/// Moments of the normalized lattice law pk_t(., t) at each time: the first
/// absolute moment E|k| and the variance about the mean, with power-law
/// fits. On the spreading solution both follow clean power laws,
/// E|k| ~ t^(1/6) and variance ~ t^(1/3).
struct MomentScalingReport {
  std::vector<double> times;
  std::vector<double> abs_mean;
  std::vector<double> variance;
  PowerLawFit abs_mean_fit;
  PowerLawFit variance_fit;
  SupportMode support = SupportMode::nonnegative;
};

MomentScalingReport moment_scaling_report(const SelfSimilarParams& prm,
                                          const std::vector<double>& times,
                                          SupportMode mode);

}  // namespace crsos
