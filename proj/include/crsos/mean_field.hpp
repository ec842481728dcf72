#pragma once

#include <Eigen/Dense>
#include <vector>

#include "crsos/lattice.hpp"
#include "crsos/ode.hpp"

namespace crsos {

/// Rates entering the closed one-site evolution: c[i-1] multiplies the i-th
/// gain monomial (climb moves) and d[i-1] the i-th loss monomial (descend
/// moves). Skip and slide moves leave the one-site law unchanged and do not
/// appear. k_max is the default ladder height used when building profiles;
/// the evolution itself always takes its length from the vector it is given.
struct MeanFieldParams {
  double c[4];
  double d[4];
  int k_max = 200;

  static MeanFieldParams unit();
  static MeanFieldParams from_table(const RateTable& rates);
};

/// Point mass at height `at` on a ladder k = 0..k_max.
Eigen::VectorXd delta_profile(int k_max, int at);

/// Normalized geometric profile P_k = (1 - lambda) * lambda^k for
/// k = 0..k_max; lambda must lie in (0, 1).
Eigen::VectorXd geometric_profile(double lambda, int k_max);

/// Time derivative of the one-site height law P (of length k_max + 1,
/// at least 5). The law closes through the bracket
///
///   B_k =  c1 P_k^5          + c2 P_k^4 P_{k+1}
///        + c3 P_{k-1} P_k^4  + c4 P_{k-1} P_k^3 P_{k+1}
///        - d1 P_{k-1} P_k^3 P_{k+1} - d2 P_{k-1} P_k^2 P_{k+1}^2
///        - d3 P_{k-1}^2 P_k^2 P_{k+1} - d4 P_{k-1}^2 P_k P_{k+1}^2
///
/// with P_{-1} = P_{k_max+1} = 0, as dP_k/dt = 2 (B_{k-1} - 2 B_k + B_{k+1})
/// plus the floor corrections +4 (c1 P_0^5 + c2 P_0^4 P_1) at k = 0 and
/// -(c1 P_1^5 + c2 P_1^4 P_2) at k = 1. The closure is not conservative at
/// the floor, so total mass can drift; the drift is reported downstream,
/// never silently corrected.
Eigen::VectorXd mf_rhs(const Eigen::VectorXd& P, const MeanFieldParams& prm);

/// The law at one requested sample time, with its health numbers.
struct MeanFieldSample {
  double time = 0.0;
  Eigen::VectorXd P;
  double mass = 0.0;       // sum of entries
  double drift = 0.0;      // |mass - 1|
  double min_entry = 0.0;
};

/// Integrates mf_rhs from P0, reporting the law at each sample time
/// (nondecreasing, nonnegative). Entries a hair below zero are an expected
/// discretization artifact and are only reported; anything below -1e-6
/// raises NegativityError.
std::vector<MeanFieldSample> mf_evolve(const Eigen::VectorXd& P0,
                                       const MeanFieldParams& prm,
                                       const std::vector<double>& sample_times,
                                       const OdeOptions& opts = {});

/// q2 x^2 + q1 x + q0.
struct QuadraticTriple {
  double q2, q1, q0;
  double eval(double x) const { return (q2 * x + q1) * x + q0; }
  bool operator==(const QuadraticTriple&) const = default;
};

/// Substituting the geometric profile into the bracket factors every
/// monomial into (1-lambda)^5 lambda^(5k) times a power of lambda, so a
/// geometric law is stationary in the bulk exactly where the collected
/// polynomial vanishes. Collecting the monomials gives `collected`;
/// `negated_linear` is the same triple with the linear coefficient negated,
/// the other convention in circulation for this model. Both are first-class
/// outputs so the residual check can say which one the dynamics obeys.
struct StationaryQuadratic {
  QuadraticTriple collected;       // (c2-d2, (c1-d1)+(c4-d4), c3-d3)
  QuadraticTriple negated_linear;  // linear coefficient negated
};

StationaryQuadratic stationary_quadratic(const MeanFieldParams& prm);

enum class RootPhase { none, one, two };

/// Moments of the normalized geometric law (1 - lambda) lambda^k:
/// mean = lambda/(1-lambda), variance = lambda/(1-lambda)^2, and width,
/// the standard deviation sqrt(lambda)/(1-lambda). Requires lambda in
/// (0, 1).
struct GeometricStats {
  double mean;
  double width;
  double variance;
};

GeometricStats geometric_stats(double lambda);

/// Everything solve_lambda can say about one coefficient triple. Real roots
/// keep multiplicity and ascend; roots_in_unit are those strictly inside
/// (0, 1), each paired with the moments of its geometric law. `lambda` is
/// the root when the phase is `one`; with zero or two interior roots no
/// preference is imposed and it is NaN. The *_signs flags evaluate the
/// circulated sign conditions, q0 f(1) < 0 for one interior root and
/// q0/q2 < 0 with f(1)/q2 < 0 for two; they are diagnostics, never inputs
/// to the classification.
struct StationaryAnalysis {
  QuadraticTriple coeffs{0.0, 0.0, 0.0};
  double discriminant = 0.0;
  std::vector<double> roots;
  std::vector<double> roots_in_unit;
  RootPhase phase = RootPhase::none;
  double lambda = 0.0;
  std::vector<GeometricStats> stats;
  bool one_root_signs = false;
  bool two_root_signs = false;
};

StationaryAnalysis solve_lambda(const QuadraticTriple& q);

/// How far the geometric law with ratio `lambda` in (0, 1) is from bulk
/// stationarity: the bracket evaluated numerically on the profile at an
/// interior height, divided by (1-lambda)^5 lambda^(5k). The quotient
/// G(lambda) is independent of the height chosen; |G| vanishes exactly at
/// stationary ratios.
double bulk_residual(const MeanFieldParams& prm, double lambda);

}  // namespace crsos
