#include "crsos/mean_field.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "crsos/errors.hpp"

namespace crsos {

namespace {

// One bracket monomial: sign and exponents of P_{k-1}, P_k, P_{k+1}.
struct BracketTerm {
  bool gain;
  int index;  // into c[] or d[]
  int e_prev, e_here, e_next;
};

constexpr BracketTerm kBracket[8] = {
    {true, 0, 0, 5, 0},  {true, 1, 0, 4, 1},  {true, 2, 1, 4, 0},
    {true, 3, 1, 3, 1},  {false, 0, 1, 3, 1}, {false, 1, 1, 2, 2},
    {false, 2, 2, 2, 1}, {false, 3, 2, 1, 2},
};

double ipow(double x, int e) {
  double out = 1.0;
  for (int i = 0; i < e; ++i) out *= x;
  return out;
}

double bracket_at(const MeanFieldParams& prm, double prev, double here,
                  double next) {
  double b = 0.0;
  for (const BracketTerm& t : kBracket) {
    const double rate = t.gain ? prm.c[t.index] : prm.d[t.index];
    const double monomial = rate * ipow(prev, t.e_prev) *
                            ipow(here, t.e_here) * ipow(next, t.e_next);
    b += t.gain ? monomial : -monomial;
  }
  return b;
}

}  // namespace

MeanFieldParams MeanFieldParams::unit() {
  MeanFieldParams prm;
  for (int i = 0; i < 4; ++i) prm.c[i] = prm.d[i] = 1.0;
  return prm;
}

MeanFieldParams MeanFieldParams::from_table(const RateTable& rates) {
  MeanFieldParams prm;
  for (int i = 0; i < 4; ++i) {
    prm.c[i] = rates.climb(i + 1);
    prm.d[i] = rates.descend(i + 1);
  }
  return prm;
}

Eigen::VectorXd delta_profile(int k_max, int at) {
  if (k_max < 4) throw std::invalid_argument("ladder needs k_max >= 4");
  if (at < 0 || at > k_max)
    throw std::invalid_argument("delta height outside the ladder");
  Eigen::VectorXd P = Eigen::VectorXd::Zero(k_max + 1);
  P[at] = 1.0;
  return P;
}

Eigen::VectorXd geometric_profile(double lambda, int k_max) {
  if (!(lambda > 0.0 && lambda < 1.0))
    throw std::domain_error("geometric ratio must lie in (0, 1)");
  if (k_max < 4) throw std::invalid_argument("ladder needs k_max >= 4");
  Eigen::VectorXd P(k_max + 1);
  double term = 1.0 - lambda;
  for (int k = 0; k <= k_max; ++k, term *= lambda) P[k] = term;
  return P;
}

Eigen::VectorXd mf_rhs(const Eigen::VectorXd& P, const MeanFieldParams& prm) {
  const Eigen::Index size = P.size();
  if (size < 5) throw std::invalid_argument("ladder needs at least 5 levels");
  const auto at = [&P, size](Eigen::Index k) {
    return (k < 0 || k >= size) ? 0.0 : P[k];
  };
  Eigen::VectorXd B(size);
  for (Eigen::Index k = 0; k < size; ++k)
    B[k] = bracket_at(prm, at(k - 1), P[k], at(k + 1));
  const auto b_at = [&B, size](Eigen::Index k) {
    return (k < 0 || k >= size) ? 0.0 : B[k];
  };
  Eigen::VectorXd rhs(size);
  for (Eigen::Index k = 0; k < size; ++k)
    rhs[k] = 2.0 * (b_at(k - 1) - 2.0 * B[k] + b_at(k + 1));
  rhs[0] += 4.0 * (prm.c[0] * ipow(P[0], 5) + prm.c[1] * ipow(P[0], 4) * P[1]);
  rhs[1] -= prm.c[0] * ipow(P[1], 5) + prm.c[1] * ipow(P[1], 4) * P[2];
  return rhs;
}

std::vector<MeanFieldSample> mf_evolve(const Eigen::VectorXd& P0,
                                       const MeanFieldParams& prm,
                                       const std::vector<double>& sample_times,
                                       const OdeOptions& opts) {
  if (!std::is_sorted(sample_times.begin(), sample_times.end()))
    throw std::invalid_argument("sample times must be nondecreasing");
  if (!sample_times.empty() && sample_times.front() < 0.0)
    throw std::invalid_argument("sample times must be nonnegative");
  const auto rhs = [&prm](double, const Eigen::VectorXd& y,
                          Eigen::VectorXd& dydt) { dydt = mf_rhs(y, prm); };
  std::vector<MeanFieldSample> out;
  out.reserve(sample_times.size());
  Eigen::VectorXd P = P0;
  double now = 0.0;
  for (double t : sample_times) {
    if (t > now) integrate_adaptive(rhs, P, now, t, opts);
    now = t;
    MeanFieldSample sample;
    sample.time = t;
    sample.P = P;
    sample.mass = P.sum();
    sample.drift = std::abs(sample.mass - 1.0);
    sample.min_entry = P.minCoeff();
    if (sample.min_entry < -1e-6)
      throw NegativityError("one-site law dropped below the negativity floor");
    out.push_back(std::move(sample));
  }
  return out;
}

StationaryQuadratic stationary_quadratic(const MeanFieldParams& prm) {
  const double q2 = prm.c[1] - prm.d[1];
  const double q1 = (prm.c[0] - prm.d[0]) + (prm.c[3] - prm.d[3]);
  const double q0 = prm.c[2] - prm.d[2];
  return {{q2, q1, q0}, {q2, -q1, q0}};
}

GeometricStats geometric_stats(double lambda) {
  if (!(lambda > 0.0 && lambda < 1.0))
    throw std::domain_error("geometric ratio must lie in (0, 1)");
  const double gap = 1.0 - lambda;
  return {lambda / gap, std::sqrt(lambda) / gap, lambda / (gap * gap)};
}

StationaryAnalysis solve_lambda(const QuadraticTriple& q) {
  StationaryAnalysis sol;
  sol.coeffs = q;
  sol.lambda = std::numeric_limits<double>::quiet_NaN();
  if (q.q2 != 0.0) {
    sol.discriminant = q.q1 * q.q1 - 4.0 * q.q2 * q.q0;
    sol.one_root_signs = q.q0 * q.eval(1.0) < 0.0;
    sol.two_root_signs = (q.q0 / q.q2 < 0.0) && (q.eval(1.0) / q.q2 < 0.0);
    if (sol.discriminant >= 0.0) {
      // Pair the subtraction-free numerator with its cofactor so neither
      // root loses digits to cancellation.
      const double s = std::sqrt(sol.discriminant);
      const double num = -0.5 * (q.q1 + std::copysign(s, q.q1));
      const double r1 = num / q.q2;
      if (sol.discriminant == 0.0) {
        sol.roots = {r1, r1};
      } else {
        // num = -(q1 + sign(q1) s)/2 cannot vanish when the discriminant
        // is positive, so the cofactor root is always well defined.
        sol.roots = {r1, q.q0 / num};
      }
    }
  } else if (q.q1 != 0.0) {
    sol.one_root_signs = q.q0 * q.eval(1.0) < 0.0;
    sol.roots = {-q.q0 / q.q1};
  }
  std::sort(sol.roots.begin(), sol.roots.end());
  for (double r : sol.roots)
    if (r > 0.0 && r < 1.0) sol.roots_in_unit.push_back(r);
  // A tangent (double) interior root counts once.
  sol.roots_in_unit.erase(
      std::unique(sol.roots_in_unit.begin(), sol.roots_in_unit.end()),
      sol.roots_in_unit.end());
  for (double r : sol.roots_in_unit) sol.stats.push_back(geometric_stats(r));
  sol.phase = sol.roots_in_unit.empty()
                  ? RootPhase::none
                  : (sol.roots_in_unit.size() == 1 ? RootPhase::one
                                                   : RootPhase::two);
  if (sol.phase == RootPhase::one) sol.lambda = sol.roots_in_unit.front();
  return sol;
}

double bulk_residual(const MeanFieldParams& prm, double lambda) {
  if (!(lambda > 0.0 && lambda < 1.0))
    throw std::domain_error("geometric ratio must lie in (0, 1)");
  // Bracket at height k = 3 on the geometric law, against its exact
  // factor (1-lambda)^5 lambda^(5k).
  const double gap = 1.0 - lambda;
  const double p2 = gap * ipow(lambda, 2);
  const double p3 = gap * ipow(lambda, 3);
  const double p4 = gap * ipow(lambda, 4);
  const double scale = ipow(gap, 5) * ipow(lambda, 15);
  return std::abs(bracket_at(prm, p2, p3, p4) / scale);
}

}  // namespace crsos
