#include "crsos/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace crsos {

namespace {

void check_profile_params(const SelfSimilarParams& prm) {
  if (!(prm.A > 0.0))
    throw std::domain_error("diffusion coefficient A must be positive");
  if (!(prm.C1 > 0.0))
    throw std::domain_error("profile constant C1 must be positive");
  if (prm.C0 != 0.0)
    throw std::invalid_argument(
        "only the symmetric profile branch (C0 = 0) has closed form");
}

double adaptive_simpson(double (*g)(double), double a, double b, double fa,
                        double fm, double fb, double whole, double tol,
                        int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = g(lm);
  const double frm = g(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol)
    return left + right + delta / 15.0;
  return adaptive_simpson(g, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson(g, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

double integrate(double (*g)(double), double a, double b, double tol) {
  const double fa = g(a);
  const double fb = g(b);
  const double fm = g(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return adaptive_simpson(g, a, b, fa, fm, fb, whole, tol, 48);
}

}  // namespace

double continuum_coefficient_A(const MeanFieldParams& prm) {
  double sum = 0.0;
  for (int i = 0; i < 4; ++i) sum += prm.c[i] - prm.d[i];
  return 2.0 * sum;
}

PowerLawFit fit_exponent(const std::vector<double>& x,
                         const std::vector<double>& y) {
  if (x.size() != y.size())
    throw std::invalid_argument("coordinate lists differ in length");
  if (x.size() < 5)
    throw std::invalid_argument("power-law fit needs at least 5 points");
  const auto n = static_cast<double>(x.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  std::vector<double> lx(x.size()), ly(y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0))
      throw std::invalid_argument("power-law fit needs positive data");
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
    sx += lx[i];
    sy += ly[i];
    sxx += lx[i] * lx[i];
    sxy += lx[i] * ly[i];
  }
  const double denom = n * sxx - sx * sx;
  if (denom == 0.0)
    throw std::invalid_argument("power-law fit needs distinct abscissae");
  PowerLawFit fit;
  fit.exponent = (n * sxy - sx * sy) / denom;
  fit.log_prefactor = (sy - fit.exponent * sx) / n;
  double ss_res = 0.0, ss_tot = 0.0;
  const double mean_ly = sy / n;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double fitted = fit.exponent * lx[i] + fit.log_prefactor;
    ss_res += (ly[i] - fitted) * (ly[i] - fitted);
    ss_tot += (ly[i] - mean_ly) * (ly[i] - mean_ly);
  }
  fit.r_squared = ss_tot == 0.0 ? 1.0 : 1.0 - ss_res / ss_tot;
  return fit;
}

OrderEstimate continuum_order_check(const MeanFieldParams& prm,
                                    const std::vector<double>& epsilons) {
  const double A = continuum_coefficient_A(prm);
  if (A == 0.0)
    throw std::invalid_argument("continuum check needs a nonzero coefficient");
  OrderEstimate est;
  std::vector<double> eps_list, dev_list;
  for (double eps : epsilons) {
    if (!(eps > 0.0 && eps < 0.5))
      throw std::invalid_argument("lattice spacing must lie in (0, 0.5)");
    const int k_max = static_cast<int>(std::lround(3.0 / eps));
    Eigen::VectorXd P(k_max + 1);
    for (int k = 0; k <= k_max; ++k) P[k] = std::exp(-(eps * k) * (eps * k));
    const Eigen::VectorXd rhs = mf_rhs(P, prm);
    // d^2/dl^2 of exp(-l^2)^5 in closed form; floor corrections reach
    // k <= 2, the top of the ladder is already ~1e-20.
    double num = 0.0, den = 0.0;
    for (int k = 3; k <= k_max - 2; ++k) {
      const double l = eps * k;
      const double pred =
          eps * eps * A * (100.0 * l * l - 10.0) * std::exp(-5.0 * l * l);
      num = std::max(num, std::abs(rhs[k] - pred));
      den = std::max(den, std::abs(pred));
    }
    est.points.push_back({eps, num / den});
    eps_list.push_back(eps);
    dev_list.push_back(num / den);
  }
  est.order = fit_exponent(eps_list, dev_list).exponent;
  return est;
}

double support_edge(const SelfSimilarParams& prm) {
  check_profile_params(prm);
  return std::sqrt(15.0 * prm.A * prm.C1);
}

double barenblatt_f(const SelfSimilarParams& prm, double x) {
  check_profile_params(prm);
  const double quartic = prm.C1 - x * x / (15.0 * prm.A);
  return quartic > 0.0 ? std::pow(quartic, 0.25) : 0.0;
}

double normalize_C1(double A) {
  if (!(A > 0.0))
    throw std::domain_error("diffusion coefficient A must be positive");
  // shape = integral of (1 - u^2)^(1/4) over [-1, 1], taken through
  // u = sin(theta) so the integrand cos(theta)^(3/2) stays mild at the ends.
  static const double shape = 2.0 * integrate(
      [](double theta) { return std::pow(std::cos(theta), 1.5); }, 0.0,
      M_PI / 2.0, 1e-13);
  return std::pow(std::sqrt(15.0 * A) * shape, -4.0 / 3.0);
}

OdeResidualSample similarity_ode_residual_at(const SelfSimilarParams& prm,
                                             double x, double fd_step) {
  if (!(std::abs(x) < support_edge(prm)))
    throw std::domain_error("sample point outside the profile support");
  OdeResidualSample sample;
  sample.x = x;
  const double f = barenblatt_f(prm, x);
  const double quartic = prm.C1 - x * x / (15.0 * prm.A);
  // (f^5)' by the chain rule on the quartic-root form.
  const double dfifth =
      1.25 * std::pow(quartic, 0.25) * (-2.0 * x / (15.0 * prm.A));
  sample.analytic = prm.gamma * x * f + prm.A * dfifth - prm.C0;
  const auto fifth = [&prm](double u) {
    const double v = barenblatt_f(prm, u);
    return v * v * v * v * v;
  };
  const double fd = (fifth(x + fd_step) - fifth(x - fd_step)) / (2.0 * fd_step);
  sample.finite_diff = prm.gamma * x * f + prm.A * fd - prm.C0;
  return sample;
}

OdeResidualReport similarity_ode_residual(const SelfSimilarParams& prm,
                                          const std::vector<double>& xs,
                                          double fd_step) {
  OdeResidualReport report;
  for (double x : xs) {
    const OdeResidualSample sample = similarity_ode_residual_at(prm, x, fd_step);
    report.max_analytic = std::max(report.max_analytic,
                                   std::abs(sample.analytic));
    report.max_finite_diff = std::max(report.max_finite_diff,
                                      std::abs(sample.finite_diff));
  }
  return report;
}

double self_similar_P(const SelfSimilarParams& prm, double l, double s) {
  if (!(s > 0.0)) throw std::domain_error("similarity time must be positive");
  const double scale = std::pow(s, -prm.gamma);
  return scale * barenblatt_f(prm, l * scale);
}

double pk_t(const SelfSimilarParams& prm, double k, double t) {
  check_profile_params(prm);
  if (!(t > 0.0)) throw std::domain_error("time must be positive");
  const double s = prm.epsilon * prm.epsilon * t;
  const double l = prm.epsilon * k;
  const double quartic =
      prm.C1 * std::pow(s, -4.0 * prm.gamma) -
      l * l * std::pow(s, -6.0 * prm.gamma) / (15.0 * prm.A);
  return quartic > 0.0 ? std::pow(quartic, 0.25) : 0.0;
}

double pde_residual(const SelfSimilarParams& prm, double l, double s,
                    double h_l, double h_s) {
  check_profile_params(prm);
  if (!(s - h_s > 0.0))
    throw std::domain_error("time stencil leaves the positive axis");
  const double tightest =
      support_edge(prm) * std::pow(s - h_s, prm.gamma);
  if (!(std::abs(l) + h_l < tightest))
    throw std::domain_error("stencil touches the support boundary");
  return pde_residual_of(
      [&prm](double ll, double ss) { return self_similar_P(prm, ll, ss); },
      prm.A, l, s, h_l, h_s);
}

double pde_residual(const SelfSimilarParams& prm,
                    const std::vector<double>& ls,
                    const std::vector<double>& ss, double h_l, double h_s) {
  double worst = 0.0;
  for (double s : ss)
    for (double l : ls)
      worst = std::max(worst, std::abs(pde_residual(prm, l, s, h_l, h_s)));
  return worst;
}

MomentScalingReport moment_scaling_report(const SelfSimilarParams& prm,
                                          const std::vector<double>& times,
                                          SupportMode mode) {
  check_profile_params(prm);
  MomentScalingReport report;
  report.support = mode;
  report.times = times;
  for (double t : times) {
    if (!(t > 0.0)) throw std::domain_error("times must be positive");
    const double s = prm.epsilon * prm.epsilon * t;
    const double k_edge =
        support_edge(prm) * std::pow(s, prm.gamma) / prm.epsilon;
    const long k_hi = std::lround(std::ceil(k_edge)) + 2;
    const long k_lo = mode == SupportMode::nonnegative ? 0 : -k_hi;
    double mass = 0.0, first_abs = 0.0, first = 0.0, second = 0.0;
    for (long k = k_lo; k <= k_hi; ++k) {
      const double p = pk_t(prm, static_cast<double>(k), t);
      mass += p;
      first_abs += std::abs(static_cast<double>(k)) * p;
      first += static_cast<double>(k) * p;
      second += static_cast<double>(k) * static_cast<double>(k) * p;
    }
    const double mean = first / mass;
    report.abs_mean.push_back(first_abs / mass);
    report.variance.push_back(second / mass - mean * mean);
  }
  report.abs_mean_fit = fit_exponent(report.times, report.abs_mean);
  report.variance_fit = fit_exponent(report.times, report.variance);
  return report;
}

}  // namespace crsos
