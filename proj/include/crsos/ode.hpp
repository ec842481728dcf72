#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "crsos/errors.hpp"

namespace crsos {

struct OdeOptions {
  double rtol = 1e-8;
  double atol = 1e-10;
  double initial_step = 0.0;  // 0 = choose automatically
  std::int64_t max_steps = 50'000'000;
};

struct OdeStats {
  std::int64_t accepted = 0;
  std::int64_t rejected = 0;
};

/// Advances y from t0 to t1 with the Dormand-Prince 5(4) embedded pair and
/// a standard PI-free step controller. `rhs(t, y, dydt)` fills the
/// derivative. Throws IntegrationError on step-size underflow.
template <class Rhs>
OdeStats integrate_adaptive(Rhs&& rhs, Eigen::VectorXd& y, double t0,
                            double t1, const OdeOptions& opts = {}) {
  using Vec = Eigen::VectorXd;
  const double span = t1 - t0;
  OdeStats stats;
  if (!(span > 0.0)) return stats;

  const auto n = y.size();
  Vec k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), ytmp(n), ynew(n);

  auto scale_norm = [&](const Vec& v, const Vec& a, const Vec& b) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double sc =
          opts.atol + opts.rtol * std::max(std::abs(a[i]), std::abs(b[i]));
      const double q = v[i] / sc;
      acc += q * q;
    }
    return std::sqrt(acc / static_cast<double>(n));
  };

  double t = t0;
  rhs(t, y, k1);

  double h = opts.initial_step;
  if (!(h > 0.0)) {
    const double d0 = scale_norm(y, y, y);
    const double d1 = scale_norm(k1, y, y);
    h = d1 > 1e-30 ? 0.01 * d0 / d1 : span;
    h = std::min(h, span);
    if (!(h > 0.0)) h = span;
  }

  // k1 always holds rhs(t, y): seeded above, refreshed by the
  // first-same-as-last swap on acceptance, untouched on rejection.
  while (t < t1) {
    if (stats.accepted + stats.rejected >= opts.max_steps)
      throw IntegrationError("step budget exhausted");
    h = std::min(h, t1 - t);
    if (h < 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t)))
      throw IntegrationError("step-size underflow");

    ytmp = y + h * (1.0 / 5.0) * k1;
    rhs(t + h / 5.0, ytmp, k2);
    ytmp = y + h * ((3.0 / 40.0) * k1 + (9.0 / 40.0) * k2);
    rhs(t + 3.0 * h / 10.0, ytmp, k3);
    ytmp = y + h * ((44.0 / 45.0) * k1 - (56.0 / 15.0) * k2 + (32.0 / 9.0) * k3);
    rhs(t + 4.0 * h / 5.0, ytmp, k4);
    ytmp = y + h * ((19372.0 / 6561.0) * k1 - (25360.0 / 2187.0) * k2 +
                    (64448.0 / 6561.0) * k3 - (212.0 / 729.0) * k4);
    rhs(t + 8.0 * h / 9.0, ytmp, k5);
    ytmp = y + h * ((9017.0 / 3168.0) * k1 - (355.0 / 33.0) * k2 +
                    (46732.0 / 5247.0) * k3 + (49.0 / 176.0) * k4 -
                    (5103.0 / 18656.0) * k5);
    rhs(t + h, ytmp, k6);
    ynew = y + h * ((35.0 / 384.0) * k1 + (500.0 / 1113.0) * k3 +
                    (125.0 / 192.0) * k4 - (2187.0 / 6784.0) * k5 +
                    (11.0 / 84.0) * k6);
    rhs(t + h, ynew, k7);

    // Difference between the 5th- and embedded 4th-order results.
    ytmp = h * ((71.0 / 57600.0) * k1 - (71.0 / 16695.0) * k3 +
                (71.0 / 1920.0) * k4 - (17253.0 / 339200.0) * k5 +
                (22.0 / 525.0) * k6 - (1.0 / 40.0) * k7);

    const double err = scale_norm(ytmp, y, ynew);
    if (err <= 1.0) {
      t += h;
      y.swap(ynew);
      k1.swap(k7);  // first-same-as-last
      ++stats.accepted;
      const double factor =
          err > 0.0 ? std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0) : 5.0;
      h *= factor;
    } else {
      ++stats.rejected;
      h *= std::clamp(0.9 * std::pow(err, -0.2), 0.2, 1.0);
    }
  }
  return stats;
}

}  // namespace crsos
