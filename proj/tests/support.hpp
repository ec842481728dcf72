#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "crsos/kmc.hpp"
#include "crsos/lattice.hpp"
#include "crsos/rng.hpp"

// Reference implementations the tests check the library against. Everything
// here is written the slow, obvious way on purpose.
namespace testsupport {

/// Every composition of K into n nonnegative parts that passes
/// crsos::is_restricted, found by exhaustive recursion.
std::vector<crsos::Heights> brute_force_configs(int n, int K);

/// Dense generator assembled entry by entry from the move catalog:
/// G(i, j) += rate for each listed move i -> j, diagonal balancing the row.
Eigen::MatrixXd dense_generator(const crsos::StateSpace& space,
                                const crsos::RateTable& rates);

/// exp(G^T t) p0 by uniformization: with L >= max |G_ii| the matrix
/// U = I + G / L is substochastic-free, and the propagator is the Poisson
/// mixture sum_m e^{-Lt} (Lt)^m / m! U^m. Terms are added until the
/// cumulative Poisson weight reaches 1 - 1e-14.
Eigen::VectorXd uniformization(const Eigen::MatrixXd& gen,
                               const Eigen::VectorXd& p0, double t);

/// Classic fixed-step fourth order Runge-Kutta; rhs(t, y) returns dy/dt.
template <class Rhs>
Eigen::VectorXd rk4(Rhs&& rhs, Eigen::VectorXd y, double t0, double t1,
                    int steps) {
  const double h = (t1 - t0) / steps;
  for (int s = 0; s < steps; ++s) {
    const double t = t0 + s * h;
    const Eigen::VectorXd k1 = rhs(t, y);
    const Eigen::VectorXd k2 = rhs(t + 0.5 * h, (y + 0.5 * h * k1).eval());
    const Eigen::VectorXd k3 = rhs(t + 0.5 * h, (y + 0.5 * h * k2).eval());
    const Eigen::VectorXd k4 = rhs(t + h, (y + h * k3).eval());
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return y;
}

/// Regularized upper incomplete gamma Q(a, x).
double gammq(double a, double x);

/// Upper tail of the chi-square distribution with `dof` degrees of freedom.
double chi_square_p(double stat, int dof);

/// Two-sided Kolmogorov-Smirnov p-value for `samples` against the
/// exponential law with the given rate, using the asymptotic Kolmogorov
/// distribution with the standard small-sample correction.
double ks_exponential_p(std::vector<double> samples, double rate);

/// Composite Simpson quadrature with n (even) panels.
template <class F>
double simpson(F&& f, double a, double b, int n) {
  if (n % 2) ++n;
  const double h = (b - a) / n;
  double sum = f(a) + f(b);
  for (int i = 1; i < n; ++i) sum += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return sum * h / 3.0;
}

/// Rate table with every channel drawn uniformly from [lo, hi].
crsos::RateTable random_table(crsos::Xoshiro256& rng, double lo, double hi);

/// Averages each window rate with its left-right mirror image, producing a
/// table invariant under reflection of the hop direction.
crsos::RateTable mirror_symmetrize(const crsos::RateTable& rates);

/// Runs a shell command, returning its exit status (or -1 if it died on a
/// signal). Output is left alone; append redirections in `cmd` to mute it.
int run_command(const std::string& cmd);

/// Whole file as a string; throws on a missing file.
std::string read_file(const std::string& path);

/// Fresh unique directory under the system temp root.
std::string make_temp_dir(const std::string& tag);

}  // namespace testsupport
