#include <doctest.h>

#include <cmath>

#include "crsos/errors.hpp"
#include "crsos/mean_field.hpp"
#include "support.hpp"

using crsos::MeanFieldParams;
using crsos::QuadraticTriple;

namespace {

// Independent transcription of the gain/loss bracket, written term by term.
double bracket_reference(const MeanFieldParams& prm, double pm, double p,
                         double pp) {
  const double gain = prm.c[0] * p * p * p * p * p +
                      prm.c[1] * p * p * p * p * pp +
                      prm.c[2] * pm * p * p * p * p +
                      prm.c[3] * pm * p * p * p * pp;
  const double loss = prm.d[0] * pm * p * p * p * pp +
                      prm.d[1] * pm * p * p * pp * pp +
                      prm.d[2] * pm * pm * p * p * pp +
                      prm.d[3] * pm * pm * p * pp * pp;
  return gain - loss;
}

Eigen::VectorXd rhs_reference(const Eigen::VectorXd& P,
                              const MeanFieldParams& prm) {
  const Eigen::Index size = P.size();
  const auto at = [&](Eigen::Index k) {
    return (k < 0 || k >= size) ? 0.0 : P[k];
  };
  const auto B = [&](Eigen::Index k) {
    return (k < 0 || k >= size)
               ? 0.0
               : bracket_reference(prm, at(k - 1), P[k], at(k + 1));
  };
  Eigen::VectorXd rhs(size);
  for (Eigen::Index k = 0; k < size; ++k)
    rhs[k] = 2.0 * (B(k - 1) - 2.0 * B(k) + B(k + 1));
  rhs[0] += 4.0 * (prm.c[0] * std::pow(P[0], 5) +
                   prm.c[1] * std::pow(P[0], 4) * P[1]);
  rhs[1] -= prm.c[0] * std::pow(P[1], 5) + prm.c[1] * std::pow(P[1], 4) * P[2];
  return rhs;
}

// A table whose collected quadratic is (1, -1.5, 0.5), so the interior
// stationary ratio is exactly one half.
MeanFieldParams half_ratio_params() {
  MeanFieldParams prm;
  prm.c[0] = 0.0;
  prm.d[0] = 1.0;
  prm.c[1] = 2.0;
  prm.d[1] = 1.0;
  prm.c[2] = 1.5;
  prm.d[2] = 1.0;
  prm.c[3] = 0.0;
  prm.d[3] = 0.5;
  return prm;
}

}  // namespace

TEST_SUITE("mean_field") {

TEST_CASE("the zero profile and the zero table both yield no flow") {
  const MeanFieldParams unit = MeanFieldParams::unit();
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(21);
  CHECK(crsos::mf_rhs(zero, unit).cwiseAbs().maxCoeff() == 0.0);

  MeanFieldParams silent;
  for (int i = 0; i < 4; ++i) silent.c[i] = silent.d[i] = 0.0;
  const Eigen::VectorXd geo = crsos::geometric_profile(0.4, 20);
  CHECK(crsos::mf_rhs(geo, silent).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("a point mass at height one spreads with pinned coefficients") {
  const Eigen::VectorXd P = crsos::delta_profile(10, 1);
  const Eigen::VectorXd rhs = crsos::mf_rhs(P, MeanFieldParams::unit());
  CHECK(rhs[0] == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(rhs[1] == doctest::Approx(-5.0).epsilon(1e-14));
  CHECK(rhs[2] == doctest::Approx(2.0).epsilon(1e-14));
  for (Eigen::Index k = 3; k < rhs.size(); ++k) CHECK(rhs[k] == 0.0);
  // The boundary drain at height one is the only mass leak.
  CHECK(rhs.sum() == doctest::Approx(-1.0).epsilon(1e-14));
}

TEST_CASE("the flow matches an independent transcription") {
  crsos::Xoshiro256 rng(271);
  MeanFieldParams prm;
  for (int i = 0; i < 4; ++i) {
    prm.c[i] = 2.0 * rng.uniform();
    prm.d[i] = 2.0 * rng.uniform();
  }
  Eigen::VectorXd P(30);
  for (Eigen::Index k = 0; k < P.size(); ++k) P[k] = rng.uniform();
  P /= P.sum();
  const Eigen::VectorXd rhs = crsos::mf_rhs(P, prm);
  const Eigen::VectorXd ref = rhs_reference(P, prm);
  CHECK((rhs - ref).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("the bracket scales geometrically on a geometric profile") {
  const MeanFieldParams prm = half_ratio_params();
  const double lambda = 0.3;  // away from the stationary ratio
  const int k_max = 40;
  const Eigen::VectorXd P = crsos::geometric_profile(lambda, k_max);
  const double base =
      bracket_reference(prm, P[1], P[2], P[3]) / std::pow(lambda, 10);
  for (int k = 3; k <= k_max - 2; ++k) {
    const double scaled = bracket_reference(prm, P[k - 1], P[k], P[k + 1]) /
                          std::pow(lambda, 5 * k);
    CHECK(scaled == doctest::Approx(base).epsilon(1e-9));
  }
}

TEST_CASE("the stationary geometric profile has no interior flow") {
  const MeanFieldParams prm = half_ratio_params();
  const auto analysis =
      crsos::solve_lambda(crsos::stationary_quadratic(prm).collected);
  REQUIRE(analysis.phase == crsos::RootPhase::one);
  const double lambda = analysis.lambda;
  CHECK(lambda == doctest::Approx(0.5).epsilon(1e-12));
  const Eigen::VectorXd P = crsos::geometric_profile(lambda, 60);
  const Eigen::VectorXd rhs = crsos::mf_rhs(P, prm);
  for (Eigen::Index k = 2; k + 2 < rhs.size(); ++k)
    CHECK(std::abs(rhs[k]) <= 1e-10);
}

TEST_CASE("evolution reproduces a tiny-step reference") {
  const MeanFieldParams prm = MeanFieldParams::unit();
  const Eigen::VectorXd P0 = crsos::delta_profile(16, 2);
  const auto samples = crsos::mf_evolve(P0, prm, {0.05});
  REQUIRE(samples.size() == 1);
  const Eigen::VectorXd reference = testsupport::rk4(
      [&prm](double, const Eigen::VectorXd& y) { return crsos::mf_rhs(y, prm); },
      P0, 0.0, 0.05, 5000);
  CHECK((samples[0].P - reference).cwiseAbs().maxCoeff() <= 1e-7);
  CHECK(samples[0].mass == doctest::Approx(samples[0].P.sum()));
  CHECK(samples[0].drift == doctest::Approx(std::abs(samples[0].mass - 1.0)));
}

TEST_CASE("sampling at time zero returns the initial profile") {
  const Eigen::VectorXd P0 = crsos::delta_profile(8, 1);
  const auto samples = crsos::mf_evolve(P0, MeanFieldParams::unit(), {0.0});
  REQUIRE(samples.size() == 1);
  CHECK((samples[0].P - P0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("unsorted sample times are rejected") {
  const Eigen::VectorXd P0 = crsos::delta_profile(8, 1);
  CHECK_THROWS_AS(
      crsos::mf_evolve(P0, MeanFieldParams::unit(), {0.5, 0.1}),
      std::invalid_argument);
}

TEST_CASE("matched gain and loss rates collapse the quadratic") {
  crsos::Xoshiro256 rng(6);
  MeanFieldParams prm;
  for (int i = 0; i < 4; ++i) prm.c[i] = prm.d[i] = 3.0 * rng.uniform();
  const auto quads = crsos::stationary_quadratic(prm);
  CHECK(quads.collected == QuadraticTriple{0.0, 0.0, 0.0});
  CHECK(quads.negated_linear == QuadraticTriple{0.0, -0.0, 0.0});
}

TEST_CASE("quadratic coefficients collect the channel imbalances") {
  const auto quads = crsos::stationary_quadratic(half_ratio_params());
  CHECK(quads.collected.q2 == doctest::Approx(1.0));
  CHECK(quads.collected.q1 == doctest::Approx(-1.5));
  CHECK(quads.collected.q0 == doctest::Approx(0.5));
  // The companion form flips only the linear coefficient.
  CHECK(quads.negated_linear.q2 == doctest::Approx(1.0));
  CHECK(quads.negated_linear.q1 == doctest::Approx(1.5));
  CHECK(quads.negated_linear.q0 == doctest::Approx(0.5));
}

TEST_CASE("root solving covers every phase") {
  SUBCASE("one interior root, one at the boundary") {
    const auto sol = crsos::solve_lambda({1.0, -1.5, 0.5});
    REQUIRE(sol.roots.size() == 2);
    CHECK(sol.roots[0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(sol.roots[1] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(sol.phase == crsos::RootPhase::one);
    CHECK(sol.lambda == doctest::Approx(0.5).epsilon(1e-14));
    REQUIRE(sol.stats.size() == 1);
    CHECK(sol.stats[0].mean == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("two interior roots") {
    const auto sol = crsos::solve_lambda({1.0, -0.9, 0.2});
    REQUIRE(sol.roots_in_unit.size() == 2);
    CHECK(sol.roots_in_unit[0] == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(sol.roots_in_unit[1] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(sol.phase == crsos::RootPhase::two);
    CHECK(std::isnan(sol.lambda));
  }
  SUBCASE("linear fallback") {
    const auto sol = crsos::solve_lambda({0.0, 2.0, -1.0});
    REQUIRE(sol.roots.size() == 1);
    CHECK(sol.roots[0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(sol.phase == crsos::RootPhase::one);
  }
  SUBCASE("tangent double root counts once") {
    const auto sol = crsos::solve_lambda({1.0, -1.0, 0.25});
    CHECK(sol.discriminant == doctest::Approx(0.0));
    REQUIRE(sol.roots_in_unit.size() == 1);
    CHECK(sol.roots_in_unit[0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(sol.phase == crsos::RootPhase::one);
  }
  SUBCASE("no real roots") {
    const auto sol = crsos::solve_lambda({1.0, 0.0, 1.0});
    CHECK(sol.roots.empty());
    CHECK(sol.phase == crsos::RootPhase::none);
    CHECK(std::isnan(sol.lambda));
  }
  SUBCASE("identically zero") {
    const auto sol = crsos::solve_lambda({0.0, 0.0, 0.0});
    CHECK(sol.roots.empty());
    CHECK(sol.phase == crsos::RootPhase::none);
  }
}

TEST_CASE("roots substitute back to machine precision") {
  crsos::Xoshiro256 rng(55);
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const QuadraticTriple q{2.0 * rng.uniform() - 1.0,
                            2.0 * rng.uniform() - 1.0,
                            2.0 * rng.uniform() - 1.0};
    const auto sol = crsos::solve_lambda(q);
    for (double r : sol.roots) {
      CHECK(std::abs(q.eval(r)) <=
            1e-12 * (std::abs(q.q2) + std::abs(q.q1) + std::abs(q.q0)) *
                (1.0 + r * r));
      ++checked;
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("root locations ignore an overall scale") {
  const QuadraticTriple q{1.0, -0.9, 0.2};
  const QuadraticTriple scaled{7.0, -6.3, 1.4};
  const auto a = crsos::solve_lambda(q);
  const auto b = crsos::solve_lambda(scaled);
  REQUIRE(a.roots.size() == b.roots.size());
  for (std::size_t i = 0; i < a.roots.size(); ++i)
    CHECK(a.roots[i] == doctest::Approx(b.roots[i]).epsilon(1e-13));
}

TEST_CASE("the sign heuristics are diagnostics, not the classifier") {
  // Two interior roots force q0/q2 = r1 r2 > 0, so the product test that
  // demands q0/q2 < 0 can never light up in that phase. It is recorded
  // faithfully and adjudicated by the root count instead.
  const auto two = crsos::solve_lambda({1.0, -0.9, 0.2});
  CHECK(two.phase == crsos::RootPhase::two);
  CHECK_FALSE(two.two_root_signs);
  const auto also_two = crsos::solve_lambda({1.0, -1.2, 0.35});
  CHECK(also_two.phase == crsos::RootPhase::two);
  CHECK_FALSE(also_two.two_root_signs);
  // A strict sign change across (0, 1) does flag the single-root phase.
  const auto one = crsos::solve_lambda({1.0, 0.5, -0.5});
  CHECK(one.phase == crsos::RootPhase::one);
  CHECK(one.one_root_signs);
}

TEST_CASE("geometric statistics match their closed forms and sums") {
  const auto stats = crsos::geometric_stats(0.5);
  CHECK(stats.mean == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(stats.width == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  CHECK(stats.variance == doctest::Approx(2.0).epsilon(1e-12));

  for (double lambda : {0.1, 0.5, 0.9}) {
    const auto s = crsos::geometric_stats(lambda);
    double mean = 0.0, second = 0.0, mass = 0.0;
    double weight = 1.0 - lambda;
    for (int k = 0; k <= 2000; ++k, weight *= lambda) {
      mass += weight;
      mean += k * weight;
      second += static_cast<double>(k) * k * weight;
    }
    CHECK(std::abs(mass - 1.0) <= 1e-12);
    CHECK(std::abs(s.mean - mean) <= 1e-10);
    CHECK(std::abs(s.variance - (second - mean * mean)) <= 1e-10);
    // The circulated width expression coincides with the standard
    // deviation of the same law.
    CHECK(s.width == doctest::Approx(std::sqrt(s.variance)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(crsos::geometric_stats(1.0), std::domain_error);
}

TEST_CASE("the bulk residual vanishes where it should") {
  // With every channel balanced the gain and loss monomials coincide on a
  // geometric profile, pairwise, leaving only subtraction roundoff.
  MeanFieldParams even;
  for (int i = 0; i < 4; ++i) even.c[i] = even.d[i] = 1.3;
  for (double lambda : {0.2, 0.5, 0.8})
    CHECK(crsos::bulk_residual(even, lambda) <= 1e-12);

  const MeanFieldParams prm = half_ratio_params();
  CHECK(crsos::bulk_residual(prm, 0.5) <= 1e-10);
  CHECK(crsos::bulk_residual(prm, 0.3) > 1e-3);

  crsos::Xoshiro256 rng(13);
  int tested = 0;
  for (int trial = 0; trial < 40; ++trial) {
    MeanFieldParams random;
    for (int i = 0; i < 4; ++i) {
      random.c[i] = 2.0 * rng.uniform();
      random.d[i] = 2.0 * rng.uniform();
    }
    const auto sol =
        crsos::solve_lambda(crsos::stationary_quadratic(random).collected);
    for (double root : sol.roots_in_unit) {
      CHECK(crsos::bulk_residual(random, root) <= 1e-10);
      ++tested;
    }
  }
  CHECK(tested >= 5);
}

TEST_CASE("the residual is the bracket in disguise") {
  const MeanFieldParams prm = half_ratio_params();
  for (double lambda : {0.25, 0.6}) {
    const double gap = 1.0 - lambda;
    const double expected =
        std::abs(bracket_reference(prm, gap * lambda * lambda,
                                   gap * std::pow(lambda, 3),
                                   gap * std::pow(lambda, 4)) /
                 (std::pow(gap, 5) * std::pow(lambda, 15)));
    CHECK(crsos::bulk_residual(prm, lambda) ==
          doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("truncation is converged at the default ladder height") {
  const MeanFieldParams prm = MeanFieldParams::unit();
  const auto coarse =
      crsos::mf_evolve(crsos::delta_profile(60, 1), prm, {1.0});
  const auto fine =
      crsos::mf_evolve(crsos::delta_profile(120, 1), prm, {1.0});
  const Eigen::VectorXd& a = coarse[0].P;
  const Eigen::VectorXd& b = fine[0].P;
  CHECK((a - b.head(a.size())).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK(b.tail(b.size() - a.size()).cwiseAbs().maxCoeff() <= 1e-12);
}

}  // TEST_SUITE
