#include "crsos/master.hpp"

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "crsos/errors.hpp"

namespace crsos {

int max_height(const StateSpace& space) {
  int k_max = 0;
  for (std::size_t i = 0; i < space.size(); ++i) {
    const Heights& h = space.config(i);
    k_max = std::max(k_max, *std::max_element(h.begin(), h.end()));
  }
  return k_max;
}

GeneratorMatrix build_generator(const StateSpace& space,
                                const RateTable& rates) {
  const auto dim = static_cast<Eigen::Index>(space.size());
  std::vector<Eigen::Triplet<double>> entries;
  for (std::size_t k = 0; k < space.size(); ++k) {
    double outflow = 0.0;
    for (const MoveEvent& mv : list_moves(space.config(k), rates)) {
      const auto h = space.index_of(apply_move(space.config(k), mv));
      if (!h) throw std::logic_error("move left the enumerated space");
      entries.emplace_back(static_cast<Eigen::Index>(k),
                           static_cast<Eigen::Index>(*h), mv.rate);
      outflow += mv.rate;
    }
    entries.emplace_back(static_cast<Eigen::Index>(k),
                         static_cast<Eigen::Index>(k), -outflow);
  }
  GeneratorMatrix gen;
  gen.rates.resize(dim, dim);
  gen.rates.setFromTriplets(entries.begin(), entries.end());
  return gen;
}

StateDistribution delta_distribution(const StateSpace& space,
                                     const Heights& at) {
  const auto i = space.index_of(at);
  if (!i) throw std::invalid_argument("configuration not in the state space");
  StateDistribution dist;
  dist.p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(space.size()));
  dist.p[static_cast<Eigen::Index>(*i)] = 1.0;
  return dist;
}

StateDistribution evolve_forward(const GeneratorMatrix& gen,
                                 const StateDistribution& init, double t,
                                 const OdeOptions& opts) {
  if (init.p.size() != gen.dimension())
    throw std::invalid_argument("distribution does not match the generator");
  if (t < 0.0) throw std::invalid_argument("negative evolution time");
  StateDistribution out = init;
  if (t == 0.0) return out;
  const auto rhs = [&gen](double, const Eigen::VectorXd& y,
                          Eigen::VectorXd& dydt) {
    dydt = gen.rates.transpose() * y;
  };
  integrate_adaptive(rhs, out.p, init.time, init.time + t, opts);
  out.time = init.time + t;
  return out;
}

HeightDistribution one_site_marginal(const StateSpace& space,
                                     const StateDistribution& dist, int site) {
  if (site < 0 || site >= space.n())
    throw std::out_of_range("site index outside the ring");
  if (dist.p.size() != static_cast<Eigen::Index>(space.size()))
    throw std::invalid_argument("distribution does not match the space");
  HeightDistribution marginal;
  marginal.p = Eigen::VectorXd::Zero(max_height(space) + 1);
  marginal.time = dist.time;
  for (std::size_t i = 0; i < space.size(); ++i)
    marginal.p[space.config(i)[static_cast<std::size_t>(site)]] += dist.p[
        static_cast<Eigen::Index>(i)];
  return marginal;
}

MarginalRateReport marginal_rate_identity(const StateSpace& space,
                                          const StateDistribution& dist,
                                          const RateTable& rates, int site) {
  if (site < 0 || site >= space.n())
    throw std::out_of_range("site index outside the ring");
  if (dist.p.size() != static_cast<Eigen::Index>(space.size()))
    throw std::invalid_argument("distribution does not match the space");
  const int n = space.n();
  const int k_levels = max_height(space) + 1;

  MarginalRateReport report;
  report.exact_rate = Eigen::VectorXd::Zero(k_levels);
  report.local_rate = Eigen::VectorXd::Zero(k_levels);

  const GeneratorMatrix gen = build_generator(space, rates);
  const Eigen::VectorXd dpdt = gen.rates.transpose() * dist.p;
  for (std::size_t i = 0; i < space.size(); ++i)
    report.exact_rate[space.config(i)[static_cast<std::size_t>(site)]] +=
        dpdt[static_cast<Eigen::Index>(i)];

  // One-sided flows: moves exchanging mass between `site` and the sites one
  // or two hops to its right, in either direction.
  const int right1 = (site + 1) % n;
  const int right2 = (site + 2) % n;
  for (std::size_t i = 0; i < space.size(); ++i) {
    const double weight = dist.p[static_cast<Eigen::Index>(i)];
    if (weight == 0.0) continue;
    const Heights& cfg = space.config(i);
    const int k_here = cfg[static_cast<std::size_t>(site)];
    for (const MoveEvent& mv : list_moves(cfg, rates)) {
      const bool depart = mv.source == site &&
                          (mv.target == right2 || mv.target == right1);
      const bool arrive = mv.target == site &&
                          (mv.source == right2 || mv.source == right1);
      if (!depart && !arrive) continue;
      const double flow = weight * mv.rate;
      report.local_rate[k_here] -= flow;
      report.local_rate[depart ? k_here - 1 : k_here + 1] += flow;
    }
  }
  report.local_rate *= 2.0;

  report.residual =
      (report.exact_rate - report.local_rate).cwiseAbs().maxCoeff();
  return report;
}

}  // namespace crsos
