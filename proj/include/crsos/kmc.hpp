#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "crsos/lattice.hpp"
#include "crsos/rng.hpp"

namespace crsos {

/// One trajectory's complete state: configuration, physical clock, and the
/// generator driving it.
struct TrajectoryState {
  Heights config;
  double clock = 0.0;
  Xoshiro256 rng{0};
};

/// Single event on a bare state: exponential waiting time from the total
/// rate, then a move picked proportionally to its rate from the full
/// catalog, O(n) per call. When no move is legal the state comes back
/// unchanged except clock = +infinity (the absorption signal). KmcSimulator
/// is the O(log n) fast path and replays the identical trajectory.
TrajectoryState kmc_step(TrajectoryState state, const RateTable& rates);

/// One stochastic trajectory summarized at fixed sample times. Height
/// histograms are spatial: entry k of site_fraction[s] is the fraction of
/// columns at height k when sample s was taken, so vectors grow only as
/// tall columns actually appear.
struct ObservableSeries {
  std::vector<double> times;
  std::vector<double> mean_height;
  std::vector<double> width_sq;
  std::vector<Eigen::VectorXd> site_fraction;
  std::uint64_t seed = 0;
  bool absorbed = false;
};

/// Streaming moments over replicas, mergeable across workers. Sums and sums
/// of squares are kept per sample time; histogram columns are padded with
/// zeros on demand so replicas that never grew tall columns still combine.
struct EnsembleAccumulator {
  std::size_t replicas = 0;
  std::size_t absorbed = 0;
  std::vector<double> times;
  Eigen::VectorXd mean_height_sum, mean_height_sumsq;
  Eigen::VectorXd width_sq_sum, width_sq_sumsq;
  std::vector<Eigen::VectorXd> fraction_sum, fraction_sumsq;

  void add(const ObservableSeries& series);
  void merge(const EnsembleAccumulator& other);
};

/// Replica averages with standard errors of the mean.
struct EnsembleStats {
  std::size_t replicas = 0;
  std::size_t absorbed = 0;
  std::vector<double> times;
  Eigen::VectorXd mean_height, mean_height_se;
  Eigen::VectorXd width_sq, width_sq_se;
  std::vector<Eigen::VectorXd> site_fraction, site_fraction_se;
};

EnsembleStats finalize(const EnsembleAccumulator& acc);

/// Event-driven sampler for one trajectory. Each event draws an exponential
/// waiting time from the current total rate, picks a move with probability
/// proportional to its rate, and applies it. Per-site move catalogs feed a
/// binary indexed tree over site rates, and a move only invalidates
/// catalogs within circular distance three of the two touched columns, so
/// an event costs O(log n).
class KmcSimulator {
 public:
  KmcSimulator(Heights config, const RateTable& rates, std::uint64_t seed);

  const Heights& config() const { return config_; }
  double clock() const { return clock_; }
  std::uint64_t events() const { return events_; }
  bool absorbed() const { return active_moves_ == 0; }
  double total_rate() const;

  /// Clock reading of the next event, drawing its waiting time on first
  /// call; +infinity once absorbed. Idempotent until fire().
  double next_event_time();

  /// Applies the pending event (scheduling one if none is pending) and
  /// returns the move taken. Throws InvalidMoveError when absorbed.
  MoveEvent fire();

 private:
  void rebuild_site(int site);
  void refresh_around(int a, int b);
  void rebuild_tree();

  Heights config_;
  RateTable rates_;
  Xoshiro256 rng_;
  std::vector<std::vector<MoveEvent>> catalog_;
  std::vector<double> site_rate_;
  std::vector<double> tree_;  // 1-based binary indexed tree over site_rate_
  std::size_t tree_high_bit_ = 0;
  std::size_t active_moves_ = 0;
  double clock_ = 0.0;
  double pending_time_ = -1.0;  // < clock_ means no event scheduled
  std::uint64_t events_ = 0;
};

/// Runs one trajectory from `init` up to t_end, recording observables at
/// each sample time (the state in force just before that instant). Sample
/// times must be nondecreasing and within [0, t_end]. Once the trajectory
/// absorbs, remaining samples repeat the frozen state and the series is
/// flagged.
ObservableSeries simulate(const Heights& init, const RateTable& rates,
                          double t_end,
                          const std::vector<double>& sample_times,
                          std::uint64_t seed);

/// Independent replicas r = 0..replicas-1, each seeded by
/// derive_seed(base_seed, r). Work is spread over `threads` workers
/// (0 picks the hardware count), but replicas are reduced in index order
/// in fixed-size batches, so the result is identical for any thread count.
EnsembleStats ensemble(const Heights& init, const RateTable& rates,
                       double t_end, const std::vector<double>& sample_times,
                       std::size_t replicas, std::uint64_t base_seed,
                       unsigned threads = 0);

}  // namespace crsos
