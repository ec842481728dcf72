#include "crsos/kmc.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "crsos/errors.hpp"

namespace crsos {

namespace {

// Grow `v` with zeros so it has at least `size` entries.
void pad_to(Eigen::VectorXd& v, Eigen::Index size) {
  if (v.size() >= size) return;
  Eigen::VectorXd grown = Eigen::VectorXd::Zero(size);
  grown.head(v.size()) = v;
  v.swap(grown);
}

void accumulate_padded(Eigen::VectorXd& sum, const Eigen::VectorXd& term) {
  pad_to(sum, term.size());
  sum.head(term.size()) += term;
}

Eigen::VectorXd standard_error(const Eigen::VectorXd& sum,
                               const Eigen::VectorXd& sumsq, std::size_t n) {
  const auto count = static_cast<double>(n);
  Eigen::VectorXd se = Eigen::VectorXd::Zero(sum.size());
  if (n < 2) return se;
  for (Eigen::Index i = 0; i < sum.size(); ++i) {
    const double mean = sum[i] / count;
    const double var = (sumsq[i] - count * mean * mean) / (count - 1.0);
    se[i] = var > 0.0 ? std::sqrt(var / count) : 0.0;
  }
  return se;
}

}  // namespace

void EnsembleAccumulator::add(const ObservableSeries& series) {
  const auto samples = static_cast<Eigen::Index>(series.times.size());
  if (replicas == 0) {
    times = series.times;
    mean_height_sum = mean_height_sumsq = Eigen::VectorXd::Zero(samples);
    width_sq_sum = width_sq_sumsq = Eigen::VectorXd::Zero(samples);
    fraction_sum.assign(series.times.size(), Eigen::VectorXd());
    fraction_sumsq.assign(series.times.size(), Eigen::VectorXd());
  } else if (series.times != times) {
    throw std::invalid_argument("replica sampled on a different time grid");
  }
  for (Eigen::Index s = 0; s < samples; ++s) {
    const double m = series.mean_height[static_cast<std::size_t>(s)];
    const double w = series.width_sq[static_cast<std::size_t>(s)];
    mean_height_sum[s] += m;
    mean_height_sumsq[s] += m * m;
    width_sq_sum[s] += w;
    width_sq_sumsq[s] += w * w;
    const Eigen::VectorXd& f = series.site_fraction[static_cast<std::size_t>(s)];
    accumulate_padded(fraction_sum[static_cast<std::size_t>(s)], f);
    accumulate_padded(fraction_sumsq[static_cast<std::size_t>(s)],
                      f.cwiseProduct(f));
  }
  replicas += 1;
  absorbed += series.absorbed ? 1 : 0;
}

void EnsembleAccumulator::merge(const EnsembleAccumulator& other) {
  if (other.replicas == 0) return;
  if (replicas == 0) {
    *this = other;
    return;
  }
  if (other.times != times)
    throw std::invalid_argument("accumulators sampled on different time grids");
  replicas += other.replicas;
  absorbed += other.absorbed;
  mean_height_sum += other.mean_height_sum;
  mean_height_sumsq += other.mean_height_sumsq;
  width_sq_sum += other.width_sq_sum;
  width_sq_sumsq += other.width_sq_sumsq;
  for (std::size_t s = 0; s < times.size(); ++s) {
    accumulate_padded(fraction_sum[s], other.fraction_sum[s]);
    accumulate_padded(fraction_sumsq[s], other.fraction_sumsq[s]);
  }
}

EnsembleStats finalize(const EnsembleAccumulator& acc) {
  if (acc.replicas == 0)
    throw std::invalid_argument("no replicas accumulated");
  const auto count = static_cast<double>(acc.replicas);
  EnsembleStats stats;
  stats.replicas = acc.replicas;
  stats.absorbed = acc.absorbed;
  stats.times = acc.times;
  stats.mean_height = acc.mean_height_sum / count;
  stats.width_sq = acc.width_sq_sum / count;
  stats.mean_height_se =
      standard_error(acc.mean_height_sum, acc.mean_height_sumsq, acc.replicas);
  stats.width_sq_se =
      standard_error(acc.width_sq_sum, acc.width_sq_sumsq, acc.replicas);
  stats.site_fraction.resize(acc.times.size());
  stats.site_fraction_se.resize(acc.times.size());
  for (std::size_t s = 0; s < acc.times.size(); ++s) {
    stats.site_fraction[s] = acc.fraction_sum[s] / count;
    stats.site_fraction_se[s] =
        standard_error(acc.fraction_sum[s], acc.fraction_sumsq[s],
                       acc.replicas);
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Simulator
// ---------------------------------------------------------------------------

KmcSimulator::KmcSimulator(Heights config, const RateTable& rates,
                           std::uint64_t seed)
    : config_(std::move(config)), rates_(rates), rng_(seed) {
  if (!rates_.valid())
    throw std::invalid_argument("rate table has negative or nonfinite entries");
  if (config_.empty() || !is_restricted(config_))
    throw std::invalid_argument("initial configuration is not restricted");
  const std::size_t n = config_.size();
  catalog_.resize(n);
  site_rate_.assign(n, 0.0);
  tree_.assign(n + 1, 0.0);
  tree_high_bit_ = 1;
  while (tree_high_bit_ * 2 <= n) tree_high_bit_ *= 2;
  for (std::size_t i = 0; i < n; ++i) rebuild_site(static_cast<int>(i));
}

void KmcSimulator::rebuild_site(int site) {
  auto& moves = catalog_[static_cast<std::size_t>(site)];
  active_moves_ -= moves.size();
  moves.clear();
  site_moves(config_, site, rates_, moves);
  active_moves_ += moves.size();
  double rate = 0.0;
  for (const MoveEvent& mv : moves) rate += mv.rate;
  const double delta = rate - site_rate_[static_cast<std::size_t>(site)];
  site_rate_[static_cast<std::size_t>(site)] = rate;
  for (std::size_t i = static_cast<std::size_t>(site) + 1; i < tree_.size();
       i += i & (~i + 1))
    tree_[i] += delta;
}

void KmcSimulator::refresh_around(int a, int b) {
  const int n = static_cast<int>(config_.size());
  int touched[14];
  int count = 0;
  for (int centre : {a, b})
    for (int d = -3; d <= 3; ++d)
      touched[count++] = ((centre + d) % n + n) % n;
  std::sort(touched, touched + count);
  const int* end = std::unique(touched, touched + count);
  for (const int* it = touched; it != end; ++it) rebuild_site(*it);
}

void KmcSimulator::rebuild_tree() {
  std::fill(tree_.begin(), tree_.end(), 0.0);
  for (std::size_t i = 1; i < tree_.size(); ++i) {
    tree_[i] += site_rate_[i - 1];
    const std::size_t parent = i + (i & (~i + 1));
    if (parent < tree_.size()) tree_[parent] += tree_[i];
  }
}

double KmcSimulator::total_rate() const {
  double total = 0.0;
  for (std::size_t i = config_.size(); i > 0; i -= i & (~i + 1))
    total += tree_[i];
  return total;
}

double KmcSimulator::next_event_time() {
  if (absorbed()) return std::numeric_limits<double>::infinity();
  if (pending_time_ >= clock_) return pending_time_;
  pending_time_ = clock_ - std::log(rng_.uniform_pos()) / total_rate();
  return pending_time_;
}

MoveEvent KmcSimulator::fire() {
  if (absorbed()) throw InvalidMoveError("trajectory is absorbed");
  const double when = next_event_time();

  // Select a site with probability proportional to its rate, descending the
  // indexed tree, then a move within its catalog. Accumulated float drift
  // can land on a site whose catalog is momentarily empty; redraw then.
  const std::size_t n = config_.size();
  const MoveEvent* chosen = nullptr;
  while (chosen == nullptr) {
    double point = rng_.uniform_pos() * total_rate();
    std::size_t pos = 0;
    for (std::size_t mask = tree_high_bit_; mask > 0; mask >>= 1) {
      const std::size_t next = pos + mask;
      if (next <= n && tree_[next] < point) {
        point -= tree_[next];
        pos = next;
      }
    }
    if (pos >= n) pos = n - 1;
    const auto& moves = catalog_[pos];
    if (moves.empty()) continue;
    for (const MoveEvent& mv : moves) {
      if (point <= mv.rate) {
        chosen = &mv;
        break;
      }
      point -= mv.rate;
    }
    if (chosen == nullptr) chosen = &moves.back();
  }

  const MoveEvent taken = *chosen;
  config_ = apply_move(config_, taken);
  clock_ = when;
  pending_time_ = -1.0;
  events_ += 1;
  refresh_around(taken.source, taken.target);
  if (events_ % 16384 == 0) rebuild_tree();
  return taken;
}

TrajectoryState kmc_step(TrajectoryState state, const RateTable& rates) {
  const std::vector<MoveEvent> moves = list_moves(state.config, rates);
  if (moves.empty()) {
    state.clock = std::numeric_limits<double>::infinity();
    return state;
  }
  double total = 0.0;
  for (const MoveEvent& mv : moves) total += mv.rate;
  state.clock += -std::log(state.rng.uniform_pos()) / total;
  double point = state.rng.uniform_pos() * total;
  const MoveEvent* chosen = &moves.back();
  for (const MoveEvent& mv : moves) {
    if (point <= mv.rate) {
      chosen = &mv;
      break;
    }
    point -= mv.rate;
  }
  state.config = apply_move(state.config, *chosen);
  return state;
}

// ---------------------------------------------------------------------------
// Trajectories and ensembles
// ---------------------------------------------------------------------------

namespace {

void record_sample(ObservableSeries& series, const Heights& h) {
  const auto n = static_cast<double>(h.size());
  const double sum = std::accumulate(h.begin(), h.end(), 0.0);
  const double mean = sum / n;
  double var = 0.0;
  int k_max = 0;
  for (int k : h) {
    var += (k - mean) * (k - mean);
    k_max = std::max(k_max, k);
  }
  Eigen::VectorXd fraction = Eigen::VectorXd::Zero(k_max + 1);
  for (int k : h) fraction[k] += 1.0 / n;
  series.mean_height.push_back(mean);
  series.width_sq.push_back(var / n);
  series.site_fraction.push_back(std::move(fraction));
}

}  // namespace

ObservableSeries simulate(const Heights& init, const RateTable& rates,
                          double t_end,
                          const std::vector<double>& sample_times,
                          std::uint64_t seed) {
  if (!std::is_sorted(sample_times.begin(), sample_times.end()))
    throw std::invalid_argument("sample times must be nondecreasing");
  if (!sample_times.empty() &&
      (sample_times.front() < 0.0 || sample_times.back() > t_end))
    throw std::invalid_argument("sample times must lie within [0, t_end]");

  KmcSimulator sim(init, rates, seed);
  ObservableSeries series;
  series.times = sample_times;
  series.seed = seed;
  std::size_t next = 0;
  while (next < sample_times.size()) {
    if (sim.absorbed()) {
      series.absorbed = true;
      for (; next < sample_times.size(); ++next)
        record_sample(series, sim.config());
      break;
    }
    const double event_time = sim.next_event_time();
    for (; next < sample_times.size() && sample_times[next] < event_time;
         ++next)
      record_sample(series, sim.config());
    if (next == sample_times.size()) break;
    sim.fire();
  }
  return series;
}

EnsembleStats ensemble(const Heights& init, const RateTable& rates,
                       double t_end, const std::vector<double>& sample_times,
                       std::size_t replicas, std::uint64_t base_seed,
                       unsigned threads) {
  if (replicas == 0) throw std::invalid_argument("need at least one replica");
  unsigned workers = threads != 0 ? threads : std::thread::hardware_concurrency();
  workers = std::clamp<unsigned>(workers, 1,
                                 static_cast<unsigned>(std::min<std::size_t>(
                                     replicas, 1024)));

  // Replicas run in parallel batches but are folded strictly in index
  // order, so the statistics are bit-identical for any worker count.
  constexpr std::size_t kBatch = 256;
  EnsembleAccumulator acc;
  std::vector<ObservableSeries> batch(std::min(kBatch, replicas));
  for (std::size_t begin = 0; begin < replicas; begin += kBatch) {
    const std::size_t count = std::min(kBatch, replicas - begin);
    if (workers == 1) {
      for (std::size_t i = 0; i < count; ++i)
        batch[i] = simulate(init, rates, t_end, sample_times,
                            derive_seed(base_seed, begin + i));
    } else {
      std::atomic<std::size_t> cursor{0};
      std::vector<std::thread> pool;
      pool.reserve(workers);
      for (unsigned w = 0; w < workers; ++w)
        pool.emplace_back([&] {
          for (std::size_t i = cursor.fetch_add(1); i < count;
               i = cursor.fetch_add(1))
            batch[i] = simulate(init, rates, t_end, sample_times,
                                derive_seed(base_seed, begin + i));
        });
      for (auto& worker : pool) worker.join();
    }
    for (std::size_t i = 0; i < count; ++i) acc.add(batch[i]);
  }
  return finalize(acc);
}

}  // namespace crsos
