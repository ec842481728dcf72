#include "crsos/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>

namespace crsos {

namespace {

inline int mod(int i, int n) {
  int r = i % n;
  return r < 0 ? r + n : r;
}

/// Post-move restriction check touching only the columns a hop can change.
/// Assumes the input configuration is restricted.
bool move_keeps_restriction(const Heights& h, int src, int tgt) {
  const int n = static_cast<int>(h.size());
  if (h[src] < 1) return false;
  auto post = [&](int i) { return h[i] - (i == src ? 1 : 0) + (i == tgt ? 1 : 0); };
  int starts[4] = {mod(src - 1, n), src, mod(tgt - 1, n), tgt};
  for (int j = 0; j < 4; ++j) {
    bool seen = false;
    for (int k = 0; k < j; ++k) seen = seen || starts[k] == starts[j];
    if (seen) continue;
    const int a = post(starts[j]);
    const int b = post(mod(starts[j] + 1, n));
    if (std::abs(a - b) > 1) return false;
  }
  return true;
}

constexpr ClassPair kClimb[4] = {{1, 1}, {1, 2}, {2, 1}, {2, 2}};
constexpr ClassPair kDescend[4] = {{4, 4}, {3, 4}, {4, 3}, {3, 3}};
constexpr ClassPair kSkip[8] = {{1, 3}, {1, 4}, {2, 3}, {2, 4},
                                {3, 1}, {3, 2}, {4, 1}, {4, 2}};

}  // namespace

bool is_restricted(const Heights& h) {
  const int n = static_cast<int>(h.size());
  if (n < 1) return false;
  for (int i = 0; i < n; ++i) {
    if (h[i] < 0) return false;
    if (std::abs(h[(i + 1) % n] - h[i]) > 1) return false;
  }
  return true;
}

Heights flat_config(int n, int K) {
  Heights h(static_cast<std::size_t>(n), K / n);
  for (int i = 0; i < K % n; ++i) h[i] += 1;
  return h;
}

Heights reflect(const Heights& h) {
  const int n = static_cast<int>(h.size());
  Heights out(h.size());
  for (int i = 0; i < n; ++i) out[i] = h[mod(n - i, n)];
  return out;
}

Heights rotate(const Heights& h, int shift) {
  const int n = static_cast<int>(h.size());
  Heights out(h.size());
  for (int i = 0; i < n; ++i) out[mod(i + shift, n)] = h[i];
  return out;
}

int departure_class(int behind, int at, int ahead) {
  const int b = behind - at;
  const int a = ahead - at;
  if (b == 0 && a == 0) return 1;
  if (b == -1 && a == 0) return 2;
  if (b == 0 && a == -1) return 3;
  if (b == -1 && a == -1) return 4;
  return 0;
}

int arrival_class(int nearside, int at, int farside) {
  const int b = nearside - at;
  const int a = farside - at;
  if (b == 0 && a == 0) return 1;
  if (b == 0 && a == 1) return 2;
  if (b == 1 && a == 0) return 3;
  if (b == 1 && a == 1) return 4;
  return 0;
}

RateTable RateTable::unit() {
  RateTable t;
  for (auto& row : t.span2)
    for (auto& r : row) r = 1.0;
  t.span1 = 1.0;
  return t;
}

RateTable RateTable::zeros() {
  RateTable t;
  for (auto& row : t.span2)
    for (auto& r : row) r = 0.0;
  t.span1 = 0.0;
  return t;
}

double RateTable::climb(int i) const {
  const auto [d, a] = kClimb[i - 1];
  return span2[d - 1][a - 1];
}

double RateTable::descend(int i) const {
  const auto [d, a] = kDescend[i - 1];
  return span2[d - 1][a - 1];
}

void RateTable::set_climb(int i, double rate) {
  const auto [d, a] = kClimb[i - 1];
  span2[d - 1][a - 1] = rate;
}

void RateTable::set_descend(int i, double rate) {
  const auto [d, a] = kDescend[i - 1];
  span2[d - 1][a - 1] = rate;
}

void RateTable::set_all_skips(double rate) {
  for (const auto [d, a] : kSkip) span2[d - 1][a - 1] = rate;
}

bool RateTable::valid() const {
  auto ok = [](double r) { return std::isfinite(r) && r >= 0.0; };
  for (const auto& row : span2)
    for (double r : row)
      if (!ok(r)) return false;
  return ok(span1);
}

ClassPair climb_classes(int i) { return kClimb[i - 1]; }
ClassPair descend_classes(int i) { return kDescend[i - 1]; }
ClassPair skip_classes(int i) { return kSkip[i - 1]; }

void site_moves(const Heights& h, int site, const RateTable& rates,
                std::vector<MoveEvent>& out) {
  const int n = static_cast<int>(h.size());
  if (h[site] < 1) return;
  static constexpr int kOffsets[4] = {-2, -1, +1, +2};
  for (const int offset : kOffsets) {
    const int target = mod(site + offset, n);
    if (target == site) continue;
    if (offset == -2 || offset == +2) {
      const int dir = offset > 0 ? +1 : -1;
      const int dep = departure_class(h[mod(site - dir, n)], h[site],
                                      h[mod(site + dir, n)]);
      if (dep == 0) continue;
      const int arr = arrival_class(h[mod(site + dir, n)], h[target],
                                    h[mod(site + 3 * dir, n)]);
      if (arr == 0) continue;
      const double rate = rates.span2[dep - 1][arr - 1];
      if (!(rate > 0.0)) continue;
      if (!move_keeps_restriction(h, site, target)) continue;
      out.push_back({site, target, offset, rate, MoveKind::span2, dep, arr});
    } else {
      if (h[target] != h[site] - 1) continue;
      if (!(rates.span1 > 0.0)) continue;
      if (!move_keeps_restriction(h, site, target)) continue;
      out.push_back({site, target, offset, rates.span1, MoveKind::span1, 0, 0});
    }
  }
}

std::vector<MoveEvent> list_moves(const Heights& h, const RateTable& rates) {
  std::vector<MoveEvent> moves;
  for (int site = 0; site < static_cast<int>(h.size()); ++site)
    site_moves(h, site, rates, moves);
  return moves;
}

Heights apply_move(const Heights& h, const MoveEvent& move) {
  const int n = static_cast<int>(h.size());
  if (move.source < 0 || move.source >= n || move.target < 0 ||
      move.target >= n || move.source == move.target)
    throw InvalidMoveError("move endpoints out of range");
  Heights out = h;
  out[move.source] -= 1;
  out[move.target] += 1;
  if (!is_restricted(out))
    throw InvalidMoveError("move result violates the restriction");
  return out;
}

StateSpace::StateSpace(int n, int K, std::vector<Heights> configs)
    : n_(n), K_(K), configs_(std::move(configs)) {}

std::optional<std::size_t> StateSpace::index_of(const Heights& h) const {
  auto it = std::lower_bound(configs_.begin(), configs_.end(), h);
  if (it == configs_.end() || *it != h) return std::nullopt;
  return static_cast<std::size_t>(it - configs_.begin());
}

StateSpace enumerate_configs(int n, int K, std::size_t cap) {
  if (n < 1) throw std::invalid_argument("lattice size must be >= 1");
  if (K < 0) throw std::invalid_argument("particle count must be >= 0");

  std::vector<Heights> configs;
  Heights cur(static_cast<std::size_t>(n), 0);

  // Depth-first in ascending height order, which emits configurations in
  // lexicographic order. Prunes on reachable-sum bounds and on the seam
  // constraint |h[i] - h[0]| <= n - i.
  auto emit = [&]() {
    if (configs.size() >= cap)
      throw ResourceLimitError("state space exceeds cap of " +
                               std::to_string(cap) + " configurations");
    configs.push_back(cur);
  };

  auto reachable = [&](int i, int sum) {
    const int m = n - i;  // sites left to fill
    const int last = cur[i - 1];
    long long lo = 0, hi = 0;
    for (int j = 1; j <= m; ++j) {
      lo += std::max(0, last - j);
      hi += last + j;
    }
    const long long rem = K - sum;
    return lo <= rem && rem <= hi;
  };

  auto rec = [&](auto&& self, int i, int sum) -> void {
    if (i == n) {
      if (sum == K && std::abs(cur[n - 1] - cur[0]) <= 1) emit();
      return;
    }
    if (i == 0) {
      for (int v = 0; v <= K; ++v) {
        cur[0] = v;
        if (n == 1) {
          self(self, 1, v);
        } else if (reachable(1, v)) {
          self(self, 1, v);
        }
      }
      return;
    }
    const int last = cur[i - 1];
    for (int v = std::max(0, last - 1); v <= last + 1; ++v) {
      if (sum + v > K) break;
      if (std::abs(v - cur[0]) > n - i) continue;
      cur[i] = v;
      if (i + 1 == n || reachable(i + 1, sum + v)) self(self, i + 1, sum + v);
    }
    cur[i] = 0;
  };

  rec(rec, 0, 0);
  return StateSpace(n, K, std::move(configs));
}

}  // namespace crsos
