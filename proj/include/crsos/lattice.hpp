#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "crsos/errors.hpp"

namespace crsos {

/// Column heights on a periodic one-dimensional lattice; heights[i] is the
/// number of particles at site i. Site indices are 0-based internally and
/// 1-based in user-facing output.
using Heights = std::vector<int>;

inline constexpr std::size_t kDefaultStateCap = 2'000'000;

/// True iff all heights are nonnegative and every pair of neighbouring
/// columns, including the periodic seam, differs by at most one.
bool is_restricted(const Heights& h);

/// Deterministic near-flat configuration with K particles on n sites:
/// K/n everywhere plus one extra on the first K%n sites. Always restricted.
Heights flat_config(int n, int K);

/// Reflection fixing site 0: out[i] = h[(n - i) % n].
Heights reflect(const Heights& h);

/// Cyclic shift forward by `shift` sites: out[(i + shift) % n] = h[i].
Heights rotate(const Heights& h, int shift);

// ---------------------------------------------------------------------------
// Local profile classes
// ---------------------------------------------------------------------------
//
// A particle hops from its column to a column 1 or 2 sites away. For a
// two-site hop the 3-column window around the departing site and the
// 3-column window around the landing site must each match one of four
// patterns. Windows are always read in the direction of motion: "behind"
// is the neighbour the particle moves away from, "ahead" the neighbour it
// moves toward; on the landing side "nearside" faces the departing site and
// "farside" lies beyond. Reading leftward hops right-to-left is what lets a
// single 16-entry rate table serve both directions and makes the dynamics
// reflection-equivariant for every table.

/// Departure patterns, with m the departing column height:
///   1: (m, m, m)   2: (m-1, m, m)   3: (m, m, m-1)   4: (m-1, m, m-1)
/// Returns the class 1..4, or 0 if no pattern matches.
int departure_class(int behind, int at, int ahead);

/// Arrival patterns, with a the landing column height before arrival:
///   1: (a, a, a)   2: (a, a, a+1)   3: (a+1, a, a)   4: (a+1, a, a+1)
/// Returns the class 1..4, or 0 if no pattern matches.
int arrival_class(int nearside, int at, int farside);

// ---------------------------------------------------------------------------
// Rate table
// ---------------------------------------------------------------------------

/// Nonnegative rates for every move class.
///
/// span2[d-1][a-1] is the rate of a two-site hop whose departure window
/// matched class d and arrival window matched class a; the same 16 entries
/// serve hops in both directions. span1 is the rate of a nearest-neighbour
/// slide, licensed by the step pattern (m, m-1) read in the direction of
/// motion.
///
/// The (departure, arrival) pair fixes where the landing column starts
/// relative to the departing one, which partitions the 16 entries into the
/// named move classes:
///   climb   c1..c4 = (1,1) (1,2) (2,1) (2,2)  landing starts level; the
///                                             particle ends one level up
///   descend d1..d4 = (4,4) (3,4) (4,3) (3,3)  landing starts two below;
///                                             the particle ends one down
///   skip    the remaining eight pairs         landing starts one below;
///                                             the particle stays level
/// The climb/descend numbering follows the factorized one-site evolution:
/// ci multiplies the i-th gain monomial and di the i-th loss monomial.
struct RateTable {
  double span2[4][4];
  double span1;

  /// Default preset: every entry 1.
  static RateTable unit();
  static RateTable zeros();

  double climb(int i) const;  // i in 1..4
  double descend(int i) const;
  void set_climb(int i, double rate);
  void set_descend(int i, double rate);
  void set_all_skips(double rate);

  /// All entries finite and >= 0.
  bool valid() const;

  bool operator==(const RateTable&) const = default;
};

/// The (departure, arrival) class pair an alias resolves to (1-based).
struct ClassPair {
  int dep;
  int arr;
};
ClassPair climb_classes(int i);    // i in 1..4
ClassPair descend_classes(int i);  // i in 1..4
ClassPair skip_classes(int i);     // i in 1..8

// ---------------------------------------------------------------------------
// Moves
// ---------------------------------------------------------------------------

enum class MoveKind { span2, span1 };

/// One legal particle hop: heights[source] -= 1, heights[target] += 1.
struct MoveEvent {
  int source;
  int target;
  int offset;  // -2, -1, +1, or +2; target == (source + offset) mod n
  double rate;
  MoveKind kind;
  int departure_class;  // 1..4 for span2 moves, 0 for span1
  int arrival_class;    // 1..4 for span2 moves, 0 for span1
};

/// Every move with positive rate out of `h`: profile windows must match,
/// the rate-table entry must be positive, and the post-move configuration
/// must still be restricted. Ordered by source site, then offset
/// (-2, -1, +1, +2). Self-targeting offsets on tiny lattices are skipped.
std::vector<MoveEvent> list_moves(const Heights& h, const RateTable& rates);

/// Appends the moves departing from `site` to `out`, in offset order.
/// list_moves is exactly this over all sites.
void site_moves(const Heights& h, int site, const RateTable& rates,
                std::vector<MoveEvent>& out);

/// Applies a move produced by list_moves. Throws InvalidMoveError if the
/// result would violate the restriction or drop a height below zero.
Heights apply_move(const Heights& h, const MoveEvent& move);

// ---------------------------------------------------------------------------
// State space
// ---------------------------------------------------------------------------

/// All restricted configurations with n sites and K particles, in
/// lexicographic order, with O(log N) lookup from configuration to index.
class StateSpace {
 public:
  StateSpace(int n, int K, std::vector<Heights> configs);

  int n() const { return n_; }
  int K() const { return K_; }
  std::size_t size() const { return configs_.size(); }
  const std::vector<Heights>& configs() const { return configs_; }
  const Heights& config(std::size_t i) const { return configs_[i]; }

  /// Position of `h` in the enumeration, or nullopt if absent.
  std::optional<std::size_t> index_of(const Heights& h) const;

 private:
  int n_;
  int K_;
  std::vector<Heights> configs_;
};

/// Enumerates the full state space for n sites and K particles.
/// Throws ResourceLimitError once more than `cap` configurations exist.
StateSpace enumerate_configs(int n, int K,
                             std::size_t cap = kDefaultStateCap);

}  // namespace crsos
