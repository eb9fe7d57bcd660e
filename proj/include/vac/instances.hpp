#pragma once

#include <cstdint>
#include <string>

#include "vac/mdp.hpp"

namespace vac {

/// Index geometry of a benchmark instance: how actions move the state
/// deterministically and how displacements wrap. Needed by the
/// displacement-borrowing surrogate, which re-applies drifts in index space.
struct StateGeometry {
  enum class Kind { none, ring, torus };
  Kind kind = Kind::none;
  int n = 0;             // ring period
  int n1 = 0, n2 = 0;    // torus periods (row-major index i * n2 + j)

  int num_states() const;
  int num_actions() const;
  /// Deterministic step (the sigma = 0 dynamics).
  int drift_step(int s, int a) const;
  /// s_t plus the observed increment s_t2 - s_t1, with the drift of a_t1
  /// swapped for the drift of a_ref, all modulo the wrap rule.
  int borrow_displacement(int s_t, int s_t1, int s_t2, int a_ref,
                          int a_t1) const;
};

/// Ring of n states; actions 0 -> +1, 1 -> -1. The moved position
/// k + a + sigma * Z is rounded to the nearest integer bin [t-1/2, t+1/2),
/// with [n-1/2, n) wrapping to 0; rows integrate the normal density over
/// bins, truncated at 8 sigma and renormalized. sigma = 0 gives exact
/// permutations. r(k, a) = 1 + sin(2 pi k / n).
struct RingSpec {
  int n = 5;
  double sigma = 0.0;
  double gamma = 0.9;
};

FiniteMdp ring_mdp(const RingSpec& spec);
StateGeometry ring_geometry(const RingSpec& spec);

/// n1 x n2 torus, states row-major (i * n2 + j); actions 0..3 move
/// (+1,0), (-1,0), (0,+1), (0,-1). The moved coordinate is i + (1 + sigma Z) a
/// with the same rounding/wrap rule per coordinate.
/// r(i, j) = 2 + sin(2 pi i / n1) + cos(2 pi j / n2).
struct TorusSpec {
  int n1 = 5;
  int n2 = 5;
  double sigma = 0.0;
  double gamma = 0.9;
};

FiniteMdp torus_mdp(const TorusSpec& spec);
StateGeometry torus_geometry(const TorusSpec& spec);

/// Random instance: transition rows are Dirichlet(1,...,1) (normalized
/// exponentials of seeded uniforms), rewards uniform in [0, 1). Regenerates
/// with an incremented sub-seed (at most 100 tries) until the optimal action
/// gap is strictly positive, so greedy comparisons are well-posed. With one
/// action the gap check is skipped.
FiniteMdp random_mdp(int n_states, int n_actions, double gamma, uint64_t seed);

/// Plain-text serialization; load validates stochasticity and throws
/// std::invalid_argument with every violation listed. Round-trips bitwise.
std::string mdp_to_text(const FiniteMdp& mdp);
FiniteMdp mdp_from_text(const std::string& text);
void save_mdp(const FiniteMdp& mdp, const std::string& path);
FiniteMdp load_mdp(const std::string& path);

/// Hash of the canonical serialization; stamped into trajectory files.
std::string mdp_hash(const FiniteMdp& mdp);

}  // namespace vac
