#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vac/instances.hpp"
#include "vac/mdp.hpp"
#include "vac/util.hpp"

namespace vac {

/// Behavior-policy rollout: equal-length state/action/reward arrays, one
/// triple per step. Sample-based runners need two lookahead steps, so at
/// least three triples are required before a trajectory is usable.
struct Trajectory {
  std::vector<int> states;
  std::vector<int> actions;
  std::vector<double> rewards;
  uint64_t seed = 0;
  std::string mdp_id;       // hash of the generating instance
  std::string behavior_id;  // hash of the behavior policy rows

  int steps() const { return (int)states.size(); }
};

std::string policy_hash(const Mat& policy);

/// Uniform start state, actions from the behavior rows, transitions from the
/// instance. All draws use the deterministic helpers in util.hpp.
Trajectory generate_trajectory(const FiniteMdp& mdp, const Mat& behavior,
                               int steps, uint64_t seed);

/// Delimited-text round trip: hash/seed header, then t,s,a,r rows.
std::string trajectory_to_text(const Trajectory& traj);
Trajectory trajectory_from_text(const std::string& text);
void save_trajectory(const Trajectory& traj, const std::string& path);
Trajectory load_trajectory(const std::string& path);

/// Checks state/action ranges and r_t = r(s_t, a_t) against the instance.
void validate_against(const Trajectory& traj, const FiniteMdp& mdp);

/// Surrogate second next-state sample at step t, conditioned on action
/// a_ref: the observed increment s_{t+2} - s_{t+1} is borrowed with the
/// drift of a_{t+1} swapped for the drift of a_ref, in the instance's wrap
/// geometry. With a_ref = a_{t+1} this is literally s_t + (s_{t+2} -
/// s_{t+1}); with a_ref = a_t it reproduces the true next state exactly on
/// noise-free dynamics. Requires t + 2 < steps.
int bff_next_state(const Trajectory& traj, int t, const StateGeometry& geom,
                   int a_ref);

enum class NextStateMode { exact, bff, resample };

NextStateMode next_state_mode_from_string(const std::string& name);
std::string to_string(NextStateMode mode);

/// Supplies the second next-state sample per mode: exact replays s_{t+1}
/// (only sound for noise-free dynamics), bff borrows the future increment,
/// resample draws fresh from the instance (needs simulator access).
struct NextStateSource {
  NextStateMode mode = NextStateMode::exact;
  const StateGeometry* geom = nullptr;  // bff
  const FiniteMdp* mdp = nullptr;       // resample
  Rng* rng = nullptr;                   // resample

  int next(const Trajectory& traj, int t, int a_ref) const;
};

}  // namespace vac
