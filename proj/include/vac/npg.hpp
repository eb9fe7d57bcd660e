#pragma once

#include "vac/mdp.hpp"
#include "vac/model_free.hpp"
#include "vac/trace.hpp"
#include "vac/trajectory.hpp"

namespace vac {

// One mirror-descent policy step. The entropy term shows up as a power on the
// current policy, so the exponent 1 - lambda*eta_pi/(1-gamma) must stay
// positive; rows are renormalized in log space.
Mat npg_policy_update(const Mat& policy, const Mat& q, double eta_pi,
                      double lambda, double gamma);

struct QEstimate {
  Mat q;
  long inner_iters = 0;
  // Mean squared Q movement of the last inner step, the stopping statistic.
  double last_step_stat = std::numeric_limits<double>::infinity();
  // Smallest per-state mean TD error over the last consumed batch.
  double min_state_mean_w = std::numeric_limits<double>::infinity();
  bool converged = false;
  bool exhausted = false;
  bool diverged = false;
};

// TD-style least-squares loop for Q under a fixed policy. Batches are taken
// sequentially from the trajectory at *cursor, which advances past every
// consumed batch so successive calls never reuse data. Returns early with
// exhausted set when fewer than one batch remains. Hitting max_inner without
// meeting eps is an error.
QEstimate npg_estimate_q(const Mat& q_init, const Mat& policy,
                         const Trajectory& traj, int* cursor,
                         const HyperParams& params, double gamma, double eps,
                         const NextStateSource& source, long max_inner,
                         double divergence_norm);

struct NpgOptions {
  long outer_iters = 100;
  double eps = 2e-4;
  long max_inner = 10000;
  double divergence_norm = 1e12;
};

// Outer loop: estimate Q for the current policy (warm started from the
// previous estimate), then apply npg_policy_update. One trace row per outer
// iteration; stops cleanly when the trajectory runs out.
RunTrace run_npg(const FiniteMdp& mdp, const StateGeometry& geom,
                 const Mat& behavior, const HyperParams& params, int steps,
                 uint64_t seed, NextStateMode mode, const NpgOptions& opts,
                 const TraceRefs& refs);

}  // namespace vac
