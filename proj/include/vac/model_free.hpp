#pragma once

#include <cstdint>
#include <vector>

#include "vac/instances.hpp"
#include "vac/mdp.hpp"
#include "vac/trace.hpp"
#include "vac/trajectory.hpp"

namespace vac {

/// Residual statistics of one batch window, all evaluated at the parameters
/// passed in (start-of-batch semantics: callers snapshot before updating).
struct BatchStats {
  std::vector<double> residuals;  // L per sample, window order
  Vec ell_hat;                    // per-state mean of L over the window, 0 if unvisited
  std::vector<int> visits;

  double min_visited() const;
};

/// L = Q(s_t, a_t) - r_t - gamma sum_b [Q(s_{t+1}, b) - lambda log pi(s_{t+1},
/// b)] pi(s_{t+1}, b) per sample; zero-probability actions contribute 0 to
/// the target (p log p -> 0).
BatchStats batch_residuals(const Mat& q, const Mat& policy,
                           const Trajectory& traj, int begin, int len,
                           double lambda, double gamma);

/// Sample-side transform: vanilla keeps L; clipping zeroes it unless the
/// state's batch-mean residual is positive (strictly); flipping negates it
/// when the batch mean is negative (sign(0) counts as positive).
double apply_hhat(double residual, double state_mean, Variant variant);

/// One surrogate draw per sample, conditioned on the executed action a_t.
/// Shared by the Q and policy gradients so both see the same draw.
std::vector<int> surrogate_next_states(const Trajectory& traj, int begin,
                                       int len, const NextStateSource& source);

/// Batch mean of the Q gradient: sample t adds (-1 + beta L) at (s_t, a_t)
/// and -beta L gamma pi(s', b) at every (s', b), s' the surrogate.
Mat grad_q_batch(const Mat& q, const Mat& policy, const Trajectory& traj,
                 int begin, int len, double beta, double gamma,
                 const BatchStats& stats,
                 const std::vector<int>& next_states);

/// Batch mean of the soft-max logit update: sample t adds, for every b,
///   gamma pi(s', b) beta hhat(L) [V(s') - Q(s', b) + lambda log pi(s', b)
///                                - lambda H(s')]
/// at (s', b), where V(s) = sum_a Q(s,a) pi(s,a). Throws on lambda > 0 with
/// zero-probability actions.
Mat grad_pi_batch(const Mat& q, const Mat& policy, const Trajectory& traj,
                  int begin, int len, double beta, double lambda, double gamma,
                  Variant variant, const BatchStats& stats,
                  const std::vector<int>& next_states);

struct MfRunOptions {
  int stride = 1;  // record every stride-th batch
  double divergence_norm = 1e12;
  // Draw initial logits uniformly from [-init_scale, init_scale] (seeded
  // per run). Zero keeps the uniform policy start.
  double init_scale = 0.0;
};

/// Q-space run: generates a rollout of `steps` transitions under the
/// behavior rows, then consumes it in batches of params.batch_size. Every
/// consumed index keeps two lookahead steps in reserve regardless of mode,
/// so exact and bff runs see identical batch counts. Rows are recorded at
/// the start of each recorded batch plus one final row that re-scores the
/// last window at the final parameters.
RunTrace run_model_free(const FiniteMdp& mdp, const StateGeometry& geom,
                        const Mat& behavior, const HyperParams& params,
                        Variant variant, int steps, uint64_t seed,
                        NextStateMode mode, const MfRunOptions& opts,
                        const TraceRefs& refs);

/// Value-space state: V over states plus policy logits.
struct VfState {
  Vec v;
  Mat logits;
};

/// One batch of the value-space update. The importance ratio tau = pi /
/// behavior reweights the value term; rewards are used as sampled, so
/// off-policy unbiasedness additionally needs action-independent rewards
/// (true for the bundled benchmark instances). The second sample pair is
/// (a' = a_{t+1}, surrogate s' conditioned on a'); exact mode is rejected
/// because replaying s_{t+1} correlates the two factors through a_t.
void v_formulation_step(VfState& state, const FiniteMdp& mdp,
                        const Mat& behavior, const Trajectory& traj, int begin,
                        int len, const HyperParams& params, Variant variant,
                        const NextStateSource& source);

RunTrace run_v_formulation(const FiniteMdp& mdp, const StateGeometry& geom,
                           const Mat& behavior, const HyperParams& params,
                           Variant variant, int steps, uint64_t seed,
                           NextStateMode mode, const MfRunOptions& opts,
                           const TraceRefs& refs);

}  // namespace vac
