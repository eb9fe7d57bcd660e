#pragma once

#include <vector>

#include "vac/mdp.hpp"

namespace vac {

struct OptimalSolution {
  Vec values;
  Mat policy;               // one-hot rows (greedy) or soft-max rows
  std::vector<int> greedy;  // argmax action per state, lowest index on ties
};

/// Exact value iteration: V(s) <- max_a [r(s,a) + gamma sum_t P(t|s,a) V(t)],
/// stopping once the sweep moves V by at most tol (1 - gamma) / (2 gamma) in
/// the max norm, which puts V within tol of V*. Throws std::runtime_error if
/// 1e6 sweeps are not enough. Ties in the final greedy pass resolve to the
/// lowest action index.
OptimalSolution value_iteration(const FiniteMdp& mdp, double tol = 1e-10);

/// Entropy-smoothed analogue: V(s) <- lambda log sum_a exp(q(s,a) / lambda)
/// with q = r + gamma P V, evaluated with the max-shift trick. The returned
/// policy is softmax(q / lambda) rowwise; greedy is the argmax of q.
/// Requires lambda > 0.
OptimalSolution soft_value_iteration(const FiniteMdp& mdp, double lambda,
                                     double tol = 1e-10);

/// min_s [q(s, a*) - max_{a != a*} q(s, a)] at q = r + gamma P v_star.
/// Positive iff the optimal action is unique in every state. Requires at
/// least two actions.
double action_gap(const FiniteMdp& mdp, const Vec& v_star);

/// Smallest residual weight guaranteeing the exact-recovery regime:
/// (1 / min_s rho_s) / (alpha (1 - gamma)^2). Validates 0 < alpha < gap / 3
/// against the instance's action gap (skipped when only one action exists).
double beta_threshold(const FiniteMdp& mdp, double alpha,
                      const StateDistribution& rho);

}  // namespace vac
