#pragma once

#include <string>
#include <vector>

#include "vac/mdp.hpp"

namespace vac {

/// One recorded point of a run. samples counts environment transitions
/// consumed so far (0 for model-based runs, which use exact expectations).
struct TraceRow {
  long iter = 0;
  double l1_policy_error = 0.0;
  double linf_value_error = 0.0;
  double min_residual = 0.0;
  double objective = 0.0;
  bool negative_residual = false;
  long long samples = 0;
};

struct RunTrace {
  std::vector<TraceRow> rows;
  bool diverged = false;
  long failure_iter = -1;    // iteration at which the run was cut off
  std::string message;       // empty on a clean stop
  long iters_run = 0;
  Vec final_v;               // value-style iterate (empty if none)
  Mat final_q;               // Q table (empty for model-based runs)
  Mat final_policy;          // probabilities at the last iterate
};

/// References every trace row is scored against: the unregularized optimal
/// policy (errors in the figures are always vs pi*) and the value target
/// (V* for lambda = 0, the smoothed optimum otherwise).
struct TraceRefs {
  Mat pi_star;
  Vec v_ref;
};

/// sum_{s,a} |pi(s,a) - ref(s,a)|. Uniform vs one-hot over two actions
/// contributes exactly 1 per state.
double policy_error(const Mat& policy, const Mat& ref);

}  // namespace vac
