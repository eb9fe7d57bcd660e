#include "vac/npg.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "vac/util.hpp"

namespace vac {

Mat npg_policy_update(const Mat& policy, const Mat& q, double eta_pi,
                      double lambda, double gamma) {
  if (policy.rows() != q.rows() || policy.cols() != q.cols())
    throw std::invalid_argument("npg_policy_update: policy/Q shape mismatch");
  if (!(gamma >= 0.0 && gamma < 1.0))
    throw std::invalid_argument("npg_policy_update: gamma must be in [0,1)");
  if (policy.minCoeff() <= 0.0)
    throw std::invalid_argument(
        "npg_policy_update: policy must be strictly positive");
  double c = 1.0 - lambda * eta_pi / (1.0 - gamma);
  if (c <= 0.0)
    throw std::invalid_argument(
        "npg_policy_update: need lambda*eta_pi/(1-gamma) < 1");
  Mat logits =
      c * policy.array().log().matrix() + (eta_pi / (1.0 - gamma)) * q;
  return policy_from_logits(logits);
}

QEstimate npg_estimate_q(const Mat& q_init, const Mat& policy,
                         const Trajectory& traj, int* cursor,
                         const HyperParams& params, double gamma, double eps,
                         const NextStateSource& source, long max_inner,
                         double divergence_norm) {
  if (cursor == nullptr)
    throw std::invalid_argument("npg_estimate_q: cursor is required");
  if (eps <= 0.0) throw std::invalid_argument("npg_estimate_q: eps must be > 0");
  if (max_inner < 1)
    throw std::invalid_argument("npg_estimate_q: max_inner must be >= 1");
  const int m = params.batch_size;
  const int usable = traj.steps() - 2;
  const int n = (int)q_init.rows();

  QEstimate est;
  est.q = q_init;
  for (long j = 0; j < max_inner; ++j) {
    if (*cursor + m > usable) {
      est.exhausted = true;
      return est;
    }
    BatchStats stats =
        batch_residuals(est.q, policy, traj, *cursor, m, params.lambda, gamma);
    Mat g = Mat::Zero(est.q.rows(), est.q.cols());
    for (int i = 0; i < m; ++i) {
      int t = *cursor + i;
      double w = stats.residuals[i];
      g(traj.states[t], traj.actions[t]) += w;
      int s1 = source.next(traj, t, traj.actions[t]);
      g.row(s1) -= gamma * w * policy.row(s1);
    }
    Mat step = (params.eta_q / m) * g;
    est.q -= step;
    *cursor += m;
    est.inner_iters = j + 1;
    est.last_step_stat = step.squaredNorm() / n;
    est.min_state_mean_w = stats.min_visited();
    if (!est.q.allFinite() || est.q.cwiseAbs().maxCoeff() > divergence_norm) {
      est.diverged = true;
      return est;
    }
    if (est.last_step_stat < eps) {
      est.converged = true;
      return est;
    }
  }
  throw std::runtime_error(
      "npg_estimate_q: no convergence after " + std::to_string(max_inner) +
      " inner iterations, last step statistic " +
      format_double(est.last_step_stat));
}

RunTrace run_npg(const FiniteMdp& mdp, const StateGeometry& geom,
                 const Mat& behavior, const HyperParams& params, int steps,
                 uint64_t seed, NextStateMode mode, const NpgOptions& opts,
                 const TraceRefs& refs) {
  validate(params);
  if (opts.outer_iters < 1)
    throw std::invalid_argument("run_npg: outer_iters must be >= 1");
  Trajectory traj = generate_trajectory(mdp, behavior, steps, seed);
  Rng resample_rng(seed, 0x5eedu);
  NextStateSource source{mode, &geom, &mdp, &resample_rng};
  const long long per_sample = mode == NextStateMode::resample ? 2 : 1;

  Mat q = Mat::Zero(mdp.n_states, mdp.n_actions);
  Mat pi = Mat::Constant(mdp.n_states, mdp.n_actions, 1.0 / mdp.n_actions);
  int cursor = 0;
  RunTrace trace;
  for (long k = 0; k < opts.outer_iters; ++k) {
    QEstimate est =
        npg_estimate_q(q, pi, traj, &cursor, params, mdp.gamma, opts.eps,
                       source, opts.max_inner, opts.divergence_norm);
    if (est.diverged) {
      trace.diverged = true;
      trace.failure_iter = k + 1;
      trace.iters_run = k + 1;
      trace.message = "non-finite or oversized Q estimate";
      break;
    }
    if (est.exhausted) {
      // Partial estimate is discarded; results so far stand.
      trace.message = "trajectory exhausted";
      break;
    }
    q = est.q;
    Vec v_est = (q.array() * pi.array()).rowwise().sum();
    pi = npg_policy_update(pi, q, params.eta_pi, params.lambda, mdp.gamma);
    TraceRow row;
    row.iter = k + 1;
    row.l1_policy_error = policy_error(pi, refs.pi_star);
    row.linf_value_error = (v_est - refs.v_ref).cwiseAbs().maxCoeff();
    row.min_residual = est.min_state_mean_w;
    row.objective = est.last_step_stat;
    row.negative_residual = row.min_residual < 0.0;
    row.samples = (long long)cursor * per_sample;
    trace.rows.push_back(row);
    trace.iters_run = k + 1;
  }
  trace.final_policy = pi;
  trace.final_v = (q.array() * pi.array()).rowwise().sum();
  trace.final_q = std::move(q);
  return trace;
}

}  // namespace vac
