#include "vac/model_free.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace vac {

namespace {

void check_window(const Trajectory& traj, int begin, int len) {
  // Two lookahead steps stay in reserve for every consumed index, whatever
  // the next-state mode, so all modes see identical batch counts.
  if (begin < 0 || len < 1 || begin + len > traj.steps() - 2)
    throw std::invalid_argument("batch window out of trajectory bounds");
}

Vec state_values(const Mat& q, const Mat& policy) {
  return (q.array() * policy.array()).rowwise().sum();
}

}  // namespace

double BatchStats::min_visited() const {
  double m = std::numeric_limits<double>::infinity();
  for (size_t s = 0; s < visits.size(); ++s)
    if (visits[s] > 0) m = std::min(m, ell_hat[s]);
  return m;
}

BatchStats batch_residuals(const Mat& q, const Mat& policy,
                           const Trajectory& traj, int begin, int len,
                           double lambda, double gamma) {
  check_window(traj, begin, len);
  if (q.rows() != policy.rows() || q.cols() != policy.cols())
    throw std::invalid_argument("batch_residuals: Q/policy shape mismatch");
  const int n = (int)q.rows();
  // Per-state bootstrap target sum_b [Q(s,b) - lambda log pi(s,b)] pi(s,b).
  Vec target = state_values(q, policy);
  if (lambda > 0.0) target -= lambda * neg_entropy(policy);

  BatchStats stats;
  stats.residuals.resize(len);
  stats.ell_hat = Vec::Zero(n);
  stats.visits.assign(n, 0);
  for (int j = 0; j < len; ++j) {
    int t = begin + j;
    int s = traj.states[t], a = traj.actions[t], s1 = traj.states[t + 1];
    if (s >= n || a >= q.cols() || s1 >= n)
      throw std::invalid_argument("batch_residuals: trajectory out of range");
    double L = q(s, a) - traj.rewards[t] - gamma * target[s1];
    stats.residuals[j] = L;
    stats.ell_hat[s] += L;
    stats.visits[s] += 1;
  }
  for (int s = 0; s < n; ++s)
    if (stats.visits[s] > 0) stats.ell_hat[s] /= stats.visits[s];
  return stats;
}

double apply_hhat(double residual, double state_mean, Variant variant) {
  switch (variant) {
    case Variant::vanilla:
      return residual;
    case Variant::clipping:
      return state_mean > 0.0 ? residual : 0.0;
    case Variant::flipping:
      return state_mean < 0.0 ? -residual : residual;
  }
  throw std::invalid_argument("apply_hhat: unknown variant");
}

std::vector<int> surrogate_next_states(const Trajectory& traj, int begin,
                                       int len,
                                       const NextStateSource& source) {
  check_window(traj, begin, len);
  std::vector<int> out(len);
  for (int j = 0; j < len; ++j)
    out[j] = source.next(traj, begin + j, traj.actions[begin + j]);
  return out;
}

Mat grad_q_batch(const Mat& q, const Mat& policy, const Trajectory& traj,
                 int begin, int len, double beta, double gamma,
                 const BatchStats& stats,
                 const std::vector<int>& next_states) {
  check_window(traj, begin, len);
  if ((int)stats.residuals.size() != len || (int)next_states.size() != len)
    throw std::invalid_argument("grad_q_batch: stats/window mismatch");
  Mat g = Mat::Zero(q.rows(), q.cols());
  for (int j = 0; j < len; ++j) {
    int t = begin + j;
    double L = stats.residuals[j];
    g(traj.states[t], traj.actions[t]) += -1.0 + beta * L;
    g.row(next_states[j]) -= beta * L * gamma * policy.row(next_states[j]);
  }
  return g / len;
}

Mat grad_pi_batch(const Mat& q, const Mat& policy, const Trajectory& traj,
                  int begin, int len, double beta, double lambda, double gamma,
                  Variant variant, const BatchStats& stats,
                  const std::vector<int>& next_states) {
  check_window(traj, begin, len);
  if ((int)stats.residuals.size() != len || (int)next_states.size() != len)
    throw std::invalid_argument("grad_pi_batch: stats/window mismatch");
  if (lambda > 0.0 && policy.minCoeff() <= 0.0)
    throw std::invalid_argument(
        "grad_pi_batch: lambda > 0 requires a strictly positive policy");
  // bracket(s,b) = V(s) - Q(s,b) + lambda log pi(s,b) - lambda H(s).
  Vec v = state_values(q, policy);
  Vec h = neg_entropy(policy);
  Mat bracket = (-q).colwise() + (v - lambda * h);
  if (lambda > 0.0) bracket += lambda * policy.array().log().matrix();

  Mat f = Mat::Zero(q.rows(), q.cols());
  for (int j = 0; j < len; ++j) {
    int t = begin + j;
    double hl = apply_hhat(stats.residuals[j], stats.ell_hat[traj.states[t]],
                           variant);
    int s1 = next_states[j];
    f.row(s1) += gamma * beta * hl *
                 (policy.row(s1).array() * bracket.row(s1).array()).matrix();
  }
  return f / len;
}

RunTrace run_model_free(const FiniteMdp& mdp, const StateGeometry& geom,
                        const Mat& behavior, const HyperParams& params,
                        Variant variant, int steps, uint64_t seed,
                        NextStateMode mode, const MfRunOptions& opts,
                        const TraceRefs& refs) {
  validate(params);
  if (opts.stride < 1)
    throw std::invalid_argument("run_model_free: stride must be >= 1");
  if (!(opts.init_scale >= 0.0))
    throw std::invalid_argument("run_model_free: init_scale must be >= 0");
  const int m = params.batch_size;
  Trajectory traj = generate_trajectory(mdp, behavior, steps, seed);
  const int batches = (steps - 2) / m;
  if (batches < 1)
    throw std::invalid_argument(
        "run_model_free: trajectory shorter than one batch window");
  Rng resample_rng(seed, 0x5eedu);
  NextStateSource source{mode, &geom, &mdp, &resample_rng};
  // Each consumed step costs one stored transition, plus a fresh one when
  // resampling.
  const long long per_sample = mode == NextStateMode::resample ? 2 : 1;

  Mat q = Mat::Zero(mdp.n_states, mdp.n_actions);
  SoftmaxPolicy p = SoftmaxPolicy::uniform(mdp.n_states, mdp.n_actions);
  if (opts.init_scale > 0.0) {
    Rng init_rng(seed, 0x7e7au);
    for (int s = 0; s < mdp.n_states; ++s)
      for (int a = 0; a < mdp.n_actions; ++a)
        p.logits(s, a) = opts.init_scale * (2.0 * init_rng.uniform() - 1.0);
    p.reshift();
  }
  RunTrace trace;

  auto record = [&](long k, const Mat& pi, const BatchStats& stats) {
    TraceRow row;
    row.iter = k;
    row.l1_policy_error = policy_error(pi, refs.pi_star);
    row.linf_value_error =
        (state_values(q, pi) - refs.v_ref).cwiseAbs().maxCoeff();
    row.min_residual = stats.min_visited();
    double obj = 0.0;
    for (size_t j = 0; j < stats.residuals.size(); ++j) {
      int t = (int)(k < batches ? k * m + (long)j : (batches - 1) * m + j);
      obj += -q(traj.states[t], traj.actions[t]) +
             0.5 * params.beta * stats.residuals[j] * stats.residuals[j];
    }
    row.objective = obj / std::max<size_t>(1, stats.residuals.size());
    row.negative_residual = row.min_residual < 0.0;
    // Counts the window the row's statistics were computed on.
    row.samples =
        (std::min<long long>(k, batches - 1) + 1) * m * per_sample;
    trace.rows.push_back(row);
  };

  long k = 0;
  for (; k < batches; ++k) {
    Mat pi = p.probs();
    // Runaway logits push soft-max rows to exact zero, where the
    // entropy-regularized gradients stop being defined. Classify as a
    // divergence instead of surfacing the precondition throw.
    if (params.lambda > 0.0 && pi.minCoeff() <= 0.0) {
      trace.diverged = true;
      trace.failure_iter = k;
      trace.message = "policy underflow under entropy regularization";
      break;
    }
    BatchStats stats =
        batch_residuals(q, pi, traj, (int)k * m, m, params.lambda, mdp.gamma);
    if (k % opts.stride == 0) record(k, pi, stats);
    std::vector<int> nexts = surrogate_next_states(traj, (int)k * m, m, source);
    Mat gq = grad_q_batch(q, pi, traj, (int)k * m, m, params.beta, mdp.gamma,
                          stats, nexts);
    Mat f = grad_pi_batch(q, pi, traj, (int)k * m, m, params.beta,
                          params.lambda, mdp.gamma, variant, stats, nexts);
    q -= params.eta_q * gq;
    p.logits -= params.eta_pi * f;
    p.reshift();
    if (!q.allFinite() || !p.logits.allFinite() ||
        q.cwiseAbs().maxCoeff() > opts.divergence_norm) {
      trace.diverged = true;
      trace.failure_iter = k + 1;
      trace.message = !q.allFinite() || !p.logits.allFinite()
                          ? "non-finite iterate"
                          : "Q norm exceeded divergence guard";
      break;
    }
  }
  trace.iters_run = trace.diverged ? k + 1 : k;
  if (!trace.diverged) {
    // Re-score the last window at the final parameters.
    Mat pi = p.probs();
    BatchStats stats = batch_residuals(q, pi, traj, (int)(batches - 1) * m, m,
                                       params.lambda, mdp.gamma);
    record(batches, pi, stats);
    trace.final_policy = pi;
    trace.final_v = state_values(q, pi);
  }
  trace.final_q = std::move(q);
  return trace;
}

void v_formulation_step(VfState& state, const FiniteMdp& mdp,
                        const Mat& behavior, const Trajectory& traj, int begin,
                        int len, const HyperParams& params, Variant variant,
                        const NextStateSource& source) {
  check_window(traj, begin, len);
  validate(params);
  if (source.mode == NextStateMode::exact)
    throw std::invalid_argument(
        "v_formulation_step: replaying s_{t+1} correlates the two sample "
        "factors; use bff or independent-resample");
  if (behavior.minCoeff() <= 0.0)
    throw std::invalid_argument(
        "v_formulation_step: behavior rows must be strictly positive");
  const int n = (int)state.v.size(), na = (int)behavior.cols();
  Mat pi = policy_from_logits(state.logits);
  if (params.lambda > 0.0 && pi.minCoeff() <= 0.0)
    throw std::invalid_argument(
        "v_formulation_step: lambda > 0 requires a strictly positive policy");
  Vec h = neg_entropy(pi);
  Mat tau = pi.cwiseQuotient(behavior);
  // lambda pi (log pi - H) rowwise, the entropy part of the logit gradient.
  Mat ent = Mat::Zero(n, na);
  if (params.lambda > 0.0)
    ent = params.lambda *
          (pi.array() * (pi.array().log().colwise() - h.array())).matrix();

  std::vector<double> residuals(len);
  Vec ell_hat = Vec::Zero(n);
  std::vector<int> visits(n, 0);
  for (int j = 0; j < len; ++j) {
    int t = begin + j;
    int s = traj.states[t], a = traj.actions[t], s1 = traj.states[t + 1];
    double L = state.v[s] - traj.rewards[t] - mdp.gamma * tau(s, a) * state.v[s1];
    if (params.lambda > 0.0) L += params.lambda * h[s];
    residuals[j] = L;
    ell_hat[s] += L;
    visits[s] += 1;
  }
  for (int s = 0; s < n; ++s)
    if (visits[s] > 0) ell_hat[s] /= visits[s];

  Vec gv = Vec::Zero(n);
  Mat gpi = Mat::Zero(n, na);
  for (int j = 0; j < len; ++j) {
    int t = begin + j;
    int s = traj.states[t];
    int a2 = traj.actions[t + 1];  // independent action sample at s
    int s2 = source.next(traj, t, a2);
    double L = residuals[j];
    double tv = tau(s, a2) * state.v[s2];
    gv[s] += -1.0 + params.beta * L;
    gv[s2] -= params.beta * L * mdp.gamma * tau(s, a2);
    double hl = apply_hhat(L, ell_hat[s], variant);
    // -gamma tau V(s') d log pi(s, a') + entropy part, per logit b.
    gpi.row(s) += params.beta * hl *
                  (-mdp.gamma * tv *
                       (Vec::Unit(na, a2).transpose() - pi.row(s)) +
                   ent.row(s));
  }
  state.v -= params.eta_v / len * gv;
  state.logits -= params.eta_pi / len * gpi;
  SoftmaxPolicy sp{std::move(state.logits)};
  sp.reshift();
  state.logits = std::move(sp.logits);
}

RunTrace run_v_formulation(const FiniteMdp& mdp, const StateGeometry& geom,
                           const Mat& behavior, const HyperParams& params,
                           Variant variant, int steps, uint64_t seed,
                           NextStateMode mode, const MfRunOptions& opts,
                           const TraceRefs& refs) {
  validate(params);
  if (opts.stride < 1)
    throw std::invalid_argument("run_v_formulation: stride must be >= 1");
  if (!(opts.init_scale >= 0.0))
    throw std::invalid_argument("run_v_formulation: init_scale must be >= 0");
  const int m = params.batch_size;
  Trajectory traj = generate_trajectory(mdp, behavior, steps, seed);
  const int batches = (steps - 2) / m;
  if (batches < 1)
    throw std::invalid_argument(
        "run_v_formulation: trajectory shorter than one batch window");
  Rng resample_rng(seed, 0x5eedu);
  NextStateSource source{mode, &geom, &mdp, &resample_rng};
  const long long per_sample = mode == NextStateMode::resample ? 2 : 1;

  VfState state;
  state.v = Vec::Zero(mdp.n_states);
  state.logits = Mat::Zero(mdp.n_states, mdp.n_actions);
  if (opts.init_scale > 0.0) {
    Rng init_rng(seed, 0x7e7au);
    for (int s = 0; s < mdp.n_states; ++s)
      for (int a = 0; a < mdp.n_actions; ++a)
        state.logits(s, a) = opts.init_scale * (2.0 * init_rng.uniform() - 1.0);
    SoftmaxPolicy sp{std::move(state.logits)};
    sp.reshift();
    state.logits = std::move(sp.logits);
  }
  RunTrace trace;

  auto record = [&](long k) {
    Mat pi = policy_from_logits(state.logits);
    TraceRow row;
    row.iter = k;
    row.l1_policy_error = policy_error(pi, refs.pi_star);
    row.linf_value_error = (state.v - refs.v_ref).cwiseAbs().maxCoeff();
    // Residual stats of the upcoming (or, at the end, last) window at the
    // current parameters.
    int begin = (int)std::min<long>(k, batches - 1) * m;
    Vec h = neg_entropy(pi);
    Mat tau = pi.cwiseQuotient(behavior);
    double min_mean = std::numeric_limits<double>::infinity();
    Vec sums = Vec::Zero(mdp.n_states);
    std::vector<int> counts(mdp.n_states, 0);
    double obj = 0.0;
    for (int j = 0; j < m; ++j) {
      int t = begin + j;
      int s = traj.states[t];
      double L = state.v[s] - traj.rewards[t] -
                 mdp.gamma * tau(s, traj.actions[t]) * state.v[traj.states[t + 1]];
      if (params.lambda > 0.0) L += params.lambda * h[s];
      sums[s] += L;
      counts[s] += 1;
      obj += -state.v[s] + 0.5 * params.beta * L * L;
    }
    for (int s = 0; s < mdp.n_states; ++s)
      if (counts[s] > 0) min_mean = std::min(min_mean, sums[s] / counts[s]);
    row.min_residual = min_mean;
    row.objective = obj / m;
    row.negative_residual = row.min_residual < 0.0;
    row.samples =
        (std::min<long long>(k, batches - 1) + 1) * m * per_sample;
    trace.rows.push_back(row);
  };

  long k = 0;
  for (; k < batches; ++k) {
    if (params.lambda > 0.0 &&
        policy_from_logits(state.logits).minCoeff() <= 0.0) {
      trace.diverged = true;
      trace.failure_iter = k;
      trace.message = "policy underflow under entropy regularization";
      break;
    }
    if (k % opts.stride == 0) record(k);
    v_formulation_step(state, mdp, behavior, traj, (int)k * m, m, params,
                       variant, source);
    if (!state.v.allFinite() || !state.logits.allFinite() ||
        state.v.cwiseAbs().maxCoeff() > opts.divergence_norm) {
      trace.diverged = true;
      trace.failure_iter = k + 1;
      trace.message = !state.v.allFinite() || !state.logits.allFinite()
                          ? "non-finite iterate"
                          : "value norm exceeded divergence guard";
      break;
    }
  }
  trace.iters_run = trace.diverged ? k + 1 : k;
  if (!trace.diverged) {
    record(batches);
    trace.final_policy = policy_from_logits(state.logits);
  }
  trace.final_v = std::move(state.v);
  return trace;
}

}  // namespace vac
