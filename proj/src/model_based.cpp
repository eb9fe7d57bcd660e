#include "vac/model_based.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "vac/oracle.hpp"
#include "vac/util.hpp"

namespace vac {

namespace {

// Per-iteration scratch so the run loop does not reallocate.
struct Work {
  Mat pi;
  Mat log_pi;  // filled only when lambda > 0 and theta is needed
  Vec ell;
  Vec w;
  Vec gv;
  Mat gth;
  std::vector<Vec> pav;
  Vec ppiv;
  Vec rpi;
  Vec th;
  Vec bracket;
  Vec scatter;
  double objective = 0.0;
  // succ[a][s] = j when row s of P^a is exactly the indicator of state j
  // (empty when action a has any stochastic row). Deterministic actions
  // then use O(n) gather/scatter instead of the dense products; the
  // dropped terms are exact zeros, so the values do not change.
  std::vector<std::vector<int>> succ;
  bool succ_checked = false;
};

void detect_deterministic_actions(const FiniteMdp& mdp, Work& wk) {
  const int n = mdp.n_states, na = mdp.n_actions;
  wk.succ.assign(na, {});
  for (int a = 0; a < na; ++a) {
    std::vector<int> succ(n, -1);
    bool one_hot = true;
    for (int s = 0; s < n && one_hot; ++s)
      for (int j = 0; j < n; ++j) {
        double p = mdp.transitions[a](s, j);
        if (p == 1.0 && succ[s] < 0) {
          succ[s] = j;
        } else if (p != 0.0) {
          one_hot = false;
          break;
        }
      }
    if (one_hot &&
        std::all_of(succ.begin(), succ.end(), [](int j) { return j >= 0; }))
      wk.succ[a] = std::move(succ);
  }
  wk.succ_checked = true;
}

void compute_gradients(const FiniteMdp& mdp, const Vec& v,
                       const StateDistribution& rho, const HyperParams& params,
                       Variant variant, bool need_theta, Work& wk) {
  const int n = mdp.n_states, na = mdp.n_actions;
  if (!wk.succ_checked) detect_deterministic_actions(mdp, wk);
  wk.pav.resize(na);
  wk.ppiv.setZero(n);
  for (int a = 0; a < na; ++a) {
    const std::vector<int>& succ = wk.succ[a];
    if (succ.empty()) {
      wk.pav[a].noalias() = mdp.transitions[a] * v;
    } else {
      wk.pav[a].resize(n);
      for (int s = 0; s < n; ++s) wk.pav[a][s] = v[succ[s]];
    }
    wk.ppiv += wk.pi.col(a).cwiseProduct(wk.pav[a]);
  }
  wk.rpi = wk.pi.col(0).cwiseProduct(mdp.rewards.col(0));
  for (int a = 1; a < na; ++a)
    wk.rpi += wk.pi.col(a).cwiseProduct(mdp.rewards.col(a));
  wk.ell = v - mdp.gamma * wk.ppiv - wk.rpi;
  if (params.lambda > 0.0) {
    // One log pass serves both the entropy term and the theta bracket.
    if (need_theta) wk.log_pi.resize(n, na);
    for (int s = 0; s < n; ++s) {
      double h = 0.0;
      for (int a = 0; a < na; ++a) {
        double pr = wk.pi(s, a);
        if (pr > 0.0) {
          double lp = std::log(pr);
          if (need_theta) wk.log_pi(s, a) = lp;
          h += pr * lp;
        } else if (need_theta) {
          throw std::invalid_argument(
              "grad_theta: lambda > 0 requires a strictly positive policy");
        }
      }
      wk.ell[s] += params.lambda * h;
    }
  }
  wk.w = wk.ell.cwiseProduct(rho.weights);
  wk.gv = wk.w;
  for (int a = 0; a < na; ++a) {
    const std::vector<int>& succ = wk.succ[a];
    if (succ.empty()) {
      wk.gv -= mdp.gamma * (mdp.transitions[a].transpose() *
                            wk.pi.col(a).cwiseProduct(wk.w));
    } else {
      wk.scatter.setZero(n);
      for (int s = 0; s < n; ++s) wk.scatter[succ[s]] += wk.pi(s, a) * wk.w[s];
      wk.gv -= mdp.gamma * wk.scatter;
    }
  }
  wk.gv = params.beta * wk.gv - rho.weights;

  if (need_theta) {
    wk.th.resize(n);
    for (int s = 0; s < n; ++s)
      wk.th[s] = params.beta * rho.weights[s] *
                 transform_residual(wk.ell[s], variant);
    wk.gth.resize(n, na);
    for (int a = 0; a < na; ++a) {
      wk.bracket = -mdp.gamma * wk.pav[a] - mdp.rewards.col(a);
      if (params.lambda > 0.0) wk.bracket += params.lambda * wk.log_pi.col(a);
      wk.gth.col(a) = wk.th.cwiseProduct(wk.bracket);
    }
  }
  wk.objective = -rho.weights.dot(v) +
                 0.5 * params.beta *
                     wk.ell.array().square().matrix().dot(rho.weights);
}

double centered_max_norm(const Mat& g) {
  Vec mean = g.col(0);
  for (int a = 1; a < g.cols(); ++a) mean += g.col(a);
  mean /= double(g.cols());
  double m = 0.0;
  for (int a = 0; a < g.cols(); ++a)
    m = std::max(m, (g.col(a) - mean).cwiseAbs().maxCoeff());
  return m;
}

void argmax_rows(const Mat& m, std::vector<int>& out) {
  out.assign(m.rows(), 0);
  for (int a = 1; a < m.cols(); ++a)
    for (int s = 0; s < m.rows(); ++s)
      if (m(s, a) > m(s, out[s])) out[s] = a;
}

}  // namespace

TraceRefs make_trace_refs(const FiniteMdp& mdp, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("make_trace_refs: lambda < 0");
  TraceRefs refs;
  OptimalSolution hard = value_iteration(mdp);
  refs.pi_star = hard.policy;
  refs.v_ref =
      lambda == 0.0 ? hard.values : soft_value_iteration(mdp, lambda).values;
  return refs;
}

Vec grad_v(const FiniteMdp& mdp, const Vec& v, const Mat& policy,
           const StateDistribution& rho, const HyperParams& params) {
  validate(rho, mdp.n_states);
  validate(params);
  if (v.size() != mdp.n_states)
    throw std::invalid_argument("grad_v: wrong V length");
  Work wk;
  wk.pi = policy;
  compute_gradients(mdp, v, rho, params, Variant::vanilla, false, wk);
  return wk.gv;
}

Mat grad_theta(const FiniteMdp& mdp, const Vec& v, const Mat& policy,
               const StateDistribution& rho, const HyperParams& params,
               Variant variant) {
  validate(rho, mdp.n_states);
  validate(params);
  if (v.size() != mdp.n_states)
    throw std::invalid_argument("grad_theta: wrong V length");
  Work wk;
  wk.pi = policy;
  compute_gradients(mdp, v, rho, params, variant, true, wk);
  return wk.gth;
}

MbState make_init(int n_states, int n_actions) {
  MbState st;
  st.v = Vec::Zero(n_states);
  st.logits = Mat::Zero(n_states, n_actions);
  return st;
}

MbState make_init(int n_states, int n_actions, uint64_t seed) {
  MbState st = make_init(n_states, n_actions);
  Rng rng(seed);
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a)
      st.logits(s, a) = 0.2 * rng.uniform() - 0.1;
  SoftmaxPolicy p{st.logits};
  p.reshift();
  st.logits = p.logits;
  return st;
}

void mb_step(const FiniteMdp& mdp, MbState& state,
             const StateDistribution& rho, const HyperParams& params,
             Variant variant) {
  Work wk;
  wk.pi = policy_from_logits(state.logits);
  if (state.v.size() != mdp.n_states)
    throw std::invalid_argument("mb_step: wrong V length");
  validate(rho, mdp.n_states);
  validate(params);
  compute_gradients(mdp, state.v, rho, params, variant, true, wk);
  state.v -= params.eta_v * wk.gv;
  state.logits -= params.eta_pi * wk.gth;
  SoftmaxPolicy p{std::move(state.logits)};
  p.reshift();
  state.logits = std::move(p.logits);
  if (!state.v.allFinite() || !state.logits.allFinite())
    throw std::runtime_error("mb_step: non-finite iterate");
}

Vec solve_critic(const FiniteMdp& mdp, const Mat& policy,
                 const StateDistribution& rho, const HyperParams& params) {
  validate(rho, mdp.n_states);
  validate(params);
  Mat a = Mat::Identity(mdp.n_states, mdp.n_states) -
          mdp.gamma * transition_under_policy(mdp, policy);
  Vec b = reward_under_policy(mdp, policy);
  if (params.lambda > 0.0) b -= params.lambda * neg_entropy(policy);
  Mat ad = a.transpose() * rho.weights.asDiagonal();
  Mat lhs = params.beta * ad * a;
  Vec rhs = rho.weights + params.beta * (ad * b);
  return lhs.partialPivLu().solve(rhs);
}

double fixed_point_residual_gap(const FiniteMdp& mdp, const Vec& v,
                                const Mat& policy,
                                const StateDistribution& rho,
                                const HyperParams& params) {
  validate(rho, mdp.n_states);
  validate(params);
  Vec ell = bellman_residual(mdp, v, policy, params.lambda);
  Mat a = Mat::Identity(mdp.n_states, mdp.n_states) -
          mdp.gamma * transition_under_policy(mdp, policy);
  Vec x = a.transpose().partialPivLu().solve(rho.weights);
  Vec target = x.cwiseQuotient(rho.weights) / params.beta;
  return (ell - target).cwiseAbs().maxCoeff();
}

FixedPoint solve_fixed_point(const FiniteMdp& mdp,
                             const StateDistribution& rho,
                             const HyperParams& params, double tol,
                             long max_iters) {
  if (!(params.lambda > 0.0))
    throw std::invalid_argument("solve_fixed_point: needs lambda > 0");
  validate(rho, mdp.n_states);
  validate(params);
  FixedPoint fp;
  fp.v = Vec::Zero(mdp.n_states);
  fp.policy = Mat::Constant(mdp.n_states, mdp.n_actions, 1.0 / mdp.n_actions);
  for (long it = 0; it < max_iters; ++it) {
    Mat q(mdp.n_states, mdp.n_actions);
    for (int a = 0; a < mdp.n_actions; ++a)
      q.col(a) = mdp.rewards.col(a) + mdp.gamma * (mdp.transitions[a] * fp.v);
    Mat pi = policy_from_logits(q / params.lambda);
    Vec v = solve_critic(mdp, pi, rho, params);
    double moved = (v - fp.v).cwiseAbs().maxCoeff() +
                   (pi - fp.policy).cwiseAbs().maxCoeff();
    fp.v = v;
    fp.policy = pi;
    // Relative floor: near the rest point the linear solves jitter at
    // machine precision times the value scale.
    if (moved < tol * (1.0 + fp.v.cwiseAbs().maxCoeff())) return fp;
  }
  throw std::runtime_error("solve_fixed_point: no convergence");
}

RunTrace run_model_based(const FiniteMdp& mdp, const StateDistribution& rho,
                         const HyperParams& params, Variant variant,
                         MbState init, const MbRunOptions& opts,
                         const TraceRefs& refs) {
  validate(mdp);
  validate(rho, mdp.n_states);
  validate(params);
  if (opts.max_iters < 1)
    throw std::invalid_argument("run_model_based: max_iters must be >= 1");
  if (opts.stride < 1)
    throw std::invalid_argument("run_model_based: stride must be >= 1");
  SoftmaxPolicy p{std::move(init.logits)};
  p.reshift();
  Vec v = std::move(init.v);
  if (v.size() != mdp.n_states)
    throw std::invalid_argument("run_model_based: wrong init V length");

  RunTrace trace;
  Work wk;
  std::vector<int> greedy, prev_greedy;
  long stable = 0;
  long last_recorded = -1;

  auto record = [&](long k) {
    TraceRow row;
    row.iter = k;
    row.l1_policy_error = policy_error(wk.pi, refs.pi_star);
    row.linf_value_error = (v - refs.v_ref).cwiseAbs().maxCoeff();
    row.min_residual = wk.ell.minCoeff();
    row.objective = wk.objective;
    row.negative_residual = row.min_residual < 0.0;
    row.samples = 0;
    trace.rows.push_back(row);
    last_recorded = k;
  };

  long k = 0;
  for (; k < opts.max_iters; ++k) {
    wk.pi = policy_from_logits(p.logits);
    compute_gradients(mdp, v, rho, params, variant, true, wk);
    if (k % opts.stride == 0) record(k);

    double gv_norm = wk.gv.cwiseAbs().maxCoeff();
    double gth_norm = centered_max_norm(wk.gth);
    argmax_rows(wk.pi, greedy);
    if (greedy == prev_greedy)
      ++stable;
    else
      stable = 0;
    prev_greedy = greedy;
    if (gv_norm + gth_norm < opts.grad_tol ||
        (stable >= opts.greedy_stable_window && gv_norm < opts.grad_tol)) {
      if (last_recorded != k) record(k);
      break;
    }

    v -= params.eta_v * wk.gv;
    p.logits -= params.eta_pi * wk.gth;
    p.reshift();
    if (!v.allFinite() || !p.logits.allFinite() ||
        v.cwiseAbs().maxCoeff() > opts.divergence_norm) {
      trace.diverged = true;
      trace.failure_iter = k + 1;
      trace.message = !v.allFinite() || !p.logits.allFinite()
                          ? "non-finite iterate"
                          : "value norm exceeded divergence guard";
      break;
    }
  }
  if (k == opts.max_iters) {
    // Ran out of budget: score the final iterate.
    wk.pi = policy_from_logits(p.logits);
    compute_gradients(mdp, v, rho, params, variant, true, wk);
    record(k);
    trace.iters_run = k;
  } else {
    trace.iters_run = trace.diverged ? k + 1 : k;
  }
  trace.final_v = std::move(v);
  trace.final_policy = trace.diverged ? Mat() : wk.pi;
  return trace;
}

}  // namespace vac
