#include "vac/oracle.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace vac {

static Mat action_values(const FiniteMdp& mdp, const Vec& v) {
  Mat q(mdp.n_states, mdp.n_actions);
  for (int a = 0; a < mdp.n_actions; ++a)
    q.col(a) = mdp.rewards.col(a) + mdp.gamma * (mdp.transitions[a] * v);
  return q;
}

static double sweep_threshold(double gamma, double tol) {
  if (gamma <= 0.0) return std::numeric_limits<double>::infinity();
  return tol * (1.0 - gamma) / (2.0 * gamma);
}

OptimalSolution value_iteration(const FiniteMdp& mdp, double tol) {
  validate(mdp);
  if (!(tol > 0.0)) throw std::invalid_argument("value_iteration: tol <= 0");
  const double thr = sweep_threshold(mdp.gamma, tol);
  Vec v = Vec::Zero(mdp.n_states);
  for (long iter = 0; iter < 1000000; ++iter) {
    Vec next = action_values(mdp, v).rowwise().maxCoeff();
    double diff = (next - v).cwiseAbs().maxCoeff();
    v = next;
    if (diff <= thr) {
      OptimalSolution sol;
      sol.values = v;
      Mat q = action_values(mdp, v);
      sol.greedy.resize(mdp.n_states);
      sol.policy = Mat::Zero(mdp.n_states, mdp.n_actions);
      for (int s = 0; s < mdp.n_states; ++s) {
        int best = 0;
        for (int a = 1; a < mdp.n_actions; ++a)
          if (q(s, a) > q(s, best)) best = a;
        sol.greedy[s] = best;
        sol.policy(s, best) = 1.0;
      }
      return sol;
    }
  }
  throw std::runtime_error("value_iteration: no convergence in 1e6 sweeps");
}

OptimalSolution soft_value_iteration(const FiniteMdp& mdp, double lambda,
                                     double tol) {
  validate(mdp);
  if (!(lambda > 0.0))
    throw std::invalid_argument("soft_value_iteration: lambda must be > 0");
  if (!(tol > 0.0))
    throw std::invalid_argument("soft_value_iteration: tol <= 0");
  const double thr = sweep_threshold(mdp.gamma, tol);
  Vec v = Vec::Zero(mdp.n_states);
  for (long iter = 0; iter < 1000000; ++iter) {
    Mat q = action_values(mdp, v);
    Vec next(mdp.n_states);
    for (int s = 0; s < mdp.n_states; ++s) {
      double m = q.row(s).maxCoeff();
      double z = ((q.row(s).array() - m) / lambda).exp().sum();
      next[s] = m + lambda * std::log(z);
    }
    double diff = (next - v).cwiseAbs().maxCoeff();
    v = next;
    if (diff <= thr) {
      OptimalSolution sol;
      sol.values = v;
      Mat q2 = action_values(mdp, v);
      sol.policy = policy_from_logits(q2 / lambda);
      sol.greedy.resize(mdp.n_states);
      for (int s = 0; s < mdp.n_states; ++s) {
        int best = 0;
        for (int a = 1; a < mdp.n_actions; ++a)
          if (q2(s, a) > q2(s, best)) best = a;
        sol.greedy[s] = best;
      }
      return sol;
    }
  }
  throw std::runtime_error(
      "soft_value_iteration: no convergence in 1e6 sweeps");
}

double action_gap(const FiniteMdp& mdp, const Vec& v_star) {
  if (mdp.n_actions < 2)
    throw std::invalid_argument("action_gap: needs at least two actions");
  if (v_star.size() != mdp.n_states)
    throw std::invalid_argument("action_gap: wrong V length");
  Mat q = action_values(mdp, v_star);
  double gap = std::numeric_limits<double>::infinity();
  for (int s = 0; s < mdp.n_states; ++s) {
    int best = 0;
    for (int a = 1; a < mdp.n_actions; ++a)
      if (q(s, a) > q(s, best)) best = a;
    double second = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < mdp.n_actions; ++a)
      if (a != best) second = std::max(second, q(s, a));
    gap = std::min(gap, q(s, best) - second);
  }
  return gap;
}

double beta_threshold(const FiniteMdp& mdp, double alpha,
                      const StateDistribution& rho) {
  validate(rho, mdp.n_states);
  if (!(alpha > 0.0) || !std::isfinite(alpha))
    throw std::invalid_argument("beta_threshold: alpha must be positive");
  if (mdp.n_actions >= 2) {
    OptimalSolution sol = value_iteration(mdp, 1e-10);
    double gap = action_gap(mdp, sol.values);
    if (!(alpha < gap / 3.0))
      throw std::invalid_argument(
          "beta_threshold: alpha must be below a third of the action gap");
  }
  double g1 = 1.0 - mdp.gamma;
  return (1.0 / rho.weights.minCoeff()) / (alpha * g1 * g1);
}

}  // namespace vac
