#include "vac/mdp.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace vac {

double transform_residual(double x, Variant variant) {
  switch (variant) {
    case Variant::vanilla:
      return x;
    case Variant::clipping:
      return x > 0.0 ? x : 0.0;
    case Variant::flipping:
      return std::abs(x);
  }
  throw std::invalid_argument("transform_residual: unknown variant");
}

void validate(const FiniteMdp& mdp) {
  std::ostringstream bad;
  if (mdp.n_states < 1) bad << "n_states must be >= 1; ";
  if (mdp.n_actions < 1) bad << "n_actions must be >= 1; ";
  if (!(mdp.gamma >= 0.0 && mdp.gamma < 1.0))
    bad << "gamma must lie in [0, 1); ";
  if ((int)mdp.transitions.size() != mdp.n_actions)
    bad << "expected one transition matrix per action; ";
  if (mdp.rewards.rows() != mdp.n_states || mdp.rewards.cols() != mdp.n_actions)
    bad << "rewards must be n_states x n_actions; ";
  if (!mdp.rewards.allFinite()) bad << "rewards must be finite; ";
  for (size_t a = 0; a < mdp.transitions.size(); ++a) {
    const Mat& p = mdp.transitions[a];
    if (p.rows() != mdp.n_states || p.cols() != mdp.n_states) {
      bad << "transitions[" << a << "] must be n_states x n_states; ";
      continue;
    }
    if (!p.allFinite() || p.minCoeff() < 0.0 || p.maxCoeff() > 1.0 + 1e-12) {
      bad << "transitions[" << a << "] entries must lie in [0, 1]; ";
      continue;
    }
    for (int s = 0; s < mdp.n_states; ++s) {
      if (std::abs(p.row(s).sum() - 1.0) > 1e-12) {
        bad << "transitions[" << a << "] row " << s << " does not sum to 1; ";
        break;
      }
    }
  }
  std::string msg = bad.str();
  if (!msg.empty()) throw std::invalid_argument("FiniteMdp: " + msg);
}

SoftmaxPolicy SoftmaxPolicy::uniform(int n_states, int n_actions) {
  SoftmaxPolicy p;
  p.logits = Mat::Zero(n_states, n_actions);
  return p;
}

void SoftmaxPolicy::reshift() {
  if (logits.size() == 0) return;
  Vec m = logits.col(0);
  for (int a = 1; a < logits.cols(); ++a) m = m.cwiseMax(logits.col(a));
  for (int a = 0; a < logits.cols(); ++a) logits.col(a) -= m;
}

Mat SoftmaxPolicy::probs() const { return policy_from_logits(logits); }

StateDistribution StateDistribution::uniform(int n_states) {
  StateDistribution rho;
  rho.weights = Vec::Constant(n_states, 1.0 / n_states);
  return rho;
}

void validate(const StateDistribution& rho, int n_states) {
  if (rho.weights.size() != n_states)
    throw std::invalid_argument("StateDistribution: wrong length");
  if (!rho.weights.allFinite() || rho.weights.minCoeff() <= 0.0)
    throw std::invalid_argument(
        "StateDistribution: weights must be strictly positive");
  if (std::abs(rho.weights.sum() - 1.0) > 1e-12)
    throw std::invalid_argument("StateDistribution: weights must sum to 1");
}

void validate(const HyperParams& params) {
  std::ostringstream bad;
  if (!(params.beta > 0.0) || !std::isfinite(params.beta))
    bad << "beta must be positive; ";
  if (!(params.lambda >= 0.0) || !std::isfinite(params.lambda))
    bad << "lambda must be >= 0; ";
  if (!(params.eta_v >= 0.0) || !std::isfinite(params.eta_v))
    bad << "eta_v must be >= 0; ";
  if (!(params.eta_pi >= 0.0) || !std::isfinite(params.eta_pi))
    bad << "eta_pi must be >= 0; ";
  if (!(params.eta_q >= 0.0) || !std::isfinite(params.eta_q))
    bad << "eta_q must be >= 0; ";
  if (params.batch_size < 1) bad << "batch_size must be >= 1; ";
  std::string msg = bad.str();
  if (!msg.empty()) throw std::invalid_argument("HyperParams: " + msg);
}

Mat policy_from_logits(const Mat& logits) {
  if (!logits.allFinite())
    throw std::invalid_argument("policy_from_logits: non-finite logits");
  // Column sweeps: logits are stored column-major, so per-row expressions
  // would stride. Max, sum, and divide accumulate in ascending action
  // order, same as a per-row reduction.
  Mat p(logits.rows(), logits.cols());
  if (p.size() == 0) return p;
  Vec m = logits.col(0);
  for (int a = 1; a < logits.cols(); ++a) m = m.cwiseMax(logits.col(a));
  for (int a = 0; a < logits.cols(); ++a)
    p.col(a) = (logits.col(a) - m).array().exp();
  Vec z = p.col(0);
  for (int a = 1; a < logits.cols(); ++a) z += p.col(a);
  for (int a = 0; a < logits.cols(); ++a) p.col(a).array() /= z.array();
  return p;
}

static void check_policy_shape(const FiniteMdp& mdp, const Mat& policy) {
  if (policy.rows() != mdp.n_states || policy.cols() != mdp.n_actions)
    throw std::invalid_argument("policy must be n_states x n_actions");
}

Mat transition_under_policy(const FiniteMdp& mdp, const Mat& policy) {
  check_policy_shape(mdp, policy);
  Mat p = Mat::Zero(mdp.n_states, mdp.n_states);
  for (int a = 0; a < mdp.n_actions; ++a)
    p += policy.col(a).asDiagonal() * mdp.transitions[a];
  return p;
}

Vec reward_under_policy(const FiniteMdp& mdp, const Mat& policy) {
  check_policy_shape(mdp, policy);
  return (policy.array() * mdp.rewards.array()).rowwise().sum();
}

Vec neg_entropy(const Mat& policy) {
  Vec h = Vec::Zero(policy.rows());
  for (int s = 0; s < policy.rows(); ++s)
    for (int a = 0; a < policy.cols(); ++a) {
      double p = policy(s, a);
      if (p > 0.0) h[s] += p * std::log(p);
    }
  return h;
}

Vec policy_value(const FiniteMdp& mdp, const Mat& policy, double lambda) {
  Mat a = Mat::Identity(mdp.n_states, mdp.n_states) -
          mdp.gamma * transition_under_policy(mdp, policy);
  Vec b = reward_under_policy(mdp, policy) - lambda * neg_entropy(policy);
  return a.partialPivLu().solve(b);
}

Vec bellman_residual(const FiniteMdp& mdp, const Vec& v, const Mat& policy,
                     double lambda) {
  if (v.size() != mdp.n_states)
    throw std::invalid_argument("bellman_residual: wrong V length");
  Mat p = transition_under_policy(mdp, policy);
  return v - mdp.gamma * (p * v) - reward_under_policy(mdp, policy) +
         lambda * neg_entropy(policy);
}

double objective(const FiniteMdp& mdp, const Vec& v, const Mat& policy,
                 const StateDistribution& rho, const HyperParams& params) {
  Vec ell = bellman_residual(mdp, v, policy, params.lambda);
  return -rho.weights.dot(v) +
         0.5 * params.beta * ell.array().square().matrix().dot(rho.weights);
}

}  // namespace vac
