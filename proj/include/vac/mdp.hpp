#pragma once

#include <Eigen/Dense>
#include <vector>

namespace vac {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Residual transform selecting the update family: vanilla uses the raw
/// residual, clipping zeroes non-positive residuals, flipping uses the
/// absolute value.
enum class Variant { vanilla = 0, clipping = 1, flipping = 2 };

/// h(x): identity / x * 1{x > 0} (strict) / |x|.
double transform_residual(double x, Variant variant);

/// Finite discounted MDP. transitions[a](s, t) = P(t | s, a), rows sum to
/// one; rewards(s, a) finite; 0 <= gamma < 1.
struct FiniteMdp {
  int n_states = 0;
  int n_actions = 0;
  std::vector<Mat> transitions;
  Mat rewards;
  double gamma = 0.0;
};

/// Throws std::invalid_argument listing every violated shape or
/// stochasticity condition (row sums within 1e-12 of 1, entries in [0, 1],
/// finite rewards, gamma in [0, 1)).
void validate(const FiniteMdp& mdp);

/// Tabular soft-max policy stored as logits. Rows are kept shifted so the
/// per-row maximum is 0; the shift is a no-op on the distribution.
struct SoftmaxPolicy {
  Mat logits;

  static SoftmaxPolicy uniform(int n_states, int n_actions);
  void reshift();
  Mat probs() const;
};

/// Weighting over states: strictly positive, sums to one within 1e-12.
struct StateDistribution {
  Vec weights;

  static StateDistribution uniform(int n_states);
};

void validate(const StateDistribution& rho, int n_states);

struct HyperParams {
  double beta = 1.0;    // residual weight, > 0
  double lambda = 0.0;  // entropy regularization, >= 0
  double eta_v = 0.0;   // critic step size
  double eta_pi = 0.0;  // policy step size
  double eta_q = 0.0;   // Q step size (sample-based runners)
  int batch_size = 1;
};

void validate(const HyperParams& params);

/// Row soft-max of the logits. Throws std::invalid_argument on non-finite
/// entries. Safe for logits anywhere in [-700, 700] per row after shifting.
Mat policy_from_logits(const Mat& logits);

/// P^pi(s, t) = sum_a pi(s, a) P(t | s, a).
Mat transition_under_policy(const FiniteMdp& mdp, const Mat& policy);

/// r^pi(s) = sum_a pi(s, a) r(s, a).
Vec reward_under_policy(const FiniteMdp& mdp, const Mat& policy);

/// H(pi_s) = sum_a pi(s, a) log pi(s, a), with 0 log 0 = 0. Non-positive;
/// equals -log(n_actions) at uniform rows and 0 at deterministic rows.
Vec neg_entropy(const Mat& policy);

/// Value of pi under entropy regularization: the solution of
/// (I - gamma P^pi) V = r^pi - lambda H(pi).
Vec policy_value(const FiniteMdp& mdp, const Mat& policy, double lambda);

/// ell(V, pi) = (I - gamma P^pi) V - r^pi + lambda H(pi). Zero exactly at
/// V = policy_value(mdp, pi, lambda).
Vec bellman_residual(const FiniteMdp& mdp, const Vec& v, const Mat& policy,
                     double lambda);

/// E(V, pi) = -rho' V + (beta/2) sum_s ell_s^2 rho_s.
double objective(const FiniteMdp& mdp, const Vec& v, const Mat& policy,
                 const StateDistribution& rho, const HyperParams& params);

}  // namespace vac
