#pragma once

#include <cstdint>

#include "vac/mdp.hpp"
#include "vac/trace.hpp"

namespace vac {

/// make_trace_refs solves the instance once so runs can be scored: pi* from
/// exact value iteration, value target V* (lambda = 0) or the smoothed
/// optimum (lambda > 0).
TraceRefs make_trace_refs(const FiniteMdp& mdp, double lambda);

/// Gradient of the objective in V:
///   G_V = -rho + beta (I - gamma P^pi)' (ell . rho).
Vec grad_v(const FiniteMdp& mdp, const Vec& v, const Mat& policy,
           const StateDistribution& rho, const HyperParams& params);

/// Preconditioned policy gradient, one row per state:
///   G(s,a) = beta rho_s h(ell_s) [ -gamma (P^a V)_s - r(s,a)
///                                  + lambda log pi(s,a) ],
/// with h fixed by the variant. The per-row additive constant of the exact
/// formula is dropped (row shifts do not move the soft-max). Throws
/// std::invalid_argument if lambda > 0 and pi has exact zeros.
Mat grad_theta(const FiniteMdp& mdp, const Vec& v, const Mat& policy,
               const StateDistribution& rho, const HyperParams& params,
               Variant variant);

struct MbState {
  Vec v;
  Mat logits;
};

/// V = 0, logits = 0 (uniform policy).
MbState make_init(int n_states, int n_actions);
/// Same, plus uniform logit noise in [-0.1, 0.1] drawn from the seed.
MbState make_init(int n_states, int n_actions, uint64_t seed);

/// One coupled update: both gradients are evaluated at the incoming state,
/// then V -= eta_v G_V, logits -= eta_pi G_theta, rows re-shifted.
void mb_step(const FiniteMdp& mdp, MbState& state,
             const StateDistribution& rho, const HyperParams& params,
             Variant variant);

/// V solving G_V = 0 at fixed pi (a linear system; the critic's rest point).
Vec solve_critic(const FiniteMdp& mdp, const Mat& policy,
                 const StateDistribution& rho, const HyperParams& params);

/// Max-norm distance between ell(V, pi) and the closed-form rest-point
/// residual (1/beta) (1/rho) . (I - gamma P^pi)^{-T} rho. Zero exactly at
/// points where G_V vanishes.
double fixed_point_residual_gap(const FiniteMdp& mdp, const Vec& v,
                                const Mat& policy,
                                const StateDistribution& rho,
                                const HyperParams& params);

struct FixedPoint {
  Vec v;
  Mat policy;
};

/// Joint rest point for lambda > 0 by alternating pi <- softmax(q(V)/lambda)
/// and V <- solve_critic(pi) until both stall below tol relative to the
/// value scale. Throws std::runtime_error if max_iters alternations are not
/// enough.
FixedPoint solve_fixed_point(const FiniteMdp& mdp,
                             const StateDistribution& rho,
                             const HyperParams& params, double tol = 1e-13,
                             long max_iters = 100000);

struct MbRunOptions {
  long max_iters = 200000;
  double grad_tol = 1e-8;       // stop: |G_V|_inf + |centered G_theta|_inf
  int stride = 10;              // record every stride-th iteration
  int greedy_stable_window = 1000;  // secondary stop (greedy frozen + small G_V)
  double divergence_norm = 1e12;
};

/// Gradient-descent run from `init`. Stops at the gradient tolerance, or
/// once the greedy argmax has been frozen for the window with G_V below
/// tolerance, or at max_iters. A value norm above divergence_norm or any
/// non-finite iterate marks the trace diverged and preserves rows so far.
RunTrace run_model_based(const FiniteMdp& mdp, const StateDistribution& rho,
                         const HyperParams& params, Variant variant,
                         MbState init, const MbRunOptions& opts,
                         const TraceRefs& refs);

}  // namespace vac
