#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "vac/instances.hpp"
#include "vac/mdp.hpp"
#include "vac/model_based.hpp"
#include "vac/oracle.hpp"
#include "vac/util.hpp"

using namespace vac;

namespace {

struct Setup {
  FiniteMdp mdp;
  StateDistribution rho;
  Mat policy;
  Vec v;
  HyperParams hp;
};

Setup random_setup(uint64_t seed, double lambda) {
  Setup s;
  int n = 3 + (int)(seed % 3);
  int na = 2 + (int)(seed % 2);
  s.mdp = random_mdp(n, na, 0.9, seed);
  s.rho = StateDistribution::uniform(n);
  Rng rng(seed + 1000);
  Mat logits(n, na);
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < na; ++a) logits(i, a) = 3.0 * rng.uniform() - 1.5;
  s.policy = policy_from_logits(logits);
  s.v = Vec(n);
  for (int i = 0; i < n; ++i) s.v[i] = 8.0 * rng.uniform() - 4.0;
  s.hp.beta = 2.0 + 3.0 * rng.uniform();
  s.hp.lambda = lambda;
  return s;
}

}  // namespace

TEST_CASE("value gradient vanishes nowhere but at the weighted residual") {
  Setup s = random_setup(3, 0.0);
  Vec v_pi = policy_value(s.mdp, s.policy, 0.0);
  Vec g = grad_v(s.mdp, v_pi, s.policy, s.rho, s.hp);
  CHECK((g + s.rho.weights).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("value gradient matches central differences") {
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    Setup s = random_setup(seed, seed % 2 ? 0.1 : 0.0);
    Vec g = grad_v(s.mdp, s.v, s.policy, s.rho, s.hp);
    const double eps = 1e-5;
    for (int i = 0; i < s.mdp.n_states; ++i) {
      Vec hi = s.v, lo = s.v;
      hi[i] += eps;
      lo[i] -= eps;
      double fd = (objective(s.mdp, hi, s.policy, s.rho, s.hp) -
                   objective(s.mdp, lo, s.policy, s.rho, s.hp)) /
                  (2.0 * eps);
      CHECK(std::abs(fd - g[i]) <= 1e-6 * std::max(1.0, std::abs(g[i])));
    }
  }
}

TEST_CASE("policy gradient matches central differences through the soft-max") {
  // d E / d logit(s,b) = pi(s,b) (G(s,b) - sum_a pi(s,a) G(s,a)) for the
  // preconditioned table G returned by grad_theta.
  for (uint64_t seed = 21; seed <= 40; ++seed) {
    Setup s = random_setup(seed, seed % 2 ? 0.1 : 0.0);
    Mat logits = s.policy.array().log();
    Mat g = grad_theta(s.mdp, s.v, s.policy, s.rho, s.hp, Variant::vanilla);
    const double eps = 1e-6;
    for (int i = 0; i < s.mdp.n_states; ++i) {
      double row_mean = s.policy.row(i).dot(g.row(i));
      for (int a = 0; a < s.mdp.n_actions; ++a) {
        Mat hi = logits, lo = logits;
        hi(i, a) += eps;
        lo(i, a) -= eps;
        double fd = (objective(s.mdp, s.v, policy_from_logits(hi), s.rho, s.hp) -
                     objective(s.mdp, s.v, policy_from_logits(lo), s.rho, s.hp)) /
                    (2.0 * eps);
        double want = s.policy(i, a) * (g(i, a) - row_mean);
        CHECK(std::abs(fd - want) <= 1e-5 * std::max(1.0, std::abs(want)));
      }
    }
  }
}

TEST_CASE("variants agree on positive residuals and differ on negative ones") {
  Setup s = random_setup(5, 0.0);
  Vec v_pi = policy_value(s.mdp, s.policy, 0.0);

  Vec above = v_pi.array() + 1.0;  // ell = (1 - gamma) > 0 everywhere
  Mat g0 = grad_theta(s.mdp, above, s.policy, s.rho, s.hp, Variant::vanilla);
  Mat g1 = grad_theta(s.mdp, above, s.policy, s.rho, s.hp, Variant::clipping);
  Mat g2 = grad_theta(s.mdp, above, s.policy, s.rho, s.hp, Variant::flipping);
  CHECK((g0 - g1).cwiseAbs().maxCoeff() == 0.0);
  CHECK((g0 - g2).cwiseAbs().maxCoeff() == 0.0);

  Vec below = v_pi.array() - 1.0;  // ell < 0 everywhere
  g0 = grad_theta(s.mdp, below, s.policy, s.rho, s.hp, Variant::vanilla);
  g1 = grad_theta(s.mdp, below, s.policy, s.rho, s.hp, Variant::clipping);
  g2 = grad_theta(s.mdp, below, s.policy, s.rho, s.hp, Variant::flipping);
  CHECK(g1.cwiseAbs().maxCoeff() == 0.0);
  CHECK((g0 + g2).cwiseAbs().maxCoeff() == 0.0);

  HyperParams hp = s.hp;
  hp.lambda = 0.1;
  Mat onehot = Mat::Zero(s.mdp.n_states, s.mdp.n_actions);
  onehot.col(0).setOnes();
  CHECK_THROWS_AS(grad_theta(s.mdp, s.v, onehot, s.rho, hp, Variant::vanilla),
                  std::invalid_argument);
}

TEST_CASE("mb_step freezes at zero rates and at the rest point") {
  Setup s = random_setup(6, 0.0);
  MbState st;
  st.v = s.v;
  st.logits = s.policy.array().log();
  HyperParams hp = s.hp;
  hp.eta_v = 0.0;
  hp.eta_pi = 0.0;
  MbState before = st;
  mb_step(s.mdp, st, s.rho, hp, Variant::vanilla);
  CHECK((st.v - before.v).cwiseAbs().maxCoeff() == 0.0);
  CHECK((policy_from_logits(st.logits) - policy_from_logits(before.logits))
            .cwiseAbs()
            .maxCoeff() == 0.0);

  // greedy one-hot policy, V solved from a vanishing value gradient: the
  // probabilities and V both stay put even though raw logits keep drifting
  OptimalSolution opt = value_iteration(s.mdp);
  MbState fixed;
  fixed.logits = Mat::Zero(s.mdp.n_states, s.mdp.n_actions);
  for (int i = 0; i < s.mdp.n_states; ++i)
    for (int a = 0; a < s.mdp.n_actions; ++a)
      if (a != opt.greedy[i]) fixed.logits(i, a) = -1e6;
  Mat pi_fixed = policy_from_logits(fixed.logits);
  fixed.v = solve_critic(s.mdp, pi_fixed, s.rho, s.hp);
  hp = s.hp;
  hp.eta_v = 1.0 / (4.0 * hp.beta);
  hp.eta_pi = 1.0 / (4.0 * hp.beta);
  Vec v0 = fixed.v;
  mb_step(s.mdp, fixed, s.rho, hp, Variant::flipping);
  CHECK((fixed.v - v0).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((policy_from_logits(fixed.logits) - pi_fixed).cwiseAbs().maxCoeff() <
        1e-12);
}

TEST_CASE("one step equals the multiplicative update computed by hand") {
  FiniteMdp mdp = ring_mdp({5, 0.0, 0.9});
  StateDistribution rho = StateDistribution::uniform(5);
  HyperParams hp;
  hp.beta = 10.0;
  hp.eta_v = 1.0 / 40.0;
  hp.eta_pi = 1.0 / 40.0;
  MbState st = make_init(5, 2);
  Mat pi0 = policy_from_logits(st.logits);
  Vec g_v = grad_v(mdp, st.v, pi0, rho, hp);
  Mat g_t = grad_theta(mdp, st.v, pi0, rho, hp, Variant::vanilla);
  mb_step(mdp, st, rho, hp, Variant::vanilla);

  CHECK((st.v - (Vec::Zero(5) - hp.eta_v * g_v)).cwiseAbs().maxCoeff() < 1e-15);
  Mat pi1 = policy_from_logits(st.logits);
  for (int s = 0; s < 5; ++s) {
    Vec row(2);
    for (int a = 0; a < 2; ++a) row[a] = pi0(s, a) * std::exp(-hp.eta_pi * g_t(s, a));
    row /= row.sum();
    for (int a = 0; a < 2; ++a)
      CHECK(pi1(s, a) == doctest::Approx(row[a]).epsilon(1e-12));
  }
}

TEST_CASE("rest-point residual identity") {
  Setup s = random_setup(7, 0.0);
  Vec v = solve_critic(s.mdp, s.policy, s.rho, s.hp);
  CHECK(fixed_point_residual_gap(s.mdp, v, s.policy, s.rho, s.hp) < 1e-9);
  CHECK(bellman_residual(s.mdp, v, s.policy, 0.0).minCoeff() > 0.0);
  CHECK(grad_v(s.mdp, v, s.policy, s.rho, s.hp).cwiseAbs().maxCoeff() < 1e-10);

  // off the rest point the gap is just the distance to the analytic residual
  Vec ell = bellman_residual(s.mdp, s.v, s.policy, 0.0);
  Mat a = Mat::Identity(s.mdp.n_states, s.mdp.n_states) -
          s.mdp.gamma * transition_under_policy(s.mdp, s.policy);
  Vec target = a.transpose().partialPivLu().solve(s.rho.weights);
  for (int i = 0; i < s.mdp.n_states; ++i)
    target[i] /= s.hp.beta * s.rho.weights[i];
  double want = (ell - target).cwiseAbs().maxCoeff();
  CHECK(fixed_point_residual_gap(s.mdp, s.v, s.policy, s.rho, s.hp) ==
        doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("runs converge on the ring and stay monotone for vanilla") {
  FiniteMdp mdp = ring_mdp({5, 0.0, 0.9});
  StateDistribution rho = StateDistribution::uniform(5);
  TraceRefs refs = make_trace_refs(mdp, 0.0);
  HyperParams hp;
  hp.beta = 10.0;
  hp.eta_v = 1.0 / 40.0;
  hp.eta_pi = 1.0 / 40.0;
  MbRunOptions opts;
  RunTrace tr = run_model_based(mdp, rho, hp, Variant::flipping, make_init(5, 2),
                                opts, refs);
  CHECK(!tr.diverged);
  CHECK(tr.rows.back().l1_policy_error < 1e-2);

  // exact gradient descent never increases the objective at eta = 1/(4 beta)
  for (uint64_t seed : {11, 12}) {
    Setup s = random_setup(seed, 0.0);
    HyperParams dhp = s.hp;
    dhp.eta_v = 1.0 / (4.0 * dhp.beta);
    dhp.eta_pi = 1.0 / (4.0 * dhp.beta);
    MbState st = make_init(s.mdp.n_states, s.mdp.n_actions, seed);
    double prev = objective(s.mdp, st.v, policy_from_logits(st.logits), s.rho, dhp);
    for (int k = 0; k < 500; ++k) {
      mb_step(s.mdp, st, s.rho, dhp, Variant::vanilla);
      double e = objective(s.mdp, st.v, policy_from_logits(st.logits), s.rho, dhp);
      CHECK(e <= prev + 1e-9);
      prev = e;
    }
  }
}

TEST_CASE("vanilla shows the early error bump alongside negative residuals") {
  FiniteMdp mdp = random_mdp(5, 2, 0.9, 2020);
  StateDistribution rho = StateDistribution::uniform(5);
  TraceRefs refs = make_trace_refs(mdp, 0.0);
  HyperParams hp;
  hp.beta = 10.0;
  hp.eta_v = 1.0 / 40.0;
  hp.eta_pi = 1.0 / 40.0;
  MbRunOptions opts;
  opts.stride = 1;
  opts.max_iters = 20000;
  bool seen = false;
  for (uint64_t seed = 1; seed <= 5 && !seen; ++seed) {
    RunTrace tr = run_model_based(mdp, rho, hp, Variant::vanilla,
                                  make_init(5, 2, seed), opts, refs);
    for (size_t i = 0; i + 1 < tr.rows.size(); ++i)
      if (tr.rows[i].min_residual < 0.0 &&
          tr.rows[i + 1].l1_policy_error > tr.rows[i].l1_policy_error + 1e-12) {
        seen = true;
        break;
      }
  }
  CHECK(seen);
}

TEST_CASE("run bookkeeping and divergence") {
  FiniteMdp mdp = ring_mdp({5, 0.0, 0.9});
  StateDistribution rho = StateDistribution::uniform(5);
  TraceRefs refs = make_trace_refs(mdp, 0.0);
  HyperParams hp;
  hp.beta = 10.0;
  hp.eta_v = 1.0 / 40.0;
  hp.eta_pi = 1.0 / 40.0;
  MbRunOptions opts;
  opts.max_iters = 0;
  CHECK_THROWS_AS(run_model_based(mdp, rho, hp, Variant::vanilla, make_init(5, 2),
                                  opts, refs),
                  std::invalid_argument);

  opts.max_iters = 1;
  opts.stride = 1;
  RunTrace tr = run_model_based(mdp, rho, hp, Variant::vanilla, make_init(5, 2),
                                opts, refs);
  CHECK(tr.iters_run == 1);
  // one row at the start of iteration 0 plus the final iterate
  CHECK(tr.rows.size() == 2);
  CHECK(tr.rows.front().iter == 0);
  CHECK(tr.rows.back().iter == 1);

  // reruns are bitwise identical
  opts.max_iters = 300;
  RunTrace t1 = run_model_based(mdp, rho, hp, Variant::flipping,
                                make_init(5, 2, 3), opts, refs);
  RunTrace t2 = run_model_based(mdp, rho, hp, Variant::flipping,
                                make_init(5, 2, 3), opts, refs);
  REQUIRE(t1.rows.size() == t2.rows.size());
  for (size_t i = 0; i < t1.rows.size(); ++i) {
    CHECK(t1.rows[i].l1_policy_error == t2.rows[i].l1_policy_error);
    CHECK(t1.rows[i].objective == t2.rows[i].objective);
  }

  // an absurd step size blows up and the trace says where
  hp.eta_v = 1e9;
  opts.max_iters = 10000;
  tr = run_model_based(mdp, rho, hp, Variant::vanilla, make_init(5, 2), opts,
                       refs);
  CHECK(tr.diverged);
  CHECK(tr.failure_iter >= 0);
  CHECK(!tr.message.empty());
}
