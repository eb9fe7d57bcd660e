#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "vac/instances.hpp"
#include "vac/mdp.hpp"
#include "vac/model_based.hpp"
#include "vac/util.hpp"

using namespace vac;

namespace {

Mat random_policy(int n_states, int n_actions, uint64_t seed) {
  Rng rng(seed);
  Mat logits(n_states, n_actions);
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) logits(s, a) = 4.0 * rng.uniform() - 2.0;
  return policy_from_logits(logits);
}

}  // namespace

TEST_CASE("transform_residual selects the variant") {
  CHECK(transform_residual(-1.5, Variant::vanilla) == -1.5);
  CHECK(transform_residual(-1.5, Variant::clipping) == 0.0);
  CHECK(transform_residual(0.0, Variant::clipping) == 0.0);  // strict cut
  CHECK(transform_residual(-1.5, Variant::flipping) == 1.5);
  for (double x : {0.3, 1.0, 7.25}) {
    CHECK(transform_residual(x, Variant::vanilla) == x);
    CHECK(transform_residual(x, Variant::clipping) == x);
    CHECK(transform_residual(x, Variant::flipping) == x);
  }
}

TEST_CASE("validate lists every broken mdp condition at once") {
  FiniteMdp mdp;
  mdp.n_states = 2;
  mdp.n_actions = 1;
  mdp.gamma = 1.5;
  mdp.transitions = {Mat::Constant(2, 2, 0.3)};  // rows sum to 0.6
  mdp.rewards = Mat::Zero(2, 2);                 // wrong shape
  try {
    validate(mdp);
    FAIL("expected invalid_argument");
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    CHECK(msg.find("gamma") != std::string::npos);
    CHECK(msg.find("rewards") != std::string::npos);
    CHECK(msg.find("row") != std::string::npos);
  }
}

TEST_CASE("validate accepts the bundled instances") {
  CHECK_NOTHROW(validate(ring_mdp({5, 0.0, 0.9})));
  CHECK_NOTHROW(validate(ring_mdp({7, 1.0, 0.9})));
  CHECK_NOTHROW(validate(torus_mdp({4, 5, 0.8, 0.9})));
  CHECK_NOTHROW(validate(random_mdp(6, 3, 0.9, 11)));
}

TEST_CASE("policy_from_logits closed forms") {
  Mat z = Mat::Zero(3, 2);
  Mat p = policy_from_logits(z);
  CHECK(p.minCoeff() == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(p.maxCoeff() == doctest::Approx(0.5).epsilon(1e-15));

  Mat l(1, 2);
  l << std::log(3.0), 0.0;
  p = policy_from_logits(l);
  CHECK(p(0, 0) == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(p(0, 1) == doctest::Approx(0.25).epsilon(1e-14));

  l << 1000.0, 0.0;  // must not overflow
  p = policy_from_logits(l);
  CHECK(p.allFinite());
  CHECK(p(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(p(0, 1) == doctest::Approx(0.0).epsilon(1e-15));

  l << std::nan(""), 0.0;
  CHECK_THROWS_AS(policy_from_logits(l), std::invalid_argument);
}

TEST_CASE("reshift keeps the distribution and zeroes the row max") {
  SoftmaxPolicy pol;
  pol.logits = Mat(2, 3);
  pol.logits << 5.0, 3.0, 1.0, -2.0, -9.0, -4.0;
  Mat before = pol.probs();
  pol.reshift();
  CHECK((pol.probs() - before).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(pol.logits.row(0).maxCoeff() == 0.0);
  CHECK(pol.logits.row(1).maxCoeff() == 0.0);
}

TEST_CASE("transition_under_policy mixes the action kernels") {
  FiniteMdp mdp = random_mdp(4, 1, 0.9, 3);
  Mat one = Mat::Ones(4, 1);
  CHECK((transition_under_policy(mdp, one) - mdp.transitions[0])
            .cwiseAbs()
            .maxCoeff() == 0.0);

  mdp = random_mdp(4, 2, 0.9, 4);
  Mat uniform = Mat::Constant(4, 2, 0.5);
  Mat avg = 0.5 * (mdp.transitions[0] + mdp.transitions[1]);
  CHECK((transition_under_policy(mdp, uniform) - avg).cwiseAbs().maxCoeff() <
        1e-15);

  mdp = random_mdp(3, 3, 0.9, 5);
  Mat pi = random_policy(3, 3, 6);
  Mat got = transition_under_policy(mdp, pi);
  for (int s = 0; s < 3; ++s) {
    CHECK(got.row(s).sum() == doctest::Approx(1.0).epsilon(1e-10));
    for (int t = 0; t < 3; ++t) {
      double want = 0.0;
      for (int a = 0; a < 3; ++a) want += pi(s, a) * mdp.transitions[a](s, t);
      CHECK(got(s, t) == doctest::Approx(want).epsilon(1e-14));
    }
  }

  CHECK_THROWS_AS(transition_under_policy(mdp, Mat::Ones(3, 1)),
                  std::invalid_argument);
}

TEST_CASE("reward_under_policy averages rewards over actions") {
  FiniteMdp mdp = random_mdp(3, 2, 0.9, 7);
  Mat onehot = Mat::Zero(3, 2);
  onehot(0, 1) = onehot(1, 0) = onehot(2, 1) = 1.0;
  Vec r = reward_under_policy(mdp, onehot);
  CHECK(r[0] == mdp.rewards(0, 1));
  CHECK(r[1] == mdp.rewards(1, 0));
  CHECK(r[2] == mdp.rewards(2, 1));

  mdp.rewards.col(0).setConstant(1.0);
  mdp.rewards.col(1).setConstant(3.0);
  r = reward_under_policy(mdp, Mat::Constant(3, 2, 0.5));
  CHECK((r.array() == 2.0).all());

  mdp = random_mdp(4, 3, 0.9, 8);
  Mat pi = random_policy(4, 3, 9);
  r = reward_under_policy(mdp, pi);
  for (int s = 0; s < 4; ++s) {
    double want = 0.0;
    for (int a = 0; a < 3; ++a) want += pi(s, a) * mdp.rewards(s, a);
    CHECK(r[s] == doctest::Approx(want).epsilon(1e-14));
  }
}

TEST_CASE("neg_entropy pins and range") {
  Mat uniform = Mat::Constant(2, 2, 0.5);
  CHECK(neg_entropy(uniform)[0] == doctest::Approx(-std::log(2.0)).epsilon(1e-14));

  Mat onehot = Mat::Zero(1, 3);
  onehot(0, 2) = 1.0;  // 0 log 0 contributes nothing
  CHECK(neg_entropy(onehot)[0] == 0.0);

  Mat skew(1, 2);
  skew << 0.75, 0.25;
  double want = 0.75 * std::log(0.75) + 0.25 * std::log(0.25);
  CHECK(neg_entropy(skew)[0] == doctest::Approx(want).epsilon(1e-14));

  Mat pi = random_policy(5, 4, 10);
  Vec h = neg_entropy(pi);
  CHECK(h.maxCoeff() <= 0.0);
  CHECK(h.minCoeff() >= -std::log(4.0) - 1e-12);
}

TEST_CASE("policy_value solves the regularized Bellman system") {
  FiniteMdp tiny;
  tiny.n_states = 1;
  tiny.n_actions = 1;
  tiny.gamma = 0.5;
  tiny.transitions = {Mat::Ones(1, 1)};
  tiny.rewards = Mat::Ones(1, 1);
  CHECK(policy_value(tiny, Mat::Ones(1, 1), 0.0)[0] ==
        doctest::Approx(2.0).epsilon(1e-12));

  FiniteMdp mdp = random_mdp(5, 2, 0.9, 12);
  Mat pi = random_policy(5, 2, 13);
  Vec v = policy_value(mdp, pi, 0.0);
  Mat p = transition_under_policy(mdp, pi);
  Vec rhs = reward_under_policy(mdp, pi) + mdp.gamma * (p * v);
  CHECK((v - rhs).cwiseAbs().maxCoeff() < 1e-10);

  // fixed-point iteration oracle for the smoothed system
  mdp = random_mdp(3, 2, 0.9, 14);
  pi = random_policy(3, 2, 15);
  double lambda = 0.1;
  Vec target = reward_under_policy(mdp, pi) - lambda * neg_entropy(pi);
  p = transition_under_policy(mdp, pi);
  Vec it = Vec::Zero(3);
  for (int k = 0; k < 2000; ++k) it = target + mdp.gamma * (p * it);
  CHECK((policy_value(mdp, pi, lambda) - it).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("bellman_residual identities") {
  FiniteMdp mdp = random_mdp(4, 2, 0.9, 16);
  Mat pi = random_policy(4, 2, 17);
  for (double lambda : {0.0, 0.1}) {
    Vec v = policy_value(mdp, pi, lambda);
    CHECK(bellman_residual(mdp, v, pi, lambda).cwiseAbs().maxCoeff() < 1e-9);
    double c = 2.5;
    Vec shifted = bellman_residual(mdp, v.array() + c, pi, lambda);
    CHECK((shifted.array() - c * (1.0 - mdp.gamma)).abs().maxCoeff() < 1e-9);
  }

  Rng rng(18);
  Vec v(4);
  for (int s = 0; s < 4; ++s) v[s] = 10.0 * rng.uniform() - 5.0;
  Vec got = bellman_residual(mdp, v, pi, 0.25);
  Mat p = transition_under_policy(mdp, pi);
  Vec h = neg_entropy(pi);
  for (int s = 0; s < 4; ++s) {
    double want = v[s] - mdp.gamma * p.row(s).dot(v) -
                  reward_under_policy(mdp, pi)[s] + 0.25 * h[s];
    CHECK(got[s] == doctest::Approx(want).epsilon(1e-13));
  }

  CHECK_THROWS_AS(bellman_residual(mdp, Vec::Zero(3), pi, 0.0),
                  std::invalid_argument);
}

TEST_CASE("objective reduces to the linear term at zero residual") {
  FiniteMdp mdp = random_mdp(4, 2, 0.9, 19);
  Mat pi = random_policy(4, 2, 20);
  StateDistribution rho = StateDistribution::uniform(4);
  HyperParams hp;
  hp.beta = 3.0;
  hp.lambda = 0.1;
  Vec v = policy_value(mdp, pi, hp.lambda);
  CHECK(objective(mdp, v, pi, rho, hp) ==
        doctest::Approx(-rho.weights.dot(v)).epsilon(1e-10));

  hp.beta = 0.0;  // residual term switched off entirely
  Vec any = Vec::LinSpaced(4, -1.0, 2.0);
  CHECK(objective(mdp, any, pi, rho, hp) ==
        doctest::Approx(-rho.weights.dot(any)).epsilon(1e-12));

  hp.beta = 2.0;
  Vec ell = bellman_residual(mdp, any, pi, hp.lambda);
  double want = -rho.weights.dot(any);
  for (int s = 0; s < 4; ++s) want += 0.5 * hp.beta * ell[s] * ell[s] * rho.weights[s];
  CHECK(objective(mdp, any, pi, rho, hp) == doctest::Approx(want).epsilon(1e-13));
}

TEST_CASE("discounted resolvents keep positive vectors positive and bounded") {
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    int n = 2 + rng.uniform_int(5);
    double gamma = 0.3 + 0.65 * rng.uniform();
    Mat p(n, n);
    for (int s = 0; s < n; ++s) {
      for (int t = 0; t < n; ++t) p(s, t) = -std::log(1.0 - rng.uniform());
      p.row(s) /= p.row(s).sum();
    }
    Vec c(n);
    for (int s = 0; s < n; ++s) c[s] = 0.05 + rng.uniform();
    Mat a = Mat::Identity(n, n) - gamma * p;

    Vec x = a.partialPivLu().solve(c);
    CHECK(x.minCoeff() > 0.0);
    CHECK(x.maxCoeff() < c.maxCoeff() / (1.0 - gamma) + 1e-12);

    Vec y = a.transpose().partialPivLu().solve(c);
    CHECK(y.minCoeff() > 0.0);
    CHECK(y.maxCoeff() < c.sum() / (1.0 - gamma) + 1e-12);
  }
}

TEST_CASE("one critic step at eta = 1/(4 beta) lowers the objective") {
  for (uint64_t seed : {22, 23, 24}) {
    FiniteMdp mdp = random_mdp(4, 2, 0.9, seed);
    Mat pi = random_policy(4, 2, seed + 100);
    StateDistribution rho = StateDistribution::uniform(4);
    HyperParams hp;
    hp.beta = 10.0;
    Rng rng(seed + 200);
    Vec v(4);
    for (int s = 0; s < 4; ++s) v[s] = 6.0 * rng.uniform() - 3.0;
    Vec g = grad_v(mdp, v, pi, rho, hp);
    Vec stepped = v - (1.0 / (4.0 * hp.beta)) * g;
    CHECK(objective(mdp, stepped, pi, rho, hp) <=
          objective(mdp, v, pi, rho, hp) + 1e-12);
  }
}

TEST_CASE("hyperparameter validation aggregates and distributions are checked") {
  HyperParams hp;
  hp.beta = -1.0;
  hp.lambda = -0.5;
  hp.batch_size = 0;
  try {
    validate(hp);
    FAIL("expected invalid_argument");
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    CHECK(msg.find("beta") != std::string::npos);
    CHECK(msg.find("lambda") != std::string::npos);
    CHECK(msg.find("batch_size") != std::string::npos);
  }

  StateDistribution rho;
  rho.weights = Vec::Constant(3, 0.5);  // sums to 1.5
  CHECK_THROWS_AS(validate(rho, 3), std::invalid_argument);
  rho.weights = Vec::Zero(3);
  CHECK_THROWS_AS(validate(rho, 3), std::invalid_argument);
  CHECK_NOTHROW(validate(StateDistribution::uniform(3), 3));
}
