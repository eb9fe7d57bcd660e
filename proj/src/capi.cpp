#include "vac/vac.h"

#include <cstring>
#include <iostream>
#include <string>

#include "vac/harness.hpp"
#include "vac/instances.hpp"
#include "vac/mdp.hpp"
#include "vac/oracle.hpp"

namespace {

thread_local std::string g_last_error;

template <typename Fn>
vac_status guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const std::invalid_argument& e) {
    g_last_error = e.what();
    return VAC_INVALID_ARGUMENT;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return VAC_RUNTIME_ERROR;
  } catch (...) {
    g_last_error = "unknown error";
    return VAC_RUNTIME_ERROR;
  }
}

vac_status arg_error(const char* msg) {
  g_last_error = msg;
  return VAC_INVALID_ARGUMENT;
}

}  // namespace

struct vac_mdp {
  vac::FiniteMdp m;
};

struct vac_solution {
  vac::OptimalSolution s;
};

struct vac_experiment {
  vac::ExperimentConfig c;
  std::string warnings_joined;
};

namespace {

vac_experiment* wrap_config(vac::ExperimentConfig&& c) {
  auto* e = new vac_experiment{std::move(c), {}};
  for (size_t i = 0; i < e->c.warnings.size(); ++i) {
    if (i) e->warnings_joined += '\n';
    e->warnings_joined += e->c.warnings[i];
  }
  return e;
}

}  // namespace

extern "C" {

const char* vac_last_error(void) { return g_last_error.c_str(); }

vac_status vac_mdp_create_ring(int n, double sigma, double gamma,
                               vac_mdp** out) {
  if (!out) return arg_error("out is null");
  return guarded([&] {
    *out = new vac_mdp{vac::ring_mdp({n, sigma, gamma})};
    return VAC_OK;
  });
}

vac_status vac_mdp_create_torus(int n1, int n2, double sigma, double gamma,
                                vac_mdp** out) {
  if (!out) return arg_error("out is null");
  return guarded([&] {
    *out = new vac_mdp{vac::torus_mdp({n1, n2, sigma, gamma})};
    return VAC_OK;
  });
}

vac_status vac_mdp_create_random(int n_states, int n_actions, double gamma,
                                 unsigned long long seed, vac_mdp** out) {
  if (!out) return arg_error("out is null");
  return guarded([&] {
    *out = new vac_mdp{vac::random_mdp(n_states, n_actions, gamma, seed)};
    return VAC_OK;
  });
}

vac_status vac_mdp_load(const char* path, vac_mdp** out) {
  if (!out) return arg_error("out is null");
  if (!path) return arg_error("path is null");
  return guarded([&] {
    *out = new vac_mdp{vac::load_mdp(path)};
    return VAC_OK;
  });
}

vac_status vac_mdp_save(const vac_mdp* mdp, const char* path) {
  if (!mdp) return arg_error("mdp is null");
  if (!path) return arg_error("path is null");
  return guarded([&] {
    vac::save_mdp(mdp->m, path);
    return VAC_OK;
  });
}

void vac_mdp_destroy(vac_mdp* mdp) { delete mdp; }

int vac_mdp_num_states(const vac_mdp* mdp) {
  return mdp ? mdp->m.n_states : 0;
}

int vac_mdp_num_actions(const vac_mdp* mdp) {
  return mdp ? mdp->m.n_actions : 0;
}

double vac_mdp_gamma(const vac_mdp* mdp) { return mdp ? mdp->m.gamma : 0.0; }

vac_status vac_solve(const vac_mdp* mdp, double lambda, double tol,
                     vac_solution** out) {
  if (!mdp) return arg_error("mdp is null");
  if (!out) return arg_error("out is null");
  return guarded([&] {
    double t = tol > 0.0 ? tol : 1e-10;
    vac::OptimalSolution s = lambda > 0.0
                                 ? vac::soft_value_iteration(mdp->m, lambda, t)
                                 : vac::value_iteration(mdp->m, t);
    *out = new vac_solution{std::move(s)};
    return VAC_OK;
  });
}

void vac_solution_destroy(vac_solution* sol) { delete sol; }

vac_status vac_solution_values(const vac_solution* sol, double* buf,
                               size_t len) {
  if (!sol) return arg_error("solution is null");
  if (!buf) return arg_error("buf is null");
  size_t n = (size_t)sol->s.values.size();
  if (len < n) return arg_error("buffer too small for values");
  for (size_t i = 0; i < n; ++i) buf[i] = sol->s.values[(int)i];
  return VAC_OK;
}

vac_status vac_solution_policy(const vac_solution* sol, double* buf,
                               size_t len) {
  if (!sol) return arg_error("solution is null");
  if (!buf) return arg_error("buf is null");
  size_t rows = (size_t)sol->s.policy.rows(), cols = (size_t)sol->s.policy.cols();
  if (len < rows * cols) return arg_error("buffer too small for policy");
  for (size_t s = 0; s < rows; ++s)
    for (size_t a = 0; a < cols; ++a)
      buf[s * cols + a] = sol->s.policy((int)s, (int)a);
  return VAC_OK;
}

vac_status vac_solution_greedy(const vac_solution* sol, int* buf, size_t len) {
  if (!sol) return arg_error("solution is null");
  if (!buf) return arg_error("buf is null");
  if (len < sol->s.greedy.size())
    return arg_error("buffer too small for greedy actions");
  for (size_t i = 0; i < sol->s.greedy.size(); ++i) buf[i] = sol->s.greedy[i];
  return VAC_OK;
}

vac_status vac_action_gap(const vac_mdp* mdp, double* out) {
  if (!mdp) return arg_error("mdp is null");
  if (!out) return arg_error("out is null");
  return guarded([&] {
    vac::OptimalSolution opt = vac::value_iteration(mdp->m);
    *out = vac::action_gap(mdp->m, opt.values);
    return VAC_OK;
  });
}

vac_status vac_beta_threshold(const vac_mdp* mdp, double alpha, double* out) {
  if (!mdp) return arg_error("mdp is null");
  if (!out) return arg_error("out is null");
  return guarded([&] {
    *out = vac::beta_threshold(
        mdp->m, alpha, vac::StateDistribution::uniform(mdp->m.n_states));
    return VAC_OK;
  });
}

vac_status vac_experiment_load(const char* path, vac_experiment** out) {
  if (!out) return arg_error("out is null");
  if (!path) return arg_error("path is null");
  return guarded([&] {
    *out = wrap_config(vac::parse_config(path));
    return VAC_OK;
  });
}

vac_status vac_experiment_parse(const char* text, vac_experiment** out) {
  if (!out) return arg_error("out is null");
  if (!text) return arg_error("text is null");
  return guarded([&] {
    *out = wrap_config(vac::parse_config_text(text));
    return VAC_OK;
  });
}

void vac_experiment_destroy(vac_experiment* exp) { delete exp; }

const char* vac_experiment_warnings(const vac_experiment* exp) {
  return exp ? exp->warnings_joined.c_str() : "";
}

vac_status vac_experiment_override_seeds(vac_experiment* exp,
                                         const unsigned long long* seeds,
                                         size_t n) {
  if (!exp) return arg_error("experiment is null");
  if (!seeds || n == 0) return arg_error("seed list is empty");
  exp->c.seeds.assign(seeds, seeds + n);
  return VAC_OK;
}

vac_status vac_experiment_run(const vac_experiment* exp, const char* out_dir) {
  if (!exp) return arg_error("experiment is null");
  return guarded([&]() -> vac_status {
    vac::ExperimentResult result =
        vac::run_experiment(exp->c, out_dir ? out_dir : "");
    if (result.failed_count() > 0) {
      std::string msg = std::to_string(result.failed_count()) + " of " +
                        std::to_string(result.outcomes.size()) +
                        " seeds failed:";
      for (const vac::SeedOutcome& o : result.outcomes)
        if (o.failed)
          msg += "\n  seed " + std::to_string(o.seed) + ": " + o.message;
      g_last_error = msg;
      return VAC_DIVERGENCE;
    }
    return VAC_OK;
  });
}

vac_status vac_experiment_solve_report(const vac_experiment* exp,
                                       char** text_out) {
  if (!exp) return arg_error("experiment is null");
  if (!text_out) return arg_error("text_out is null");
  return guarded([&] {
    std::string report = vac::solve_report(exp->c);
    char* buf = new char[report.size() + 1];
    std::memcpy(buf, report.c_str(), report.size() + 1);
    *text_out = buf;
    return VAC_OK;
  });
}

vac_status vac_experiment_write_trajectory(const vac_experiment* exp,
                                           const char* path) {
  if (!exp) return arg_error("experiment is null");
  if (!path) return arg_error("path is null");
  return guarded([&] {
    vac::write_trajectory(exp->c, path);
    return VAC_OK;
  });
}

void vac_string_free(char* s) { delete[] s; }

vac_status vac_verify(const char* suite) {
  if (!suite) return arg_error("suite is null");
  return guarded([&]() -> vac_status {
    if (vac::run_verify_suite(suite, std::cout)) return VAC_OK;
    g_last_error = "one or more verify checks failed";
    return VAC_RUNTIME_ERROR;
  });
}

}  // extern "C"
