// Experiment driver. Talks to the library exclusively through the C API.

#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vac/vac.h"

namespace {

int status_to_exit(vac_status st) {
  if (st == VAC_OK) return 0;
  if (st == VAC_INVALID_ARGUMENT) return 1;
  return 2;
}

int fail(vac_status st) {
  std::fprintf(stderr, "error: %s\n", vac_last_error());
  return status_to_exit(st);
}

void print_warnings(const vac_experiment* exp) {
  std::string all = vac_experiment_warnings(exp);
  size_t pos = 0;
  while (pos < all.size()) {
    size_t nl = all.find('\n', pos);
    if (nl == std::string::npos) nl = all.size();
    std::fprintf(stderr, "warning: %s\n",
                 all.substr(pos, nl - pos).c_str());
    pos = nl + 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tabular actor-critic experiments"};
  app.require_subcommand(1);

  std::string config_path, out_path, suite = "all";
  std::vector<unsigned long long> seed_override;

  CLI::App* solve = app.add_subcommand(
      "solve", "print the exact solution of the configured instance");
  solve->add_option("--config", config_path, "experiment config file")
      ->required();

  CLI::App* train = app.add_subcommand(
      "train", "run the configured experiment and write trace CSVs");
  train->add_option("--config", config_path, "experiment config file")
      ->required();
  train->add_option("--out", out_path,
                    "output directory (overrides [run] out)");
  train->add_option("--seed", seed_override,
                    "seeds to run instead of the configured list");

  CLI::App* gen = app.add_subcommand(
      "gen-traj", "roll one behavior trajectory and save it as text");
  gen->add_option("--config", config_path, "experiment config file")
      ->required();
  gen->add_option("--out", out_path, "output file")->required();
  gen->add_option("--seed", seed_override,
                  "seed to roll (first one is used)");

  CLI::App* verify =
      app.add_subcommand("verify", "run a named property suite");
  verify->add_option(
      "--suite", suite,
      "matrix-bounds | fixed-point | optimal-limit | regularized-limit | "
      "gradient-consistency | all");

  CLI11_PARSE(app, argc, argv);

  if (verify->parsed()) {
    vac_status st = vac_verify(suite.c_str());
    if (st == VAC_INVALID_ARGUMENT) return fail(st);
    if (st != VAC_OK) std::fprintf(stderr, "error: %s\n", vac_last_error());
    return status_to_exit(st);
  }

  vac_experiment* exp = nullptr;
  vac_status st = vac_experiment_load(config_path.c_str(), &exp);
  if (st != VAC_OK) return fail(st);
  print_warnings(exp);
  if (!seed_override.empty()) {
    st = vac_experiment_override_seeds(exp, seed_override.data(),
                                       seed_override.size());
    if (st != VAC_OK) {
      vac_experiment_destroy(exp);
      return fail(st);
    }
  }

  if (solve->parsed()) {
    char* text = nullptr;
    st = vac_experiment_solve_report(exp, &text);
    if (st == VAC_OK) {
      std::fputs(text, stdout);
      vac_string_free(text);
    }
  } else if (train->parsed()) {
    st = vac_experiment_run(exp, out_path.empty() ? nullptr
                                                  : out_path.c_str());
  } else {
    st = vac_experiment_write_trajectory(exp, out_path.c_str());
  }
  vac_experiment_destroy(exp);
  if (st != VAC_OK) return fail(st);
  return 0;
}
