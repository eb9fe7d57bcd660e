#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "vac/instances.hpp"
#include "vac/mdp.hpp"
#include "vac/trace.hpp"
#include "vac/trajectory.hpp"

namespace vac {

enum class Method { model_based, model_free, v_formulation, npg };

Method method_from_string(const std::string& name);
std::string to_string(Method m);
Variant variant_from_string(const std::string& name);
std::string to_string(Variant v);

/// Everything a run needs, read from an INI-style file with sections
/// [mdp], [algorithm], [run]. Parsing validates every field and reports all
/// violations at once; keys that are syntactically fine but ignored by the
/// chosen kind/method land in `warnings`.
struct ExperimentConfig {
  // [mdp]
  std::string kind;  // ring | torus | random | file
  int n = 5;         // ring size
  int n1 = 5, n2 = 5;
  double sigma = 0.0;
  double gamma = 0.9;
  int n_states = 5;  // random instance
  int n_actions = 2;
  uint64_t mdp_seed = 0;
  std::string mdp_path;

  // [algorithm]
  Method method = Method::model_based;
  Variant variant = Variant::vanilla;
  HyperParams params;
  long steps = 0;           // trajectory length for sample-based methods
  long max_iters = 200000;  // model-based iteration budget
  double tol = 1e-8;        // model-based gradient stopping tolerance
  NextStateMode next_state_mode = NextStateMode::exact;
  double init_scale = 0.0;  // random logits init half-width for sample-based methods
  double npg_eps = 2e-4;
  long npg_outer_iters = 100;
  long npg_max_inner = 10000;

  // [run]
  std::vector<uint64_t> seeds;
  std::string out_dir;
  int stride = 0;   // 0 picks the method default (10 model-based, else 1)
  int workers = 0;  // 0 uses hardware concurrency

  std::vector<std::string> warnings;
  std::string text;  // raw config bytes; their hash is the run id
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config(const std::string& path);

FiniteMdp build_mdp(const ExperimentConfig& config);
StateGeometry build_geometry(const ExperimentConfig& config);

/// One seed of the configured experiment, against precomputed references.
/// The behavior policy of sample-based methods is uniform.
RunTrace run_config_seed(const ExperimentConfig& config, const FiniteMdp& mdp,
                         const StateGeometry& geom, const TraceRefs& refs,
                         uint64_t seed);

struct SeedOutcome {
  uint64_t seed = 0;
  bool failed = false;    // diverged or threw; message says which
  std::string message;
  std::string trace_file;  // empty when the run threw before producing rows
};

struct ExperimentResult {
  std::string run_id;
  std::vector<SeedOutcome> outcomes;
  std::string aggregate_file;
  std::string metadata_file;
  int failed_count() const;
};

/// Runs every seed (worker pool; outputs independent of worker count) and
/// writes per-seed trace CSVs, an aggregate CSV with mean and 10/50/90
/// percentile bands per iteration, and metadata.json with the config hash,
/// instance hash, reference-solution hash and threshold constants. Reruns
/// with the same config produce byte-identical files. Failed seeds keep
/// their partial traces.
ExperimentResult run_experiment(const ExperimentConfig& config,
                                const std::string& out_dir);

/// Text dump of the exact solution of the configured instance: optimal
/// values, greedy actions, action gap, the exact-recovery beta threshold at
/// alpha = gap/4, and the smoothed solution when lambda > 0.
std::string solve_report(const ExperimentConfig& config);

/// Rolls one trajectory under the uniform behavior policy using the first
/// configured seed and saves it as text.
void write_trajectory(const ExperimentConfig& config, const std::string& path);

/// Named property suites runnable from the CLI: matrix-bounds, fixed-point,
/// optimal-limit, regularized-limit, gradient-consistency, or all. Prints
/// one PASS/FAIL line per check to `out`; returns true iff every check
/// passed. Unknown names throw std::invalid_argument.
bool run_verify_suite(const std::string& name, std::ostream& out);

}  // namespace vac
