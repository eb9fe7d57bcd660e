#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <string_view>

namespace vac {

/// Shortest decimal string that round-trips the double (printf %.17g with a
/// trailing-digit trim). Used everywhere a number is serialized so reruns
/// are byte-identical.
std::string format_double(double x);

uint64_t fnv1a64(std::string_view bytes);
std::string hex64(uint64_t x);

/// Deterministic sampling helpers on top of mt19937_64. Uniforms come from
/// the top 53 bits so streams do not depend on the standard library's
/// distribution implementations.
struct Rng {
  std::mt19937_64 gen;

  explicit Rng(uint64_t seed) : gen(seed) {}
  Rng(uint64_t seed, uint64_t stream);

  /// Uniform in [0, 1).
  double uniform();
  /// Standard normal (Box-Muller on uniforms).
  double normal();
  /// Index i with probability weights[i] / sum(weights). Walks the CDF.
  int sample(const double* weights, int n);
  /// Uniform integer in [0, n).
  int uniform_int(int n);
};

/// Runs fn(i) for i in [0, n) across up to `workers` threads. fn must only
/// touch slot i of shared state; results are identical for any worker count.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

}  // namespace vac
