#include "vac/util.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <thread>
#include <vector>

namespace vac {

std::string format_double(double x) {
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, x);
    if (std::strtod(buf, nullptr) == x) return buf;
  }
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

uint64_t fnv1a64(std::string_view bytes) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)x);
  return buf;
}

Rng::Rng(uint64_t seed, uint64_t stream) : gen(0) {
  std::seed_seq seq{(uint32_t)seed, (uint32_t)(seed >> 32), (uint32_t)stream,
                    (uint32_t)(stream >> 32)};
  gen.seed(seq);
}

double Rng::uniform() { return (gen() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  double u1 = 1.0 - uniform();  // (0, 1]
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

int Rng::sample(const double* weights, int n) {
  if (n < 1) throw std::invalid_argument("Rng::sample: empty weights");
  double total = 0.0;
  for (int i = 0; i < n; ++i) total += weights[i];
  double u = uniform() * total;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    acc += weights[i];
    if (u < acc) return i;
  }
  return n - 1;  // u landed on accumulated rounding slack
}

int Rng::uniform_int(int n) {
  if (n < 1) throw std::invalid_argument("Rng::uniform_int: n must be >= 1");
  return (int)(uniform() * n);
}

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  if (workers > n) workers = n;
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  for (auto& t : pool) t.join();
}

}  // namespace vac
