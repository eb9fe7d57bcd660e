#include "vac/instances.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "vac/oracle.hpp"
#include "vac/util.hpp"

namespace vac {

static int mod(int x, int n) { return ((x % n) + n) % n; }

static double normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

// Mass of each state bin [t-1/2, t+1/2) mod n under N(mu, sigma^2),
// truncated at 8 sigma and renormalized.
static Vec wrapped_bin_row(int n, double mu, double sigma) {
  Vec row = Vec::Zero(n);
  if (sigma == 0.0) {
    row[mod((int)std::lround(mu), n)] = 1.0;
    return row;
  }
  int lo = (int)std::floor(mu - 8.0 * sigma + 0.5);
  int hi = (int)std::ceil(mu + 8.0 * sigma - 0.5);
  for (int m = lo; m <= hi; ++m) {
    double mass = normal_cdf((m + 0.5 - mu) / sigma) -
                  normal_cdf((m - 0.5 - mu) / sigma);
    row[mod(m, n)] += mass;
  }
  return row / row.sum();
}

int StateGeometry::num_states() const {
  switch (kind) {
    case Kind::ring:
      return n;
    case Kind::torus:
      return n1 * n2;
    default:
      return 0;
  }
}

int StateGeometry::num_actions() const {
  switch (kind) {
    case Kind::ring:
      return 2;
    case Kind::torus:
      return 4;
    default:
      return 0;
  }
}

static void torus_drift(int a, int& di, int& dj) {
  static const int d[4][2] = {{+1, 0}, {-1, 0}, {0, +1}, {0, -1}};
  if (a < 0 || a > 3)
    throw std::invalid_argument("StateGeometry: torus action out of range");
  di = d[a][0];
  dj = d[a][1];
}

int StateGeometry::drift_step(int s, int a) const {
  if (kind == Kind::ring) {
    if (a != 0 && a != 1)
      throw std::invalid_argument("StateGeometry: ring action out of range");
    return mod(s + (a == 0 ? 1 : -1), n);
  }
  if (kind == Kind::torus) {
    int di, dj;
    torus_drift(a, di, dj);
    int i = s / n2, j = s % n2;
    return mod(i + di, n1) * n2 + mod(j + dj, n2);
  }
  throw std::invalid_argument("StateGeometry: no geometry");
}

int StateGeometry::borrow_displacement(int s_t, int s_t1, int s_t2, int a_ref,
                                       int a_t1) const {
  if (kind == Kind::ring) {
    int dref = a_ref == 0 ? 1 : -1;
    int d1 = a_t1 == 0 ? 1 : -1;
    if ((a_ref != 0 && a_ref != 1) || (a_t1 != 0 && a_t1 != 1))
      throw std::invalid_argument("StateGeometry: ring action out of range");
    return mod(s_t + (s_t2 - s_t1) - d1 + dref, n);
  }
  if (kind == Kind::torus) {
    int ri, rj, bi, bj;
    torus_drift(a_ref, ri, rj);
    torus_drift(a_t1, bi, bj);
    int i0 = s_t / n2, j0 = s_t % n2;
    int i1 = s_t1 / n2, j1 = s_t1 % n2;
    int i2 = s_t2 / n2, j2 = s_t2 % n2;
    int i = mod(i0 + (i2 - i1) - bi + ri, n1);
    int j = mod(j0 + (j2 - j1) - bj + rj, n2);
    return i * n2 + j;
  }
  throw std::invalid_argument(
      "StateGeometry: displacement borrowing requires ring or torus geometry");
}

FiniteMdp ring_mdp(const RingSpec& spec) {
  if (spec.n < 2) throw std::invalid_argument("ring_mdp: n must be >= 2");
  if (spec.sigma < 0.0) throw std::invalid_argument("ring_mdp: sigma < 0");
  FiniteMdp mdp;
  mdp.n_states = spec.n;
  mdp.n_actions = 2;
  mdp.gamma = spec.gamma;
  mdp.transitions.assign(2, Mat::Zero(spec.n, spec.n));
  mdp.rewards.resize(spec.n, 2);
  for (int k = 0; k < spec.n; ++k) {
    mdp.transitions[0].row(k) = wrapped_bin_row(spec.n, k + 1.0, spec.sigma);
    mdp.transitions[1].row(k) = wrapped_bin_row(spec.n, k - 1.0, spec.sigma);
    double r = 1.0 + std::sin(2.0 * M_PI * k / spec.n);
    mdp.rewards(k, 0) = r;
    mdp.rewards(k, 1) = r;
  }
  validate(mdp);
  return mdp;
}

StateGeometry ring_geometry(const RingSpec& spec) {
  StateGeometry g;
  g.kind = StateGeometry::Kind::ring;
  g.n = spec.n;
  return g;
}

FiniteMdp torus_mdp(const TorusSpec& spec) {
  if (spec.n1 < 2 || spec.n2 < 2)
    throw std::invalid_argument("torus_mdp: n1 and n2 must be >= 2");
  if (spec.sigma < 0.0) throw std::invalid_argument("torus_mdp: sigma < 0");
  int ns = spec.n1 * spec.n2;
  FiniteMdp mdp;
  mdp.n_states = ns;
  mdp.n_actions = 4;
  mdp.gamma = spec.gamma;
  mdp.transitions.assign(4, Mat::Zero(ns, ns));
  mdp.rewards.resize(ns, 4);
  for (int i = 0; i < spec.n1; ++i)
    for (int j = 0; j < spec.n2; ++j) {
      int s = i * spec.n2 + j;
      double r = 2.0 + std::sin(2.0 * M_PI * i / spec.n1) +
                 std::cos(2.0 * M_PI * j / spec.n2);
      for (int a = 0; a < 4; ++a) {
        mdp.rewards(s, a) = r;
        int di, dj;
        torus_drift(a, di, dj);
        if (dj == 0) {
          Vec row = wrapped_bin_row(spec.n1, i + di, spec.sigma);
          for (int t = 0; t < spec.n1; ++t)
            mdp.transitions[a](s, t * spec.n2 + j) = row[t];
        } else {
          Vec row = wrapped_bin_row(spec.n2, j + dj, spec.sigma);
          for (int t = 0; t < spec.n2; ++t)
            mdp.transitions[a](s, i * spec.n2 + t) = row[t];
        }
      }
    }
  validate(mdp);
  return mdp;
}

StateGeometry torus_geometry(const TorusSpec& spec) {
  StateGeometry g;
  g.kind = StateGeometry::Kind::torus;
  g.n1 = spec.n1;
  g.n2 = spec.n2;
  return g;
}

FiniteMdp random_mdp(int n_states, int n_actions, double gamma,
                     uint64_t seed) {
  if (n_states < 1 || n_actions < 1)
    throw std::invalid_argument("random_mdp: sizes must be >= 1");
  for (uint64_t attempt = 0; attempt < 100; ++attempt) {
    Rng rng(seed, attempt);
    FiniteMdp mdp;
    mdp.n_states = n_states;
    mdp.n_actions = n_actions;
    mdp.gamma = gamma;
    mdp.transitions.assign(n_actions, Mat::Zero(n_states, n_states));
    mdp.rewards.resize(n_states, n_actions);
    for (int a = 0; a < n_actions; ++a)
      for (int s = 0; s < n_states; ++s) {
        Vec row(n_states);
        for (int t = 0; t < n_states; ++t)
          row[t] = -std::log(1.0 - rng.uniform());
        mdp.transitions[a].row(s) = row / row.sum();
      }
    for (int s = 0; s < n_states; ++s)
      for (int a = 0; a < n_actions; ++a) mdp.rewards(s, a) = rng.uniform();
    validate(mdp);
    if (n_actions == 1) return mdp;
    OptimalSolution sol = value_iteration(mdp, 1e-10);
    if (action_gap(mdp, sol.values) > 1e-8) return mdp;
  }
  throw std::runtime_error(
      "random_mdp: no positive-gap instance within 100 attempts");
}

std::string mdp_to_text(const FiniteMdp& mdp) {
  std::ostringstream out;
  out << "vac-mdp v1\n";
  out << "n_states " << mdp.n_states << "\n";
  out << "n_actions " << mdp.n_actions << "\n";
  out << "gamma " << format_double(mdp.gamma) << "\n";
  for (int a = 0; a < mdp.n_actions; ++a) {
    out << "transitions " << a << "\n";
    for (int s = 0; s < mdp.n_states; ++s) {
      for (int t = 0; t < mdp.n_states; ++t)
        out << (t ? " " : "") << format_double(mdp.transitions[a](s, t));
      out << "\n";
    }
  }
  out << "rewards\n";
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a)
      out << (a ? " " : "") << format_double(mdp.rewards(s, a));
    out << "\n";
  }
  return out.str();
}

static std::string expect_word(std::istringstream& in, const char* what) {
  std::string w;
  if (!(in >> w))
    throw std::invalid_argument(std::string("mdp text: missing ") + what);
  return w;
}

static double expect_num(std::istringstream& in, const char* what) {
  double x;
  if (!(in >> x))
    throw std::invalid_argument(std::string("mdp text: bad number in ") +
                                what);
  return x;
}

FiniteMdp mdp_from_text(const std::string& text) {
  std::istringstream in(text);
  if (expect_word(in, "magic") != "vac-mdp" ||
      expect_word(in, "version") != "v1")
    throw std::invalid_argument("mdp text: not a vac-mdp v1 file");
  FiniteMdp mdp;
  if (expect_word(in, "n_states") != "n_states")
    throw std::invalid_argument("mdp text: expected n_states");
  mdp.n_states = (int)expect_num(in, "n_states");
  if (expect_word(in, "n_actions") != "n_actions")
    throw std::invalid_argument("mdp text: expected n_actions");
  mdp.n_actions = (int)expect_num(in, "n_actions");
  if (expect_word(in, "gamma") != "gamma")
    throw std::invalid_argument("mdp text: expected gamma");
  mdp.gamma = expect_num(in, "gamma");
  if (mdp.n_states < 1 || mdp.n_actions < 1 || mdp.n_states > 100000)
    throw std::invalid_argument("mdp text: sizes out of range");
  mdp.transitions.assign(mdp.n_actions, Mat::Zero(mdp.n_states, mdp.n_states));
  mdp.rewards.resize(mdp.n_states, mdp.n_actions);
  for (int a = 0; a < mdp.n_actions; ++a) {
    if (expect_word(in, "transitions") != "transitions" ||
        (int)expect_num(in, "transitions index") != a)
      throw std::invalid_argument("mdp text: expected transitions block");
    for (int s = 0; s < mdp.n_states; ++s)
      for (int t = 0; t < mdp.n_states; ++t)
        mdp.transitions[a](s, t) = expect_num(in, "transitions");
  }
  if (expect_word(in, "rewards") != "rewards")
    throw std::invalid_argument("mdp text: expected rewards block");
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a)
      mdp.rewards(s, a) = expect_num(in, "rewards");
  std::string extra;
  if (in >> extra)
    throw std::invalid_argument("mdp text: trailing content: " + extra);
  validate(mdp);
  return mdp;
}

void save_mdp(const FiniteMdp& mdp, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::invalid_argument("save_mdp: cannot open " + path);
  out << mdp_to_text(mdp);
  if (!out) throw std::runtime_error("save_mdp: write failed for " + path);
}

FiniteMdp load_mdp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("load_mdp: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return mdp_from_text(buf.str());
}

std::string mdp_hash(const FiniteMdp& mdp) {
  return hex64(fnv1a64(mdp_to_text(mdp)));
}

}  // namespace vac
