#include "vac/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"
#include "vac/model_based.hpp"
#include "vac/model_free.hpp"
#include "vac/npg.hpp"
#include "vac/oracle.hpp"
#include "vac/util.hpp"

namespace vac {

Method method_from_string(const std::string& name) {
  if (name == "model_based") return Method::model_based;
  if (name == "model_free") return Method::model_free;
  if (name == "v_formulation") return Method::v_formulation;
  if (name == "npg") return Method::npg;
  throw std::invalid_argument(
      "unknown method '" + name +
      "' (model_based | model_free | v_formulation | npg)");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::model_based: return "model_based";
    case Method::model_free: return "model_free";
    case Method::v_formulation: return "v_formulation";
    case Method::npg: return "npg";
  }
  return "?";
}

Variant variant_from_string(const std::string& name) {
  if (name == "vanilla") return Variant::vanilla;
  if (name == "clipping") return Variant::clipping;
  if (name == "flipping") return Variant::flipping;
  throw std::invalid_argument("unknown variant '" + name +
                              "' (vanilla | clipping | flipping)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::vanilla: return "vanilla";
    case Variant::clipping: return "clipping";
    case Variant::flipping: return "flipping";
  }
  return "?";
}

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

struct RawConfig {
  std::map<std::string, std::string> kv;  // "section.key" -> value
  std::vector<std::string> errors;
};

RawConfig parse_ini(const std::string& text) {
  RawConfig raw;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    std::string at = "line " + std::to_string(lineno) + ": ";
    if (t.front() == '[') {
      if (t.back() != ']') {
        raw.errors.push_back(at + "unterminated section header");
        continue;
      }
      section = trim(t.substr(1, t.size() - 2));
      if (section != "mdp" && section != "algorithm" && section != "run")
        raw.errors.push_back(at + "unknown section [" + section + "]");
      continue;
    }
    size_t eq = t.find('=');
    if (eq == std::string::npos) {
      raw.errors.push_back(at + "expected key = value, got '" + t + "'");
      continue;
    }
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (section.empty()) {
      raw.errors.push_back(at + "key '" + key + "' outside any section");
      continue;
    }
    if (key.empty()) {
      raw.errors.push_back(at + "empty key");
      continue;
    }
    std::string full = section + "." + key;
    if (raw.kv.count(full)) {
      raw.errors.push_back(at + "duplicate key " + full);
      continue;
    }
    raw.kv[full] = value;
  }
  return raw;
}

// Typed field extraction; every malformed value becomes one error entry and
// the field keeps its default.
struct Reader {
  const std::map<std::string, std::string>& kv;
  std::vector<std::string>& errors;
  std::set<std::string> used;

  bool has(const std::string& k) const { return kv.count(k) > 0; }

  void get_string(const std::string& k, std::string* out) {
    if (!has(k)) return;
    used.insert(k);
    *out = kv.at(k);
  }
  void get_double(const std::string& k, double* out) {
    if (!has(k)) return;
    used.insert(k);
    const std::string& v = kv.at(k);
    char* end = nullptr;
    double x = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0' || !std::isfinite(x))
      errors.push_back(k + ": not a finite number: '" + v + "'");
    else
      *out = x;
  }
  void get_long(const std::string& k, long* out) {
    if (!has(k)) return;
    used.insert(k);
    const std::string& v = kv.at(k);
    char* end = nullptr;
    long x = std::strtol(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0')
      errors.push_back(k + ": not an integer: '" + v + "'");
    else
      *out = x;
  }
  void get_int(const std::string& k, int* out) {
    long x = 0;
    bool present = has(k);
    get_long(k, &x);
    if (present && (x < INT_MIN_LOCAL || x > INT_MAX_LOCAL))
      errors.push_back(k + ": out of int range");
    else if (present)
      *out = (int)x;
  }
  void get_u64(const std::string& k, uint64_t* out) {
    if (!has(k)) return;
    used.insert(k);
    const std::string& v = kv.at(k);
    if (!v.empty() && v[0] == '-') {
      errors.push_back(k + ": must be a non-negative integer: '" + v + "'");
      return;
    }
    char* end = nullptr;
    unsigned long long x = std::strtoull(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0')
      errors.push_back(k + ": not an integer: '" + v + "'");
    else
      *out = x;
  }
  // Comma or whitespace separated; "a..b" expands to the inclusive range.
  void get_seeds(const std::string& k, std::vector<uint64_t>* out) {
    if (!has(k)) return;
    used.insert(k);
    std::string v = kv.at(k);
    for (char& c : v)
      if (c == ',') c = ' ';
    std::istringstream in(v);
    std::string tok;
    std::vector<uint64_t> seeds;
    while (in >> tok) {
      size_t dots = tok.find("..");
      if (dots == std::string::npos) {
        char* end = nullptr;
        unsigned long long x = std::strtoull(tok.c_str(), &end, 10);
        if (end == tok.c_str() || *end != '\0') {
          errors.push_back(k + ": bad seed '" + tok + "'");
          return;
        }
        seeds.push_back(x);
        continue;
      }
      char* end = nullptr;
      std::string lo_s = tok.substr(0, dots), hi_s = tok.substr(dots + 2);
      unsigned long long lo = std::strtoull(lo_s.c_str(), &end, 10);
      bool lo_ok = !lo_s.empty() && end == lo_s.c_str() + lo_s.size();
      unsigned long long hi = std::strtoull(hi_s.c_str(), &end, 10);
      bool hi_ok = !hi_s.empty() && end == hi_s.c_str() + hi_s.size();
      if (!lo_ok || !hi_ok || hi < lo || hi - lo > 1000000) {
        errors.push_back(k + ": bad seed range '" + tok + "'");
        return;
      }
      for (unsigned long long s = lo; s <= hi; ++s) seeds.push_back(s);
    }
    if (seeds.empty()) {
      errors.push_back(k + ": empty seed list");
      return;
    }
    *out = seeds;
  }

  static constexpr long INT_MIN_LOCAL = -2147483647L - 1;
  static constexpr long INT_MAX_LOCAL = 2147483647L;
};

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  RawConfig raw = parse_ini(text);
  std::vector<std::string> errors = std::move(raw.errors);
  ExperimentConfig c;
  c.text = text;
  Reader r{raw.kv, errors, {}};

  r.get_string("mdp.kind", &c.kind);
  r.get_int("mdp.n", &c.n);
  r.get_int("mdp.n1", &c.n1);
  r.get_int("mdp.n2", &c.n2);
  r.get_double("mdp.sigma", &c.sigma);
  r.get_double("mdp.gamma", &c.gamma);
  r.get_int("mdp.n_states", &c.n_states);
  r.get_int("mdp.n_actions", &c.n_actions);
  r.get_u64("mdp.seed", &c.mdp_seed);
  r.get_string("mdp.path", &c.mdp_path);

  std::string method_s, variant_s, mode_s;
  r.get_string("algorithm.method", &method_s);
  r.get_string("algorithm.variant", &variant_s);
  r.get_double("algorithm.beta", &c.params.beta);
  r.get_double("algorithm.lambda", &c.params.lambda);
  r.get_double("algorithm.eta_v", &c.params.eta_v);
  r.get_double("algorithm.eta_pi", &c.params.eta_pi);
  r.get_double("algorithm.eta_q", &c.params.eta_q);
  r.get_int("algorithm.batch_size", &c.params.batch_size);
  r.get_long("algorithm.steps", &c.steps);
  r.get_long("algorithm.max_iters", &c.max_iters);
  r.get_double("algorithm.tol", &c.tol);
  r.get_string("algorithm.next_state_mode", &mode_s);
  r.get_double("algorithm.init_scale", &c.init_scale);
  r.get_double("algorithm.npg_eps", &c.npg_eps);
  r.get_long("algorithm.npg_outer_iters", &c.npg_outer_iters);
  r.get_long("algorithm.npg_max_inner", &c.npg_max_inner);

  r.get_seeds("run.seeds", &c.seeds);
  r.get_string("run.out", &c.out_dir);
  r.get_int("run.stride", &c.stride);
  r.get_int("run.workers", &c.workers);

  for (const auto& [k, v] : raw.kv)
    if (!r.used.count(k)) errors.push_back("unknown key: " + k);

  if (method_s.empty()) {
    errors.push_back("algorithm.method is required");
  } else {
    try {
      c.method = method_from_string(method_s);
    } catch (const std::exception& e) {
      errors.push_back(std::string("algorithm.method: ") + e.what());
    }
  }
  if (!variant_s.empty()) {
    try {
      c.variant = variant_from_string(variant_s);
    } catch (const std::exception& e) {
      errors.push_back(std::string("algorithm.variant: ") + e.what());
    }
  }
  if (!mode_s.empty()) {
    try {
      c.next_state_mode = next_state_mode_from_string(mode_s);
    } catch (const std::exception& e) {
      errors.push_back(std::string("algorithm.next_state_mode: ") + e.what());
    }
  }

  auto present = [&](const char* k) { return raw.kv.count(k) > 0; };
  auto warn_ignored = [&](const char* k, const std::string& why) {
    if (present(k)) c.warnings.push_back(std::string(k) + " is ignored " + why);
  };

  // Instance block.
  if (c.kind.empty()) {
    errors.push_back("mdp.kind is required (ring | torus | random | file)");
  } else if (c.kind == "ring") {
    if (c.n < 2) errors.push_back("mdp.n must be >= 2 for a ring");
    for (const char* k : {"mdp.n1", "mdp.n2", "mdp.n_states", "mdp.n_actions",
                          "mdp.seed", "mdp.path"})
      warn_ignored(k, "for kind ring");
  } else if (c.kind == "torus") {
    if (c.n1 < 2 || c.n2 < 2)
      errors.push_back("mdp.n1 and mdp.n2 must be >= 2 for a torus");
    for (const char* k : {"mdp.n", "mdp.n_states", "mdp.n_actions", "mdp.seed",
                          "mdp.path"})
      warn_ignored(k, "for kind torus");
  } else if (c.kind == "random") {
    if (c.n_states < 1) errors.push_back("mdp.n_states must be >= 1");
    if (c.n_actions < 1) errors.push_back("mdp.n_actions must be >= 1");
    for (const char* k : {"mdp.n", "mdp.n1", "mdp.n2", "mdp.sigma", "mdp.path"})
      warn_ignored(k, "for kind random");
  } else if (c.kind == "file") {
    if (c.mdp_path.empty()) errors.push_back("mdp.path is required for kind file");
    for (const char* k : {"mdp.n", "mdp.n1", "mdp.n2", "mdp.sigma",
                          "mdp.gamma", "mdp.n_states", "mdp.n_actions",
                          "mdp.seed"})
      warn_ignored(k, "for kind file (the file fixes the instance)");
  } else {
    errors.push_back("mdp.kind must be ring | torus | random | file, got '" +
                     c.kind + "'");
  }
  if (!(c.gamma >= 0.0 && c.gamma < 1.0))
    errors.push_back("mdp.gamma must be in [0, 1)");
  if (c.sigma < 0.0) errors.push_back("mdp.sigma must be >= 0");

  // Shared algorithm ranges.
  if (!(c.params.beta > 0.0))
    errors.push_back("algorithm.beta must be > 0");
  if (c.params.lambda < 0.0) errors.push_back("algorithm.lambda must be >= 0");
  for (auto [v, name] : {std::pair<double, const char*>{c.params.eta_v,
                                                        "algorithm.eta_v"},
                         {c.params.eta_pi, "algorithm.eta_pi"},
                         {c.params.eta_q, "algorithm.eta_q"}})
    if (v < 0.0) errors.push_back(std::string(name) + " must be >= 0");
  if (c.params.batch_size < 1)
    errors.push_back("algorithm.batch_size must be >= 1");
  if (c.init_scale < 0.0)
    errors.push_back("algorithm.init_scale must be >= 0");
  if (c.stride < 0) errors.push_back("run.stride must be >= 0");
  if (c.workers < 0) errors.push_back("run.workers must be >= 0");

  bool sample_based = !method_s.empty() && c.method != Method::model_based;
  auto require_positive = [&](double v, const char* name) {
    if (!(v > 0.0))
      errors.push_back(std::string(name) + " must be > 0 for method " +
                       (method_s.empty() ? "?" : method_s));
  };
  if (!method_s.empty()) switch (c.method) {
      case Method::model_based:
        require_positive(c.params.eta_v, "algorithm.eta_v");
        require_positive(c.params.eta_pi, "algorithm.eta_pi");
        if (c.max_iters < 1)
          errors.push_back("algorithm.max_iters must be >= 1");
        if (!(c.tol > 0.0)) errors.push_back("algorithm.tol must be > 0");
        for (const char* k :
             {"algorithm.batch_size", "algorithm.steps", "algorithm.eta_q",
              "algorithm.next_state_mode", "algorithm.init_scale",
              "algorithm.npg_eps", "algorithm.npg_outer_iters",
              "algorithm.npg_max_inner"})
          warn_ignored(k, "for model_based runs");
        break;
      case Method::model_free:
        require_positive(c.params.eta_q, "algorithm.eta_q");
        require_positive(c.params.eta_pi, "algorithm.eta_pi");
        for (const char* k : {"algorithm.eta_v", "algorithm.max_iters",
                              "algorithm.tol", "algorithm.npg_eps",
                              "algorithm.npg_outer_iters",
                              "algorithm.npg_max_inner"})
          warn_ignored(k, "for model_free runs");
        break;
      case Method::v_formulation:
        require_positive(c.params.eta_v, "algorithm.eta_v");
        require_positive(c.params.eta_pi, "algorithm.eta_pi");
        if (c.next_state_mode == NextStateMode::exact)
          errors.push_back(
              "algorithm.next_state_mode: exact replay is invalid for "
              "v_formulation (the residual already depends on a_t; use bff "
              "or independent-resample)");
        for (const char* k : {"algorithm.eta_q", "algorithm.max_iters",
                              "algorithm.tol", "algorithm.npg_eps",
                              "algorithm.npg_outer_iters",
                              "algorithm.npg_max_inner"})
          warn_ignored(k, "for v_formulation runs");
        break;
      case Method::npg:
        require_positive(c.params.eta_q, "algorithm.eta_q");
        require_positive(c.params.eta_pi, "algorithm.eta_pi");
        if (!(c.npg_eps > 0.0)) errors.push_back("algorithm.npg_eps must be > 0");
        if (c.npg_outer_iters < 1)
          errors.push_back("algorithm.npg_outer_iters must be >= 1");
        if (c.npg_max_inner < 1)
          errors.push_back("algorithm.npg_max_inner must be >= 1");
        if (c.gamma < 1.0 &&
            !(c.params.lambda * c.params.eta_pi / (1.0 - c.gamma) < 1.0))
          errors.push_back(
              "algorithm.eta_pi too large: lambda * eta_pi / (1 - gamma) "
              "must be < 1 for npg");
        warn_ignored("algorithm.beta", "for npg runs");
        warn_ignored("algorithm.variant", "for npg runs");
        for (const char* k : {"algorithm.eta_v", "algorithm.max_iters",
                              "algorithm.tol", "algorithm.init_scale"})
          warn_ignored(k, "for npg runs");
        break;
    }
  if (sample_based) {
    if (c.steps < c.params.batch_size + 2)
      errors.push_back(
          "algorithm.steps must be at least batch_size + 2 (every consumed "
          "sample needs two lookahead steps)");
    if (c.next_state_mode == NextStateMode::bff && c.kind != "ring" &&
        c.kind != "torus")
      errors.push_back(
          "algorithm.next_state_mode: bff needs ring or torus geometry");
    if (c.next_state_mode == NextStateMode::exact && c.kind == "random")
      errors.push_back(
          "algorithm.next_state_mode: exact replay needs deterministic "
          "dynamics; random instances are stochastic");
    if (c.next_state_mode == NextStateMode::exact &&
        (c.kind == "ring" || c.kind == "torus") && c.sigma > 0.0)
      errors.push_back(
          "algorithm.next_state_mode: exact replay is only sound at sigma = "
          "0");
  }

  if (!errors.empty()) {
    std::string msg = "invalid config:";
    for (const std::string& e : errors) msg += "\n  - " + e;
    throw std::invalid_argument(msg);
  }
  return c;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open config: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

FiniteMdp build_mdp(const ExperimentConfig& c) {
  if (c.kind == "ring") return ring_mdp({c.n, c.sigma, c.gamma});
  if (c.kind == "torus") return torus_mdp({c.n1, c.n2, c.sigma, c.gamma});
  if (c.kind == "random")
    return random_mdp(c.n_states, c.n_actions, c.gamma, c.mdp_seed);
  if (c.kind == "file") return load_mdp(c.mdp_path);
  throw std::invalid_argument("build_mdp: unknown kind '" + c.kind + "'");
}

StateGeometry build_geometry(const ExperimentConfig& c) {
  if (c.kind == "ring") return ring_geometry({c.n, c.sigma, c.gamma});
  if (c.kind == "torus") return torus_geometry({c.n1, c.n2, c.sigma, c.gamma});
  return {};
}

namespace {

int effective_stride(const ExperimentConfig& c) {
  if (c.stride > 0) return c.stride;
  return c.method == Method::model_based ? 10 : 1;
}

Mat uniform_behavior(const FiniteMdp& mdp) {
  return Mat::Constant(mdp.n_states, mdp.n_actions, 1.0 / mdp.n_actions);
}

}  // namespace

RunTrace run_config_seed(const ExperimentConfig& config, const FiniteMdp& mdp,
                         const StateGeometry& geom, const TraceRefs& refs,
                         uint64_t seed) {
  switch (config.method) {
    case Method::model_based: {
      StateDistribution rho = StateDistribution::uniform(mdp.n_states);
      MbRunOptions opts;
      opts.max_iters = config.max_iters;
      opts.grad_tol = config.tol;
      opts.stride = effective_stride(config);
      return run_model_based(mdp, rho, config.params, config.variant,
                             make_init(mdp.n_states, mdp.n_actions, seed),
                             opts, refs);
    }
    case Method::model_free: {
      MfRunOptions opts;
      opts.stride = effective_stride(config);
      opts.init_scale = config.init_scale;
      return run_model_free(mdp, geom, uniform_behavior(mdp), config.params,
                            config.variant, (int)config.steps, seed,
                            config.next_state_mode, opts, refs);
    }
    case Method::v_formulation: {
      MfRunOptions opts;
      opts.stride = effective_stride(config);
      opts.init_scale = config.init_scale;
      return run_v_formulation(mdp, geom, uniform_behavior(mdp), config.params,
                               config.variant, (int)config.steps, seed,
                               config.next_state_mode, opts, refs);
    }
    case Method::npg: {
      NpgOptions opts;
      opts.outer_iters = config.npg_outer_iters;
      opts.eps = config.npg_eps;
      opts.max_inner = config.npg_max_inner;
      return run_npg(mdp, geom, uniform_behavior(mdp), config.params,
                     (int)config.steps, seed, config.next_state_mode, opts,
                     refs);
    }
  }
  throw std::invalid_argument("run_config_seed: unknown method");
}

int ExperimentResult::failed_count() const {
  int c = 0;
  for (const SeedOutcome& o : outcomes) c += o.failed ? 1 : 0;
  return c;
}

namespace {

void write_trace_csv(const std::string& path, const std::string& run_id,
                     uint64_t seed, const RunTrace& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "run_id,seed,iter,l1_policy_error,linf_value_error,min_residual,"
         "objective,negative_residual_flag,samples_consumed\n";
  for (const TraceRow& row : trace.rows) {
    out << run_id << ',' << seed << ',' << row.iter << ','
        << format_double(row.l1_policy_error) << ','
        << format_double(row.linf_value_error) << ','
        << format_double(row.min_residual) << ','
        << format_double(row.objective) << ','
        << (row.negative_residual ? 1 : 0) << ',' << row.samples << '\n';
  }
}

double percentile(std::vector<double> xs, double q) {
  std::sort(xs.begin(), xs.end());
  double h = (double)(xs.size() - 1) * q;
  size_t lo = (size_t)h;
  if (lo + 1 >= xs.size()) return xs.back();
  return xs[lo] + (h - lo) * (xs[lo + 1] - xs[lo]);
}

std::string reference_hash(const TraceRefs& refs) {
  std::string buf;
  for (int i = 0; i < refs.v_ref.size(); ++i)
    buf += format_double(refs.v_ref[i]) + ",";
  buf += ";";
  for (int s = 0; s < refs.pi_star.rows(); ++s)
    for (int a = 0; a < refs.pi_star.cols(); ++a)
      buf += format_double(refs.pi_star(s, a)) + ",";
  return hex64(fnv1a64(buf));
}

void check_exact_mode(const ExperimentConfig& config, const FiniteMdp& mdp) {
  bool uses_source = config.method == Method::model_free ||
                     config.method == Method::v_formulation ||
                     config.method == Method::npg;
  if (!uses_source || config.next_state_mode != NextStateMode::exact) return;
  for (const Mat& p : mdp.transitions)
    for (int s = 0; s < p.rows(); ++s)
      if (p.row(s).maxCoeff() < 1.0)
        throw std::invalid_argument(
            "next_state_mode exact needs deterministic dynamics; this "
            "instance has stochastic rows");
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config,
                                const std::string& out_dir_arg) {
  std::string out_dir = out_dir_arg.empty() ? config.out_dir : out_dir_arg;
  if (out_dir.empty())
    throw std::invalid_argument(
        "run_experiment: no output directory ([run] out or --out)");
  if (config.seeds.empty())
    throw std::invalid_argument("run_experiment: [run] seeds is empty");
  FiniteMdp mdp = build_mdp(config);
  validate(mdp);
  check_exact_mode(config, mdp);
  StateGeometry geom = build_geometry(config);
  TraceRefs refs = make_trace_refs(mdp, config.params.lambda);

  std::filesystem::create_directories(out_dir);
  ExperimentResult result;
  result.run_id = hex64(fnv1a64(config.text));

  const int n_seeds = (int)config.seeds.size();
  std::vector<RunTrace> traces(n_seeds);
  std::vector<std::string> thrown(n_seeds);
  int workers = config.workers > 0
                    ? config.workers
                    : (int)std::max(1u, std::thread::hardware_concurrency());
  parallel_for(n_seeds, std::min(workers, n_seeds), [&](int i) {
    try {
      traces[i] = run_config_seed(config, mdp, geom, refs, config.seeds[i]);
    } catch (const std::exception& e) {
      thrown[i] = e.what();
    }
  });

  for (int i = 0; i < n_seeds; ++i) {
    SeedOutcome o;
    o.seed = config.seeds[i];
    if (!thrown[i].empty()) {
      o.failed = true;
      o.message = thrown[i];
    } else if (traces[i].diverged) {
      o.failed = true;
      o.message = traces[i].message.empty() ? "diverged" : traces[i].message;
    }
    if (thrown[i].empty()) {
      o.trace_file = "trace_seed" + std::to_string(o.seed) + ".csv";
      write_trace_csv(out_dir + "/" + o.trace_file, result.run_id, o.seed,
                      traces[i]);
    }
    result.outcomes.push_back(std::move(o));
  }

  // Aggregate bands; seeds that never reached an iteration drop out of its
  // row.
  std::map<long, std::vector<std::pair<double, double>>> by_iter;
  for (const RunTrace& trace : traces)
    for (const TraceRow& row : trace.rows)
      by_iter[row.iter].push_back(
          {row.l1_policy_error, row.linf_value_error});
  result.aggregate_file = "aggregate.csv";
  {
    std::ofstream out(out_dir + "/aggregate.csv", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write aggregate.csv");
    out << "iter,n_seeds,l1_mean,l1_p10,l1_p50,l1_p90,value_mean,value_p10,"
           "value_p50,value_p90\n";
    for (const auto& [iter, pairs] : by_iter) {
      std::vector<double> l1, val;
      double l1_sum = 0, val_sum = 0;
      for (auto [a, b] : pairs) {
        l1.push_back(a);
        val.push_back(b);
        l1_sum += a;
        val_sum += b;
      }
      out << iter << ',' << pairs.size() << ','
          << format_double(l1_sum / pairs.size()) << ','
          << format_double(percentile(l1, 0.1)) << ','
          << format_double(percentile(l1, 0.5)) << ','
          << format_double(percentile(l1, 0.9)) << ','
          << format_double(val_sum / pairs.size()) << ','
          << format_double(percentile(val, 0.1)) << ','
          << format_double(percentile(val, 0.5)) << ','
          << format_double(percentile(val, 0.9)) << '\n';
    }
  }

  nlohmann::json meta;
  meta["run_id"] = result.run_id;
  meta["mdp_hash"] = mdp_hash(mdp);
  meta["reference_hash"] = reference_hash(refs);
  meta["method"] = to_string(config.method);
  meta["variant"] = to_string(config.variant);
  meta["gamma"] = mdp.gamma;
  meta["lambda"] = config.params.lambda;
  meta["beta"] = config.params.beta;
  meta["seeds"] = config.seeds;
  meta["warnings"] = config.warnings;
  if (mdp.n_actions >= 2) {
    OptimalSolution opt = value_iteration(mdp);
    double gap = action_gap(mdp, opt.values);
    meta["action_gap"] = gap;
    if (gap > 0.0)
      meta["beta_threshold_alpha_gap4"] = beta_threshold(
          mdp, gap / 4.0, StateDistribution::uniform(mdp.n_states));
    else
      meta["beta_threshold_alpha_gap4"] = nullptr;
  } else {
    meta["action_gap"] = nullptr;
    meta["beta_threshold_alpha_gap4"] = nullptr;
  }
  nlohmann::json failures = nlohmann::json::array();
  for (const SeedOutcome& o : result.outcomes)
    if (o.failed) failures.push_back({{"seed", o.seed}, {"message", o.message}});
  meta["failed_seeds"] = failures;
  result.metadata_file = "metadata.json";
  {
    std::ofstream out(out_dir + "/metadata.json", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write metadata.json");
    out << meta.dump(2) << '\n';
  }
  return result;
}

std::string solve_report(const ExperimentConfig& config) {
  FiniteMdp mdp = build_mdp(config);
  validate(mdp);
  OptimalSolution opt = value_iteration(mdp);
  std::ostringstream out;
  out << "instance: " << config.kind << "\n";
  out << "states: " << mdp.n_states << "\n";
  out << "actions: " << mdp.n_actions << "\n";
  out << "gamma: " << format_double(mdp.gamma) << "\n";
  out << "mdp_hash: " << mdp_hash(mdp) << "\n";
  out << "optimal_values:";
  for (int s = 0; s < mdp.n_states; ++s)
    out << ' ' << format_double(opt.values[s]);
  out << "\ngreedy_actions:";
  for (int a : opt.greedy) out << ' ' << a;
  out << "\n";
  if (mdp.n_actions >= 2) {
    double gap = action_gap(mdp, opt.values);
    out << "action_gap: " << format_double(gap) << "\n";
    if (gap > 0.0)
      out << "beta_threshold_alpha_gap4: "
          << format_double(beta_threshold(
                 mdp, gap / 4.0, StateDistribution::uniform(mdp.n_states)))
          << "\n";
  }
  if (config.params.lambda > 0.0) {
    OptimalSolution soft = soft_value_iteration(mdp, config.params.lambda);
    out << "lambda: " << format_double(config.params.lambda) << "\n";
    out << "smoothed_values:";
    for (int s = 0; s < mdp.n_states; ++s)
      out << ' ' << format_double(soft.values[s]);
    out << "\n";
  }
  return out.str();
}

void write_trajectory(const ExperimentConfig& config, const std::string& path) {
  if (config.seeds.empty())
    throw std::invalid_argument("write_trajectory: [run] seeds is empty");
  if (config.steps < 3)
    throw std::invalid_argument("write_trajectory: algorithm.steps must be >= 3");
  FiniteMdp mdp = build_mdp(config);
  validate(mdp);
  Trajectory traj = generate_trajectory(mdp, uniform_behavior(mdp),
                                        (int)config.steps, config.seeds[0]);
  save_trajectory(traj, path);
}

namespace {

void report(std::ostream& out, const char* suite, const std::string& name,
            bool pass, bool* ok) {
  out << (pass ? "PASS " : "FAIL ") << suite << ": " << name << "\n";
  *ok = *ok && pass;
}

bool suite_matrix_bounds(std::ostream& out) {
  bool ok = true;
  auto check = [&](const FiniteMdp& m, const std::string& label) {
    bool rows_ok = true, range_ok = true;
    for (const Mat& p : m.transitions)
      for (int s = 0; s < p.rows(); ++s) {
        rows_ok = rows_ok && std::abs(p.row(s).sum() - 1.0) <= 1e-12;
        range_ok = range_ok && p.row(s).minCoeff() >= 0.0 &&
                   p.row(s).maxCoeff() <= 1.0;
      }
    report(out, "matrix-bounds", label + " rows sum to one", rows_ok, &ok);
    report(out, "matrix-bounds", label + " probabilities in [0, 1]", range_ok,
           &ok);
  };
  check(ring_mdp({5, 0.0, 0.9}), "ring n=5 sigma=0");
  check(ring_mdp({7, 1.0, 0.9}), "ring n=7 sigma=1");
  check(torus_mdp({4, 5, 0.8, 0.9}), "torus 4x5 sigma=0.8");
  check(random_mdp(6, 3, 0.9, 11), "random n=6 |A|=3");

  Rng rng(3);
  Mat logits(4, 3);
  for (int s = 0; s < 4; ++s)
    for (int a = 0; a < 3; ++a) logits(s, a) = 3.0 * rng.normal();
  SoftmaxPolicy p{logits};
  p.reshift();
  Mat pi = p.probs();
  bool sm = pi.minCoeff() >= 0.0;
  for (int s = 0; s < 4; ++s)
    sm = sm && std::abs(pi.row(s).sum() - 1.0) <= 1e-12;
  report(out, "matrix-bounds", "soft-max rows normalized", sm, &ok);
  return ok;
}

bool suite_fixed_point(std::ostream& out) {
  bool ok = true;
  FiniteMdp mdp = ring_mdp({5, 0.0, 0.9});
  StateDistribution rho = StateDistribution::uniform(5);
  HyperParams hp;
  hp.beta = 10.0;
  hp.lambda = 0.1;
  hp.eta_v = 1.0 / 40.0;
  hp.eta_pi = 1.0 / 40.0;
  FixedPoint fp = solve_fixed_point(mdp, rho, hp);
  double gap = fixed_point_residual_gap(mdp, fp.v, fp.policy, rho, hp);
  report(out, "fixed-point", "rest-point residual identity within 1e-9",
         gap < 1e-9, &ok);
  Vec ell = bellman_residual(mdp, fp.v, fp.policy, hp.lambda);
  report(out, "fixed-point", "rest-point residual strictly positive",
         ell.minCoeff() > 0.0, &ok);
  MbState st{fp.v, fp.policy.array().log().matrix()};
  mb_step(mdp, st, rho, hp, Variant::vanilla);
  report(out, "fixed-point", "coupled step leaves the rest point in place",
         (st.v - fp.v).cwiseAbs().maxCoeff() < 1e-6, &ok);
  return ok;
}

bool suite_optimal_limit(std::ostream& out) {
  bool ok = true;
  for (uint64_t seed : {1, 5, 6}) {
    FiniteMdp mdp = random_mdp(4, 2, 0.9, seed);
    StateDistribution rho = StateDistribution::uniform(4);
    OptimalSolution opt = value_iteration(mdp);
    double gap = action_gap(mdp, opt.values);
    double alpha = gap / 4.0;
    HyperParams hp;
    hp.beta = 2.0 * beta_threshold(mdp, alpha, rho);
    hp.eta_v = 1.0 / (4.0 * hp.beta);
    hp.eta_pi = 1.0 / (4.0 * hp.beta);
    TraceRefs refs = make_trace_refs(mdp, 0.0);
    // Large beta makes the logit drift toward the one-hot limit slow; the
    // budget covers saturation with two orders of magnitude to spare.
    MbRunOptions opts;
    opts.max_iters = 1000000;
    opts.stride = 1000;
    RunTrace tr = run_model_based(mdp, rho, hp, Variant::flipping,
                                  make_init(4, 2), opts, refs);
    bool greedy_ok = !tr.diverged;
    for (int s = 0; s < 4 && greedy_ok; ++s) {
      int arg = 0;
      tr.final_policy.row(s).maxCoeff(&arg);
      greedy_ok = arg == opt.greedy[s];
    }
    bool v_ok = !tr.diverged &&
                (tr.final_v - opt.values).cwiseAbs().maxCoeff() <= alpha;
    report(out, "optimal-limit",
           "seed " + std::to_string(seed) + " greedy limit matches",
           greedy_ok, &ok);
    report(out, "optimal-limit",
           "seed " + std::to_string(seed) + " value within alpha", v_ok, &ok);
  }
  return ok;
}

bool suite_regularized_limit(std::ostream& out) {
  bool ok = true;
  const double lambda = 0.1, eps = 0.05;
  FiniteMdp mdp = ring_mdp({5, 0.0, 0.9});
  StateDistribution rho = StateDistribution::uniform(5);
  HyperParams hp;
  hp.lambda = lambda;
  hp.beta = 4.0 * 5 / (eps * (1.0 - mdp.gamma) * (1.0 - mdp.gamma));
  FixedPoint fp = solve_fixed_point(mdp, rho, hp);
  OptimalSolution soft = soft_value_iteration(mdp, lambda);
  Vec diff = fp.v - soft.values;
  double bound = 5 / (hp.beta * (1.0 - mdp.gamma) * (1.0 - mdp.gamma));
  report(out, "regularized-limit", "limit value strictly above the target",
         diff.minCoeff() > 0.0, &ok);
  report(out, "regularized-limit", "limit value within the stated bound",
         diff.maxCoeff() < bound, &ok);
  double kl_max = 0.0;
  for (int s = 0; s < 5; ++s) {
    double kl = 0.0;
    for (int a = 0; a < 2; ++a)
      kl += soft.policy(s, a) *
            std::log(soft.policy(s, a) / fp.policy(s, a));
    kl_max = std::max(kl_max, kl);
  }
  report(out, "regularized-limit", "per-state KL within eps*gamma/lambda",
         kl_max <= eps * mdp.gamma / lambda, &ok);
  return ok;
}

bool suite_gradient_consistency(std::ostream& out) {
  bool ok = true;
  for (uint64_t seed : {7, 8, 9}) {
    FiniteMdp mdp = random_mdp(3, 2, 0.9, seed);
    StateDistribution rho = StateDistribution::uniform(3);
    HyperParams hp;
    hp.beta = 3.0;
    hp.lambda = seed % 2 ? 0.1 : 0.0;
    Rng rng(seed, 77);
    Vec v(3);
    Mat logits(3, 2);
    for (int s = 0; s < 3; ++s) {
      v[s] = rng.normal();
      for (int a = 0; a < 2; ++a) logits(s, a) = rng.normal();
    }
    Mat pi = policy_from_logits(logits);
    const double h = 1e-6;

    Vec g = grad_v(mdp, v, pi, rho, hp);
    double worst_v = 0.0;
    for (int s = 0; s < 3; ++s) {
      Vec up = v, dn = v;
      up[s] += h;
      dn[s] -= h;
      double fd = (objective(mdp, up, pi, rho, hp) -
                   objective(mdp, dn, pi, rho, hp)) /
                  (2 * h);
      worst_v = std::max(worst_v, std::abs(fd - g[s]));
    }
    report(out, "gradient-consistency",
           "seed " + std::to_string(seed) + " value gradient vs differences",
           worst_v / std::max(1.0, g.cwiseAbs().maxCoeff()) < 1e-5, &ok);

    Mat gt = grad_theta(mdp, v, pi, rho, hp, Variant::vanilla);
    // Finite differences in logits see the soft-max chain rule
    // pi_sb (G_sb - sum_a pi_sa G_sa); row constants in G drop out of it.
    double worst_t = 0.0, scale = std::max(1.0, gt.cwiseAbs().maxCoeff());
    for (int s = 0; s < 3; ++s) {
      double row_mean = (pi.row(s) * gt.row(s).transpose()).value();
      for (int b = 0; b < 2; ++b) {
        Mat up = logits, dn = logits;
        up(s, b) += h;
        dn(s, b) -= h;
        double fd = (objective(mdp, v, policy_from_logits(up), rho, hp) -
                     objective(mdp, v, policy_from_logits(dn), rho, hp)) /
                    (2 * h);
        double expect = pi(s, b) * (gt(s, b) - row_mean);
        worst_t = std::max(worst_t, std::abs(fd - expect));
      }
    }
    report(out, "gradient-consistency",
           "seed " + std::to_string(seed) + " policy gradient vs differences",
           worst_t / scale < 1e-5, &ok);
  }
  return ok;
}

}  // namespace

bool run_verify_suite(const std::string& name, std::ostream& out) {
  if (name == "matrix-bounds") return suite_matrix_bounds(out);
  if (name == "fixed-point") return suite_fixed_point(out);
  if (name == "optimal-limit") return suite_optimal_limit(out);
  if (name == "regularized-limit") return suite_regularized_limit(out);
  if (name == "gradient-consistency") return suite_gradient_consistency(out);
  if (name == "all") {
    bool ok = true;
    ok = suite_matrix_bounds(out) && ok;
    ok = suite_fixed_point(out) && ok;
    ok = suite_optimal_limit(out) && ok;
    ok = suite_regularized_limit(out) && ok;
    ok = suite_gradient_consistency(out) && ok;
    return ok;
  }
  throw std::invalid_argument(
      "unknown verify suite '" + name +
      "' (matrix-bounds | fixed-point | optimal-limit | regularized-limit | "
      "gradient-consistency | all)");
}

}  // namespace vac
