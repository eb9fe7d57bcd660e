#include "vac/trajectory.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace vac {

std::string policy_hash(const Mat& policy) {
  std::ostringstream out;
  for (int s = 0; s < policy.rows(); ++s)
    for (int a = 0; a < policy.cols(); ++a)
      out << format_double(policy(s, a)) << (a + 1 == policy.cols() ? "\n" : " ");
  return hex64(fnv1a64(out.str()));
}

Trajectory generate_trajectory(const FiniteMdp& mdp, const Mat& behavior,
                               int steps, uint64_t seed) {
  validate(mdp);
  if (behavior.rows() != mdp.n_states || behavior.cols() != mdp.n_actions)
    throw std::invalid_argument("generate_trajectory: behavior shape");
  if (behavior.minCoeff() < 0.0 || !behavior.allFinite())
    throw std::invalid_argument("generate_trajectory: behavior rows invalid");
  for (int s = 0; s < mdp.n_states; ++s)
    if (std::abs(behavior.row(s).sum() - 1.0) > 1e-12)
      throw std::invalid_argument(
          "generate_trajectory: behavior rows must sum to 1");
  if (steps < 3)
    throw std::invalid_argument(
        "generate_trajectory: need at least 3 steps (two lookaheads)");

  // Row-major copies so per-step sampling walks contiguous memory.
  std::vector<std::vector<double>> rows(mdp.n_actions);
  for (int a = 0; a < mdp.n_actions; ++a) {
    rows[a].resize((size_t)mdp.n_states * mdp.n_states);
    for (int s = 0; s < mdp.n_states; ++s)
      for (int t = 0; t < mdp.n_states; ++t)
        rows[a][(size_t)s * mdp.n_states + t] = mdp.transitions[a](s, t);
  }
  std::vector<double> brow(mdp.n_actions);

  Trajectory traj;
  traj.seed = seed;
  traj.mdp_id = mdp_hash(mdp);
  traj.behavior_id = policy_hash(behavior);
  traj.states.resize(steps);
  traj.actions.resize(steps);
  traj.rewards.resize(steps);

  Rng rng(seed);
  int s = rng.uniform_int(mdp.n_states);
  for (int t = 0; t < steps; ++t) {
    for (int a = 0; a < mdp.n_actions; ++a) brow[a] = behavior(s, a);
    int a = rng.sample(brow.data(), mdp.n_actions);
    traj.states[t] = s;
    traj.actions[t] = a;
    traj.rewards[t] = mdp.rewards(s, a);
    s = rng.sample(rows[a].data() + (size_t)s * mdp.n_states, mdp.n_states);
  }
  return traj;
}

std::string trajectory_to_text(const Trajectory& traj) {
  std::ostringstream out;
  out << "vac-traj v1\n";
  out << "mdp " << traj.mdp_id << "\n";
  out << "behavior " << traj.behavior_id << "\n";
  out << "seed " << traj.seed << "\n";
  out << "steps " << traj.steps() << "\n";
  out << "t,s,a,r\n";
  for (int t = 0; t < traj.steps(); ++t)
    out << t << "," << traj.states[t] << "," << traj.actions[t] << ","
        << format_double(traj.rewards[t]) << "\n";
  return out.str();
}

Trajectory trajectory_from_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  auto next_line = [&](const char* what) {
    if (!std::getline(in, line))
      throw std::invalid_argument(std::string("trajectory text: missing ") +
                                  what);
    return line;
  };
  if (next_line("magic") != "vac-traj v1")
    throw std::invalid_argument("trajectory text: not a vac-traj v1 file");
  Trajectory traj;
  std::istringstream l1(next_line("mdp"));
  std::string key;
  if (!(l1 >> key >> traj.mdp_id) || key != "mdp")
    throw std::invalid_argument("trajectory text: expected mdp hash");
  std::istringstream l2(next_line("behavior"));
  if (!(l2 >> key >> traj.behavior_id) || key != "behavior")
    throw std::invalid_argument("trajectory text: expected behavior hash");
  std::istringstream l3(next_line("seed"));
  if (!(l3 >> key >> traj.seed) || key != "seed")
    throw std::invalid_argument("trajectory text: expected seed");
  std::istringstream l4(next_line("steps"));
  long steps = 0;
  if (!(l4 >> key >> steps) || key != "steps" || steps < 3 || steps > 100000000)
    throw std::invalid_argument("trajectory text: bad steps count");
  if (next_line("column header") != "t,s,a,r")
    throw std::invalid_argument("trajectory text: expected t,s,a,r header");
  traj.states.resize(steps);
  traj.actions.resize(steps);
  traj.rewards.resize(steps);
  for (long t = 0; t < steps; ++t) {
    std::istringstream row(next_line("row"));
    long tt;
    char c1, c2, c3;
    if (!(row >> tt >> c1 >> traj.states[t] >> c2 >> traj.actions[t] >> c3 >>
          traj.rewards[t]) ||
        c1 != ',' || c2 != ',' || c3 != ',' || tt != t)
      throw std::invalid_argument("trajectory text: malformed row " +
                                  std::to_string(t));
    if (traj.states[t] < 0 || traj.actions[t] < 0 ||
        !std::isfinite(traj.rewards[t]))
      throw std::invalid_argument("trajectory text: out-of-range row " +
                                  std::to_string(t));
  }
  return traj;
}

void save_trajectory(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::invalid_argument("save_trajectory: cannot open " + path);
  out << trajectory_to_text(traj);
  if (!out)
    throw std::runtime_error("save_trajectory: write failed for " + path);
}

Trajectory load_trajectory(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::invalid_argument("load_trajectory: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return trajectory_from_text(buf.str());
}

void validate_against(const Trajectory& traj, const FiniteMdp& mdp) {
  if (traj.steps() < 3)
    throw std::invalid_argument("trajectory: need at least 3 steps");
  for (int t = 0; t < traj.steps(); ++t) {
    int s = traj.states[t], a = traj.actions[t];
    if (s < 0 || s >= mdp.n_states || a < 0 || a >= mdp.n_actions)
      throw std::invalid_argument("trajectory: state/action out of range at " +
                                  std::to_string(t));
    if (std::abs(traj.rewards[t] - mdp.rewards(s, a)) > 1e-12)
      throw std::invalid_argument(
          "trajectory: reward mismatch with instance at " + std::to_string(t));
  }
}

int bff_next_state(const Trajectory& traj, int t, const StateGeometry& geom,
                   int a_ref) {
  if (t < 0 || t + 2 >= traj.steps())
    throw std::invalid_argument("bff_next_state: needs s_{t+2}");
  return geom.borrow_displacement(traj.states[t], traj.states[t + 1],
                                  traj.states[t + 2], a_ref,
                                  traj.actions[t + 1]);
}

NextStateMode next_state_mode_from_string(const std::string& name) {
  if (name == "exact") return NextStateMode::exact;
  if (name == "bff") return NextStateMode::bff;
  if (name == "independent-resample" || name == "resample")
    return NextStateMode::resample;
  throw std::invalid_argument("unknown next-state mode: " + name);
}

std::string to_string(NextStateMode mode) {
  switch (mode) {
    case NextStateMode::exact:
      return "exact";
    case NextStateMode::bff:
      return "bff";
    case NextStateMode::resample:
      return "independent-resample";
  }
  return "?";
}

int NextStateSource::next(const Trajectory& traj, int t, int a_ref) const {
  switch (mode) {
    case NextStateMode::exact:
      if (t + 1 >= traj.steps())
        throw std::invalid_argument("NextStateSource: needs s_{t+1}");
      return traj.states[t + 1];
    case NextStateMode::bff:
      if (!geom)
        throw std::invalid_argument("NextStateSource: bff needs geometry");
      return bff_next_state(traj, t, *geom, a_ref);
    case NextStateMode::resample: {
      if (!mdp || !rng)
        throw std::invalid_argument(
            "NextStateSource: resampling needs the instance and an rng");
      int s = traj.states[t];
      const Mat& p = mdp->transitions.at(a_ref);
      std::vector<double> row(mdp->n_states);
      for (int u = 0; u < mdp->n_states; ++u) row[u] = p(s, u);
      return rng->sample(row.data(), mdp->n_states);
    }
  }
  throw std::invalid_argument("NextStateSource: unknown mode");
}

}  // namespace vac
