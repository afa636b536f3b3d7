#pragma once

// Corrupted environments, distance to belief and the corruption sweep.
//
// D_belief(theta, theta') = 1/(T K) sum_k sum_{t=1..T} |p_t - p'_t| where both
// rollouts start from the bank's initial state and apply the same command
// indices, each resolved under its own parameters (the action grid scales with
// v_max). Only (x, y) enters the distance; collisions are ignored.

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "navlab/dynamics.hpp"
#include "navlab/evaluation.hpp"
#include "navlab/metrics.hpp"
#include "navlab/random.hpp"
#include "navlab/world.hpp"

namespace navlab {

enum class CorruptionAxis { damping, response_time, max_velocity, odom_noise_mean, odom_noise_std };

inline const char* to_string(CorruptionAxis a) {
  switch (a) {
    case CorruptionAxis::damping: return "damping";
    case CorruptionAxis::response_time: return "response_time";
    case CorruptionAxis::max_velocity: return "max_velocity";
    case CorruptionAxis::odom_noise_mean: return "odom_noise_mean";
    case CorruptionAxis::odom_noise_std: return "odom_noise_std";
  }
  return "damping";
}

inline CorruptionAxis parse_corruption_axis(const std::string& s) {
  for (CorruptionAxis a : {CorruptionAxis::damping, CorruptionAxis::response_time, CorruptionAxis::max_velocity,
                           CorruptionAxis::odom_noise_mean, CorruptionAxis::odom_noise_std})
    if (s == to_string(a)) return a;
  throw DataError("unknown corruption axis '" + s + "'");
}

inline bool is_dynamics_axis(CorruptionAxis a) {
  return a == CorruptionAxis::damping || a == CorruptionAxis::response_time || a == CorruptionAxis::max_velocity;
}

struct CorruptionSpec {
  CorruptionAxis axis = CorruptionAxis::damping;
  /// Multiplier for the dynamics axes.
  double factor = 1.0;
  /// Per-step odometry drift (m) for the odometry axes.
  double noise_mean = 0.0;
  double noise_std = 0.0;

  void validate() const {
    if (!(factor > 0.0) || !std::isfinite(factor)) throw DataError("change factor must be > 0");
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) throw DataError("noise std must be >= 0");
    if (!std::isfinite(noise_mean)) throw DataError("noise mean must be finite");
    if (is_dynamics_axis(axis) && (noise_mean != 0.0 || noise_std != 0.0))
      throw DataError("a dynamics corruption carries no odometry noise");
    if (!is_dynamics_axis(axis) && factor != 1.0) throw DataError("an odometry corruption carries no factor");
  }

  static CorruptionSpec dynamics(CorruptionAxis axis, double f) { return {axis, f, 0.0, 0.0}; }
  static CorruptionSpec odometry_mean(double m) { return {CorruptionAxis::odom_noise_mean, 1.0, m, 0.0}; }
  static CorruptionSpec odometry_std(double s) { return {CorruptionAxis::odom_noise_std, 1.0, 0.0, s}; }
};

/// Corrupted copy of `p`: damping scales all four gammas, response time all
/// four taus, max velocity v_max (the action grid follows).
inline DynParams corrupt_dynamics(DynParams p, const CorruptionSpec& spec) {
  spec.validate();
  switch (spec.axis) {
    case CorruptionAxis::damping:
      p.gamma_lin_acc *= spec.factor;
      p.gamma_lin_brake *= spec.factor;
      p.gamma_ang_acc *= spec.factor;
      p.gamma_ang_brake *= spec.factor;
      break;
    case CorruptionAxis::response_time:
      p.tau_lin_acc *= spec.factor;
      p.tau_lin_brake *= spec.factor;
      p.tau_ang_acc *= spec.factor;
      p.tau_ang_brake *= spec.factor;
      break;
    case CorruptionAxis::max_velocity: p.v_max *= spec.factor; break;
    default: break;
  }
  return p;
}

inline WorldConfig corrupt_world(WorldConfig c, const CorruptionSpec& spec) {
  c.dynamics = corrupt_dynamics(c.dynamics, spec);
  if (spec.axis == CorruptionAxis::odom_noise_mean) c.noise.odom_mean = spec.noise_mean;
  if (spec.axis == CorruptionAxis::odom_noise_std) c.noise.odom_std = spec.noise_std;
  return c;
}

// ---------------------------------------------------------------------------
// Action bank

struct ActionSequence {
  RobotState initial;
  std::vector<int> actions;
  friend bool operator==(const ActionSequence&, const ActionSequence&) = default;
};

struct ActionBank {
  int horizon = 15;
  std::uint64_t seed = 0;
  std::vector<ActionSequence> sequences;

  void validate() const {
    if (sequences.empty()) throw DataError("action bank is empty");
    if (horizon < 1) throw DataError("action bank horizon must be >= 1");
    for (const ActionSequence& s : sequences) {
      if (static_cast<int>(s.actions.size()) != horizon) throw DataError("action bank sequence length mismatch");
      for (int a : s.actions)
        if (a < 0 || a >= kNumMotionCommands) throw DataError("action bank holds a non-motion command");
      if (!s.initial.finite()) throw DataError("action bank initial state is not finite");
    }
  }
  friend bool operator==(const ActionBank&, const ActionBank&) = default;
};

inline nlohmann::json to_json(const ActionBank& b) {
  nlohmann::json seqs = nlohmann::json::array();
  for (const ActionSequence& s : b.sequences) {
    const RobotState& p = s.initial;
    seqs.push_back({{"initial", {p.x, p.y, p.theta, p.v, p.omega, p.vdot, p.omegadot}}, {"actions", s.actions}});
  }
  return {{"horizon", b.horizon}, {"seed", b.seed}, {"sequences", seqs}};
}

inline ActionBank action_bank_from_json(const nlohmann::json& j) {
  try {
    ActionBank b;
    b.horizon = j.at("horizon").get<int>();
    b.seed = j.value("seed", std::uint64_t{0});
    for (const auto& s : j.at("sequences")) {
      const auto& p = s.at("initial");
      if (p.size() != 7) throw DataError("bank initial state needs 7 values");
      ActionSequence seq;
      seq.initial = {p[0].get<double>(), p[1].get<double>(), p[2].get<double>(), p[3].get<double>(),
                     p[4].get<double>(), p[5].get<double>(), p[6].get<double>()};
      seq.actions = s.at("actions").get<std::vector<int>>();
      b.sequences.push_back(std::move(seq));
    }
    b.validate();
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("action bank: ") + e.what());
  }
}

/// Harvests K windows of T consecutive (state, command) pairs from rollouts of
/// the policy on `tasks`. Episodes are run round-robin (each with its own
/// seed) until enough windows exist; window starts are drawn uniformly.
/// STOP commands inside a window are replaced by the idle command.
inline ActionBank build_action_bank(const PolicyFactory& factory, const std::vector<Task>& tasks,
                                    const WorldConfig& config, int K, int T, std::uint64_t seed, int jobs = 0) {
  if (K <= 0) throw DataError("action bank needs K >= 1 sequences");
  if (T <= 0) throw DataError("action bank needs T >= 1 steps");
  if (tasks.empty()) throw DataError("action bank needs at least one episode");
  HarnessOpts harness;
  harness.record_latent = false;
  harness.record_scan = false;
  const std::vector<TrajectoryLog> logs = run_tasks(tasks, config, factory, harness, seed, jobs);

  std::vector<std::pair<std::size_t, std::size_t>> windows;
  for (std::size_t l = 0; l < logs.size(); ++l)
    for (std::size_t t = 0; t + static_cast<std::size_t>(T) <= logs[l].steps.size(); ++t) windows.emplace_back(l, t);
  if (windows.empty()) throw DataError("no episode is long enough for the requested horizon");

  Rng rng = make_rng(seed, {21});
  std::uniform_int_distribution<std::size_t> pick(0, windows.size() - 1);
  ActionBank bank;
  bank.horizon = T;
  bank.seed = seed;
  bank.sequences.reserve(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    const auto [l, t0] = windows[pick(rng)];
    ActionSequence s;
    s.initial = logs[l].steps[t0].state;
    for (int t = 0; t < T; ++t) {
      const int a = logs[l].steps[t0 + static_cast<std::size_t>(t)].action;
      s.actions.push_back(a == kStopIndex ? kIdleIndex : a);
    }
    bank.sequences.push_back(std::move(s));
  }
  return bank;
}

// ---------------------------------------------------------------------------
// Distance to belief

struct DBeliefResult {
  double value = 0.0;
  /// Mean divergence of each sequence over t = 1..T.
  std::vector<double> per_sequence;
};

inline double sequence_divergence(const ActionSequence& s, const DynParams& a, const DynParams& b,
                                  DynamicsMode mode_a, DynamicsMode mode_b) {
  const std::vector<RobotState> ra = rollout_indices(s.initial, s.actions, a, mode_a);
  const std::vector<RobotState> rb = rollout_indices(s.initial, s.actions, b, mode_b);
  double sum = 0.0;
  for (std::size_t t = 0; t < ra.size(); ++t) sum += (ra[t].position() - rb[t].position()).norm();
  return sum / static_cast<double>(ra.size());
}

inline DBeliefResult d_belief_detailed(const DynParams& nominal, const DynParams& corrupted, const ActionBank& bank,
                                       DynamicsMode mode = DynamicsMode::second_order,
                                       DynamicsMode corrupted_mode = DynamicsMode::second_order) {
  bank.validate();
  nominal.validate();
  corrupted.validate();
  DBeliefResult r;
  r.per_sequence.reserve(bank.sequences.size());
  for (const ActionSequence& s : bank.sequences) r.per_sequence.push_back(sequence_divergence(s, nominal, corrupted, mode, corrupted_mode));
  double sum = 0.0;
  for (double d : r.per_sequence) sum += d;
  r.value = sum / static_cast<double>(r.per_sequence.size());
  return r;
}

inline double d_belief(const DynParams& nominal, const DynParams& corrupted, const ActionBank& bank,
                       DynamicsMode mode = DynamicsMode::second_order) {
  return d_belief_detailed(nominal, corrupted, bank, mode, mode).value;
}

/// Distance-scale placement of an odometry corruption: the mean over
/// t = 1..T of the root-mean-square accumulated drift
/// sqrt(2 (m t)^2 + 2 s^2 t) of per-step drift N(m, s^2) added to x and y.
inline double odometry_drift_distance(double mean, double stddev, int T) {
  if (T < 1) throw DataError("horizon must be >= 1");
  double sum = 0.0;
  for (int t = 1; t <= T; ++t) sum += std::sqrt(2.0 * mean * mean * t * t + 2.0 * stddev * stddev * t);
  return sum / T;
}

// ---------------------------------------------------------------------------
// Sweep

struct SweepPoint {
  CorruptionSpec spec;
  /// D_belief for dynamics axes, the drift distance for odometry axes.
  double d_belief = 0.0;
  MetricsSummary metrics;
  /// Standard error of the success rate.
  double sr_se = 0.0;
  std::size_t n_episodes = 0;
  bool highly_corrupted() const { return d_belief > 1.0; }
};

struct SweepReport {
  std::vector<SweepPoint> points;
  std::size_t bank_sequences = 0;
  int bank_horizon = 0;
  std::uint64_t seed = 0;
};

struct SweepOptions {
  std::uint64_t seed = 0;
  int jobs = 0;
  DynamicsMode bank_mode = DynamicsMode::second_order;
};

/// Evaluates the policy over `tasks` in each corrupted world. The policy is
/// built by `factory` and keeps whatever belief it was constructed with.
/// Every point reuses the same engine seeds, so the f = 1 point reproduces
/// the uncorrupted run exactly.
inline SweepReport sensitivity_sweep(const PolicyFactory& factory, const std::vector<Task>& tasks,
                                     const WorldConfig& nominal, const HarnessOpts& harness,
                                     const std::vector<CorruptionSpec>& specs, const ActionBank& bank,
                                     const SweepOptions& opt = {}) {
  if (tasks.empty()) throw DataError("sweep needs at least one episode");
  bank.validate();
  SweepReport report;
  report.bank_sequences = bank.sequences.size();
  report.bank_horizon = bank.horizon;
  report.seed = opt.seed;
  for (const CorruptionSpec& spec : specs) {
    spec.validate();
    const WorldConfig world = corrupt_world(nominal, spec);
    const std::vector<TrajectoryLog> logs = run_tasks(tasks, world, factory, harness, opt.seed, opt.jobs);
    const std::vector<EpisodeResult> results = results_of(logs);
    SweepPoint p;
    p.spec = spec;
    p.d_belief = is_dynamics_axis(spec.axis) ? d_belief(nominal.dynamics, world.dynamics, bank, opt.bank_mode)
                                             : odometry_drift_distance(spec.noise_mean, spec.noise_std, bank.horizon);
    p.metrics = summarize(results);
    p.sr_se = binomial_se(p.metrics.sr, results.size());
    p.n_episodes = results.size();
    report.points.push_back(p);
  }
  return report;
}

inline std::string sweep_csv(const SweepReport& r) {
  std::ostringstream out;
  out << std::setprecision(10);
  out << "axis,f,noise_mean,noise_std,D_belief,SR,SPL,SCT,n_episodes,seed,SR_se,highly_corrupted\n";
  for (const SweepPoint& p : r.points)
    out << to_string(p.spec.axis) << ',' << p.spec.factor << ',' << p.spec.noise_mean << ',' << p.spec.noise_std << ','
        << p.d_belief << ',' << p.metrics.sr << ',' << p.metrics.spl << ',' << p.metrics.sct << ',' << p.n_episodes
        << ',' << r.seed << ',' << p.sr_se << ',' << (p.highly_corrupted() ? 1 : 0) << '\n';
  return out.str();
}

/// Plot-ready form: one series per axis.
inline nlohmann::json sweep_json(const SweepReport& r) {
  nlohmann::json series = nlohmann::json::object();
  for (const SweepPoint& p : r.points) {
    const std::string axis = to_string(p.spec.axis);
    if (!series.contains(axis))
      series[axis] = {{"axis", axis}, {"family", is_dynamics_axis(p.spec.axis) ? "dynamics" : "odometry"},
                      {"points", nlohmann::json::array()}};
    series[axis]["points"].push_back({{"f", p.spec.factor},
                                      {"noise_mean", p.spec.noise_mean},
                                      {"noise_std", p.spec.noise_std},
                                      {"d_belief", p.d_belief},
                                      {"sr", p.metrics.sr},
                                      {"spl", p.metrics.spl},
                                      {"sct", p.metrics.sct},
                                      {"sr_se", p.sr_se},
                                      {"n_episodes", p.n_episodes},
                                      {"highly_corrupted", p.highly_corrupted()}});
  }
  nlohmann::json list = nlohmann::json::array();
  for (auto& [k, v] : series.items()) list.push_back(v);
  return {{"seed", r.seed},
          {"bank", {{"sequences", r.bank_sequences}, {"horizon", r.bank_horizon}}},
          {"highly_corrupted_threshold_m", 1.0},
          {"series", list}};
}

}  // namespace navlab
