#pragma once

// Shapley input importance over observation modalities. A coalition's value
// is the success rate (or SPL) of the policy when the modalities outside the
// coalition are replaced, at every step, by the corresponding field of an
// observation drawn uniformly from a background bank.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "navlab/evaluation.hpp"
#include "navlab/metrics.hpp"
#include "navlab/parallel.hpp"
#include "navlab/random.hpp"

namespace navlab {

enum class Modality { odometry, localization, scan, goal, prev_action };

inline constexpr int kNumModalities = 5;

inline const char* to_string(Modality m) {
  switch (m) {
    case Modality::odometry: return "odometry";
    case Modality::localization: return "localization";
    case Modality::scan: return "scan";
    case Modality::goal: return "goal";
    case Modality::prev_action: return "prev_action";
  }
  return "odometry";
}

inline Modality parse_modality(const std::string& s) {
  for (int k = 0; k < kNumModalities; ++k)
    if (s == to_string(static_cast<Modality>(k))) return static_cast<Modality>(k);
  throw DataError("unknown player '" + s + "'");
}

inline std::vector<Modality> all_modalities() {
  return {Modality::odometry, Modality::localization, Modality::scan, Modality::goal, Modality::prev_action};
}

/// Copies modality `m` of `from` into `to`.
inline void substitute(Observation& to, const Observation& from, Modality m) {
  switch (m) {
    case Modality::odometry:
      to.odom_pose = from.odom_pose;
      to.odom_v = from.odom_v;
      to.odom_omega = from.odom_omega;
      break;
    case Modality::localization: to.loc_pose = from.loc_pose; break;
    case Modality::scan: to.scan = from.scan; break;
    case Modality::goal: to.goal = from.goal; break;
    case Modality::prev_action: to.prev_action = from.prev_action; break;
  }
}

/// Every recorded observation of `logs`.
inline std::vector<Observation> observation_bank(const std::vector<TrajectoryLog>& logs) {
  std::vector<Observation> out;
  for (const TrajectoryLog& l : logs)
    for (const StepRecord& s : l.steps) out.push_back(s.obs);
  return out;
}

/// Wraps a policy and replaces the modalities flagged in `replaced` with
/// background fields. Each modality draws from its own stream every step,
/// whether or not it is replaced, so the draws of one modality never depend
/// on the coalition.
class SubstitutingPolicy : public Policy {
 public:
  SubstitutingPolicy(std::unique_ptr<Policy> inner, const std::vector<Observation>* background, unsigned replaced,
                     std::uint64_t seed)
      : inner_(std::move(inner)), background_(background), replaced_(replaced) {
    if (!background_ || background_->empty()) throw DataError("background observation bank is empty");
    for (int k = 0; k < kNumModalities; ++k) streams_.push_back(make_rng(seed, {61, static_cast<std::uint64_t>(k)}));
  }

  void begin_episode(const EpisodeContext& ctx) override { inner_->begin_episode(ctx); }
  void zero_memory() override { inner_->zero_memory(); }
  void on_frame_reset(const Pose2& f) override { inner_->on_frame_reset(f); }
  std::optional<Pose2> estimated_pose() const override { return inner_->estimated_pose(); }
  std::vector<double> latent() const override { return inner_->latent(); }

  int act(const PolicyInput& in) override {
    Observation obs = in.obs;
    std::uniform_int_distribution<std::size_t> pick(0, background_->size() - 1);
    for (int k = 0; k < kNumModalities; ++k) {
      const std::size_t idx = pick(streams_[static_cast<std::size_t>(k)]);
      if (replaced_ & (1u << k)) substitute(obs, (*background_)[idx], static_cast<Modality>(k));
    }
    return inner_->act(PolicyInput{obs, in.true_state, in.time});
  }

 private:
  std::unique_ptr<Policy> inner_;
  const std::vector<Observation>* background_;
  unsigned replaced_;
  std::vector<Rng> streams_;
};

enum class ValueMetric { sr, spl };

inline const char* to_string(ValueMetric m) { return m == ValueMetric::sr ? "SR" : "SPL"; }

inline ValueMetric parse_value_metric(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s == "sr") return ValueMetric::sr;
  if (s == "spl") return ValueMetric::spl;
  throw DataError("unknown value metric '" + s + "'");
}

struct ShapleyOptions {
  std::vector<Modality> players = all_modalities();
  int n_perms = 200;
  ValueMetric metric = ValueMetric::sr;
  std::uint64_t seed = 0;
  int jobs = 0;
};

struct PlayerValue {
  Modality player;
  double phi = 0.0;
  /// Monte-Carlo standard error of phi.
  double se = 0.0;
};

struct ShapleyReport {
  std::vector<PlayerValue> players;
  int n_perms = 0;
  ValueMetric metric = ValueMetric::sr;
  double value_all = 0.0;
  double value_none = 0.0;
  std::size_t n_episodes = 0;
  std::size_t coalitions_evaluated = 0;
  std::uint64_t seed = 0;

  double phi_sum() const {
    double s = 0.0;
    for (const PlayerValue& p : players) s += p.phi;
    return s;
  }
  /// Standard error of the sum, treating players as independent.
  double sum_se() const {
    double s = 0.0;
    for (const PlayerValue& p : players) s += p.se * p.se;
    return std::sqrt(s);
  }
  const PlayerValue& at(Modality m) const {
    for (const PlayerValue& p : players)
      if (p.player == m) return p;
    throw DataError(std::string("player ") + to_string(m) + " not in report");
  }
};

/// Shapley values of `n_players` for an arbitrary coalition value function,
/// estimated from `n_perms` sampled permutations. `value(mask)` receives a
/// bit mask over player positions and is called once per distinct coalition.
struct PermutationEstimate {
  std::vector<double> phi;
  std::vector<double> se;
  double value_all = 0.0;
  double value_none = 0.0;
  std::size_t coalitions = 0;
};

inline PermutationEstimate permutation_shapley(int n_players, const std::function<double(unsigned)>& value,
                                               int n_perms, std::uint64_t seed) {
  if (n_players < 1 || n_players > 16) throw DataError("Shapley estimation needs 1..16 players");
  if (n_perms < 1) throw DataError("Shapley estimation needs at least one permutation");
  std::map<unsigned, double> cache;
  auto v = [&](unsigned mask) {
    const auto it = cache.find(mask);
    if (it != cache.end()) return it->second;
    const double x = value(mask);
    cache.emplace(mask, x);
    return x;
  };
  const auto n = static_cast<std::size_t>(n_players);
  std::vector<double> mean(n, 0.0), m2(n, 0.0);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, {62});
  for (int p = 0; p < n_perms; ++p) {
    std::shuffle(order.begin(), order.end(), rng);
    unsigned mask = 0;
    double prev = v(0);
    for (int player : order) {
      mask |= 1u << player;
      const double cur = v(mask);
      const auto k = static_cast<std::size_t>(player);
      const double delta = (cur - prev) - mean[k];
      mean[k] += delta / (p + 1);
      m2[k] += delta * ((cur - prev) - mean[k]);
      prev = cur;
    }
  }
  PermutationEstimate out;
  const double m = n_perms;
  for (std::size_t k = 0; k < n; ++k) {
    out.phi.push_back(mean[k]);
    const double var = n_perms > 1 ? m2[k] / (m - 1.0) : 0.0;
    out.se.push_back(std::sqrt(var / m));
  }
  out.value_none = v(0);
  out.value_all = v((1u << n_players) - 1u);
  out.coalitions = cache.size();
  return out;
}

/// Shapley importance of observation modalities for the policy built by
/// `factory` on `tasks`. Modalities not listed as players stay genuine.
inline ShapleyReport shapley_importance(const PolicyFactory& factory, const std::vector<Task>& tasks,
                                        const WorldConfig& config, const HarnessOpts& harness,
                                        const std::vector<Observation>& background, const ShapleyOptions& opt) {
  if (background.empty()) throw DataError("background observation bank is empty");
  if (tasks.empty()) throw DataError("Shapley analysis needs at least one episode");
  if (opt.players.empty()) throw DataError("Shapley analysis needs at least one player");
  for (std::size_t a = 0; a < opt.players.size(); ++a)
    for (std::size_t b = a + 1; b < opt.players.size(); ++b)
      if (opt.players[a] == opt.players[b]) throw DataError("duplicate player");
  HarnessOpts h = harness;
  h.record_latent = false;
  h.record_scan = false;

  auto value = [&](unsigned coalition) {
    // Modalities replaced: listed players outside the coalition.
    unsigned replaced = 0;
    for (std::size_t k = 0; k < opt.players.size(); ++k)
      if (!(coalition & (1u << k))) replaced |= 1u << static_cast<int>(opt.players[k]);
    std::vector<EpisodeResult> results(tasks.size());
    parallel_for(tasks.size(), opt.jobs, [&](std::size_t i) {
      SubstitutingPolicy policy(factory(), &background, replaced, mix_seed(opt.seed ^ mix_seed(0x5a9 + i)));
      results[i] = result_of(run_episode(tasks[i].map, tasks[i].episode, config, policy, h, episode_seed(opt.seed, i)));
    });
    return opt.metric == ValueMetric::sr ? success_rate(results) : spl(results);
  };

  const PermutationEstimate est =
      permutation_shapley(static_cast<int>(opt.players.size()), value, opt.n_perms, opt.seed);
  ShapleyReport r;
  for (std::size_t k = 0; k < opt.players.size(); ++k) r.players.push_back({opt.players[k], est.phi[k], est.se[k]});
  r.n_perms = opt.n_perms;
  r.metric = opt.metric;
  r.value_all = est.value_all;
  r.value_none = est.value_none;
  r.n_episodes = tasks.size();
  r.coalitions_evaluated = est.coalitions;
  r.seed = opt.seed;
  return r;
}

inline nlohmann::json to_json(const ShapleyReport& r) {
  nlohmann::json players = nlohmann::json::array();
  for (const PlayerValue& p : r.players)
    players.push_back({{"player", to_string(p.player)}, {"phi", p.phi}, {"se", p.se}, {"permutations", r.n_perms}});
  return {{"metric", to_string(r.metric)},   {"n_perms", r.n_perms},       {"seed", r.seed},
          {"n_episodes", r.n_episodes},      {"value_all", r.value_all},   {"value_none", r.value_none},
          {"phi_sum", r.phi_sum()},          {"coalitions", r.coalitions_evaluated}, {"players", players}};
}

inline std::string shapley_csv(const ShapleyReport& r) {
  std::ostringstream out;
  out << std::setprecision(10) << "player,phi,se,permutations,metric\n";
  for (const PlayerValue& p : r.players)
    out << to_string(p.player) << ',' << p.phi << ',' << p.se << ',' << r.n_perms << ',' << to_string(r.metric)
        << '\n';
  return out.str();
}

}  // namespace navlab
