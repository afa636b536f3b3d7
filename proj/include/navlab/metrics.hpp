#pragma once

// Episode-set navigation metrics: success rate, SPL and SCT.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "navlab/core.hpp"
#include "navlab/world.hpp"

namespace navlab {

struct EpisodeResult {
  std::string id;
  bool success = false;
  /// Ground-truth path length (m).
  double path_length = 0.0;
  /// Shortest collision-free path length (m).
  double geodesic_optimal = 0.0;
  /// Elapsed episode time (s).
  double episode_time = 0.0;
  /// Lower bound on traversal time (s).
  double optimal_time = 0.0;

  void validate() const {
    if (!(path_length >= 0.0) || !std::isfinite(path_length)) throw DataError(id + ": path length must be >= 0");
    if (!(geodesic_optimal > 0.0) || !std::isfinite(geodesic_optimal))
      throw DataError(id + ": geodesic optimum must be > 0");
    if (!(episode_time > 0.0) || !std::isfinite(episode_time)) throw DataError(id + ": episode time must be > 0");
    if (!(optimal_time > 0.0) || !std::isfinite(optimal_time)) throw DataError(id + ": optimal time must be > 0");
  }

  /// This episode's SPL summand times N.
  double spl_term() const { return success ? geodesic_optimal / std::max(path_length, geodesic_optimal) : 0.0; }
  /// This episode's SCT summand times N.
  double sct_term() const { return success ? optimal_time / std::max(episode_time, optimal_time) : 0.0; }
};

inline EpisodeResult result_of(const TrajectoryLog& log) {
  return {log.episode.id, log.success(), log.path_length, log.geodesic_optimal, log.episode_time, log.optimal_time};
}

namespace detail {
inline void require_results(std::span<const EpisodeResult> r) {
  if (r.empty()) throw DataError("metrics need at least one episode result");
  for (const EpisodeResult& e : r) e.validate();
}
}  // namespace detail

inline double success_rate(std::span<const EpisodeResult> r) {
  detail::require_results(r);
  double s = 0.0;
  for (const EpisodeResult& e : r) s += e.success ? 1.0 : 0.0;
  return s / static_cast<double>(r.size());
}

inline double spl(std::span<const EpisodeResult> r) {
  detail::require_results(r);
  double s = 0.0;
  for (const EpisodeResult& e : r) s += e.spl_term();
  return s / static_cast<double>(r.size());
}

inline double sct(std::span<const EpisodeResult> r) {
  detail::require_results(r);
  double s = 0.0;
  for (const EpisodeResult& e : r) s += e.sct_term();
  return s / static_cast<double>(r.size());
}

struct MetricsSummary {
  std::size_t n = 0;
  double sr = 0.0;
  double spl = 0.0;
  double sct = 0.0;
};

inline MetricsSummary summarize(std::span<const EpisodeResult> r) {
  return {r.size(), success_rate(r), spl(r), sct(r)};
}

/// Mean and sample standard deviation (0 for a single value).
struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;
};

inline MeanStd mean_std(std::span<const double> xs) {
  if (xs.empty()) return {};
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  return {m, xs.size() > 1 ? std::sqrt(v / static_cast<double>(xs.size() - 1)) : 0.0};
}

/// Standard error of a success rate estimated from n Bernoulli trials.
inline double binomial_se(double p, std::size_t n) {
  return n > 0 ? std::sqrt(std::max(0.0, p * (1.0 - p)) / static_cast<double>(n)) : 0.0;
}

/// One row per episode, then a summary row whose id is "ALL".
inline std::string metrics_csv(std::span<const EpisodeResult> r) {
  const MetricsSummary s = summarize(r);
  std::ostringstream out;
  out << std::setprecision(10);
  out << "episode,success,path_length,geodesic_optimal,episode_time,optimal_time,spl,sct\n";
  for (const EpisodeResult& e : r)
    out << e.id << ',' << (e.success ? 1 : 0) << ',' << e.path_length << ',' << e.geodesic_optimal << ','
        << e.episode_time << ',' << e.optimal_time << ',' << e.spl_term() << ',' << e.sct_term() << '\n';
  out << "ALL," << s.sr << ",,,,," << s.spl << ',' << s.sct << '\n';
  return out.str();
}

}  // namespace navlab
