#pragma once

// Running a policy over a set of tasks, one fresh policy instance per episode.

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "navlab/metrics.hpp"
#include "navlab/parallel.hpp"
#include "navlab/random.hpp"
#include "navlab/world.hpp"

namespace navlab {

struct Task {
  std::shared_ptr<const WorldMap> map;
  Episode episode;
};

using PolicyFactory = std::function<std::unique_ptr<Policy>()>;

/// Engine seed of the i-th episode of a run.
inline std::uint64_t episode_seed(std::uint64_t seed, std::size_t index) {
  return mix_seed(mix_seed(seed) ^ mix_seed(0x51ed27ULL + index));
}

/// Logs in task order. Deterministic for any `jobs`.
inline std::vector<TrajectoryLog> run_tasks(const std::vector<Task>& tasks, const WorldConfig& config,
                                            const PolicyFactory& factory, const HarnessOpts& harness,
                                            std::uint64_t seed, int jobs = 0) {
  std::vector<TrajectoryLog> logs(tasks.size());
  parallel_for(tasks.size(), jobs, [&](std::size_t i) {
    std::unique_ptr<Policy> policy = factory();
    logs[i] = run_episode(tasks[i].map, tasks[i].episode, config, *policy, harness, episode_seed(seed, i));
  });
  return logs;
}

inline std::vector<EpisodeResult> results_of(const std::vector<TrajectoryLog>& logs) {
  std::vector<EpisodeResult> out;
  out.reserve(logs.size());
  for (const TrajectoryLog& l : logs) out.push_back(result_of(l));
  return out;
}

}  // namespace navlab
