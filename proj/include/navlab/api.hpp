#pragma once

// Operations shared by the command-line tool and the playground service. Each
// takes a JSON request and returns a JSON document, so both front ends emit
// identical bytes for identical inputs.

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <regex>
#include <string>
#include <vector>

#include <json.hpp>

#include "navlab/episodes.hpp"
#include "navlab/io.hpp"
#include "navlab/maps.hpp"
#include "navlab/metrics.hpp"
#include "navlab/planner.hpp"
#include "navlab/sensitivity.hpp"

namespace navlab {

// ---------------------------------------------------------------------------
// Maps by id

/// Built-in and on-disk maps by id. Built-in ids are "room-<seed>" (procedural
/// room) and "open-<W>x<H>" (borderless free grid of 0.1 m cells); any other
/// id names a map stem inside the catalog directory. Maps are built once and
/// shared read-only.
class MapCatalog {
 public:
  explicit MapCatalog(std::filesystem::path dir = {}) : dir_(std::move(dir)) {}

  const std::filesystem::path& directory() const { return dir_; }

  std::shared_ptr<const WorldMap> get(const std::string& id) const {
    {
      std::lock_guard lock(mutex_);
      const auto it = cache_.find(id);
      if (it != cache_.end()) return it->second;
    }
    auto map = make_world_map(id, build(id));
    std::lock_guard lock(mutex_);
    return cache_.emplace(id, std::move(map)).first->second;
  }

  /// Built-in samples followed by the maps found in the directory.
  std::vector<std::string> list() const {
    std::vector<std::string> ids{"open-80x80"};
    for (int k = 0; k < 5; ++k) ids.push_back("room-" + std::to_string(k));
    if (!dir_.empty() && std::filesystem::is_directory(dir_)) {
      std::vector<std::string> found;
      for (const auto& e : std::filesystem::directory_iterator(dir_))
        if (e.path().extension() == ".grid" || e.path().extension() == ".pgm")
          found.push_back(e.path().stem().string());
      std::sort(found.begin(), found.end());
      found.erase(std::unique(found.begin(), found.end()), found.end());
      ids.insert(ids.end(), found.begin(), found.end());
    }
    return ids;
  }

  /// Resolves a command-line map argument: an existing map file (its stem
  /// becomes the id) or a catalog id.
  std::shared_ptr<const WorldMap> resolve(const std::string& spec) const {
    const std::filesystem::path p(spec);
    if (p.has_extension() && std::filesystem::exists(p)) {
      const std::string id = p.stem().string();
      std::lock_guard lock(mutex_);
      auto it = cache_.find(id);
      if (it == cache_.end()) it = cache_.emplace(id, make_world_map(id, load_map(p))).first;
      return it->second;
    }
    return get(spec);
  }

 private:
  OccupancyGrid build(const std::string& id) const {
    static const std::regex room(R"(room-(\d{1,9}))"), open(R"(open-(\d{1,4})x(\d{1,4}))"),
        name(R"([A-Za-z0-9_][A-Za-z0-9_.\-]*)");
    std::smatch m;
    if (std::regex_match(id, m, room)) return generate_room_map(std::stoull(m[1].str()));
    if (std::regex_match(id, m, open)) {
      const int w = std::stoi(m[1].str()), h = std::stoi(m[2].str());
      if (w < 2 || h < 2) throw NotFoundError("open map needs at least 2x2 cells");
      return OccupancyGrid(w, h, 0.1);
    }
    if (dir_.empty() || !std::regex_match(id, name)) throw NotFoundError("unknown map '" + id + "'");
    const std::filesystem::path stem = dir_ / id;
    if (!std::filesystem::exists(stem.string() + ".grid") && !std::filesystem::exists(stem.string() + ".pgm"))
      throw NotFoundError("unknown map '" + id + "'");
    return load_map(stem);
  }

  std::filesystem::path dir_;
  mutable std::mutex mutex_;
  mutable std::map<std::string, std::shared_ptr<const WorldMap>> cache_;
};

// ---------------------------------------------------------------------------
// Content-addressed blobs

inline std::string content_id(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static const char* hex = "0123456789abcdef";
  std::string out(16, '0');
  for (int k = 15; k >= 0; --k, h >>= 4) out[static_cast<std::size_t>(k)] = hex[h & 0xf];
  return out;
}

/// Blobs stored under `<dir>/<kind>/<id>`, the id being a hash of the bytes.
class ContentStore {
 public:
  explicit ContentStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

  std::string put(const std::string& kind, const std::string& bytes) const {
    check_kind(kind);
    const std::string id = content_id(bytes);
    const std::filesystem::path p = dir_ / kind / id;
    if (!std::filesystem::exists(p)) {
      std::filesystem::create_directories(p.parent_path());
      write_file_atomic(p, bytes);
    }
    return id;
  }

  std::string get(const std::string& kind, const std::string& id) const {
    check_kind(kind);
    static const std::regex valid("[0-9a-f]{16}");
    if (!std::regex_match(id, valid)) throw NotFoundError("unknown " + kind + " '" + id + "'");
    const std::filesystem::path p = dir_ / kind / id;
    if (!std::filesystem::exists(p)) throw NotFoundError("unknown " + kind + " '" + id + "'");
    return read_file(p);
  }

 private:
  static void check_kind(const std::string& kind) {
    for (char c : kind)
      if (!std::islower(static_cast<unsigned char>(c)) && c != '-') throw std::invalid_argument("bad store kind");
  }
  std::filesystem::path dir_;
};

// ---------------------------------------------------------------------------
// Request helpers

namespace api {

using nlohmann::json;

inline DynParams params_field(const json& req, const char* key) {
  if (!req.contains(key)) return {};
  DynParams p = dyn_params_from_json(req.at(key));
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
  return p;
}

inline DynamicsMode mode_field(const json& req) {
  return req.contains("mode") ? parse_dynamics_mode(req.at("mode").get<std::string>()) : DynamicsMode::second_order;
}

inline void require_object(const json& req) {
  if (!req.is_object()) throw DataError("request body must be a JSON object");
}

template <class F>
auto guarded(F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw DataError(std::string("bad request: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Step response

/// Velocity response to a held command, sampled at every substep.
/// Request: {params?, mode?, command: index | {a_v, a_omega}, duration?, initial?: {v, omega}}.
inline json step_response(const json& req) {
  return guarded([&] {
    require_object(req);
    const DynParams p = params_field(req, "params");
    const DynamicsMode mode = mode_field(req);
    const json& c = req.at("command");
    Command cmd;
    if (c.is_number_integer()) {
      const int index = c.get<int>();
      if (!valid_command_index(index)) throw DataError("command index out of range");
      cmd = resolve_command(index, p);
    } else {
      cmd = {-1, c.at("a_v").get<double>(), c.at("a_omega").get<double>()};
      if (!all_finite({cmd.a_v, cmd.a_omega})) throw DataError("non-finite command");
    }
    const double duration = req.value("duration", 10.0);
    if (!(duration > 0.0) || duration > 600.0) throw DataError("duration must lie in (0, 600] s");
    RobotState s;
    if (req.contains("initial")) {
      s.v = req.at("initial").value("v", 0.0);
      s.omega = req.at("initial").value("omega", 0.0);
      if (!all_finite({s.v, s.omega})) throw DataError("non-finite initial velocity");
    }
    const int n = static_cast<int>(std::lround(duration * p.substep_hz));
    json t = json::array(), v = json::array(), w = json::array();
    t.push_back(0.0);
    v.push_back(s.v);
    w.push_back(s.omega);
    for (int k = 1; k <= n; ++k) {
      integrate_substep(s, cmd, p, mode);
      t.push_back(k * p.substep_dt());
      v.push_back(s.v);
      w.push_back(s.omega);
    }
    return json{{"mode", to_string(mode)}, {"substep_hz", p.substep_hz}, {"a_v", cmd.a_v},
                {"a_omega", cmd.a_omega}, {"t", t}, {"v", v}, {"omega", w}};
  });
}

// ---------------------------------------------------------------------------
// Trajectories

inline Vec2 vec2_field(const json& j) {
  if (!j.is_array() || j.size() != 2) throw DataError("expected [x, y]");
  return {detail::get_num(j.at(0)), detail::get_num(j.at(1))};
}

/// M(t) along `log` against the expert's field for the log's goal.
inline std::vector<double> log_quality(const TrajectoryLog& log, const WorldMap& map, const DynParams& belief,
                                       const CostWeights& weights = {}) {
  ExpertOptions eo;
  eo.belief = belief;
  eo.weights = weights;
  const TimeField field = plan_expert_field(map, log.goal_world, log.episode.start.position(), eo);
  return planning_quality(log, RobustFieldView{&field, &map.checker()}, weights, belief, &map.checker());
}

/// Episode selected by a request: a full episode object, or
/// {"index": k, "seed": s} into the generated episodes of `map`.
inline Episode episode_field(const json& j, const WorldMap& map) {
  if (j.contains("index")) {
    const int k = j.at("index").get<int>();
    if (k < 0 || k > 10000) throw DataError("episode index out of range");
    EpisodeGenOptions go;
    go.time_limit = j.value("time_limit", go.time_limit);
    return generate_episodes(map, k + 1, j.value("seed", std::uint64_t{0}), go).back();
  }
  Episode e = episode_from_json(j);
  e.map_id = map.id();
  return e;
}

/// Request: {params?, belief?, mode?, map, episode, policy: "expert", seed?}
/// runs the expert in closed loop; {params?, mode?, actions: [...], start?,
/// map?, goal?} rolls out an open-loop command sequence.
inline json trajectory(const json& req, const MapCatalog& maps) {
  return guarded([&] {
    require_object(req);
    const DynParams params = params_field(req, "params");
    const DynParams belief = req.contains("belief") ? params_field(req, "belief") : DynParams{};
    const DynamicsMode mode = mode_field(req);
    json out;
    if (req.contains("actions")) {
      std::vector<int> actions = req.at("actions").get<std::vector<int>>();
      if (actions.empty()) throw DataError("actions must not be empty");
      for (int a : actions)
        if (!valid_command_index(a)) throw DataError("command index out of range");
      RobotState s;
      if (req.contains("start")) s.set_pose(detail::pose_from(req.at("start")));
      TrajectoryLog log;
      log.decision_hz = params.decision_hz;
      json poses = json::array(), t = json::array();
      poses.push_back(detail::pose_json(s.pose()));
      t.push_back(0.0);
      for (std::size_t k = 0; k < actions.size(); ++k) {
        StepRecord rec;
        rec.t = k * params.decision_dt();
        rec.state = s;
        rec.action = actions[k];
        log.steps.push_back(rec);
        s = integrate_command(s, resolve_command(actions[k], params), params, mode);
        poses.push_back(detail::pose_json(s.pose()));
        t.push_back((k + 1) * params.decision_dt());
      }
      out = {{"t", t}, {"poses", poses}, {"actions", actions}};
      if (req.contains("map") && req.contains("goal")) {
        const auto map = maps.get(req.at("map").get<std::string>());
        log.goal_world = vec2_field(req.at("goal"));
        log.episode.start = req.contains("start") ? detail::pose_from(req.at("start")) : Pose2{};
        out["M"] = log_quality(log, *map, belief);
      } else {
        out["M"] = json::array();
      }
      return out;
    }
    const std::string policy = req.value("policy", std::string("expert"));
    if (policy != "expert") throw DataError("unknown policy '" + policy + "'");
    const auto map = maps.get(req.at("map").get<std::string>());
    const Episode episode = episode_field(req.at("episode"), *map);
    WorldConfig world;
    world.dynamics = params;
    world.mode = mode;
    ExpertOptions eo;
    eo.belief = belief;
    ExpertPolicy expert(eo);
    HarnessOpts h;
    h.record_latent = false;
    h.record_scan = false;
    const TrajectoryLog log = run_episode(map, episode, world, expert, h, req.value("seed", std::uint64_t{0}));
    json poses = json::array(), t = json::array(), actions = json::array();
    for (const StepRecord& s : log.steps) {
      poses.push_back(detail::pose_json(s.state.pose()));
      t.push_back(s.t);
      actions.push_back(s.action);
    }
    poses.push_back(detail::pose_json(log.final_state.pose()));
    t.push_back(log.episode_time);
    const EpisodeResult r = result_of(log);
    return json{{"map", map->id()},
                {"episode", to_json(episode)},
                {"goal", {log.goal_world.x, log.goal_world.y}},
                {"t", t},
                {"poses", poses},
                {"actions", actions},
                {"M", log_quality(log, *map, belief)},
                {"outcome", to_string(log.outcome)},
                {"spl", r.spl_term()},
                {"sct", r.sct_term()}};
  });
}

// ---------------------------------------------------------------------------
// D_belief

/// Request: {params?, corrupted, mode?}; the bank is passed separately.
inline json dbelief(const json& req, const ActionBank& bank) {
  return guarded([&] {
    require_object(req);
    const DynParams nominal = params_field(req, "params");
    const DynParams corrupted = params_field(req, "corrupted");
    const DBeliefResult r = d_belief_detailed(nominal, corrupted, bank, mode_field(req));
    return json{{"value", r.value},
                {"per_sequence", r.per_sequence},
                {"sequences", bank.sequences.size()},
                {"horizon", bank.horizon}};
  });
}

// ---------------------------------------------------------------------------
// Fields and heatmaps

/// The expert's time-to-goal field on `map` for `goal`.
inline TimeField goal_field(const WorldMap& map, Vec2 goal) {
  if (map.checker().collides(goal)) throw InfeasibleError("goal lies in occupied space");
  return plan_expert_field(map, goal, goal);
}

/// Parses "x,y".
inline Vec2 parse_goal(const std::string& s) {
  static const std::regex form(R"(\s*(-?[0-9.eE+\-]+)\s*,\s*(-?[0-9.eE+\-]+)\s*)");
  std::smatch m;
  if (!std::regex_match(s, m, form)) throw DataError("goal must be 'x,y'");
  try {
    const Vec2 g{std::stod(m[1].str()), std::stod(m[2].str())};
    if (!all_finite({g.x, g.y})) throw DataError("goal must be finite");
    return g;
  } catch (const std::logic_error&) {
    throw DataError("goal must be 'x,y'");
  }
}

struct HeatmapResult {
  std::string map_id;
  QualityHeatmap rasters;
  std::size_t points = 0;
};

/// Positive and negative M(t) densities over the map all `logs` share.
inline HeatmapResult heatmap(const std::vector<TrajectoryLog>& logs, const MapCatalog& maps, double sigma,
                             const DynParams& belief = {}) {
  if (logs.empty()) throw DataError("heatmap needs at least one log");
  const std::string id = logs.front().episode.map_id;
  for (const TrajectoryLog& l : logs)
    if (l.episode.map_id != id) throw DataError("heatmap logs must share one map");
  const auto map = maps.get(id);
  std::vector<QualitySeries> series;
  std::size_t points = 0;
  for (const TrajectoryLog& l : logs) {
    series.push_back(quality_series(l, log_quality(l, *map, belief)));
    points += series.back().values.size();
  }
  try {
    return {id, quality_heatmap(series, map->grid().geometry(), sigma), points};
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
}

inline json heatmap_summary(const HeatmapResult& h, double sigma) {
  auto peak = [](const Raster<double>& r) { return *std::max_element(r.data.begin(), r.data.end()); };
  return {{"map", h.map_id},
          {"sigma", sigma},
          {"points", h.points},
          {"header", raster_header(h.rasters.positive.geometry)},
          {"positive_peak", peak(h.rasters.positive)},
          {"negative_peak", peak(h.rasters.negative)}};
}

// ---------------------------------------------------------------------------
// Replay

/// Frames of a replayed log: a header, one frame per step, an end frame.
inline std::vector<std::string> replay_frames(const TrajectoryLog& log) {
  std::vector<std::string> out;
  out.push_back(json{{"type", "header"},
                     {"episode", to_json(log.episode)},
                     {"goal", {log.goal_world.x, log.goal_world.y}},
                     {"steps", log.steps.size()},
                     {"decision_hz", log.decision_hz}}
                    .dump());
  for (std::size_t k = 0; k < log.steps.size(); ++k) {
    const StepRecord& s = log.steps[k];
    out.push_back(json{{"type", "step"},
                       {"index", k},
                       {"t", s.t},
                       {"pose", detail::pose_json(s.state.pose())},
                       {"v", s.state.v},
                       {"omega", s.state.omega},
                       {"action", s.action},
                       {"collision", s.collision}}
                      .dump());
  }
  out.push_back(json{{"type", "end"},
                     {"outcome", to_string(log.outcome)},
                     {"t", log.episode_time},
                     {"pose", detail::pose_json(log.final_state.pose())}}
                    .dump());
  return out;
}

}  // namespace api
}  // namespace navlab
