#pragma once

// File formats: DynParams JSON, episode and trajectory JSON-lines, float32
// rasters with JSON headers, PPM previews.
//
// Trajectory JSON-lines. A file holds one or more logs; each log is a
// "header" line, then "step" and "event" lines in time order, then an "end"
// line. Poses are [x, y, theta], goals [rho, phi]. Non-finite numbers are
// written as null and read back as +inf.
//
//   {"type":"header","episode":{...},"goal_world":[x,y],"decision_hz":3,
//    "geodesic_optimal":..,"optimal_time":..}
//   {"type":"step","t":..,"state":{"x","y","theta","v","omega","vdot","omegadot"},
//    "obs":{"scan":[..],"odom_pose":[..],"odom_v":..,"odom_omega":..,
//           "loc_pose":[..],"goal":[..],"prev_action":..},
//    "action":..,"reward":..,"collision":..,"geo":..,"latent":[..]}
//   {"type":"event","t":..,"kind":"zero_memory"|"frame_reset","frame":[..]}
//   {"type":"end","outcome":"success"|"timeout"|"stopped_far","final_state":{..},
//    "path_length":..,"episode_time":..}
//
// Raster files: `<stem>.bin` holds width*height little-endian float32 values,
// row j = 0 (lowest y) first, i fastest; `<stem>.json` holds
// {"width","height","resolution","origin":[x,y],"dtype":"float32"}.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "navlab/dynamics.hpp"
#include "navlab/grid.hpp"
#include "navlab/maps.hpp"
#include "navlab/world.hpp"

namespace navlab {

using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace detail {

inline json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline double get_num(const json& j) {
  if (j.is_null()) return std::numeric_limits<double>::infinity();
  return j.get<double>();
}

inline json pose_json(const Pose2& p) { return json::array({num(p.x), num(p.y), num(p.theta)}); }

inline Pose2 pose_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw DataError("pose must be [x, y, theta]");
  return {get_num(j[0]), get_num(j[1]), get_num(j[2])};
}

inline json state_json(const RobotState& s) {
  return {{"x", num(s.x)},         {"y", num(s.y)},         {"theta", num(s.theta)},      {"v", num(s.v)},
          {"omega", num(s.omega)}, {"vdot", num(s.vdot)}, {"omegadot", num(s.omegadot)}};
}

inline RobotState state_from(const json& j) {
  RobotState s;
  s.x = get_num(j.at("x"));
  s.y = get_num(j.at("y"));
  s.theta = get_num(j.at("theta"));
  s.v = get_num(j.at("v"));
  s.omega = get_num(j.at("omega"));
  s.vdot = get_num(j.at("vdot"));
  s.omegadot = get_num(j.at("omegadot"));
  return s;
}

inline json vec_json(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

inline std::vector<double> vec_from(const json& j) {
  std::vector<double> v;
  v.reserve(j.size());
  for (const json& x : j) v.push_back(get_num(x));
  return v;
}

template <class F>
auto guarded(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw DataError(what + ": " + e.what());
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// DynParams

inline json to_json(const DynParams& p) {
  return {{"tau_lin_acc", p.tau_lin_acc},
          {"tau_lin_brake", p.tau_lin_brake},
          {"tau_ang_acc", p.tau_ang_acc},
          {"tau_ang_brake", p.tau_ang_brake},
          {"gamma_lin_acc", p.gamma_lin_acc},
          {"gamma_lin_brake", p.gamma_lin_brake},
          {"gamma_ang_acc", p.gamma_ang_acc},
          {"gamma_ang_brake", p.gamma_ang_brake},
          {"v_max", p.v_max},
          {"omega_max", p.omega_max},
          {"substep_hz", p.substep_hz},
          {"decision_hz", p.decision_hz},
          {"response_form", p.response_form == ResponseForm::inverse_tau ? "inverse_tau" : "inverse_tau_squared"}};
}

/// Missing fields keep the values of `base`. Unknown fields are rejected.
inline DynParams dyn_params_from_json(const json& j, DynParams base = {}) {
  return detail::guarded("DynParams", [&] {
    if (!j.is_object()) throw DataError("DynParams must be a JSON object");
    for (const auto& [key, value] : j.items()) {
      double* field = nullptr;
      if (key == "tau_lin_acc") field = &base.tau_lin_acc;
      else if (key == "tau_lin_brake") field = &base.tau_lin_brake;
      else if (key == "tau_ang_acc") field = &base.tau_ang_acc;
      else if (key == "tau_ang_brake") field = &base.tau_ang_brake;
      else if (key == "gamma_lin_acc") field = &base.gamma_lin_acc;
      else if (key == "gamma_lin_brake") field = &base.gamma_lin_brake;
      else if (key == "gamma_ang_acc") field = &base.gamma_ang_acc;
      else if (key == "gamma_ang_brake") field = &base.gamma_ang_brake;
      else if (key == "v_max") field = &base.v_max;
      else if (key == "omega_max") field = &base.omega_max;
      if (field) {
        if (!value.is_number()) throw DataError("DynParams." + key + " must be a number");
        *field = value.get<double>();
      } else if (key == "substep_hz") {
        base.substep_hz = value.get<int>();
      } else if (key == "decision_hz") {
        base.decision_hz = value.get<int>();
      } else if (key == "response_form") {
        const std::string f = value.get<std::string>();
        if (f == "inverse_tau") base.response_form = ResponseForm::inverse_tau;
        else if (f == "inverse_tau_squared") base.response_form = ResponseForm::inverse_tau_squared;
        else throw DataError("unknown response_form '" + f + "'");
      } else {
        throw DataError("unknown DynParams field '" + key + "'");
      }
    }
    try {
      base.validate();
    } catch (const std::invalid_argument& e) {
      throw DataError(e.what());
    }
    return base;
  });
}

// ---------------------------------------------------------------------------
// World configuration

inline json to_json(const SensorNoise& n) {
  return {{"odom_mean", n.odom_mean},   {"odom_std", n.odom_std}, {"odom_heading_std", n.odom_heading_std},
          {"odom_vel_std", n.odom_vel_std}, {"loc_std", n.loc_std},   {"loc_heading_std", n.loc_heading_std}};
}

inline SensorNoise sensor_noise_from_json(const json& j, SensorNoise n = {}) {
  return detail::guarded("SensorNoise", [&] {
    n.odom_mean = j.value("odom_mean", n.odom_mean);
    n.odom_std = j.value("odom_std", n.odom_std);
    n.odom_heading_std = j.value("odom_heading_std", n.odom_heading_std);
    n.odom_vel_std = j.value("odom_vel_std", n.odom_vel_std);
    n.loc_std = j.value("loc_std", n.loc_std);
    n.loc_heading_std = j.value("loc_heading_std", n.loc_heading_std);
    for (double s : {n.odom_std, n.odom_heading_std, n.odom_vel_std, n.loc_std, n.loc_heading_std})
      if (!(s >= 0.0)) throw DataError("noise standard deviations must be >= 0");
    return n;
  });
}

inline json to_json(const ScanConfig& s) {
  json zones = json::array();
  for (const auto& [lo, hi] : s.dead_zones) zones.push_back({lo, hi});
  return {{"num_rays", s.num_rays}, {"range_max", s.range_max}, {"dead_zones", zones}};
}

inline ScanConfig scan_config_from_json(const json& j, ScanConfig s = {}) {
  return detail::guarded("ScanConfig", [&] {
    s.num_rays = j.value("num_rays", s.num_rays);
    s.range_max = j.value("range_max", s.range_max);
    if (j.contains("dead_zones")) {
      s.dead_zones.clear();
      for (const json& z : j.at("dead_zones")) s.dead_zones.emplace_back(z.at(0).get<double>(), z.at(1).get<double>());
    }
    if (s.num_rays <= 0 || !(s.range_max > 0.0)) throw DataError("scan needs rays and a positive range");
    return s;
  });
}

inline json to_json(const WorldConfig& c) {
  return {{"dynamics", to_json(c.dynamics)},
          {"mode", to_string(c.mode)},
          {"scan", to_json(c.scan)},
          {"noise", to_json(c.noise)},
          {"reward", {{"success", c.reward.success}, {"slack", c.reward.slack}, {"collision", c.reward.collision}}},
          {"stop_linear_eps", c.stop_linear_eps},
          {"stop_angular_eps", c.stop_angular_eps}};
}

inline WorldConfig world_config_from_json(const json& j, WorldConfig c = {}) {
  return detail::guarded("WorldConfig", [&] {
    if (j.contains("dynamics")) c.dynamics = dyn_params_from_json(j.at("dynamics"), c.dynamics);
    if (j.contains("mode")) {
      try {
        c.mode = parse_dynamics_mode(j.at("mode").get<std::string>());
      } catch (const std::invalid_argument& e) {
        throw DataError(e.what());
      }
    }
    if (j.contains("scan")) c.scan = scan_config_from_json(j.at("scan"), c.scan);
    if (j.contains("noise")) c.noise = sensor_noise_from_json(j.at("noise"), c.noise);
    if (j.contains("reward")) {
      const json& r = j.at("reward");
      c.reward.success = r.value("success", c.reward.success);
      c.reward.slack = r.value("slack", c.reward.slack);
      c.reward.collision = r.value("collision", c.reward.collision);
    }
    c.stop_linear_eps = j.value("stop_linear_eps", c.stop_linear_eps);
    c.stop_angular_eps = j.value("stop_angular_eps", c.stop_angular_eps);
    return c;
  });
}

inline json to_json(const HarnessOpts& h) {
  return {{"delay_ms", h.delay_ms},
          {"velocity_clip", h.velocity_clip ? json(*h.velocity_clip) : json(nullptr)},
          {"zero_period_s", h.zero_period_s},
          {"frame_reset", h.frame_reset},
          {"zero_near_goal_m", h.zero_near_goal_m},
          {"record_latent", h.record_latent},
          {"record_scan", h.record_scan}};
}

inline HarnessOpts harness_from_json(const json& j, HarnessOpts h = {}) {
  return detail::guarded("HarnessOpts", [&] {
    h.delay_ms = j.value("delay_ms", h.delay_ms);
    if (j.contains("velocity_clip")) {
      if (j.at("velocity_clip").is_null()) h.velocity_clip.reset();
      else h.velocity_clip = j.at("velocity_clip").get<double>();
    }
    h.zero_period_s = j.value("zero_period_s", h.zero_period_s);
    h.frame_reset = j.value("frame_reset", h.frame_reset);
    h.zero_near_goal_m = j.value("zero_near_goal_m", h.zero_near_goal_m);
    h.record_latent = j.value("record_latent", h.record_latent);
    h.record_scan = j.value("record_scan", h.record_scan);
    if (!(h.delay_ms >= 0.0) || !(h.zero_period_s >= 0.0)) throw DataError("harness delays and periods must be >= 0");
    if (h.velocity_clip && !(*h.velocity_clip > 0.0)) throw DataError("velocity clip must be > 0");
    return h;
  });
}

// ---------------------------------------------------------------------------
// Episodes

inline json to_json(const Episode& e) {
  return {{"id", e.id},
          {"map_id", e.map_id},
          {"start", detail::pose_json(e.start)},
          {"goal", {e.goal.rho, e.goal.phi}},
          {"success_radius", e.success_radius},
          {"time_limit", e.time_limit}};
}

inline Episode episode_from_json(const json& j) {
  return detail::guarded("Episode", [&] {
    Episode e;
    e.id = j.at("id").get<std::string>();
    e.map_id = j.at("map_id").get<std::string>();
    e.start = detail::pose_from(j.at("start"));
    e.goal = {j.at("goal").at(0).get<double>(), j.at("goal").at(1).get<double>()};
    e.success_radius = j.value("success_radius", e.success_radius);
    e.time_limit = j.value("time_limit", e.time_limit);
    if (!(e.success_radius > 0.0)) throw DataError("episode " + e.id + ": success radius must be > 0");
    if (!(e.time_limit > 0.0)) throw DataError("episode " + e.id + ": time limit must be > 0");
    return e;
  });
}

inline std::string episodes_to_jsonl(const std::vector<Episode>& eps) {
  std::string out;
  for (const Episode& e : eps) out += to_json(e).dump() + "\n";
  return out;
}

/// Calls `f(line_number, text)` for every non-blank line.
template <class F>
void for_each_line(const std::string& text, F&& f) {
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    f(n, line);
  }
}

inline json parse_json_line(int line_no, const std::string& line) {
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    throw DataError("line " + std::to_string(line_no) + ": " + e.what());
  }
}

inline std::vector<Episode> episodes_from_jsonl(const std::string& text) {
  std::vector<Episode> out;
  for_each_line(text, [&](int n, const std::string& line) {
    try {
      out.push_back(episode_from_json(parse_json_line(n, line)));
    } catch (const DataError& e) {
      throw DataError("episode line " + std::to_string(n) + ": " + e.what());
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Trajectory logs

inline json observation_json(const Observation& o) {
  return {{"scan", detail::vec_json(o.scan)},
          {"odom_pose", detail::pose_json(o.odom_pose)},
          {"odom_v", detail::num(o.odom_v)},
          {"odom_omega", detail::num(o.odom_omega)},
          {"loc_pose", detail::pose_json(o.loc_pose)},
          {"goal", {detail::num(o.goal.rho), detail::num(o.goal.phi)}},
          {"prev_action", o.prev_action}};
}

inline Observation observation_from(const json& j) {
  Observation o;
  o.scan = detail::vec_from(j.at("scan"));
  o.odom_pose = detail::pose_from(j.at("odom_pose"));
  o.odom_v = detail::get_num(j.at("odom_v"));
  o.odom_omega = detail::get_num(j.at("odom_omega"));
  o.loc_pose = detail::pose_from(j.at("loc_pose"));
  o.goal = {detail::get_num(j.at("goal").at(0)), detail::get_num(j.at("goal").at(1))};
  o.prev_action = j.at("prev_action").get<int>();
  return o;
}

inline std::string log_to_jsonl(const TrajectoryLog& log) {
  std::string out;
  const json header{{"type", "header"},
                    {"episode", to_json(log.episode)},
                    {"goal_world", {detail::num(log.goal_world.x), detail::num(log.goal_world.y)}},
                    {"decision_hz", log.decision_hz},
                    {"geodesic_optimal", detail::num(log.geodesic_optimal)},
                    {"optimal_time", detail::num(log.optimal_time)}};
  out += header.dump() + "\n";
  // Events are interleaved before the first step taken at or after their time.
  std::size_t e = 0;
  auto flush_events = [&](double upto) {
    for (; e < log.events.size() && log.events[e].t <= upto + 1e-12; ++e) {
      const LogEvent& ev = log.events[e];
      out += json{{"type", "event"}, {"t", ev.t}, {"kind", ev.kind}, {"frame", detail::pose_json(ev.frame)}}.dump() +
             "\n";
    }
  };
  for (const StepRecord& s : log.steps) {
    flush_events(s.t);
    const json step{{"type", "step"},
                    {"t", s.t},
                    {"state", detail::state_json(s.state)},
                    {"obs", observation_json(s.obs)},
                    {"action", s.action},
                    {"reward", detail::num(s.reward)},
                    {"collision", s.collision},
                    {"geo", detail::num(s.geo)},
                    {"latent", detail::vec_json(s.latent)}};
    out += step.dump() + "\n";
  }
  flush_events(std::numeric_limits<double>::infinity());
  const json end{{"type", "end"},
                 {"outcome", to_string(log.outcome)},
                 {"final_state", detail::state_json(log.final_state)},
                 {"path_length", detail::num(log.path_length)},
                 {"episode_time", detail::num(log.episode_time)}};
  out += end.dump() + "\n";
  return out;
}

inline std::string logs_to_jsonl(const std::vector<TrajectoryLog>& logs) {
  std::string out;
  for (const TrajectoryLog& l : logs) out += log_to_jsonl(l);
  return out;
}

inline std::vector<TrajectoryLog> logs_from_jsonl(const std::string& text) {
  std::vector<TrajectoryLog> out;
  bool open = false;
  for_each_line(text, [&](int n, const std::string& line) {
    const json j = parse_json_line(n, line);
    const std::string where = "log line " + std::to_string(n);
    detail::guarded(where, [&] {
      const std::string type = j.at("type").get<std::string>();
      if (type == "header") {
        if (open) throw DataError(where + ": header before the previous log ended");
        TrajectoryLog log;
        log.episode = episode_from_json(j.at("episode"));
        log.goal_world = {detail::get_num(j.at("goal_world").at(0)), detail::get_num(j.at("goal_world").at(1))};
        log.decision_hz = j.at("decision_hz").get<int>();
        log.geodesic_optimal = detail::get_num(j.at("geodesic_optimal"));
        log.optimal_time = detail::get_num(j.at("optimal_time"));
        out.push_back(std::move(log));
        open = true;
        return 0;
      }
      if (!open) throw DataError(where + ": '" + type + "' line outside a log");
      TrajectoryLog& log = out.back();
      if (type == "step") {
        StepRecord s;
        s.t = j.at("t").get<double>();
        if (!log.steps.empty() && !(s.t > log.steps.back().t))
          throw DataError(where + ": step times must increase");
        s.state = detail::state_from(j.at("state"));
        s.obs = observation_from(j.at("obs"));
        s.action = j.at("action").get<int>();
        if (!valid_command_index(s.action)) throw DataError(where + ": invalid action index");
        s.reward = detail::get_num(j.at("reward"));
        s.collision = j.at("collision").get<bool>();
        s.geo = detail::get_num(j.at("geo"));
        s.latent = detail::vec_from(j.at("latent"));
        log.steps.push_back(std::move(s));
      } else if (type == "event") {
        log.events.push_back({j.at("t").get<double>(), j.at("kind").get<std::string>(), detail::pose_from(j.at("frame"))});
      } else if (type == "end") {
        log.outcome = parse_outcome(j.at("outcome").get<std::string>());
        log.final_state = detail::state_from(j.at("final_state"));
        log.path_length = detail::get_num(j.at("path_length"));
        log.episode_time = detail::get_num(j.at("episode_time"));
        open = false;
      } else {
        throw DataError(where + ": unknown line type '" + type + "'");
      }
      return 0;
    });
  });
  if (open) throw DataError("log file ends inside a log");
  return out;
}

inline std::vector<TrajectoryLog> load_logs(const std::filesystem::path& p) { return logs_from_jsonl(read_file(p)); }

// ---------------------------------------------------------------------------
// Rasters

inline json raster_header(const GridGeometry& g) {
  return {{"width", g.width},
          {"height", g.height},
          {"resolution", g.resolution},
          {"origin", {g.origin.x, g.origin.y}},
          {"dtype", "float32"}};
}

inline std::string raster_bytes(const Raster<double>& r) {
  std::string out(r.data.size() * sizeof(float), '\0');
  for (std::size_t k = 0; k < r.data.size(); ++k) {
    const float f = static_cast<float>(r.data[k]);
    std::memcpy(out.data() + k * sizeof(float), &f, sizeof(float));
  }
  return out;
}

inline GridGeometry geometry_from_header(const json& h) {
  return detail::guarded("raster header", [&] {
    if (h.value("dtype", std::string("float32")) != "float32") throw DataError("raster dtype must be float32");
    GridGeometry g;
    g.width = h.at("width").get<int>();
    g.height = h.at("height").get<int>();
    g.resolution = h.at("resolution").get<double>();
    g.origin = {h.at("origin").at(0).get<double>(), h.at("origin").at(1).get<double>()};
    if (g.width <= 0 || g.height <= 0 || !(g.resolution > 0.0)) throw DataError("bad raster geometry");
    return g;
  });
}

inline Raster<double> raster_from_bytes(const json& header, const std::string& bytes) {
  const GridGeometry g = geometry_from_header(header);
  if (bytes.size() != g.size() * sizeof(float)) throw DataError("raster payload size does not match header");
  Raster<double> r(g, 0.0);
  for (std::size_t k = 0; k < r.data.size(); ++k) {
    float f;
    std::memcpy(&f, bytes.data() + k * sizeof(float), sizeof(float));
    r.data[k] = f;
  }
  return r;
}

/// Writes `<stem>.bin` and `<stem>.json`. `stem` may carry a .bin extension.
inline void save_raster(std::filesystem::path stem, const Raster<double>& r, const json& extra = json::object()) {
  if (stem.extension() == ".bin") stem.replace_extension();
  json h = raster_header(r.geometry);
  for (const auto& [k, v] : extra.items()) h[k] = v;
  write_file_atomic(stem.string() + ".bin", raster_bytes(r));
  write_file_atomic(stem.string() + ".json", h.dump(2) + "\n");
}

inline Raster<double> load_raster(std::filesystem::path stem) {
  if (stem.extension() == ".bin" || stem.extension() == ".json") stem.replace_extension();
  const json h = detail::guarded("raster header", [&] { return json::parse(read_file(stem.string() + ".json")); });
  return raster_from_bytes(h, read_file(stem.string() + ".bin"));
}

/// Diverging blue-white-red colormap for v in [-1, 1].
inline std::array<std::uint8_t, 3> diverging_color(double v) {
  if (!std::isfinite(v)) return {0, 0, 0};
  v = std::clamp(v, -1.0, 1.0);
  auto lerp = [](double a, double b, double t) { return static_cast<std::uint8_t>(std::lround(a + (b - a) * t)); };
  if (v >= 0.0) return {lerp(255, 178, v), lerp(255, 24, v), lerp(255, 43, v)};
  const double t = -v;
  return {lerp(255, 33, t), lerp(255, 102, t), lerp(255, 172, t)};
}

/// Binary PPM (P6), top row = highest y. Values are scaled by `scale`
/// (default: the largest finite magnitude) before the colormap.
inline std::string raster_to_ppm(const Raster<double>& r, double scale = 0.0) {
  if (!(scale > 0.0)) {
    scale = 0.0;
    for (double v : r.data)
      if (std::isfinite(v)) scale = std::max(scale, std::abs(v));
    if (scale == 0.0) scale = 1.0;
  }
  std::string out = "P6\n" + std::to_string(r.width()) + " " + std::to_string(r.height()) + "\n255\n";
  out.reserve(out.size() + r.data.size() * 3);
  for (int j = r.height() - 1; j >= 0; --j)
    for (int i = 0; i < r.width(); ++i) {
      const auto c = diverging_color(r.at(i, j) / scale);
      out.append(reinterpret_cast<const char*>(c.data()), 3);
    }
  return out;
}

}  // namespace navlab
