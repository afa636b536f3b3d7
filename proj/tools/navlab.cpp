// navlab command-line tool: every pipeline as a subcommand.
//
// Exit codes: 0 ok, 2 usage, 3 data error, 4 infeasible task, 1 internal.

#include <csignal>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "navlab/api.hpp"
#include "navlab/estimator.hpp"
#include "navlab/evaluation.hpp"
#include "navlab/probing.hpp"
#include "navlab/service.hpp"
#include "navlab/shapley.hpp"

namespace {

using namespace navlab;
using nlohmann::json;
namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Shared option groups

struct TaskArgs {
  std::vector<std::string> maps;
  int episodes = 20;
  std::string episodes_file;
  double time_limit = 120.0;
  double min_geodesic = 2.0;
  double max_geodesic = 8.0;

  void add(CLI::App* app) {
    app->add_option("--map", maps, "Map ids (room-<seed>, open-<W>x<H>, catalog names) or map files");
    app->add_option("--episodes", episodes, "Episodes generated per map");
    app->add_option("--episodes-file", episodes_file, "Episodes JSONL (overrides generation)");
    app->add_option("--time-limit", time_limit, "Episode time limit (s) for generated episodes");
    app->add_option("--min-geodesic", min_geodesic, "Minimum start-goal geodesic distance (m)");
    app->add_option("--max-geodesic", max_geodesic, "Maximum start-goal geodesic distance (m)");
  }

  std::vector<Task> build(const MapCatalog& catalog, std::uint64_t seed) const {
    std::vector<std::shared_ptr<const WorldMap>> resolved;
    for (const std::string& m : maps) resolved.push_back(catalog.resolve(m));
    std::vector<Task> tasks;
    if (!episodes_file.empty()) {
      for (const Episode& e : episodes_from_jsonl(read_file(episodes_file))) {
        std::shared_ptr<const WorldMap> map;
        for (const auto& r : resolved)
          if (r->id() == e.map_id) map = r;
        tasks.push_back({map ? map : catalog.get(e.map_id), e});
      }
      if (tasks.empty()) throw DataError("episodes file is empty");
      return tasks;
    }
    if (resolved.empty()) resolved.push_back(catalog.get("room-0"));
    if (episodes < 1) throw UsageError("--episodes must be >= 1");
    EpisodeGenOptions go;
    go.time_limit = time_limit;
    go.min_geodesic = min_geodesic;
    go.max_geodesic = max_geodesic;
    for (std::size_t m = 0; m < resolved.size(); ++m)
      for (const Episode& e : generate_episodes(*resolved[m], episodes, mix_seed(seed ^ (0x7a5c + m)), go))
        tasks.push_back({resolved[m], e});
    return tasks;
  }
};

struct WorldArgs {
  std::string world_file;
  std::string params_file;
  std::string mode = "second_order";
  bool sensor_gaps = false;

  void add(CLI::App* app) {
    app->add_option("--world", world_file, "WorldConfig JSON");
    app->add_option("--params", params_file, "DynParams JSON applied over the world's dynamics");
    app->add_option("--mode", mode, "Dynamics mode")->check(CLI::IsMember({"second_order", "instant"}));
    app->add_flag("--sensor-gaps", sensor_gaps, "Blind the scan between four 65 degree depth sensors");
  }

  WorldConfig build() const {
    WorldConfig w;
    if (!world_file.empty()) w = world_config_from_json(parse_file(world_file));
    if (!params_file.empty()) w.dynamics = dyn_params_from_json(parse_file(params_file), w.dynamics);
    w.mode = parse_dynamics_mode(mode);
    if (sensor_gaps) w.scan.dead_zones = sensor_gap_dead_zones();
    try {
      w.dynamics.validate();
    } catch (const std::invalid_argument& e) {
      throw DataError(e.what());
    }
    return w;
  }

  static json parse_file(const std::string& path) {
    try {
      return json::parse(read_file(path));
    } catch (const json::exception& e) {
      throw DataError(path + ": " + e.what());
    }
  }
};

struct HarnessArgs {
  HarnessOpts h;
  double velocity_clip = 0.0;
  bool no_frame_reset = false;

  void add(CLI::App* app) {
    app->add_option("--delay-ms", h.delay_ms, "Observation delay (ms)");
    app->add_option("--velocity-clip", velocity_clip, "Cap commanded a_v at this fraction of v_max (0: off)");
    app->add_option("--zero-period", h.zero_period_s, "Zero the policy memory every N seconds (0: never)");
    app->add_flag("--no-frame-reset", no_frame_reset, "Keep the episode frame when zeroing");
    app->add_option("--zero-near-goal", h.zero_near_goal_m, "Zero once within this distance of the goal (m)");
  }

  HarnessOpts build() const {
    HarnessOpts out = h;
    if (velocity_clip > 0.0) out.velocity_clip = velocity_clip;
    out.frame_reset = !no_frame_reset;
    return out;
  }
};

/// Replays the commands of logged episodes, matched by episode id; STOP after
/// the log runs out.
class ReplayPolicy : public Policy {
 public:
  explicit ReplayPolicy(std::shared_ptr<const std::map<std::string, std::vector<int>>> actions)
      : actions_(std::move(actions)) {}

  void begin_episode(const EpisodeContext& ctx) override {
    const auto it = actions_->find(ctx.episode->id);
    if (it == actions_->end()) throw DataError("replay log has no episode '" + ctx.episode->id + "'");
    current_ = &it->second;
    next_ = 0;
  }
  int act(const PolicyInput&) override { return next_ < current_->size() ? (*current_)[next_++] : kStopIndex; }

 private:
  std::shared_ptr<const std::map<std::string, std::vector<int>>> actions_;
  const std::vector<int>* current_ = nullptr;
  std::size_t next_ = 0;
};

struct PolicyArgs {
  std::string policy = "expert";
  std::string replay_log;
  double kappa = 0.2;

  void add(CLI::App* app, std::vector<std::string> choices) {
    app->add_option("--policy", policy, "Policy")->check(CLI::IsMember(choices));
    app->add_option("--replay-log", replay_log, "Logs whose commands the replay policy repeats");
    app->add_option("--kappa", kappa, "Localization gain of the estimator policy");
  }

  /// expert: map planner on ground truth; odometry: straight at the observed
  /// goal from odometry; estimator: map planner on the reference estimator;
  /// zero: idle command; replay: logged commands.
  PolicyFactory build(const WorldConfig& world) const {
    if (policy == "expert") return [] { return std::make_unique<ExpertPolicy>(); };
    if (policy == "odometry") {
      ExpertOptions o;
      o.source = ExpertOptions::PoseSource::odometry;
      o.field_source = ExpertOptions::FieldSource::observed_goal;
      return [o] { return std::make_unique<ExpertPolicy>(o); };
    }
    if (policy == "estimator") {
      EstimatorOptions est;
      est.kappa = kappa;
      est.scan = world.scan;
      est.decision_dt = world.dynamics.decision_dt();
      return [est] { return std::make_unique<EstimatorExpertPolicy>(ExpertOptions{}, est); };
    }
    if (policy == "zero") {
      struct Idle : Policy {
        int act(const PolicyInput&) override { return kIdleIndex; }
      };
      return [] { return std::make_unique<Idle>(); };
    }
    if (policy == "replay") {
      if (replay_log.empty()) throw UsageError("--policy replay needs --replay-log");
      auto actions = std::make_shared<std::map<std::string, std::vector<int>>>();
      for (const TrajectoryLog& l : load_logs(replay_log)) {
        std::vector<int>& a = (*actions)[l.episode.id];
        for (const StepRecord& s : l.steps) a.push_back(s.action);
      }
      return [actions] { return std::make_unique<ReplayPolicy>(actions); };
    }
    throw UsageError("unknown policy '" + policy + "'");
  }
};

struct Globals {
  bool json_errors = false;
  std::string config;
  std::string maps_dir;
  std::uint64_t seed = 0;
  int jobs = 0;
};

void write_output(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    return;
  }
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  write_file_atomic(p, content);
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string strip_ext(const std::string& path, const std::string& ext) {
  return ends_with(path, ext) ? path.substr(0, path.size() - ext.size()) : path;
}

ActionBank load_bank(const std::string& path) {
  return action_bank_from_json(WorldArgs::parse_file(path));
}

// ---------------------------------------------------------------------------
// Config file: flags > file > defaults

/// Applies `cfg` to options not given on the command line. Top-level keys
/// target the global options or the selected subcommand; an object under a
/// subcommand's name targets that subcommand.
void apply_config(CLI::App& app, const json& cfg) {
  if (!cfg.is_object()) throw DataError("config file must hold a JSON object");
  std::vector<CLI::App*> chain{&app};
  for (CLI::App* a = &app;;) {
    const auto subs = a->get_subcommands();
    if (subs.empty()) break;
    a = subs.front();
    chain.push_back(a);
  }
  auto set = [](CLI::Option* opt, const json& v) {
    if (opt->count() > 0) return;
    std::vector<std::string> values;
    auto text = [](const json& x) { return x.is_string() ? x.get<std::string>() : x.dump(); };
    if (v.is_array())
      for (const json& x : v) values.push_back(text(x));
    else
      values.push_back(text(v));
    opt->clear();
    for (const std::string& s : values) opt->add_result(s);
    opt->run_callback();
  };
  auto find = [](CLI::App* a, std::string key) -> CLI::Option* {
    std::replace(key.begin(), key.end(), '_', '-');
    return a->get_option_no_throw("--" + key);
  };
  std::function<void(const json&, std::size_t)> walk = [&](const json& obj, std::size_t level) {
    for (const auto& [key, value] : obj.items()) {
      if (key == "config") continue;
      if (value.is_object()) {
        if (level + 1 < chain.size() && chain[level + 1]->get_name() == key) walk(value, level + 1);
        continue;  // sections for other subcommands
      }
      CLI::Option* opt = nullptr;
      for (std::size_t k = level; k < chain.size() && !opt; ++k) opt = find(chain[k], key);
      if (!opt && level == 0) opt = find(&app, key);
      if (!opt) throw DataError("config key '" + key + "' matches no option");
      set(opt, value);
    }
  };
  walk(cfg, 0);
}

// ---------------------------------------------------------------------------
// Subcommands

void add_seed_jobs(CLI::App* app, Globals& g) {
  app->add_option("--seed", g.seed, "Random seed");
  app->add_option("--jobs", g.jobs, "Worker threads (0: all cores)");
}

int run(int argc, char** argv, Globals& g) {
  CLI::App app{"navlab: navigation-dynamics laboratory"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_flag("--json-errors", g.json_errors, "Print errors as JSON on stderr");
  app.add_option("--config", g.config, "JSON file with option values (flags take precedence)");
  app.add_option("--maps-dir", g.maps_dir, "Directory of map files addressed by stem");

  // simulate
  CLI::App* sim = app.add_subcommand("simulate", "Run a policy on episodes and write trajectory logs");
  TaskArgs sim_tasks;
  WorldArgs sim_world;
  HarnessArgs sim_harness;
  PolicyArgs sim_policy;
  std::string sim_out, sim_episodes_out;
  bool sim_no_latent = false, sim_no_scan = false;
  sim_tasks.add(sim);
  sim_world.add(sim);
  sim_harness.add(sim);
  sim_policy.add(sim, {"expert", "odometry", "estimator", "zero", "replay"});
  sim->add_option("--out", sim_out, "Output logs (JSONL)");
  sim->add_option("--episodes-out", sim_episodes_out, "Also write the episodes (JSONL)");
  sim->add_flag("--no-latent", sim_no_latent, "Do not record policy latents");
  sim->add_flag("--no-scan", sim_no_scan, "Do not record scans");
  add_seed_jobs(sim, g);

  // sweep
  CLI::App* sweep = app.add_subcommand("sweep", "Corruption sweep: SR/SPL/SCT against D_belief");
  TaskArgs sweep_tasks;
  WorldArgs sweep_world;
  HarnessArgs sweep_harness;
  PolicyArgs sweep_policy;
  std::string sweep_axis, sweep_bank, sweep_bank_out, sweep_out;
  std::vector<double> sweep_factors;
  int bank_size = 100, bank_horizon = 15;
  sweep_tasks.add(sweep);
  sweep_world.add(sweep);
  sweep_harness.add(sweep);
  sweep_policy.add(sweep, {"expert", "odometry", "estimator"});
  sweep->add_option("--axis", sweep_axis, "damping | response_time | max_velocity | odom_noise_mean | odom_noise_std");
  sweep->add_option("--factors", sweep_factors, "Factors (dynamics axes) or noise levels (odometry axes)");
  sweep->add_option("--bank", sweep_bank, "Action bank JSON (built from the policy when absent)");
  sweep->add_option("--bank-size", bank_size, "Sequences in a built bank");
  sweep->add_option("--horizon", bank_horizon, "Steps per sequence in a built bank");
  sweep->add_option("--bank-out", sweep_bank_out, "Write the bank used");
  sweep->add_option("--out", sweep_out, "Report (.csv or .json)");
  add_seed_jobs(sweep, g);

  // dbelief
  CLI::App* db = app.add_subcommand("dbelief", "D_belief between nominal and corrupted dynamics");
  std::string db_params, db_corrupt, db_bank, db_axis, db_mode = "second_order";
  double db_factor = 1.0;
  bool db_json = false;
  db->add_option("--params", db_params, "Nominal DynParams JSON (default: built-in)");
  db->add_option("--corrupt", db_corrupt, "Corrupted DynParams JSON");
  db->add_option("--axis", db_axis, "Corrupt the nominal along this dynamics axis instead");
  db->add_option("--factor", db_factor, "Factor for --axis");
  db->add_option("--bank", db_bank, "Action bank JSON");
  db->add_option("--mode", db_mode, "Dynamics mode")->check(CLI::IsMember({"second_order", "instant"}));
  db->add_flag("--json", db_json, "Print the full result document");

  // step-response
  CLI::App* step = app.add_subcommand("step-response", "Velocity response to a held command");
  std::string step_params, step_mode = "second_order", step_out;
  int step_command = -1;
  double step_av = 0.0, step_aw = 0.0, step_duration = 10.0;
  step->add_option("--params", step_params, "DynParams JSON");
  step->add_option("--command", step_command, "Command index");
  step->add_option("--a-v", step_av, "Linear command (m/s) when no index is given");
  step->add_option("--a-omega", step_aw, "Angular command (rad/s) when no index is given");
  step->add_option("--duration", step_duration, "Seconds");
  step->add_option("--mode", step_mode, "Dynamics mode")->check(CLI::IsMember({"second_order", "instant"}));
  step->add_option("--out", step_out, "Output JSON (stdout when absent)");

  // plan-field
  CLI::App* pf = app.add_subcommand("plan-field", "Expert time-to-goal field");
  std::string pf_map, pf_goal, pf_out, pf_ppm;
  pf->add_option("--map", pf_map, "Map id or file");
  pf->add_option("--goal", pf_goal, "Goal 'x,y' (m)");
  pf->add_option("--out", pf_out, "Raster stem (.bin + .json)");
  pf->add_option("--ppm", pf_ppm, "Also write a PPM preview");

  // heatmap
  CLI::App* hm = app.add_subcommand("heatmap", "Positive and negative planning-quality densities");
  std::vector<std::string> hm_logs, hm_out;
  std::string hm_raw, hm_params;
  double hm_sigma = 0.5;
  hm->add_option("--logs", hm_logs, "Trajectory logs (JSONL)");
  hm->add_option("--sigma", hm_sigma, "Kernel width (m)");
  hm->add_option("--out", hm_out, "Positive and negative PPM files")->expected(2);
  hm->add_option("--raw", hm_raw, "Also write float32 rasters as <stem>_pos / <stem>_neg");
  hm->add_option("--params", hm_params, "DynParams JSON of the expert's belief");

  // probe
  CLI::App* probe = app.add_subcommand("probe", "Latent probing");
  probe->require_subcommand(1);
  CLI::App* pc = probe->add_subcommand("collect", "Record estimator latents as a dataset");
  TaskArgs pc_tasks;
  WorldArgs pc_world;
  std::string pc_logs, pc_out;
  int pc_occ = 30;
  double pc_kappa = 0.2;
  pc_tasks.add(pc);
  pc_world.add(pc);
  pc->add_option("--logs", pc_logs, "Use latents recorded in these logs instead of running episodes");
  pc->add_option("--occ-cells", pc_occ, "Occupancy target side (cells, 0: none)");
  pc->add_option("--kappa", pc_kappa, "Localization gain of the estimator");
  pc->add_option("--out", pc_out, "Dataset stem (.bin + .json)");
  add_seed_jobs(pc, g);

  CLI::App* pt = probe->add_subcommand("train", "Fit a pose probe");
  std::string pt_data, pt_out, pt_variant = "linear";
  ProbeOptions popt;
  pt->add_option("--data", pt_data, "Dataset stem");
  pt->add_option("--variant", pt_variant, "linear | linear_prev_action | latent_rollout");
  pt->add_option("--horizon", popt.horizon, "Prediction horizon (steps)");
  pt->add_option("--ridge", popt.ridge, "Ridge penalty per row");
  pt->add_option("--lr", popt.learning_rate, "Adam learning rate");
  pt->add_option("--batch", popt.batch, "Minibatch size");
  pt->add_option("--iterations", popt.iterations, "Gradient steps");
  pt->add_option("--hidden", popt.hidden, "Hidden units of the action networks");
  pt->add_option("--input-dims", popt.input_dims, "Latent dimensions read (0: all)");
  pt->add_option("--rollout-dims", popt.rollout_dims, "Dimensions the rollout transition acts on");
  pt->add_option("--out", pt_out, "Model JSON");
  add_seed_jobs(pt, g);

  CLI::App* pe = probe->add_subcommand("eval", "Per-horizon probe errors");
  std::string pe_data, pe_model, pe_split = "test", pe_out;
  pe->add_option("--data", pe_data, "Dataset stem");
  pe->add_option("--model", pe_model, "Model JSON");
  pe->add_option("--split", pe_split, "train | val | test");
  pe->add_option("--out", pe_out, "CSV (stdout when absent)");

  CLI::App* po = probe->add_subcommand("occupancy", "Linear occupancy probe and its accuracy raster");
  std::string po_data, po_split = "val", po_out;
  double po_ridge = 1e-3;
  po->add_option("--data", po_data, "Dataset stem");
  po->add_option("--ridge", po_ridge, "Ridge penalty per row");
  po->add_option("--split", po_split, "Evaluation split");
  po->add_option("--out", po_out, "Output stem (.json summary, .bin/.json raster, .ppm)");

  // shapley
  CLI::App* sh = app.add_subcommand("shapley", "Shapley importance of observation modalities");
  TaskArgs sh_tasks;
  WorldArgs sh_world;
  HarnessArgs sh_harness;
  PolicyArgs sh_policy;
  std::string sh_background, sh_metric = "sr", sh_out;
  std::vector<std::string> sh_players;
  int sh_perms = 200, sh_bg_episodes = 10;
  sh_tasks.add(sh);
  sh_world.add(sh);
  sh_harness.add(sh);
  sh_policy.add(sh, {"expert", "odometry", "estimator"});
  sh->add_option("--background", sh_background, "Logs whose observations form the background bank");
  sh->add_option("--background-episodes", sh_bg_episodes, "Episodes per map run for a generated background");
  sh->add_option("--perms", sh_perms, "Sampled permutations");
  sh->add_option("--players", sh_players, "Modalities (default: all)");
  sh->add_option("--metric", sh_metric, "sr | spl");
  sh->add_option("--out", sh_out, "Report (.csv or .json; stdout CSV when absent)");
  add_seed_jobs(sh, g);

  // metrics
  CLI::App* mt = app.add_subcommand("metrics", "SR/SPL/SCT of logged episodes");
  std::vector<std::string> mt_logs;
  std::string mt_out;
  mt->add_option("--logs", mt_logs, "Trajectory logs (JSONL)");
  mt->add_option("--out", mt_out, "CSV (stdout when absent)");

  // serve
  CLI::App* sv = app.add_subcommand("serve", "Playground HTTP/WebSocket service");
  int sv_port = 8080;
  std::string sv_address = "127.0.0.1", sv_store = "navlab-store", sv_origin = "*";
  sv->add_option("--port", sv_port, "TCP port (0: any free port)");
  sv->add_option("--address", sv_address, "Listen address");
  sv->add_option("--store", sv_store, "Directory of uploaded banks, logs and rasters");
  sv->add_option("--origin", sv_origin, "Allowed CORS origin");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }
  if (!g.config.empty()) apply_config(app, WorldArgs::parse_file(g.config));
  const MapCatalog catalog(g.maps_dir);

  auto need = [](const std::string& value, const char* flag) {
    if (value.empty()) throw UsageError(std::string(flag) + " is required");
  };

  if (sim->parsed()) {
    need(sim_out, "--out");
    const WorldConfig world = sim_world.build();
    const std::vector<Task> tasks = sim_tasks.build(catalog, g.seed);
    HarnessOpts h = sim_harness.build();
    h.record_latent = !sim_no_latent;
    h.record_scan = !sim_no_scan;
    const auto logs = run_tasks(tasks, world, sim_policy.build(world), h, g.seed, g.jobs);
    write_output(sim_out, logs_to_jsonl(logs));
    if (!sim_episodes_out.empty()) {
      std::vector<Episode> eps;
      for (const Task& t : tasks) eps.push_back(t.episode);
      write_output(sim_episodes_out, episodes_to_jsonl(eps));
    }
    const MetricsSummary s = summarize(results_of(logs));
    std::cerr << "episodes " << s.n << "  SR " << s.sr << "  SPL " << s.spl << "  SCT " << s.sct << "\n";
    return 0;
  }

  if (sweep->parsed()) {
    need(sweep_axis, "--axis");
    need(sweep_out, "--out");
    if (sweep_factors.empty()) throw UsageError("--factors is required");
    const CorruptionAxis axis = parse_corruption_axis(sweep_axis);
    const WorldConfig world = sweep_world.build();
    const std::vector<Task> tasks = sweep_tasks.build(catalog, g.seed);
    const PolicyFactory factory = sweep_policy.build(world);
    const ActionBank bank = sweep_bank.empty()
                                ? build_action_bank(factory, tasks, world, bank_size, bank_horizon, g.seed, g.jobs)
                                : load_bank(sweep_bank);
    if (!sweep_bank_out.empty()) write_output(sweep_bank_out, to_json(bank).dump(2) + "\n");
    std::vector<CorruptionSpec> specs;
    for (double f : sweep_factors) {
      if (is_dynamics_axis(axis)) specs.push_back(CorruptionSpec::dynamics(axis, f));
      else if (axis == CorruptionAxis::odom_noise_mean) specs.push_back(CorruptionSpec::odometry_mean(f));
      else specs.push_back(CorruptionSpec::odometry_std(f));
    }
    SweepOptions so;
    so.seed = g.seed;
    so.jobs = g.jobs;
    const SweepReport r = sensitivity_sweep(factory, tasks, world, sweep_harness.build(), specs, bank, so);
    write_output(sweep_out, ends_with(sweep_out, ".json") ? sweep_json(r).dump(2) + "\n" : sweep_csv(r));
    return 0;
  }

  if (db->parsed()) {
    need(db_bank, "--bank");
    json req{{"mode", db_mode}};
    const DynParams nominal = db_params.empty() ? DynParams{} : dyn_params_from_json(WorldArgs::parse_file(db_params));
    req["params"] = to_json(nominal);
    if (!db_corrupt.empty() && !db_axis.empty()) throw UsageError("give --corrupt or --axis, not both");
    if (!db_corrupt.empty()) req["corrupted"] = WorldArgs::parse_file(db_corrupt);
    else if (!db_axis.empty())
      req["corrupted"] = to_json(corrupt_dynamics(nominal, CorruptionSpec::dynamics(parse_corruption_axis(db_axis), db_factor)));
    else
      throw UsageError("--corrupt or --axis is required");
    const json out = api::dbelief(req, load_bank(db_bank));
    std::cout << (db_json ? out.dump() : out.at("value").dump()) << "\n";
    return 0;
  }

  if (step->parsed()) {
    json req{{"mode", step_mode}, {"duration", step_duration}};
    if (!step_params.empty()) req["params"] = WorldArgs::parse_file(step_params);
    if (step->count("--command")) req["command"] = step_command;
    else req["command"] = {{"a_v", step_av}, {"a_omega", step_aw}};
    write_output(step_out, api::step_response(req).dump() + "\n");
    return 0;
  }

  if (pf->parsed()) {
    need(pf_map, "--map");
    need(pf_goal, "--goal");
    need(pf_out, "--out");
    const auto map = catalog.resolve(pf_map);
    const Vec2 goal = api::parse_goal(pf_goal);
    const TimeField f = api::goal_field(*map, goal);
    save_raster(strip_ext(pf_out, ".bin"), f.time, {{"map", map->id()}, {"goal", {goal.x, goal.y}}});
    if (!pf_ppm.empty()) {
      Raster<double> shown = f.time;
      for (double& v : shown.data)
        if (!std::isfinite(v)) v = std::numeric_limits<double>::quiet_NaN();
      write_output(pf_ppm, raster_to_ppm(shown));
    }
    return 0;
  }

  if (hm->parsed()) {
    if (hm_logs.empty()) throw UsageError("--logs is required");
    if (hm_out.size() != 2) throw UsageError("--out needs the positive and the negative PPM path");
    std::vector<TrajectoryLog> logs;
    for (const std::string& f : hm_logs) {
      auto part = load_logs(f);
      logs.insert(logs.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    const DynParams belief = hm_params.empty() ? DynParams{} : dyn_params_from_json(WorldArgs::parse_file(hm_params));
    const api::HeatmapResult h = api::heatmap(logs, catalog, hm_sigma, belief);
    double scale = 0.0;
    for (const Raster<double>* r : {&h.rasters.positive, &h.rasters.negative})
      for (double v : r->data) scale = std::max(scale, v);
    write_output(hm_out[0], raster_to_ppm(h.rasters.positive, scale));
    Raster<double> neg = h.rasters.negative;
    for (double& v : neg.data) v = -v;
    write_output(hm_out[1], raster_to_ppm(neg, scale));
    if (!hm_raw.empty()) {
      save_raster(hm_raw + "_pos", h.rasters.positive, {{"sigma", hm_sigma}});
      save_raster(hm_raw + "_neg", h.rasters.negative, {{"sigma", hm_sigma}});
    }
    std::cout << api::heatmap_summary(h, hm_sigma).dump() << "\n";
    return 0;
  }

  if (pc->parsed()) {
    need(pc_out, "--out");
    const WorldConfig world = pc_world.build();
    LatentDataset ds;
    if (!pc_logs.empty()) {
      const std::vector<TrajectoryLog> logs = load_logs(pc_logs);
      std::map<std::string, std::shared_ptr<const WorldMap>> maps;
      for (const std::string& m : pc_tasks.maps) {
        auto w = catalog.resolve(m);
        maps[w->id()] = w;
      }
      if (pc_occ > 0)
        for (const TrajectoryLog& l : logs)
          if (!maps.count(l.episode.map_id)) maps[l.episode.map_id] = catalog.get(l.episode.map_id);
      ds = dataset_from_logs(logs, maps, g.seed, pc_occ);
    } else {
      CollectOptions co;
      co.estimator.kappa = pc_kappa;
      co.occ_cells = pc_occ;
      co.seed = g.seed;
      co.jobs = g.jobs;
      ds = collect_latent_logs(pc_tasks.build(catalog, g.seed), world, co);
    }
    const fs::path stem(strip_ext(pc_out, ".bin"));
    if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
    save_dataset(stem, ds);
    std::cerr << "episodes " << ds.episodes.size() << "  rows " << ds.rows() << "  h_dim " << ds.h_dim << "\n";
    return 0;
  }

  if (pt->parsed()) {
    need(pt_data, "--data");
    need(pt_out, "--out");
    popt.variant = parse_probe_variant(pt_variant);
    popt.seed = g.seed;
    const LatentDataset ds = load_dataset(strip_ext(pt_data, ".bin"));
    write_output(pt_out, train_probe(ds, popt).to_json().dump() + "\n");
    return 0;
  }

  if (pe->parsed()) {
    need(pe_data, "--data");
    need(pe_model, "--model");
    const LatentDataset ds = load_dataset(strip_ext(pe_data, ".bin"));
    const ProbeModel m = ProbeModel::from_json(WorldArgs::parse_file(pe_model));
    write_output(pe_out, probe_report_csv(evaluate_probe(m, ds, parse_split(pe_split))));
    return 0;
  }

  if (po->parsed()) {
    need(po_data, "--data");
    need(po_out, "--out");
    const LatentDataset ds = load_dataset(strip_ext(po_data, ".bin"));
    const OccupancyReport rep = probe_occupancy(ds, po_ridge, parse_split(po_split));
    const Raster<double> acc = accuracy_raster(rep);
    const auto [a, b] = worst_cell(rep);
    const Vec2 c = acc.geometry.center(a, b);
    const std::string stem = strip_ext(po_out, ".json");
    save_raster(stem + "_accuracy", acc, {{"kind", "occupancy_accuracy"}});
    write_output(stem + "_accuracy.ppm", raster_to_ppm(acc, 1.0));
    const json summary{{"accuracy", rep.accuracy},
                       {"all_free_accuracy", rep.all_free_accuracy},
                       {"rows", rep.rows},
                       {"worst_cell", {a, b}},
                       {"worst_cell_accuracy", acc.at(a, b)},
                       {"worst_cell_bearing", std::atan2(c.y, c.x)},
                       {"ridge", po_ridge},
                       {"split", po_split}};
    write_output(stem + ".json", summary.dump(2) + "\n");
    return 0;
  }

  if (sh->parsed()) {
    const WorldConfig world = sh_world.build();
    const std::vector<Task> tasks = sh_tasks.build(catalog, g.seed);
    const PolicyFactory factory = sh_policy.build(world);
    std::vector<Observation> background;
    if (!sh_background.empty()) {
      background = observation_bank(load_logs(sh_background));
    } else {
      TaskArgs bg = sh_tasks;
      bg.episodes_file.clear();
      bg.episodes = sh_bg_episodes;
      const std::uint64_t bg_seed = mix_seed(g.seed ^ 0xb6);
      background = observation_bank(run_tasks(bg.build(catalog, bg_seed), world, factory, HarnessOpts{}, bg_seed, g.jobs));
    }
    ShapleyOptions so;
    if (!sh_players.empty()) {
      so.players.clear();
      for (const std::string& p : sh_players) so.players.push_back(parse_modality(p));
    }
    so.n_perms = sh_perms;
    so.metric = parse_value_metric(sh_metric);
    so.seed = g.seed;
    so.jobs = g.jobs;
    const ShapleyReport r = shapley_importance(factory, tasks, world, sh_harness.build(), background, so);
    write_output(sh_out, ends_with(sh_out, ".json") ? to_json(r).dump(2) + "\n" : shapley_csv(r));
    return 0;
  }

  if (mt->parsed()) {
    if (mt_logs.empty()) throw UsageError("--logs is required");
    std::vector<EpisodeResult> results;
    for (const std::string& f : mt_logs)
      for (const TrajectoryLog& l : load_logs(f)) results.push_back(result_of(l));
    write_output(mt_out, metrics_csv(results));
    return 0;
  }

  if (sv->parsed()) {
    if (sv_port < 0 || sv_port > 65535) throw UsageError("--port must lie in 0..65535");
    ServiceOptions so;
    so.maps_dir = g.maps_dir;
    so.store_dir = sv_store;
    so.cors_origin = sv_origin;
    const ServiceCore core(so);
    PlaygroundServer server(core, static_cast<unsigned short>(sv_port), sv_address);
    std::cerr << "listening on http://" << sv_address << ":" << server.port() << "/v1\n";
    server.run();
    return 0;
  }
  throw UsageError("no subcommand");
}

int report(const Globals& g, int code, const char* kind, const std::string& message) {
  if (g.json_errors)
    std::cerr << json{{"error", {{"code", kind}, {"exit", code}, {"message", message}}}}.dump() << "\n";
  else
    std::cerr << "navlab: " << kind << " error: " << message << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  Globals g;
  // The JSON-error switch must work even when parsing fails.
  for (int k = 1; k < argc; ++k)
    if (std::string(argv[k]) == "--json-errors") g.json_errors = true;
  try {
    return run(argc, argv, g);
  } catch (const UsageError& e) {
    return report(g, 2, "usage", e.what());
  } catch (const InfeasibleError& e) {
    return report(g, 4, "infeasible", e.what());
  } catch (const DataError& e) {
    return report(g, 3, "data", e.what());
  } catch (const nlohmann::json::exception& e) {
    return report(g, 3, "data", e.what());
  } catch (const std::invalid_argument& e) {
    return report(g, 3, "data", e.what());
  } catch (const fs::filesystem_error& e) {
    return report(g, 3, "data", e.what());
  } catch (const std::exception& e) {
    return report(g, 1, "internal", e.what());
  }
}
