#pragma once

// Latent-state probing: dataset collection, future-pose probes, the
// action-conditioned variant, autoregressive latent rollout and the local
// occupancy probe.
//
// Dataset file (little-endian):
//   char[8] "NAVLATNT", u32 version (1), u32 h_dim, u32 occ_cells, u32 n_episodes
//   per episode:
//     u32 split (0 train, 1 val, 2 test), u32 n_steps,
//     f64 goal rho, goal phi, f64 start x, y, theta (world),
//     u16 id length, id bytes, u16 map id length, map id bytes
//     per step:
//       i32 action, f64 x, y, theta (ground truth, episode frame),
//       f64 x, y, theta (estimated, episode frame),
//       f32 h[h_dim], u8 occupancy[occ_cells * occ_cells]
// A JSON manifest next to it records counts, splits and the seed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "navlab/estimator.hpp"
#include "navlab/evaluation.hpp"
#include "navlab/maps.hpp"
#include "navlab/random.hpp"

namespace navlab {

enum class Split : std::uint32_t { train = 0, val = 1, test = 2 };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

inline Split parse_split(const std::string& s) {
  for (Split x : {Split::train, Split::val, Split::test})
    if (s == to_string(x)) return x;
  throw DataError("unknown split '" + s + "'");
}

struct LatentStep {
  int action = kIdleIndex;
  /// Ground-truth pose in the episode frame.
  Pose2 pose;
  /// The agent's own pose estimate in the episode frame.
  Pose2 estimate;
  std::vector<double> h;
  std::vector<std::uint8_t> occupancy;
};

struct LatentEpisode {
  std::string id;
  std::string map_id;
  Split split = Split::train;
  PolarGoal goal;
  Pose2 start;
  std::vector<LatentStep> steps;
};

struct LatentDataset {
  int h_dim = 0;
  /// Side of the occupancy target window (0: no targets).
  int occ_cells = 0;
  std::uint64_t seed = 0;
  std::vector<LatentEpisode> episodes;

  std::size_t rows() const {
    std::size_t n = 0;
    for (const LatentEpisode& e : episodes) n += e.steps.size();
    return n;
  }

  void validate() const {
    for (const LatentEpisode& e : episodes)
      for (const LatentStep& s : e.steps) {
        if (static_cast<int>(s.h.size()) != h_dim) throw DataError("latent dimension varies inside the dataset");
        if (s.occupancy.size() != static_cast<std::size_t>(occ_cells * occ_cells))
          throw DataError("occupancy target size varies inside the dataset");
      }
  }
};

/// Split tags for `n` episodes: a seeded shuffle cut 80/10/10.
inline std::vector<Split> assign_splits(std::size_t n, std::uint64_t seed, double train = 0.8, double val = 0.1) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed, {31});
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::lround(train * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::lround(val * static_cast<double>(n)));
  std::vector<Split> out(n, Split::test);
  for (std::size_t k = 0; k < n; ++k)
    out[order[k]] = k < n_train ? Split::train : (k < n_train + n_val ? Split::val : Split::test);
  return out;
}

/// Builds a dataset from logs that recorded latents. `maps` resolves map ids
/// for occupancy targets (may be empty when occ_cells is 0). Frame resets are
/// not allowed: poses are expressed in the episode's start frame.
inline LatentDataset dataset_from_logs(const std::vector<TrajectoryLog>& logs,
                                       const std::map<std::string, std::shared_ptr<const WorldMap>>& maps,
                                       std::uint64_t seed, int occ_cells = 0, double occ_resolution = 0.1) {
  LatentDataset ds;
  ds.seed = seed;
  ds.occ_cells = occ_cells;
  ds.h_dim = -1;
  const std::vector<Split> splits = assign_splits(logs.size(), seed);
  for (std::size_t l = 0; l < logs.size(); ++l) {
    const TrajectoryLog& log = logs[l];
    for (const LogEvent& e : log.events)
      if (e.kind == "frame_reset") throw DataError("latent datasets need logs without frame resets");
    const WorldMap* map = nullptr;
    if (occ_cells > 0) {
      const auto it = maps.find(log.episode.map_id);
      if (it == maps.end()) throw DataError("unknown map '" + log.episode.map_id + "' for occupancy targets");
      map = it->second.get();
    }
    LatentEpisode ep;
    ep.id = log.episode.id;
    ep.map_id = log.episode.map_id;
    ep.split = splits[l];
    ep.goal = log.episode.goal;
    ep.start = log.episode.start;
    for (const StepRecord& s : log.steps) {
      if (s.latent.size() < 4) throw DataError("log " + ep.id + " carries no latent state");
      if (ds.h_dim < 0) ds.h_dim = static_cast<int>(s.latent.size());
      if (static_cast<int>(s.latent.size()) != ds.h_dim) throw DataError("latent dimension varies across logs");
      LatentStep st;
      st.action = s.action;
      st.pose = to_frame(ep.start, s.state.pose());
      st.estimate = {s.latent[0], s.latent[1], std::atan2(s.latent[3], s.latent[2])};
      st.h = s.latent;
      if (map) st.occupancy = local_occupancy(map->grid(), s.state.pose(), occ_cells, occ_resolution);
      ep.steps.push_back(std::move(st));
    }
    ds.episodes.push_back(std::move(ep));
  }
  if (ds.h_dim < 0) ds.h_dim = 0;
  return ds;
}

struct CollectOptions {
  ExpertOptions expert;
  EstimatorOptions estimator;
  int occ_cells = 30;
  std::uint64_t seed = 0;
  int jobs = 0;
};

/// Runs the estimator-driven expert on `tasks` and records (h_t, p_t, a_t, g).
inline LatentDataset collect_latent_logs(const std::vector<Task>& tasks, const WorldConfig& world,
                                         const CollectOptions& opt) {
  EstimatorOptions est = opt.estimator;
  est.scan = world.scan;
  est.decision_dt = world.dynamics.decision_dt();
  const PolicyFactory factory = [&] { return std::make_unique<EstimatorExpertPolicy>(opt.expert, est); };
  HarnessOpts harness;
  harness.record_scan = false;
  const std::vector<TrajectoryLog> logs = run_tasks(tasks, world, factory, harness, opt.seed, opt.jobs);
  std::map<std::string, std::shared_ptr<const WorldMap>> maps;
  for (const Task& t : tasks) maps[t.map->id()] = t.map;
  return dataset_from_logs(logs, maps, opt.seed, opt.occ_cells, est.occ_resolution);
}

// ---------------------------------------------------------------------------
// Binary format

namespace detail {

class ByteWriter {
 public:
  template <class T>
  void put(const T& v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    bytes_.append(p, sizeof(T));
  }
  void put_string(const std::string& s) {
    if (s.size() > 0xffff) throw DataError("identifier too long for the dataset format");
    put(static_cast<std::uint16_t>(s.size()));
    bytes_.append(s);
  }
  void put_raw(const void* p, std::size_t n) { bytes_.append(static_cast<const char*>(p), n); }
  std::string& bytes() { return bytes_; }

 private:
  std::string bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::string& b) : b_(b) {}
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint16_t>();
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void get_raw(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, b_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw DataError("dataset file is truncated");
  }
  const std::string& b_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string dataset_to_bytes(const LatentDataset& ds) {
  ds.validate();
  detail::ByteWriter w;
  w.put_raw("NAVLATNT", 8);
  w.put(std::uint32_t{1});
  w.put(static_cast<std::uint32_t>(ds.h_dim));
  w.put(static_cast<std::uint32_t>(ds.occ_cells));
  w.put(static_cast<std::uint32_t>(ds.episodes.size()));
  std::vector<float> hf(static_cast<std::size_t>(ds.h_dim));
  for (const LatentEpisode& e : ds.episodes) {
    w.put(static_cast<std::uint32_t>(e.split));
    w.put(static_cast<std::uint32_t>(e.steps.size()));
    for (double v : {e.goal.rho, e.goal.phi, e.start.x, e.start.y, e.start.theta}) w.put(v);
    w.put_string(e.id);
    w.put_string(e.map_id);
    for (const LatentStep& s : e.steps) {
      w.put(static_cast<std::int32_t>(s.action));
      for (double v : {s.pose.x, s.pose.y, s.pose.theta, s.estimate.x, s.estimate.y, s.estimate.theta}) w.put(v);
      for (std::size_t k = 0; k < hf.size(); ++k) hf[k] = static_cast<float>(s.h[k]);
      w.put_raw(hf.data(), hf.size() * sizeof(float));
      w.put_raw(s.occupancy.data(), s.occupancy.size());
    }
  }
  return std::move(w.bytes());
}

inline LatentDataset dataset_from_bytes(const std::string& bytes) {
  detail::ByteReader r(bytes);
  char magic[8];
  r.get_raw(magic, 8);
  if (std::memcmp(magic, "NAVLATNT", 8) != 0) throw DataError("not a latent dataset file");
  if (r.get<std::uint32_t>() != 1) throw DataError("unsupported latent dataset version");
  LatentDataset ds;
  ds.h_dim = static_cast<int>(r.get<std::uint32_t>());
  ds.occ_cells = static_cast<int>(r.get<std::uint32_t>());
  const auto n_eps = r.get<std::uint32_t>();
  std::vector<float> hf(static_cast<std::size_t>(ds.h_dim));
  for (std::uint32_t k = 0; k < n_eps; ++k) {
    LatentEpisode e;
    const auto split = r.get<std::uint32_t>();
    if (split > 2) throw DataError("bad split tag in dataset");
    e.split = static_cast<Split>(split);
    const auto n = r.get<std::uint32_t>();
    e.goal.rho = r.get<double>();
    e.goal.phi = r.get<double>();
    e.start.x = r.get<double>();
    e.start.y = r.get<double>();
    e.start.theta = r.get<double>();
    e.id = r.get_string();
    e.map_id = r.get_string();
    for (std::uint32_t t = 0; t < n; ++t) {
      LatentStep s;
      s.action = r.get<std::int32_t>();
      if (!valid_command_index(s.action)) throw DataError("bad action index in dataset");
      s.pose.x = r.get<double>();
      s.pose.y = r.get<double>();
      s.pose.theta = r.get<double>();
      s.estimate.x = r.get<double>();
      s.estimate.y = r.get<double>();
      s.estimate.theta = r.get<double>();
      r.get_raw(hf.data(), hf.size() * sizeof(float));
      s.h.assign(hf.begin(), hf.end());
      s.occupancy.resize(static_cast<std::size_t>(ds.occ_cells * ds.occ_cells));
      r.get_raw(s.occupancy.data(), s.occupancy.size());
      e.steps.push_back(std::move(s));
    }
    ds.episodes.push_back(std::move(e));
  }
  if (!r.done()) throw DataError("trailing bytes after the dataset");
  return ds;
}

inline nlohmann::json dataset_manifest(const LatentDataset& ds, const std::string& data_file) {
  std::map<std::string, std::size_t> eps, rows;
  for (const LatentEpisode& e : ds.episodes) {
    ++eps[to_string(e.split)];
    rows[to_string(e.split)] += e.steps.size();
  }
  nlohmann::json splits = nlohmann::json::object();
  for (Split s : {Split::train, Split::val, Split::test})
    splits[to_string(s)] = {{"episodes", eps[to_string(s)]}, {"rows", rows[to_string(s)]}};
  return {{"format", "navlab-latent"}, {"version", 1},           {"data", data_file},
          {"h_dim", ds.h_dim},         {"occ_cells", ds.occ_cells}, {"episodes", ds.episodes.size()},
          {"rows", ds.rows()},         {"seed", ds.seed},        {"splits", splits}};
}

/// Writes `<stem>.bin` and `<stem>.json`.
inline void save_dataset(std::filesystem::path stem, const LatentDataset& ds) {
  if (stem.extension() == ".bin" || stem.extension() == ".json") stem.replace_extension();
  write_file_atomic(stem.string() + ".bin", dataset_to_bytes(ds));
  auto m = dataset_manifest(ds, stem.filename().string() + ".bin");
  write_file_atomic(stem.string() + ".json", m.dump(2) + "\n");
}

inline LatentDataset load_dataset(std::filesystem::path stem) {
  if (stem.extension() == ".bin" || stem.extension() == ".json") stem.replace_extension();
  LatentDataset ds = dataset_from_bytes(read_file(stem.string() + ".bin"));
  const std::filesystem::path manifest = stem.string() + ".json";
  if (std::filesystem::exists(manifest)) {
    try {
      const auto m = nlohmann::json::parse(read_file(manifest));
      ds.seed = m.value("seed", std::uint64_t{0});
      if (m.value("h_dim", ds.h_dim) != ds.h_dim) throw DataError("manifest and dataset disagree on h_dim");
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("dataset manifest: ") + e.what());
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Numerics shared by the probes

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Per-feature standardization; constant features map to zero.
struct Standardizer {
  VectorXd mean;
  VectorXd scale;

  static Standardizer fit(const MatrixXd& x) {
    Standardizer s;
    s.mean = x.colwise().mean();
    s.scale.resize(x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double sd = std::sqrt((x.col(c).array() - s.mean(c)).square().mean());
      s.scale(c) = sd > 1e-9 ? 1.0 / sd : 0.0;
    }
    return s;
  }
  VectorXd apply(const VectorXd& h) const { return (h - mean).cwiseProduct(scale); }
  MatrixXd apply(const MatrixXd& x) const {
    return (x.rowwise() - mean.transpose()).array().rowwise() * scale.transpose().array();
  }
};

/// Ridge regression with an unregularized intercept: returns W with
/// y ~ W^T [x; 1]. Raises the penalty when the normal equations are singular.
inline MatrixXd ridge_fit(const MatrixXd& x, const MatrixXd& y, double lambda) {
  const Eigen::Index n = x.rows(), d = x.cols();
  MatrixXd xa(n, d + 1);
  xa << x, MatrixXd::Ones(n, 1);
  MatrixXd a = xa.transpose() * xa;
  const MatrixXd b = xa.transpose() * y;
  for (double lam = lambda;; lam = std::max(lam * 10.0, 1e-9)) {
    MatrixXd reg = a;
    for (Eigen::Index k = 0; k < d; ++k) reg(k, k) += lam;
    Eigen::LDLT<MatrixXd> ldlt(reg);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
      MatrixXd w = ldlt.solve(b);
      if (w.allFinite() && (reg * w - b).norm() <= 1e-6 * (1.0 + b.norm())) return w;
    }
    if (lam > 1e12) throw DataError("ridge regression failed");
  }
}

inline VectorXd affine_apply(const MatrixXd& w, const VectorXd& x) {
  return w.topRows(x.size()).transpose() * x + w.row(x.size()).transpose();
}

/// One hidden layer, tanh activation, linear output.
struct Mlp {
  MatrixXd w1;
  VectorXd b1;
  MatrixXd w2;
  VectorXd b2;

  static Mlp init(int in, int hidden, int out, Rng& rng, double out_scale = 1.0) {
    std::normal_distribution<double> n01(0.0, 1.0);
    Mlp m;
    m.w1 = MatrixXd::NullaryExpr(hidden, in, [&] { return n01(rng) / std::sqrt(static_cast<double>(in)); });
    m.b1 = VectorXd::Zero(hidden);
    m.w2 = MatrixXd::NullaryExpr(out, hidden,
                                 [&] { return out_scale * n01(rng) / std::sqrt(static_cast<double>(hidden)); });
    m.b2 = VectorXd::Zero(out);
    return m;
  }

  struct Cache {
    VectorXd x;
    VectorXd a;  // tanh activations
  };

  VectorXd forward(const VectorXd& x, Cache* cache = nullptr) const {
    VectorXd a = (w1 * x + b1).array().tanh().matrix();
    VectorXd y = w2 * a + b2;
    if (cache) *cache = {x, std::move(a)};
    return y;
  }

  /// Accumulates dL/dparams into `g` given dL/dy; returns dL/dx.
  VectorXd backward(const Cache& c, const VectorXd& dy, Mlp& g) const {
    g.w2.noalias() += dy * c.a.transpose();
    g.b2 += dy;
    const VectorXd da = w2.transpose() * dy;
    const VectorXd dz = da.array() * (1.0 - c.a.array().square());
    g.w1.noalias() += dz * c.x.transpose();
    g.b1 += dz;
    return w1.transpose() * dz;
  }

  Mlp zeros_like() const {
    return {MatrixXd::Zero(w1.rows(), w1.cols()), VectorXd::Zero(b1.size()), MatrixXd::Zero(w2.rows(), w2.cols()),
            VectorXd::Zero(b2.size())};
  }

  std::size_t num_params() const { return static_cast<std::size_t>(w1.size() + b1.size() + w2.size() + b2.size()); }

  /// Visits every parameter (read-write) in a fixed order.
  template <class F>
  void for_each_param(F&& f) {
    for (Eigen::Index k = 0; k < w1.size(); ++k) f(w1.data()[k]);
    for (Eigen::Index k = 0; k < b1.size(); ++k) f(b1.data()[k]);
    for (Eigen::Index k = 0; k < w2.size(); ++k) f(w2.data()[k]);
    for (Eigen::Index k = 0; k < b2.size(); ++k) f(b2.data()[k]);
  }
};

/// Adam state for a flat parameter list.
struct Adam {
  double lr = 1e-4, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<double> m, v;
  long step = 0;

  void update(std::vector<double*>& params, const std::vector<double>& grads) {
    if (m.empty()) {
      m.assign(params.size(), 0.0);
      v.assign(params.size(), 0.0);
    }
    ++step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (std::size_t k = 0; k < params.size(); ++k) {
      m[k] = beta1 * m[k] + (1 - beta1) * grads[k];
      v[k] = beta2 * v[k] + (1 - beta2) * grads[k] * grads[k];
      *params[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
    }
  }
};

/// Pose target (x, y, cos theta, sin theta).
inline VectorXd pose_target(const Pose2& p) {
  VectorXd y(4);
  y << p.x, p.y, std::cos(p.theta), std::sin(p.theta);
  return y;
}

inline Pose2 pose_from_target(const VectorXd& y) { return {y(0), y(1), std::atan2(y(3), y(2))}; }

/// Squared position error plus L1 error of (cos, sin); gradient into `grad`.
inline double pose_loss(const VectorXd& pred, const VectorXd& target, VectorXd* grad = nullptr) {
  const VectorXd d = pred - target;
  const double loss = d(0) * d(0) + d(1) * d(1) + std::abs(d(2)) + std::abs(d(3));
  if (grad) {
    grad->resize(4);
    *grad << 2.0 * d(0), 2.0 * d(1), (d(2) > 0) - (d(2) < 0), (d(3) > 0) - (d(3) < 0);
  }
  return loss;
}

/// Spearman rank correlation (average ranks for ties).
inline double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("spearman needs two equal series of length >= 2");
  auto ranks = [](std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> r(v.size());
    for (std::size_t k = 0; k < idx.size();) {
      std::size_t e = k;
      while (e + 1 < idx.size() && v[idx[e + 1]] == v[idx[k]]) ++e;
      for (std::size_t q = k; q <= e; ++q) r[idx[q]] = 0.5 * static_cast<double>(k + e) + 1.0;
      k = e + 1;
    }
    return r;
  };
  const std::vector<double> ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n, mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double num = 0, da = 0, db = 0;
  for (std::size_t k = 0; k < ra.size(); ++k) {
    num += (ra[k] - ma) * (rb[k] - mb);
    da += (ra[k] - ma) * (ra[k] - ma);
    db += (rb[k] - mb) * (rb[k] - mb);
  }
  if (da == 0.0 || db == 0.0) return 0.0;
  return num / std::sqrt(da * db);
}

// ---------------------------------------------------------------------------
// Pose probes

enum class ProbeVariant { linear, linear_prev_action, latent_rollout };

inline const char* to_string(ProbeVariant v) {
  switch (v) {
    case ProbeVariant::linear: return "linear";
    case ProbeVariant::linear_prev_action: return "linear_prev_action";
    case ProbeVariant::latent_rollout: return "latent_rollout";
  }
  return "linear";
}

inline ProbeVariant parse_probe_variant(const std::string& s) {
  for (ProbeVariant v : {ProbeVariant::linear, ProbeVariant::linear_prev_action, ProbeVariant::latent_rollout})
    if (s == to_string(v)) return v;
  throw DataError("unknown probe variant '" + s + "'");
}

struct ProbeOptions {
  ProbeVariant variant = ProbeVariant::linear;
  int horizon = 20;
  /// Ridge penalty per training row.
  double ridge = 1e-4;
  double learning_rate = 1e-4;
  int batch = 64;
  int iterations = 2000;
  int hidden = 64;
  int embedding = 8;
  /// Latent dimensions the probe reads (0: all).
  int input_dims = 0;
  /// Latent dimensions the rollout transition acts on (0: all read dims).
  int rollout_dims = 0;
  std::uint64_t seed = 0;
  /// Command scale for the action features.
  double v_max = 1.0;
  double omega_max = 1.0;
};

/// A training or evaluation window: episode index and start step.
struct Window {
  std::size_t episode;
  std::size_t t;
};

inline std::vector<Window> probe_windows(const LatentDataset& ds, Split split, int horizon) {
  std::vector<Window> w;
  for (std::size_t e = 0; e < ds.episodes.size(); ++e) {
    const LatentEpisode& ep = ds.episodes[e];
    if (ep.split != split) continue;
    for (std::size_t t = 0; t + static_cast<std::size_t>(horizon) < ep.steps.size(); ++t) w.push_back({e, t});
  }
  return w;
}

/// Action-goal features fed to the embedding network.
inline VectorXd action_goal_features(int action, const PolarGoal& g, double v_max, double omega_max) {
  const Command c = resolve_command(action, DynParams{.v_max = v_max, .omega_max = omega_max});
  VectorXd f(6);
  f << c.a_v / v_max, c.a_omega / omega_max, c.is_stop() ? 1.0 : 0.0, g.rho / 10.0, std::cos(g.phi), std::sin(g.phi);
  return f;
}

class ProbeModel {
 public:
  ProbeVariant variant = ProbeVariant::linear;
  int horizon = 1;
  int input_dims = 0;
  double v_max = 1.0, omega_max = 1.0;
  Standardizer norm;
  /// linear, linear_prev_action: one (d [+ e] + 1) x 4 map per horizon.
  std::vector<MatrixXd> heads;
  /// linear_prev_action: embedding network over (a, g).
  Mlp embed;
  /// latent_rollout: transition on the first `rollout_dims` standardized
  /// dims s' = W^T [s; 1] + psi(s), and a readout phi = (r + 1) x 4.
  int rollout_dims = 0;
  MatrixXd transition;
  Mlp psi;
  MatrixXd readout;

  VectorXd features(const std::vector<double>& h) const {
    if (static_cast<int>(h.size()) < input_dims) throw DataError("latent shorter than the probe input");
    return norm.apply(Eigen::Map<const VectorXd>(h.data(), input_dims).eval());
  }

  /// Predicted poses for horizons 1..horizon (0..horizon for latent_rollout
  /// when `include_now`). `future_actions[i-1]` is a_{t+i-1}; only the
  /// action-conditioned variant reads them.
  std::vector<Pose2> predict(const std::vector<double>& h, std::span<const int> future_actions, const PolarGoal& goal,
                             int steps = -1) const {
    if (steps < 0) steps = horizon;
    const VectorXd x = features(h);
    std::vector<Pose2> out;
    if (variant == ProbeVariant::latent_rollout) {
      VectorXd s = x.head(rollout_dims);
      for (int i = 1; i <= steps; ++i) {
        s = step_latent(s);
        out.push_back(pose_from_target(affine_apply(readout, s)));
      }
      return out;
    }
    if (steps > horizon) throw DataError("probe horizon exceeded");
    for (int i = 1; i <= steps; ++i) out.push_back(pose_from_target(head_output(x, i, future_actions, goal)));
    return out;
  }

  /// Readout of the current latent (horizon 0 of the rollout variant).
  Pose2 readout_now(const std::vector<double>& h) const {
    if (variant != ProbeVariant::latent_rollout) throw DataError("only the rollout probe reads out the present");
    return pose_from_target(affine_apply(readout, features(h).head(rollout_dims)));
  }

  VectorXd step_latent(const VectorXd& s) const { return affine_apply(transition, s) + psi.forward(s); }

  VectorXd head_input(const VectorXd& x, int i, std::span<const int> actions, const PolarGoal& goal,
                      Mlp::Cache* cache = nullptr) const {
    if (variant == ProbeVariant::linear) return x;
    if (static_cast<int>(actions.size()) < i) throw DataError("action-conditioned probe needs future actions");
    const VectorXd e = embed.forward(action_goal_features(actions[static_cast<std::size_t>(i - 1)], goal, v_max, omega_max), cache);
    VectorXd z(x.size() + e.size());
    z << x, e;
    return z;
  }

  VectorXd head_output(const VectorXd& x, int i, std::span<const int> actions, const PolarGoal& goal) const {
    return affine_apply(heads[static_cast<std::size_t>(i - 1)], head_input(x, i, actions, goal));
  }

  nlohmann::json to_json() const;
  static ProbeModel from_json(const nlohmann::json& j);
};

namespace detail {

inline nlohmann::json mat_json(const MatrixXd& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}
inline MatrixXd mat_from(const nlohmann::json& j) {
  const auto r = j.at("rows").get<Eigen::Index>(), c = j.at("cols").get<Eigen::Index>();
  const auto d = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(d.size()) != r * c) throw DataError("matrix payload size mismatch");
  return Eigen::Map<const MatrixXd>(d.data(), r, c);
}
inline nlohmann::json mlp_json(const Mlp& m) {
  return {{"w1", mat_json(m.w1)}, {"b1", mat_json(m.b1)}, {"w2", mat_json(m.w2)}, {"b2", mat_json(m.b2)}};
}
inline Mlp mlp_from(const nlohmann::json& j) {
  return {mat_from(j.at("w1")), mat_from(j.at("b1")), mat_from(j.at("w2")), mat_from(j.at("b2"))};
}

}  // namespace detail

inline nlohmann::json ProbeModel::to_json() const {
  nlohmann::json hs = nlohmann::json::array();
  for (const MatrixXd& h : heads) hs.push_back(detail::mat_json(h));
  nlohmann::json j{{"variant", to_string(variant)}, {"horizon", horizon},           {"input_dims", input_dims},
                   {"v_max", v_max},                {"omega_max", omega_max},       {"mean", detail::mat_json(norm.mean)},
                   {"scale", detail::mat_json(norm.scale)}, {"heads", hs},          {"rollout_dims", rollout_dims}};
  if (variant == ProbeVariant::linear_prev_action) j["embed"] = detail::mlp_json(embed);
  if (variant == ProbeVariant::latent_rollout) {
    j["transition"] = detail::mat_json(transition);
    j["psi"] = detail::mlp_json(psi);
    j["readout"] = detail::mat_json(readout);
  }
  return j;
}

inline ProbeModel ProbeModel::from_json(const nlohmann::json& j) {
  try {
    ProbeModel m;
    m.variant = parse_probe_variant(j.at("variant").get<std::string>());
    m.horizon = j.at("horizon").get<int>();
    m.input_dims = j.at("input_dims").get<int>();
    m.v_max = j.at("v_max").get<double>();
    m.omega_max = j.at("omega_max").get<double>();
    m.norm.mean = detail::mat_from(j.at("mean"));
    m.norm.scale = detail::mat_from(j.at("scale"));
    for (const auto& h : j.at("heads")) m.heads.push_back(detail::mat_from(h));
    m.rollout_dims = j.at("rollout_dims").get<int>();
    if (m.variant == ProbeVariant::linear_prev_action) m.embed = detail::mlp_from(j.at("embed"));
    if (m.variant == ProbeVariant::latent_rollout) {
      m.transition = detail::mat_from(j.at("transition"));
      m.psi = detail::mlp_from(j.at("psi"));
      m.readout = detail::mat_from(j.at("readout"));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("probe model: ") + e.what());
  }
}

namespace detail {

inline std::vector<int> window_actions(const LatentEpisode& ep, std::size_t t, int horizon) {
  std::vector<int> a;
  for (int i = 0; i < horizon; ++i) a.push_back(ep.steps[t + static_cast<std::size_t>(i)].action);
  return a;
}

inline MatrixXd gather_inputs(const LatentDataset& ds, const std::vector<Window>& w, int dims) {
  MatrixXd x(static_cast<Eigen::Index>(w.size()), dims);
  for (std::size_t r = 0; r < w.size(); ++r) {
    const std::vector<double>& h = ds.episodes[w[r].episode].steps[w[r].t].h;
    for (int c = 0; c < dims; ++c) x(static_cast<Eigen::Index>(r), c) = h[static_cast<std::size_t>(c)];
  }
  return x;
}

}  // namespace detail

/// Probe loss of the action-conditioned model on a set of windows, with the
/// gradient w.r.t. the embedding network and the heads.
inline double prev_action_loss(const ProbeModel& m, const LatentDataset& ds, std::span<const Window> batch,
                               Mlp* g_embed = nullptr, std::vector<MatrixXd>* g_heads = nullptr) {
  double loss = 0.0;
  for (const Window& w : batch) {
    const LatentEpisode& ep = ds.episodes[w.episode];
    const VectorXd x = m.features(ep.steps[w.t].h);
    const std::vector<int> actions = detail::window_actions(ep, w.t, m.horizon);
    for (int i = 1; i <= m.horizon; ++i) {
      Mlp::Cache cache;
      const VectorXd z = m.head_input(x, i, actions, ep.goal, &cache);
      const MatrixXd& head = m.heads[static_cast<std::size_t>(i - 1)];
      const VectorXd pred = affine_apply(head, z);
      VectorXd dy;
      loss += pose_loss(pred, pose_target(ep.steps[w.t + static_cast<std::size_t>(i)].pose), g_embed ? &dy : nullptr);
      if (!g_embed) continue;
      MatrixXd& gh = (*g_heads)[static_cast<std::size_t>(i - 1)];
      gh.topRows(z.size()).noalias() += z * dy.transpose();
      gh.row(z.size()) += dy.transpose();
      const VectorXd dz = head.topRows(z.size()) * dy;
      m.embed.backward(cache, dz.tail(m.embed.b2.size()), *g_embed);
    }
  }
  return loss / static_cast<double>(std::max<std::size_t>(1, batch.size()));
}

/// Fits the probe on the train split. The linear variant is closed form;
/// the action-conditioned heads start from it and are refined with Adam
/// together with the embedding network; the rollout variant fits its linear
/// transition and readout in closed form and the correction network psi with
/// Adam on one-step residuals.
inline ProbeModel train_probe(const LatentDataset& ds, const ProbeOptions& opt) {
  ds.validate();
  if (opt.horizon < 1) throw DataError("probe horizon must be >= 1");
  const std::vector<Window> windows = probe_windows(ds, Split::train, opt.horizon);
  if (windows.empty()) throw DataError("no training episode is longer than the probe horizon");
  ProbeModel m;
  m.variant = opt.variant;
  m.horizon = opt.horizon;
  m.input_dims = opt.input_dims > 0 ? std::min(opt.input_dims, ds.h_dim) : ds.h_dim;
  m.v_max = opt.v_max;
  m.omega_max = opt.omega_max;
  const MatrixXd raw = detail::gather_inputs(ds, windows, m.input_dims);
  m.norm = Standardizer::fit(raw);
  const MatrixXd x = m.norm.apply(raw);
  const double lambda = opt.ridge * static_cast<double>(windows.size());
  Rng rng = make_rng(opt.seed, {41});

  if (opt.variant == ProbeVariant::latent_rollout) {
    m.rollout_dims = opt.rollout_dims > 0 ? std::min(opt.rollout_dims, m.input_dims) : m.input_dims;
    const int r = m.rollout_dims;
    // Consecutive pairs (s_t, s_{t+1}) inside training episodes.
    std::vector<Window> pairs = probe_windows(ds, Split::train, 1);
    MatrixXd s0 = m.norm.apply(detail::gather_inputs(ds, pairs, m.input_dims)).leftCols(r);
    std::vector<Window> next = pairs;
    for (Window& w : next) ++w.t;
    MatrixXd s1 = m.norm.apply(detail::gather_inputs(ds, next, m.input_dims)).leftCols(r);
    m.transition = ridge_fit(s0, s1, lambda);
    MatrixXd targets(s0.rows(), 4);
    for (std::size_t k = 0; k < pairs.size(); ++k)
      targets.row(static_cast<Eigen::Index>(k)) =
          pose_target(ds.episodes[pairs[k].episode].steps[pairs[k].t].pose).transpose();
    m.readout = ridge_fit(s0, targets, lambda);
    m.psi = Mlp::init(r, opt.hidden, r, rng, 0.0);
    Mlp g = m.psi.zeros_like();
    std::vector<double*> params;
    m.psi.for_each_param([&](double& p) { params.push_back(&p); });
    Adam adam;
    adam.lr = opt.learning_rate;
    std::uniform_int_distribution<Eigen::Index> pick(0, s0.rows() - 1);
    for (int it = 0; it < opt.iterations; ++it) {
      g = m.psi.zeros_like();
      for (int b = 0; b < opt.batch; ++b) {
        const Eigen::Index k = pick(rng);
        const VectorXd s = s0.row(k).transpose();
        Mlp::Cache cache;
        const VectorXd resid = affine_apply(m.transition, s) + m.psi.forward(s, &cache) - s1.row(k).transpose();
        m.psi.backward(cache, 2.0 * resid / opt.batch, g);
      }
      std::vector<double> grads;
      grads.reserve(params.size());
      g.for_each_param([&](double& v) { grads.push_back(v); });
      adam.update(params, grads);
    }
    return m;
  }

  MatrixXd y(x.rows(), 4 * opt.horizon);
  for (std::size_t k = 0; k < windows.size(); ++k) {
    const LatentEpisode& ep = ds.episodes[windows[k].episode];
    for (int i = 1; i <= opt.horizon; ++i)
      y.block(static_cast<Eigen::Index>(k), 4 * (i - 1), 1, 4) =
          pose_target(ep.steps[windows[k].t + static_cast<std::size_t>(i)].pose).transpose();
  }
  const MatrixXd w = ridge_fit(x, y, lambda);
  for (int i = 0; i < opt.horizon; ++i) m.heads.push_back(w.middleCols(4 * i, 4));
  if (opt.variant == ProbeVariant::linear) return m;

  // Action-conditioned: append zero-initialized embedding rows to each head.
  m.embed = Mlp::init(6, opt.hidden, opt.embedding, rng);
  const Eigen::Index d = m.input_dims, e = opt.embedding;
  for (MatrixXd& h : m.heads) {
    MatrixXd grown = MatrixXd::Zero(d + e + 1, 4);
    grown.topRows(d) = h.topRows(d);
    grown.row(d + e) = h.row(d);
    h = grown;
  }
  std::vector<double*> params;
  m.embed.for_each_param([&](double& p) { params.push_back(&p); });
  for (MatrixXd& h : m.heads)
    for (Eigen::Index k = 0; k < h.size(); ++k) params.push_back(h.data() + k);
  Adam adam;
  adam.lr = opt.learning_rate;
  std::uniform_int_distribution<std::size_t> pick(0, windows.size() - 1);
  std::vector<Window> batch(static_cast<std::size_t>(opt.batch));
  for (int it = 0; it < opt.iterations; ++it) {
    for (Window& b : batch) b = windows[pick(rng)];
    Mlp g_embed = m.embed.zeros_like();
    std::vector<MatrixXd> g_heads;
    for (const MatrixXd& h : m.heads) g_heads.push_back(MatrixXd::Zero(h.rows(), h.cols()));
    prev_action_loss(m, ds, batch, &g_embed, &g_heads);
    std::vector<double> grads;
    grads.reserve(params.size());
    const double inv = 1.0 / static_cast<double>(batch.size());
    g_embed.for_each_param([&](double& v) { grads.push_back(v * inv); });
    for (MatrixXd& gh : g_heads)
      for (Eigen::Index k = 0; k < gh.size(); ++k) grads.push_back(gh.data()[k] * inv);
    adam.update(params, grads);
  }
  return m;
}

/// Full-batch gradient descent on the squared-error ridge objective of a
/// single horizon; used to cross-check the closed-form fit.
inline MatrixXd ridge_fit_gd(const MatrixXd& x, const MatrixXd& y, double lambda, int iterations, double step) {
  const Eigen::Index n = x.rows(), d = x.cols();
  MatrixXd xa(n, d + 1);
  xa << x, MatrixXd::Ones(n, 1);
  MatrixXd w = MatrixXd::Zero(d + 1, y.cols());
  for (int it = 0; it < iterations; ++it) {
    MatrixXd g = 2.0 * xa.transpose() * (xa * w - y);
    g.topRows(d) += 2.0 * lambda * w.topRows(d);
    w -= step * g;
  }
  return w;
}

struct ProbeEvaluation {
  std::vector<double> position_error;
  std::vector<double> angle_error;
  std::size_t windows = 0;

  double mean_position() const {
    return std::accumulate(position_error.begin(), position_error.end(), 0.0) /
           static_cast<double>(std::max<std::size_t>(1, position_error.size()));
  }
  double mean_angle() const {
    return std::accumulate(angle_error.begin(), angle_error.end(), 0.0) /
           static_cast<double>(std::max<std::size_t>(1, angle_error.size()));
  }
};

inline ProbeEvaluation evaluate_probe(const ProbeModel& m, const LatentDataset& ds, Split split) {
  const std::vector<Window> windows = probe_windows(ds, split, m.horizon);
  if (windows.empty()) throw DataError(std::string("no ") + to_string(split) + " episode is longer than the horizon");
  ProbeEvaluation ev;
  ev.windows = windows.size();
  ev.position_error.assign(static_cast<std::size_t>(m.horizon), 0.0);
  ev.angle_error.assign(static_cast<std::size_t>(m.horizon), 0.0);
  for (const Window& w : windows) {
    const LatentEpisode& ep = ds.episodes[w.episode];
    const std::vector<int> actions = detail::window_actions(ep, w.t, m.horizon);
    const std::vector<Pose2> pred = m.predict(ep.steps[w.t].h, actions, ep.goal);
    for (int i = 1; i <= m.horizon; ++i) {
      const Pose2& truth = ep.steps[w.t + static_cast<std::size_t>(i)].pose;
      const Pose2& p = pred[static_cast<std::size_t>(i - 1)];
      ev.position_error[static_cast<std::size_t>(i - 1)] += (p.position() - truth.position()).norm();
      ev.angle_error[static_cast<std::size_t>(i - 1)] += std::abs(wrap_angle(p.theta - truth.theta));
    }
  }
  for (double& e : ev.position_error) e /= static_cast<double>(windows.size());
  for (double& e : ev.angle_error) e /= static_cast<double>(windows.size());
  return ev;
}

inline std::string probe_report_csv(const ProbeEvaluation& ev) {
  std::ostringstream out;
  out << std::setprecision(10) << "horizon,position_error_m,angle_error_rad\n";
  for (std::size_t i = 0; i < ev.position_error.size(); ++i)
    out << i + 1 << ',' << ev.position_error[i] << ',' << ev.angle_error[i] << '\n';
  out << "mean," << ev.mean_position() << ',' << ev.mean_angle() << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// Occupancy probe

struct OccupancyProbe {
  int cells = 30;
  Standardizer norm;
  /// (d + 1) x cells^2 affine scores.
  MatrixXd weights;

  /// Per-cell scores; a cell is predicted occupied when its score > 0.5.
  VectorXd scores(const std::vector<double>& h) const {
    return affine_apply(weights, norm.apply(Eigen::Map<const VectorXd>(h.data(), norm.mean.size()).eval()));
  }
};

struct OccupancyReport {
  OccupancyProbe probe;
  /// Per-cell accuracy on the evaluation split, accumulator layout.
  std::vector<double> cell_accuracy;
  double accuracy = 0.0;
  /// Accuracy of predicting every cell free.
  double all_free_accuracy = 0.0;
  std::size_t rows = 0;
};

inline OccupancyReport probe_occupancy(const LatentDataset& ds, double ridge = 1e-3, Split eval = Split::val) {
  ds.validate();
  if (ds.occ_cells <= 0) throw DataError("dataset has no occupancy targets");
  const int n_cells = ds.occ_cells * ds.occ_cells;
  auto gather = [&](Split split, MatrixXd& x, MatrixXd& y) {
    std::vector<const LatentStep*> rows;
    for (const LatentEpisode& e : ds.episodes)
      if (e.split == split)
        for (const LatentStep& s : e.steps) rows.push_back(&s);
    x.resize(static_cast<Eigen::Index>(rows.size()), ds.h_dim);
    y.resize(static_cast<Eigen::Index>(rows.size()), n_cells);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      x.row(static_cast<Eigen::Index>(r)) = Eigen::Map<const VectorXd>(rows[r]->h.data(), ds.h_dim).transpose();
      for (int c = 0; c < n_cells; ++c)
        y(static_cast<Eigen::Index>(r), c) = rows[r]->occupancy[static_cast<std::size_t>(c)];
    }
  };
  MatrixXd xt, yt, xv, yv;
  gather(Split::train, xt, yt);
  gather(eval, xv, yv);
  if (xt.rows() == 0 || xv.rows() == 0) throw DataError("occupancy probe needs train and evaluation rows");
  OccupancyReport rep;
  rep.probe.cells = ds.occ_cells;
  rep.probe.norm = Standardizer::fit(xt);
  rep.probe.weights = ridge_fit(rep.probe.norm.apply(xt), yt, ridge * static_cast<double>(xt.rows()));
  const MatrixXd xs = rep.probe.norm.apply(xv);
  MatrixXd pred = xs * rep.probe.weights.topRows(ds.h_dim);
  pred.rowwise() += rep.probe.weights.row(ds.h_dim);
  rep.cell_accuracy.assign(static_cast<std::size_t>(n_cells), 0.0);
  double correct = 0, free = 0;
  for (Eigen::Index r = 0; r < xv.rows(); ++r)
    for (int c = 0; c < n_cells; ++c) {
      const bool truth = yv(r, c) > 0.5;
      const bool hit = (pred(r, c) > 0.5) == truth;
      rep.cell_accuracy[static_cast<std::size_t>(c)] += hit;
      correct += hit;
      free += !truth;
    }
  for (double& a : rep.cell_accuracy) a /= static_cast<double>(xv.rows());
  rep.rows = static_cast<std::size_t>(xv.rows());
  rep.accuracy = correct / static_cast<double>(xv.rows() * n_cells);
  rep.all_free_accuracy = free / static_cast<double>(xv.rows() * n_cells);
  return rep;
}

/// Accuracy raster in the robot frame (cell (a, b) at robot-frame position).
inline Raster<double> accuracy_raster(const OccupancyReport& rep, double resolution = 0.1) {
  const int n = rep.probe.cells;
  GridGeometry g{n, n, resolution, {-0.5 * n * resolution, -0.5 * n * resolution}};
  Raster<double> r(g, 0.0);
  for (int b = 0; b < n; ++b)
    for (int a = 0; a < n; ++a) r.at(a, b) = rep.cell_accuracy[static_cast<std::size_t>(b * n + a)];
  return r;
}

/// Cell with the lowest accuracy, as (a, b).
inline std::pair<int, int> worst_cell(const OccupancyReport& rep) {
  const auto it = std::min_element(rep.cell_accuracy.begin(), rep.cell_accuracy.end());
  const int k = static_cast<int>(it - rep.cell_accuracy.begin());
  return {k % rep.probe.cells, k / rep.probe.cells};
}

/// Mean predicted occupancy re-projected into the world frame of `geometry`
/// using the logged pose estimates of episodes on `map_id`. Unvisited cells
/// are NaN.
inline Raster<double> world_occupancy(const OccupancyReport& rep, const LatentDataset& ds, const std::string& map_id,
                                      const GridGeometry& geometry, double resolution = 0.1) {
  Raster<double> sum(geometry, 0.0), count(geometry, 0.0);
  const int n = rep.probe.cells;
  const double half = 0.5 * n;
  for (const LatentEpisode& e : ds.episodes) {
    if (e.map_id != map_id) continue;
    for (const LatentStep& s : e.steps) {
      const VectorXd sc = rep.probe.scores(s.h);
      const Pose2 world = from_frame(e.start, s.estimate);
      for (int b = 0; b < n; ++b)
        for (int a = 0; a < n; ++a) {
          const Pose2 p = from_frame(world, Pose2{(a + 0.5 - half) * resolution, (b + 0.5 - half) * resolution, 0.0});
          const CellIndex c = geometry.cell_of(p.position());
          if (!geometry.in_bounds(c.i, c.j)) continue;
          sum.at(c.i, c.j) += std::clamp(sc(b * n + a), 0.0, 1.0);
          count.at(c.i, c.j) += 1.0;
        }
    }
  }
  for (std::size_t k = 0; k < sum.data.size(); ++k)
    sum.data[k] = count.data[k] > 0 ? sum.data[k] / count.data[k] : std::numeric_limits<double>::quiet_NaN();
  return sum;
}

}  // namespace navlab
