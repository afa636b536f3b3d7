#include <gtest/gtest.h>

#include <random>

#include "navlab/episodes.hpp"
#include "navlab/maps.hpp"
#include "navlab/probing.hpp"

namespace navlab {
namespace {

/// Straight constant-velocity episodes whose latent is (x, y, cos, sin, vx, vy).
LatentDataset constant_velocity_dataset(int episodes, int steps, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> act(0, kNumMotionCommands - 1);
  LatentDataset ds;
  ds.h_dim = 6;
  ds.seed = seed;
  const std::vector<Split> splits = assign_splits(static_cast<std::size_t>(episodes), seed);
  for (int e = 0; e < episodes; ++e) {
    LatentEpisode ep;
    ep.id = "ep" + std::to_string(e);
    ep.map_id = "synthetic";
    ep.split = splits[static_cast<std::size_t>(e)];
    ep.goal = {2.0 + u(rng), u(rng)};
    const double th = kPi * u(rng), speed = 0.1 + 0.2 * (u(rng) + 1.0);
    const double vx = speed * std::cos(th), vy = speed * std::sin(th);
    double x = u(rng), y = u(rng);
    for (int t = 0; t < steps; ++t, x += vx, y += vy) {
      LatentStep s;
      s.action = act(rng);
      s.pose = {x, y, th};
      s.estimate = s.pose;
      s.h = {x, y, std::cos(th), std::sin(th), vx, vy};
      ep.steps.push_back(s);
    }
    ds.episodes.push_back(ep);
  }
  return ds;
}

double relative_error(double a, double b) { return std::abs(a - b) / std::max({1e-8, std::abs(a), std::abs(b)}); }

TEST(Probing, HiddenLayerGradientMatchesFiniteDifferences) {
  Rng rng = make_rng(1, {});
  Mlp m = Mlp::init(6, 64, 8, rng);
  std::normal_distribution<double> n01;
  VectorXd x(6), c(8);
  for (auto& v : x) v = n01(rng);
  for (auto& v : c) v = n01(rng);
  // L = c . f(x)
  auto loss = [&](const Mlp& net, const VectorXd& in) { return c.dot(net.forward(in)); };
  Mlp g = m.zeros_like();
  Mlp::Cache cache;
  m.forward(x, &cache);
  const VectorXd dx = m.backward(cache, c, g);
  std::vector<double> analytic;
  g.for_each_param([&](double& v) { analytic.push_back(v); });
  std::size_t k = 0;
  double worst = 0.0;
  const double h = 1e-6;
  m.for_each_param([&](double& p) {
    const double saved = p;
    p = saved + h;
    const double up = loss(m, x);
    p = saved - h;
    const double down = loss(m, x);
    p = saved;
    const double fd = (up - down) / (2 * h);
    if (std::abs(fd) > 1e-6 || std::abs(analytic[k]) > 1e-6) worst = std::max(worst, relative_error(fd, analytic[k]));
    ++k;
  });
  EXPECT_LE(worst, 1e-4);
  for (int i = 0; i < 6; ++i) {
    VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    EXPECT_LE(relative_error((loss(m, xp) - loss(m, xm)) / (2 * h), dx(i)), 1e-4);
  }
}

TEST(Probing, ActionConditionedLossGradientMatchesFiniteDifferences) {
  const LatentDataset ds = constant_velocity_dataset(10, 12, 2);
  ProbeOptions opt;
  opt.variant = ProbeVariant::linear_prev_action;
  opt.horizon = 3;
  opt.iterations = 5;
  ProbeModel m = train_probe(ds, opt);
  const std::vector<Window> batch = probe_windows(ds, Split::train, 3);
  const std::span<const Window> few(batch.data(), 8);
  Mlp g_embed = m.embed.zeros_like();
  std::vector<MatrixXd> g_heads;
  for (const MatrixXd& h : m.heads) g_heads.push_back(MatrixXd::Zero(h.rows(), h.cols()));
  prev_action_loss(m, ds, few, &g_embed, &g_heads);
  std::vector<double> analytic;
  g_embed.for_each_param([&](double& v) { analytic.push_back(v / 8.0); });
  std::size_t k = 0;
  double worst = 0.0;
  const double h = 1e-6;
  m.embed.for_each_param([&](double& p) {
    const double saved = p;
    p = saved + h;
    const double up = prev_action_loss(m, ds, few);
    p = saved - h;
    const double down = prev_action_loss(m, ds, few);
    p = saved;
    const double fd = (up - down) / (2 * h);
    if (std::abs(fd) > 1e-6 || std::abs(analytic[k]) > 1e-6) worst = std::max(worst, relative_error(fd, analytic[k]));
    ++k;
  });
  EXPECT_LE(worst, 1e-4);
}

TEST(Probing, ConstantVelocityLatentsAreProbedExactly) {
  const LatentDataset ds = constant_velocity_dataset(40, 30, 3);
  ProbeOptions opt;
  opt.horizon = 5;
  opt.ridge = 0.0;
  const ProbeModel m = train_probe(ds, opt);
  const ProbeEvaluation ev = evaluate_probe(m, ds, Split::val);
  ASSERT_EQ(ev.position_error.size(), 5u);
  EXPECT_LE(ev.position_error[0], 1e-6);
  for (double e : ev.position_error) EXPECT_LE(e, 1e-6);
  for (double e : ev.angle_error) EXPECT_LE(e, 1e-6);
}

TEST(Probing, ConstantTrajectoryPredictsTheConstant) {
  LatentDataset ds;
  ds.h_dim = 3;
  LatentEpisode ep;
  ep.id = "c";
  for (int t = 0; t < 10; ++t) {
    LatentStep s;
    s.pose = {1.5, -0.5, 0.7};
    s.h = {0.2, 0.3, 0.4};
    ep.steps.push_back(s);
  }
  ds.episodes.push_back(ep);
  ProbeOptions opt;
  opt.horizon = 1;
  const ProbeModel m = train_probe(ds, opt);
  const Pose2 p = m.predict(ep.steps[0].h, {}, ep.goal).front();
  EXPECT_NEAR(p.x, 1.5, 1e-9);
  EXPECT_NEAR(p.y, -0.5, 1e-9);
  EXPECT_NEAR(p.theta, 0.7, 1e-9);
}

TEST(Probing, ClosedFormMatchesGradientDescent) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n01;
  MatrixXd x(60, 4), y(60, 2);
  for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = n01(rng);
  for (Eigen::Index k = 0; k < y.size(); ++k) y.data()[k] = n01(rng);
  const MatrixXd closed = ridge_fit(x, y, 0.5);
  const MatrixXd gd = ridge_fit_gd(x, y, 0.5, 20000, 1e-3);
  EXPECT_LE((closed - gd).norm(), 1e-4);
}

TEST(Probing, NoFutureLeakage) {
  LatentDataset ds = constant_velocity_dataset(30, 25, 5);
  for (ProbeVariant v : {ProbeVariant::linear, ProbeVariant::linear_prev_action, ProbeVariant::latent_rollout}) {
    ProbeOptions opt;
    opt.variant = v;
    opt.horizon = 4;
    opt.iterations = 20;
    const ProbeModel m = train_probe(ds, opt);
    const LatentEpisode& ep = ds.episodes.front();
    const std::size_t t = 6;
    const std::vector<int> actions = detail::window_actions(ep, t, 4);
    const std::vector<Pose2> before = m.predict(ep.steps[t].h, actions, ep.goal);
    LatentEpisode cut = ep;
    for (std::size_t k = t + 1; k < cut.steps.size(); ++k) {
      cut.steps[k].h.assign(6, 0.0);
      cut.steps[k].pose = {};
    }
    const std::vector<Pose2> after = m.predict(cut.steps[t].h, actions, cut.goal);
    for (std::size_t i = 0; i < before.size(); ++i) {
      EXPECT_EQ(before[i].x, after[i].x) << to_string(v);
      EXPECT_EQ(before[i].theta, after[i].theta) << to_string(v);
    }
  }
}

TEST(Probing, RotationTargetsIgnoreFullTurns) {
  const VectorXd a = pose_target({1.0, 2.0, 0.3});
  const VectorXd b = pose_target({1.0, 2.0, 0.3 + 2 * kPi});
  const VectorXd c = pose_target({1.0, 2.0, 0.3 - 4 * kPi});
  EXPECT_NEAR(pose_loss(a, b), 0.0, 1e-12);
  EXPECT_NEAR(pose_loss(a, c), 0.0, 1e-12);
}

TEST(Probing, RolloutHorizonZeroIsTheReadout) {
  const LatentDataset ds = constant_velocity_dataset(30, 25, 6);
  ProbeOptions opt;
  opt.variant = ProbeVariant::latent_rollout;
  opt.horizon = 5;
  opt.ridge = 0.0;
  opt.iterations = 50;
  const ProbeModel m = train_probe(ds, opt);
  const LatentStep& s = ds.episodes[0].steps[3];
  EXPECT_TRUE(m.predict(s.h, {}, {}, 0).empty());
  const Pose2 now = m.readout_now(s.h);
  EXPECT_NEAR(now.x, s.pose.x, 1e-6);
  EXPECT_NEAR(now.y, s.pose.y, 1e-6);
}

TEST(Probing, RolloutDisplacementGrowsLinearlyOnConstantVelocity) {
  const LatentDataset ds = constant_velocity_dataset(40, 30, 7);
  ProbeOptions opt;
  opt.variant = ProbeVariant::latent_rollout;
  opt.horizon = 10;
  opt.ridge = 0.0;
  opt.iterations = 0;
  const ProbeModel m = train_probe(ds, opt);
  const LatentStep& s = ds.episodes[1].steps[2];
  const std::vector<Pose2> p = m.predict(s.h, {}, {}, 10);
  const Vec2 v{s.h[4], s.h[5]};
  for (int i = 1; i <= 10; ++i) {
    EXPECT_NEAR(p[static_cast<std::size_t>(i - 1)].x, s.pose.x + i * v.x, 1e-6);
    EXPECT_NEAR(p[static_cast<std::size_t>(i - 1)].y, s.pose.y + i * v.y, 1e-6);
  }
}

TEST(Probing, RejectsHorizonLongerThanEpisodes) {
  const LatentDataset ds = constant_velocity_dataset(10, 5, 8);
  ProbeOptions opt;
  opt.horizon = 5;
  EXPECT_THROW(train_probe(ds, opt), DataError);
  opt.horizon = 0;
  EXPECT_THROW(train_probe(ds, opt), DataError);
}

TEST(Probing, ModelJsonRoundTrip) {
  const LatentDataset ds = constant_velocity_dataset(20, 15, 9);
  for (ProbeVariant v : {ProbeVariant::linear, ProbeVariant::linear_prev_action, ProbeVariant::latent_rollout}) {
    ProbeOptions opt;
    opt.variant = v;
    opt.horizon = 3;
    opt.iterations = 10;
    const ProbeModel m = train_probe(ds, opt);
    const ProbeModel back = ProbeModel::from_json(nlohmann::json::parse(m.to_json().dump()));
    const LatentEpisode& ep = ds.episodes[0];
    const std::vector<int> a = detail::window_actions(ep, 0, 3);
    const auto p1 = m.predict(ep.steps[0].h, a, ep.goal), p2 = back.predict(ep.steps[0].h, a, ep.goal);
    for (std::size_t i = 0; i < p1.size(); ++i) EXPECT_EQ(p1[i].x, p2[i].x);
  }
}

TEST(Probing, SpearmanOracle) {
  const std::vector<double> a{1, 2, 3, 4, 5}, b{2, 4, 6, 8, 100}, c{5, 4, 3, 2, 1};
  EXPECT_DOUBLE_EQ(spearman(a, b), 1.0);
  EXPECT_DOUBLE_EQ(spearman(a, c), -1.0);
  // Ties take average ranks: ranks (1, 2.5, 2.5, 4) vs (1, 2, 3, 4).
  const std::vector<double> t{1, 2, 2, 3}, u{1, 2, 3, 4};
  EXPECT_NEAR(spearman(t, u), 4.5 / std::sqrt(4.5 * 5.0), 1e-12);
}

TEST(Dataset, SplitsAreDisjointAndSized) {
  const std::vector<Split> s = assign_splits(100, 3);
  EXPECT_EQ(std::count(s.begin(), s.end(), Split::train), 80);
  EXPECT_EQ(std::count(s.begin(), s.end(), Split::val), 10);
  EXPECT_EQ(std::count(s.begin(), s.end(), Split::test), 10);
  EXPECT_EQ(assign_splits(100, 3), s);
}

TEST(Dataset, BinaryRoundTripStoresLatentsAsFloat32) {
  LatentDataset ds = constant_velocity_dataset(5, 8, 10);
  ds.occ_cells = 2;
  for (auto& e : ds.episodes)
    for (auto& st : e.steps) st.occupancy = {0, 1, 1, 0};
  const std::string bytes = dataset_to_bytes(ds);
  EXPECT_EQ(bytes.substr(0, 8), "NAVLATNT");
  const LatentDataset back = dataset_from_bytes(bytes);
  ASSERT_EQ(back.episodes.size(), 5u);
  EXPECT_EQ(back.rows(), 40u);
  EXPECT_EQ(back.episodes[2].steps[3].h[1], static_cast<double>(static_cast<float>(ds.episodes[2].steps[3].h[1])));
  EXPECT_EQ(back.episodes[2].steps[3].pose.x, ds.episodes[2].steps[3].pose.x);
  EXPECT_EQ(back.episodes[4].steps[7].occupancy, (std::vector<std::uint8_t>{0, 1, 1, 0}));
  EXPECT_EQ(dataset_to_bytes(back), bytes);
  EXPECT_THROW(dataset_from_bytes(bytes.substr(0, bytes.size() - 3)), DataError);
  EXPECT_THROW(dataset_from_bytes("NOTNAVLA" + bytes.substr(8)), DataError);
}

TEST(Dataset, CollectionIsDeterministicAndMatchesGroundTruth) {
  auto map = make_world_map("room", generate_room_map(5));
  EpisodeGenOptions go;
  go.time_limit = 60.0;
  std::vector<Task> tasks;
  for (const Episode& e : generate_episodes(*map, 4, 5, go)) tasks.push_back({map, e});
  CollectOptions opt;
  opt.seed = 12;
  const LatentDataset a = collect_latent_logs(tasks, WorldConfig{}, opt);
  const LatentDataset b = collect_latent_logs(tasks, WorldConfig{}, opt);
  EXPECT_EQ(dataset_to_bytes(a), dataset_to_bytes(b));
  EXPECT_EQ(a.episodes.size(), 4u);
  for (const LatentEpisode& e : a.episodes)
    for (const LatentStep& s : e.steps) {
      EXPECT_NEAR(s.estimate.x, s.pose.x, 1e-6);
      EXPECT_NEAR(s.estimate.y, s.pose.y, 1e-6);
      EXPECT_EQ(s.occupancy.size(), 900u);
    }
}

TEST(Occupancy, EmptyMapAllFreeBaseline) {
  OccupancyGrid g(200, 200, 0.1);
  auto map = make_world_map("empty", std::move(g));
  EpisodeGenOptions go;
  go.time_limit = 30.0;
  go.max_geodesic = 4.0;
  std::vector<Task> tasks;
  for (const Episode& e : generate_episodes(*map, 10, 6, go)) tasks.push_back({map, e});
  CollectOptions opt;
  opt.seed = 2;
  const LatentDataset ds = collect_latent_logs(tasks, WorldConfig{}, opt);
  const OccupancyReport rep = probe_occupancy(ds, 1e-3, Split::train);
  double free = 0, total = 0;
  for (const LatentEpisode& e : ds.episodes)
    if (e.split == Split::train)
      for (const LatentStep& s : e.steps)
        for (std::uint8_t o : s.occupancy) {
          free += o == 0;
          total += 1;
        }
  EXPECT_DOUBLE_EQ(rep.all_free_accuracy, free / total);
  EXPECT_GE(rep.accuracy, rep.all_free_accuracy - 1e-9);
}

}  // namespace
}  // namespace navlab
