#include <gtest/gtest.h>

#include <random>

#include "navlab/episodes.hpp"
#include "navlab/io.hpp"
#include "navlab/maps.hpp"
#include "navlab/planner.hpp"
#include "navlab/sensitivity.hpp"

namespace navlab {
namespace {

int full_forward(const DynParams& p) {
  for (const Command& c : action_space(p))
    if (c.a_v == p.v_max && c.a_omega == 0.0) return c.index;
  return -1;
}

ActionBank random_bank(int K, int T, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> cmd(0, kNumMotionCommands - 1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ActionBank bank;
  bank.horizon = T;
  bank.seed = seed;
  for (int k = 0; k < K; ++k) {
    ActionSequence s;
    s.initial.set_pose({3 * u(rng), 3 * u(rng), kPi * u(rng)});
    s.initial.v = 0.5 * (u(rng) + 1.0);
    s.initial.omega = 0.5 * u(rng);
    for (int t = 0; t < T; ++t) s.actions.push_back(cmd(rng));
    bank.sequences.push_back(s);
  }
  return bank;
}

DynParams random_params(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> f(0.3, 3.0);
  DynParams p;
  p.tau_lin_acc *= f(rng);
  p.tau_lin_brake *= f(rng);
  p.tau_ang_acc *= f(rng);
  p.tau_ang_brake *= f(rng);
  p.gamma_lin_acc *= f(rng);
  p.gamma_lin_brake *= f(rng);
  p.gamma_ang_acc *= f(rng);
  p.gamma_ang_brake *= f(rng);
  p.v_max *= f(rng);
  p.omega_max *= f(rng);
  return p;
}

TEST(DBelief, IdentityIsExactlyZero) {
  const ActionBank bank = random_bank(50, 15, 1);
  EXPECT_EQ(d_belief(DynParams{}, DynParams{}, bank), 0.0);
  EXPECT_EQ(d_belief(DynParams{}, DynParams{}, bank, DynamicsMode::instant), 0.0);
}

TEST(DBelief, StraightLineHalfSpeedInstant) {
  // Positions differ by 0.5 * t / 3 after t decisions; mean over t = 1..15.
  const DynParams nominal;
  DynParams slow = nominal;
  slow.v_max = 0.5;
  ActionBank bank;
  bank.horizon = 15;
  ActionSequence s;
  s.actions.assign(15, full_forward(nominal));
  bank.sequences.push_back(s);
  double expected = 0.0;
  for (int t = 1; t <= 15; ++t) expected += 0.5 * t / 3.0;
  expected /= 15.0;
  EXPECT_NEAR(expected, 4.0 / 3.0, 1e-12);
  EXPECT_NEAR(d_belief(nominal, slow, bank, DynamicsMode::instant), 4.0 / 3.0, 1e-9);
}

TEST(DBelief, SymmetricAndDeterministicOverRandomPairs) {
  const ActionBank bank = random_bank(20, 15, 2);
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const DynParams a = random_params(rng), b = random_params(rng);
    const double ab = d_belief(a, b, bank);
    EXPECT_EQ(ab, d_belief(b, a, bank));
    EXPECT_EQ(ab, d_belief(a, b, random_bank(20, 15, 2)));
    EXPECT_GE(ab, 0.0);
  }
}

TEST(DBelief, PerSequenceValuesAverageToTotal) {
  const ActionBank bank = random_bank(10, 15, 4);
  DynParams c;
  c.tau_lin_acc *= 3.0;
  const DBeliefResult r = d_belief_detailed(DynParams{}, c, bank);
  ASSERT_EQ(r.per_sequence.size(), 10u);
  double sum = 0.0;
  for (double d : r.per_sequence) sum += d;
  EXPECT_NEAR(r.value, sum / 10.0, 1e-12);
}

TEST(DBelief, RejectsBadBanks) {
  ActionBank empty;
  EXPECT_THROW(d_belief(DynParams{}, DynParams{}, empty), DataError);
  ActionBank stop = random_bank(1, 3, 5);
  stop.sequences[0].actions[1] = kStopIndex;
  EXPECT_THROW(d_belief(DynParams{}, DynParams{}, stop), DataError);
  ActionBank ragged = random_bank(2, 3, 5);
  ragged.sequences[1].actions.pop_back();
  EXPECT_THROW(d_belief(DynParams{}, DynParams{}, ragged), DataError);
}

TEST(Corruption, ScalesTheNamedParameters) {
  const DynParams p;
  const DynParams d = corrupt_dynamics(p, CorruptionSpec::dynamics(CorruptionAxis::damping, 2.0));
  EXPECT_EQ(d.gamma_lin_acc, 2.0 * p.gamma_lin_acc);
  EXPECT_EQ(d.gamma_ang_brake, 2.0 * p.gamma_ang_brake);
  EXPECT_EQ(d.tau_lin_acc, p.tau_lin_acc);
  const DynParams r = corrupt_dynamics(p, CorruptionSpec::dynamics(CorruptionAxis::response_time, 3.0));
  EXPECT_EQ(r.tau_ang_acc, 3.0 * p.tau_ang_acc);
  EXPECT_EQ(r.gamma_lin_acc, p.gamma_lin_acc);
  const DynParams v = corrupt_dynamics(p, CorruptionSpec::dynamics(CorruptionAxis::max_velocity, 0.5));
  EXPECT_EQ(v.v_max, 0.5 * p.v_max);
  EXPECT_EQ(corrupt_dynamics(p, CorruptionSpec::dynamics(CorruptionAxis::damping, 1.0)), p);
}

TEST(Corruption, OdometryAxesTouchOnlyNoise) {
  const WorldConfig c = corrupt_world(WorldConfig{}, CorruptionSpec::odometry_std(0.03));
  EXPECT_EQ(c.noise.odom_std, 0.03);
  EXPECT_EQ(c.dynamics, DynParams{});
  EXPECT_THROW(CorruptionSpec::dynamics(CorruptionAxis::damping, 0.0).validate(), DataError);
  EXPECT_THROW((CorruptionSpec{CorruptionAxis::odom_noise_std, 2.0, 0.0, 0.1}).validate(), DataError);
  EXPECT_THROW(parse_corruption_axis("friction"), DataError);
}

TEST(Corruption, OdometryDriftDistance) {
  EXPECT_EQ(odometry_drift_distance(0.0, 0.0, 15), 0.0);
  // Pure bias: sqrt(2) m t averaged over t = 1..T.
  EXPECT_NEAR(odometry_drift_distance(0.01, 0.0, 15), std::sqrt(2.0) * 0.01 * 8.0, 1e-12);
}

TEST(ActionBank, JsonRoundTrip) {
  const ActionBank bank = random_bank(4, 6, 8);
  EXPECT_EQ(action_bank_from_json(to_json(bank)), bank);
}

class SweepFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    for (int m = 0; m < 2; ++m) {
      auto map = make_world_map("room" + std::to_string(m), generate_room_map(m));
      EpisodeGenOptions go;
      go.time_limit = 60.0;
      for (const Episode& e : generate_episodes(*map, 4, m, go)) tasks.push_back({map, e});
    }
  }
  std::vector<Task> tasks;
  PolicyFactory expert = [] { return std::make_unique<ExpertPolicy>(); };
};

TEST_F(SweepFixture, BankIsDeterministicAndMotionOnly) {
  const ActionBank a = build_action_bank(expert, tasks, WorldConfig{}, 30, 15, 11);
  const ActionBank b = build_action_bank(expert, tasks, WorldConfig{}, 30, 15, 11);
  EXPECT_EQ(a, b);
  EXPECT_NO_THROW(a.validate());
  EXPECT_EQ(a.sequences.size(), 30u);
}

TEST_F(SweepFixture, UnitFactorReproducesBaseline) {
  const ActionBank bank = build_action_bank(expert, tasks, WorldConfig{}, 30, 15, 11);
  const SweepReport r = sensitivity_sweep(
      expert, tasks, WorldConfig{}, HarnessOpts{},
      {CorruptionSpec::dynamics(CorruptionAxis::max_velocity, 1.0), CorruptionSpec::dynamics(CorruptionAxis::max_velocity, 4.0)},
      bank, {.seed = 5});
  const std::vector<EpisodeResult> base = results_of(run_tasks(tasks, WorldConfig{}, expert, HarnessOpts{}, 5));
  ASSERT_EQ(r.points.size(), 2u);
  EXPECT_EQ(r.points[0].d_belief, 0.0);
  EXPECT_EQ(r.points[0].metrics.sr, success_rate(base));
  EXPECT_EQ(r.points[0].metrics.spl, spl(base));
  EXPECT_GT(r.points[1].d_belief, 1.0);
  EXPECT_TRUE(r.points[1].highly_corrupted());
  const std::string csv = sweep_csv(r);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_EQ(sweep_json(r)["series"].size(), 1u);
}

}  // namespace
}  // namespace navlab
