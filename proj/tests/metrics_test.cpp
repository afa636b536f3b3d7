#include <gtest/gtest.h>

#include <random>

#include "navlab/metrics.hpp"

namespace navlab {
namespace {

EpisodeResult make(bool success, double l, double l_star, double c, double t_star) {
  return {"e", success, l, l_star, c, t_star};
}

TEST(Metrics, OptimalEpisodeContributesOne) {
  const std::vector<EpisodeResult> r{make(true, 4.0, 4.0, 9.0, 9.0)};
  EXPECT_EQ(spl(r), 1.0);
  EXPECT_EQ(sct(r), 1.0);
  EXPECT_EQ(success_rate(r), 1.0);
}

TEST(Metrics, DoublingHalvesContribution) {
  const std::vector<EpisodeResult> r{make(true, 8.0, 4.0, 18.0, 9.0)};
  EXPECT_DOUBLE_EQ(spl(r), 0.5);
  EXPECT_DOUBLE_EQ(sct(r), 0.5);
}

TEST(Metrics, FailureContributesZero) {
  const std::vector<EpisodeResult> r{make(false, 4.0, 4.0, 9.0, 9.0), make(true, 4.0, 4.0, 9.0, 9.0)};
  EXPECT_DOUBLE_EQ(success_rate(r), 0.5);
  EXPECT_DOUBLE_EQ(spl(r), 0.5);
  EXPECT_DOUBLE_EQ(sct(r), 0.5);
}

TEST(Metrics, ShorterThanOptimalIsCapped) {
  // A path shorter than the geodesic optimum (goal radius slack) still scores 1.
  const std::vector<EpisodeResult> r{make(true, 3.9, 4.0, 8.0, 9.0)};
  EXPECT_EQ(spl(r), 1.0);
  EXPECT_EQ(sct(r), 1.0);
}

TEST(Metrics, BoundedBySuccessRateOnRandomSets) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.1, 20.0);
  std::bernoulli_distribution coin(0.6);
  std::uniform_int_distribution<int> size(1, 50);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<EpisodeResult> r;
    const int n = size(rng);
    double ref_spl = 0, ref_sct = 0, ref_sr = 0;
    for (int k = 0; k < n; ++k) {
      EpisodeResult e = make(coin(rng), u(rng), u(rng), u(rng), u(rng));
      ref_sr += e.success;
      ref_spl += e.success * e.geodesic_optimal / std::max(e.path_length, e.geodesic_optimal);
      ref_sct += e.success * e.optimal_time / std::max(e.episode_time, e.optimal_time);
      r.push_back(e);
    }
    const MetricsSummary s = summarize(r);
    EXPECT_NEAR(s.sr, ref_sr / n, 1e-12);
    EXPECT_NEAR(s.spl, ref_spl / n, 1e-12);
    EXPECT_NEAR(s.sct, ref_sct / n, 1e-12);
    EXPECT_LE(s.spl, s.sr + 1e-15);
    EXPECT_LE(s.sct, s.sr + 1e-15);
    EXPECT_GE(s.spl, 0.0);
    EXPECT_GE(s.sct, 0.0);
  }
}

TEST(Metrics, RejectsEmptyAndInvalid) {
  EXPECT_THROW(success_rate({}), DataError);
  const std::vector<EpisodeResult> bad{make(true, 1.0, 0.0, 1.0, 1.0)};
  EXPECT_THROW(spl(bad), DataError);
  const std::vector<EpisodeResult> neg{make(true, -1.0, 1.0, 1.0, 1.0)};
  EXPECT_THROW(sct(neg), DataError);
}

TEST(Metrics, CsvHasOneRowPerEpisodePlusSummary) {
  const std::vector<EpisodeResult> r{make(true, 4.0, 4.0, 9.0, 9.0), make(false, 2.0, 1.0, 3.0, 1.0)};
  const std::string csv = metrics_csv(r);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_NE(csv.find("ALL,0.5,"), std::string::npos);
}

TEST(Metrics, BinomialStandardError) {
  EXPECT_DOUBLE_EQ(binomial_se(0.5, 100), 0.05);
  EXPECT_EQ(binomial_se(1.0, 100), 0.0);
}

TEST(Metrics, MeanStdUsesSampleDeviation) {
  const std::vector<double> xs{1.0, 2.0, 3.0, 4.0};
  const MeanStd m = mean_std(xs);
  EXPECT_DOUBLE_EQ(m.mean, 2.5);
  EXPECT_NEAR(m.stddev, std::sqrt(5.0 / 3.0), 1e-12);
}

}  // namespace
}  // namespace navlab
