#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "hazardforge/error.hpp"
#include "hazardforge/io.hpp"
#include "hazardforge/synth.hpp"
#include "oracles.hpp"

using namespace hazardforge;

namespace {

std::string as_csv(const SimulatedCohort& c) {
  std::ostringstream os;
  write_episodes_csv(os, c.schema, c.episodes);
  write_embeddings_jsonl(os, c.embeddings);
  return os.str();
}

// Integral of the true hazard path between two times.
double truth_integral(const std::vector<HazardPiece>& path, double a, double b) {
  double total = 0.0;
  for (const auto& p : path) {
    const double lo = std::max(a, p.t_start);
    const double hi = std::min(b, p.t_end);
    if (lo < hi) total += p.hazard * (hi - lo);
  }
  return total;
}

}  // namespace

TEST(Simulate, ConstantRateLawOfLargeNumbers) {
  const auto c = simulate(constant_scenario(0.1, 2000, 50.0, 1));
  const double rate = static_cast<double>(event_count(c.episodes)) / total_exposure(c.episodes);
  EXPECT_GE(rate, 0.09);
  EXPECT_LE(rate, 0.11);
  // 3-sigma Poisson band on the count
  const double expected = 0.1 * total_exposure(c.episodes);
  EXPECT_NEAR(static_cast<double>(event_count(c.episodes)), expected, 3.0 * std::sqrt(expected));
}

TEST(Simulate, ZeroHazardGivesNoEvents) {
  auto spec = constant_scenario(0.0, 200, 50.0, 2);
  spec.lambda_max = 1.0;
  const auto c = simulate(spec);
  EXPECT_EQ(event_count(c.episodes), 0);
}

TEST(Simulate, OutputPassesValidation) {
  const auto c = simulate(note_signal_scenario(200, 3));
  EXPECT_TRUE(validate_schema(c.schema).empty());
  for (const auto& ep : c.episodes) EXPECT_TRUE(validate_episode(ep, c.schema).empty()) << ep.episode_id;
  ASSERT_EQ(c.embeddings.size(), c.episodes.size());
  for (const auto& s : c.embeddings) {
    EXPECT_NO_THROW(validate_stream(s));
    EXPECT_TRUE(s.entries.empty() || s.width() == 2u);
  }
  // hidden latent never written
  EXPECT_EQ(c.schema.index_of("latent"), -1);
}

TEST(Simulate, StepHazardPassesTimeRescalingKs) {
  ScenarioSpec spec;
  spec.true_hazard = TrueHazard::feature_step("x0", 0.5, 0.02, 0.3);
  spec.lambda_max = 0.3;
  spec.covariates = {{.name = "x0", .distribution = CovariateSpec::Distribution::kUniform,
                      .change_rate = 0.2}};
  spec.n_episodes = 1500;
  spec.max_follow_up = 60.0;
  spec.seed = 4;
  const auto c = simulate(spec);
  // Given the count, compensator-rescaled event times are iid U(0,1); map
  // them to Exp(1). Raw inter-event gaps would be truncated by the window.
  std::vector<double> rescaled;
  for (std::size_t i = 0; i < c.episodes.size(); ++i) {
    const double whole = truth_integral(c.truth[i], spec.monitoring_start, 1e300);
    for (const double t : c.event_times[i]) {
      rescaled.push_back(-std::log1p(-truth_integral(c.truth[i], spec.monitoring_start, t) / whole));
    }
  }
  ASSERT_GT(rescaled.size(), 2000u);
  const auto ks = oracle::ks_exponential(rescaled, 1.0);
  EXPECT_GT(ks.p_value, 0.01) << "D=" << ks.d;

  // events concentrate in the high-hazard state
  double high_time = 0, high_events = 0, low_time = 0, low_events = 0;
  for (const auto& ep : c.episodes) {
    for (const auto& e : ep.epochs) {
      (e.covariates[0] >= 0.5 ? high_time : low_time) += e.duration();
      (e.covariates[0] >= 0.5 ? high_events : low_events) += e.delta;
    }
  }
  EXPECT_GT(high_events / high_time, 5.0 * low_events / low_time);
}

TEST(Simulate, ReproducibleAndIndependentOfWorkers) {
  const auto spec = note_signal_scenario(300, 77);
  setenv("HAZARDFORGE_THREADS", "1", 1);
  const auto a = as_csv(simulate(spec));
  setenv("HAZARDFORGE_THREADS", "3", 1);
  const auto b = as_csv(simulate(spec));
  unsetenv("HAZARDFORGE_THREADS");
  EXPECT_EQ(a, b);
  auto other = spec;
  other.seed = 78;
  EXPECT_NE(a, as_csv(simulate(other)));
}

TEST(Simulate, RateBoundViolated) {
  auto spec = two_group_scenario(0.02, 0.2, 10, 1);
  spec.lambda_max = 0.1;
  try {
    simulate(spec);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kRateBoundViolated);
  }
}

TEST(Simulate, PrevalenceTargetCalibrates) {
  auto spec = constant_scenario(0.01, 2000, 72.0, 5);
  spec.lambda_max = 0.05;
  spec.prevalence_target = 0.07;
  const auto c = simulate(spec);
  int positives = 0;
  for (const auto& ep : c.episodes) positives += event_count(ep) > 0 ? 1 : 0;
  EXPECT_NEAR(positives / 2000.0, 0.07, 0.02);
}

TEST(Simulate, ScenarioJsonRoundTrip) {
  auto spec = note_signal_scenario(10, 3);
  spec.prevalence_target = 0.2;
  spec.true_hazard = TrueHazard::product(
      {TrueHazard::feature_step("latent", 0.5, 0.01, 0.12), TrueHazard::time_step(48.0, 1.0, 0.5)});
  const auto back = scenario_from_json(scenario_to_json(spec));
  EXPECT_EQ(scenario_to_json(back).dump(), scenario_to_json(spec).dump());
}

TEST(OracleMetrics, ConstantHazardGivesHalf) {
  const auto c = simulate(constant_scenario(0.02, 300, 72.0, 6));
  const auto m = oracle_metrics(c, bins_from_edges(default_bucket_edges()));
  EXPECT_EQ(m.auroc, 0.5);
  EXPECT_EQ(m.auct_bins.size(), 4u);
}

TEST(OracleMetrics, OracleNllMatchesTruthIntegral) {
  const auto c = simulate(two_group_scenario(0.02, 0.2, 50, 7));
  std::vector<std::size_t> all(c.episodes.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  double expected = 0.0;
  for (std::size_t i = 0; i < c.episodes.size(); ++i) {
    for (const auto& p : c.truth[i]) expected += p.hazard * (p.t_end - p.t_start);
    for (const double t : c.event_times[i]) {
      for (const auto& p : c.truth[i]) {
        if (p.t_start < t && t <= p.t_end) {
          expected -= std::log(p.hazard);
          break;
        }
      }
    }
  }
  EXPECT_NEAR(oracle_neg_log_likelihood(c, all), expected, 1e-9 * std::abs(expected));
}
