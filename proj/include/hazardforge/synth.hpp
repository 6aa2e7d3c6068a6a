#pragma once

// Synthetic cohorts with a known ground-truth hazard.
//
// Covariates follow piecewise-constant processes whose values are resampled
// i.i.d. at the ticks of a Poisson clock. Recurrent events are drawn by
// Lewis-Shedler thinning: candidates from a homogeneous process at rate
// lambda_max are accepted with probability lambda*(t, X(t)) / lambda_max.
// Every episode uses its own RNG streams derived from (seed, episode index),
// so the cohort does not depend on the worker count.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hazardforge/eval_metrics.hpp"
#include "hazardforge/hazard_boost.hpp"
#include "hazardforge/ingest_fusion.hpp"
#include "hazardforge/survival_data.hpp"
#include "json.hpp"

namespace hazardforge {

// Declarative lambda*(t, x): a constant, a step in one covariate, a step in
// absolute time, or a product of such factors.
struct TrueHazard {
  enum class Kind { kConstant, kFeatureStep, kTimeStep, kProduct };

  Kind kind = Kind::kConstant;
  double rate = 0.0;       // kConstant
  std::string feature;     // kFeatureStep
  double threshold = 0.0;  // kFeatureStep: x < threshold -> low; kTimeStep: t < threshold -> low
  double low = 0.0;
  double high = 0.0;
  std::vector<TrueHazard> factors;  // kProduct

  static TrueHazard constant(double rate);
  static TrueHazard feature_step(std::string feature, double threshold, double low, double high);
  static TrueHazard time_step(double time, double before, double after);
  static TrueHazard product(std::vector<TrueHazard> factors);

  // `names` are the covariate process names, in the order of `x`.
  double evaluate(double t, std::span<const double> x, std::span<const std::string> names) const;
  void collect_time_breaks(std::vector<double>& out) const;
};

struct CovariateSpec {
  enum class Distribution { kBernoulli, kUniform, kNormal };

  std::string name;
  Distribution distribution = Distribution::kUniform;
  double p = 0.5;     // kBernoulli
  double lo = 0.0;    // kUniform
  double hi = 1.0;
  double mean = 0.0;  // kNormal
  double sd = 1.0;
  double change_rate = 0.0;  // resampling clock, per hour; 0 keeps the value fixed
  bool hidden = false;       // latent: drives lambda* but is not written out
};

// Noisy n-vector notes exposing a latent binary covariate.
struct EmbeddingSpec {
  std::string source_feature;
  int dim = 2;
  double note_rate = 0.05;      // background notes per hour
  bool note_on_change = true;   // also emit a note whenever the source changes
  double delay = 0.0;           // hours between a change and its note
  double signal = 1.0;
  double noise_sd = 0.3;
};

struct ScenarioSpec {
  TrueHazard true_hazard;
  double lambda_max = 1.0;
  std::vector<CovariateSpec> covariates;
  std::optional<EmbeddingSpec> embedding;
  int n_episodes = 100;
  int episodes_per_subject = 1;
  double max_follow_up = 72.0;  // hours after monitoring start
  double censor_rate = 0.0;     // exponential censoring, per hour
  std::optional<double> prevalence_target;
  double monitoring_start = 24.0;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json scenario_to_json(const ScenarioSpec& spec);
ScenarioSpec scenario_from_json(const nlohmann::json& j);

struct SimulatedCohort {
  DatasetSchema schema;  // visible covariates, then recurrence features
  std::vector<Episode> episodes;
  std::vector<EmbeddingStream> embeddings;  // one per episode when configured
  std::vector<std::vector<HazardPiece>> truth;  // lambda* path per episode
  std::vector<std::vector<double>> event_times;
  double hazard_scale = 1.0;  // calibration factor applied to lambda* and lambda_max
};

// Throws kRateBoundViolated when lambda* exceeds lambda_max on any evaluated
// covariate state.
SimulatedCohort simulate(const ScenarioSpec& spec);

// Ground-truth traces and metrics: the same battery as for a fitted model
// with lambda* in place of the estimate.
std::vector<MonitoringTrace> oracle_traces(const SimulatedCohort& cohort);

struct OracleMetrics {
  double auroc = 0.0;
  double auc_pr = 0.0;
  std::vector<AuctBin> auct_bins;
};
OracleMetrics oracle_metrics(const SimulatedCohort& cohort, std::span<const TimeBin> bins);

// Counting-process NLL of the selected episodes under lambda*.
double oracle_neg_log_likelihood(const SimulatedCohort& cohort,
                                 std::span<const std::size_t> episodes);

// Cohort with every episode fused with its embedding stream (schema gains the
// emb block).
struct FusedCohort {
  DatasetSchema schema;
  std::vector<Episode> episodes;
};
FusedCohort fuse_cohort(const SimulatedCohort& cohort);

// Ready-made scenarios.
ScenarioSpec constant_scenario(double rate, int n_episodes, double follow_up, std::uint64_t seed);
// Hazard `low` vs `high` depending on a binary covariate x0; two uniform noise
// covariates.
ScenarioSpec two_group_scenario(double low, double high, int n_episodes, std::uint64_t seed);
// Hazard driven by a hidden binary state that is visible only through notes.
ScenarioSpec note_signal_scenario(int n_episodes, std::uint64_t seed);

}  // namespace hazardforge
