#pragma once

// Gradient tree-boosted hazard estimation for recurrent events with
// time-varying covariates.
//
// The estimated hazard is
//
//   lambda(t, x) = exp(f0 + nu * sum_m g_m(t, x))
//
// where f0 is the constant log-hazard MLE and each g_m is a regression tree
// over (t, x). Trees are fitted to the counting-process negative
// log-likelihood
//
//   sum_epochs [ integral_{t_start}^{t_end} lambda(u, x) du - delta * log lambda(t_end-, x) ].
//
// Because every tree is piecewise constant in t, the integral is exact once an
// epoch is partitioned at the ensemble's time split points. The event term
// uses the left limit at t_end, i.e. the hazard on the final piece of the
// epoch, so the event belongs to the interval that carried the exposure.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hazardforge/survival_data.hpp"

namespace hazardforge {

// Feature index 0 is time; index j >= 1 refers to covariate j - 1.
inline constexpr int kTimeFeature = 0;

struct TreeNode {
  int feature = -1;
  double threshold = 0.0;  // value < threshold goes left
  bool missing_goes_left = true;
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf log-hazard increment, before shrinkage
  double gain = 0.0;   // recorded split gain for internal nodes

  bool is_leaf() const { return left < 0; }
};

// Flat tree; node 0 is the root.
struct Tree {
  std::vector<TreeNode> nodes;

  double evaluate(double t, std::span<const double> x) const;
  int depth() const;
};

struct TrainConfig {
  int max_depth = 3;
  int num_trees = 100;
  double nu = 0.1;
  int max_quantile_bins = 256;
  double min_hessian_per_leaf = 1e-6;
  double leaf_value_clamp = 5.0;

  // Throws kInvalidArgument. num_trees = 0 is allowed.
  void validate() const;
};

struct HazardEnsemble {
  double f0 = 0.0;
  double base_hazard = 1.0;  // exp(f0), kept as the exact events/exposure ratio
  double nu = 0.1;
  std::vector<Tree> trees;
  DatasetSchema schema;
  std::vector<double> time_split_points;

  // First `m` trees; time_split_points recomputed.
  HazardEnsemble prefix(std::size_t m) const;

  // Recomputes time_split_points from the trees.
  void refresh_time_split_points();

  // Sum of tree outputs (before shrinkage) at (t, x).
  double tree_sum(double t, std::span<const double> x) const;
};

double log_hazard(const HazardEnsemble& model, double t, std::span<const double> x);
double hazard(const HazardEnsemble& model, double t, std::span<const double> x);

// log(events / exposure). Throws kDegenerateData when either is zero.
double fit_f0(std::span<const Episode> episodes);

double neg_log_likelihood(const HazardEnsemble& model, std::span<const Episode> episodes);

// neg_log_likelihood of model.prefix(m) for every m in `tree_counts`, computed
// in one pass. Bit-identical to evaluating each prefix separately.
std::vector<double> neg_log_likelihood_path(const HazardEnsemble& model,
                                            std::span<const Episode> episodes,
                                            std::span<const int> tree_counts);

// Integral of the hazard from monitoring_start to t along the episode's
// trajectory; gaps contribute nothing. Throws kOutOfRange when t precedes
// monitoring_start or exceeds the last epoch end.
double cumulative_hazard(const HazardEnsemble& model, const Episode& ep, double t);
double survival(const HazardEnsemble& model, const Episode& ep, double t);

// Constant-hazard pieces of an episode: each epoch partitioned at the model's
// time split points.
struct HazardPiece {
  double t_start = 0.0;
  double t_end = 0.0;
  double hazard = 0.0;
};
std::vector<HazardPiece> hazard_pieces(const HazardEnsemble& model, const Epoch& epoch);
std::vector<HazardPiece> hazard_pieces(const HazardEnsemble& model, const Episode& ep);

// Candidate split points derived from the training data. time_cuts are the
// time thresholds (epochs are fragmented at them); feature_thresholds[j] are
// the thresholds for covariate j.
struct SplitCandidates {
  std::vector<double> time_cuts;
  std::vector<std::vector<double>> feature_thresholds;
};
SplitCandidates make_split_candidates(std::span<const Episode> episodes, std::size_t width,
                                      int max_bins);

struct TrainLog {
  // Training NLL after 0, 1, ..., num_trees rounds.
  std::vector<double> round_nll;
};

HazardEnsemble train(std::span<const Episode> episodes, const DatasetSchema& schema,
                     const TrainConfig& config, TrainLog* log = nullptr);

// Per-feature summed split gain normalized by the largest; time is named "t"
// and listed first.
std::vector<std::pair<std::string, double>> variable_importance(const HazardEnsemble& model);

}  // namespace hazardforge
