#pragma once

// Subject-grouped K-fold cross-validation over (max depth, number of trees)
// with one-standard-error model selection on held-out log-likelihood.

#include <cstdint>
#include <span>
#include <vector>

#include "hazardforge/hazard_boost.hpp"
#include "hazardforge/survival_data.hpp"

namespace hazardforge {

struct CvGrid {
  std::vector<int> depths = {1, 2, 3, 4};
  std::vector<int> tree_counts = default_tree_counts();

  static std::vector<int> default_tree_counts();  // 25, 50, ..., 500
  void validate() const;  // non-empty, positive, strictly ascending
};

struct CvCell {
  int depth = 0;
  int trees = 0;
  double mean_nll = 0.0;  // mean over folds of held-out NLL per exposure hour
  double se = 0.0;        // sample sd of fold values / sqrt(K)
  std::vector<double> fold_nll;
};

struct CvResult {
  std::vector<CvCell> cells;  // ordered by (depth, trees)
  int selected_depth = 0;
  int selected_trees = 0;
};

// Episode indices per fold. Subjects are shuffled with `seed` and dealt
// round-robin, so a subject never spans folds and fold sizes differ by at
// most one subject. Throws kTooFewGroups.
std::vector<std::vector<std::size_t>> kfold_split(std::span<const Episode> episodes, int k,
                                                  std::uint64_t seed);

// One-standard-error rule: among cells whose mean is within one SE (of the
// minimizing cell) of the minimum, pick the one with the fewest trees, then
// the smallest depth. Independent of the order of `cells`.
std::size_t select_one_se(std::span<const CvCell> cells);

// For each depth and fold, one ensemble of max(tree_counts) trees is trained
// and every tree-count cell is read off its prefixes.
CvResult cross_validate(std::span<const Episode> episodes, const DatasetSchema& schema,
                        const CvGrid& grid, int k, std::uint64_t seed,
                        const TrainConfig& base_config);

}  // namespace hazardforge
