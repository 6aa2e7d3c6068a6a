#include "hazardforge/cv_select.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <string>
#include <tuple>

#include "hazardforge/error.hpp"
#include "hazardforge/parallel.hpp"

namespace hazardforge {

std::vector<int> CvGrid::default_tree_counts() {
  std::vector<int> out;
  for (int m = 25; m <= 500; m += 25) out.push_back(m);
  return out;
}

void CvGrid::validate() const {
  for (const auto* axis : {&depths, &tree_counts}) {
    if (axis->empty()) throw Error(ErrorKind::kInvalidArgument, "CV grid axis is empty");
    for (std::size_t i = 0; i < axis->size(); ++i) {
      if ((*axis)[i] <= 0) throw Error(ErrorKind::kInvalidArgument, "CV grid values must be positive");
      if (i > 0 && (*axis)[i] <= (*axis)[i - 1]) {
        throw Error(ErrorKind::kInvalidArgument, "CV grid values must be strictly ascending");
      }
    }
  }
}

std::vector<std::vector<std::size_t>> kfold_split(std::span<const Episode> episodes, int k,
                                                  std::uint64_t seed) {
  if (k < 2) throw Error(ErrorKind::kInvalidArgument, "k must be at least 2");
  std::vector<std::string> subjects;
  std::map<std::string, std::vector<std::size_t>> by_subject;
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    auto& members = by_subject[episodes[i].subject_id];
    if (members.empty()) subjects.push_back(episodes[i].subject_id);
    members.push_back(i);
  }
  if (subjects.size() < static_cast<std::size_t>(k)) {
    throw Error(ErrorKind::kTooFewGroups, "fewer subjects (" + std::to_string(subjects.size()) +
                                              ") than folds (" + std::to_string(k) + ")");
  }
  std::sort(subjects.begin(), subjects.end());
  std::mt19937_64 rng(seed);
  std::shuffle(subjects.begin(), subjects.end(), rng);

  std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    auto& fold = folds[s % folds.size()];
    const auto& members = by_subject[subjects[s]];
    fold.insert(fold.end(), members.begin(), members.end());
  }
  for (auto& fold : folds) std::sort(fold.begin(), fold.end());
  return folds;
}

std::size_t select_one_se(std::span<const CvCell> cells) {
  if (cells.empty()) throw Error(ErrorKind::kInvalidArgument, "no CV cells to select from");
  auto simpler = [](const CvCell& a, const CvCell& b) {
    return std::tie(a.trees, a.depth) < std::tie(b.trees, b.depth);
  };
  std::size_t best = 0;
  for (std::size_t i = 1; i < cells.size(); ++i) {
    const auto& c = cells[i];
    const auto& b = cells[best];
    if (c.mean_nll < b.mean_nll || (c.mean_nll == b.mean_nll && simpler(c, b))) best = i;
  }
  const double cutoff = cells[best].mean_nll + cells[best].se;
  std::size_t chosen = best;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i].mean_nll <= cutoff && simpler(cells[i], cells[chosen])) chosen = i;
  }
  return chosen;
}

CvResult cross_validate(std::span<const Episode> episodes, const DatasetSchema& schema,
                        const CvGrid& grid, int k, std::uint64_t seed,
                        const TrainConfig& base_config) {
  grid.validate();
  const auto folds = kfold_split(episodes, k, seed);
  const int max_trees = grid.tree_counts.back();

  // fold_values[d][f][c]: held-out NLL per exposure hour for depth d, fold f,
  // tree-count cell c.
  const std::size_t n_depths = grid.depths.size();
  const std::size_t n_folds = folds.size();
  std::vector<std::vector<std::vector<double>>> fold_values(
      n_depths, std::vector<std::vector<double>>(n_folds));

  parallel_for(n_depths * n_folds, [&](std::size_t job) {
    const std::size_t d = job / n_folds;
    const std::size_t f = job % n_folds;
    std::vector<Episode> train_set;
    std::vector<Episode> held_out;
    for (std::size_t g = 0; g < n_folds; ++g) {
      auto& dst = g == f ? held_out : train_set;
      for (const auto i : folds[g]) dst.push_back(episodes[i]);
    }
    TrainConfig config = base_config;
    config.max_depth = grid.depths[d];
    config.num_trees = max_trees;
    const HazardEnsemble model = train(train_set, schema, config);
    auto nll = neg_log_likelihood_path(model, held_out, grid.tree_counts);
    const double exposure = total_exposure(held_out);
    for (auto& v : nll) v /= exposure;
    fold_values[d][f] = std::move(nll);
  });

  CvResult result;
  const double kf = static_cast<double>(n_folds);
  for (std::size_t d = 0; d < n_depths; ++d) {
    for (std::size_t c = 0; c < grid.tree_counts.size(); ++c) {
      CvCell cell;
      cell.depth = grid.depths[d];
      cell.trees = grid.tree_counts[c];
      for (std::size_t f = 0; f < n_folds; ++f) cell.fold_nll.push_back(fold_values[d][f][c]);
      double mean = 0.0;
      for (const double v : cell.fold_nll) mean += v;
      mean /= kf;
      double ss = 0.0;
      for (const double v : cell.fold_nll) ss += (v - mean) * (v - mean);
      cell.mean_nll = mean;
      cell.se = std::sqrt(ss / (kf - 1.0)) / std::sqrt(kf);
      result.cells.push_back(std::move(cell));
    }
  }
  const auto chosen = select_one_se(result.cells);
  result.selected_depth = result.cells[chosen].depth;
  result.selected_trees = result.cells[chosen].trees;
  return result;
}

}  // namespace hazardforge
