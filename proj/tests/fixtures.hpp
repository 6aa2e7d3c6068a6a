#pragma once

// Random models, trajectories and small datasets shared by the unit and
// acceptance tests.

#include <random>
#include <string>
#include <vector>

#include "hazardforge/hazard_boost.hpp"
#include "hazardforge/survival_data.hpp"

namespace fixture {

using namespace hazardforge;

inline DatasetSchema numeric_schema(std::size_t width, double monitoring_start = 24.0) {
  DatasetSchema s;
  for (std::size_t j = 0; j < width; ++j) s.append("x" + std::to_string(j), FeatureKind::kNumeric);
  s.monitoring_start = monitoring_start;
  return s;
}

inline void grow_random(Tree& tree, int node, int depth, std::mt19937_64& rng, std::size_t width,
                        double t_lo, double t_hi) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (depth == 0 || u(rng) < 0.2) {
    tree.nodes[static_cast<std::size_t>(node)].value = 2.0 * u(rng) - 1.0;
    return;
  }
  const int feature = static_cast<int>(rng() % (width + 1));
  const double threshold = feature == kTimeFeature ? t_lo + (t_hi - t_lo) * u(rng) : u(rng);
  const int l = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  tree.nodes.emplace_back();
  auto& n = tree.nodes[static_cast<std::size_t>(node)];
  n.feature = feature;
  n.threshold = threshold;
  n.missing_goes_left = u(rng) < 0.5;
  n.left = l;
  n.right = l + 1;
  n.gain = u(rng);
  grow_random(tree, l, depth - 1, rng, width, t_lo, t_hi);
  grow_random(tree, l + 1, depth - 1, rng, width, t_lo, t_hi);
}

inline HazardEnsemble random_model(std::mt19937_64& rng, std::size_t width, int n_trees,
                                   int depth, double t_lo = 24.0, double t_hi = 60.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  HazardEnsemble m;
  m.base_hazard = 0.05 + 0.3 * u(rng);
  m.f0 = std::log(m.base_hazard);
  m.nu = 0.05 + 0.95 * u(rng);
  m.schema = numeric_schema(width, t_lo);
  for (int k = 0; k < n_trees; ++k) {
    Tree tree;
    tree.nodes.emplace_back();
    grow_random(tree, 0, depth, rng, width, t_lo, t_hi);
    m.trees.push_back(std::move(tree));
  }
  m.refresh_time_split_points();
  return m;
}

// Trajectory from t0 with random epoch lengths, occasional gaps, missing
// values and events.
inline Episode random_episode(std::mt19937_64& rng, std::size_t width, int n_epochs,
                              double t0 = 24.0, const std::string& id = "e") {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Episode ep{id, "s-" + id, {}, false};
  double t = t0;
  for (int k = 0; k < n_epochs; ++k) {
    const double end = t + 0.2 + 6.0 * u(rng);
    std::vector<double> x(width);
    for (auto& v : x) v = u(rng) < 0.1 ? kMissing : u(rng);
    ep.epochs.push_back({t, end, std::move(x), u(rng) < 0.3 ? 1 : 0});
    t = end + (u(rng) < 0.25 ? 2.0 * u(rng) : 0.0);
  }
  ep.censored_admin = ep.epochs.back().delta == 0;
  return ep;
}

// Tiny dataset with at most three distinct values per covariate (plus
// missing) and at most three elementary time bins.
inline std::vector<Episode> small_dataset(std::mt19937_64& rng, std::size_t width) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int n_bins = 1 + static_cast<int>(rng() % 3);
  std::vector<double> bounds = {24.0};
  for (int b = 0; b < n_bins; ++b) bounds.push_back(bounds.back() + 0.5 + 4.0 * u(rng));
  std::vector<std::vector<double>> levels(width);
  for (auto& lv : levels) {
    const int n = 1 + static_cast<int>(rng() % 3);
    for (int i = 0; i < n; ++i) lv.push_back(std::round(10.0 * u(rng)) / 2.0);
  }
  const int n_episodes = 2 + static_cast<int>(rng() % 7);
  std::vector<Episode> out;
  for (int i = 0; i < n_episodes; ++i) {
    Episode ep{"e" + std::to_string(i), "s" + std::to_string(i), {}, false};
    // consecutive bins, each epoch spanning one or more bins
    std::size_t b = rng() % static_cast<std::size_t>(n_bins);
    while (b < static_cast<std::size_t>(n_bins)) {
      const std::size_t span = 1 + rng() % (static_cast<std::size_t>(n_bins) - b);
      std::vector<double> x(width);
      for (std::size_t j = 0; j < width; ++j) {
        x[j] = u(rng) < 0.15 ? kMissing : levels[j][rng() % levels[j].size()];
      }
      ep.epochs.push_back({bounds[b], bounds[b + span], std::move(x), u(rng) < 0.4 ? 1 : 0});
      b += span;
      if (u(rng) < 0.3) break;
    }
    out.push_back(std::move(ep));
  }
  if (event_count(out) == 0) out.front().epochs.front().delta = 1;
  return out;
}

}  // namespace fixture
