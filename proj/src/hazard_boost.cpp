#include "hazardforge/hazard_boost.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hazardforge/error.hpp"
#include "hazardforge/parallel.hpp"

namespace hazardforge {

// ---------------------------------------------------------------------------
// Evaluation.

double Tree::evaluate(double t, std::span<const double> x) const {
  int i = 0;
  while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
    const TreeNode& n = nodes[static_cast<std::size_t>(i)];
    const double v = n.feature == kTimeFeature ? t : x[static_cast<std::size_t>(n.feature - 1)];
    const bool go_left = is_missing(v) ? n.missing_goes_left : v < n.threshold;
    i = go_left ? n.left : n.right;
  }
  return nodes[static_cast<std::size_t>(i)].value;
}

int Tree::depth() const {
  if (nodes.empty()) return 0;
  std::vector<int> d(nodes.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    if (n.is_leaf()) continue;
    d[static_cast<std::size_t>(n.left)] = d[i] + 1;
    d[static_cast<std::size_t>(n.right)] = d[i] + 1;
    best = std::max(best, d[i] + 1);
  }
  return best;
}

void TrainConfig::validate() const {
  if (max_depth < 1) throw Error(ErrorKind::kInvalidArgument, "max_depth must be >= 1");
  if (num_trees < 0) throw Error(ErrorKind::kInvalidArgument, "num_trees must be >= 0");
  if (!(nu > 0.0 && nu <= 1.0)) throw Error(ErrorKind::kInvalidArgument, "nu must lie in (0, 1]");
  if (max_quantile_bins < 2 || max_quantile_bins > 65000) {
    throw Error(ErrorKind::kInvalidArgument, "max_quantile_bins must lie in [2, 65000]");
  }
  if (!(min_hessian_per_leaf > 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "min_hessian_per_leaf must be positive");
  }
  if (!(leaf_value_clamp > 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "leaf_value_clamp must be positive");
  }
}

HazardEnsemble HazardEnsemble::prefix(std::size_t m) const {
  HazardEnsemble out = *this;
  out.trees.resize(std::min(m, trees.size()));
  out.refresh_time_split_points();
  return out;
}

void HazardEnsemble::refresh_time_split_points() {
  time_split_points.clear();
  for (const auto& tree : trees) {
    for (const auto& n : tree.nodes) {
      if (!n.is_leaf() && n.feature == kTimeFeature) time_split_points.push_back(n.threshold);
    }
  }
  std::sort(time_split_points.begin(), time_split_points.end());
  time_split_points.erase(std::unique(time_split_points.begin(), time_split_points.end()),
                          time_split_points.end());
}

double HazardEnsemble::tree_sum(double t, std::span<const double> x) const {
  double s = 0.0;
  for (const auto& tree : trees) s += tree.evaluate(t, x);
  return s;
}

double log_hazard(const HazardEnsemble& model, double t, std::span<const double> x) {
  return model.f0 + model.nu * model.tree_sum(t, x);
}

double hazard(const HazardEnsemble& model, double t, std::span<const double> x) {
  return model.base_hazard * std::exp(model.nu * model.tree_sum(t, x));
}

double fit_f0(std::span<const Episode> episodes) {
  const long long n = event_count(episodes);
  const double exposure = total_exposure(episodes);
  if (n <= 0) throw Error(ErrorKind::kDegenerateData, "no events in training data");
  if (!(exposure > 0.0)) throw Error(ErrorKind::kDegenerateData, "zero exposure in training data");
  return std::log(static_cast<double>(n) / exposure);
}

namespace {

// Piece boundaries of [t_start, t_end) split at the sorted points.
void piece_bounds(double t_start, double t_end, std::span<const double> points,
                  std::vector<double>& bounds) {
  bounds.clear();
  bounds.push_back(t_start);
  for (auto it = std::upper_bound(points.begin(), points.end(), t_start);
       it != points.end() && *it < t_end; ++it) {
    bounds.push_back(*it);
  }
  bounds.push_back(t_end);
}

// NLL contribution of one epoch given the tree sum on each piece. Adjacent
// pieces with identical sums are merged first, so the result depends only on
// the hazard function and not on how finely the epoch was partitioned.
double epoch_contribution(const HazardEnsemble& m, std::span<const double> bounds,
                          std::span<const double> sums, int delta) {
  double integral = 0.0;
  std::size_t i = 0;
  while (i < sums.size()) {
    std::size_t j = i;
    while (j + 1 < sums.size() && sums[j + 1] == sums[i]) ++j;
    integral += m.base_hazard * std::exp(m.nu * sums[i]) * (bounds[j + 1] - bounds[i]);
    i = j + 1;
  }
  if (delta == 1) integral -= m.f0 + m.nu * sums.back();
  return integral;
}

}  // namespace

double neg_log_likelihood(const HazardEnsemble& model, std::span<const Episode> episodes) {
  double total = 0.0;
  std::vector<double> bounds;
  std::vector<double> sums;
  for (const auto& ep : episodes) {
    for (const auto& e : ep.epochs) {
      piece_bounds(e.t_start, e.t_end, model.time_split_points, bounds);
      sums.resize(bounds.size() - 1);
      for (std::size_t p = 0; p + 1 < bounds.size(); ++p) {
        sums[p] = model.tree_sum(bounds[p], e.covariates);
      }
      total += epoch_contribution(model, bounds, sums, e.delta);
    }
  }
  return total;
}

std::vector<double> neg_log_likelihood_path(const HazardEnsemble& model,
                                            std::span<const Episode> episodes,
                                            std::span<const int> tree_counts) {
  for (int c : tree_counts) {
    if (c < 0 || static_cast<std::size_t>(c) > model.trees.size()) {
      throw Error(ErrorKind::kInvalidArgument, "tree count outside the ensemble");
    }
  }
  std::vector<double> totals(tree_counts.size(), 0.0);
  std::vector<double> bounds;
  std::vector<double> running;
  const int max_count =
      tree_counts.empty() ? 0 : *std::max_element(tree_counts.begin(), tree_counts.end());
  // snapshots[c][p]: tree sum over the first c trees on piece p.
  std::vector<std::vector<double>> snapshots(static_cast<std::size_t>(max_count) + 1);
  for (const auto& ep : episodes) {
    for (const auto& e : ep.epochs) {
      piece_bounds(e.t_start, e.t_end, model.time_split_points, bounds);
      const std::size_t n_pieces = bounds.size() - 1;
      running.assign(n_pieces, 0.0);
      snapshots[0] = running;
      for (int m = 0; m < max_count; ++m) {
        const Tree& tree = model.trees[static_cast<std::size_t>(m)];
        for (std::size_t p = 0; p < n_pieces; ++p) {
          running[p] += tree.evaluate(bounds[p], e.covariates);
        }
        snapshots[static_cast<std::size_t>(m) + 1] = running;
      }
      for (std::size_t c = 0; c < tree_counts.size(); ++c) {
        totals[c] += epoch_contribution(
            model, bounds, snapshots[static_cast<std::size_t>(tree_counts[c])], e.delta);
      }
    }
  }
  return totals;
}

std::vector<HazardPiece> hazard_pieces(const HazardEnsemble& model, const Epoch& epoch) {
  std::vector<double> bounds;
  piece_bounds(epoch.t_start, epoch.t_end, model.time_split_points, bounds);
  std::vector<HazardPiece> out;
  out.reserve(bounds.size() - 1);
  for (std::size_t p = 0; p + 1 < bounds.size(); ++p) {
    out.push_back({bounds[p], bounds[p + 1], hazard(model, bounds[p], epoch.covariates)});
  }
  return out;
}

std::vector<HazardPiece> hazard_pieces(const HazardEnsemble& model, const Episode& ep) {
  std::vector<HazardPiece> out;
  for (const auto& e : ep.epochs) {
    auto pieces = hazard_pieces(model, e);
    out.insert(out.end(), pieces.begin(), pieces.end());
  }
  return out;
}

double cumulative_hazard(const HazardEnsemble& model, const Episode& ep, double t) {
  const double start = model.schema.monitoring_start;
  if (t < start) {
    throw Error(ErrorKind::kOutOfRange, "survival requested before monitoring start");
  }
  if (ep.epochs.empty() || t > ep.epochs.back().t_end) {
    throw Error(ErrorKind::kOutOfRange, "survival requested beyond the episode's last epoch");
  }
  double total = 0.0;
  std::vector<double> bounds;
  for (const auto& e : ep.epochs) {
    if (e.t_start >= t) break;
    const double lo = std::max(e.t_start, start);
    const double hi = std::min(e.t_end, t);
    if (!(lo < hi)) continue;
    piece_bounds(lo, hi, model.time_split_points, bounds);
    for (std::size_t p = 0; p + 1 < bounds.size(); ++p) {
      total += hazard(model, bounds[p], e.covariates) * (bounds[p + 1] - bounds[p]);
    }
  }
  return total;
}

double survival(const HazardEnsemble& model, const Episode& ep, double t) {
  return std::exp(-cumulative_hazard(model, ep, t));
}

// ---------------------------------------------------------------------------
// Split candidates.

namespace {

double midpoint(double a, double b) {
  const double m = a + (b - a) / 2.0;
  return a < m ? m : b;
}

std::vector<double> time_cut_candidates(std::span<const Episode> episodes, int max_bins) {
  std::vector<double> bounds;
  for (const auto& ep : episodes) {
    for (const auto& e : ep.epochs) {
      bounds.push_back(e.t_start);
      bounds.push_back(e.t_end);
    }
  }
  std::sort(bounds.begin(), bounds.end());
  bounds.erase(std::unique(bounds.begin(), bounds.end()), bounds.end());
  if (bounds.size() < 3) return {};
  const double lo = bounds.front();
  const double hi = bounds.back();
  if (bounds.size() - 2 <= static_cast<std::size_t>(max_bins - 1)) {
    return {bounds.begin() + 1, bounds.end() - 1};
  }

  // Exposure-weighted quantiles of time: sweep the coverage count over the
  // elementary intervals between consecutive boundaries.
  std::vector<std::pair<double, int>> sweep;
  for (const auto& ep : episodes) {
    for (const auto& e : ep.epochs) {
      sweep.emplace_back(e.t_start, +1);
      sweep.emplace_back(e.t_end, -1);
    }
  }
  std::sort(sweep.begin(), sweep.end());
  std::vector<double> left;
  std::vector<double> width;
  std::vector<double> cover;
  double total = 0.0;
  long long c = 0;
  for (std::size_t i = 0; i + 1 < sweep.size(); ++i) {
    c += sweep[i].second;
    const double w = sweep[i + 1].first - sweep[i].first;
    if (w > 0.0 && c > 0) {
      left.push_back(sweep[i].first);
      width.push_back(w);
      cover.push_back(static_cast<double>(c));
      total += w * static_cast<double>(c);
    }
  }
  std::vector<double> cuts;
  double cum = 0.0;
  std::size_t i = 0;
  for (int k = 1; k < max_bins; ++k) {
    const double target = total * static_cast<double>(k) / static_cast<double>(max_bins);
    while (i < left.size() && cum + width[i] * cover[i] < target) {
      cum += width[i] * cover[i];
      ++i;
    }
    if (i == left.size()) break;
    const double u = left[i] + (target - cum) / cover[i];
    if (u > lo && u < hi && (cuts.empty() || u > cuts.back())) cuts.push_back(u);
  }
  return cuts;
}

std::vector<double> feature_thresholds(std::span<const Episode> episodes, std::size_t j,
                                       int max_bins) {
  std::vector<std::pair<double, double>> vw;
  for (const auto& ep : episodes) {
    for (const auto& e : ep.epochs) {
      const double x = e.covariates[j];
      if (!is_missing(x)) vw.emplace_back(x, e.duration());
    }
  }
  std::sort(vw.begin(), vw.end());
  std::vector<double> values;
  std::vector<double> weights;
  for (const auto& [x, w] : vw) {
    if (values.empty() || values.back() != x) {
      values.push_back(x);
      weights.push_back(w);
    } else {
      weights.back() += w;
    }
  }
  std::vector<double> out;
  if (values.size() < 2) return out;
  if (values.size() <= static_cast<std::size_t>(max_bins)) {
    for (std::size_t i = 0; i + 1 < values.size(); ++i) {
      out.push_back(midpoint(values[i], values[i + 1]));
    }
    return out;
  }
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  double cum = 0.0;
  std::size_t i = 0;
  for (int k = 1; k < max_bins; ++k) {
    const double target = total * static_cast<double>(k) / static_cast<double>(max_bins);
    while (i < values.size() && cum + weights[i] < target) {
      cum += weights[i];
      ++i;
    }
    if (i + 1 >= values.size()) break;
    const double thr = midpoint(values[i], values[i + 1]);
    if (out.empty() || thr > out.back()) out.push_back(thr);
  }
  return out;
}

}  // namespace

SplitCandidates make_split_candidates(std::span<const Episode> episodes, std::size_t width,
                                      int max_bins) {
  SplitCandidates c;
  c.time_cuts = time_cut_candidates(episodes, max_bins);
  c.feature_thresholds.resize(width);
  for (std::size_t j = 0; j < width; ++j) {
    c.feature_thresholds[j] = feature_thresholds(episodes, j, max_bins);
  }
  return c;
}

// ---------------------------------------------------------------------------
// Training.

namespace {

// Epochs cut at every candidate time threshold, so each fragment falls on a
// single side of any time split. Covariate bins are stored per epoch.
struct FragmentTable {
  std::vector<std::uint32_t> epoch;
  std::vector<double> t_lo;
  std::vector<double> dt;
  std::vector<std::uint8_t> delta;
  std::vector<std::uint16_t> time_bin;

  // bins[j][epoch]; the missing bin is thresholds[j].size() + 1.
  std::vector<std::vector<std::uint16_t>> bins;

  std::size_t size() const { return dt.size(); }
};

FragmentTable build_fragments(std::span<const Episode> episodes, const SplitCandidates& cand) {
  FragmentTable table;
  const std::size_t width = cand.feature_thresholds.size();
  table.bins.resize(width);
  std::uint32_t row = 0;
  const auto& cuts = cand.time_cuts;
  for (const auto& ep : episodes) {
    for (const auto& e : ep.epochs) {
      for (std::size_t j = 0; j < width; ++j) {
        const auto& thr = cand.feature_thresholds[j];
        const double x = e.covariates[j];
        const auto bin = is_missing(x)
                             ? thr.size() + 1
                             : static_cast<std::size_t>(
                                   std::upper_bound(thr.begin(), thr.end(), x) - thr.begin());
        table.bins[j].push_back(static_cast<std::uint16_t>(bin));
      }
      double lo = e.t_start;
      auto it = std::upper_bound(cuts.begin(), cuts.end(), e.t_start);
      auto push = [&](double a, double b, int delta) {
        table.epoch.push_back(row);
        table.t_lo.push_back(a);
        table.dt.push_back(b - a);
        table.delta.push_back(static_cast<std::uint8_t>(delta));
        table.time_bin.push_back(static_cast<std::uint16_t>(
            std::upper_bound(cuts.begin(), cuts.end(), a) - cuts.begin()));
      };
      for (; it != cuts.end() && *it < e.t_end; ++it) {
        push(lo, *it, 0);
        lo = *it;
      }
      push(lo, e.t_end, e.delta);
      ++row;
    }
  }
  return table;
}

struct SplitChoice {
  double gain = 0.0;
  int feature = -1;
  std::size_t index = 0;  // threshold index
  bool missing_left = true;
};

// Candidates replace the incumbent only when better by more than rounding
// noise, so ties resolve to the lowest feature, then threshold, then left.
bool better(double gain, double incumbent) {
  return gain > incumbent + 1e-12 * std::max(1.0, std::abs(incumbent));
}

double split_score(double g, double h) { return g * g / h; }

class TreeGrower {
 public:
  TreeGrower(const FragmentTable& table, const SplitCandidates& cand, const TrainConfig& config,
             std::span<const double> grad, std::span<const double> hess)
      : table_(table), cand_(cand), config_(config), grad_(grad), hess_(hess) {}

  // Grows one tree and writes the leaf value of every fragment.
  Tree grow(std::span<double> fragment_value) {
    Tree tree;
    std::vector<std::uint32_t> all(table_.size());
    std::iota(all.begin(), all.end(), 0u);
    tree.nodes.emplace_back();
    build(tree, 0, std::move(all), 0, fragment_value);
    return tree;
  }

 private:
  std::size_t bin_of(int feature, std::uint32_t frag) const {
    if (feature == kTimeFeature) return table_.time_bin[frag];
    return table_.bins[static_cast<std::size_t>(feature - 1)][table_.epoch[frag]];
  }

  std::size_t n_thresholds(int feature) const {
    return feature == kTimeFeature
               ? cand_.time_cuts.size()
               : cand_.feature_thresholds[static_cast<std::size_t>(feature - 1)].size();
  }

  double threshold(int feature, std::size_t k) const {
    return feature == kTimeFeature
               ? cand_.time_cuts[k]
               : cand_.feature_thresholds[static_cast<std::size_t>(feature - 1)][k];
  }

  SplitChoice best_for_feature(int feature, std::span<const std::uint32_t> frags, double g_parent,
                               double h_parent) const {
    SplitChoice best;
    const std::size_t n_thr = n_thresholds(feature);
    if (n_thr == 0) return best;
    // Regular bins 0..n_thr, then the missing bin.
    std::vector<double> g(n_thr + 2, 0.0);
    std::vector<double> h(n_thr + 2, 0.0);
    for (const auto f : frags) {
      const std::size_t b = bin_of(feature, f);
      g[b] += grad_[f];
      h[b] += hess_[f];
    }
    const double g_miss = g[n_thr + 1];
    const double h_miss = h[n_thr + 1];
    const double g_present = g_parent - g_miss;
    const double h_present = h_parent - h_miss;
    const double parent = split_score(g_parent, h_parent);
    const double min_h = config_.min_hessian_per_leaf;

    double gl = 0.0;
    double hl = 0.0;
    for (std::size_t k = 0; k < n_thr; ++k) {
      gl += g[k];
      hl += h[k];
      const double gr = g_present - gl;
      const double hr = h_present - hl;
      for (const bool miss_left : {true, false}) {
        const double gl2 = miss_left ? gl + g_miss : gl;
        const double hl2 = miss_left ? hl + h_miss : hl;
        const double gr2 = miss_left ? gr : gr + g_miss;
        const double hr2 = miss_left ? hr : hr + h_miss;
        if (hl2 < min_h || hr2 < min_h) continue;
        const double gain = split_score(gl2, hl2) + split_score(gr2, hr2) - parent;
        if (gain > 0.0 && (best.feature < 0 || better(gain, best.gain))) {
          best = {gain, feature, k, miss_left};
        }
      }
    }
    return best;
  }

  bool goes_left(const SplitChoice& s, std::uint32_t frag) const {
    const std::size_t b = bin_of(s.feature, frag);
    const std::size_t n_thr = n_thresholds(s.feature);
    if (b == n_thr + 1) return s.missing_left;
    return b <= s.index;
  }

  void build(Tree& tree, int node, std::vector<std::uint32_t> frags, int depth,
             std::span<double> fragment_value) {
    double g_parent = 0.0;
    double h_parent = 0.0;
    double events = 0.0;
    for (const auto f : frags) {
      g_parent += grad_[f];
      h_parent += hess_[f];
      events += table_.delta[f];
    }

    SplitChoice best;
    if (depth < config_.max_depth && frags.size() >= 2) {
      const int n_features = static_cast<int>(cand_.feature_thresholds.size()) + 1;
      std::vector<SplitChoice> per_feature(static_cast<std::size_t>(n_features));
      const std::size_t workers = frags.size() >= 4096 ? 0 : 1;
      parallel_for(
          per_feature.size(),
          [&](std::size_t j) {
            per_feature[j] = best_for_feature(static_cast<int>(j), frags, g_parent, h_parent);
          },
          workers);
      for (const auto& c : per_feature) {
        if (c.feature < 0) continue;
        if (best.feature < 0 || better(c.gain, best.gain)) best = c;
      }
    }

    if (best.feature < 0) {
      double theta = events > 0.0 ? std::log(events / h_parent) : -config_.leaf_value_clamp;
      theta = std::clamp(theta, -config_.leaf_value_clamp, config_.leaf_value_clamp);
      tree.nodes[static_cast<std::size_t>(node)].value = theta;
      for (const auto f : frags) fragment_value[f] = theta;
      return;
    }

    std::vector<std::uint32_t> left;
    std::vector<std::uint32_t> right;
    for (const auto f : frags) (goes_left(best, f) ? left : right).push_back(f);
    frags.clear();
    frags.shrink_to_fit();

    const int l = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    const int r = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    TreeNode& n = tree.nodes[static_cast<std::size_t>(node)];
    n.feature = best.feature;
    n.threshold = threshold(best.feature, best.index);
    n.missing_goes_left = best.missing_left;
    n.gain = best.gain;
    n.left = l;
    n.right = r;
    build(tree, l, std::move(left), depth + 1, fragment_value);
    build(tree, r, std::move(right), depth + 1, fragment_value);
  }

  const FragmentTable& table_;
  const SplitCandidates& cand_;
  const TrainConfig& config_;
  std::span<const double> grad_;
  std::span<const double> hess_;
};

}  // namespace

HazardEnsemble train(std::span<const Episode> episodes, const DatasetSchema& schema,
                     const TrainConfig& config, TrainLog* log) {
  config.validate();
  for (const auto& ep : episodes) {
    for (const auto& e : ep.epochs) {
      if (e.covariates.size() != schema.width()) {
        throw Error(ErrorKind::kSchemaMismatch,
                    "episode '" + ep.episode_id + "' width does not match schema");
      }
    }
  }

  HazardEnsemble model;
  model.f0 = fit_f0(episodes);
  model.base_hazard =
      static_cast<double>(event_count(episodes)) / total_exposure(episodes);
  model.nu = config.nu;
  model.schema = schema;

  const SplitCandidates cand =
      make_split_candidates(episodes, schema.width(), config.max_quantile_bins);
  const FragmentTable table = build_fragments(episodes, cand);
  const std::size_t n = table.size();

  std::vector<double> sum(n, 0.0);
  std::vector<double> grad(n);
  std::vector<double> hess(n);
  std::vector<double> leaf(n);

  auto refresh = [&] {
    double nll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double w = model.base_hazard * std::exp(model.nu * sum[i]) * table.dt[i];
      hess[i] = w;
      grad[i] = w - table.delta[i];
      nll += w;
      if (table.delta[i]) nll -= model.f0 + model.nu * sum[i];
    }
    return nll;
  };

  double nll = refresh();
  if (log) {
    log->round_nll.clear();
    log->round_nll.push_back(nll);
  }
  for (int m = 0; m < config.num_trees; ++m) {
    TreeGrower grower(table, cand, config, grad, hess);
    model.trees.push_back(grower.grow(leaf));
    for (std::size_t i = 0; i < n; ++i) sum[i] += leaf[i];
    nll = refresh();
    if (log) log->round_nll.push_back(nll);
  }
  model.refresh_time_split_points();
  return model;
}

std::vector<std::pair<std::string, double>> variable_importance(const HazardEnsemble& model) {
  std::vector<std::pair<std::string, double>> out;
  out.emplace_back("t", 0.0);
  for (const auto& name : model.schema.feature_names) out.emplace_back(name, 0.0);
  for (const auto& tree : model.trees) {
    for (const auto& n : tree.nodes) {
      if (n.is_leaf()) continue;
      if (static_cast<std::size_t>(n.feature) < out.size()) {
        out[static_cast<std::size_t>(n.feature)].second += n.gain;
      }
    }
  }
  double top = 0.0;
  for (const auto& [name, v] : out) top = std::max(top, v);
  if (top > 0.0) {
    for (auto& [name, v] : out) v /= top;
  }
  return out;
}

}  // namespace hazardforge
