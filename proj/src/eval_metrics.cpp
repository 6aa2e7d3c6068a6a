#include "hazardforge/eval_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hazardforge/error.hpp"

namespace hazardforge {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::kTruePositive: return "TP";
    case Outcome::kFalsePositive: return "FP";
    case Outcome::kFalseNegative: return "FN";
    case Outcome::kTrueNegative: return "TN";
  }
  return "TN";
}

MonitoringTrace make_trace(const HazardEnsemble& model, const Episode& ep) {
  MonitoringTrace trace;
  trace.episode_id = ep.episode_id;
  trace.monitoring_start = model.schema.monitoring_start;
  trace.path = hazard_pieces(model, ep);
  const double t_event = first_event_time(ep);
  if (!is_missing(t_event)) trace.first_event_time = t_event;
  trace.monitored_until = ep.epochs.empty() ? trace.monitoring_start : ep.epochs.back().t_end;
  return trace;
}

EpisodeScore episode_score(const MonitoringTrace& trace) {
  EpisodeScore s;
  s.positive = trace.first_event_time.has_value();
  s.score = kNegInf;
  for (const auto& piece : trace.path) {
    if (s.positive && !(piece.t_start < *trace.first_event_time)) break;
    s.score = std::max(s.score, piece.hazard);
  }
  s.empty_pre_event_window = s.positive && s.score == kNegInf;
  return s;
}

FlagOutcome flag_outcome(const MonitoringTrace& trace, double rho) {
  FlagOutcome out;
  out.episode_id = trace.episode_id;
  const auto s = episode_score(trace);
  out.score = s.score;
  out.positive = s.positive;
  for (const auto& piece : trace.path) {
    if (piece.hazard >= rho) {
      out.flag_time = piece.t_start;
      break;
    }
  }
  const bool timely =
      out.flag_time && (!s.positive || *out.flag_time < *trace.first_event_time);
  if (s.positive) {
    out.outcome = timely ? Outcome::kTruePositive : Outcome::kFalseNegative;
  } else {
    out.outcome = out.flag_time ? Outcome::kFalsePositive : Outcome::kTrueNegative;
  }
  return out;
}

Confusion confusion_at(std::span<const ScoredEpisode> scored, double rho) {
  Confusion c;
  for (const auto& s : scored) {
    const bool flagged = s.score >= rho;
    if (s.positive) {
      (flagged ? c.tp : c.fn) += 1;
    } else {
      (flagged ? c.fp : c.tn) += 1;
    }
  }
  return c;
}

Curves roc_pr_curves(std::span<const ScoredEpisode> scored) {
  long long n_pos = 0;
  for (const auto& s : scored) n_pos += s.positive ? 1 : 0;
  const long long n_neg = static_cast<long long>(scored.size()) - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw Error(ErrorKind::kSingleClass, "ROC/PR need at least one positive and one negative");
  }
  std::vector<std::size_t> order(scored.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scored[a].score > scored[b].score; });

  Curves c;
  c.roc.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  long long tp = 0;
  long long fp = 0;
  // Twice the trapezoid area in units of 1 / (n_pos * n_neg), kept integral
  // so the result matches the Mann-Whitney count exactly.
  long long area2 = 0;
  double recall_prev = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double thr = scored[order[i]].score;
    const long long tp_prev = tp;
    const long long fp_prev = fp;
    for (; i < order.size() && scored[order[i]].score == thr; ++i) {
      (scored[order[i]].positive ? tp : fp) += 1;
    }
    area2 += (fp - fp_prev) * (tp + tp_prev);
    const double tpr = static_cast<double>(tp) / static_cast<double>(n_pos);
    const double fpr = static_cast<double>(fp) / static_cast<double>(n_neg);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    c.roc.push_back({thr, fpr, tpr});
    c.pr.push_back({thr, tpr, precision});
    c.auc_pr += (tpr - recall_prev) * precision;
    recall_prev = tpr;
  }
  c.auroc = static_cast<double>(area2) / (2.0 * static_cast<double>(n_pos) *
                                          static_cast<double>(n_neg));
  return c;
}

F1Choice f1_optimal_threshold(std::span<const ScoredEpisode> scored) {
  long long n_pos = 0;
  std::vector<double> thresholds;
  for (const auto& s : scored) {
    n_pos += s.positive ? 1 : 0;
    if (std::isfinite(s.score)) thresholds.push_back(s.score);
  }
  if (n_pos == 0) throw Error(ErrorKind::kSingleClass, "F1 needs at least one positive");
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  // Sweep ascending; F1 = 2TP / (2TP + FP + FN) compared as exact fractions.
  F1Choice best{std::numeric_limits<double>::infinity(), 0.0};
  long long best_num = -1;
  long long best_den = 1;
  for (const double rho : thresholds) {
    const auto c = confusion_at(scored, rho);
    const long long num = 2 * c.tp;
    const long long den = 2 * c.tp + c.fp + c.fn;
    if (best_num < 0 || num * best_den > best_num * den) {
      best_num = num;
      best_den = den;
      best = {rho, den > 0 ? static_cast<double>(num) / static_cast<double>(den) : 0.0};
    }
  }
  return best;
}

std::vector<double> default_bucket_edges() { return {0.0, 24.0, 48.0, 72.0}; }

LeadTimeReport lead_times(std::span<const MonitoringTrace> traces, double rho,
                          std::span<const double> bucket_edges) {
  LeadTimeReport r;
  r.bucket_edges.assign(bucket_edges.begin(), bucket_edges.end());
  r.histogram.assign(bucket_edges.size(), 0);
  for (const auto& trace : traces) {
    const auto o = flag_outcome(trace, rho);
    if (o.outcome != Outcome::kTruePositive) continue;
    const double lead = *trace.first_event_time - *o.flag_time;
    r.hours.push_back(lead);
    const auto it = std::upper_bound(bucket_edges.begin(), bucket_edges.end(), lead);
    if (it != bucket_edges.begin()) ++r.histogram[static_cast<std::size_t>(it - bucket_edges.begin()) - 1];
  }
  return r;
}

std::vector<TimeBin> bins_from_edges(std::span<const double> edges) {
  std::vector<TimeBin> bins;
  for (std::size_t k = 0; k < edges.size(); ++k) {
    bins.push_back({edges[k], k + 1 < edges.size() ? edges[k + 1]
                                                   : std::numeric_limits<double>::infinity()});
  }
  return bins;
}

std::vector<AuctBin> auct_from_survival(std::span<const AuctSubject> subjects,
                                        const std::function<double(std::size_t, double)>& survival,
                                        std::span<const TimeBin> bins, double origin) {
  std::vector<double> times;
  for (const auto& s : subjects) {
    if (s.event) times.push_back(s.observed_time);
  }
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());

  std::vector<std::vector<double>> per_bin(bins.size());
  std::vector<std::size_t> cases;
  std::vector<std::size_t> controls;
  std::vector<double> s_case;
  std::vector<double> s_control;
  for (const double t : times) {
    const double rel = t - origin;
    std::size_t b = 0;
    while (b < bins.size() && !(rel >= bins[b].lo && rel < bins[b].hi)) ++b;
    if (b == bins.size()) continue;

    cases.clear();
    controls.clear();
    for (std::size_t i = 0; i < subjects.size(); ++i) {
      if (subjects[i].event && subjects[i].observed_time < t) cases.push_back(i);
      if (subjects[i].observed_time >= t) controls.push_back(i);
    }
    if (cases.empty() || controls.empty()) continue;
    s_case.clear();
    s_control.clear();
    for (const auto i : cases) s_case.push_back(survival(i, t));
    for (const auto j : controls) s_control.push_back(survival(j, t));
    std::sort(s_control.begin(), s_control.end());
    // Concordant: S_i < S_j. Count via binary search over sorted controls.
    double score2 = 0.0;  // twice the concordance count
    for (const double si : s_case) {
      const auto lo = std::lower_bound(s_control.begin(), s_control.end(), si);
      const auto hi = std::upper_bound(s_control.begin(), s_control.end(), si);
      const auto greater = static_cast<double>(s_control.end() - hi);
      const auto ties = static_cast<double>(hi - lo);
      score2 += 2.0 * greater + ties;
    }
    const double pairs = static_cast<double>(s_case.size()) * static_cast<double>(s_control.size());
    per_bin[b].push_back(score2 / (2.0 * pairs));
  }

  std::vector<AuctBin> out;
  for (std::size_t b = 0; b < bins.size(); ++b) {
    AuctBin ab;
    ab.bin = bins[b];
    const auto& v = per_bin[b];
    ab.n_times = v.size();
    if (!v.empty()) {
      const double n = static_cast<double>(v.size());
      const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
      double half = 0.0;
      if (v.size() >= 2) {
        double ss = 0.0;
        for (const double x : v) ss += (x - mean) * (x - mean);
        half = 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
      }
      ab.value = mean;
      ab.ci_lo = mean - half;
      ab.ci_hi = mean + half;
    }
    out.push_back(ab);
  }
  return out;
}

double trace_cumulative_hazard(const MonitoringTrace& trace, double t) {
  double total = 0.0;
  for (const auto& p : trace.path) {
    if (p.t_start >= t) break;
    const double lo = std::max(p.t_start, trace.monitoring_start);
    const double hi = std::min(p.t_end, t);
    if (lo < hi) total += p.hazard * (hi - lo);
  }
  return total;
}

std::vector<AuctBin> auct(std::span<const MonitoringTrace> traces, std::span<const TimeBin> bins) {
  std::vector<AuctSubject> subjects;
  subjects.reserve(traces.size());
  for (const auto& tr : traces) {
    subjects.push_back({tr.first_event_time.value_or(tr.monitored_until),
                        tr.first_event_time.has_value()});
  }
  const double origin = traces.empty() ? 0.0 : traces.front().monitoring_start;
  return auct_from_survival(
      subjects,
      [&](std::size_t i, double t) { return std::exp(-trace_cumulative_hazard(traces[i], t)); },
      bins, origin);
}

}  // namespace hazardforge
