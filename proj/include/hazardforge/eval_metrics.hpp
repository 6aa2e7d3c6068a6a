#pragma once

// Evaluation of realtime risk monitoring.
//
// Flagging protocol: an episode is flagged the first time its hazard reaches
// the threshold rho, and monitoring stops. A flag raised strictly before the
// episode's first event is a true positive however early it came; a flagged
// episode without an event is a false positive; an event not preceded by a
// flag is a false negative; everything else is a true negative.
//
// Sweeping rho over the per-episode scores from episode_score() reproduces
// this protocol exactly: positives are scored by the supremum of the hazard
// before the event, so a post-event spike never counts as a timely flag.

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hazardforge/hazard_boost.hpp"
#include "hazardforge/survival_data.hpp"

namespace hazardforge {

struct MonitoringTrace {
  std::string episode_id;
  double monitoring_start = 24.0;
  std::vector<HazardPiece> path;  // time-ordered, non-overlapping
  std::optional<double> first_event_time;
  double monitored_until = 0.0;
};

MonitoringTrace make_trace(const HazardEnsemble& model, const Episode& ep);

enum class Outcome { kTruePositive, kFalsePositive, kFalseNegative, kTrueNegative };
std::string_view to_string(Outcome o);

struct ScoredEpisode {
  double score = 0.0;
  bool positive = false;
};

struct EpisodeScore {
  double score = 0.0;
  bool positive = false;
  // Positive episode with no monitored time before its event; scored -inf.
  bool empty_pre_event_window = false;
};

EpisodeScore episode_score(const MonitoringTrace& trace);

struct FlagOutcome {
  std::string episode_id;
  double score = 0.0;
  bool positive = false;
  std::optional<double> flag_time;
  Outcome outcome = Outcome::kTrueNegative;
};

// Applies the flagging protocol at threshold rho.
FlagOutcome flag_outcome(const MonitoringTrace& trace, double rho);

struct Confusion {
  long long tp = 0;
  long long fp = 0;
  long long fn = 0;
  long long tn = 0;

  bool operator==(const Confusion&) const = default;
};

// Predicted positive iff score >= rho.
Confusion confusion_at(std::span<const ScoredEpisode> scored, double rho);

struct CurvePoint {
  double threshold = 0.0;
  double x = 0.0;  // FPR for ROC, recall for PR
  double y = 0.0;  // TPR for ROC, precision for PR
};

struct Curves {
  std::vector<CurvePoint> roc;
  std::vector<CurvePoint> pr;
  double auroc = 0.0;
  double auc_pr = 0.0;
};

// Thresholds at each distinct score, tied scores grouped. AUROC by trapezoid,
// AUC-PR by sum (R_k - R_{k-1}) * P_k. Throws kSingleClass.
Curves roc_pr_curves(std::span<const ScoredEpisode> scored);

struct F1Choice {
  double rho = 0.0;
  double f1 = 0.0;
};

// rho among the distinct finite scores maximizing F1; ties go to the
// smallest rho. Throws kSingleClass when there is no positive.
F1Choice f1_optimal_threshold(std::span<const ScoredEpisode> scored);

struct LeadTimeReport {
  std::vector<double> hours;          // one entry per true positive
  std::vector<double> bucket_edges;   // bucket k covers [edges[k], edges[k+1])
  std::vector<std::size_t> histogram; // last bucket is open-ended
};

std::vector<double> default_bucket_edges();  // 0, 24, 48, 72

LeadTimeReport lead_times(std::span<const MonitoringTrace> traces, double rho,
                          std::span<const double> bucket_edges);

struct TimeBin {
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
};

// Bins from ascending edges; the last bin is open-ended.
std::vector<TimeBin> bins_from_edges(std::span<const double> edges);

struct AuctBin {
  TimeBin bin;
  std::optional<double> value;  // absent when the bin holds no event time
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::size_t n_times = 0;
};

struct AuctSubject {
  double observed_time = 0.0;  // first event time, or end of monitoring
  bool event = false;
};

// Empirical time-dependent AUC: at every distinct event time t, the fraction
// of pairs (i, j) with event_i, T_i < t <= T_j and S_i(t) < S_j(t), ties
// counting one half; averaged per bin of (t - origin). `survival(i, t)` must
// return the predicted survival of subject i at t.
std::vector<AuctBin> auct_from_survival(std::span<const AuctSubject> subjects,
                                        const std::function<double(std::size_t, double)>& survival,
                                        std::span<const TimeBin> bins, double origin);

// Same, with survival integrated from each trace's hazard path.
std::vector<AuctBin> auct(std::span<const MonitoringTrace> traces, std::span<const TimeBin> bins);

// Integral of the trace's hazard over [monitoring_start, t), limited to the
// monitored segments.
double trace_cumulative_hazard(const MonitoringTrace& trace, double t);

}  // namespace hazardforge
