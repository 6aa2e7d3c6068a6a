#pragma once

// Continuous-time recurrent-event data in long (start, stop, delta) format.
//
// Time is measured in hours. An epoch covers [t_start, t_end) with constant
// covariates; an event, if any, occurs at t_end. Missing covariate values are
// stored as quiet NaN and are never zero-filled.

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace hazardforge {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) { return std::isnan(v); }

struct Epoch {
  double t_start = 0.0;
  double t_end = 0.0;
  std::vector<double> covariates;
  int delta = 0;

  double duration() const { return t_end - t_start; }
};

struct Episode {
  std::string episode_id;
  std::string subject_id;
  std::vector<Epoch> epochs;
  bool censored_admin = false;
};

enum class FeatureKind { kNumeric, kOneHot, kEmbedding, kRecurrence };

std::string_view to_string(FeatureKind kind);
FeatureKind feature_kind_from_string(std::string_view s);

struct DatasetSchema {
  std::vector<std::string> feature_names;
  std::vector<FeatureKind> feature_kinds;
  double monitoring_start = 24.0;

  std::size_t width() const { return feature_names.size(); }

  // Index of a feature by name, or -1.
  int index_of(std::string_view name) const;

  struct Block {
    std::size_t offset = 0;
    std::size_t width = 0;
  };
  // The contiguous emb0..emb{n-1} block; width 0 when absent.
  Block embedding_block() const;

  void append(std::string name, FeatureKind kind);
};

enum class ViolationKind {
  kEmptyEpisode,
  kEmptyInterval,
  kOverlap,
  kUnsorted,
  kWidthMismatch,
  kBadDelta,
  kBeforeMonitoringStart,
  kNonFiniteTime,
};

std::string_view to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  std::size_t epoch_index = 0;
  std::string message;

  bool operator==(const Violation&) const = default;
};

// Schema-level problems (duplicate names, malformed embedding block).
std::vector<std::string> validate_schema(const DatasetSchema& schema);

std::vector<Violation> validate_episode(const Episode& ep,
                                        const DatasetSchema& schema);

double total_exposure(const Episode& ep);
double total_exposure(std::span<const Episode> episodes);

long long event_count(const Episode& ep);
long long event_count(std::span<const Episode> episodes);

// Time of the first delta=1 epoch end, or NaN when the episode has no event.
double first_event_time(const Episode& ep);

// Copy of `ep` with every epoch split at the given times (strictly interior
// points only). The event stays on the final piece of each epoch.
Episode split_at(const Episode& ep, std::span<const double> sorted_times);

}  // namespace hazardforge
