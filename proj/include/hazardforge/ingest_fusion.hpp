#pragma once

// Building model-ready episodes from raw streams: last-observation-carried-
// forward discretization, recurrence features, one-hot expansion and
// timestamp fusion of note embeddings.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hazardforge/survival_data.hpp"

namespace hazardforge {

struct EmbeddingEntry {
  double timestamp = 0.0;
  std::vector<double> vector;
};

struct EmbeddingStream {
  std::string episode_id;
  std::vector<EmbeddingEntry> entries;  // strictly increasing timestamps

  // Width of the vectors, 0 when the stream is empty.
  std::size_t width() const { return entries.empty() ? 0 : entries.front().vector.size(); }
};

// Throws kSchemaMismatch on unsorted timestamps or ragged widths.
void validate_stream(const EmbeddingStream& stream);

// A raw observation carries either a numeric value or a category label.
struct RawObservation {
  double timestamp = 0.0;
  std::string feature;
  double value = kMissing;
  std::optional<std::string> label;
};

struct RawObservationStream {
  std::string subject_id;
  std::string episode_id;
  std::vector<RawObservation> entries;  // sorted by timestamp
};

struct CategoricalFeature {
  std::string name;
  std::vector<std::string> categories;  // fixed from training data
};

// Describes how raw feature names map onto the discretized covariate vector:
// numeric features first, then one indicator per category for each
// categorical feature (named `<feature>=<category>`).
struct RawSchema {
  std::vector<std::string> numeric;
  std::vector<CategoricalFeature> categorical;
  double monitoring_start = 24.0;

  DatasetSchema dataset_schema() const;
};

// Regular grid of `grid`-hour epochs from monitoring_start through the epoch
// containing the last observation. Every feature holds the latest value
// observed at or before the epoch start. Observations of features not in the
// raw schema are ignored. Throws kEmptyStream.
Episode locf_discretize(const RawObservationStream& raw, const RawSchema& schema,
                        double grid, double monitoring_start);

// Indicator block for one categorical value. Missing input gives all-missing;
// an unseen category gives all zeros.
std::vector<double> one_hot_expand(const std::optional<std::string>& value,
                                   std::span<const std::string> categories);

// Splits epochs at each event time and sets delta=1 on the epoch ending at it.
// Events at or before the first epoch start, or after the last epoch end,
// leave deltas unchanged.
Episode mark_events(const Episode& ep, std::span<const double> event_times);

// Appends `prior_event_count` and `time_since_last_event`, both evaluated at
// each epoch's t_start after splitting at the event times.
Episode add_recurrence_features(const Episode& ep, std::span<const double> event_times);
DatasetSchema add_recurrence_features(DatasetSchema schema);

// Appends an emb0..emb{n-1} block to the schema.
DatasetSchema add_embedding_block(DatasetSchema schema, std::size_t n);

// Widens every epoch by `n` missing values (for a freshly appended block).
Episode widen(const Episode& ep, std::size_t n);

// Overwrites the schema's embedding block with the latest note at or before
// each epoch start, splitting epochs at note timestamps. The episode must
// already have the schema's width. Throws kSchemaMismatch on episode id or
// width mismatch.
Episode fuse_embeddings(const Episode& ep, const EmbeddingStream& stream,
                        const DatasetSchema& schema);

}  // namespace hazardforge
