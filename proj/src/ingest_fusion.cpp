#include "hazardforge/ingest_fusion.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "hazardforge/error.hpp"

namespace hazardforge {

void validate_stream(const EmbeddingStream& stream) {
  const std::size_t n = stream.width();
  for (std::size_t k = 0; k < stream.entries.size(); ++k) {
    const auto& e = stream.entries[k];
    if (e.vector.size() != n || n == 0) {
      throw Error(ErrorKind::kSchemaMismatch,
                  "embedding stream '" + stream.episode_id + "' has ragged or empty vectors");
    }
    if (k > 0 && !(stream.entries[k - 1].timestamp < e.timestamp)) {
      throw Error(ErrorKind::kSchemaMismatch,
                  "embedding stream '" + stream.episode_id +
                      "' timestamps must be strictly increasing");
    }
  }
}

DatasetSchema RawSchema::dataset_schema() const {
  DatasetSchema schema;
  schema.monitoring_start = monitoring_start;
  for (const auto& name : numeric) schema.append(name, FeatureKind::kNumeric);
  for (const auto& cat : categorical) {
    for (const auto& c : cat.categories) {
      schema.append(cat.name + "=" + c, FeatureKind::kOneHot);
    }
  }
  return schema;
}

std::vector<double> one_hot_expand(const std::optional<std::string>& value,
                                   std::span<const std::string> categories) {
  if (!value) return std::vector<double>(categories.size(), kMissing);
  std::vector<double> out(categories.size(), 0.0);
  for (std::size_t i = 0; i < categories.size(); ++i) {
    if (categories[i] == *value) out[i] = 1.0;
  }
  return out;
}

Episode locf_discretize(const RawObservationStream& raw, const RawSchema& schema,
                        double grid, double monitoring_start) {
  if (raw.entries.empty()) {
    throw Error(ErrorKind::kEmptyStream,
                "raw observation stream '" + raw.episode_id + "' is empty");
  }
  if (!(grid > 0.0) || !std::isfinite(grid)) {
    throw Error(ErrorKind::kInvalidArgument, "grid step must be positive");
  }

  std::map<std::string, std::size_t, std::less<>> numeric_slot;
  for (std::size_t i = 0; i < schema.numeric.size(); ++i) numeric_slot[schema.numeric[i]] = i;
  std::map<std::string, std::size_t, std::less<>> cat_slot;
  for (std::size_t i = 0; i < schema.categorical.size(); ++i) {
    cat_slot[schema.categorical[i].name] = i;
  }

  const double last = raw.entries.back().timestamp;
  const auto n_epochs =
      last < monitoring_start
          ? std::size_t{1}
          : static_cast<std::size_t>(std::floor((last - monitoring_start) / grid)) + 1;

  std::vector<double> numeric(schema.numeric.size(), kMissing);
  std::vector<std::optional<std::string>> labels(schema.categorical.size());

  Episode ep;
  ep.episode_id = raw.episode_id;
  ep.subject_id = raw.subject_id;
  ep.epochs.reserve(n_epochs);

  std::size_t next = 0;
  for (std::size_t k = 0; k < n_epochs; ++k) {
    const double t0 = monitoring_start + static_cast<double>(k) * grid;
    const double t1 = monitoring_start + static_cast<double>(k + 1) * grid;
    for (; next < raw.entries.size() && raw.entries[next].timestamp <= t0; ++next) {
      const auto& obs = raw.entries[next];
      if (auto it = numeric_slot.find(obs.feature); it != numeric_slot.end()) {
        numeric[it->second] = obs.value;
      } else if (auto jt = cat_slot.find(obs.feature); jt != cat_slot.end()) {
        labels[jt->second] = obs.label;
      }
    }
    Epoch e;
    e.t_start = t0;
    e.t_end = t1;
    e.covariates = numeric;
    for (std::size_t c = 0; c < labels.size(); ++c) {
      auto block = one_hot_expand(labels[c], schema.categorical[c].categories);
      e.covariates.insert(e.covariates.end(), block.begin(), block.end());
    }
    ep.epochs.push_back(std::move(e));
  }
  ep.censored_admin = true;
  return ep;
}

Episode mark_events(const Episode& ep, std::span<const double> event_times) {
  Episode out = split_at(ep, event_times);
  for (auto& e : out.epochs) {
    if (std::binary_search(event_times.begin(), event_times.end(), e.t_end)) e.delta = 1;
  }
  if (!out.epochs.empty()) out.censored_admin = out.epochs.back().delta == 0;
  return out;
}

Episode add_recurrence_features(const Episode& ep, std::span<const double> event_times) {
  Episode out = split_at(ep, event_times);
  for (auto& e : out.epochs) {
    const auto it = std::upper_bound(event_times.begin(), event_times.end(), e.t_start);
    const auto count = static_cast<double>(it - event_times.begin());
    e.covariates.push_back(count);
    e.covariates.push_back(count > 0 ? e.t_start - *(it - 1) : kMissing);
  }
  return out;
}

DatasetSchema add_recurrence_features(DatasetSchema schema) {
  schema.append("prior_event_count", FeatureKind::kRecurrence);
  schema.append("time_since_last_event", FeatureKind::kRecurrence);
  return schema;
}

DatasetSchema add_embedding_block(DatasetSchema schema, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) {
    schema.append("emb" + std::to_string(k), FeatureKind::kEmbedding);
  }
  return schema;
}

Episode widen(const Episode& ep, std::size_t n) {
  Episode out = ep;
  for (auto& e : out.epochs) e.covariates.resize(e.covariates.size() + n, kMissing);
  return out;
}

Episode fuse_embeddings(const Episode& ep, const EmbeddingStream& stream,
                        const DatasetSchema& schema) {
  if (!stream.episode_id.empty() && stream.episode_id != ep.episode_id) {
    throw Error(ErrorKind::kSchemaMismatch, "embedding stream for '" + stream.episode_id +
                                                "' applied to episode '" + ep.episode_id + "'");
  }
  validate_stream(stream);
  const auto block = schema.embedding_block();
  if (block.width == 0) {
    throw Error(ErrorKind::kSchemaMismatch, "schema has no embedding block");
  }
  if (!stream.entries.empty() && stream.width() != block.width) {
    throw Error(ErrorKind::kSchemaMismatch,
                "embedding width " + std::to_string(stream.width()) +
                    " != schema block width " + std::to_string(block.width));
  }
  for (const auto& e : ep.epochs) {
    if (e.covariates.size() != schema.width()) {
      throw Error(ErrorKind::kSchemaMismatch, "episode '" + ep.episode_id +
                                                  "' width does not match schema");
    }
  }

  std::vector<double> stamps;
  stamps.reserve(stream.entries.size());
  for (const auto& entry : stream.entries) stamps.push_back(entry.timestamp);

  Episode out = split_at(ep, stamps);
  for (auto& e : out.epochs) {
    const auto it = std::upper_bound(stamps.begin(), stamps.end(), e.t_start);
    auto dst = e.covariates.begin() + static_cast<std::ptrdiff_t>(block.offset);
    if (it == stamps.begin()) {
      std::fill_n(dst, block.width, kMissing);
    } else {
      const auto& v = stream.entries[static_cast<std::size_t>(it - stamps.begin()) - 1].vector;
      std::copy(v.begin(), v.end(), dst);
    }
  }
  return out;
}

}  // namespace hazardforge
