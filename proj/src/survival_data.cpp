#include "hazardforge/survival_data.hpp"

#include <algorithm>
#include <set>

#include "hazardforge/error.hpp"

namespace hazardforge {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kEmptyStream: return "EmptyStream";
    case ErrorKind::kSchemaMismatch: return "SchemaMismatch";
    case ErrorKind::kSchemaMissing: return "SchemaMissing";
    case ErrorKind::kDegenerateData: return "DegenerateData";
    case ErrorKind::kOutOfRange: return "OutOfRange";
    case ErrorKind::kSingleClass: return "SingleClass";
    case ErrorKind::kTooFewGroups: return "TooFewGroups";
    case ErrorKind::kRateBoundViolated: return "RateBoundViolated";
    case ErrorKind::kParseError: return "ParseError";
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
    case ErrorKind::kIoError: return "IoError";
  }
  return "Unknown";
}

std::string_view to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::kNumeric: return "numeric";
    case FeatureKind::kOneHot: return "one_hot";
    case FeatureKind::kEmbedding: return "embedding";
    case FeatureKind::kRecurrence: return "recurrence";
  }
  return "numeric";
}

FeatureKind feature_kind_from_string(std::string_view s) {
  if (s == "numeric") return FeatureKind::kNumeric;
  if (s == "one_hot") return FeatureKind::kOneHot;
  if (s == "embedding") return FeatureKind::kEmbedding;
  if (s == "recurrence") return FeatureKind::kRecurrence;
  throw Error(ErrorKind::kParseError,
              "unknown feature kind '" + std::string(s) + "'");
}

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::kEmptyEpisode: return "empty_episode";
    case ViolationKind::kEmptyInterval: return "empty_interval";
    case ViolationKind::kOverlap: return "overlap";
    case ViolationKind::kUnsorted: return "unsorted";
    case ViolationKind::kWidthMismatch: return "width_mismatch";
    case ViolationKind::kBadDelta: return "bad_delta";
    case ViolationKind::kBeforeMonitoringStart: return "before_monitoring_start";
    case ViolationKind::kNonFiniteTime: return "non_finite_time";
  }
  return "unknown";
}

int DatasetSchema::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < feature_names.size(); ++i) {
    if (feature_names[i] == name) return static_cast<int>(i);
  }
  return -1;
}

DatasetSchema::Block DatasetSchema::embedding_block() const {
  Block block;
  for (std::size_t i = 0; i < feature_kinds.size(); ++i) {
    if (feature_kinds[i] != FeatureKind::kEmbedding) continue;
    if (block.width == 0) block.offset = i;
    ++block.width;
  }
  return block;
}

void DatasetSchema::append(std::string name, FeatureKind kind) {
  feature_names.push_back(std::move(name));
  feature_kinds.push_back(kind);
}

std::vector<std::string> validate_schema(const DatasetSchema& schema) {
  std::vector<std::string> problems;
  if (schema.feature_names.size() != schema.feature_kinds.size()) {
    problems.push_back("feature_names and feature_kinds differ in length");
  }
  std::set<std::string> seen;
  for (const auto& name : schema.feature_names) {
    if (name.empty()) problems.push_back("empty feature name");
    if (name == "t") problems.push_back("feature name 't' is reserved for time");
    if (!seen.insert(name).second) {
      problems.push_back("duplicate feature name '" + name + "'");
    }
  }
  if (schema.feature_names.size() == schema.feature_kinds.size()) {
    const auto block = schema.embedding_block();
    for (std::size_t k = 0; k < block.width; ++k) {
      const std::size_t i = block.offset + k;
      if (schema.feature_kinds[i] != FeatureKind::kEmbedding ||
          schema.feature_names[i] != "emb" + std::to_string(k)) {
        problems.push_back("embedding features must be a contiguous block emb0..emb" +
                           std::to_string(block.width - 1));
        break;
      }
    }
  }
  if (!std::isfinite(schema.monitoring_start)) {
    problems.push_back("monitoring_start must be finite");
  }
  return problems;
}

std::vector<Violation> validate_episode(const Episode& ep,
                                        const DatasetSchema& schema) {
  std::vector<Violation> out;
  if (ep.epochs.empty()) {
    out.push_back({ViolationKind::kEmptyEpisode, 0, "episode has no epochs"});
    return out;
  }
  for (std::size_t k = 0; k < ep.epochs.size(); ++k) {
    const Epoch& e = ep.epochs[k];
    if (!std::isfinite(e.t_start) || !std::isfinite(e.t_end)) {
      out.push_back({ViolationKind::kNonFiniteTime, k, "non-finite epoch bound"});
      continue;
    }
    if (!(e.t_start < e.t_end)) {
      out.push_back({ViolationKind::kEmptyInterval, k,
                     "t_start must be strictly less than t_end"});
    }
    if (e.t_start < schema.monitoring_start) {
      out.push_back({ViolationKind::kBeforeMonitoringStart, k,
                     "epoch starts before monitoring_start"});
    }
    if (e.covariates.size() != schema.width()) {
      out.push_back({ViolationKind::kWidthMismatch, k,
                     "covariate width " + std::to_string(e.covariates.size()) +
                         " != schema width " + std::to_string(schema.width())});
    }
    if (e.delta != 0 && e.delta != 1) {
      out.push_back({ViolationKind::kBadDelta, k, "delta must be 0 or 1"});
    }
    if (k > 0) {
      const Epoch& prev = ep.epochs[k - 1];
      if (e.t_start < prev.t_start) {
        out.push_back({ViolationKind::kUnsorted, k, "epochs not sorted by t_start"});
      } else if (e.t_start < prev.t_end) {
        out.push_back({ViolationKind::kOverlap, k,
                       "epoch overlaps its predecessor"});
      }
    }
  }
  return out;
}

// Summed over maximal contiguous runs so that splitting an epoch never
// changes the result, even in floating point.
double total_exposure(const Episode& ep) {
  double sum = 0.0;
  std::size_t k = 0;
  while (k < ep.epochs.size()) {
    const double run_start = ep.epochs[k].t_start;
    double run_end = ep.epochs[k].t_end;
    while (k + 1 < ep.epochs.size() && ep.epochs[k + 1].t_start == run_end) {
      ++k;
      run_end = ep.epochs[k].t_end;
    }
    sum += run_end - run_start;
    ++k;
  }
  return sum;
}

double total_exposure(std::span<const Episode> episodes) {
  double sum = 0.0;
  for (const auto& ep : episodes) sum += total_exposure(ep);
  return sum;
}

long long event_count(const Episode& ep) {
  long long n = 0;
  for (const auto& e : ep.epochs) n += e.delta;
  return n;
}

long long event_count(std::span<const Episode> episodes) {
  long long n = 0;
  for (const auto& ep : episodes) n += event_count(ep);
  return n;
}

double first_event_time(const Episode& ep) {
  for (const auto& e : ep.epochs) {
    if (e.delta == 1) return e.t_end;
  }
  return kMissing;
}

Episode split_at(const Episode& ep, std::span<const double> sorted_times) {
  Episode out;
  out.episode_id = ep.episode_id;
  out.subject_id = ep.subject_id;
  out.censored_admin = ep.censored_admin;
  out.epochs.reserve(ep.epochs.size());
  for (const auto& e : ep.epochs) {
    auto it = std::upper_bound(sorted_times.begin(), sorted_times.end(), e.t_start);
    double lo = e.t_start;
    for (; it != sorted_times.end() && *it < e.t_end; ++it) {
      if (*it == lo) continue;
      Epoch piece = e;
      piece.t_start = lo;
      piece.t_end = *it;
      piece.delta = 0;
      out.epochs.push_back(std::move(piece));
      lo = *it;
    }
    Epoch last = e;
    last.t_start = lo;
    out.epochs.push_back(std::move(last));
  }
  return out;
}

}  // namespace hazardforge
