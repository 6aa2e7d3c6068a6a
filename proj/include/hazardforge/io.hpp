#pragma once

// File formats: long-format epoch CSV with a JSON schema sidecar, raw
// observation CSV, embedding JSONL and the hazardforge-model-v1 document.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hazardforge/hazard_boost.hpp"
#include "hazardforge/ingest_fusion.hpp"
#include "hazardforge/survival_data.hpp"
#include "json.hpp"

namespace hazardforge {

inline constexpr std::string_view kModelVersion = "hazardforge-model-v1";

// Shortest representation that parses back to the same double; missing is
// the empty string.
std::string format_number(double v);
// Empty field -> missing. Throws kParseError on malformed input.
double parse_number(std::string_view field);

// RFC 4180 field splitting for a single line (no embedded newlines).
std::vector<std::string> split_csv_line(std::string_view line);
std::string csv_escape(std::string_view field);

nlohmann::json schema_to_json(const DatasetSchema& schema);
DatasetSchema schema_from_json(const nlohmann::json& j);
DatasetSchema load_schema(const std::filesystem::path& path);
void save_schema(const std::filesystem::path& path, const DatasetSchema& schema);

std::vector<std::string> episode_csv_header(const DatasetSchema& schema);
void write_episodes_csv(std::ostream& out, const DatasetSchema& schema,
                        std::span<const Episode> episodes);
// Rows are grouped by episode_id in first-appearance order. censored_admin is
// derived: an episode is administratively censored unless its final epoch
// carries an event. Throws kSchemaMismatch when the header does not match.
std::vector<Episode> read_episodes_csv(std::istream& in, const DatasetSchema& schema);
std::vector<Episode> load_episodes(const std::filesystem::path& path, const DatasetSchema& schema);
void save_episodes(const std::filesystem::path& path, const DatasetSchema& schema,
                   std::span<const Episode> episodes);

// One stream per episode_id, in first-appearance order.
std::vector<EmbeddingStream> read_embeddings_jsonl(std::istream& in);
void write_embeddings_jsonl(std::ostream& out, std::span<const EmbeddingStream> streams);
std::map<std::string, EmbeddingStream> load_embeddings(const std::filesystem::path& path);

// `subject_id,episode_id,timestamp,feature,value`; values that do not parse
// as numbers become category labels.
std::vector<RawObservationStream> read_raw_observations_csv(std::istream& in);

nlohmann::json model_to_json(const HazardEnsemble& model);
HazardEnsemble model_from_json(const nlohmann::json& j);
HazardEnsemble load_model(const std::filesystem::path& path);
void save_model(const std::filesystem::path& path, const HazardEnsemble& model);

}  // namespace hazardforge
