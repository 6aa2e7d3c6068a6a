#include "hazardforge/io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_map>

#include "hazardforge/error.hpp"

namespace hazardforge {

using nlohmann::json;

std::string format_number(double v) {
  if (is_missing(v)) return {};
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_number(std::string_view field) {
  while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) {
    field.remove_suffix(1);
  }
  if (field.empty()) return kMissing;
  if (field.front() == '+') field.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw Error(ErrorKind::kParseError, "not a number: '" + std::string(field) + "'");
  }
  return v;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) throw Error(ErrorKind::kParseError, "unterminated quoted CSV field");
  out.push_back(std::move(cur));
  return out;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (const char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

// ---------------------------------------------------------------------------
// Schema.

json schema_to_json(const DatasetSchema& schema) {
  json features = json::array();
  for (std::size_t i = 0; i < schema.width(); ++i) {
    features.push_back({{"name", schema.feature_names[i]},
                        {"kind", std::string(to_string(schema.feature_kinds[i]))}});
  }
  return {{"features", features}, {"monitoring_start", schema.monitoring_start}};
}

DatasetSchema schema_from_json(const json& j) {
  try {
    DatasetSchema schema;
    schema.monitoring_start = j.value("monitoring_start", 24.0);
    for (const auto& f : j.at("features")) {
      schema.append(f.at("name").get<std::string>(),
                    feature_kind_from_string(f.value("kind", std::string("numeric"))));
    }
    if (auto problems = validate_schema(schema); !problems.empty()) {
      throw Error(ErrorKind::kSchemaMismatch, "invalid schema: " + problems.front());
    }
    return schema;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParseError, std::string("malformed schema JSON: ") + e.what());
  }
}

namespace {

std::ifstream open_in(const std::filesystem::path& path, ErrorKind missing_kind) {
  std::ifstream in(path);
  if (!in) throw Error(missing_kind, "cannot open '" + path.string() + "'");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIoError, "cannot write '" + path.string() + "'");
  return out;
}

json parse_json(std::istream& in, const std::string& what) {
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParseError, "malformed JSON in " + what + ": " + e.what());
  }
}

}  // namespace

DatasetSchema load_schema(const std::filesystem::path& path) {
  auto in = open_in(path, ErrorKind::kSchemaMissing);
  return schema_from_json(parse_json(in, path.string()));
}

void save_schema(const std::filesystem::path& path, const DatasetSchema& schema) {
  auto out = open_out(path);
  out << schema_to_json(schema).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Long-format epochs.

std::vector<std::string> episode_csv_header(const DatasetSchema& schema) {
  std::vector<std::string> h = {"subject_id", "episode_id", "t_start", "t_end", "delta"};
  h.insert(h.end(), schema.feature_names.begin(), schema.feature_names.end());
  return h;
}

void write_episodes_csv(std::ostream& out, const DatasetSchema& schema,
                        std::span<const Episode> episodes) {
  const auto header = episode_csv_header(schema);
  for (std::size_t i = 0; i < header.size(); ++i) {
    out << (i ? "," : "") << csv_escape(header[i]);
  }
  out << '\n';
  for (const auto& ep : episodes) {
    for (const auto& e : ep.epochs) {
      out << csv_escape(ep.subject_id) << ',' << csv_escape(ep.episode_id) << ','
          << format_number(e.t_start) << ',' << format_number(e.t_end) << ',' << e.delta;
      for (const double v : e.covariates) out << ',' << format_number(v);
      out << '\n';
    }
  }
}

std::vector<Episode> read_episodes_csv(std::istream& in, const DatasetSchema& schema) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::kSchemaMismatch, "missing CSV header");
  if (split_csv_line(line) != episode_csv_header(schema)) {
    throw Error(ErrorKind::kSchemaMismatch, "CSV header does not match the schema");
  }
  std::vector<Episode> episodes;
  std::unordered_map<std::string, std::size_t> index;
  const std::size_t n_fields = schema.width() + 5;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != n_fields) {
      throw Error(ErrorKind::kSchemaMismatch, "line " + std::to_string(line_no) + ": expected " +
                                                  std::to_string(n_fields) + " fields, got " +
                                                  std::to_string(fields.size()));
    }
    auto [it, fresh] = index.try_emplace(fields[1], episodes.size());
    if (fresh) {
      episodes.emplace_back();
      episodes.back().subject_id = fields[0];
      episodes.back().episode_id = fields[1];
    }
    Episode& ep = episodes[it->second];
    Epoch e;
    try {
      e.t_start = parse_number(fields[2]);
      e.t_end = parse_number(fields[3]);
      const double d = parse_number(fields[4]);
      if (d != 0.0 && d != 1.0) throw Error(ErrorKind::kParseError, "delta must be 0 or 1");
      e.delta = static_cast<int>(d);
      e.covariates.reserve(schema.width());
      for (std::size_t k = 5; k < fields.size(); ++k) e.covariates.push_back(parse_number(fields[k]));
    } catch (const Error& err) {
      throw Error(err.kind(), "line " + std::to_string(line_no) + ": " + err.what());
    }
    ep.epochs.push_back(std::move(e));
  }
  for (auto& ep : episodes) ep.censored_admin = ep.epochs.back().delta == 0;
  return episodes;
}

std::vector<Episode> load_episodes(const std::filesystem::path& path, const DatasetSchema& schema) {
  auto in = open_in(path, ErrorKind::kIoError);
  return read_episodes_csv(in, schema);
}

void save_episodes(const std::filesystem::path& path, const DatasetSchema& schema,
                   std::span<const Episode> episodes) {
  auto out = open_out(path);
  write_episodes_csv(out, schema, episodes);
}

// ---------------------------------------------------------------------------
// Embeddings.

std::vector<EmbeddingStream> read_embeddings_jsonl(std::istream& in) {
  std::vector<EmbeddingStream> streams;
  std::unordered_map<std::string, std::size_t> index;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      const auto& id_field = j.at("episode_id");
      const std::string id =
          id_field.is_string() ? id_field.get<std::string>() : id_field.dump();
      EmbeddingEntry entry;
      entry.timestamp = j.at("timestamp_hours").get<double>();
      entry.vector = j.at("embedding").get<std::vector<double>>();
      auto [it, fresh] = index.try_emplace(id, streams.size());
      if (fresh) {
        streams.emplace_back();
        streams.back().episode_id = id;
      }
      streams[it->second].entries.push_back(std::move(entry));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::kParseError,
                  "embedding line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  for (auto& s : streams) {
    std::stable_sort(s.entries.begin(), s.entries.end(),
                     [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
    validate_stream(s);
  }
  return streams;
}

void write_embeddings_jsonl(std::ostream& out, std::span<const EmbeddingStream> streams) {
  for (const auto& s : streams) {
    for (const auto& e : s.entries) {
      json j = {{"episode_id", s.episode_id},
                {"timestamp_hours", e.timestamp},
                {"embedding", e.vector}};
      out << j.dump() << '\n';
    }
  }
}

std::map<std::string, EmbeddingStream> load_embeddings(const std::filesystem::path& path) {
  auto in = open_in(path, ErrorKind::kIoError);
  std::map<std::string, EmbeddingStream> out;
  for (auto& s : read_embeddings_jsonl(in)) {
    auto id = s.episode_id;
    out.emplace(std::move(id), std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Raw observations.

std::vector<RawObservationStream> read_raw_observations_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::kSchemaMismatch, "missing CSV header");
  const std::vector<std::string> expected = {"subject_id", "episode_id", "timestamp", "feature",
                                             "value"};
  if (split_csv_line(line) != expected) {
    throw Error(ErrorKind::kSchemaMismatch,
                "raw observation header must be subject_id,episode_id,timestamp,feature,value");
  }
  std::vector<RawObservationStream> streams;
  std::unordered_map<std::string, std::size_t> index;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != 5) {
      throw Error(ErrorKind::kSchemaMismatch,
                  "line " + std::to_string(line_no) + ": expected 5 fields");
    }
    auto [it, fresh] = index.try_emplace(f[1], streams.size());
    if (fresh) {
      streams.emplace_back();
      streams.back().subject_id = f[0];
      streams.back().episode_id = f[1];
    }
    RawObservation obs;
    obs.timestamp = parse_number(f[2]);
    if (is_missing(obs.timestamp)) {
      throw Error(ErrorKind::kParseError, "line " + std::to_string(line_no) + ": empty timestamp");
    }
    obs.feature = f[3];
    try {
      obs.value = parse_number(f[4]);
    } catch (const Error&) {
      obs.label = f[4];
    }
    streams[it->second].entries.push_back(std::move(obs));
  }
  for (auto& s : streams) {
    std::stable_sort(s.entries.begin(), s.entries.end(),
                     [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
  }
  return streams;
}

// ---------------------------------------------------------------------------
// Model.

namespace {

json node_to_json(const Tree& tree, int i, const DatasetSchema& schema) {
  const TreeNode& n = tree.nodes[static_cast<std::size_t>(i)];
  if (n.is_leaf()) return {{"leaf", n.value}};
  const std::string name = n.feature == kTimeFeature
                               ? std::string("t")
                               : schema.feature_names[static_cast<std::size_t>(n.feature - 1)];
  return {{"feature", n.feature},
          {"feature_name", name},
          {"threshold", n.threshold},
          {"missing_goes_left", n.missing_goes_left},
          {"gain", n.gain},
          {"left", node_to_json(tree, n.left, schema)},
          {"right", node_to_json(tree, n.right, schema)}};
}

int node_from_json(const json& j, Tree& tree, std::size_t width) {
  const int id = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  if (j.contains("leaf")) {
    const double v = j.at("leaf").get<double>();
    if (!std::isfinite(v)) throw Error(ErrorKind::kParseError, "non-finite leaf value");
    tree.nodes[static_cast<std::size_t>(id)].value = v;
    return id;
  }
  TreeNode n;
  n.feature = j.at("feature").get<int>();
  if (n.feature < 0 || static_cast<std::size_t>(n.feature) > width) {
    throw Error(ErrorKind::kSchemaMismatch, "split feature index out of range");
  }
  n.threshold = j.at("threshold").get<double>();
  n.missing_goes_left = j.at("missing_goes_left").get<bool>();
  n.gain = j.value("gain", 0.0);
  n.left = node_from_json(j.at("left"), tree, width);
  n.right = node_from_json(j.at("right"), tree, width);
  tree.nodes[static_cast<std::size_t>(id)] = n;
  return id;
}

}  // namespace

json model_to_json(const HazardEnsemble& model) {
  json trees = json::array();
  for (const auto& tree : model.trees) trees.push_back(node_to_json(tree, 0, model.schema));
  return {{"version", kModelVersion},
          {"f0", model.f0},
          {"base_hazard", model.base_hazard},
          {"nu", model.nu},
          {"schema", schema_to_json(model.schema)},
          {"time_split_points", model.time_split_points},
          {"trees", trees}};
}

HazardEnsemble model_from_json(const json& j) {
  try {
    if (j.at("version").get<std::string>() != kModelVersion) {
      throw Error(ErrorKind::kSchemaMismatch, "unsupported model version");
    }
    HazardEnsemble m;
    m.f0 = j.at("f0").get<double>();
    m.base_hazard = j.contains("base_hazard") ? j.at("base_hazard").get<double>() : std::exp(m.f0);
    m.nu = j.at("nu").get<double>();
    m.schema = schema_from_json(j.at("schema"));
    for (const auto& t : j.at("trees")) {
      Tree tree;
      node_from_json(t, tree, m.schema.width());
      m.trees.push_back(std::move(tree));
    }
    m.refresh_time_split_points();
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParseError, std::string("malformed model JSON: ") + e.what());
  }
}

HazardEnsemble load_model(const std::filesystem::path& path) {
  auto in = open_in(path, ErrorKind::kIoError);
  return model_from_json(parse_json(in, path.string()));
}

void save_model(const std::filesystem::path& path, const HazardEnsemble& model) {
  auto out = open_out(path);
  out << model_to_json(model).dump(1) << '\n';
}

}  // namespace hazardforge
