#include <openssl/evp.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "hazardforge/cli.hpp"
#include "hazardforge/cv_select.hpp"
#include "hazardforge/eval_metrics.hpp"
#include "hazardforge/hazard_boost.hpp"
#include "hazardforge/ingest_fusion.hpp"
#include "hazardforge/io.hpp"
#include "hazardforge/synth.hpp"
#include "json.hpp"

#ifndef HAZARDFORGE_VERSION
#define HAZARDFORGE_VERSION "dev"
#endif

namespace hazardforge::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDegenerateData:
    case ErrorKind::kSingleClass:
      return kExitDegenerate;
    default:
      return kExitInput;
  }
}

namespace {

struct Options {
  std::string data;
  std::string schema;
  std::string embeddings;
  std::string model;
  std::string out;
  std::string config;
  std::string hazards;
  std::string scenario = "two-group";
  std::optional<std::uint64_t> seed;
  std::optional<int> depth;
  std::optional<int> trees;
  std::optional<int> folds;
  std::optional<int> episodes;
  std::optional<double> nu;
  std::optional<double> rho;
  std::optional<double> grid_step;
  std::string grid_depths;
  std::string grid_trees;
  std::string bins;
};

Error input_error(const std::string& msg) { return Error(ErrorKind::kInvalidArgument, msg); }

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIoError, "cannot read '" + path.string() + "'");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  }
  return hex.str();
}

// Records what a command consumed and how it was configured; written as
// manifest.json into the command's output directory.
class RunManifest {
 public:
  explicit RunManifest(std::string command)
      : command_(std::move(command)), started_(std::chrono::system_clock::now()) {}

  void input(const std::string& path) {
    if (!path.empty() && path != "-") inputs_[path] = sha256_file(path);
  }
  json& config() { return config_; }
  void seed(std::uint64_t s) { seed_ = s; }

  void write(const fs::path& dir) const {
    const auto now = std::chrono::system_clock::now();
    const auto started = std::chrono::system_clock::to_time_t(started_);
    std::ostringstream ts;
    ts << std::put_time(std::gmtime(&started), "%Y-%m-%dT%H:%M:%SZ");
    json j = {{"command", command_},
              {"config", config_},
              {"inputs", inputs_},
              {"seed", seed_ ? json(*seed_) : json(nullptr)},
              {"tool_version", HAZARDFORGE_VERSION},
              {"started_at", ts.str()},
              {"wall_clock_seconds", std::chrono::duration<double>(now - started_).count()}};
    std::ofstream out(dir / "manifest.json");
    out << j.dump(2) << '\n';
  }

 private:
  std::string command_;
  std::chrono::system_clock::time_point started_;
  std::map<std::string, std::string> inputs_;
  json config_ = json::object();
  std::optional<std::uint64_t> seed_;
};

fs::path require_out(const Options& o) {
  if (o.out.empty()) throw input_error("--out is required");
  fs::create_directories(o.out);
  return o.out;
}

DatasetSchema require_schema(const std::string& path) {
  if (path.empty()) throw Error(ErrorKind::kSchemaMissing, "--schema is required");
  if (!fs::exists(path)) {
    throw Error(ErrorKind::kSchemaMissing, "schema file '" + path + "' does not exist");
  }
  return load_schema(path);
}

std::vector<Episode> require_data(const std::string& path, const DatasetSchema& schema) {
  if (path.empty()) throw input_error("--data is required");
  auto episodes = load_episodes(path, schema);
  for (const auto& ep : episodes) {
    const auto v = validate_episode(ep, schema);
    if (!v.empty()) {
      throw Error(ErrorKind::kSchemaMismatch, "episode '" + ep.episode_id + "' epoch " +
                                                  std::to_string(v.front().epoch_index) + ": " +
                                                  v.front().message);
    }
  }
  return episodes;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIoError, "cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParseError, "malformed JSON in '" + path + "': " + e.what());
  }
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(parse_number(item));
  }
  return out;
}

// "1,2,3" or "start:stop:step" (inclusive).
std::vector<int> parse_int_grid(const std::string& s) {
  std::vector<int> out;
  if (s.find(':') != std::string::npos) {
    std::stringstream ss(s);
    std::string a, b, c;
    std::getline(ss, a, ':');
    std::getline(ss, b, ':');
    std::getline(ss, c, ':');
    const int start = std::stoi(a);
    const int stop = std::stoi(b);
    const int step = c.empty() ? 1 : std::stoi(c);
    if (step <= 0) throw input_error("grid step must be positive");
    for (int v = start; v <= stop; v += step) out.push_back(v);
    return out;
  }
  for (const double v : parse_list(s)) out.push_back(static_cast<int>(v));
  return out;
}

TrainConfig effective_train_config(const Options& o, json& echo) {
  TrainConfig c;
  if (!o.config.empty()) {
    const json j = read_json_file(o.config);
    c.max_depth = j.value("max_depth", j.value("depth", c.max_depth));
    c.num_trees = j.value("num_trees", j.value("trees", c.num_trees));
    c.nu = j.value("nu", c.nu);
    c.max_quantile_bins = j.value("max_quantile_bins", c.max_quantile_bins);
    c.min_hessian_per_leaf = j.value("min_hessian_per_leaf", c.min_hessian_per_leaf);
    c.leaf_value_clamp = j.value("leaf_value_clamp", c.leaf_value_clamp);
  }
  if (o.depth) c.max_depth = *o.depth;
  if (o.trees) c.num_trees = *o.trees;
  if (o.nu) c.nu = *o.nu;
  c.validate();
  echo = {{"max_depth", c.max_depth},
          {"num_trees", c.num_trees},
          {"nu", c.nu},
          {"max_quantile_bins", c.max_quantile_bins},
          {"min_hessian_per_leaf", c.min_hessian_per_leaf},
          {"leaf_value_clamp", c.leaf_value_clamp}};
  return c;
}

void write_pieces_header(std::ostream& out) { out << "episode_id,t_start,t_end,hazard,error\n"; }

void write_piece(std::ostream& out, const std::string& id, const HazardPiece& p) {
  out << csv_escape(id) << ',' << format_number(p.t_start) << ',' << format_number(p.t_end) << ','
      << format_number(p.hazard) << ",\n";
}

// ---------------------------------------------------------------------------

int cmd_simulate(const Options& o, std::ostream& out) {
  const auto dir = require_out(o);
  RunManifest manifest("simulate");
  ScenarioSpec spec;
  const int n = o.episodes.value_or(500);
  const std::uint64_t seed = o.seed.value_or(0);
  if (!o.config.empty()) {
    manifest.input(o.config);
    spec = scenario_from_json(read_json_file(o.config));
    if (o.episodes) spec.n_episodes = *o.episodes;
  } else if (o.scenario == "constant") {
    spec = constant_scenario(0.1, n, 50.0, seed);
  } else if (o.scenario == "two-group") {
    spec = two_group_scenario(0.02, 0.2, n, seed);
  } else if (o.scenario == "note-signal") {
    spec = note_signal_scenario(n, seed);
  } else {
    throw input_error("unknown scenario '" + o.scenario + "'");
  }
  if (o.seed) spec.seed = *o.seed;
  manifest.seed(spec.seed);
  manifest.config() = scenario_to_json(spec);

  const auto cohort = simulate(spec);
  save_episodes(dir / "data.csv", cohort.schema, cohort.episodes);
  save_schema(dir / "schema.json", cohort.schema);
  if (spec.embedding) {
    std::ofstream emb(dir / "embeddings.jsonl");
    write_embeddings_jsonl(emb, cohort.embeddings);
  }
  {
    std::ofstream truth(dir / "truth_hazard.csv");
    write_pieces_header(truth);
    for (std::size_t i = 0; i < cohort.episodes.size(); ++i) {
      for (const auto& p : cohort.truth[i]) write_piece(truth, cohort.episodes[i].episode_id, p);
    }
  }
  {
    json truth = {{"scenario", scenario_to_json(spec)},
                  {"lambda_max", spec.lambda_max},
                  {"hazard_scale", cohort.hazard_scale},
                  {"effective_lambda_max", spec.lambda_max * cohort.hazard_scale},
                  {"seed", spec.seed}};
    std::ofstream f(dir / "truth.json");
    f << truth.dump(2) << '\n';
  }
  manifest.write(dir);
  out << "simulated " << cohort.episodes.size() << " episodes, "
      << event_count(std::span<const Episode>(cohort.episodes)) << " events\n";
  return kExitOk;
}

int cmd_ingest(const Options& o, std::ostream& out) {
  const auto dir = require_out(o);
  RunManifest manifest("ingest");
  if (o.schema.empty() || !fs::exists(o.schema)) {
    throw Error(ErrorKind::kSchemaMissing, "ingest needs --schema with the raw feature layout");
  }
  if (o.data.empty()) throw input_error("--data is required");
  manifest.input(o.schema);
  manifest.input(o.data);
  const json rs = read_json_file(o.schema);
  RawSchema raw_schema;
  try {
    raw_schema.numeric = rs.value("numeric", std::vector<std::string>{});
    for (const auto& c : rs.value("categorical", json::array())) {
      raw_schema.categorical.push_back(
          {c.at("name").get<std::string>(), c.at("categories").get<std::vector<std::string>>()});
    }
    raw_schema.monitoring_start = rs.value("monitoring_start", 24.0);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParseError, std::string("malformed raw schema: ") + e.what());
  }
  const double grid = o.grid_step.value_or(1.0);
  const std::string event_feature = rs.value("event_feature", std::string("__event__"));
  manifest.config() = {{"grid_step", grid},
                       {"event_feature", event_feature},
                       {"monitoring_start", raw_schema.monitoring_start}};

  std::ifstream in(o.data);
  if (!in) throw Error(ErrorKind::kIoError, "cannot open '" + o.data + "'");
  const auto streams = read_raw_observations_csv(in);
  const DatasetSchema schema = add_recurrence_features(raw_schema.dataset_schema());
  std::vector<Episode> episodes;
  for (const auto& s : streams) {
    std::vector<double> events;
    RawObservationStream observations = s;
    observations.entries.clear();
    for (const auto& e : s.entries) {
      if (e.feature == event_feature) {
        events.push_back(e.timestamp);
      } else {
        observations.entries.push_back(e);
      }
    }
    std::sort(events.begin(), events.end());
    events.erase(std::unique(events.begin(), events.end()), events.end());
    Episode ep = locf_discretize(observations, raw_schema, grid, raw_schema.monitoring_start);
    episodes.push_back(add_recurrence_features(mark_events(ep, events), events));
  }
  save_episodes(dir / "data.csv", schema, episodes);
  save_schema(dir / "schema.json", schema);
  manifest.write(dir);
  out << "ingested " << episodes.size() << " episodes\n";
  return kExitOk;
}

int cmd_fuse(const Options& o, std::ostream& out) {
  const auto dir = require_out(o);
  RunManifest manifest("fuse");
  const auto schema = require_schema(o.schema);
  const auto episodes = require_data(o.data, schema);
  if (o.embeddings.empty()) throw input_error("--embeddings is required");
  manifest.input(o.schema);
  manifest.input(o.data);
  manifest.input(o.embeddings);
  const auto streams = load_embeddings(o.embeddings);

  std::size_t width = schema.embedding_block().width;
  const bool append = width == 0;
  if (append) {
    for (const auto& [id, s] : streams) {
      if (s.width() == 0) continue;
      if (width != 0 && s.width() != width) {
        throw Error(ErrorKind::kSchemaMismatch, "embedding streams have different widths");
      }
      width = s.width();
    }
    if (width == 0) throw Error(ErrorKind::kSchemaMismatch, "no embeddings to fuse");
  }
  const DatasetSchema fused_schema = append ? add_embedding_block(schema, width) : schema;
  std::vector<Episode> fused;
  const EmbeddingStream empty;
  for (const auto& ep : episodes) {
    const auto it = streams.find(ep.episode_id);
    const Episode base = append ? widen(ep, width) : ep;
    fused.push_back(fuse_embeddings(base, it == streams.end() ? empty : it->second, fused_schema));
  }
  manifest.config() = {{"embedding_width", width}, {"appended_block", append}};
  save_episodes(dir / "data.csv", fused_schema, fused);
  save_schema(dir / "schema.json", fused_schema);
  manifest.write(dir);
  out << "fused " << fused.size() << " episodes with " << width << "-dim embeddings\n";
  return kExitOk;
}

int cmd_cv(const Options& o, std::ostream& out) {
  const auto dir = require_out(o);
  RunManifest manifest("cv");
  const auto schema = require_schema(o.schema);
  const auto episodes = require_data(o.data, schema);
  manifest.input(o.schema);
  manifest.input(o.data);
  CvGrid grid;
  if (!o.grid_depths.empty()) grid.depths = parse_int_grid(o.grid_depths);
  if (!o.grid_trees.empty()) grid.tree_counts = parse_int_grid(o.grid_trees);
  grid.validate();
  json train_echo;
  Options base = o;
  base.depth.reset();
  base.trees.reset();
  const TrainConfig config = effective_train_config(base, train_echo);
  const int k = o.folds.value_or(5);
  const std::uint64_t seed = o.seed.value_or(0);
  manifest.seed(seed);
  manifest.config() = {{"folds", k},
                       {"grid_depths", grid.depths},
                       {"grid_trees", grid.tree_counts},
                       {"train", train_echo}};

  const auto result = cross_validate(episodes, schema, grid, k, seed, config);
  {
    std::ofstream csv(dir / "cv_grid.csv");
    csv << "depth,trees,mean_nll,se,selected\n";
    for (const auto& c : result.cells) {
      const bool sel = c.depth == result.selected_depth && c.trees == result.selected_trees;
      csv << c.depth << ',' << c.trees << ',' << format_number(c.mean_nll) << ','
          << format_number(c.se) << ',' << (sel ? 1 : 0) << '\n';
    }
  }
  {
    json sel = {{"depth", result.selected_depth},
                {"trees", result.selected_trees},
                {"nu", config.nu}};
    std::ofstream f(dir / "selected.json");
    f << sel.dump(2) << '\n';
  }
  manifest.write(dir);
  out << "selected depth=" << result.selected_depth << " trees=" << result.selected_trees << '\n';
  return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  const auto schema = require_schema(o.schema);
  const auto dir = require_out(o);
  RunManifest manifest("train");
  const auto episodes = require_data(o.data, schema);
  manifest.input(o.schema);
  manifest.input(o.data);
  if (!o.config.empty()) manifest.input(o.config);
  json echo;
  const TrainConfig config = effective_train_config(o, echo);
  manifest.config() = echo;
  if (o.seed) manifest.seed(*o.seed);

  TrainLog log;
  const auto model = train(episodes, schema, config, &log);
  save_model(dir / "model.json", model);
  {
    std::ofstream csv(dir / "train_log.csv");
    csv << "round,train_nll\n";
    for (std::size_t r = 0; r < log.round_nll.size(); ++r) {
      csv << r << ',' << format_number(log.round_nll[r]) << '\n';
    }
  }
  manifest.write(dir);
  out << "trained " << model.trees.size() << " trees, final train NLL "
      << format_number(log.round_nll.back()) << '\n';
  return kExitOk;
}

// Streaming scorer: one input epoch row in, its constant-hazard pieces out.
int cmd_monitor(const Options& o, std::istream& in, std::ostream& out) {
  if (o.model.empty()) throw input_error("--model is required");
  const auto model = load_model(o.model);
  std::map<std::string, EmbeddingStream> notes;
  if (!o.embeddings.empty()) notes = load_embeddings(o.embeddings);

  std::ifstream file;
  std::istream* src = &in;
  if (!o.data.empty() && o.data != "-") {
    file.open(o.data);
    if (!file) throw Error(ErrorKind::kIoError, "cannot open '" + o.data + "'");
    src = &file;
  }
  std::ofstream file_out;
  std::ostream* dst = &out;
  std::optional<fs::path> dir;
  if (!o.out.empty()) {
    dir = require_out(o);
    file_out.open(*dir / "hazards.csv");
    dst = &file_out;
  }

  const auto& schema = model.schema;
  const auto block = schema.embedding_block();
  std::vector<std::string> tabular_names;
  for (std::size_t i = 0; i < schema.width(); ++i) {
    if (schema.feature_kinds[i] != FeatureKind::kEmbedding) tabular_names.push_back(schema.feature_names[i]);
  }

  std::string line;
  if (!std::getline(*src, line)) return kExitOk;  // empty stream, empty output
  const auto header = split_csv_line(line);
  const auto full_header = episode_csv_header(schema);
  DatasetSchema tabular;
  tabular.feature_names = tabular_names;
  const auto short_header = episode_csv_header(tabular);
  bool side_channel = false;
  if (header == full_header && (block.width == 0 || notes.empty())) {
    side_channel = false;
  } else if (block.width > 0 && header == short_header) {
    side_channel = true;
  } else {
    throw Error(ErrorKind::kSchemaMismatch, "stream header does not match the model schema");
  }
  const std::size_t n_fields = header.size();

  write_pieces_header(*dst);
  std::set<std::string> failed;
  std::size_t errors = 0;
  while (std::getline(*src, line)) {
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> f;
    std::string episode_id;
    Epoch e;
    try {
      f = split_csv_line(line);
      episode_id = f.size() > 1 ? f[1] : std::string();
      if (failed.count(episode_id)) continue;
      if (f.size() != n_fields) {
        throw Error(ErrorKind::kSchemaMismatch, "expected " + std::to_string(n_fields) +
                                                    " fields, got " + std::to_string(f.size()));
      }
      e.t_start = parse_number(f[2]);
      e.t_end = parse_number(f[3]);
      if (!(e.t_start < e.t_end)) throw Error(ErrorKind::kSchemaMismatch, "empty epoch interval");
      std::vector<double> values;
      for (std::size_t k = 5; k < f.size(); ++k) values.push_back(parse_number(f[k]));
      if (side_channel) {
        e.covariates.assign(schema.width(), kMissing);
        std::size_t v = 0;
        for (std::size_t i = 0; i < schema.width(); ++i) {
          if (schema.feature_kinds[i] != FeatureKind::kEmbedding) e.covariates[i] = values[v++];
        }
      } else {
        e.covariates = std::move(values);
      }
    } catch (const Error& err) {
      ++errors;
      failed.insert(episode_id);
      *dst << csv_escape(episode_id) << ",,,," << csv_escape(std::string(to_string(err.kind())) +
                                                              ": " + err.what())
           << '\n';
      dst->flush();
      continue;
    }

    Episode single;
    single.episode_id = episode_id;
    single.epochs.push_back(std::move(e));
    if (side_channel) {
      const auto it = notes.find(episode_id);
      if (it != notes.end()) single = fuse_embeddings(single, it->second, schema);
      else single = fuse_embeddings(single, EmbeddingStream{}, schema);
    }
    for (const auto& piece : hazard_pieces(model, single)) write_piece(*dst, episode_id, piece);
    dst->flush();
  }
  if (dir) {
    RunManifest manifest("monitor");
    manifest.input(o.model);
    manifest.input(o.data);
    manifest.input(o.embeddings);
    manifest.config() = {{"side_channel_embeddings", side_channel}, {"error_rows", errors}};
    manifest.write(*dir);
  }
  return kExitOk;
}

// Traces from a hazard-path CSV (episode_id,t_start,t_end,hazard[,error]).
std::map<std::string, std::vector<HazardPiece>> load_hazard_paths(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIoError, "cannot open '" + path + "'");
  std::string line;
  std::getline(in, line);
  const auto header = split_csv_line(line);
  if (header.size() < 4 || header[0] != "episode_id" || header[3] != "hazard") {
    throw Error(ErrorKind::kSchemaMismatch, "hazard path header must start episode_id,t_start,t_end,hazard");
  }
  std::map<std::string, std::vector<HazardPiece>> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() < 4 || f[3].empty()) continue;
    out[f[0]].push_back({parse_number(f[1]), parse_number(f[2]), parse_number(f[3])});
  }
  return out;
}

int cmd_evaluate(const Options& o, std::ostream& out) {
  const auto schema = require_schema(o.schema);
  const auto dir = require_out(o);
  RunManifest manifest("evaluate");
  const auto episodes = require_data(o.data, schema);
  manifest.input(o.schema);
  manifest.input(o.data);

  std::vector<MonitoringTrace> traces;
  if (!o.model.empty()) {
    manifest.input(o.model);
    const auto model = load_model(o.model);
    if (model.schema.feature_names != schema.feature_names) {
      throw Error(ErrorKind::kSchemaMismatch, "model schema differs from data schema");
    }
    for (const auto& ep : episodes) traces.push_back(make_trace(model, ep));
  } else if (!o.hazards.empty()) {
    manifest.input(o.hazards);
    const auto paths = load_hazard_paths(o.hazards);
    for (const auto& ep : episodes) {
      MonitoringTrace tr;
      tr.episode_id = ep.episode_id;
      tr.monitoring_start = schema.monitoring_start;
      const auto it = paths.find(ep.episode_id);
      if (it == paths.end()) {
        throw Error(ErrorKind::kSchemaMismatch, "no hazard path for episode '" + ep.episode_id + "'");
      }
      tr.path = it->second;
      const double t_event = first_event_time(ep);
      if (!is_missing(t_event)) tr.first_event_time = t_event;
      tr.monitored_until = ep.epochs.back().t_end;
      traces.push_back(std::move(tr));
    }
  } else {
    throw input_error("evaluate needs --model or --hazards");
  }

  std::vector<ScoredEpisode> scored;
  std::size_t warnings = 0;
  for (const auto& tr : traces) {
    const auto s = episode_score(tr);
    if (s.empty_pre_event_window) ++warnings;
    scored.push_back({s.score, s.positive});
  }
  if (warnings > 0) {
    std::cerr << "warning: " << warnings
              << " positive episode(s) have an event at the first monitored instant\n";
  }
  const auto curves = roc_pr_curves(scored);
  const auto f1 = f1_optimal_threshold(scored);
  const double rho = o.rho.value_or(f1.rho);
  const auto edges = o.bins.empty() ? default_bucket_edges() : parse_list(o.bins);
  const auto bins = bins_from_edges(edges);
  const auto auct_bins = auct(traces, bins);
  const auto leads = lead_times(traces, rho, edges);
  manifest.config() = {{"rho", rho}, {"rho_from_f1", !o.rho.has_value()}, {"bins", edges}};

  json auct_json = json::array();
  for (const auto& b : auct_bins) {
    auct_json.push_back({{"lo", b.bin.lo},
                         {"hi", std::isfinite(b.bin.hi) ? json(b.bin.hi) : json(nullptr)},
                         {"value", b.value ? json(*b.value) : json(nullptr)},
                         {"ci_lo", b.value ? json(b.ci_lo) : json(nullptr)},
                         {"ci_hi", b.value ? json(b.ci_hi) : json(nullptr)},
                         {"n_times", b.n_times}});
  }
  json lead_json = json::array();
  for (std::size_t k = 0; k < edges.size(); ++k) {
    lead_json.push_back({{"lo", edges[k]},
                         {"hi", k + 1 < edges.size() ? json(edges[k + 1]) : json(nullptr)},
                         {"count", leads.histogram[k]}});
  }
  const json metrics = {{"auroc", curves.auroc},
                        {"auc_pr", curves.auc_pr},
                        {"auct_bins", auct_json},
                        {"rho_star", f1.rho},
                        {"f1_at_rho_star", f1.f1},
                        {"rho_used", rho},
                        {"lead_time_histogram", lead_json}};
  {
    std::ofstream f(dir / "metrics.json");
    f << metrics.dump(2) << '\n';
  }
  {
    std::ofstream roc(dir / "roc.csv");
    roc << "threshold,fpr,tpr\n";
    for (const auto& p : curves.roc) {
      roc << format_number(p.threshold) << ',' << format_number(p.x) << ',' << format_number(p.y) << '\n';
    }
    std::ofstream pr(dir / "pr.csv");
    pr << "threshold,recall,precision\n";
    for (const auto& p : curves.pr) {
      pr << format_number(p.threshold) << ',' << format_number(p.x) << ',' << format_number(p.y) << '\n';
    }
    std::ofstream ac(dir / "auct.csv");
    ac << "bin_lo,bin_hi,auct,ci_lo,ci_hi,n_times\n";
    for (const auto& b : auct_bins) {
      ac << format_number(b.bin.lo) << ',' << (std::isfinite(b.bin.hi) ? format_number(b.bin.hi) : "")
         << ',' << (b.value ? format_number(*b.value) : "") << ','
         << (b.value ? format_number(b.ci_lo) : "") << ',' << (b.value ? format_number(b.ci_hi) : "")
         << ',' << b.n_times << '\n';
    }
    std::ofstream oc(dir / "outcomes.csv");
    oc << "episode_id,score,label,flag_time,outcome,lead_time\n";
    for (const auto& tr : traces) {
      const auto fo = flag_outcome(tr, rho);
      const bool tp = fo.outcome == Outcome::kTruePositive;
      oc << csv_escape(fo.episode_id) << ',' << format_number(fo.score) << ','
         << (fo.positive ? "positive" : "negative") << ','
         << (fo.flag_time ? format_number(*fo.flag_time) : "") << ',' << to_string(fo.outcome) << ','
         << (tp ? format_number(*tr.first_event_time - *fo.flag_time) : "") << '\n';
    }
  }
  manifest.write(dir);
  out << "auroc=" << format_number(curves.auroc) << " auc_pr=" << format_number(curves.auc_pr)
      << " rho*=" << format_number(f1.rho) << '\n';
  return kExitOk;
}

int cmd_importance(const Options& o, std::ostream& out) {
  if (o.model.empty()) throw input_error("--model is required");
  const auto model = load_model(o.model);
  const auto imp = variable_importance(model);
  json j = json::object();
  for (const auto& [name, v] : imp) j[name] = v;
  if (!o.out.empty()) {
    const auto dir = require_out(o);
    RunManifest manifest("importance");
    manifest.input(o.model);
    std::ofstream f(dir / "importance.json");
    f << j.dump(2) << '\n';
    std::ofstream csv(dir / "importance.csv");
    csv << "feature,importance\n";
    for (const auto& [name, v] : imp) csv << csv_escape(name) << ',' << format_number(v) << '\n';
    manifest.write(dir);
  }
  out << j.dump(2) << '\n';
  return kExitOk;
}

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--data", o.data, "Input data file ('-' for stdin where streaming)");
  sub->add_option("--schema", o.schema, "Schema JSON sidecar");
  sub->add_option("--embeddings", o.embeddings, "Embedding JSONL");
  sub->add_option("--model", o.model, "Model JSON");
  sub->add_option("--out", o.out, "Output directory");
  sub->add_option("--config", o.config, "Config JSON (flags take precedence)");
  sub->add_option("--seed", o.seed, "Random seed");
}

}  // namespace

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"hazardforge: boosted hazard estimation and realtime risk monitoring"};
  app.require_subcommand(1);
  Options o;

  auto* simulate_cmd = app.add_subcommand("simulate", "Generate a synthetic cohort");
  add_common(simulate_cmd, o);
  simulate_cmd->add_option("--scenario", o.scenario, "constant | two-group | note-signal");
  simulate_cmd->add_option("--episodes", o.episodes, "Number of episodes");

  auto* ingest_cmd = app.add_subcommand("ingest", "Discretize raw observations into epochs");
  add_common(ingest_cmd, o);
  ingest_cmd->add_option("--grid-step", o.grid_step, "Epoch length in hours (default 1)");

  auto* fuse_cmd = app.add_subcommand("fuse", "Fuse embedding streams into epochs");
  add_common(fuse_cmd, o);

  auto* cv_cmd = app.add_subcommand("cv", "Cross-validate the (depth, trees) grid");
  add_common(cv_cmd, o);
  cv_cmd->add_option("--folds", o.folds, "Number of folds (default 5)");
  cv_cmd->add_option("--grid-depths", o.grid_depths, "Depths, e.g. 1,2,3,4 or 1:4");
  cv_cmd->add_option("--grid-trees", o.grid_trees, "Tree counts, e.g. 25:500:25");
  cv_cmd->add_option("--nu", o.nu, "Shrinkage");

  auto* train_cmd = app.add_subcommand("train", "Train a hazard ensemble");
  add_common(train_cmd, o);
  train_cmd->add_option("--depth", o.depth, "Maximum tree depth");
  train_cmd->add_option("--trees", o.trees, "Number of trees");
  train_cmd->add_option("--nu", o.nu, "Shrinkage");

  auto* monitor_cmd = app.add_subcommand("monitor", "Stream per-epoch hazards");
  add_common(monitor_cmd, o);

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Flagging, ROC/PR, AUCt and lead times");
  add_common(evaluate_cmd, o);
  evaluate_cmd->add_option("--hazards", o.hazards, "Hazard path CSV instead of --model");
  evaluate_cmd->add_option("--rho", o.rho, "Flag threshold (default: F1-optimal)");
  evaluate_cmd->add_option("--bins", o.bins, "Bin edges in hours, e.g. 0,24,48,72");

  auto* importance_cmd = app.add_subcommand("importance", "Normalized variable importance");
  add_common(importance_cmd, o);

  std::vector<const char*> argv = {"hazardforge"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*simulate_cmd) return cmd_simulate(o, out);
    if (*ingest_cmd) return cmd_ingest(o, out);
    if (*fuse_cmd) return cmd_fuse(o, out);
    if (*cv_cmd) return cmd_cv(o, out);
    if (*train_cmd) return cmd_train(o, out);
    if (*monitor_cmd) return cmd_monitor(o, in, out);
    if (*evaluate_cmd) return cmd_evaluate(o, out);
    if (*importance_cmd) return cmd_importance(o, out);
  } catch (const Error& e) {
    err << json{{"error", {{"kind", to_string(e.kind())}, {"message", e.what()}}}}.dump() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << json{{"error", {{"kind", "InputError"}, {"message", e.what()}}}}.dump() << '\n';
    return kExitInput;
  }
  return kExitInput;
}

}  // namespace hazardforge::cli
