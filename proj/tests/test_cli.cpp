#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "hazardforge/cli.hpp"
#include "hazardforge/error.hpp"
#include "hazardforge/io.hpp"
#include "hazardforge/synth.hpp"
#include "json.hpp"
#include "oracles.hpp"

using namespace hazardforge;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result hf(std::vector<std::string> args, const std::string& input = "") {
  std::istringstream in(input);
  std::ostringstream out, err;
  Result r;
  r.code = cli::run(args, in, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::string piece_row(const std::string& id, const HazardPiece& p) {
  return csv_escape(id) + "," + format_number(p.t_start) + "," + format_number(p.t_end) + "," +
         format_number(p.hazard) + ",";
}

// Simulated note-signal cohort, fused, with a model trained on it. Built once.
struct Pipeline {
  fs::path root;
  fs::path sim, fused, model;

  Pipeline() {
    root = oracle::temp_dir("cli");
    sim = root / "sim";
    fused = root / "fused";
    model = root / "model";
    auto r = hf({"simulate", "--scenario", "note-signal", "--episodes", "300", "--seed", "11",
                 "--out", sim.string()});
    if (r.code != 0) throw std::runtime_error(r.err);
    r = hf({"fuse", "--data", (sim / "data.csv").string(), "--schema", (sim / "schema.json").string(),
            "--embeddings", (sim / "embeddings.jsonl").string(), "--out", fused.string()});
    if (r.code != 0) throw std::runtime_error(r.err);
    r = hf({"train", "--data", (fused / "data.csv").string(), "--schema",
            (fused / "schema.json").string(), "--depth", "2", "--trees", "40", "--seed", "1",
            "--out", model.string()});
    if (r.code != 0) throw std::runtime_error(r.err);
  }
};

const Pipeline& pipeline() {
  static const Pipeline p;
  return p;
}

}  // namespace

TEST(Cli, MissingSchemaIsInputError) {
  const auto dir = oracle::temp_dir("noschema");
  const auto r = hf({"train", "--data", (dir / "x.csv").string(), "--out", (dir / "o").string()});
  EXPECT_EQ(r.code, 2);
  const auto j = nlohmann::json::parse(r.err);
  EXPECT_EQ(j["error"]["kind"], "SchemaMissing");
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(hf({}).code, 2);
  EXPECT_EQ(hf({"bogus"}).code, 2);
  EXPECT_EQ(hf({"--help"}).code, 0);
  EXPECT_EQ(hf({"simulate", "--scenario", "nope", "--out", oracle::temp_dir("bad").string()}).code, 2);
}

TEST(Cli, DegenerateDataExitsThree) {
  const auto dir = oracle::temp_dir("degen");
  auto r = hf({"simulate", "--scenario", "constant", "--episodes", "20", "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  // drop every event
  auto schema = load_schema(dir / "schema.json");
  auto eps = load_episodes(dir / "data.csv", schema);
  for (auto& ep : eps) {
    for (auto& e : ep.epochs) e.delta = 0;
  }
  save_episodes(dir / "none.csv", schema, eps);
  r = hf({"train", "--data", (dir / "none.csv").string(), "--schema", (dir / "schema.json").string(),
          "--out", (dir / "m").string()});
  EXPECT_EQ(r.code, 3);
}

TEST(Cli, TrainingIsDeterministicAndLogDescends) {
  const auto& p = pipeline();
  const auto again = p.root / "model2";
  const auto r = hf({"train", "--data", (p.fused / "data.csv").string(), "--schema",
                     (p.fused / "schema.json").string(), "--depth", "2", "--trees", "40", "--seed",
                     "1", "--out", again.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(p.model / "model.json"), slurp(again / "model.json"));

  const auto log = lines(slurp(p.model / "train_log.csv"));
  ASSERT_EQ(log.front(), "round,train_nll");
  ASSERT_EQ(log.size(), 42u);  // header, round 0, 40 trees
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < log.size(); ++k) {
    const double v = parse_number(split_csv_line(log[k])[1]);
    EXPECT_LE(v, prev + 1e-9 * std::abs(prev)) << "round " << k - 1;
    prev = v;
  }
}

TEST(Cli, EveryOutputDirHasOneManifest) {
  const auto& p = pipeline();
  for (const auto& dir : {p.sim, p.fused, p.model}) {
    int manifests = 0;
    for (const auto& f : fs::directory_iterator(dir)) manifests += f.path().filename() == "manifest.json";
    EXPECT_EQ(manifests, 1) << dir;
  }
  const auto m = nlohmann::json::parse(slurp(p.model / "manifest.json"));
  EXPECT_EQ(m["command"], "train");
  EXPECT_EQ(m["seed"], 1);
  EXPECT_EQ(m["config"]["max_depth"], 2);
  EXPECT_EQ(m["inputs"].size(), 2u);
  for (const auto& [path, digest] : m["inputs"].items()) EXPECT_EQ(digest.get<std::string>().size(), 64u);
  for (const char* key : {"tool_version", "started_at", "wall_clock_seconds"}) EXPECT_TRUE(m.contains(key));
}

TEST(Cli, MonitorStreamingMatchesBatch) {
  const auto& p = pipeline();
  const auto model = load_model(p.model / "model.json");
  const auto eps = load_episodes(p.fused / "data.csv", model.schema);
  std::string expected = "episode_id,t_start,t_end,hazard,error\n";
  for (const auto& ep : eps) {
    for (const auto& piece : hazard_pieces(model, ep)) expected += piece_row(ep.episode_id, piece) + "\n";
  }

  // fused rows through stdin
  const auto r = hf({"monitor", "--model", (p.model / "model.json").string(), "--data", "-"},
                    slurp(p.fused / "data.csv"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, expected);

  // raw rows with the notes on the side channel; epochs are split at notes on the fly
  const auto side = hf({"monitor", "--model", (p.model / "model.json").string(), "--data",
                        (p.sim / "data.csv").string(), "--embeddings",
                        (p.sim / "embeddings.jsonl").string()});
  ASSERT_EQ(side.code, 0) << side.err;
  EXPECT_EQ(side.out, expected);

  // file output with a manifest
  const auto out_dir = p.root / "monitor";
  ASSERT_EQ(hf({"monitor", "--model", (p.model / "model.json").string(), "--data",
                (p.fused / "data.csv").string(), "--out", out_dir.string()})
                .code,
            0);
  EXPECT_EQ(slurp(out_dir / "hazards.csv"), expected);
  EXPECT_TRUE(fs::exists(out_dir / "manifest.json"));
}

TEST(Cli, MonitorEmptyStream) {
  const auto& p = pipeline();
  const auto r = hf({"monitor", "--model", (p.model / "model.json").string(), "--data", "-"}, "");
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "");
}

TEST(Cli, MonitorBadRowReportsAndSkipsEpisode) {
  const auto& p = pipeline();
  auto rows = lines(slurp(p.fused / "data.csv"));
  const auto first = split_csv_line(rows[1]);
  std::string input = rows[0] + "\n" + first[0] + "," + first[1] + ",30,29,0\n";
  for (std::size_t k = 1; k < rows.size(); ++k) input += rows[k] + "\n";
  const auto r = hf({"monitor", "--model", (p.model / "model.json").string(), "--data", "-"}, input);
  EXPECT_EQ(r.code, 0);
  const auto out = lines(r.out);
  int errors = 0, bad_episode_rows = 0;
  for (const auto& l : out) {
    const auto f = split_csv_line(l);
    if (!f.back().empty() && f.back() != "error") ++errors;
    if (f[0] == first[1]) ++bad_episode_rows;
  }
  EXPECT_EQ(errors, 1);
  EXPECT_EQ(bad_episode_rows, 1);  // the error row only
}

TEST(Cli, NoteChangesHazardOnlyFromItsStamp) {
  const auto& p = pipeline();
  const auto model = load_model(p.model / "model.json");
  // one raw episode, no notes before 40
  const std::string input =
      "subject_id,episode_id,t_start,t_end,delta,x0,x1,prior_event_count,time_since_last_event\n"
      "s,q,24,36,0,0.5,0,0,\n"
      "s,q,36,60,0,0.5,0,0,\n";
  const auto dir = oracle::temp_dir("note");
  auto write_note = [&](const std::string& name, double a, double b) {
    std::ofstream f(dir / name);
    f << R"({"episode_id":"q","timestamp_hours":40.5,"embedding":[)" << a << "," << b << "]}\n";
  };
  write_note("up.jsonl", 3.0, -3.0);
  write_note("down.jsonl", -3.0, 3.0);
  const auto none = hf({"monitor", "--model", (p.model / "model.json").string(), "--data", "-"}, input);
  const auto up = hf({"monitor", "--model", (p.model / "model.json").string(), "--data", "-",
                      "--embeddings", (dir / "up.jsonl").string()},
                     input);
  const auto down = hf({"monitor", "--model", (p.model / "model.json").string(), "--data", "-",
                        "--embeddings", (dir / "down.jsonl").string()},
                       input);
  ASSERT_EQ(none.code, 0) << none.err;
  ASSERT_EQ(up.code, 0) << up.err;
  ASSERT_EQ(down.code, 0) << down.err;

  auto hazard_at = [](const std::string& text, double t) {
    for (const auto& l : lines(text)) {
      const auto f = split_csv_line(l);
      if (f[0] != "q") continue;
      if (parse_number(f[1]) <= t && t < parse_number(f[2])) return parse_number(f[3]);
    }
    return kMissing;
  };
  bool differs_after = false;
  for (double t = 24.0; t < 60.0; t += 0.25) {
    const double a = hazard_at(none.out, t), b = hazard_at(up.out, t), c = hazard_at(down.out, t);
    ASSERT_FALSE(is_missing(a));
    if (t < 40.5) {
      EXPECT_EQ(a, b) << t;
      EXPECT_EQ(a, c) << t;
    } else {
      differs_after = differs_after || b != c;
    }
  }
  EXPECT_TRUE(differs_after);
}

TEST(Cli, CvOneCellGrid) {
  const auto& p = pipeline();
  const auto out = p.root / "cv";
  const auto r = hf({"cv", "--data", (p.fused / "data.csv").string(), "--schema",
                     (p.fused / "schema.json").string(), "--grid-depths", "2", "--grid-trees", "10",
                     "--folds", "3", "--seed", "2", "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto sel = nlohmann::json::parse(slurp(out / "selected.json"));
  EXPECT_EQ(sel["depth"], 2);
  EXPECT_EQ(sel["trees"], 10);
  const auto grid = lines(slurp(out / "cv_grid.csv"));
  ASSERT_EQ(grid.size(), 2u);
  EXPECT_EQ(grid[0], "depth,trees,mean_nll,se,selected");
}

TEST(Cli, EvaluateTruthMatchesOracle) {
  const auto dir = oracle::temp_dir("eval");
  auto r = hf({"simulate", "--scenario", "two-group", "--episodes", "400", "--seed", "5", "--out",
               (dir / "sim").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  r = hf({"evaluate", "--data", (dir / "sim" / "data.csv").string(), "--schema",
          (dir / "sim" / "schema.json").string(), "--hazards",
          (dir / "sim" / "truth_hazard.csv").string(), "--out", (dir / "ev").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto metrics = nlohmann::json::parse(slurp(dir / "ev" / "metrics.json"));
  const auto truth = nlohmann::json::parse(slurp(dir / "sim" / "truth.json"));
  const auto cohort = simulate(scenario_from_json(truth["scenario"]));
  const auto bins = bins_from_edges(default_bucket_edges());
  const auto om = oracle_metrics(cohort, bins);
  EXPECT_EQ(metrics["auroc"].get<double>(), om.auroc);
  EXPECT_EQ(metrics["auc_pr"].get<double>(), om.auc_pr);
  ASSERT_EQ(metrics["auct_bins"].size(), om.auct_bins.size());
  for (std::size_t k = 0; k < om.auct_bins.size(); ++k) {
    if (om.auct_bins[k].value) {
      EXPECT_EQ(metrics["auct_bins"][k]["value"].get<double>(), *om.auct_bins[k].value);
    }
  }
  for (const char* f : {"roc.csv", "pr.csv", "auct.csv", "outcomes.csv", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(dir / "ev" / f)) << f;
  }
}

TEST(Cli, ImportanceOfSingleSplit) {
  const auto dir = oracle::temp_dir("imp");
  auto r = hf({"simulate", "--scenario", "two-group", "--episodes", "400", "--seed", "6", "--out",
               (dir / "sim").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  r = hf({"train", "--data", (dir / "sim" / "data.csv").string(), "--schema",
          (dir / "sim" / "schema.json").string(), "--depth", "1", "--trees", "1", "--nu", "1",
          "--out", (dir / "m").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  r = hf({"importance", "--model", (dir / "m" / "model.json").string(), "--out",
          (dir / "imp").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["x0"].get<double>(), 1.0);
  for (const auto& [k, v] : j.items()) {
    if (k != "x0") EXPECT_EQ(v.get<double>(), 0.0) << k;
  }
  EXPECT_EQ(nlohmann::json::parse(slurp(dir / "imp" / "importance.json")), j);
}
