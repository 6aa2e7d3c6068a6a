#include "hazardforge/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "hazardforge/error.hpp"
#include "hazardforge/parallel.hpp"

namespace hazardforge {

using nlohmann::json;

// ---------------------------------------------------------------------------
// TrueHazard.

TrueHazard TrueHazard::constant(double rate) {
  TrueHazard h;
  h.kind = Kind::kConstant;
  h.rate = rate;
  return h;
}

TrueHazard TrueHazard::feature_step(std::string feature, double threshold, double low,
                                    double high) {
  TrueHazard h;
  h.kind = Kind::kFeatureStep;
  h.feature = std::move(feature);
  h.threshold = threshold;
  h.low = low;
  h.high = high;
  return h;
}

TrueHazard TrueHazard::time_step(double time, double before, double after) {
  TrueHazard h;
  h.kind = Kind::kTimeStep;
  h.threshold = time;
  h.low = before;
  h.high = after;
  return h;
}

TrueHazard TrueHazard::product(std::vector<TrueHazard> factors) {
  TrueHazard h;
  h.kind = Kind::kProduct;
  h.factors = std::move(factors);
  return h;
}

double TrueHazard::evaluate(double t, std::span<const double> x,
                            std::span<const std::string> names) const {
  switch (kind) {
    case Kind::kConstant:
      return rate;
    case Kind::kFeatureStep: {
      const auto it = std::find(names.begin(), names.end(), feature);
      if (it == names.end()) {
        throw Error(ErrorKind::kInvalidArgument, "hazard refers to unknown feature '" + feature + "'");
      }
      return x[static_cast<std::size_t>(it - names.begin())] < threshold ? low : high;
    }
    case Kind::kTimeStep:
      return t < threshold ? low : high;
    case Kind::kProduct: {
      double v = 1.0;
      for (const auto& f : factors) v *= f.evaluate(t, x, names);
      return v;
    }
  }
  return 0.0;
}

void TrueHazard::collect_time_breaks(std::vector<double>& out) const {
  if (kind == Kind::kTimeStep) out.push_back(threshold);
  for (const auto& f : factors) f.collect_time_breaks(out);
}

// ---------------------------------------------------------------------------
// JSON.

namespace {

json hazard_to_json(const TrueHazard& h) {
  switch (h.kind) {
    case TrueHazard::Kind::kConstant:
      return {{"type", "constant"}, {"rate", h.rate}};
    case TrueHazard::Kind::kFeatureStep:
      return {{"type", "feature_step"}, {"feature", h.feature}, {"threshold", h.threshold},
              {"low", h.low}, {"high", h.high}};
    case TrueHazard::Kind::kTimeStep:
      return {{"type", "time_step"}, {"time", h.threshold}, {"before", h.low}, {"after", h.high}};
    case TrueHazard::Kind::kProduct: {
      json f = json::array();
      for (const auto& x : h.factors) f.push_back(hazard_to_json(x));
      return {{"type", "product"}, {"factors", f}};
    }
  }
  return {};
}

TrueHazard hazard_from_json(const json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "constant") return TrueHazard::constant(j.at("rate").get<double>());
  if (type == "feature_step") {
    return TrueHazard::feature_step(j.at("feature").get<std::string>(),
                                    j.at("threshold").get<double>(), j.at("low").get<double>(),
                                    j.at("high").get<double>());
  }
  if (type == "time_step") {
    return TrueHazard::time_step(j.at("time").get<double>(), j.at("before").get<double>(),
                                 j.at("after").get<double>());
  }
  if (type == "product") {
    std::vector<TrueHazard> f;
    for (const auto& x : j.at("factors")) f.push_back(hazard_from_json(x));
    return TrueHazard::product(std::move(f));
  }
  throw Error(ErrorKind::kParseError, "unknown hazard type '" + type + "'");
}

std::string_view distribution_name(CovariateSpec::Distribution d) {
  switch (d) {
    case CovariateSpec::Distribution::kBernoulli: return "bernoulli";
    case CovariateSpec::Distribution::kUniform: return "uniform";
    case CovariateSpec::Distribution::kNormal: return "normal";
  }
  return "uniform";
}

CovariateSpec::Distribution distribution_from_name(const std::string& s) {
  if (s == "bernoulli") return CovariateSpec::Distribution::kBernoulli;
  if (s == "uniform") return CovariateSpec::Distribution::kUniform;
  if (s == "normal") return CovariateSpec::Distribution::kNormal;
  throw Error(ErrorKind::kParseError, "unknown distribution '" + s + "'");
}

}  // namespace

json scenario_to_json(const ScenarioSpec& spec) {
  json cov = json::array();
  for (const auto& c : spec.covariates) {
    cov.push_back({{"name", c.name},
                   {"distribution", std::string(distribution_name(c.distribution))},
                   {"p", c.p},
                   {"lo", c.lo},
                   {"hi", c.hi},
                   {"mean", c.mean},
                   {"sd", c.sd},
                   {"change_rate", c.change_rate},
                   {"hidden", c.hidden}});
  }
  json j = {{"true_hazard", hazard_to_json(spec.true_hazard)},
            {"lambda_max", spec.lambda_max},
            {"covariates", cov},
            {"n_episodes", spec.n_episodes},
            {"episodes_per_subject", spec.episodes_per_subject},
            {"max_follow_up", spec.max_follow_up},
            {"censor_rate", spec.censor_rate},
            {"monitoring_start", spec.monitoring_start},
            {"seed", spec.seed}};
  j["prevalence_target"] = spec.prevalence_target ? json(*spec.prevalence_target) : json(nullptr);
  if (spec.embedding) {
    const auto& e = *spec.embedding;
    j["embedding"] = {{"source_feature", e.source_feature}, {"dim", e.dim},
                      {"note_rate", e.note_rate},           {"note_on_change", e.note_on_change},
                      {"delay", e.delay},                   {"signal", e.signal},
                      {"noise_sd", e.noise_sd}};
  } else {
    j["embedding"] = nullptr;
  }
  return j;
}

ScenarioSpec scenario_from_json(const json& j) {
  try {
    ScenarioSpec s;
    s.true_hazard = hazard_from_json(j.at("true_hazard"));
    s.lambda_max = j.at("lambda_max").get<double>();
    for (const auto& c : j.value("covariates", json::array())) {
      CovariateSpec cs;
      cs.name = c.at("name").get<std::string>();
      cs.distribution = distribution_from_name(c.value("distribution", std::string("uniform")));
      cs.p = c.value("p", cs.p);
      cs.lo = c.value("lo", cs.lo);
      cs.hi = c.value("hi", cs.hi);
      cs.mean = c.value("mean", cs.mean);
      cs.sd = c.value("sd", cs.sd);
      cs.change_rate = c.value("change_rate", cs.change_rate);
      cs.hidden = c.value("hidden", cs.hidden);
      s.covariates.push_back(std::move(cs));
    }
    s.n_episodes = j.value("n_episodes", s.n_episodes);
    s.episodes_per_subject = j.value("episodes_per_subject", s.episodes_per_subject);
    s.max_follow_up = j.value("max_follow_up", s.max_follow_up);
    s.censor_rate = j.value("censor_rate", s.censor_rate);
    s.monitoring_start = j.value("monitoring_start", s.monitoring_start);
    s.seed = j.value("seed", s.seed);
    if (j.contains("prevalence_target") && !j["prevalence_target"].is_null()) {
      s.prevalence_target = j["prevalence_target"].get<double>();
    }
    if (j.contains("embedding") && !j["embedding"].is_null()) {
      const auto& e = j["embedding"];
      EmbeddingSpec es;
      es.source_feature = e.at("source_feature").get<std::string>();
      es.dim = e.value("dim", es.dim);
      es.note_rate = e.value("note_rate", es.note_rate);
      es.note_on_change = e.value("note_on_change", es.note_on_change);
      es.delay = e.value("delay", es.delay);
      es.signal = e.value("signal", es.signal);
      es.noise_sd = e.value("noise_sd", es.noise_sd);
      s.embedding = es;
    }
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParseError, std::string("malformed scenario JSON: ") + e.what());
  }
}

void ScenarioSpec::validate() const {
  auto bad = [](const std::string& msg) { throw Error(ErrorKind::kInvalidArgument, msg); };
  if (!(lambda_max >= 0.0) || !std::isfinite(lambda_max)) bad("lambda_max must be finite and >= 0");
  if (n_episodes < 1) bad("n_episodes must be positive");
  if (episodes_per_subject < 1) bad("episodes_per_subject must be positive");
  if (!(max_follow_up > 0.0)) bad("max_follow_up must be positive");
  if (!(censor_rate >= 0.0)) bad("censor_rate must be >= 0");
  if (prevalence_target && !(*prevalence_target > 0.0 && *prevalence_target < 1.0)) {
    bad("prevalence_target must lie in (0, 1)");
  }
  for (const auto& c : covariates) {
    if (c.name.empty()) bad("covariate without a name");
    if (!(c.change_rate >= 0.0)) bad("change_rate must be >= 0");
  }
  if (embedding) {
    const auto it = std::find_if(covariates.begin(), covariates.end(),
                                 [&](const auto& c) { return c.name == embedding->source_feature; });
    if (it == covariates.end()) bad("embedding source feature is not a covariate");
    if (embedding->dim < 1) bad("embedding dim must be >= 1");
    if (!(embedding->note_rate >= 0.0) || !(embedding->noise_sd >= 0.0)) {
      bad("embedding rates must be >= 0");
    }
  }
}

// ---------------------------------------------------------------------------
// Simulation.

namespace {

std::mt19937_64 stream_rng(std::uint64_t seed, std::size_t episode, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(episode),
                    static_cast<std::uint32_t>(static_cast<std::uint64_t>(episode) >> 32), stream};
  return std::mt19937_64(seq);
}

double draw(const CovariateSpec& c, std::mt19937_64& rng) {
  switch (c.distribution) {
    case CovariateSpec::Distribution::kBernoulli:
      return std::bernoulli_distribution(c.p)(rng) ? 1.0 : 0.0;
    case CovariateSpec::Distribution::kUniform:
      return std::uniform_real_distribution<double>(c.lo, c.hi)(rng);
    case CovariateSpec::Distribution::kNormal:
      return std::normal_distribution<double>(c.mean, c.sd)(rng);
  }
  return 0.0;
}

// Piecewise-constant covariate path with lambda* constant on every segment.
struct Segment {
  double t_start = 0.0;
  double t_end = 0.0;
  std::vector<double> x;  // all covariates, hidden included
  double rate = 0.0;      // unscaled lambda*
};

struct Trajectory {
  double end = 0.0;
  std::vector<Segment> segments;
  std::vector<double> source_changes;  // change times of the embedding source

  double cumulative() const {
    double s = 0.0;
    for (const auto& seg : segments) s += seg.rate * (seg.t_end - seg.t_start);
    return s;
  }
};

Trajectory sample_trajectory(const ScenarioSpec& spec, std::span<const std::string> names,
                             std::span<const double> time_breaks, std::size_t i) {
  auto rng = stream_rng(spec.seed, i, 0);
  const double start = spec.monitoring_start;
  double follow = spec.max_follow_up;
  if (spec.censor_rate > 0.0) {
    follow = std::min(follow, std::exponential_distribution<double>(spec.censor_rate)(rng));
  }
  Trajectory tr;
  tr.end = start + follow;

  // (time, feature, value) changes; initial values at `start`.
  struct Change {
    double t;
    std::size_t feature;
    double value;
  };
  std::vector<Change> changes;
  std::vector<double> x(spec.covariates.size());
  const int source = spec.embedding
                         ? static_cast<int>(std::find(names.begin(), names.end(),
                                                      spec.embedding->source_feature) -
                                            names.begin())
                         : -1;
  for (std::size_t j = 0; j < spec.covariates.size(); ++j) {
    const auto& c = spec.covariates[j];
    x[j] = draw(c, rng);
    if (c.change_rate > 0.0) {
      std::exponential_distribution<double> gap(c.change_rate);
      for (double t = start + gap(rng); t < tr.end; t += gap(rng)) {
        changes.push_back({t, j, draw(c, rng)});
      }
    }
  }
  std::stable_sort(changes.begin(), changes.end(),
                   [](const Change& a, const Change& b) { return a.t < b.t; });

  std::vector<double> cuts;
  for (const auto& ch : changes) cuts.push_back(ch.t);
  for (const double b : time_breaks) {
    if (b > start && b < tr.end) cuts.push_back(b);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  std::size_t next_change = 0;
  double lo = start;
  double source_prev = source >= 0 ? x[static_cast<std::size_t>(source)] : 0.0;
  auto emit = [&](double hi) {
    if (!(lo < hi)) return;
    Segment seg{lo, hi, x, spec.true_hazard.evaluate(lo, x, names)};
    if (!(seg.rate >= 0.0) || seg.rate > spec.lambda_max) {
      throw Error(ErrorKind::kRateBoundViolated,
                  "lambda* = " + std::to_string(seg.rate) + " exceeds lambda_max = " +
                      std::to_string(spec.lambda_max));
    }
    tr.segments.push_back(std::move(seg));
    lo = hi;
  };
  for (const double c : cuts) {
    emit(c);
    for (; next_change < changes.size() && changes[next_change].t <= c; ++next_change) {
      x[changes[next_change].feature] = changes[next_change].value;
    }
    if (source >= 0 && x[static_cast<std::size_t>(source)] != source_prev) {
      tr.source_changes.push_back(c);
      source_prev = x[static_cast<std::size_t>(source)];
    }
  }
  emit(tr.end);
  return tr;
}

// Multiplier s with mean_i (1 - exp(-s * Lambda_i)) = target.
double calibrate_scale(std::span<const double> cumulative, double target) {
  auto prevalence = [&](double s) {
    double p = 0.0;
    for (const double c : cumulative) p += 1.0 - std::exp(-s * c);
    return p / static_cast<double>(cumulative.size());
  };
  double hi = 1.0;
  int guard = 0;
  while (prevalence(hi) < target) {
    hi *= 2.0;
    if (++guard > 200) {
      throw Error(ErrorKind::kInvalidArgument, "prevalence target unreachable for this scenario");
    }
  }
  double lo = 0.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (prevalence(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

SimulatedCohort simulate(const ScenarioSpec& spec) {
  spec.validate();
  std::vector<std::string> names;
  for (const auto& c : spec.covariates) names.push_back(c.name);
  std::vector<double> time_breaks;
  spec.true_hazard.collect_time_breaks(time_breaks);
  std::sort(time_breaks.begin(), time_breaks.end());

  const auto n = static_cast<std::size_t>(spec.n_episodes);
  std::vector<Trajectory> trajectories(n);
  parallel_for(n, [&](std::size_t i) {
    trajectories[i] = sample_trajectory(spec, names, time_breaks, i);
  });

  SimulatedCohort cohort;
  if (spec.prevalence_target) {
    std::vector<double> cumulative;
    cumulative.reserve(n);
    for (const auto& tr : trajectories) cumulative.push_back(tr.cumulative());
    cohort.hazard_scale = calibrate_scale(cumulative, *spec.prevalence_target);
  }
  const double scale = cohort.hazard_scale;
  const double bound = spec.lambda_max * scale;

  std::vector<std::size_t> visible;
  for (std::size_t j = 0; j < spec.covariates.size(); ++j) {
    if (!spec.covariates[j].hidden) visible.push_back(j);
  }
  DatasetSchema base;
  base.monitoring_start = spec.monitoring_start;
  for (const auto j : visible) base.append(spec.covariates[j].name, FeatureKind::kNumeric);
  cohort.schema = add_recurrence_features(base);

  cohort.episodes.resize(n);
  cohort.truth.resize(n);
  cohort.event_times.resize(n);
  if (spec.embedding) cohort.embeddings.resize(n);

  parallel_for(n, [&](std::size_t i) {
    const Trajectory& tr = trajectories[i];
    const std::string episode_id = "e" + std::to_string(i);

    // Thinning.
    auto rng = stream_rng(spec.seed, i, 1);
    std::vector<double> events;
    if (bound > 0.0) {
      std::exponential_distribution<double> gap(bound);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      std::size_t seg = 0;
      for (double t = tr.segments.front().t_start + gap(rng); t < tr.end; t += gap(rng)) {
        while (tr.segments[seg].t_end <= t) ++seg;
        const double rate = tr.segments[seg].rate * scale;
        if (unit(rng) * bound < rate) events.push_back(t);
      }
    }

    Episode ep;
    ep.episode_id = episode_id;
    ep.subject_id = "s" + std::to_string(i / static_cast<std::size_t>(spec.episodes_per_subject));
    for (const auto& seg : tr.segments) {
      Epoch e;
      e.t_start = seg.t_start;
      e.t_end = seg.t_end;
      for (const auto j : visible) e.covariates.push_back(seg.x[j]);
      ep.epochs.push_back(std::move(e));
    }
    ep = add_recurrence_features(mark_events(ep, events), events);

    // Ground truth on the same event-split partition.
    std::vector<HazardPiece> truth;
    std::size_t seg = 0;
    for (const auto& e : ep.epochs) {
      while (tr.segments[seg].t_end <= e.t_start) ++seg;
      truth.push_back({e.t_start, e.t_end, tr.segments[seg].rate * scale});
    }

    if (spec.embedding) {
      const auto& es = *spec.embedding;
      auto note_rng = stream_rng(spec.seed, i, 2);
      std::vector<double> stamps;
      if (es.note_on_change) {
        stamps.push_back(tr.segments.front().t_start + es.delay);
        for (const double c : tr.source_changes) stamps.push_back(c + es.delay);
      }
      if (es.note_rate > 0.0) {
        std::exponential_distribution<double> gap(es.note_rate);
        for (double t = tr.segments.front().t_start + gap(note_rng); t < tr.end; t += gap(note_rng)) {
          stamps.push_back(t);
        }
      }
      std::sort(stamps.begin(), stamps.end());
      stamps.erase(std::unique(stamps.begin(), stamps.end()), stamps.end());
      const auto source = static_cast<std::size_t>(
          std::find(names.begin(), names.end(), es.source_feature) - names.begin());
      std::normal_distribution<double> noise(0.0, es.noise_sd);
      EmbeddingStream stream;
      stream.episode_id = episode_id;
      std::size_t s = 0;
      for (const double t : stamps) {
        if (t >= tr.end) break;
        while (tr.segments[s].t_end <= t) ++s;
        const double latent = tr.segments[s].x[source];
        EmbeddingEntry entry;
        entry.timestamp = t;
        for (int d = 0; d < es.dim; ++d) {
          const double sign = d % 2 == 0 ? 1.0 : -1.0;
          entry.vector.push_back(es.signal * latent * sign + noise(note_rng));
        }
        stream.entries.push_back(std::move(entry));
      }
      cohort.embeddings[i] = std::move(stream);
    }

    cohort.episodes[i] = std::move(ep);
    cohort.truth[i] = std::move(truth);
    cohort.event_times[i] = std::move(events);
  });
  return cohort;
}

std::vector<MonitoringTrace> oracle_traces(const SimulatedCohort& cohort) {
  std::vector<MonitoringTrace> traces;
  traces.reserve(cohort.episodes.size());
  for (std::size_t i = 0; i < cohort.episodes.size(); ++i) {
    const auto& ep = cohort.episodes[i];
    MonitoringTrace tr;
    tr.episode_id = ep.episode_id;
    tr.monitoring_start = cohort.schema.monitoring_start;
    tr.path = cohort.truth[i];
    const double t_event = first_event_time(ep);
    if (!is_missing(t_event)) tr.first_event_time = t_event;
    tr.monitored_until = ep.epochs.back().t_end;
    traces.push_back(std::move(tr));
  }
  return traces;
}

OracleMetrics oracle_metrics(const SimulatedCohort& cohort, std::span<const TimeBin> bins) {
  const auto traces = oracle_traces(cohort);
  std::vector<ScoredEpisode> scored;
  for (const auto& tr : traces) {
    const auto s = episode_score(tr);
    scored.push_back({s.score, s.positive});
  }
  const auto curves = roc_pr_curves(scored);
  return {curves.auroc, curves.auc_pr, auct(traces, bins)};
}

double oracle_neg_log_likelihood(const SimulatedCohort& cohort,
                                 std::span<const std::size_t> episodes) {
  double total = 0.0;
  for (const auto i : episodes) {
    const auto& ep = cohort.episodes[i];
    const auto& truth = cohort.truth[i];
    for (std::size_t k = 0; k < ep.epochs.size(); ++k) {
      total += truth[k].hazard * (truth[k].t_end - truth[k].t_start);
      if (ep.epochs[k].delta == 1) total -= std::log(truth[k].hazard);
    }
  }
  return total;
}

FusedCohort fuse_cohort(const SimulatedCohort& cohort) {
  FusedCohort out;
  const std::size_t n = cohort.embeddings.empty() ? 0 : cohort.embeddings.front().width();
  std::size_t width = n;
  for (const auto& s : cohort.embeddings) width = std::max(width, s.width());
  if (width == 0) throw Error(ErrorKind::kSchemaMismatch, "cohort has no embedding notes");
  out.schema = add_embedding_block(cohort.schema, width);
  out.episodes.reserve(cohort.episodes.size());
  for (std::size_t i = 0; i < cohort.episodes.size(); ++i) {
    out.episodes.push_back(
        fuse_embeddings(widen(cohort.episodes[i], width), cohort.embeddings[i], out.schema));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Presets.

ScenarioSpec constant_scenario(double rate, int n_episodes, double follow_up, std::uint64_t seed) {
  ScenarioSpec s;
  s.true_hazard = TrueHazard::constant(rate);
  s.lambda_max = rate;
  s.covariates = {{.name = "x0", .distribution = CovariateSpec::Distribution::kUniform,
                   .change_rate = 0.1},
                  {.name = "x1", .distribution = CovariateSpec::Distribution::kNormal,
                   .change_rate = 0.05}};
  s.n_episodes = n_episodes;
  s.max_follow_up = follow_up;
  s.seed = seed;
  return s;
}

ScenarioSpec two_group_scenario(double low, double high, int n_episodes, std::uint64_t seed) {
  ScenarioSpec s;
  s.true_hazard = TrueHazard::feature_step("x0", 0.5, low, high);
  s.lambda_max = std::max(low, high);
  s.covariates = {{.name = "x0", .distribution = CovariateSpec::Distribution::kBernoulli,
                   .p = 0.5},
                  {.name = "x1", .distribution = CovariateSpec::Distribution::kUniform,
                   .change_rate = 0.1},
                  {.name = "x2", .distribution = CovariateSpec::Distribution::kUniform,
                   .change_rate = 0.1}};
  s.n_episodes = n_episodes;
  s.max_follow_up = 72.0;
  s.censor_rate = 0.01;
  s.seed = seed;
  return s;
}

ScenarioSpec note_signal_scenario(int n_episodes, std::uint64_t seed) {
  ScenarioSpec s;
  s.true_hazard = TrueHazard::feature_step("latent", 0.5, 0.01, 0.12);
  s.lambda_max = 0.12;
  s.covariates = {{.name = "latent", .distribution = CovariateSpec::Distribution::kBernoulli,
                   .p = 0.3, .change_rate = 0.03, .hidden = true},
                  {.name = "x0", .distribution = CovariateSpec::Distribution::kUniform,
                   .change_rate = 0.1},
                  {.name = "x1", .distribution = CovariateSpec::Distribution::kNormal,
                   .change_rate = 0.1}};
  EmbeddingSpec e;
  e.source_feature = "latent";
  e.dim = 2;
  e.note_rate = 0.05;
  e.delay = 1.0;
  e.signal = 1.0;
  e.noise_sd = 0.3;
  s.embedding = e;
  s.n_episodes = n_episodes;
  s.max_follow_up = 72.0;
  s.censor_rate = 0.01;
  s.seed = seed;
  return s;
}

}  // namespace hazardforge
