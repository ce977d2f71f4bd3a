#include "lockin/report.hpp"

#include <cstdio>
#include <set>
#include <sstream>

#include "lockin/errors.hpp"

namespace lockin {

using nlohmann::json;

namespace {

// Permutation streams for report correlations; P1 uses stream 1.
constexpr std::uint64_t kStreamCapCos = 10;
constexpr std::uint64_t kStreamCapRe = 11;

std::set<std::int64_t> valid_steps(const MetricSeries& s) {
  std::set<std::int64_t> out;
  for (const auto& p : s.points) {
    if (p.valid) out.insert(p.step);
  }
  return out;
}

std::optional<SpearmanResult> try_spearman(const MetricSeries& x, const MetricSeries& y, const Config& cfg,
                                           std::uint64_t stream) {
  try {
    return spearman(x, y, cfg.analysis.n_perm, cfg.analysis.seed, stream);
  } catch (const InsufficientData&) {
    return std::nullopt;
  }
}

const MetricSeries* named_series(const RunSeries& s, std::size_t i, const char** name) {
  const MetricSeries* all[] = {&s.re,       &s.pii,      &s.cosine,          &s.capability,
                               &s.sa,       &s.turnover, &s.routing_entropy, &s.routing_mi,
                               &s.apr,      &s.inertia,  &s.disclaimer};
  static const char* names[] = {"refusal_elasticity", "pii",        "persona_cosine", "capability",
                                "sa_score",           "turnover",   "routing_entropy", "routing_mi",
                                "apr",                "inertia",    "disclaimer_rate"};
  if (i >= std::size(all)) return nullptr;
  *name = names[i];
  return all[i];
}

std::string fmt(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  std::string s = buf;
  if (s[0] == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);  // no "-0.00"
  return s;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

SummaryRow summary_row(const RunSeries& s, const std::string& model, const Config& cfg) {
  SummaryRow row;
  row.model = model;
  row.n_checkpoints = s.n_checkpoints;
  if (s.capability.valid_count() > 0) {
    row.mean_capability_pct = summarize(s.capability, 100.0).mean;

    std::set<std::int64_t> overlap = valid_steps(s.capability);
    for (const MetricSeries* other : {&s.cosine, &s.re}) {
      if (other->valid_count() == 0) continue;
      const auto steps = valid_steps(*other);
      std::set<std::int64_t> kept;
      for (auto st : overlap) {
        if (steps.count(st)) kept.insert(st);
      }
      overlap = std::move(kept);
    }
    if (!overlap.empty()) {
      row.delta_capability_pp =
          100.0 * (*s.capability.value_at(*overlap.rbegin()) - *s.capability.value_at(*overlap.begin()));
    }
  }
  if (auto r = try_spearman(s.capability, s.cosine, cfg, kStreamCapCos)) row.rho_capability_cosine = r->rho;
  if (auto r = try_spearman(s.capability, s.re, cfg, kStreamCapRe)) row.rho_capability_re = r->rho;
  return row;
}

json series_summaries(const RunSeries& s) {
  json out = json::object();
  const char* name = nullptr;
  for (std::size_t i = 0; const MetricSeries* m = named_series(s, i, &name); ++i) {
    if (m->valid_count() == 0) continue;
    const double scale = m == &s.capability ? 100.0 : 1.0;
    const SeriesSummary sum = summarize(*m, scale);
    json masked = json::array();
    json points = json::array();
    for (const auto& p : m->points) {
      if (!p.valid) masked.push_back({{"step", p.step}, {"value", p.value}});
      points.push_back({p.step, p.value, p.valid});
    }
    // Points are unscaled [step, value, valid] triples so figures can be
    // redrawn from the report alone.
    out[name] = {{"n_valid", sum.n_valid}, {"mean", sum.mean}, {"sd", sum.sd},
                 {"delta_first_last", sum.delta_first_last}, {"min", sum.min}, {"max", sum.max},
                 {"scale", scale}, {"masked", masked}, {"points", points}};
  }
  return out;
}

json correlation_table(const RunSeries& s, const Config& cfg) {
  struct Pair {
    const char* x;
    const char* y;
    const MetricSeries* a;
    const MetricSeries* b;
    std::uint64_t stream;
  };
  const Pair pairs[] = {{"capability", "persona_cosine", &s.capability, &s.cosine, kStreamCapCos},
                        {"capability", "refusal_elasticity", &s.capability, &s.re, kStreamCapRe},
                        {"sa_score", "refusal_elasticity", &s.sa, &s.re, 12},
                        {"persona_cosine", "refusal_elasticity", &s.cosine, &s.re, 13}};
  json out = json::array();
  for (const auto& p : pairs) {
    if (p.a->valid_count() == 0 || p.b->valid_count() == 0) continue;
    json row = {{"x", p.x}, {"y", p.y}};
    try {
      const auto r = spearman(*p.a, *p.b, cfg.analysis.n_perm, cfg.analysis.seed, p.stream);
      row["rho"] = r.rho;
      row["p_value"] = r.p_value;
      row["n"] = r.n;
      row["n_perm"] = r.n_perm;
    } catch (const InsufficientData& e) {
      row["rho"] = nullptr;
      row["status"] = e.what();
    }
    out.push_back(row);
  }
  return out;
}

P2Options p2_options(const AnalysisConfig& cfg) {
  P2Options o;
  if (cfg.pelt_penalty >= 0.0) o.pelt_penalty = cfg.pelt_penalty;
  o.min_seg_len = static_cast<std::size_t>(cfg.min_seg_len);
  return o;
}

std::vector<ChangepointReport> detect_changepoints(const RunSeries& s, const Config& cfg) {
  ChangepointOptions opts;
  opts.delta = cfg.thresholds.p2_delta;
  if (cfg.analysis.pelt_penalty >= 0.0) opts.penalty = cfg.analysis.pelt_penalty;
  opts.min_seg_len = static_cast<std::size_t>(cfg.analysis.min_seg_len);
  std::vector<ChangepointReport> out;
  for (const MetricSeries* m : {&s.re, &s.cosine, &s.pii, &s.capability}) {
    if (m->valid_count() < kMinSegmentedPoints) continue;
    out.push_back(analyze_series(*m, opts));
  }
  return out;
}

json changepoint_to_json(const ChangepointReport& r) {
  return {{"series", r.series_name},
          {"n", r.n},
          {"breakpoints", r.breakpoints},
          {"effect_sizes", r.effect_sizes},
          {"level_shift", r.level_shift},
          {"pre_line", {{"slope", r.pre_line.slope}, {"intercept", r.pre_line.intercept}}},
          {"post_line", {{"slope", r.post_line.slope}, {"intercept", r.post_line.intercept}}},
          {"aic_smooth", r.aic_smooth},
          {"bic_smooth", r.bic_smooth},
          {"aic_segmented", r.aic_segmented},
          {"bic_segmented", r.bic_segmented},
          {"degenerate", r.degenerate},
          {"supported", r.supported},
          {"pelt_breakpoints", r.pelt_breakpoints},
          {"pelt_effect_sizes", r.pelt_effect_sizes},
          {"pelt_penalty", optional_json(r.pelt_penalty)},
          {"methods_agree", r.methods_agree}};
}

namespace {

ConsolidationSnapshot snapshot_at(const RunSeries& s, std::int64_t step) {
  return {s.re.value_at(step), s.pii.value_at(step), s.cosine.value_at(step)};
}

}  // namespace

std::vector<PredictionVerdict> evaluate_predictions(const std::vector<CheckpointRecord>& run, const RunSeries& s,
                                                    const Config& cfg, const ExtractOptions& opts,
                                                    const std::vector<CheckpointRecord>* post_process) {
  const auto& th = cfg.thresholds;
  const PermutationOptions perm{cfg.analysis.n_perm, cfg.analysis.seed};
  std::vector<PredictionVerdict> out;
  out.push_back(eval_p1(s.sa, s.re, s.pii, th, perm));
  out.push_back(eval_p2(s.cosine, s.re, th, p2_options(cfg.analysis)));

  const auto& p2 = out.back();
  if (p2.evidence.contains("onset_step")) {
    out.push_back(eval_p3(reversal_checkpoints(run, p2.evidence["onset_step"].get<std::int64_t>()), th, perm));
  } else {
    PredictionVerdict v;
    v.id = PredictionId::P3;
    v.thresholds_used = {{"p3_alpha", th.p3_alpha}};
    v.flags.push_back("no supported onset from P2");
    out.push_back(v);
  }

  std::optional<CheckpointRecord> post_record;
  if (post_process != nullptr) {
    for (const auto& r : *post_process) {
      if (r.run_id == s.run_id) post_record = r;  // sorted by step, so the last match wins
    }
  }
  if (post_record && !run.empty()) {
    const RunSeries post = extract_series({*post_record}, opts);
    out.push_back(eval_p4(snapshot_at(s, run.front().step), snapshot_at(s, run.back().step),
                          snapshot_at(post, post_record->step), th));
  } else {
    PredictionVerdict v;
    v.id = PredictionId::P4;
    v.thresholds_used = {{"p4_retention", th.p4_retention}};
    v.flags.push_back("no post-processing log for this run");
    out.push_back(v);
  }

  out.push_back(eval_p5(s.turnover, s.routing_entropy, s.routing_mi, s.sa, s.re, th, cfg.analysis.trend_window));
  return out;
}

ExtractOptions run_extract_options(const Config& cfg, const std::string& run_id,
                                   const std::map<std::string, RunManifestEntry>& manifest) {
  ExtractOptions opts = extract_options(cfg.analysis);
  if (auto it = manifest.find(run_id); it != manifest.end() && it->second.persona_direction) {
    opts.persona_direction = it->second.persona_direction;
  }
  return opts;
}

RunReport build_run_report(const std::vector<CheckpointRecord>& run, const Config& cfg,
                           const std::map<std::string, RunManifestEntry>& manifest) {
  if (run.empty()) throw InsufficientData("empty run");
  RunReport out;
  out.run_id = run.front().run_id;
  const ExtractOptions opts = run_extract_options(cfg, out.run_id, manifest);
  const RunSeries s = extract_series(run, opts);

  std::string model = out.run_id;
  json meta = {{"run_id", out.run_id}, {"n_checkpoints", s.n_checkpoints}};
  if (auto it = manifest.find(out.run_id); it != manifest.end()) {
    model = it->second.model_name;
    meta["model_name"] = it->second.model_name;
    meta["precision"] = it->second.precision;
    if (it->second.checkpoint_count != static_cast<std::int64_t>(s.n_checkpoints)) {
      meta["manifest_checkpoint_count"] = it->second.checkpoint_count;
    }
  }
  out.row = summary_row(s, model, cfg);

  json changepoints = json::array();
  for (const auto& r : detect_changepoints(s, cfg)) changepoints.push_back(changepoint_to_json(r));

  json verdicts = json::array();
  for (const auto& v : evaluate_predictions(run, s, cfg, opts)) verdicts.push_back(verdict_to_json(v));

  const auto alerts = evaluate_triggers(s, cfg);
  const auto instabilities = instability_detector(s.capability, cfg.thresholds.tau_instability);

  out.json = meta;
  out.json["summary_row"] = {{"model", out.row.model},
                             {"n_checkpoints", out.row.n_checkpoints},
                             {"mean_capability_pct", optional_json(out.row.mean_capability_pct)},
                             {"delta_capability_pp", optional_json(out.row.delta_capability_pp)},
                             {"rho_capability_cosine", optional_json(out.row.rho_capability_cosine)},
                             {"rho_capability_re", optional_json(out.row.rho_capability_re)}};
  out.json["series"] = series_summaries(s);
  out.json["correlations"] = correlation_table(s, cfg);
  out.json["changepoints"] = changepoints;
  out.json["predictions"] = verdicts;
  out.json["governance"] = governance_report(out.run_id, alerts, instabilities);
  return out;
}

std::vector<std::pair<std::string, RunSeries>> plot_series_from_report(const json& report) {
  if (!report.is_object() || report.value("schema", "") != kReportSchema || !report.contains("runs")) {
    throw InputError(std::string("not a ") + kReportSchema + " document");
  }
  std::vector<std::pair<std::string, RunSeries>> out;
  for (const auto& run : report["runs"]) {
    RunSeries s;
    s.run_id = run.at("run_id").get<std::string>();
    s.n_checkpoints = run.value("n_checkpoints", std::size_t{0});
    const json& series = run.value("series", json::object());
    const auto load = [&](const char* name, MetricSeries& m) {
      m.run_id = s.run_id;
      m.metric_name = name;
      if (!series.contains(name)) return;
      for (const auto& p : series[name].value("points", json::array())) {
        m.points.push_back({p.at(0).get<std::int64_t>(), p.at(1).get<double>(), p.at(2).get<bool>()});
      }
    };
    load("persona_cosine", s.cosine);
    load("refusal_elasticity", s.re);
    load("capability", s.capability);
    const std::string title = run.value("model_name", json(nullptr)).is_string()
                                  ? run["model_name"].get<std::string>()
                                  : s.run_id;
    out.emplace_back(title, std::move(s));
  }
  return out;
}

json compute_report(const std::vector<RunReport>& runs, const Config& cfg) {
  json j;
  j["schema"] = kReportSchema;
  j["config"] = config_to_json(cfg);
  j["runs"] = json::array();
  for (const auto& r : runs) j["runs"].push_back(r.json);
  return j;
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::ostringstream out;
  out << "Model,# Ckpts,Mean ARC (%),Δ ARC (pp),ρ(ARC, cos),ρ(ARC, RE)\n";
  auto opt = [](const std::optional<double>& v, int digits) { return v ? fmt(*v, digits) : std::string(); };
  for (const auto& r : rows) {
    out << csv_field(r.model) << ',' << r.n_checkpoints << ',' << opt(r.mean_capability_pct, 2) << ','
        << opt(r.delta_capability_pp, 2) << ',' << opt(r.rho_capability_cosine, 3) << ','
        << opt(r.rho_capability_re, 3) << '\n';
  }
  return out.str();
}

std::string format_json(const json& j) { return j.dump(2) + "\n"; }

}  // namespace lockin
