// Command-line front end. Exit codes: 0 success, 1 unexpected failure,
// 2 input or usage error, 3 no usable data, 4 strict-mode insufficiency.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lockin/changepoint.hpp"
#include "lockin/config.hpp"
#include "lockin/errors.hpp"
#include "lockin/extract.hpp"
#include "lockin/governance.hpp"
#include "lockin/plot.hpp"
#include "lockin/predictions.hpp"
#include "lockin/record.hpp"
#include "lockin/report.hpp"
#include "lockin/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lockin;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitInput = 2;
constexpr int kExitNoData = 3;
constexpr int kExitStrict = 4;

constexpr const char* kConfigEnv = "LOCKIN_CONFIG";

class NoData : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

fs::path with_extension(const fs::path& p, const std::string& ext) {
  fs::path out = p;
  out.replace_extension(ext);
  return out;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(path + ": " + e.what());
  }
}

/// Options shared by the analysis subcommands.
struct Common {
  std::string input;
  std::string config_path;
  std::string manifest_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> n_perm;
  std::optional<double> mask_below;
  std::optional<std::string> capability_metric;

  void attach(CLI::App* cmd) {
    cmd->add_option("-i,--input", input, "Checkpoint log (.jsonl)")->required();
    cmd->add_option("-c,--config", config_path, std::string("JSON config (default: $") + kConfigEnv + ")");
    cmd->add_option("-m,--manifest", manifest_path, "Run manifest JSON");
    cmd->add_option("--seed", seed, "Seed for permutation tests");
    cmd->add_option("--n-perm", n_perm, "Permutations per test");
    cmd->add_option("--mask-below", mask_below, "Capability values below this are masked");
    cmd->add_option("--capability-metric", capability_metric, "Capability score key");
  }

  /// Flags override the config file, which overrides built-in defaults.
  Config config() const {
    Config cfg;
    std::string path = config_path;
    if (path.empty()) {
      if (const char* env = std::getenv(kConfigEnv)) path = env;
    }
    if (!path.empty()) cfg = load_config_file(path, cfg);
    if (seed) cfg.analysis.seed = *seed;
    if (n_perm) cfg.analysis.n_perm = *n_perm;
    if (mask_below) cfg.analysis.mask_below = *mask_below;
    if (capability_metric) cfg.analysis.capability_metric = *capability_metric;
    validate_config(cfg);
    return cfg;
  }

  std::map<std::string, RunManifestEntry> manifest() const {
    if (manifest_path.empty()) return {};
    return parse_manifest_file(manifest_path);
  }

  std::vector<std::vector<CheckpointRecord>> runs() const {
    const auto records = parse_run_file(input);
    if (records.empty()) throw NoData("no records in " + input);
    return split_runs(records);
  }
};

json document(const char* kind, const Config& cfg) {
  return {{"schema", kReportSchema}, {"kind", kind}, {"config", config_to_json(cfg)}};
}

int cmd_validate(const std::string& input) {
  std::ifstream in(input);
  if (!in) throw InputError("cannot open " + input);
  const ValidationReport report = validate_stream(in);
  for (const auto& p : report.problems) std::cerr << p << '\n';
  if (!report.problems.empty()) {
    std::cerr << report.problems.size() << " problem(s); " << report.records << " valid record(s)\n";
    return kExitInput;
  }
  if (report.records == 0) {
    std::cerr << "no records in " << input << '\n';
    return kExitNoData;
  }
  std::cout << "ok: " << report.records << " record(s)\n";
  return kExitOk;
}

int cmd_compute(const Common& c, const std::string& output, std::string csv) {
  const Config cfg = c.config();
  const auto manifest = c.manifest();
  std::vector<RunReport> reports;
  std::vector<SummaryRow> rows;
  for (const auto& run : c.runs()) {
    reports.push_back(build_run_report(run, cfg, manifest));
    rows.push_back(reports.back().row);
  }
  json doc = compute_report(reports, cfg);
  doc["kind"] = "compute";
  if (csv.empty()) csv = with_extension(output, ".csv").string();
  write_atomic(output, format_json(doc));
  write_atomic(csv, summary_csv(rows));
  std::cout << "wrote " << output << " and " << csv << '\n';
  return kExitOk;
}

int cmd_detect(const Common& c, const std::string& output, std::optional<double> delta,
               std::optional<double> penalty, std::optional<int> min_seg_len) {
  Config cfg = c.config();
  if (delta) cfg.thresholds.p2_delta = *delta;
  if (penalty) cfg.analysis.pelt_penalty = *penalty;
  if (min_seg_len) cfg.analysis.min_seg_len = *min_seg_len;
  validate_config(cfg);
  const auto manifest = c.manifest();
  json doc = document("detect", cfg);
  doc["runs"] = json::array();
  for (const auto& run : c.runs()) {
    const RunSeries s = extract_series(run, run_extract_options(cfg, run.front().run_id, manifest));
    json cps = json::array();
    for (const auto& r : detect_changepoints(s, cfg)) cps.push_back(changepoint_to_json(r));
    json skipped = json::array();
    for (const MetricSeries* m : {&s.re, &s.cosine, &s.pii, &s.capability}) {
      const auto n = m->valid_count();
      if (n > 0 && n < kMinSegmentedPoints) skipped.push_back({{"series", m->metric_name}, {"valid_points", n}});
    }
    doc["runs"].push_back({{"run_id", s.run_id}, {"changepoints", cps}, {"insufficient", skipped}});
  }
  write_atomic(output, format_json(doc));
  std::cout << "wrote " << output << '\n';
  return kExitOk;
}

int cmd_predict(const Common& c, const std::string& output, const std::string& post_path, bool strict) {
  const Config cfg = c.config();
  const auto manifest = c.manifest();
  std::optional<std::vector<CheckpointRecord>> post;
  if (!post_path.empty()) post = parse_run_file(post_path);
  json doc = document("predict", cfg);
  doc["runs"] = json::array();
  bool any_insufficient = false;
  for (const auto& run : c.runs()) {
    const ExtractOptions opts = run_extract_options(cfg, run.front().run_id, manifest);
    const RunSeries s = extract_series(run, opts);
    json verdicts = json::array();
    for (const auto& v : evaluate_predictions(run, s, cfg, opts, post ? &*post : nullptr)) {
      any_insufficient |= v.outcome == Outcome::insufficient_data;
      verdicts.push_back(verdict_to_json(v));
      std::cout << s.run_id << ' ' << to_string(v.id) << ' ' << to_string(v.outcome) << '\n';
    }
    doc["runs"].push_back({{"run_id", s.run_id}, {"predictions", verdicts}});
  }
  write_atomic(output, format_json(doc));
  if (strict && any_insufficient) {
    std::cerr << "strict: at least one prediction has insufficient data\n";
    return kExitStrict;
  }
  return kExitOk;
}

int cmd_govern(const Common& c, const std::string& output, std::optional<double> tau) {
  Config cfg = c.config();
  if (tau) cfg.thresholds.tau_instability = *tau;
  validate_config(cfg);
  const auto manifest = c.manifest();
  json doc = document("govern", cfg);
  doc["runs"] = json::array();
  for (const auto& run : c.runs()) {
    const RunSeries s = extract_series(run, run_extract_options(cfg, run.front().run_id, manifest));
    const auto alerts = evaluate_triggers(s, cfg);
    const auto instabilities = instability_detector(s.capability, cfg.thresholds.tau_instability);
    json g = governance_report(s.run_id, alerts, instabilities);
    std::cout << s.run_id << ": " << g["summary"]["flagged_checkpoints"].get<int>() << " flagged checkpoint(s), "
              << instabilities.size() << " instability event(s)\n";
    doc["runs"].push_back(std::move(g));
  }
  write_atomic(output, format_json(doc));
  return kExitOk;
}

struct SimulateArgs {
  std::string scenario;
  std::uint64_t seed = 0;
  std::optional<double> noise_sd, re_baseline, re_peak;
  std::optional<int> n_checkpoints;
  std::optional<std::int64_t> onset_step, relax_step, step_interval;
  bool moe = false;
  std::string run_id;
  std::string output;
  std::string truth;
};

int cmd_simulate(const SimulateArgs& a) {
  SynthConfig cfg = default_config(scenario_from_string(a.scenario));
  cfg.seed = a.seed;
  if (a.noise_sd) cfg.noise_sd = *a.noise_sd;
  if (a.re_baseline) cfg.re_baseline = *a.re_baseline;
  if (a.re_peak) cfg.re_peak = *a.re_peak;
  if (a.n_checkpoints) cfg.n_checkpoints = *a.n_checkpoints;
  if (a.onset_step) cfg.onset_step = *a.onset_step;
  if (a.relax_step) cfg.relax_step = *a.relax_step;
  if (a.step_interval) cfg.step_interval = *a.step_interval;
  cfg.moe = a.moe;
  cfg.run_id = a.run_id.empty() ? a.scenario + "-seed" + std::to_string(a.seed) : a.run_id;

  const SynthRun run = generate_run(cfg);
  std::ostringstream records;
  serialize_run(records, run.records);
  const std::string truth = a.truth.empty() ? with_extension(a.output, ".truth.json").string() : a.truth;
  write_atomic(a.output, records.str());
  write_atomic(truth, format_json(ground_truth_to_json(run.truth, cfg)));
  std::cout << "wrote " << run.records.size() << " records to " << a.output << " and ground truth to " << truth
            << '\n';
  return kExitOk;
}

int cmd_plot(const Common& c, const std::string& out_dir, bool grid) {
  const Config cfg = c.config();
  const auto manifest = c.manifest();
  std::vector<std::pair<std::string, RunSeries>> figures;
  if (fs::path(c.input).extension() == ".json") {
    figures = plot_series_from_report(read_json_file(c.input));
    if (figures.empty()) throw NoData("no runs in " + c.input);
  }
  for (const auto& run : figures.empty() ? c.runs() : std::vector<std::vector<CheckpointRecord>>{}) {
    const std::string& id = run.front().run_id;
    auto it = manifest.find(id);
    figures.emplace_back(it == manifest.end() ? id : it->second.model_name,
                         extract_series(run, run_extract_options(cfg, id, manifest)));
  }
  if (grid) {
    const fs::path path = fs::path(out_dir) / "grid.svg";
    write_atomic(path, render_grid_svg(figures));
    std::cout << "wrote " << path.string() << '\n';
    return kExitOk;
  }
  for (const auto& [title, s] : figures) {
    const fs::path path = fs::path(out_dir) / (s.run_id + ".svg");
    write_atomic(path, render_run_svg(s, title));
    std::cout << "wrote " << path.string() << '\n';
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lock-in phase analysis for fine-tuning checkpoint logs"};
  app.require_subcommand(1);

  std::string validate_input;
  auto* validate = app.add_subcommand("validate", "Check a checkpoint log against the record schema");
  validate->add_option("input", validate_input, "Checkpoint log (.jsonl)")->required();

  Common compute_c, detect_c, predict_c, govern_c, plot_c;
  std::string compute_out, compute_csv;
  auto* compute = app.add_subcommand("compute", "Metric summaries, correlations and a summary table");
  compute_c.attach(compute);
  compute->add_option("-o,--output", compute_out, "JSON report path")->required();
  compute->add_option("--csv", compute_csv, "CSV summary path (default: report path with .csv)");

  std::string detect_out;
  std::optional<double> detect_delta, detect_penalty;
  std::optional<int> detect_min_seg;
  auto* detect = app.add_subcommand("detect", "Changepoint analysis of the behavioural series");
  detect_c.attach(detect);
  detect->add_option("-o,--output", detect_out, "JSON output path")->required();
  detect->add_option("--delta", detect_delta, "Minimum level shift and segment-mean change for a supported break");
  detect->add_option("--penalty", detect_penalty, "PELT penalty (default: data-driven)");
  detect->add_option("--min-seg-len", detect_min_seg, "Minimum PELT segment length");

  std::string predict_out, predict_post;
  bool predict_strict = false;
  auto* predict = app.add_subcommand("predict", "Evaluate the five lock-in predictions");
  predict_c.attach(predict);
  predict->add_option("-o,--output", predict_out, "JSON output path")->required();
  predict->add_option("--post-process", predict_post, "Log of checkpoints after post-processing (for P4)");
  predict->add_flag("--strict", predict_strict, "Exit 4 when any verdict is insufficient_data");

  std::string govern_out;
  std::optional<double> govern_tau;
  auto* govern = app.add_subcommand("govern", "Early-warning triggers and recommended actions");
  govern_c.attach(govern);
  govern->add_option("-o,--output", govern_out, "JSON alerts path")->required();
  govern->add_option("--tau-instability", govern_tau, "Capability jump threshold (percentage points)");

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic run with ground truth");
  simulate->add_option("--scenario", sim.scenario, "Scenario name")
      ->required()
      ->check(CLI::IsMember({"cost_free", "volatile_synergy", "uplift", "quantization_stress", "null_drift"}));
  simulate->add_option("--seed", sim.seed, "Noise seed");
  simulate->add_option("--noise-sd", sim.noise_sd, "Gaussian noise SD");
  simulate->add_option("--n-checkpoints", sim.n_checkpoints, "Number of checkpoints");
  simulate->add_option("--step-interval", sim.step_interval, "Steps between checkpoints");
  simulate->add_option("--onset-step", sim.onset_step, "Injected onset step");
  simulate->add_option("--relax-step", sim.relax_step, "Relaxation step");
  simulate->add_option("--re-baseline", sim.re_baseline, "RE before onset");
  simulate->add_option("--re-peak", sim.re_peak, "RE after onset");
  simulate->add_flag("--moe", sim.moe, "Emit routing traces");
  simulate->add_option("--run-id", sim.run_id, "Run identifier");
  simulate->add_option("-o,--output", sim.output, "Records path (.jsonl)")->required();
  simulate->add_option("--truth", sim.truth, "Ground-truth path (default: output with .truth.json)");

  std::string plot_dir;
  bool plot_grid = false;
  auto* plot = app.add_subcommand("plot", "SVG figures of persona similarity, RE and capability");
  plot_c.attach(plot);
  plot->get_option("--input")->description("Checkpoint log (.jsonl) or compute report (.json)");
  plot->add_option("-o,--output-dir", plot_dir, "Directory for SVG files")->required();
  plot->add_flag("--grid", plot_grid, "One composite figure, two runs per row");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return kExitInput;
  }

  try {
    if (*validate) return cmd_validate(validate_input);
    if (*compute) return cmd_compute(compute_c, compute_out, compute_csv);
    if (*detect) return cmd_detect(detect_c, detect_out, detect_delta, detect_penalty, detect_min_seg);
    if (*predict) return cmd_predict(predict_c, predict_out, predict_post, predict_strict);
    if (*govern) return cmd_govern(govern_c, govern_out, govern_tau);
    if (*simulate) return cmd_simulate(sim);
    if (*plot) return cmd_plot(plot_c, plot_dir, plot_grid);
  } catch (const NoData& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNoData;
  } catch (const InsufficientData& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNoData;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}
