#pragma once

// Run-level report assembly shared by the CLI subcommands.

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lockin/changepoint.hpp"
#include "lockin/config.hpp"
#include "lockin/extract.hpp"
#include "lockin/governance.hpp"
#include "lockin/predictions.hpp"
#include "lockin/record.hpp"

namespace lockin {

inline constexpr const char* kReportSchema = "lockin-report/1";

/// One row of the cross-run summary table. Correlations are absent when
/// fewer than three paired points exist or ranks are constant.
struct SummaryRow {
  std::string model;
  std::size_t n_checkpoints = 0;  // records in the log, masked ones included
  std::optional<double> mean_capability_pct;
  std::optional<double> delta_capability_pp;
  std::optional<double> rho_capability_cosine;
  std::optional<double> rho_capability_re;
};

/// Delta runs from the first to the last checkpoint where capability and
/// every present behavioural series (cosine, RE) are all valid.
SummaryRow summary_row(const RunSeries& s, const std::string& model, const Config& cfg);

nlohmann::json series_summaries(const RunSeries& s);
nlohmann::json correlation_table(const RunSeries& s, const Config& cfg);

/// Changepoint reports for every behavioural series long enough to analyse.
std::vector<ChangepointReport> detect_changepoints(const RunSeries& s, const Config& cfg);
nlohmann::json changepoint_to_json(const ChangepointReport& r);

P2Options p2_options(const AnalysisConfig& cfg);

/// All five verdicts. P3 takes its onset from P2; P4 needs a post-processing
/// log (the last record of the matching run is the post snapshot).
std::vector<PredictionVerdict> evaluate_predictions(const std::vector<CheckpointRecord>& run, const RunSeries& s,
                                                    const Config& cfg, const ExtractOptions& opts,
                                                    const std::vector<CheckpointRecord>* post_process = nullptr);

ExtractOptions run_extract_options(const Config& cfg, const std::string& run_id,
                                   const std::map<std::string, RunManifestEntry>& manifest);

struct RunReport {
  std::string run_id;
  SummaryRow row;
  nlohmann::json json;
};

RunReport build_run_report(const std::vector<CheckpointRecord>& run, const Config& cfg,
                           const std::map<std::string, RunManifestEntry>& manifest = {});

/// Full report document for several runs with the effective config embedded.
/// Rebuilds the plotted series (persona cosine, RE, capability) of every run
/// in a compute report. Throws InputError when `report` is not one.
std::vector<std::pair<std::string, RunSeries>> plot_series_from_report(const nlohmann::json& report);

nlohmann::json compute_report(const std::vector<RunReport>& runs, const Config& cfg);

std::string summary_csv(const std::vector<SummaryRow>& rows);

/// Two-space indented JSON with a trailing newline.
std::string format_json(const nlohmann::json& j);

}  // namespace lockin
