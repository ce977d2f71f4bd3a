#pragma once

#include <optional>
#include <vector>

#include "lockin/config.hpp"
#include "lockin/record.hpp"
#include "lockin/series.hpp"

namespace lockin {

/// Every per-checkpoint metric of one run as a series. A checkpoint that
/// lacks the inputs for a metric contributes no point to that series.
struct RunSeries {
  std::string run_id;
  std::size_t n_checkpoints = 0;
  MetricSeries re;
  MetricSeries pii;
  MetricSeries cosine;
  MetricSeries capability;  // masking rule applied
  MetricSeries sa;
  MetricSeries turnover;  // relative to the previous checkpoint with features
  MetricSeries routing_entropy;
  MetricSeries routing_mi;
  MetricSeries apr;      // median finite per-stance minimum
  MetricSeries inertia;  // censored checkpoints carry the lower bound, marked invalid
  MetricSeries disclaimer;
};

struct ExtractOptions {
  std::string capability_metric = "arc_accuracy";
  double mask_below = 0.01;
  bool normalize_pii = true;
  /// Used when a record carries a hidden state but no precomputed cosine.
  std::optional<std::vector<double>> persona_direction;
};

ExtractOptions extract_options(const AnalysisConfig& cfg);

/// `run` must hold one run_id with strictly increasing steps.
RunSeries extract_series(const std::vector<CheckpointRecord>& run, const ExtractOptions& opts = {});

}  // namespace lockin
