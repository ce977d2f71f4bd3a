#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

namespace lockin {

/// Decision thresholds for the prediction evaluators and trigger engine.
struct ThresholdConfig {
  double tau_re = 0.7;
  double tau_pii = 0.05;
  double p1_alpha = 0.01;
  double p2_delta = 0.05;
  double p3_alpha = 0.05;
  double p4_retention = 0.8;
  double p5_tau_turnover = 0.1;
  double p5_tau_mi = 0.5;  // bits
  int p5_k_consecutive = 3;
  double tau_instability = 10.0;  // percentage points

  bool operator==(const ThresholdConfig&) const = default;
};

/// Knobs that are not decision thresholds.
struct AnalysisConfig {
  std::string capability_metric = "arc_accuracy";
  double mask_below = 0.01;
  int n_perm = 10000;
  std::uint64_t seed = 0;
  int trend_window = 3;             // moving-average window for "rising"/"falling"
  int cosine_variance_window = 5;   // rolling window for persona-cosine variance
  double cosine_collapse_fraction = 0.25;
  int min_seg_len = 2;
  double pelt_penalty = -1.0;  // < 0 selects the data-driven default
  bool normalize_pii = true;

  bool operator==(const AnalysisConfig&) const = default;
};

struct Config {
  ThresholdConfig thresholds;
  AnalysisConfig analysis;

  bool operator==(const Config&) const = default;
};

/// Throws std::invalid_argument naming the first out-of-range field.
void validate_config(const Config& cfg);

/// Fields absent from `j` keep the values already in `base`. Threshold
/// fields may sit at the top level or under "thresholds"; analysis fields
/// under "analysis" or at the top level. Unknown keys are rejected.
Config merge_config(Config base, const nlohmann::json& j);
Config load_config_file(const std::string& path, Config base = {});

nlohmann::json config_to_json(const Config& cfg);

}  // namespace lockin
