#pragma once

// Synthetic consolidation runs with known ground truth. Target metric
// curves are turned back into raw probe data (steer probabilities, output
// distributions, hidden states, feature sets, routing counts), so tests
// exercise ingestion and metric computation end to end.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lockin/record.hpp"

namespace lockin {

enum class Scenario { cost_free, volatile_synergy, uplift, quantization_stress, null_drift };

std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& name);  // throws std::invalid_argument

struct SynthConfig {
  int n_checkpoints = 19;
  Scenario scenario = Scenario::cost_free;
  double re_baseline = 0.47;
  double re_peak = 0.64;
  std::int64_t onset_step = 20;
  std::int64_t relax_step = 75;
  double noise_sd = 0.0;
  std::uint64_t seed = 0;
  std::int64_t step_interval = 5;
  bool moe = false;  // emit routing traces
  std::string run_id = "synthetic";

  std::int64_t last_step() const { return step_interval * (n_checkpoints - 1); }
};

/// Scenario-shaped defaults for the RE levels, onset and relaxation steps.
SynthConfig default_config(Scenario s);

struct GroundTruth {
  Scenario scenario = Scenario::cost_free;
  std::optional<std::int64_t> onset_step;  // nullopt for null_drift
  std::optional<std::size_t> onset_index;
  double effect = 0.0;
  std::optional<std::int64_t> spike_step;  // quantization_stress capability spike
  std::vector<double> persona_direction;
  std::vector<std::int64_t> steps;
  // Noiseless targets, one entry per checkpoint.
  std::vector<double> re, cosine, capability, sa, pii, turnover, routing_mi;
  // Values realized in the records (after noise and truncation).
  std::vector<double> re_realized, cosine_realized, capability_realized, sa_realized;
};

nlohmann::json ground_truth_to_json(const GroundTruth& g, const SynthConfig& cfg);

struct SynthRun {
  std::vector<CheckpointRecord> records;
  GroundTruth truth;
};

/// Deterministic in `cfg`. Throws std::invalid_argument on an inconsistent config.
SynthRun generate_run(const SynthConfig& cfg);

/// Eight steer probabilities with mean 0.5 whose refusal elasticity is `re`.
std::vector<SteerProbe> probes_for_elasticity(double re);

/// Two-paraphrase, two-outcome distributions whose normalized JSD is `pii`.
ClusterDistribution cluster_for_divergence(const std::string& id, double pii);

}  // namespace lockin
