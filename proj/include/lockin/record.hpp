#pragma once

// Checkpoint record schema, validation, and line-delimited JSON ingestion.

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

namespace lockin {

struct SteerProbe {
  std::string steer_id;
  double refusal_prob = 0.0;

  bool operator==(const SteerProbe&) const = default;
};

/// Output distributions of one paraphrase-equivalent prompt cluster, one
/// probability vector per paraphrase over a shared label vocabulary.
struct ClusterDistribution {
  std::string cluster_id;
  std::vector<std::string> outcome_labels;
  std::vector<std::vector<double>> distributions;

  bool operator==(const ClusterDistribution&) const = default;
};

struct PersonaObservation {
  std::vector<double> mean_hidden_state;
  std::optional<double> persona_cosine;

  bool operator==(const PersonaObservation&) const = default;
};

/// Input-class by expert routing counts.
struct RoutingTrace {
  std::vector<std::string> input_classes;
  std::vector<std::string> experts;
  std::vector<std::vector<std::int64_t>> counts;

  bool operator==(const RoutingTrace&) const = default;
};

struct EditTrial {
  std::string stance_id;
  double edit_norm = 0.0;
  bool flipped = false;

  bool operator==(const EditTrial&) const = default;
};

struct ReversalTrial {
  double kl_cost = 0.0;
  bool reversed = false;
  double delta_capability = 0.0;  // percentage points

  bool operator==(const ReversalTrial&) const = default;
};

struct CheckpointRecord {
  std::string run_id;
  std::int64_t step = 0;
  std::vector<SteerProbe> steer_probes;
  std::vector<ClusterDistribution> paraphrase_clusters;
  std::optional<PersonaObservation> persona_state;
  std::map<std::string, double> capability_scores;
  std::optional<double> sa_score;
  std::optional<std::set<std::string>> sae_features;
  std::optional<RoutingTrace> routing_trace;
  std::optional<std::vector<EditTrial>> edit_trials;
  std::optional<std::vector<ReversalTrial>> reversal_trials;
  std::optional<double> disclaimer_rate;

  bool operator==(const CheckpointRecord&) const = default;
};

/// Distributions whose sum is within this of 1 are renormalized on ingest.
inline constexpr double kRenormalizeTolerance = 1e-6;

/// Every invariant violation in `r`, in field order. Empty means valid.
std::vector<std::string> validate_record(const CheckpointRecord& r);

CheckpointRecord record_from_json(const nlohmann::json& j);
nlohmann::json record_to_json(const CheckpointRecord& r);

/// Parses one record per non-blank line, validates it, and returns records
/// sorted by (run_id, step). Throws InputError naming the offending line.
std::vector<CheckpointRecord> parse_run(std::istream& in);
std::vector<CheckpointRecord> parse_run_file(const std::string& path);

/// Non-throwing counterpart of parse_run that keeps going after a bad line
/// and collects every problem as "line N: message".
struct ValidationReport {
  std::size_t records = 0;  // lines that parsed and validated
  std::vector<std::string> problems;
};
ValidationReport validate_stream(std::istream& in);

/// One compact JSON object per line, in the given order.
void serialize_run(std::ostream& out, const std::vector<CheckpointRecord>& records);

/// Splits a parsed log into runs, preserving step order; runs ordered by id.
std::vector<std::vector<CheckpointRecord>> split_runs(const std::vector<CheckpointRecord>& records);

struct RunManifestEntry {
  std::string model_name;
  std::string precision;
  std::int64_t checkpoint_count = 0;
  std::optional<std::vector<double>> persona_direction;
};

/// run_id -> entry. Accepts either {"runs": {...}} or a bare object map.
std::map<std::string, RunManifestEntry> parse_manifest(const nlohmann::json& j);
std::map<std::string, RunManifestEntry> parse_manifest_file(const std::string& path);

}  // namespace lockin
