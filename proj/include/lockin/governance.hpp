#pragma once

// Early-warning trigger engine. Each checkpoint gets five axis flags; two
// or more flags together, or a capability instability on its own, produce
// recommended actions.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lockin/config.hpp"
#include "lockin/extract.hpp"
#include "lockin/record.hpp"
#include "lockin/series.hpp"

namespace lockin {

enum class Action { intensified_red_teaming, pause_escalation_gate, ablation_study, rollback_checkpoint, none };

std::string to_string(Action a);

struct AxisFlags {
  bool behavioral_persistence = false;
  bool representational_stability = false;
  bool routing_specialization = false;
  bool awareness_comovement = false;
  bool numerical_instability = false;

  int count() const;
  bool operator==(const AxisFlags&) const = default;
};

struct GovernanceAlert {
  std::int64_t step = 0;
  AxisFlags axis_flags;
  int triad_run_length = 0;
  std::vector<Action> actions;  // {none} when nothing is recommended
};

struct InstabilityEvent {
  std::int64_t step = 0;  // checkpoint the jump lands on
  double magnitude = 0.0; // signed, percentage points
  bool transient = false; // part of a jump-and-reversal pair
};

/// Flags every adjacent jump of at least `tau_pp` percentage points between
/// valid points of a [0,1] capability series. A jump followed within two
/// checkpoints by an opposite jump of at least `tau_pp` marks both as
/// transient.
std::vector<InstabilityEvent> instability_detector(const MetricSeries& capability, double tau_pp);

/// Trailing-window population variance of the valid points ending at each
/// valid point (windows shorter than three points are skipped).
MetricSeries rolling_variance(const MetricSeries& series, int window);

/// One alert per checkpoint, in step order.
std::vector<GovernanceAlert> evaluate_triggers(const RunSeries& series, const Config& cfg);
std::vector<GovernanceAlert> evaluate_triggers(const std::vector<CheckpointRecord>& run, const Config& cfg,
                                               const ExtractOptions& opts);

nlohmann::json alert_to_json(const GovernanceAlert& a);

/// Flagged alerts plus a run-level summary.
nlohmann::json governance_report(const std::string& run_id, const std::vector<GovernanceAlert>& alerts,
                                 const std::vector<InstabilityEvent>& instabilities);

}  // namespace lockin
