#pragma once

// Per-checkpoint consolidation metrics. All information quantities are in
// bits, with 0 log 0 taken as 0.

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "lockin/record.hpp"

namespace lockin {

enum class MetricUnit { dimensionless, bits, norm, kl };

struct MetricValue {
  std::string name;
  double value = 0.0;
  MetricUnit unit = MetricUnit::dimensionless;
  int support = 1;
};

/// 1 - 2 * mean |p_s - mean(p)|. Lies in [0,1] for probabilities in [0,1].
double refusal_elasticity(std::span<const double> probs);
double refusal_elasticity(const std::vector<SteerProbe>& probes);

/// Shannon entropy in bits of a (not necessarily normalized) non-negative vector.
double entropy_bits(std::span<const double> p);

/// Generalized Jensen-Shannon divergence H(sum w_i P_i) - sum w_i H(P_i).
/// Uniform weights when `weights` is empty.
double jsd(const std::vector<std::vector<double>>& distributions, std::span<const double> weights = {});

/// Mean per-cluster JSD. With `normalize`, each cluster's divergence is
/// divided by log2(m) so it lies in [0,1]. Clusters with fewer than two
/// distributions are skipped; throws InsufficientData if none remain.
double prompt_invariance_index(const std::vector<ClusterDistribution>& clusters, bool normalize = true);

struct AprResult {
  /// stance_id -> minimal flipping norm, +inf when the stance never flipped.
  std::map<std::string, double> per_stance;
  /// Median over the finite per-stance values; nullopt when every stance is censored.
  std::optional<double> aggregate;
  bool censored = false;
  std::vector<std::string> censored_stances;
};

AprResult adversarial_persona_robustness(const std::vector<EditTrial>& trials);

/// Unit vector along mean(pos) - mean(neg).
std::vector<double> persona_direction(const std::vector<std::vector<double>>& pos_states,
                                      const std::vector<std::vector<double>>& neg_states);

double persona_cosine(std::span<const double> state, std::span<const double> direction);

/// |before \ after| / |before|.
double sae_feature_turnover(const std::set<std::string>& before, const std::set<std::string>& after);

/// Entropy of the expert marginal.
double routing_entropy(const RoutingTrace& trace);

/// Plug-in mutual information between input class and chosen expert.
double expert_input_mi(const RoutingTrace& trace);

struct InertiaResult {
  double value = 0.0;  // minimal reversing KL, or lower bound when censored
  bool censored = false;
};

InertiaResult adherence_inertia(const std::vector<ReversalTrial>& trials);

}  // namespace lockin
