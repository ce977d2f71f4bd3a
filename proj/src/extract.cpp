#include "lockin/extract.hpp"

#include <stdexcept>

#include "lockin/errors.hpp"
#include "lockin/metrics.hpp"

namespace lockin {

ExtractOptions extract_options(const AnalysisConfig& cfg) {
  ExtractOptions opts;
  opts.capability_metric = cfg.capability_metric;
  opts.mask_below = cfg.mask_below;
  opts.normalize_pii = cfg.normalize_pii;
  return opts;
}

RunSeries extract_series(const std::vector<CheckpointRecord>& run, const ExtractOptions& opts) {
  RunSeries out;
  out.n_checkpoints = run.size();
  if (!run.empty()) out.run_id = run.front().run_id;

  auto init = [&](MetricSeries& s, const char* name) {
    s.run_id = out.run_id;
    s.metric_name = name;
  };
  init(out.re, "refusal_elasticity");
  init(out.pii, "prompt_invariance_index");
  init(out.cosine, "persona_cosine");
  init(out.capability, opts.capability_metric.c_str());
  init(out.sa, "sa_score");
  init(out.turnover, "sae_feature_turnover");
  init(out.routing_entropy, "routing_entropy");
  init(out.routing_mi, "expert_input_mi");
  init(out.apr, "adversarial_persona_robustness");
  init(out.inertia, "adherence_inertia");
  init(out.disclaimer, "disclaimer_rate");

  const std::set<std::string>* previous_features = nullptr;
  for (std::size_t i = 0; i < run.size(); ++i) {
    const auto& r = run[i];
    if (r.run_id != out.run_id) throw std::invalid_argument("extract_series: records span several runs");
    if (i > 0 && r.step <= run[i - 1].step) throw std::invalid_argument("extract_series: steps not increasing");
    const auto step = r.step;

    if (!r.steer_probes.empty()) out.re.points.push_back({step, refusal_elasticity(r.steer_probes), true});
    try {
      out.pii.points.push_back({step, prompt_invariance_index(r.paraphrase_clusters, opts.normalize_pii), true});
    } catch (const InsufficientData&) {
    }
    if (r.persona_state) {
      if (r.persona_state->persona_cosine) {
        out.cosine.points.push_back({step, *r.persona_state->persona_cosine, true});
      } else if (opts.persona_direction) {
        try {
          out.cosine.points.push_back(
              {step, persona_cosine(r.persona_state->mean_hidden_state, *opts.persona_direction), true});
        } catch (const std::invalid_argument&) {
        }
      }
    }
    if (auto it = r.capability_scores.find(opts.capability_metric); it != r.capability_scores.end()) {
      out.capability.points.push_back({step, it->second, true});
    }
    if (r.sa_score) out.sa.points.push_back({step, *r.sa_score, true});
    if (r.sae_features) {
      if (previous_features != nullptr && !previous_features->empty()) {
        out.turnover.points.push_back({step, sae_feature_turnover(*previous_features, *r.sae_features), true});
      }
      previous_features = &*r.sae_features;
    }
    if (r.routing_trace) {
      out.routing_entropy.points.push_back({step, routing_entropy(*r.routing_trace), true});
      out.routing_mi.points.push_back({step, expert_input_mi(*r.routing_trace), true});
    }
    if (r.edit_trials && !r.edit_trials->empty()) {
      const auto apr = adversarial_persona_robustness(*r.edit_trials);
      if (apr.aggregate) out.apr.points.push_back({step, *apr.aggregate, true});
    }
    if (r.reversal_trials && !r.reversal_trials->empty()) {
      const auto inertia = adherence_inertia(*r.reversal_trials);
      out.inertia.points.push_back({step, inertia.value, !inertia.censored});
    }
    if (r.disclaimer_rate) out.disclaimer.points.push_back({step, *r.disclaimer_rate, true});
  }
  out.capability = mask_invalid(std::move(out.capability), mask_below(opts.mask_below));
  return out;
}

}  // namespace lockin
