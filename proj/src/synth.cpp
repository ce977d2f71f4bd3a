#include "lockin/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "lockin/metrics.hpp"
#include "lockin/random.hpp"

namespace lockin {

using nlohmann::json;

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::cost_free: return "cost_free";
    case Scenario::volatile_synergy: return "volatile_synergy";
    case Scenario::uplift: return "uplift";
    case Scenario::quantization_stress: return "quantization_stress";
    case Scenario::null_drift: return "null_drift";
  }
  return "?";
}

Scenario scenario_from_string(const std::string& name) {
  for (auto s : {Scenario::cost_free, Scenario::volatile_synergy, Scenario::uplift, Scenario::quantization_stress,
                 Scenario::null_drift}) {
    if (to_string(s) == name) return s;
  }
  throw std::invalid_argument("unknown scenario: " + name);
}

SynthConfig default_config(Scenario s) {
  SynthConfig c;
  c.scenario = s;
  switch (s) {
    case Scenario::cost_free:
      c.re_baseline = 0.47, c.re_peak = 0.64, c.onset_step = 20, c.relax_step = 75;
      break;
    case Scenario::volatile_synergy:
      c.re_baseline = 0.30, c.re_peak = 0.70, c.onset_step = 25, c.relax_step = 65;
      break;
    case Scenario::uplift:
      c.re_baseline = 0.17, c.re_peak = 0.82, c.onset_step = 30, c.relax_step = 70;
      break;
    case Scenario::quantization_stress:
      c.re_baseline = 0.35, c.re_peak = 0.72, c.onset_step = 20, c.relax_step = 50;
      break;
    case Scenario::null_drift:
      c.re_baseline = 0.45, c.re_peak = 0.55, c.onset_step = 30, c.relax_step = 60;
      break;
  }
  return c;
}

namespace {

double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

double binary_entropy(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

/// Monotone root finding on [lo, hi] for f increasing.
template <typename F>
double bisect(F f, double target, double lo, double hi) {
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (f(mid) < target) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

/// Standard normal truncated to |z| <= 3 by resampling.
double truncated_normal(CounterRng& rng) {
  for (;;) {
    const double z = rng.normal();
    if (std::abs(z) <= 3.0) return z;
  }
}

enum Stream : std::uint64_t { kRe = 1, kCosine, kCapability, kSa, kReversal };

struct Curves {
  double re, cosine, capability, sa, pii, turnover, mi, disclaimer;
};

Curves curves_at(const SynthConfig& c, std::int64_t step, std::optional<std::int64_t> spike_step) {
  const double s = static_cast<double>(step);
  const double width = static_cast<double>(c.step_interval);
  // Logistic rise that is < 1% complete one interval before onset and > 99%
  // complete at onset.
  const double center = static_cast<double>(c.onset_step) - 0.5 * width;
  const double rise = 1.0 / (1.0 + std::exp(-(s - center) / (width / (2.0 * std::log(99.0)))));
  const double span = static_cast<double>(c.relax_step - c.onset_step);
  const double after = (s - static_cast<double>(c.onset_step)) / span;
  const double eff = c.re_peak - c.re_baseline;
  const double progress = s / static_cast<double>(c.last_step());

  Curves k{};
  k.sa = 0.2 + 0.5 * progress;
  k.pii = 0.12 - 0.10 * rise;
  k.turnover = 0.30 - 0.25 * rise;
  k.mi = 0.2 + 0.6 * rise;
  k.disclaimer = 0.05;
  switch (c.scenario) {
    case Scenario::cost_free: {
      const double hold = 1.0 - 0.9 * smoothstep(after);
      k.re = c.re_baseline + eff * rise * hold;
      k.cosine = 0.10 + 0.25 * rise;
      k.capability = 0.730 + 0.03 * (k.re - c.re_baseline);
      break;
    }
    case Scenario::volatile_synergy: {
      // Peak at onset, collapse by mid-window, partial recovery by relax_step.
      const double collapse = 0.55 * smoothstep(2.0 * after);
      const double recover = 0.30 * smoothstep(2.0 * after - 1.0);
      const double level = 1.0 - collapse + recover;
      k.re = c.re_baseline + eff * rise * level;
      k.cosine = 0.05 + 0.30 * rise * level;
      k.capability = 0.28 + 0.05 * rise * level;
      break;
    }
    case Scenario::uplift: {
      k.re = c.re_baseline + eff * rise;
      k.cosine = 0.20 + 0.02 * rise;
      k.capability = 0.58 + 0.04 * rise * (1.0 - smoothstep(after));
      const double peak_dist = (s - static_cast<double>(c.onset_step)) / width;
      k.disclaimer = 0.05 + 0.30 * std::exp(-peak_dist * peak_dist);
      break;
    }
    case Scenario::quantization_stress: {
      k.re = c.re_baseline + eff * rise;
      k.cosine = 0.15 + 0.20 * rise;
      k.capability = 0.62;
      if (spike_step) {
        if (step == *spike_step) k.capability = 0.74;
        else if (step == *spike_step + c.step_interval) k.capability = 0.60;
      }
      break;
    }
    case Scenario::null_drift: {
      k.re = c.re_baseline + eff * progress;
      k.cosine = 0.20 + 0.05 * progress;
      k.capability = 0.60;
      k.pii = 0.08;
      k.turnover = 0.20;
      k.mi = 0.3;
      break;
    }
  }
  return k;
}

std::vector<double> unit_direction(std::size_t dim) {
  std::vector<double> d(dim);
  double norm = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    d[i] = static_cast<double>(i % 2 == 0 ? i + 1 : -static_cast<double>(i + 1)) / static_cast<double>(dim);
    norm += d[i] * d[i];
  }
  for (double& v : d) v /= std::sqrt(norm);
  return d;
}

/// Unit vector orthogonal to `d` (Gram-Schmidt on e_0).
std::vector<double> orthogonal_unit(const std::vector<double>& d) {
  std::vector<double> u(d.size(), 0.0);
  u[0] = 1.0;
  const double proj = d[0];
  double norm = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    u[i] -= proj * d[i];
    norm += u[i] * u[i];
  }
  for (double& v : u) v /= std::sqrt(norm);
  return u;
}

RoutingTrace routing_for_mi(double target_mi) {
  // Two input classes over four experts; class c prefers expert c and spreads
  // eps over the other three. MI falls monotonically in eps.
  const auto trace_for = [](double eps) {
    constexpr std::int64_t per_class = 10000;
    RoutingTrace t;
    t.input_classes = {"class_a", "class_b"};
    t.experts = {"expert_0", "expert_1", "expert_2", "expert_3"};
    for (int c = 0; c < 2; ++c) {
      std::vector<std::int64_t> row(4);
      for (int e = 0; e < 4; ++e) {
        const double p = e == c ? 1.0 - eps : eps / 3.0;
        row[e] = static_cast<std::int64_t>(std::llround(p * per_class));
      }
      t.counts.push_back(row);
    }
    return t;
  };
  const auto mi_of_eps = [&](double eps) {
    const double p_own = 1.0 - eps;
    const double p_other = eps / 3.0;
    const double h_cond = -(p_own > 0 ? p_own * std::log2(p_own) : 0.0) -
                          3.0 * (p_other > 0 ? p_other * std::log2(p_other) : 0.0);
    const double m_own = 0.5 * p_own + 0.5 * p_other;
    const double m_spare = p_other;
    const double h_marg = -2.0 * (m_own > 0 ? m_own * std::log2(m_own) : 0.0) -
                          2.0 * (m_spare > 0 ? m_spare * std::log2(m_spare) : 0.0);
    return h_marg - h_cond;
  };
  // mi_of_eps decreases on [0, 0.75]; bisect on its negation.
  const double eps = bisect([&](double e) { return -mi_of_eps(e); }, -target_mi, 0.0, 0.75);
  return trace_for(eps);
}

}  // namespace

std::vector<SteerProbe> probes_for_elasticity(double re) {
  if (!(re >= 0.0 && re <= 1.0)) throw std::invalid_argument("target RE outside [0,1]");
  const double a = (1.0 - re) / 2.0;  // required mean absolute deviation
  // Uneven spread (multipliers 0.5 and 1.5, mean 1) when it stays in range.
  const bool spread = 1.5 * a <= 0.5;
  const double mult[4] = {spread ? 0.5 : 1.0, spread ? 1.5 : 1.0, spread ? 0.5 : 1.0, spread ? 1.5 : 1.0};
  std::vector<SteerProbe> probes;
  for (int i = 0; i < 8; ++i) {
    const double sign = i < 4 ? 1.0 : -1.0;
    char id[16];
    std::snprintf(id, sizeof id, "steer_%02d", i);
    probes.push_back({id, std::clamp(0.5 + sign * a * mult[i % 4], 0.0, 1.0)});
  }
  return probes;
}

ClusterDistribution cluster_for_divergence(const std::string& id, double pii) {
  if (!(pii >= 0.0 && pii <= 1.0)) throw std::invalid_argument("target PII outside [0,1]");
  // JSD of [0.5+e, 0.5-e] vs its mirror is 1 - H_b(0.5+e), increasing in e.
  const double e = bisect([](double x) { return 1.0 - binary_entropy(0.5 + x); }, pii, 0.0, 0.5);
  return {id, {"comply", "refuse"}, {{0.5 + e, 0.5 - e}, {0.5 - e, 0.5 + e}}};
}

json ground_truth_to_json(const GroundTruth& g, const SynthConfig& cfg) {
  json j;
  j["scenario"] = to_string(g.scenario);
  j["seed"] = cfg.seed;
  j["noise_sd"] = cfg.noise_sd;
  j["n_checkpoints"] = cfg.n_checkpoints;
  j["step_interval"] = cfg.step_interval;
  j["re_baseline"] = cfg.re_baseline;
  j["re_peak"] = cfg.re_peak;
  j["relax_step"] = cfg.relax_step;
  j["onset_step"] = g.onset_step ? json(*g.onset_step) : json(nullptr);
  j["onset_index"] = g.onset_index ? json(*g.onset_index) : json(nullptr);
  j["effect"] = g.effect;
  j["spike_step"] = g.spike_step ? json(*g.spike_step) : json(nullptr);
  j["persona_direction"] = g.persona_direction;
  j["steps"] = g.steps;
  j["targets"] = {{"refusal_elasticity", g.re}, {"persona_cosine", g.cosine}, {"capability", g.capability},
                  {"sa_score", g.sa},           {"pii", g.pii},               {"turnover", g.turnover},
                  {"routing_mi", g.routing_mi}};
  j["realized"] = {{"refusal_elasticity", g.re_realized},
                   {"persona_cosine", g.cosine_realized},
                   {"capability", g.capability_realized},
                   {"sa_score", g.sa_realized}};
  return j;
}

SynthRun generate_run(const SynthConfig& cfg) {
  if (cfg.n_checkpoints < 2) throw std::invalid_argument("n_checkpoints must be >= 2");
  if (cfg.step_interval < 1) throw std::invalid_argument("step_interval must be >= 1");
  if (!(cfg.noise_sd >= 0.0)) throw std::invalid_argument("noise_sd must be non-negative");
  if (!(cfg.re_baseline >= 0.0 && cfg.re_baseline <= 1.0 && cfg.re_peak >= 0.0 && cfg.re_peak <= 1.0)) {
    throw std::invalid_argument("RE levels must lie in [0,1]");
  }
  if (!(cfg.onset_step < cfg.relax_step && cfg.relax_step < cfg.last_step())) {
    throw std::invalid_argument("need onset_step < relax_step < last step");
  }
  if (cfg.onset_step <= 0) throw std::invalid_argument("onset_step must be positive");

  SynthRun out;
  auto& g = out.truth;
  g.scenario = cfg.scenario;
  g.effect = cfg.re_peak - cfg.re_baseline;
  if (cfg.scenario != Scenario::null_drift) {
    g.onset_step = cfg.onset_step;
    g.onset_index = static_cast<std::size_t>((cfg.onset_step + cfg.step_interval - 1) / cfg.step_interval);
  }
  if (cfg.scenario == Scenario::quantization_stress) {
    const std::int64_t onset_ckpt = static_cast<std::int64_t>(*g.onset_index) * cfg.step_interval;
    g.spike_step = onset_ckpt + cfg.step_interval;
    if (*g.spike_step + cfg.step_interval > cfg.last_step()) {
      throw std::invalid_argument("quantization_stress needs two checkpoints after the onset checkpoint");
    }
  }
  constexpr std::size_t kHiddenDim = 16;
  g.persona_direction = unit_direction(kHiddenDim);
  const auto ortho = orthogonal_unit(g.persona_direction);

  auto noisy = [&](Stream stream, std::size_t i, double target, double lo, double hi) {
    if (cfg.noise_sd == 0.0) return target;
    CounterRng rng(derive_key(cfg.seed, stream, i));
    return std::clamp(target + cfg.noise_sd * truncated_normal(rng), lo, hi);
  };

  constexpr int kFeaturePool = 200;
  std::set<std::string> features;
  int next_feature = 0;
  for (; next_feature < kFeaturePool; ++next_feature) features.insert("f" + std::to_string(next_feature));

  for (int i = 0; i < cfg.n_checkpoints; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const std::int64_t step = cfg.step_interval * i;
    const Curves k = curves_at(cfg, step, g.spike_step);

    CheckpointRecord r;
    r.run_id = cfg.run_id;
    r.step = step;

    const double re = noisy(kRe, idx, std::clamp(k.re, 0.0, 1.0), 0.0, 1.0);
    r.steer_probes = probes_for_elasticity(re);

    const double pii = std::clamp(k.pii, 0.0, 1.0);
    r.paraphrase_clusters = {cluster_for_divergence("cluster_0", pii), cluster_for_divergence("cluster_1", pii)};

    const double cosine = noisy(kCosine, idx, k.cosine, -1.0, 1.0);
    PersonaObservation obs;
    obs.mean_hidden_state.resize(kHiddenDim);
    const double perp = std::sqrt(std::max(0.0, 1.0 - cosine * cosine));
    for (std::size_t d = 0; d < kHiddenDim; ++d) {
      obs.mean_hidden_state[d] = 3.0 * (cosine * g.persona_direction[d] + perp * ortho[d]);
    }
    obs.persona_cosine = persona_cosine(obs.mean_hidden_state, g.persona_direction);
    r.persona_state = obs;

    const double capability = noisy(kCapability, idx, k.capability, 0.0, 1.0);
    r.capability_scores["arc_accuracy"] = capability;

    const double sa = noisy(kSa, idx, k.sa, 0.0, 1.0);
    r.sa_score = sa;

    // Replace the oldest round(turnover * pool) features with fresh ones.
    double realized_turnover = 0.0;
    if (i > 0) {
      const int replace = static_cast<int>(std::lround(std::clamp(k.turnover, 0.0, 1.0) * kFeaturePool));
      std::vector<std::string> ordered(features.begin(), features.end());
      std::sort(ordered.begin(), ordered.end(), [](const std::string& a, const std::string& b) {
        return std::stoi(a.substr(1)) < std::stoi(b.substr(1));
      });
      for (int n = 0; n < replace; ++n) {
        features.erase(ordered[static_cast<std::size_t>(n)]);
        features.insert("f" + std::to_string(next_feature++));
      }
      realized_turnover = static_cast<double>(replace) / kFeaturePool;
    }
    r.sae_features = features;

    double realized_mi = 0.0;
    if (cfg.moe) {
      r.routing_trace = routing_for_mi(k.mi);
      realized_mi = expert_input_mi(*r.routing_trace);
    }

    // Stances flip once the edit norm clears a threshold that grows with RE.
    std::vector<EditTrial> edits;
    for (int stance = 0; stance < 3; ++stance) {
      const double needed = 1.0 + 4.0 * re + 0.5 * stance;
      for (int n = 1; n <= 12; ++n) {
        const double norm = 0.5 * n;
        edits.push_back({"stance_" + std::to_string(stance), norm, norm >= needed});
      }
    }
    r.edit_trials = std::move(edits);

    // Reversal cost curve: flat before onset, steeper afterwards.
    const bool post = g.onset_step && step >= *g.onset_step;
    std::vector<ReversalTrial> reversals;
    for (int n = 0; n < 4; ++n) {
      const double kl = (0.1 + 0.1 * n) * (post ? 2.0 : 1.0);
      const double slope = cfg.scenario == Scenario::null_drift ? -0.5 : (post ? -2.0 : 0.0);
      double delta = slope * kl;
      if (cfg.noise_sd > 0.0) {
        CounterRng rng(derive_key(cfg.seed, kReversal, idx * 16 + static_cast<std::size_t>(n)));
        delta += 10.0 * cfg.noise_sd * truncated_normal(rng);
      }
      reversals.push_back({kl, true, delta});
    }
    r.reversal_trials = std::move(reversals);
    r.disclaimer_rate = std::clamp(k.disclaimer, 0.0, 1.0);

    g.steps.push_back(step);
    g.re.push_back(std::clamp(k.re, 0.0, 1.0));
    g.cosine.push_back(k.cosine);
    g.capability.push_back(k.capability);
    g.sa.push_back(k.sa);
    g.pii.push_back(pii);
    g.turnover.push_back(realized_turnover);
    g.routing_mi.push_back(realized_mi);
    g.re_realized.push_back(re);
    g.cosine_realized.push_back(cosine);
    g.capability_realized.push_back(capability);
    g.sa_realized.push_back(sa);
    out.records.push_back(std::move(r));
  }
  return out;
}

}  // namespace lockin
