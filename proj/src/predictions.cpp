#include "lockin/predictions.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>

#include "lockin/changepoint.hpp"
#include "lockin/errors.hpp"
#include "lockin/random.hpp"

namespace lockin {

using nlohmann::json;

std::string to_string(PredictionId id) {
  switch (id) {
    case PredictionId::P1: return "P1";
    case PredictionId::P2: return "P2";
    case PredictionId::P3: return "P3";
    case PredictionId::P4: return "P4";
    case PredictionId::P5: return "P5";
  }
  return "?";
}

std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::pass: return "pass";
    case Outcome::fail: return "fail";
    case Outcome::insufficient_data: return "insufficient_data";
  }
  return "?";
}

json verdict_to_json(const PredictionVerdict& v) {
  return {{"id", to_string(v.id)},
          {"outcome", to_string(v.outcome)},
          {"evidence", v.evidence},
          {"thresholds_used", v.thresholds_used},
          {"flags", v.flags}};
}

PredictionVerdict eval_p1(const MetricSeries& sa, const MetricSeries& re, const MetricSeries& pii,
                          const ThresholdConfig& cfg, const PermutationOptions& perm) {
  PredictionVerdict v;
  v.id = PredictionId::P1;
  v.thresholds_used = {{"tau_re", cfg.tau_re}, {"tau_pii", cfg.tau_pii}, {"p1_alpha", cfg.p1_alpha}};

  const auto re_values = re.valid_values();
  if (!re_values.empty()) v.evidence["median_re"] = median(re_values);
  const auto pii_values = pii.valid_values();
  const bool have_pii = !pii_values.empty();
  if (have_pii) v.evidence["median_pii"] = median(pii_values);
  else v.flags.push_back("partial: pii absent");

  const auto [xs, ys] = align(sa, re);
  v.evidence["n_paired"] = xs.size();
  if (xs.size() < 3) {
    v.flags.push_back("fewer than 3 shared SA/RE checkpoints");
    return v;
  }
  SpearmanResult rho;
  try {
    rho = spearman(xs, ys, perm.n_perm, perm.seed, 1);
  } catch (const InsufficientData& e) {
    v.flags.push_back(e.what());
    return v;
  }
  v.evidence["rho_sa_re"] = rho.rho;
  v.evidence["p_value"] = rho.p_value;
  v.evidence["n_perm"] = rho.n_perm;

  const bool comove = rho.rho > 0.0 && rho.p_value < cfg.p1_alpha;
  const bool persistent = median(re_values) > cfg.tau_re;
  const bool invariant = !have_pii || median(pii_values) < cfg.tau_pii;
  v.evidence["clause_comovement"] = comove;
  v.evidence["clause_median_re"] = persistent;
  if (have_pii) v.evidence["clause_median_pii"] = invariant;
  v.outcome = comove && persistent && invariant ? Outcome::pass : Outcome::fail;
  return v;
}

namespace {

json report_evidence(const ChangepointReport& r) {
  return {{"breakpoint_step", r.breakpoints.front()},
          {"effect_size", r.effect_sizes.front()},
          {"level_shift", r.level_shift},
          {"pre_slope", r.pre_line.slope},
          {"post_slope", r.post_line.slope},
          {"aic_smooth", r.aic_smooth},
          {"aic_segmented", r.aic_segmented},
          {"bic_smooth", r.bic_smooth},
          {"bic_segmented", r.bic_segmented},
          {"degenerate", r.degenerate},
          {"supported", r.supported},
          {"pelt_breakpoints", r.pelt_breakpoints},
          {"pelt_effect_sizes", r.pelt_effect_sizes},
          {"methods_agree", r.methods_agree}};
}

}  // namespace

PredictionVerdict eval_p2(const MetricSeries& cosine, const MetricSeries& re, const ThresholdConfig& cfg,
                          const P2Options& opts) {
  PredictionVerdict v;
  v.id = PredictionId::P2;
  v.thresholds_used = {{"p2_delta", cfg.p2_delta}};

  ChangepointOptions cp;
  cp.delta = cfg.p2_delta;
  cp.penalty = opts.pelt_penalty;
  cp.min_seg_len = opts.min_seg_len;

  std::optional<ChangepointReport> reports[2];
  const MetricSeries* inputs[2] = {&re, &cosine};
  const char* keys[2] = {"re", "cosine"};
  for (int i = 0; i < 2; ++i) {
    try {
      reports[i] = analyze_series(*inputs[i], cp);
      v.evidence[keys[i]] = report_evidence(*reports[i]);
    } catch (const InsufficientData&) {
      v.evidence[keys[i]] = {{"valid_points", inputs[i]->valid_count()}, {"status", "insufficient_data"}};
      // Short series still get the piecewise-constant view when it fits.
      std::vector<double> values = inputs[i]->valid_values();
      if (values.size() >= std::max(kMinPeltPoints, 2 * cp.min_seg_len)) {
        const auto breaks = pelt_l2(values, cp.penalty.value_or(default_penalty(values)), cp.min_seg_len);
        std::vector<std::int64_t> steps;
        std::vector<std::int64_t> valid_steps;
        for (const auto& p : inputs[i]->points) {
          if (p.valid) valid_steps.push_back(p.step);
        }
        for (auto b : breaks) steps.push_back(valid_steps[b]);
        v.evidence[keys[i]]["pelt_breakpoints"] = steps;
      }
    }
  }

  if (!reports[0] && !reports[1]) return v;
  const ChangepointReport* onset = nullptr;
  for (const auto& r : reports) {
    if (r && r->supported && onset == nullptr) onset = &*r;
  }
  if (onset != nullptr) {
    v.outcome = Outcome::pass;
    v.evidence["onset_series"] = onset->series_name;
    v.evidence["onset_step"] = onset->breakpoints.front();
    if (!onset->methods_agree) v.flags.push_back("pelt and segmented regression disagree on onset location");
  } else {
    v.outcome = Outcome::fail;
  }
  if (!reports[0] || !reports[1]) v.flags.push_back("partial: one series below minimum length");
  return v;
}

namespace {

struct Observation {
  std::size_t checkpoint;
  double kl;
  double delta;
};

/// Interaction coefficient of delta ~ 1 + kl + post + kl*post, plus the
/// two phase slopes. nullopt when the design is singular.
struct InteractionFit {
  double pre_slope;
  double post_slope;
  double interaction;
  double post_offset;
};

std::optional<InteractionFit> fit_interaction(const std::vector<Observation>& obs, const std::vector<bool>& post) {
  std::array<std::array<double, 5>, 4> m{};
  for (const auto& o : obs) {
    const double g = post[o.checkpoint] ? 1.0 : 0.0;
    const std::array<double, 4> row{1.0, o.kl, g, o.kl * g};
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) m[i][j] += row[i] * row[j];
      m[i][4] += row[i] * o.delta;
    }
  }
  double scale = 0.0;
  for (int i = 0; i < 4; ++i) scale = std::max(scale, std::abs(m[i][i]));
  for (int col = 0; col < 4; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 4; ++r) {
      if (std::abs(m[r][col]) > std::abs(m[pivot][col])) pivot = r;
    }
    if (std::abs(m[pivot][col]) <= 1e-12 * (scale + 1e-300)) return std::nullopt;
    std::swap(m[col], m[pivot]);
    for (int r = 0; r < 4; ++r) {
      if (r == col) continue;
      const double f = m[r][col] / m[col][col];
      for (int c = col; c < 5; ++c) m[r][c] -= f * m[col][c];
    }
  }
  std::array<double, 4> beta{};
  for (int i = 0; i < 4; ++i) beta[i] = m[i][4] / m[i][i];
  return InteractionFit{beta[1], beta[1] + beta[3], beta[3], beta[2]};
}

}  // namespace

PredictionVerdict eval_p3(const std::vector<ReversalCheckpoint>& checkpoints, const ThresholdConfig& cfg,
                          const PermutationOptions& perm) {
  PredictionVerdict v;
  v.id = PredictionId::P3;
  v.thresholds_used = {{"p3_alpha", cfg.p3_alpha}};

  std::vector<Observation> obs;
  std::vector<bool> post;
  std::size_t n_pre = 0, n_post = 0;
  for (const auto& cp : checkpoints) {
    bool any = false;
    for (const auto& t : cp.trials) {
      if (!t.reversed) continue;
      obs.push_back({post.size(), t.kl_cost, t.delta_capability});
      (cp.post_onset ? n_post : n_pre) += 1;
      any = true;
    }
    if (any) post.push_back(cp.post_onset);
  }
  v.evidence["n_pre"] = n_pre;
  v.evidence["n_post"] = n_post;
  if (n_pre < 3 || n_post < 3) {
    v.flags.push_back("fewer than 3 successful reversals on one side of onset");
    return v;
  }
  const auto fit = fit_interaction(obs, post);
  if (!fit) {
    v.flags.push_back("singular design: KL costs do not vary within a phase");
    return v;
  }
  v.evidence["pre_slope"] = fit->pre_slope;
  v.evidence["post_slope"] = fit->post_slope;
  v.evidence["interaction"] = fit->interaction;

  int extreme = 0;
  const double threshold = fit->interaction + 1e-12 * (1.0 + std::abs(fit->interaction));
  std::vector<bool> shuffled(post.size());
  for (int k = 0; k < perm.n_perm; ++k) {
    std::vector<char> labels(post.begin(), post.end());
    CounterRng rng(derive_key(perm.seed, 3, static_cast<std::uint64_t>(k)));
    rng.shuffle(std::span<char>(labels));
    std::copy(labels.begin(), labels.end(), shuffled.begin());
    const auto f = fit_interaction(obs, shuffled);
    // Singular relabelings count against the observed effect.
    if (!f || f->interaction <= threshold) ++extreme;
  }
  const double p = static_cast<double>(1 + extreme) / static_cast<double>(1 + perm.n_perm);
  v.evidence["p_value"] = p;
  v.evidence["n_perm"] = perm.n_perm;
  v.outcome = fit->interaction < 0.0 && p < cfg.p3_alpha ? Outcome::pass : Outcome::fail;
  return v;
}

std::vector<ReversalCheckpoint> reversal_checkpoints(const std::vector<CheckpointRecord>& run,
                                                     std::int64_t onset_step) {
  std::vector<ReversalCheckpoint> out;
  for (const auto& r : run) {
    if (!r.reversal_trials || r.reversal_trials->empty()) continue;
    out.push_back({r.step, *r.reversal_trials, r.step >= onset_step});
  }
  return out;
}

PredictionVerdict eval_p4(const ConsolidationSnapshot& baseline, const ConsolidationSnapshot& pre,
                          const ConsolidationSnapshot& post, const ThresholdConfig& cfg) {
  PredictionVerdict v;
  v.id = PredictionId::P4;
  v.thresholds_used = {{"p4_retention", cfg.p4_retention}};

  const bool have_required = baseline.re && pre.re && post.re && baseline.cosine && pre.cosine && post.cosine;
  if (!have_required) {
    v.flags.push_back("RE and persona cosine required at baseline, pre and post");
    return v;
  }
  struct Metric {
    const char* name;
    std::optional<double> ConsolidationSnapshot::*field;
  };
  const Metric metrics[] = {{"re", &ConsolidationSnapshot::re},
                            {"pii", &ConsolidationSnapshot::pii},
                            {"cosine", &ConsolidationSnapshot::cosine}};
  bool all_retained = true;
  int evaluated = 0;
  for (const auto& m : metrics) {
    const auto& b = baseline.*m.field;
    const auto& a = pre.*m.field;
    const auto& c = post.*m.field;
    if (!b || !a || !c) continue;
    const double shift = *a - *b;
    if (std::abs(shift) <= 1e-12) {
      v.evidence["retention_" + std::string(m.name)] = nullptr;
      v.flags.push_back(std::string("degenerate: no ") + m.name + " shift to retain");
      continue;
    }
    const double retention = (*c - *b) / shift;
    v.evidence["retention_" + std::string(m.name)] = retention;
    all_retained &= retention >= cfg.p4_retention;
    ++evaluated;
  }
  if (evaluated == 0) return v;
  v.outcome = all_retained ? Outcome::pass : Outcome::fail;
  return v;
}

MetricSeries trend(const MetricSeries& series, int window) {
  const auto smooth = moving_average(series, window);
  MetricSeries out;
  out.run_id = series.run_id;
  out.metric_name = series.metric_name + "_trend";
  for (std::size_t i = 1; i < smooth.points.size(); ++i) {
    const auto& a = smooth.points[i - 1];
    const auto& b = smooth.points[i];
    out.points.push_back({b.step, b.value - a.value, a.valid && b.valid});
  }
  return out;
}

std::vector<TriadRow> triad_conditions(const MetricSeries& turnover, const MetricSeries& routing_mi,
                                       const MetricSeries& sa, const MetricSeries& re, const ThresholdConfig& cfg,
                                       int trend_window) {
  const auto sa_trend = trend(sa, trend_window);
  const auto re_trend = trend(re, trend_window);
  const bool moe = routing_mi.valid_count() > 0;

  std::vector<TriadRow> rows;
  int run = 0;
  for (const auto& p : turnover.points) {
    if (!p.valid || !sa.value_at(p.step) || !re.value_at(p.step)) continue;
    TriadRow row;
    row.step = p.step;
    row.low_turnover = p.value < cfg.p5_tau_turnover;
    if (moe) {
      const auto mi = routing_mi.value_at(p.step);
      row.specialized_routing = mi && *mi > cfg.p5_tau_mi;
    }
    const auto ds = sa_trend.value_at(p.step);
    const auto dr = re_trend.value_at(p.step);
    row.awareness_with_persistence = ds && dr && *ds > 0.0 && *dr > 0.0;
    row.all = row.low_turnover && row.specialized_routing.value_or(true) && row.awareness_with_persistence;
    run = row.all ? run + 1 : 0;
    row.run_length = run;
    rows.push_back(row);
  }
  return rows;
}

PredictionVerdict eval_p5(const MetricSeries& turnover, const MetricSeries& routing_entropy,
                          const MetricSeries& routing_mi, const MetricSeries& sa, const MetricSeries& re,
                          const ThresholdConfig& cfg, int trend_window) {
  PredictionVerdict v;
  v.id = PredictionId::P5;
  v.thresholds_used = {{"p5_tau_turnover", cfg.p5_tau_turnover},
                       {"p5_tau_mi", cfg.p5_tau_mi},
                       {"p5_k_consecutive", cfg.p5_k_consecutive}};

  const bool moe = routing_mi.valid_count() > 0;
  v.evidence["mode"] = moe ? "triad" : "dyad";
  if (!moe) v.flags.push_back("dyad: no routing data, routing clause excluded");

  const auto rows = triad_conditions(turnover, routing_mi, sa, re, cfg, trend_window);
  v.evidence["n_checkpoints"] = rows.size();
  if (rows.size() < static_cast<std::size_t>(cfg.p5_k_consecutive)) {
    v.flags.push_back("fewer joint turnover/SA/RE checkpoints than p5_k_consecutive");
    return v;
  }
  int best = 0;
  std::int64_t best_end = 0;
  for (const auto& r : rows) {
    if (r.run_length > best) {
      best = r.run_length;
      best_end = r.step;
    }
  }
  v.evidence["max_run_length"] = best;
  if (best > 0) {
    const auto end = std::find_if(rows.begin(), rows.end(), [&](const TriadRow& r) { return r.step == best_end; });
    v.evidence["run_start_step"] = (end - (best - 1))->step;
    v.evidence["run_end_step"] = best_end;
  }
  if (moe) {
    const auto et = trend(routing_entropy, trend_window);
    if (best > 0) {
      const auto d = et.value_at(best_end);
      if (d) v.evidence["routing_entropy_trend_at_run_end"] = *d;
    }
  }
  v.outcome = best >= cfg.p5_k_consecutive ? Outcome::pass : Outcome::fail;
  return v;
}

}  // namespace lockin
