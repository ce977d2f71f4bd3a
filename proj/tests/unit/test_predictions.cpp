#include <gtest/gtest.h>

#include <random>

#include "lockin/predictions.hpp"
#include "lockin/synth.hpp"
#include "lockin/extract.hpp"
#include "series_helpers.hpp"

using namespace lockin;

namespace {

const PermutationOptions kFastPerm{2000, 0};

std::vector<double> ramp(double a, double b, int n) {
  std::vector<double> v;
  for (int i = 0; i < n; ++i) v.push_back(a + (b - a) * i / (n - 1));
  return v;
}

}  // namespace

TEST(P1, AllClausesPass) {
  const auto v = eval_p1(series_of("sa", ramp(0.2, 0.9, 10)), series_of("re", ramp(0.72, 0.88, 10)),
                         series_of("pii", std::vector<double>(10, 0.01)), ThresholdConfig{}, kFastPerm);
  EXPECT_EQ(v.outcome, Outcome::pass);
  EXPECT_NEAR(v.evidence["rho_sa_re"].get<double>(), 1.0, 1e-12);
  EXPECT_LT(v.evidence["p_value"].get<double>(), 0.01);
  EXPECT_TRUE(v.flags.empty());
}

TEST(P1, NegativeCorrelationFails) {
  std::vector<double> re = ramp(0.9, 0.75, 10);
  re[3] = 0.86;  // rho = -0.9-ish, still negative
  const auto v = eval_p1(series_of("sa", ramp(0.2, 0.9, 10)), series_of("re", re),
                         series_of("pii", std::vector<double>(10, 0.01)), ThresholdConfig{}, kFastPerm);
  EXPECT_LT(v.evidence["rho_sa_re"].get<double>(), 0.0);
  EXPECT_EQ(v.outcome, Outcome::fail);
}

TEST(P1, TwoSharedCheckpointsInsufficient) {
  const auto v = eval_p1(series_of("sa", {0.1, 0.2}), series_of("re", {0.8, 0.9}), series_of("pii", {0.01, 0.01}),
                         ThresholdConfig{}, kFastPerm);
  EXPECT_EQ(v.outcome, Outcome::insufficient_data);
}

TEST(P1, AbsentPiiFlagsPartial) {
  const auto v = eval_p1(series_of("sa", ramp(0.2, 0.9, 10)), series_of("re", ramp(0.72, 0.88, 10)), MetricSeries{},
                         ThresholdConfig{}, kFastPerm);
  EXPECT_EQ(v.outcome, Outcome::pass);
  ASSERT_FALSE(v.flags.empty());
  EXPECT_NE(v.flags[0].find("partial"), std::string::npos);
}

TEST(P1, RaisingTauReNeverCreatesPass) {
  std::mt19937_64 gen(31);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 60; ++t) {
    std::vector<double> sa(8), re(8), pii(8);
    for (int i = 0; i < 8; ++i) sa[i] = u(gen), re[i] = 0.5 + 0.5 * u(gen), pii[i] = 0.1 * u(gen);
    ThresholdConfig lo, hi;
    lo.tau_re = 0.6;
    hi.tau_re = 0.8;
    const auto a = eval_p1(series_of("sa", sa), series_of("re", re), series_of("pii", pii), lo, {500, 1});
    const auto b = eval_p1(series_of("sa", sa), series_of("re", re), series_of("pii", pii), hi, {500, 1});
    if (a.outcome == Outcome::fail) EXPECT_EQ(b.outcome, Outcome::fail);
  }
}

TEST(P2, StepSeriesPassesWithOnset) {
  std::vector<double> re = {0.47, 0.47, 0.48, 0.64, 0.64, 0.63, 0.62, 0.60, 0.58, 0.56, 0.53, 0.51, 0.50};
  const auto v = eval_p2(series_of("cos", ramp(0.1, 0.3, 13)), series_of("re", re, 5), ThresholdConfig{});
  EXPECT_EQ(v.outcome, Outcome::pass);
  EXPECT_LE(v.evidence["onset_step"].get<std::int64_t>(), 20);
  EXPECT_TRUE(v.evidence.contains("re"));
  EXPECT_TRUE(v.evidence["re"].contains("pelt_breakpoints"));
}

TEST(P2, SmoothRampsFail) {
  const auto v = eval_p2(series_of("cos", ramp(0.1, 0.3, 12)), series_of("re", ramp(0.4, 0.7, 12)), ThresholdConfig{});
  EXPECT_EQ(v.outcome, Outcome::fail);
}

TEST(P2, FiveCheckpointsInsufficient) {
  const auto v = eval_p2(series_of("cos", {0.1, 0.1, 0.4, 0.4, 0.4}), series_of("re", {0.2, 0.2, 0.7, 0.7, 0.7}),
                         ThresholdConfig{});
  EXPECT_EQ(v.outcome, Outcome::insufficient_data);
  // PELT still reports on the short series.
  EXPECT_TRUE(v.evidence["re"].contains("pelt_breakpoints"));
}

namespace {

std::vector<ReversalCheckpoint> reversal_design(double pre_slope, double post_slope, bool with_post = true) {
  std::vector<ReversalCheckpoint> cps;
  for (int c = 0; c < 8; ++c) {
    const bool post = c >= 4;
    if (post && !with_post) continue;
    ReversalCheckpoint cp{c * 10, {}, post};
    for (int k = 1; k <= 4; ++k) {
      const double kl = 0.1 * k + 0.03 * c;
      cp.trials.push_back({kl, true, (post ? post_slope : pre_slope) * kl + 1.0});
    }
    cp.trials.push_back({5.0, false, 0.0});  // failed reversal is ignored
    cps.push_back(cp);
  }
  return cps;
}

}  // namespace

TEST(P3, SteeperPostSlopePasses) {
  const auto v = eval_p3(reversal_design(0.0, -2.0), ThresholdConfig{}, kFastPerm);
  EXPECT_EQ(v.outcome, Outcome::pass);
  EXPECT_NEAR(v.evidence["pre_slope"].get<double>(), 0.0, 1e-9);
  EXPECT_NEAR(v.evidence["post_slope"].get<double>(), -2.0, 1e-9);
  EXPECT_NEAR(v.evidence["interaction"].get<double>(), -2.0, 1e-9);
}

TEST(P3, IdenticalSlopesFail) {
  const auto v = eval_p3(reversal_design(-1.0, -1.0), ThresholdConfig{}, kFastPerm);
  EXPECT_EQ(v.outcome, Outcome::fail);
}

TEST(P3, NoPostSuccessesInsufficient) {
  EXPECT_EQ(eval_p3(reversal_design(0.0, -2.0, false), ThresholdConfig{}, kFastPerm).outcome,
            Outcome::insufficient_data);
}

TEST(P3, DeterministicForSeed) {
  auto design = reversal_design(-0.5, -1.0);
  std::mt19937_64 gen(5);
  std::normal_distribution<double> n(0, 0.2);
  for (auto& cp : design) {
    for (auto& t : cp.trials) t.delta_capability += n(gen);
  }
  const auto a = eval_p3(design, ThresholdConfig{}, kFastPerm);
  const auto b = eval_p3(design, ThresholdConfig{}, kFastPerm);
  EXPECT_EQ(verdict_to_json(a).dump(), verdict_to_json(b).dump());
}

TEST(P4, Examples) {
  ThresholdConfig cfg;
  auto v = eval_p4({0.2, std::nullopt, 0.1}, {0.8, std::nullopt, 0.5}, {0.74, std::nullopt, 0.46}, cfg);
  EXPECT_NEAR(v.evidence["retention_re"].get<double>(), 0.9, 1e-12);
  EXPECT_EQ(v.outcome, Outcome::pass);

  v = eval_p4({0.2, std::nullopt, 0.1}, {0.8, std::nullopt, 0.5}, {0.2, std::nullopt, 0.1}, cfg);
  EXPECT_NEAR(v.evidence["retention_re"].get<double>(), 0.0, 1e-12);
  EXPECT_EQ(v.outcome, Outcome::fail);

  v = eval_p4({0.5, std::nullopt, 0.1}, {0.5, std::nullopt, 0.5}, {0.5, std::nullopt, 0.5}, cfg);
  EXPECT_TRUE(v.evidence["retention_re"].is_null());
  EXPECT_EQ(v.outcome, Outcome::pass);  // cosine retained fully
  bool flagged = false;
  for (const auto& f : v.flags) flagged |= f.find("degenerate") != std::string::npos;
  EXPECT_TRUE(flagged);
}

TEST(P4, MissingRequiredInsufficient) {
  EXPECT_EQ(eval_p4({0.2, 0.1, std::nullopt}, {0.8, 0.01, 0.5}, {0.7, 0.02, 0.5}, ThresholdConfig{}).outcome,
            Outcome::insufficient_data);
}

TEST(P5, SustainedTriadPasses) {
  // Conditions hold from step 40 onward.
  std::vector<double> turnover, sa, re, mi;
  for (int i = 0; i < 9; ++i) {
    turnover.push_back(i >= 4 ? 0.05 : 0.3);
    sa.push_back(i < 4 ? 0.3 : 0.3 + 0.05 * (i - 3));
    re.push_back(i < 4 ? 0.5 - 0.01 * i : 0.5 + 0.04 * (i - 3));
    mi.push_back(i >= 4 ? 0.8 : 0.2);
  }
  const auto v = eval_p5(series_of("t", turnover), series_of("h", std::vector<double>(9, 1.0)), series_of("mi", mi),
                         series_of("sa", sa), series_of("re", re), ThresholdConfig{});
  EXPECT_EQ(v.outcome, Outcome::pass);
  EXPECT_EQ(v.evidence["mode"], "triad");
  EXPECT_GE(v.evidence["max_run_length"].get<int>(), 3);
  EXPECT_EQ(v.evidence["run_end_step"].get<std::int64_t>(), 80);
}

TEST(P5, AlternatingConditionsFail) {
  std::vector<double> turnover;
  for (int i = 0; i < 10; ++i) turnover.push_back(i % 2 ? 0.05 : 0.3);
  const auto v = eval_p5(series_of("t", turnover), MetricSeries{}, MetricSeries{}, series_of("sa", ramp(0.1, 0.9, 10)),
                         series_of("re", ramp(0.3, 0.9, 10)), ThresholdConfig{});
  EXPECT_EQ(v.outcome, Outcome::fail);
  EXPECT_LE(v.evidence["max_run_length"].get<int>(), 1);
}

TEST(P5, DenseModelDyadFlag) {
  const auto v = eval_p5(series_of("t", std::vector<double>(8, 0.02)), MetricSeries{}, MetricSeries{},
                         series_of("sa", ramp(0.1, 0.9, 8)), series_of("re", ramp(0.3, 0.9, 8)), ThresholdConfig{});
  EXPECT_EQ(v.outcome, Outcome::pass);
  EXPECT_EQ(v.evidence["mode"], "dyad");
  ASSERT_FALSE(v.flags.empty());
  EXPECT_NE(v.flags[0].find("dyad"), std::string::npos);
}

TEST(Predictions, NeverThrowOnPartialRuns) {
  SynthConfig cfg = default_config(Scenario::cost_free);
  auto records = generate_run(cfg).records;
  for (auto& r : records) {
    r.sae_features.reset();
    r.reversal_trials.reset();
    r.sa_score.reset();
    r.persona_state.reset();
  }
  const auto s = extract_series(records);
  EXPECT_NO_THROW(eval_p1(s.sa, s.re, s.pii, ThresholdConfig{}, kFastPerm));
  EXPECT_NO_THROW(eval_p2(s.cosine, s.re, ThresholdConfig{}));
  EXPECT_NO_THROW(eval_p3(reversal_checkpoints(records, 20), ThresholdConfig{}, kFastPerm));
  EXPECT_NO_THROW(eval_p5(s.turnover, s.routing_entropy, s.routing_mi, s.sa, s.re, ThresholdConfig{}));
  EXPECT_EQ(eval_p1(s.sa, s.re, s.pii, ThresholdConfig{}, kFastPerm).outcome, Outcome::insufficient_data);
  EXPECT_EQ(eval_p2(MetricSeries{}, MetricSeries{}, ThresholdConfig{}).outcome, Outcome::insufficient_data);
}

TEST(Predictions, SynthNoiselessOnsetRecovered) {
  for (auto sc : {Scenario::cost_free, Scenario::volatile_synergy, Scenario::uplift, Scenario::quantization_stress}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      SynthConfig cfg = default_config(sc);
      cfg.seed = seed;
      const auto run = generate_run(cfg);
      const auto s = extract_series(run.records);
      const auto v = eval_p2(s.cosine, s.re, ThresholdConfig{});
      ASSERT_EQ(v.outcome, Outcome::pass) << to_string(sc);
      const auto idx = v.evidence["onset_step"].get<std::int64_t>() / cfg.step_interval;
      EXPECT_LE(std::abs(idx - static_cast<std::int64_t>(*run.truth.onset_index)), 1) << to_string(sc);
    }
  }
}
