#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "../oracles.hpp"
#include "lockin/errors.hpp"
#include "lockin/metrics.hpp"

using namespace lockin;

TEST(RefusalElasticity, Examples) {
  EXPECT_NEAR(refusal_elasticity(std::vector<double>{0.5, 0.5, 0.5}), 1.0, 1e-12);
  EXPECT_NEAR(refusal_elasticity(std::vector<double>{0, 0, 1, 1}), 0.0, 1e-12);
  EXPECT_NEAR(refusal_elasticity(std::vector<double>{0.2, 0.4, 0.6, 0.8}), 0.6, 1e-12);
}

TEST(RefusalElasticity, EmptyThrows) {
  EXPECT_THROW(refusal_elasticity(std::vector<double>{}), InsufficientData);
  EXPECT_THROW(refusal_elasticity(std::vector<SteerProbe>{}), InsufficientData);
}

TEST(RefusalElasticity, ProbeOverloadMatches) {
  EXPECT_NEAR(refusal_elasticity(std::vector<SteerProbe>{{"a", 0.2}, {"b", 0.8}}), 0.4, 1e-12);
}

TEST(RefusalElasticity, OneOnlyWhenAllEqual) {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> p = {u(gen), u(gen), u(gen)};
    EXPECT_LT(refusal_elasticity(p), 1.0);
  }
}

TEST(Jsd, Examples) {
  EXPECT_NEAR(jsd({{0.3, 0.7}, {0.3, 0.7}}), 0.0, 1e-12);
  EXPECT_NEAR(jsd({{1, 0}, {0, 1}}), 1.0, 1e-12);
  EXPECT_NEAR(jsd({{0.5, 0.5}, {1, 0}}), 0.3112781244591328, 1e-6);
}

TEST(Jsd, Errors) {
  EXPECT_THROW(jsd({{0.5, 0.5}}), std::invalid_argument);
  EXPECT_THROW(jsd({{0.5, 0.5}, {1.0}}), std::invalid_argument);
}

TEST(Jsd, MatchesOracleAndProperties) {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 2000; ++t) {
    const std::size_t m = 2 + gen() % 4, k = 2 + gen() % 5;
    std::vector<std::vector<double>> ps(m, std::vector<double>(k));
    for (auto& p : ps) {
      double s = 0;
      for (auto& v : p) s += v = (gen() % 4 == 0) ? 0.0 : u(gen);
      if (s == 0) p[0] = s = 1;
      for (auto& v : p) v /= s;
    }
    const double d = jsd(ps);
    EXPECT_NEAR(d, oracle::jsd_bits(ps), 1e-12);
    EXPECT_GE(d, -1e-15);
    EXPECT_LE(d, std::log2(static_cast<double>(m)) + 1e-12);
    // Relabelling the outcomes leaves the divergence unchanged.
    auto rotated = ps;
    for (auto& p : rotated) std::rotate(p.begin(), p.begin() + 1, p.end());
    EXPECT_NEAR(jsd(rotated), d, 1e-12);
  }
}

TEST(Pii, Examples) {
  EXPECT_NEAR(prompt_invariance_index({{"a", {"x", "y"}, {{0.2, 0.8}, {0.2, 0.8}}}}), 0.0, 1e-12);
  EXPECT_NEAR(prompt_invariance_index({{"a", {"x", "y"}, {{1, 0}, {0, 1}}}}), 1.0, 1e-12);
}

TEST(Pii, MeanOfClusters) {
  // Two clusters of two distributions whose JSDs are 0.2 and 0.4 bits.
  auto cluster_with = [](const std::string& id, double target) {
    double lo = 0, hi = 0.5;
    for (int i = 0; i < 200; ++i) {
      const double mid = (lo + hi) / 2;
      (jsd({{0.5 + mid, 0.5 - mid}, {0.5 - mid, 0.5 + mid}}) < target ? lo : hi) = mid;
    }
    return ClusterDistribution{id, {"x", "y"}, {{0.5 + lo, 0.5 - lo}, {0.5 - lo, 0.5 + lo}}};
  };
  EXPECT_NEAR(prompt_invariance_index({cluster_with("a", 0.2), cluster_with("b", 0.4)}), 0.3, 1e-9);
}

TEST(Pii, NormalizationByClusterSize) {
  const ClusterDistribution c{"a", {"x", "y", "z"}, {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  EXPECT_NEAR(prompt_invariance_index({c}, false), std::log2(3.0), 1e-12);
  EXPECT_NEAR(prompt_invariance_index({c}, true), 1.0, 1e-12);
}

TEST(Pii, SkipsSingletonClustersAndThrowsWhenNoneLeft) {
  const ClusterDistribution single{"s", {"x", "y"}, {{1, 0}}};
  const ClusterDistribution pair{"p", {"x", "y"}, {{1, 0}, {0, 1}}};
  EXPECT_NEAR(prompt_invariance_index({single, pair}), 1.0, 1e-12);
  try {
    prompt_invariance_index({single});
    FAIL();
  } catch (const InsufficientData& e) {
    EXPECT_NE(std::string(e.what()).find("insufficient data"), std::string::npos);
  }
}

TEST(Pii, DuplicateDistributionKeepsBound) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.01, 1);
  for (int t = 0; t < 500; ++t) {
    std::vector<std::vector<double>> ps(2 + gen() % 3, std::vector<double>(3));
    for (auto& p : ps) {
      double s = 0;
      for (auto& v : p) s += v = u(gen);
      for (auto& v : p) v /= s;
    }
    ClusterDistribution c{"c", {"x", "y", "z"}, ps};
    const double before = prompt_invariance_index({c});
    c.distributions.push_back(ps.front());
    const double after = prompt_invariance_index({c});
    EXPECT_GE(before, 0.0);
    EXPECT_LE(before, 1.0);
    EXPECT_LE(after, 1.0);
  }
}

TEST(Apr, Examples) {
  auto r = adversarial_persona_robustness({{"s", 2.0, true}, {"s", 1.0, false}});
  EXPECT_DOUBLE_EQ(r.per_stance.at("s"), 2.0);
  EXPECT_FALSE(r.censored);
  EXPECT_DOUBLE_EQ(*r.aggregate, 2.0);

  r = adversarial_persona_robustness({{"s", 2.0, false}});
  EXPECT_TRUE(std::isinf(r.per_stance.at("s")));
  EXPECT_TRUE(r.censored);
  EXPECT_FALSE(r.aggregate.has_value());

  r = adversarial_persona_robustness({{"a", 1.0, true}, {"b", 3.0, true}, {"c", 5.0, true}, {"d", 0.5, false}});
  EXPECT_DOUBLE_EQ(*r.aggregate, 3.0);
  EXPECT_TRUE(r.censored);
  EXPECT_EQ(r.censored_stances, std::vector<std::string>{"d"});
}

TEST(Apr, EmptyThrows) { EXPECT_THROW(adversarial_persona_robustness({}), InsufficientData); }

TEST(PersonaDirection, Examples) {
  auto d = persona_direction({{1, 0}}, {{0, 0}});
  EXPECT_NEAR(d[0], 1.0, 1e-15);
  EXPECT_NEAR(d[1], 0.0, 1e-15);
  d = persona_direction({{1, 1}, {1, 1}}, {{0, 0}});
  EXPECT_NEAR(d[0], 1 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(d[1], 1 / std::sqrt(2.0), 1e-15);
  try {
    persona_direction({{1, 2}}, {{1, 2}});
    FAIL();
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("degenerate persona direction"), std::string::npos);
  }
  EXPECT_THROW(persona_direction({}, {{1.0}}), std::invalid_argument);
  EXPECT_THROW(persona_direction({{1.0, 2.0}}, {{1.0}}), std::invalid_argument);
}

TEST(PersonaCosine, Examples) {
  const std::vector<double> d = {0.6, 0.8};
  EXPECT_NEAR(persona_cosine(d, d), 1.0, 1e-15);
  EXPECT_NEAR(persona_cosine(std::vector<double>{-0.8, 0.6}, d), 0.0, 1e-15);
  EXPECT_NEAR(persona_cosine(std::vector<double>{3.0, 4.0}, d), 1.0, 1e-15);
  EXPECT_THROW(persona_cosine(std::vector<double>{0.0, 0.0}, d), std::invalid_argument);
}

TEST(PersonaCosine, ScaleInvariant) {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> n(0, 1);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> s(8), d(8);
    for (auto& v : s) v = n(gen);
    for (auto& v : d) v = n(gen);
    const double c = persona_cosine(s, d);
    const double alpha = std::exp(n(gen) * 3);
    for (auto& v : s) v *= alpha;
    EXPECT_NEAR(persona_cosine(s, d), c, 1e-12);
    EXPECT_LE(std::abs(c), 1.0);
  }
}

TEST(Turnover, Examples) {
  EXPECT_DOUBLE_EQ(sae_feature_turnover({"a", "b"}, {"a", "b"}), 0.0);
  EXPECT_DOUBLE_EQ(sae_feature_turnover({"a", "b"}, {"c"}), 1.0);
  EXPECT_DOUBLE_EQ(sae_feature_turnover({"a", "b", "c", "d"}, {"a", "b", "e", "f"}), 0.5);
  try {
    sae_feature_turnover({}, {"a"});
    FAIL();
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("no baseline features"), std::string::npos);
  }
}

namespace {

RoutingTrace trace(std::vector<std::vector<std::int64_t>> counts) {
  RoutingTrace t;
  for (std::size_t c = 0; c < counts.size(); ++c) t.input_classes.push_back("c" + std::to_string(c));
  for (std::size_t e = 0; e < counts.front().size(); ++e) t.experts.push_back("e" + std::to_string(e));
  t.counts = std::move(counts);
  return t;
}

}  // namespace

TEST(Routing, EntropyExamples) {
  EXPECT_NEAR(routing_entropy(trace({{1, 1, 1, 1, 1, 1, 1, 1}})), 3.0, 1e-12);
  EXPECT_NEAR(routing_entropy(trace({{0, 7}, {0, 3}})), 0.0, 1e-12);
  EXPECT_NEAR(routing_entropy(trace({{3, 2, 0, 0}, {2, 3, 0, 0}})), 1.0, 1e-12);
  EXPECT_THROW(routing_entropy(trace({{0, 0}})), InsufficientData);
}

TEST(Routing, MiExamples) {
  EXPECT_NEAR(expert_input_mi(trace({{10, 0}, {0, 10}})), 1.0, 1e-12);
  EXPECT_EQ(expert_input_mi(trace({{4, 4}, {4, 4}})), 0.0);
  EXPECT_NEAR(expert_input_mi(trace({{9, 1}, {1, 9}})), 0.531, 5e-4);
  EXPECT_NEAR(expert_input_mi(trace({{9, 1}, {1, 9}})), oracle::mutual_information({{9, 1}, {1, 9}}), 1e-12);
  EXPECT_THROW(expert_input_mi(trace({{0, 0}, {0, 0}})), InsufficientData);
}

TEST(Routing, OuterProductGivesExactZero) {
  std::mt19937_64 gen(6);
  for (int t = 0; t < 1000; ++t) {
    std::vector<std::int64_t> a(1 + gen() % 5), b(1 + gen() % 6);
    for (auto& v : a) v = static_cast<std::int64_t>(gen() % 50);
    for (auto& v : b) v = static_cast<std::int64_t>(gen() % 50);
    a[0] += 1;
    b[0] += 1;
    std::vector<std::vector<std::int64_t>> c(a.size(), std::vector<std::int64_t>(b.size()));
    for (std::size_t i = 0; i < a.size(); ++i) {
      for (std::size_t j = 0; j < b.size(); ++j) c[i][j] = a[i] * b[j];
    }
    EXPECT_EQ(expert_input_mi(trace(c)), 0.0);
  }
}

TEST(Routing, MiBoundsAndOracle) {
  std::mt19937_64 gen(7);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t rows = 1 + gen() % 5, cols = 1 + gen() % 6;
    std::vector<std::vector<std::int64_t>> c(rows, std::vector<std::int64_t>(cols));
    std::vector<std::vector<double>> cd(rows, std::vector<double>(cols));
    std::vector<double> row_sum(rows, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) {
        c[i][j] = (gen() % 3 == 0) ? 0 : static_cast<std::int64_t>(gen() % 100);
        cd[i][j] = static_cast<double>(c[i][j]);
        row_sum[i] += cd[i][j];
      }
    }
    c[0][0] += 1;
    cd[0][0] += 1;
    row_sum[0] += 1;
    const auto tr = trace(c);
    const double mi = expert_input_mi(tr);
    const double h_expert = routing_entropy(tr);
    const double h_class = entropy_bits(row_sum);
    EXPECT_GE(mi, 0.0);
    EXPECT_LE(mi, std::min(h_class, h_expert) + 1e-12);
    EXPECT_LE(h_expert, std::log2(static_cast<double>(cols)) + 1e-12);
    EXPECT_NEAR(mi, oracle::mutual_information(cd), 1e-10);
  }
}

TEST(Inertia, Examples) {
  auto r = adherence_inertia({{0.5, true, 0}, {0.2, false, 0}});
  EXPECT_DOUBLE_EQ(r.value, 0.5);
  EXPECT_FALSE(r.censored);
  r = adherence_inertia({{0.2, false, 0}, {0.5, false, 0}});
  EXPECT_DOUBLE_EQ(r.value, 0.5);
  EXPECT_TRUE(r.censored);
  r = adherence_inertia({{0.0, true, 0}});
  EXPECT_DOUBLE_EQ(r.value, 0.0);
  EXPECT_THROW(adherence_inertia({}), InsufficientData);
}

TEST(Entropy, ZeroLogZero) {
  EXPECT_NEAR(entropy_bits(std::vector<double>{0.5, 0.5, 0.0}), 1.0, 1e-15);
  EXPECT_NEAR(entropy_bits(std::vector<double>{2.0, 2.0}), 1.0, 1e-15);  // unnormalized input
}
