#include "lockin/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include "lockin/errors.hpp"

namespace lockin {

using nlohmann::json;

void validate_config(const Config& cfg) {
  const auto& t = cfg.thresholds;
  const auto& a = cfg.analysis;
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("config: ") + what);
  };
  require(t.tau_re >= 0.0 && t.tau_re <= 1.0, "tau_re must lie in [0,1]");
  require(t.tau_pii >= 0.0 && t.tau_pii <= 1.0, "tau_pii must lie in [0,1]");
  require(t.p1_alpha > 0.0 && t.p1_alpha <= 1.0, "p1_alpha must lie in (0,1]");
  require(t.p2_delta >= 0.0, "p2_delta must be non-negative");
  require(t.p3_alpha > 0.0 && t.p3_alpha <= 1.0, "p3_alpha must lie in (0,1]");
  require(t.p4_retention >= 0.0, "p4_retention must be non-negative");
  require(t.p5_tau_turnover >= 0.0 && t.p5_tau_turnover <= 1.0, "p5_tau_turnover must lie in [0,1]");
  require(t.p5_tau_mi >= 0.0, "p5_tau_mi must be non-negative");
  require(t.p5_k_consecutive >= 1, "p5_k_consecutive must be >= 1");
  require(t.tau_instability > 0.0, "tau_instability must be positive");
  require(a.n_perm >= 0, "n_perm must be non-negative");
  require(a.trend_window >= 1 && a.trend_window % 2 == 1, "trend_window must be odd and >= 1");
  require(a.cosine_variance_window >= 2, "cosine_variance_window must be >= 2");
  require(a.cosine_collapse_fraction > 0.0 && a.cosine_collapse_fraction <= 1.0,
          "cosine_collapse_fraction must lie in (0,1]");
  require(a.min_seg_len >= 1, "min_seg_len must be >= 1");
  require(!a.capability_metric.empty(), "capability_metric must be non-empty");
}

namespace {

template <typename T>
bool take(const json& j, const char* key, T& field) {
  if (!j.contains(key)) return false;
  field = j.at(key).get<T>();
  return true;
}

std::size_t merge_thresholds(ThresholdConfig& t, const json& j) {
  std::size_t used = 0;
  used += take(j, "tau_re", t.tau_re);
  used += take(j, "tau_pii", t.tau_pii);
  used += take(j, "p1_alpha", t.p1_alpha);
  used += take(j, "p2_delta", t.p2_delta);
  used += take(j, "p3_alpha", t.p3_alpha);
  used += take(j, "p4_retention", t.p4_retention);
  used += take(j, "p5_tau_turnover", t.p5_tau_turnover);
  used += take(j, "p5_tau_mi", t.p5_tau_mi);
  used += take(j, "p5_k_consecutive", t.p5_k_consecutive);
  used += take(j, "tau_instability", t.tau_instability);
  return used;
}

std::size_t merge_analysis(AnalysisConfig& a, const json& j) {
  std::size_t used = 0;
  used += take(j, "capability_metric", a.capability_metric);
  used += take(j, "mask_below", a.mask_below);
  used += take(j, "n_perm", a.n_perm);
  used += take(j, "seed", a.seed);
  used += take(j, "trend_window", a.trend_window);
  used += take(j, "cosine_variance_window", a.cosine_variance_window);
  used += take(j, "cosine_collapse_fraction", a.cosine_collapse_fraction);
  used += take(j, "min_seg_len", a.min_seg_len);
  used += take(j, "pelt_penalty", a.pelt_penalty);
  used += take(j, "normalize_pii", a.normalize_pii);
  return used;
}

const std::set<std::string> kThresholdKeys = {"tau_re",       "tau_pii",         "p1_alpha",  "p2_delta",
                                              "p3_alpha",     "p4_retention",    "p5_tau_turnover",
                                              "p5_tau_mi",    "p5_k_consecutive", "tau_instability"};
const std::set<std::string> kAnalysisKeys = {"capability_metric", "mask_below",   "n_perm",
                                             "seed",              "trend_window", "cosine_variance_window",
                                             "cosine_collapse_fraction", "min_seg_len", "pelt_penalty",
                                             "normalize_pii"};

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw InputError("config: unknown key \"" + key + "\" " + where);
  }
}

}  // namespace

Config merge_config(Config base, const json& j) {
  if (!j.is_object()) throw InputError("config must be a JSON object");
  try {
    std::size_t used = 0;
    if (j.contains("thresholds")) {
      reject_unknown(j["thresholds"], kThresholdKeys, "under \"thresholds\"");
      merge_thresholds(base.thresholds, j["thresholds"]);
      ++used;
    }
    if (j.contains("analysis")) {
      reject_unknown(j["analysis"], kAnalysisKeys, "under \"analysis\"");
      merge_analysis(base.analysis, j["analysis"]);
      ++used;
    }
    used += merge_thresholds(base.thresholds, j);
    used += merge_analysis(base.analysis, j);
    if (j.contains("version")) ++used;
    if (used != j.size()) {
      std::set<std::string> known = {"thresholds", "analysis", "version"};
      known.insert(kThresholdKeys.begin(), kThresholdKeys.end());
      known.insert(kAnalysisKeys.begin(), kAnalysisKeys.end());
      reject_unknown(j, known, "at top level");
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed config: ") + e.what());
  }
  validate_config(base);
  return base;
}

Config load_config_file(const std::string& path, Config base) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("malformed config JSON: ") + e.what());
  }
  return merge_config(std::move(base), j);
}

json config_to_json(const Config& cfg) {
  const auto& t = cfg.thresholds;
  const auto& a = cfg.analysis;
  return {
      {"thresholds",
       {{"tau_re", t.tau_re},
        {"tau_pii", t.tau_pii},
        {"p1_alpha", t.p1_alpha},
        {"p2_delta", t.p2_delta},
        {"p3_alpha", t.p3_alpha},
        {"p4_retention", t.p4_retention},
        {"p5_tau_turnover", t.p5_tau_turnover},
        {"p5_tau_mi", t.p5_tau_mi},
        {"p5_k_consecutive", t.p5_k_consecutive},
        {"tau_instability", t.tau_instability}}},
      {"analysis",
       {{"capability_metric", a.capability_metric},
        {"mask_below", a.mask_below},
        {"n_perm", a.n_perm},
        {"seed", a.seed},
        {"trend_window", a.trend_window},
        {"cosine_variance_window", a.cosine_variance_window},
        {"cosine_collapse_fraction", a.cosine_collapse_fraction},
        {"min_seg_len", a.min_seg_len},
        {"pelt_penalty", a.pelt_penalty},
        {"normalize_pii", a.normalize_pii}}},
  };
}

}  // namespace lockin
