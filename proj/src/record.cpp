#include "lockin/record.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <tuple>

#include "lockin/errors.hpp"

namespace lockin {

using nlohmann::json;

namespace {

bool in_unit(double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; }

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

template <typename T>
T required(const json& j, const char* key) {
  if (!j.contains(key)) throw InputError(std::string("missing field ") + key);
  return j.at(key).get<T>();
}

void renormalize(std::vector<double>& dist) {
  const double sum = std::accumulate(dist.begin(), dist.end(), 0.0);
  const double off = std::abs(sum - 1.0);
  // Only near-miss sums are rescaled. The 1e-12 floor keeps an already
  // renormalized vector bit-stable across parse/serialize cycles.
  if (off > 1e-12 && off <= kRenormalizeTolerance && sum > 0.0) {
    for (double& p : dist) p /= sum;
  }
}

}  // namespace

std::vector<std::string> validate_record(const CheckpointRecord& r) {
  std::vector<std::string> out;
  if (r.run_id.empty()) out.push_back("run_id is empty");
  if (r.step < 0) out.push_back("step must be non-negative (got " + std::to_string(r.step) + ")");

  std::set<std::string> seen;
  for (const auto& probe : r.steer_probes) {
    if (!in_unit(probe.refusal_prob)) {
      out.push_back("refusal_prob out of [0,1] (steer " + probe.steer_id + ": " + fmt(probe.refusal_prob) + ")");
    }
    if (!seen.insert(probe.steer_id).second) out.push_back("duplicate steer_id " + probe.steer_id);
  }

  for (const auto& cluster : r.paraphrase_clusters) {
    const std::string tag = "cluster " + cluster.cluster_id + ": ";
    for (std::size_t i = 0; i < cluster.distributions.size(); ++i) {
      const auto& dist = cluster.distributions[i];
      const std::string which = tag + "distribution " + std::to_string(i);
      if (dist.size() != cluster.outcome_labels.size()) {
        out.push_back(which + " has " + std::to_string(dist.size()) + " entries for " +
                      std::to_string(cluster.outcome_labels.size()) + " outcome labels");
        continue;
      }
      bool bad_entry = false;
      for (double p : dist) bad_entry |= !std::isfinite(p) || p < 0.0;
      if (bad_entry) {
        out.push_back(which + " has a negative or non-finite entry");
        continue;
      }
      const double sum = std::accumulate(dist.begin(), dist.end(), 0.0);
      if (std::abs(sum - 1.0) > kRenormalizeTolerance) out.push_back(which + " sums to " + fmt(sum));
    }
  }

  if (r.persona_state) {
    const auto& ps = *r.persona_state;
    if (std::any_of(ps.mean_hidden_state.begin(), ps.mean_hidden_state.end(),
                    [](double v) { return !std::isfinite(v); })) {
      out.push_back("persona_state: mean_hidden_state has non-finite entries");
    }
    if (ps.persona_cosine &&
        !(std::isfinite(*ps.persona_cosine) && *ps.persona_cosine >= -1.0 && *ps.persona_cosine <= 1.0)) {
      out.push_back("persona_cosine out of [-1,1] (" + fmt(*ps.persona_cosine) + ")");
    }
  }

  for (const auto& [name, score] : r.capability_scores) {
    if (!in_unit(score)) out.push_back("capability_scores." + name + " out of [0,1] (" + fmt(score) + ")");
  }
  if (r.sa_score && !in_unit(*r.sa_score)) out.push_back("sa_score out of [0,1] (" + fmt(*r.sa_score) + ")");
  if (r.disclaimer_rate && !in_unit(*r.disclaimer_rate)) {
    out.push_back("disclaimer_rate out of [0,1] (" + fmt(*r.disclaimer_rate) + ")");
  }

  if (r.routing_trace) {
    const auto& rt = *r.routing_trace;
    bool shape_ok = rt.counts.size() == rt.input_classes.size();
    for (const auto& row : rt.counts) shape_ok &= row.size() == rt.experts.size();
    if (!shape_ok) {
      out.push_back("routing_trace: counts shape does not match input_classes x experts");
    } else {
      std::int64_t total = 0;
      bool negative = false;
      for (const auto& row : rt.counts) {
        for (auto c : row) {
          negative |= c < 0;
          total += c;
        }
      }
      if (negative) out.push_back("routing_trace: negative count");
      else if (total <= 0) out.push_back("empty routing trace");
    }
  }

  if (r.edit_trials) {
    for (std::size_t i = 0; i < r.edit_trials->size(); ++i) {
      const double n = (*r.edit_trials)[i].edit_norm;
      if (!std::isfinite(n) || n < 0.0) {
        out.push_back("edit_trials[" + std::to_string(i) + "]: edit_norm must be finite and non-negative");
      }
    }
  }
  if (r.reversal_trials) {
    for (std::size_t i = 0; i < r.reversal_trials->size(); ++i) {
      const auto& t = (*r.reversal_trials)[i];
      if (!std::isfinite(t.kl_cost) || t.kl_cost < 0.0) {
        out.push_back("reversal_trials[" + std::to_string(i) + "]: kl_cost must be finite and non-negative");
      }
      if (!std::isfinite(t.delta_capability)) {
        out.push_back("reversal_trials[" + std::to_string(i) + "]: delta_capability must be finite");
      }
    }
  }
  return out;
}

CheckpointRecord record_from_json(const json& j) {
  if (!j.is_object()) throw InputError("record is not a JSON object");
  CheckpointRecord r;
  try {
    r.run_id = required<std::string>(j, "run_id");
    r.step = required<std::int64_t>(j, "step");
    for (const auto& p : j.value("steer_probes", json::array())) {
      r.steer_probes.push_back({required<std::string>(p, "steer_id"), required<double>(p, "refusal_prob")});
    }
    for (const auto& c : j.value("paraphrase_clusters", json::array())) {
      ClusterDistribution cd;
      cd.cluster_id = required<std::string>(c, "cluster_id");
      cd.outcome_labels = required<std::vector<std::string>>(c, "outcome_labels");
      cd.distributions = required<std::vector<std::vector<double>>>(c, "distributions");
      for (auto& d : cd.distributions) renormalize(d);
      r.paraphrase_clusters.push_back(std::move(cd));
    }
    if (j.contains("persona_state") && !j["persona_state"].is_null()) {
      const auto& ps = j["persona_state"];
      PersonaObservation obs;
      obs.mean_hidden_state = required<std::vector<double>>(ps, "mean_hidden_state");
      if (ps.contains("persona_cosine") && !ps["persona_cosine"].is_null()) {
        obs.persona_cosine = ps["persona_cosine"].get<double>();
      }
      r.persona_state = std::move(obs);
    }
    if (j.contains("capability_scores")) {
      r.capability_scores = j["capability_scores"].get<std::map<std::string, double>>();
    }
    if (j.contains("sa_score") && !j["sa_score"].is_null()) r.sa_score = j["sa_score"].get<double>();
    if (j.contains("sae_features") && !j["sae_features"].is_null()) {
      const auto list = j["sae_features"].get<std::vector<std::string>>();
      r.sae_features = std::set<std::string>(list.begin(), list.end());
    }
    if (j.contains("routing_trace") && !j["routing_trace"].is_null()) {
      const auto& rt = j["routing_trace"];
      r.routing_trace = RoutingTrace{required<std::vector<std::string>>(rt, "input_classes"),
                                     required<std::vector<std::string>>(rt, "experts"),
                                     required<std::vector<std::vector<std::int64_t>>>(rt, "counts")};
    }
    if (j.contains("edit_trials") && !j["edit_trials"].is_null()) {
      std::vector<EditTrial> trials;
      for (const auto& t : j["edit_trials"]) {
        trials.push_back({required<std::string>(t, "stance_id"), required<double>(t, "edit_norm"),
                          required<bool>(t, "flipped")});
      }
      r.edit_trials = std::move(trials);
    }
    if (j.contains("reversal_trials") && !j["reversal_trials"].is_null()) {
      std::vector<ReversalTrial> trials;
      for (const auto& t : j["reversal_trials"]) {
        trials.push_back({required<double>(t, "kl_cost"), required<bool>(t, "reversed"),
                          required<double>(t, "delta_capability")});
      }
      r.reversal_trials = std::move(trials);
    }
    if (j.contains("disclaimer_rate") && !j["disclaimer_rate"].is_null()) {
      r.disclaimer_rate = j["disclaimer_rate"].get<double>();
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed record: ") + e.what());
  }
  return r;
}

json record_to_json(const CheckpointRecord& r) {
  json j;
  j["run_id"] = r.run_id;
  j["step"] = r.step;
  j["steer_probes"] = json::array();
  for (const auto& p : r.steer_probes) {
    j["steer_probes"].push_back({{"steer_id", p.steer_id}, {"refusal_prob", p.refusal_prob}});
  }
  j["paraphrase_clusters"] = json::array();
  for (const auto& c : r.paraphrase_clusters) {
    j["paraphrase_clusters"].push_back(
        {{"cluster_id", c.cluster_id}, {"outcome_labels", c.outcome_labels}, {"distributions", c.distributions}});
  }
  if (r.persona_state) {
    json ps = {{"mean_hidden_state", r.persona_state->mean_hidden_state}};
    if (r.persona_state->persona_cosine) ps["persona_cosine"] = *r.persona_state->persona_cosine;
    j["persona_state"] = std::move(ps);
  }
  j["capability_scores"] = r.capability_scores;
  if (r.sa_score) j["sa_score"] = *r.sa_score;
  if (r.sae_features) j["sae_features"] = std::vector<std::string>(r.sae_features->begin(), r.sae_features->end());
  if (r.routing_trace) {
    j["routing_trace"] = {{"input_classes", r.routing_trace->input_classes},
                          {"experts", r.routing_trace->experts},
                          {"counts", r.routing_trace->counts}};
  }
  if (r.edit_trials) {
    j["edit_trials"] = json::array();
    for (const auto& t : *r.edit_trials) {
      j["edit_trials"].push_back({{"stance_id", t.stance_id}, {"edit_norm", t.edit_norm}, {"flipped", t.flipped}});
    }
  }
  if (r.reversal_trials) {
    j["reversal_trials"] = json::array();
    for (const auto& t : *r.reversal_trials) {
      j["reversal_trials"].push_back(
          {{"kl_cost", t.kl_cost}, {"reversed", t.reversed}, {"delta_capability", t.delta_capability}});
    }
  }
  if (r.disclaimer_rate) j["disclaimer_rate"] = *r.disclaimer_rate;
  return j;
}

std::vector<CheckpointRecord> parse_run(std::istream& in) {
  std::vector<CheckpointRecord> records;
  std::vector<std::size_t> line_of;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw InputError(std::string("malformed JSON: ") + e.what(), line_no);
    }
    CheckpointRecord r;
    try {
      r = record_from_json(j);
    } catch (const InputError& e) {
      throw InputError(e.what(), line_no);
    }
    if (auto violations = validate_record(r); !violations.empty()) {
      std::string msg = violations.front();
      for (std::size_t i = 1; i < violations.size(); ++i) msg += "; " + violations[i];
      throw InputError(msg, line_no);
    }
    records.push_back(std::move(r));
    line_of.push_back(line_no);
  }

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::tie(records[a].run_id, records[a].step) < std::tie(records[b].run_id, records[b].step);
  });
  for (std::size_t i = 1; i < order.size(); ++i) {
    const auto& prev = records[order[i - 1]];
    const auto& cur = records[order[i]];
    if (prev.run_id == cur.run_id && prev.step == cur.step) {
      const std::size_t later = std::max(line_of[order[i - 1]], line_of[order[i]]);
      throw InputError("duplicate step " + std::to_string(cur.step) + " in run " + cur.run_id, later);
    }
  }
  std::vector<CheckpointRecord> sorted;
  sorted.reserve(records.size());
  for (auto idx : order) sorted.push_back(std::move(records[idx]));
  return sorted;
}

ValidationReport validate_stream(std::istream& in) {
  ValidationReport out;
  std::map<std::pair<std::string, std::int64_t>, std::size_t> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto report = [&](const std::string& msg) { out.problems.push_back(InputError(msg, line_no).what()); };
    CheckpointRecord r;
    try {
      r = record_from_json(json::parse(line));
    } catch (const json::parse_error& e) {
      report(std::string("malformed JSON: ") + e.what());
      continue;
    } catch (const InputError& e) {
      report(e.what());
      continue;
    }
    const auto violations = validate_record(r);
    for (const auto& v : violations) report(v);
    if (!violations.empty()) continue;
    if (auto [it, fresh] = seen.emplace(std::make_pair(r.run_id, r.step), line_no); !fresh) {
      report("duplicate step " + std::to_string(r.step) + " in run " + r.run_id + " (first at line " +
             std::to_string(it->second) + ")");
      continue;
    }
    ++out.records;
  }
  return out;
}

std::vector<CheckpointRecord> parse_run_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  return parse_run(in);
}

void serialize_run(std::ostream& out, const std::vector<CheckpointRecord>& records) {
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

std::vector<std::vector<CheckpointRecord>> split_runs(const std::vector<CheckpointRecord>& records) {
  std::map<std::string, std::vector<CheckpointRecord>> by_run;
  for (const auto& r : records) by_run[r.run_id].push_back(r);
  std::vector<std::vector<CheckpointRecord>> runs;
  for (auto& [id, rs] : by_run) {
    std::stable_sort(rs.begin(), rs.end(), [](const auto& a, const auto& b) { return a.step < b.step; });
    runs.push_back(std::move(rs));
  }
  return runs;
}

std::map<std::string, RunManifestEntry> parse_manifest(const json& j) {
  const json& runs = j.contains("runs") ? j.at("runs") : j;
  if (!runs.is_object()) throw InputError("manifest must map run_id to an entry object");
  std::map<std::string, RunManifestEntry> out;
  try {
    for (const auto& [id, e] : runs.items()) {
      RunManifestEntry entry;
      entry.model_name = e.value("model_name", id);
      entry.precision = e.value("precision", std::string{});
      entry.checkpoint_count = e.value("checkpoint_count", std::int64_t{0});
      if (e.contains("persona_direction")) entry.persona_direction = e["persona_direction"].get<std::vector<double>>();
      out.emplace(id, std::move(entry));
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed manifest: ") + e.what());
  }
  return out;
}

std::map<std::string, RunManifestEntry> parse_manifest_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  try {
    return parse_manifest(json::parse(in));
  } catch (const json::parse_error& e) {
    throw InputError(std::string("malformed manifest JSON: ") + e.what());
  }
}

}  // namespace lockin
