#pragma once

// File formats: trace CSV input, JSON models and experiment files, JSON
// results and CSV tables. Number formatting is locale-independent.

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "cac/admission.hpp"
#include "cac/error.hpp"
#include "cac/load_models.hpp"
#include "cac/scheduling.hpp"
#include "cac/simulation.hpp"
#include "cac/tail_estimators.hpp"

namespace cac {

using json = nlohmann::json;

/// Shortest round-trip decimal form, always with '.' as separator.
inline std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_number(std::string_view text, std::string_view what) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size() || text.empty())
    throw config_error("malformed number in " + std::string(what) + ": '" + std::string(text) + "'");
  return v;
}

// ---------------------------------------------------------------- traces

/// Reads `timestamp_s,power_w` rows. The sample period is the mean spacing of
/// the timestamps (1 s for a single row).
inline TraceSeries read_trace_csv(std::istream& in, std::string_view source = "trace") {
  std::string line;
  if (!std::getline(in, line)) throw config_error(std::string(source) + ": missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  if (line != "timestamp_s,power_w") throw config_error(std::string(source) + ": header must be 'timestamp_s,power_w'");
  TraceSeries trace;
  std::vector<double> stamps;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos)
      throw config_error(std::string(source) + ": row " + std::to_string(row) + " must have two columns");
    const std::string_view view(line);
    stamps.push_back(parse_number(view.substr(0, comma), source));
    trace.samples.push_back(parse_number(view.substr(comma + 1), source));
    if (stamps.size() > 1 && !(stamps.back() > stamps[stamps.size() - 2]))
      throw config_error(std::string(source) + ": timestamps must increase");
  }
  if (stamps.size() > 1) trace.sample_period = (stamps.back() - stamps.front()) / double(stamps.size() - 1);
  validate(trace);
  return trace;
}

inline TraceSeries read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open trace file '" + path.string() + "'");
  return read_trace_csv(in, path.string());
}

// ---------------------------------------------------------------- JSON helpers

namespace detail {

inline void reject_unknown(const json& obj, std::initializer_list<std::string_view> allowed, std::string_view where) {
  if (!obj.is_object()) throw config_error(std::string(where) + " must be an object");
  for (const auto& item : obj.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || item.key() == a;
    if (!ok) throw config_error("unknown key '" + item.key() + "' in " + std::string(where));
  }
}

template <class T>
T get(const json& obj, const char* key, std::string_view where) {
  if (!obj.contains(key)) throw config_error("missing key '" + std::string(key) + "' in " + std::string(where));
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw config_error("key '" + std::string(key) + "' in " + std::string(where) + " has the wrong type");
  }
}

template <class T>
T get_or(const json& obj, const char* key, T fallback, std::string_view where) {
  return obj.contains(key) ? get<T>(obj, key, where) : fallback;
}

template <class T>
std::optional<T> get_opt(const json& obj, const char* key, std::string_view where) {
  if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
  return get<T>(obj, key, where);
}

inline json duration_to_json(const DurationPmf& pmf) {
  json out = json::object();
  for (const auto& [d, p] : pmf.probabilities()) out[std::to_string(d)] = p;
  return out;
}

inline DurationPmf duration_from_json(const json& j, std::string_view where) {
  if (!j.is_object()) throw config_error(std::string(where) + " must map durations to probabilities");
  std::map<int, double> probs;
  for (const auto& item : j.items()) {
    int d = 0;
    const auto& key = item.key();
    const auto res = std::from_chars(key.data(), key.data() + key.size(), d);
    if (res.ec != std::errc() || res.ptr != key.data() + key.size())
      throw config_error(std::string(where) + ": duration '" + key + "' is not an integer");
    if (!item.value().is_number()) throw config_error(std::string(where) + ": probabilities must be numbers");
    probs[d] = item.value().get<double>();
  }
  return DurationPmf(std::move(probs));
}

}  // namespace detail

// ---------------------------------------------------------------- models

inline json model_to_json(const LoadModel& model) {
  json out;
  out["family"] = std::string(family_name(family_of(model)));
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, Bernoulli>) {
          out["p_on"] = m.p_on;
        } else if constexpr (std::is_same_v<T, TwoStateMarkov>) {
          out["p_off_to_on"] = m.p_off_to_on;
          out["p_on_to_off"] = m.p_on_to_off;
        } else {
          out["on_durations"] = detail::duration_to_json(m.on_durations);
          out["off_durations"] = detail::duration_to_json(m.off_durations);
        }
      },
      model);
  return out;
}

/// Parses a model object. `extra` lists sibling keys tolerated alongside the
/// family fields (for example `on_power` in a fitted-model file).
inline LoadModel model_from_json(const json& j, std::initializer_list<std::string_view> extra = {}) {
  constexpr std::string_view where = "model";
  const auto family = parse_family(detail::get<std::string>(j, "family", where));
  std::vector<std::string_view> allowed{"family"};
  switch (family) {
    case ModelFamily::Bernoulli: allowed.push_back("p_on"); break;
    case ModelFamily::TwoStateMarkov:
      allowed.push_back("p_off_to_on");
      allowed.push_back("p_on_to_off");
      break;
    case ModelFamily::AlternatingRenewal:
      allowed.push_back("on_durations");
      allowed.push_back("off_durations");
      break;
  }
  allowed.insert(allowed.end(), extra.begin(), extra.end());
  for (const auto& item : j.items())
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end())
      throw config_error("unknown key '" + item.key() + "' in model");

  LoadModel model;
  switch (family) {
    case ModelFamily::Bernoulli: model = Bernoulli{detail::get<double>(j, "p_on", where)}; break;
    case ModelFamily::TwoStateMarkov:
      model = TwoStateMarkov{detail::get<double>(j, "p_off_to_on", where), detail::get<double>(j, "p_on_to_off", where)};
      break;
    case ModelFamily::AlternatingRenewal:
      if (!j.contains("on_durations") || !j.contains("off_durations"))
        throw config_error("renewal model needs on_durations and off_durations");
      model = AlternatingRenewal{detail::duration_from_json(j.at("on_durations"), "on_durations"),
                                 detail::duration_from_json(j.at("off_durations"), "off_durations")};
      break;
  }
  validate(model);
  return model;
}

/// Model file: the model fields plus `on_power`.
inline json fitted_to_json(const FittedModel& f) {
  json out = model_to_json(f.model);
  out["on_power"] = f.on_power;
  return out;
}

inline FittedModel fitted_from_json(const json& j) {
  FittedModel f{model_from_json(j, {"on_power"}), detail::get<double>(j, "on_power", "model file")};
  return f;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw config_error("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw io_error("failed writing '" + path.string() + "'");
}

// ---------------------------------------------------------------- experiments

struct ExperimentOutputs {
  std::optional<std::string> result_json;
  std::optional<std::string> series_csv;
  std::optional<std::string> slots_csv;
  std::optional<std::string> sweep_csv;
};

struct ExperimentFile {
  std::string name;
  SimConfig config;
  std::vector<double> p_values;  // non-empty turns the run into a sweep
  ExperimentOutputs outputs;
};

namespace detail {

inline ApplianceClass class_from_json(const json& j, const std::filesystem::path& base_dir) {
  reject_unknown(j, {"name", "on_power", "model", "model_file", "trace", "shiftable", "deterministic", "count"}, "class");
  ApplianceClass c;
  c.name = get<std::string>(j, "name", "class");
  const std::string where = "class '" + c.name + "'";
  c.shiftable = get_or<bool>(j, "shiftable", true, where);
  c.deterministic = get_or<bool>(j, "deterministic", false, where);
  c.count = get<int>(j, "count", where);
  const int sources = int(j.contains("model")) + int(j.contains("model_file")) + int(j.contains("trace"));
  if (sources > 1) throw config_error(where + ": give only one of model, model_file, trace");

  std::optional<double> fitted_power;
  if (j.contains("model")) {
    c.model = model_from_json(j.at("model"));
  } else if (j.contains("model_file")) {
    const auto f = fitted_from_json(read_json_file(base_dir / get<std::string>(j, "model_file", where)));
    c.model = f.model;
    fitted_power = f.on_power;
  } else if (j.contains("trace")) {
    const auto& t = j.at("trace");
    reject_unknown(t, {"path", "threshold", "family", "pooling"}, where + " trace");
    const auto path = base_dir / get<std::string>(t, "path", where);
    if (!std::filesystem::exists(path)) throw io_error(where + ": trace file '" + path.string() + "' does not exist");
    const auto trace = resample_mean(read_trace_csv(path), get_or<std::size_t>(t, "pooling", 1, where));
    const auto f = fit_model(trace, get<double>(t, "threshold", where), parse_family(get<std::string>(t, "family", where)));
    c.model = f.model;
    fitted_power = f.on_power;
  } else if (!c.deterministic) {
    throw config_error(where + ": a stochastic class needs model, model_file or trace");
  }
  if (j.contains("on_power"))
    c.on_power = get<double>(j, "on_power", where);
  else if (fitted_power)
    c.on_power = *fitted_power;
  else
    throw config_error(where + ": missing key 'on_power'");
  validate(c);
  return c;
}

inline QosPolicy policy_from_json(const json& j) {
  reject_unknown(j, {"c_max", "p", "c_min", "r", "c_sys"}, "policy");
  QosPolicy q;
  q.c_max = get<double>(j, "c_max", "policy");
  q.p = get<double>(j, "p", "policy");
  q.c_min = get_opt<double>(j, "c_min", "policy");
  q.r = get_opt<double>(j, "r", "policy");
  q.c_sys = get_opt<double>(j, "c_sys", "policy");
  validate(q);
  return q;
}

}  // namespace detail

/// Parses an experiment document. Relative model and trace paths resolve
/// against `base_dir`; referenced files must exist now.
inline ExperimentFile parse_experiment(const json& j, const std::filesystem::path& base_dir = ".") {
  detail::reject_unknown(j,
                         {"name", "classes", "policy", "method", "methods", "strategy", "slots", "seed", "mode",
                          "quantum_w", "deterministic_load_w", "p_values", "outputs"},
                         "experiment");
  ExperimentFile e;
  e.name = detail::get<std::string>(j, "name", "experiment");
  auto& c = e.config;
  if (!j.contains("classes") || !j.at("classes").is_array()) throw config_error("experiment needs a 'classes' array");
  for (const auto& cj : j.at("classes")) c.classes.push_back(detail::class_from_json(cj, base_dir));
  if (!j.contains("policy")) throw config_error("missing key 'policy' in experiment");
  c.policy = detail::policy_from_json(j.at("policy"));
  c.method = parse_method(detail::get_or<std::string>(j, "method", "exact", "experiment"));
  for (const auto& m : detail::get_or<std::vector<std::string>>(j, "methods", {}, "experiment"))
    c.methods.push_back(parse_method(m));
  c.strategy = parse_strategy(detail::get_or<std::string>(j, "strategy", "drop", "experiment"));
  const auto slots = detail::get<std::int64_t>(j, "slots", "experiment");
  if (slots < 1) throw config_error("slots must be >= 1");
  c.slots = std::size_t(slots);
  c.seed = detail::get_or<std::uint64_t>(j, "seed", 0, "experiment");
  c.mode = parse_mode(detail::get_or<std::string>(j, "mode", "composition", "experiment"));
  c.quantum = detail::get_or<double>(j, "quantum_w", 1.0, "experiment");
  c.deterministic_load = detail::get_or<double>(j, "deterministic_load_w", 0.0, "experiment");
  e.p_values = detail::get_or<std::vector<double>>(j, "p_values", {}, "experiment");
  if (!e.p_values.empty() && c.mode != SimMode::Composition)
    throw config_error("p_values sweeps require composition mode");
  if (j.contains("outputs")) {
    const auto& o = j.at("outputs");
    detail::reject_unknown(o, {"result_json", "series_csv", "slots_csv", "sweep_csv"}, "outputs");
    e.outputs.result_json = detail::get_opt<std::string>(o, "result_json", "outputs");
    e.outputs.series_csv = detail::get_opt<std::string>(o, "series_csv", "outputs");
    e.outputs.slots_csv = detail::get_opt<std::string>(o, "slots_csv", "outputs");
    e.outputs.sweep_csv = detail::get_opt<std::string>(o, "sweep_csv", "outputs");
  }
  validate(c);
  return e;
}

inline ExperimentFile read_experiment(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw io_error("experiment file '" + path.string() + "' does not exist");
  return parse_experiment(read_json_file(path), path.parent_path().empty() ? "." : path.parent_path());
}

// ---------------------------------------------------------------- results

inline json result_to_json(const SimResult& r, const SimConfig& c, std::string_view name = {}) {
  json out;
  if (!name.empty()) out["name"] = std::string(name);
  out["mode"] = std::string(mode_name(c.mode));
  out["method"] = std::string(method_name(c.method));
  out["strategy"] = std::string(strategy_name(c.strategy));
  out["seed"] = c.seed;
  out["slots"] = c.slots;
  out["p"] = c.policy.p;
  out["c_max"] = c.policy.c_max;
  out["p_hat"] = r.p_hat;
  out["k"] = r.k;
  out["stderr"] = r.std_error;
  out["low_confidence"] = r.low_confidence;
  out["overload_slots"] = r.overload_slots;
  out["lf_baseline"] = r.lf_baseline ? json(*r.lf_baseline) : json(nullptr);
  out["lf_managed"] = r.lf_managed ? json(*r.lf_managed) : json(nullptr);
  json enabled = json::object();
  for (std::size_t i = 0; i < c.classes.size(); ++i) enabled[c.classes[i].name] = r.enabled_counts.at(i);
  out["enabled_counts"] = enabled;
  if (c.mode == SimMode::SlotDynamic) {
    out["energy_wslots"] = {{"demanded", double(r.energy.demanded) * c.quantum},
                            {"served", double(r.energy.served) * c.quantum},
                            {"dropped", double(r.energy.dropped) * c.quantum},
                            {"backlog", double(r.energy.backlog) * c.quantum}};
  }
  out["series_baseline"] = r.series_baseline;
  out["series_managed"] = r.series_managed;
  return out;
}

inline void write_series_csv(std::ostream& os, const SimResult& r) {
  os << "slot,baseline_w,managed_w\n";
  for (std::size_t t = 0; t < r.series_managed.size(); ++t)
    os << t << ',' << format_number(r.series_baseline[t]) << ',' << format_number(r.series_managed[t]) << '\n';
}

inline void write_slots_csv(std::ostream& os, const std::vector<SlotOutcome>& outcomes) {
  os << "slot,served_w,dropped_w,backlog_depth,disabled_count\n";
  for (std::size_t t = 0; t < outcomes.size(); ++t) {
    const auto& o = outcomes[t];
    os << t << ',' << format_number(o.served_w) << ',' << format_number(o.dropped_w) << ',' << o.backlog_depth << ','
       << o.disabled_ids.size() << '\n';
  }
}

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << "p,method,enabled,p_hat,k,stderr\n";
  for (const auto& r : rows)
    os << format_number(r.p) << ',' << method_name(r.method) << ',' << r.enabled << ',' << format_number(r.p_hat) << ','
       << format_number(r.k) << ',' << format_number(r.std_error) << '\n';
}

inline void write_pmf_csv(std::ostream& os, const PowerPmf& pmf) {
  os << "watts,probability\n";
  for (std::size_t i = 0; i < pmf.size(); ++i)
    os << format_number(pmf.watts(i)) << ',' << format_number(pmf.probabilities()[i]) << '\n';
}

}  // namespace cac
