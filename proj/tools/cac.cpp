// Command-line front end: bounds, simulate, region and fit.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "cac/cac.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitRequire = 4;

struct Globals {
  std::optional<std::uint64_t> seed;
  std::optional<double> quantum;
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
  std::string out_dir = ".";
};

/// "h:p:n" -> Bernoulli class with ON power h, ON probability p, n appliances.
cac::ApplianceClass parse_class_arg(const std::string& arg, const std::string& name) {
  std::vector<std::string> parts;
  std::stringstream ss(arg);
  for (std::string part; std::getline(ss, part, ':');) parts.push_back(part);
  if (parts.size() != 3) throw cac::config_error("class argument '" + arg + "' must be h:p:n");
  cac::ApplianceClass c;
  c.name = name;
  c.on_power = cac::parse_number(parts[0], "class argument");
  c.model = cac::Bernoulli{cac::parse_number(parts[1], "class argument")};
  const double n = cac::parse_number(parts[2], "class argument");
  if (n < 0 || n != double(int(n))) throw cac::config_error("class argument '" + arg + "': n must be a non-negative integer");
  c.count = int(n);
  const double p = std::get<cac::Bernoulli>(c.model).p_on;
  if (!(p >= 0.0 && p <= 1.0)) throw cac::config_error("class argument '" + arg + "': p must be in [0, 1]");
  cac::validate(c);
  return c;
}

fs::path out_path(const Globals& g, const std::string& name) {
  const fs::path p(name);
  return p.is_absolute() ? p : fs::path(g.out_dir) / p;
}

std::vector<cac::EstimationMethod> parse_methods(const std::string& list) {
  std::vector<cac::EstimationMethod> out;
  std::stringstream ss(list);
  for (std::string m; std::getline(ss, m, ',');)
    if (!m.empty()) out.push_back(cac::parse_method(m));
  if (out.empty()) throw cac::config_error("no estimation method given");
  return out;
}

struct BoundsArgs {
  std::vector<std::string> classes;
  double c_max = 0.0;
  double x_det = 0.0;
  std::string methods = "exact,clt,chernoff,bennett,hoeffding,chebyshev,markov";
  std::string dump_pmf;
  std::optional<double> require;
};

int cmd_bounds(const Globals& g, const BoundsArgs& a) {
  const double q = g.quantum.value_or(1.0);
  if (!(q > 0.0)) throw cac::config_error("quantum must be > 0");
  cac::ClassComposition comp;
  comp.deterministic_load = a.x_det;
  for (std::size_t i = 0; i < a.classes.size(); ++i) {
    auto c = parse_class_arg(a.classes[i], "class" + std::to_string(i + 1));
    comp.add(c, c.count);
  }
  cac::validate(comp);
  for (const auto& e : comp.entries) cac::detail::grid_units(e.cls.on_power, q);
  const auto methods = parse_methods(a.methods);

  std::vector<double> values;
  for (auto m : methods) values.push_back(cac::estimate(m, comp, a.c_max, q));
  if (!a.dump_pmf.empty()) {
    std::ostringstream os;
    cac::write_pmf_csv(os, cac::exact_pmf(comp, q));
    cac::write_text_file(out_path(g, a.dump_pmf), os.str());
  }
  std::cout << "method,estimate\n";
  for (std::size_t i = 0; i < methods.size(); ++i)
    std::cout << cac::method_name(methods[i]) << ',' << cac::format_number(values[i]) << '\n';
  if (a.require && values.front() > *a.require) {
    std::cerr << "QoS not satisfiable: " << cac::method_name(methods.front()) << " estimate "
              << cac::format_number(values.front()) << " exceeds " << cac::format_number(*a.require) << '\n';
    return kExitRequire;
  }
  return 0;
}

std::string default_name(const std::string& experiment, const char* suffix) {
  std::string stem;
  for (char c : experiment) stem += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return (stem.empty() ? std::string("experiment") : stem) + suffix;
}

int cmd_simulate(const Globals& g, const std::string& file) {
  auto e = cac::read_experiment(file);
  if (g.seed) e.config.seed = *g.seed;
  if (g.quantum) e.config.quantum = *g.quantum;
  cac::validate(e.config);
  const auto& o = e.outputs;

  if (!e.p_values.empty()) {
    const auto rows = cac::sweep_qos(e.config, e.p_values, g.jobs);
    std::ostringstream os;
    cac::write_sweep_csv(os, rows);
    cac::write_text_file(out_path(g, o.sweep_csv.value_or(default_name(e.name, ".sweep.csv"))), os.str());
    std::cout << os.str();
    for (const auto& r : rows)
      if (r.low_confidence) {
        std::cerr << "note: cells with p*slots < 10 are low-confidence estimates of k\n";
        break;
      }
    return 0;
  }

  const auto r = cac::run(e.config);
  cac::write_text_file(out_path(g, o.result_json.value_or(default_name(e.name, ".result.json"))),
                       cac::result_to_json(r, e.config, e.name).dump(2) + "\n");
  std::ostringstream series;
  cac::write_series_csv(series, r);
  cac::write_text_file(out_path(g, o.series_csv.value_or(default_name(e.name, ".series.csv"))), series.str());
  if (e.config.mode == cac::SimMode::SlotDynamic) {
    std::ostringstream slots;
    cac::write_slots_csv(slots, r.outcomes);
    cac::write_text_file(out_path(g, o.slots_csv.value_or(default_name(e.name, ".slots.csv"))), slots.str());
  }

  auto lf = [](const std::optional<double>& v) { return v ? cac::format_number(*v) : std::string("n/a"); };
  std::cout << "experiment: " << e.name << '\n'
            << "p_hat: " << cac::format_number(r.p_hat) << " (" << r.overload_slots << " of " << e.config.slots
            << " slots)\n"
            << "k: " << cac::format_number(r.k) << " +/- " << cac::format_number(r.std_error)
            << (r.low_confidence ? " (low confidence)" : "") << '\n'
            << "lf_baseline: " << lf(r.lf_baseline) << '\n'
            << "lf_managed: " << lf(r.lf_managed) << '\n';
  for (std::size_t i = 0; i < e.config.classes.size(); ++i)
    std::cout << "enabled[" << e.config.classes[i].name << "]: " << r.enabled_counts[i] << '\n';
  return 0;
}

struct RegionArgs {
  std::string class1;
  std::string class2;
  double c_max = 0.0;
  double p = 0.0;
  double x_det = 0.0;
  std::string method = "exact";
  std::string out;
  bool frontier = false;
};

int cmd_region(const Globals& g, const RegionArgs& a) {
  const double q = g.quantum.value_or(1.0);
  const auto c1 = parse_class_arg(a.class1, "class1");
  const auto c2 = parse_class_arg(a.class2, "class2");
  cac::detail::grid_units(c1.on_power, q);
  cac::detail::grid_units(c2.on_power, q);
  cac::QosPolicy policy;
  policy.c_max = a.c_max;
  policy.p = a.p;
  cac::validate(policy);
  cac::ClassComposition base;
  base.deterministic_load = a.x_det;
  const auto region = cac::decision_region(c1, c2, policy, cac::parse_method(a.method), q, base, g.jobs);

  std::ostringstream os;
  if (a.frontier) {
    os << "n2,max_n1\n";
    const auto f = region.frontier();
    for (std::size_t n2 = 0; n2 < f.size(); ++n2) os << n2 << ',' << f[n2] << '\n';
  } else {
    region.write_csv(os);
  }
  if (a.out.empty())
    std::cout << os.str();
  else
    cac::write_text_file(out_path(g, a.out), os.str());
  return 0;
}

struct FitArgs {
  std::string trace;
  std::string family = "bernoulli";
  double threshold = 0.0;
  std::size_t pooling = 1;
  std::string out;
};

int cmd_fit(const Globals& g, const FitArgs& a) {
  if (!fs::exists(a.trace)) throw cac::io_error("trace file '" + a.trace + "' does not exist");
  const auto trace = cac::resample_mean(cac::read_trace_csv(fs::path(a.trace)), a.pooling);
  const auto fitted = cac::fit_model(trace, a.threshold, cac::parse_family(a.family));
  const auto stats = cac::stationary_stats(fitted.model, fitted.on_power);
  const std::string doc = cac::fitted_to_json(fitted).dump(2) + "\n";
  std::ostream& report = a.out.empty() ? std::cerr : std::cout;
  if (a.out.empty())
    std::cout << doc;
  else
    cac::write_text_file(out_path(g, a.out), doc);
  report << "on_power: " << cac::format_number(fitted.on_power) << '\n'
         << "p_on: " << cac::format_number(stats.p_on) << '\n'
         << "mean_w: " << cac::format_number(stats.mean) << '\n'
         << "variance_w2: " << cac::format_number(stats.variance) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Consumption admission control toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed = 0;
  double quantum = 1.0;
  auto* seed_opt = app.add_option("--seed", seed, "Override the experiment seed");
  auto* quantum_opt = app.add_option("--quantum-w", quantum, "Power grid step in watts");
  app.add_option("--jobs", g.jobs, "Worker threads for sweeps and regions")->check(CLI::PositiveNumber);
  app.add_option("--out-dir", g.out_dir, "Directory for relative output paths");

  BoundsArgs bounds;
  auto* bounds_cmd = app.add_subcommand("bounds", "Tail estimates for a composition");
  bounds_cmd->add_option("--class", bounds.classes, "Class as h:p:n (repeatable)");
  bounds_cmd->add_option("--c-max", bounds.c_max, "Upper capacity limit in watts")->required();
  bounds_cmd->add_option("--x-det", bounds.x_det, "Deterministic load in watts");
  bounds_cmd->add_option("--methods", bounds.methods, "Comma-separated methods");
  bounds_cmd->add_option("--dump-pmf", bounds.dump_pmf, "Write the exact pmf as CSV");
  auto* require_opt = bounds_cmd->add_option("--require", "Exit 4 if the first method's estimate exceeds this")->type_name("FLOAT");

  std::string experiment;
  auto* sim_cmd = app.add_subcommand("simulate", "Run an experiment file");
  sim_cmd->add_option("file", experiment, "Experiment JSON")->required();

  RegionArgs region;
  auto* region_cmd = app.add_subcommand("region", "Two-class decision region");
  region_cmd->add_option("--class1", region.class1, "h:p:n")->required();
  region_cmd->add_option("--class2", region.class2, "h:p:n")->required();
  region_cmd->add_option("--c-max", region.c_max, "Upper capacity limit in watts")->required();
  region_cmd->add_option("--p", region.p, "QoS probability")->required();
  region_cmd->add_option("--x-det", region.x_det, "Deterministic load in watts");
  region_cmd->add_option("--method", region.method, "Estimation method");
  region_cmd->add_option("--out", region.out, "Output CSV (stdout if omitted)");
  region_cmd->add_flag("--frontier", region.frontier, "Emit the largest accepted n1 per n2 instead");

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a load model to a trace");
  fit_cmd->add_option("trace", fit.trace, "Trace CSV")->required();
  fit_cmd->add_option("--family", fit.family, "bernoulli, markov or renewal");
  fit_cmd->add_option("--threshold", fit.threshold, "ON threshold in watts")->required();
  fit_cmd->add_option("--pooling", fit.pooling, "Mean-pool this many samples per slot");
  fit_cmd->add_option("--out", fit.out, "Model JSON (stdout if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  if (*seed_opt) g.seed = seed;
  if (*quantum_opt) g.quantum = quantum;
  if (*require_opt) bounds.require = require_opt->as<double>();

  try {
    if (*bounds_cmd) return cmd_bounds(g, bounds);
    if (*sim_cmd) return cmd_simulate(g, experiment);
    if (*region_cmd) return cmd_region(g, region);
    if (*fit_cmd) return cmd_fit(g, fit);
  } catch (const cac::config_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const cac::io_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
