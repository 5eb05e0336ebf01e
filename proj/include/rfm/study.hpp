#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rfm/io.hpp"
#include "rfm/shapes.hpp"
#include "rfm/simharness.hpp"

namespace rfm {

/// Statistic kind plus threshold policy: "c1", "c2" or a literal value.
struct StatisticSpec {
  StatisticKind kind = StatisticKind::N;
  std::string threshold = "0";

  std::string label() const { return kind == StatisticKind::N ? "N" : to_string(kind) + ":" + threshold; }
  double resolve(std::size_t k) const {
    if (kind == StatisticKind::N) return 0.0;
    if (threshold == "c1") return thresholds(k).c1;
    if (threshold == "c2") return thresholds(k).c2;
    double c = 0.0;
    if (!detail::parse_double(threshold, c) || c < 0.0) throw InvalidArgument("bad threshold '" + threshold + "'");
    return c;
  }
};

inline StatisticSpec statistic_spec_from_string(const std::string& s) {
  StatisticSpec spec;
  const auto colon = s.find(':');
  spec.kind = statistic_from_string(s.substr(0, colon));
  if (colon != std::string::npos) spec.threshold = s.substr(colon + 1);
  else if (spec.kind != StatisticKind::N) spec.threshold = "c2";
  spec.resolve(100);  // validates literal thresholds
  return spec;
}

/// A scenario with one swept parameter; an empty `param` gives a single cell.
struct ScenarioGrid {
  std::string name;
  Scenario scenario;
  std::string param;
  std::vector<double> values;
};

struct StudyConfig {
  // [base]
  std::string shape = "sphere";
  std::string path;  // overrides shape when set
  std::size_t base_n = 2000;
  std::uint64_t base_seed = 1;
  // [backend]
  std::vector<Backend> backends{Backend::rl};
  std::size_t k_rl = 50, k_hm = 40, n_neigh = default_n_neigh;
  double time_factor = 1.0;
  // [model]
  std::size_t m = 200, tuning = 500;
  std::vector<StatisticSpec> statistics{StatisticSpec{}};
  double arl0 = 50.0;
  std::size_t permutations = 1000;
  std::size_t reps = 100, max_rl = 500;
  std::uint64_t seed = 1;
  double sigma0 = 1e-3;
  std::size_t n_min = 0, n_max = 0;
  // [scenarios.*]
  std::vector<ScenarioGrid> grids;
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) {
    const auto b = cur.find_first_not_of(" \t"), e = cur.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(cur.substr(b, e - b + 1));
  }
  return out;
}

inline double to_double(const std::string& key, const std::string& v) {
  double d = 0.0;
  if (!detail::parse_double(v, d)) throw InvalidArgument("study: '" + key + "' is not a number: '" + v + "'");
  return d;
}

inline std::size_t to_size(const std::string& key, const std::string& v) {
  const double d = to_double(key, v);
  if (d < 0.0 || d != std::floor(d)) throw InvalidArgument("study: '" + key + "' must be a nonnegative integer");
  return static_cast<std::size_t>(d);
}

inline void set_scenario_param(Scenario& s, const std::string& param, double v) {
  if (param == "snr") s.snr = v;
  else if (param == "fraction") s.fraction = v;
  else if (param == "shift") s.shift = v;
  else if (param == "bandwidth") s.bandwidth = v;
  else if (param == "sigma0") s.sigma0 = v;
  else throw InvalidArgument("study: unknown scenario parameter '" + param + "'");
}

}  // namespace detail

inline StudyConfig parse_study(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError(e.message(), e.line());
  }
  StudyConfig cfg;
  auto get = [&](const pt::ptree& sec, const std::string& key) -> std::optional<std::string> {
    if (auto v = sec.get_optional<std::string>(pt::ptree::path_type(key, '\0'))) return *v;
    return std::nullopt;
  };
  const pt::ptree empty;
  auto section = [&](const std::string& name) -> const pt::ptree& {
    auto it = tree.find(name);
    return it == tree.not_found() ? empty : it->second;
  };

  const auto& base = section("base");
  if (auto v = get(base, "shape")) cfg.shape = *v;
  if (auto v = get(base, "path")) cfg.path = *v;
  if (auto v = get(base, "n")) cfg.base_n = detail::to_size("base.n", *v);
  if (auto v = get(base, "seed")) cfg.base_seed = detail::to_size("base.seed", *v);

  const auto& be = section("backend");
  if (auto v = get(be, "methods")) {
    cfg.backends.clear();
    for (const auto& b : detail::split_list(*v)) cfg.backends.push_back(backend_from_string(b));
  }
  if (auto v = get(be, "k_rl")) cfg.k_rl = detail::to_size("backend.k_rl", *v);
  if (auto v = get(be, "k_hm")) cfg.k_hm = detail::to_size("backend.k_hm", *v);
  if (auto v = get(be, "n_neigh")) cfg.n_neigh = detail::to_size("backend.n_neigh", *v);
  if (auto v = get(be, "time_factor")) cfg.time_factor = detail::to_double("backend.time_factor", *v);

  const auto& mo = section("model");
  if (auto v = get(mo, "m")) cfg.m = detail::to_size("model.m", *v);
  if (auto v = get(mo, "tuning")) cfg.tuning = detail::to_size("model.tuning", *v);
  if (auto v = get(mo, "statistics")) {
    cfg.statistics.clear();
    for (const auto& s : detail::split_list(*v)) cfg.statistics.push_back(statistic_spec_from_string(s));
  }
  if (auto v = get(mo, "arl0")) cfg.arl0 = detail::to_double("model.arl0", *v);
  if (auto v = get(mo, "permutations")) cfg.permutations = detail::to_size("model.permutations", *v);
  if (auto v = get(mo, "reps")) cfg.reps = detail::to_size("model.reps", *v);
  if (auto v = get(mo, "max_rl")) cfg.max_rl = detail::to_size("model.max_rl", *v);
  if (auto v = get(mo, "seed")) cfg.seed = detail::to_size("model.seed", *v);
  if (auto v = get(mo, "sigma0")) cfg.sigma0 = detail::to_double("model.sigma0", *v);
  if (auto v = get(mo, "n_min")) cfg.n_min = detail::to_size("model.n_min", *v);
  if (auto v = get(mo, "n_max")) cfg.n_max = detail::to_size("model.n_max", *v);

  const std::string prefix = "scenarios.";
  for (const auto& [name, sec] : tree) {
    if (name.rfind(prefix, 0) != 0) continue;
    ScenarioGrid g;
    g.name = name.substr(prefix.size());
    if (g.name.empty()) throw InvalidArgument("study: scenario section needs a name");
    auto& s = g.scenario;
    const auto variant = get(sec, "variant");
    if (!variant) throw InvalidArgument("study: [" + name + "] has no variant");
    s.variant = variant_from_string(*variant);
    s.sigma0 = cfg.sigma0;
    s.n_min = cfg.n_min;
    s.n_max = cfg.n_max;
    for (const char* key : {"snr", "fraction", "shift", "bandwidth", "sigma0"})
      if (auto v = get(sec, key)) detail::set_scenario_param(s, key, detail::to_double(name + "." + key, *v));
    if (auto v = get(sec, "param")) {
      g.param = *v;
      const auto values = get(sec, "values");
      if (!values) throw InvalidArgument("study: [" + name + "] sweeps '" + g.param + "' but lists no values");
      for (const auto& x : detail::split_list(*values)) g.values.push_back(detail::to_double(name + ".values", x));
      if (g.values.empty()) throw InvalidArgument("study: [" + name + "] has an empty value list");
      detail::set_scenario_param(s, g.param, g.values.front());
    }
    cfg.grids.push_back(std::move(g));
  }
  if (cfg.grids.empty()) throw InvalidArgument("study: empty scenario grid (no [scenarios.*] sections)");
  if (cfg.backends.empty() || cfg.statistics.empty()) throw InvalidArgument("study: no backends or statistics");
  return cfg;
}

struct StudyRow {
  std::string method, statistic, scenario, param, value;
  double h = 0.0;
  ArlResult result;
  std::uint64_t seed = 0;
  std::string error;
};

inline PointCloud study_base_cloud(const StudyConfig& cfg) {
  if (!cfg.path.empty()) return read_point_cloud(cfg.path);
  Rng rng(cfg.base_seed);
  return make_shape(cfg.shape, cfg.base_n, rng);
}

/// Calibrated charts for every configured statistic, trained on simulated in-control items.
inline std::vector<MonitorModel> study_models(const PointCloud& base, const StudyConfig& cfg,
                                              const ExtractorConfig& ex, std::size_t threads) {
  Scenario ic;
  ic.sigma0 = cfg.sigma0;
  ic.n_min = cfg.n_min;
  ic.n_max = cfg.n_max;
  const auto train = simulate_features(base, ic, cfg.m, ex, Rng(cfg.seed, 1), threads);
  const auto tune = simulate_features(base, ic, cfg.tuning, ex, Rng(cfg.seed, 2), threads);
  const MonitorModel fitted = fit_model(train);
  std::vector<Eigen::VectorXd> z;
  for (const auto& f : tune) z.push_back(standardize(fitted, f));
  std::vector<MonitorModel> models;
  for (const auto& spec : cfg.statistics) {
    MonitorModel m = fitted;
    m.statistic = spec.kind;
    m.c = spec.resolve(m.k);
    std::vector<double> stats;
    for (const auto& zi : z) stats.push_back(control_statistic(zi, m.statistic, m.c));
    CalibrationConfig cc;
    cc.arl0 = cfg.arl0;
    cc.permutations = cfg.permutations;
    cc.seed = cfg.seed;
    cc.threads = threads;
    m.h = calibrate_limit(stats, cc).h;
    m.provenance.seeds = {cfg.seed};
    m.provenance.tuning_size = cfg.tuning;
    models.push_back(std::move(m));
  }
  return models;
}

/// Every (backend, statistic, scenario cell) combination. Stage failures are
/// recorded in the affected rows and the study moves on.
inline std::vector<StudyRow> run_study(const StudyConfig& cfg, std::size_t threads = 1) {
  if (cfg.grids.empty()) throw InvalidArgument("study: empty scenario grid");
  const PointCloud base = study_base_cloud(cfg);
  std::vector<StudyRow> rows;
  for (Backend b : cfg.backends) {
    ExtractorConfig ex;
    ex.backend = b;
    ex.k = b == Backend::rl ? cfg.k_rl : cfg.k_hm;
    ex.n_neigh = cfg.n_neigh;
    ex.time_factor = cfg.time_factor;
    std::vector<MonitorModel> models;
    std::string model_error;
    try {
      models = study_models(base, cfg, ex, threads);
    } catch (const Error& e) {
      model_error = std::string("model: ") + e.what();
    }
    for (const auto& g : cfg.grids) {
      const std::vector<double> values = g.param.empty() ? std::vector<double>{0.0} : g.values;
      for (double v : values) {
        Scenario s = g.scenario;
        if (!g.param.empty()) detail::set_scenario_param(s, g.param, v);
        std::vector<ArlResult> results;
        std::string err = model_error;
        if (err.empty()) {
          try {
            results = estimate_arl(base, s, models, ex, cfg.reps, cfg.max_rl, Rng(cfg.seed, 3), threads);
          } catch (const Error& e) {
            err = e.what();
          }
        }
        for (std::size_t j = 0; j < cfg.statistics.size(); ++j) {
          StudyRow r;
          r.method = to_string(b);
          r.statistic = cfg.statistics[j].label();
          r.scenario = g.name;
          r.param = g.param.empty() ? "none" : g.param;
          r.value = g.param.empty() ? "" : format_double(v);
          r.seed = cfg.seed;
          r.error = err;
          if (err.empty()) {
            r.h = models[j].h;
            r.result = results[j];
          } else {
            warn("study: " + r.method + "/" + r.statistic + "/" + r.scenario + ": " + err);
          }
          rows.push_back(std::move(r));
        }
      }
    }
  }
  return rows;
}

inline std::string study_csv(const std::vector<StudyRow>& rows) {
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c == '\n' ? ' ' : c);
    return q + "\"";
  };
  std::ostringstream out;
  out << "method,statistic,scenario,param,value,arl,sd,reps,max_rl,seed,h,error\n";
  for (const auto& r : rows) {
    const bool ok = r.error.empty();
    out << r.method << ',' << r.statistic << ',' << quote(r.scenario) << ',' << r.param << ',' << r.value << ','
        << (ok ? format_double(r.result.arl) : "NA") << ',' << (ok ? format_double(r.result.sd) : "NA") << ','
        << (ok ? std::to_string(r.result.reps) : "NA") << ',' << (ok ? std::to_string(r.result.max_rl) : "NA") << ','
        << r.seed << ',' << (ok ? format_double(r.h) : "NA") << ',' << quote(r.error) << '\n';
  }
  return out.str();
}

}  // namespace rfm
