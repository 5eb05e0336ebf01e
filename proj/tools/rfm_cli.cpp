// rfm: command-line front end for feature extraction, chart training,
// calibration, monitoring and simulation studies.
//
// Exit codes: 0 success (no alarm), 2 monitor raised at least one alarm, 1 error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "manifest.hpp"
#include "rfm/chart.hpp"
#include "rfm/extract.hpp"
#include "rfm/io.hpp"
#include "rfm/shapes.hpp"
#include "rfm/simharness.hpp"
#include "rfm/study.hpp"
#include "rfm/tables.hpp"

namespace fs = std::filesystem;
using namespace rfm;
using rfm::cli::Manifest;

namespace {

constexpr int exit_ok = 0, exit_error = 1, exit_alarm = 2;

struct Options {
  // generate
  std::string shape = "sphere", base, out, out_dir, prefix = "item", format = "xyz";
  std::size_t n = 2000, count = 0;
  std::string variant = "ic";
  double sigma0 = 5e-3, snr = 1.0, fraction = 0.0, shift = 0.0, bandwidth = 0.0;
  std::size_t n_min = 0, n_max = 0;
  std::uint64_t seed = 1;
  // extract / select-k / monitor
  std::vector<std::string> clouds;
  std::string backend = "rl";
  std::size_t k = 0, n_neigh = default_n_neigh;
  double time_factor = 1.0;
  std::string grid = "10,20,30,40,50,60,70,80,90,100,120,150";
  double cumvar = 0.95;
  // train / calibrate / monitor / chart
  std::string features, tuning, model, statistic = "N", threshold, decisions, title;
  double arl0 = 100.0;
  std::size_t permutations = 1000;
  // simulate / rerun
  std::string config, manifest;
  bool no_verify = false;
};

ExtractorConfig extractor(const Options& o, Backend b, std::size_t k) {
  ExtractorConfig ex;
  ex.backend = b;
  ex.k = k;
  ex.n_neigh = o.n_neigh;
  ex.time_factor = o.time_factor;
  return ex;
}

std::string stem(const std::string& path) { return fs::path(path).stem().string(); }

// Input hashes are taken before any output is written (calibrate may work in place).
nlohmann::json hash_inputs(const std::vector<std::string>& paths) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& p : paths) j[p] = cli::file_sha256(p);
  return j;
}

void write_manifest(Manifest m, const nlohmann::json& inputs, const std::string& manifest_path) {
  auto j = m.to_json();
  j["inputs"] = inputs;
  cli::write_text(manifest_path, j.dump(2) + "\n");
}

int cmd_generate(const Options& o, Manifest& m) {
  if (o.count == 0) {
    if (o.out.empty()) throw InvalidArgument("generate: give --out for a nominal shape or --count with --out-dir");
    if (!o.base.empty()) throw InvalidArgument("generate: --base needs --count and --out-dir");
    Rng rng(o.seed, 0);
    if (fs::path(o.out).has_parent_path()) fs::create_directories(fs::path(o.out).parent_path());
    write_point_cloud(make_shape(o.shape, o.n, rng), o.out);
    m.outputs = {o.out};
    write_manifest(m, nlohmann::json::object(), cli::manifest_path_for(o.out));
    return exit_ok;
  }
  if (o.out_dir.empty()) throw InvalidArgument("generate: --count needs --out-dir");
  PointCloud base = [&] {
    if (!o.base.empty()) return read_point_cloud(o.base);
    Rng rng(o.seed, 0);
    return make_shape(o.shape, o.n, rng);
  }();
  Scenario s;
  s.variant = variant_from_string(o.variant);
  s.sigma0 = o.sigma0;
  s.snr = o.snr;
  s.fraction = o.fraction;
  s.shift = o.shift;
  s.bandwidth = o.bandwidth;
  s.n_min = o.n_min;
  s.n_max = o.n_max;
  s.validate();
  const auto inputs = o.base.empty() ? nlohmann::json::object() : hash_inputs({o.base});
  const Rng root(o.seed, 1);
  fs::create_directories(o.out_dir);
  for (std::size_t i = 1; i <= o.count; ++i) {
    char name[64];
    std::snprintf(name, sizeof name, "_%04zu.", i);
    const std::string path = (fs::path(o.out_dir) / (o.prefix + name + o.format)).string();
    PointCloud item = inject_defect(base, s, root.substream(i));
    item.set_source_id(stem(path));
    write_point_cloud(item, path, o.format == "ply" ? CloudFormat::ply : CloudFormat::xyz);
    m.outputs.push_back(path);
  }
  write_manifest(m, inputs, cli::manifest_path_for((fs::path(o.out_dir) / o.prefix).string()));
  return exit_ok;
}

int cmd_extract(const Options& o, Manifest& m) {
  if (o.k == 0) throw InvalidArgument("extract: --k must be positive");
  const auto inputs = hash_inputs(o.clouds);
  const ExtractorConfig ex = extractor(o, backend_from_string(o.backend), o.k);
  std::vector<FeatureRow> rows(o.clouds.size());
  std::vector<std::string> errors(o.clouds.size());
  parallel_for(o.clouds.size(), [&](std::size_t i) {
    try {
      rows[i] = {stem(o.clouds[i]), extract_features(read_point_cloud(o.clouds[i]), ex)};
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  });
  std::vector<FeatureRow> ok;
  std::size_t failed = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (errors[i].empty()) ok.push_back(std::move(rows[i]));
    else std::cerr << "error: " << o.clouds[i] << ": " << errors[i] << "\n", ++failed;
  }
  cli::write_text(o.out, features_csv(ok));
  m.outputs = {o.out};
  write_manifest(m, inputs, cli::manifest_path_for(o.out));
  return failed ? exit_error : exit_ok;
}

int cmd_select_k(const Options& o, Manifest& m) {
  if (o.clouds.size() != 1) throw InvalidArgument("select-k: give exactly one cloud");
  const auto inputs = hash_inputs(o.clouds);
  const PointCloud pc = read_point_cloud(o.clouds[0]);
  const Backend b = backend_from_string(o.backend);
  std::ostringstream csv;
  std::size_t k = 0;
  if (b == Backend::rl) {
    std::vector<std::size_t> grid;
    for (const auto& t : rfm::detail::split_list(o.grid)) grid.push_back(rfm::detail::to_size("grid", t));
    ElbowCurve curve = elbow_curve(pc, grid, o.n_neigh);
    k = select_k_elbow(curve);
    csv << "k,discrepancy\n";
    for (std::size_t i = 0; i < curve.k.size(); ++i) csv << curve.k[i] << ',' << format_double(curve.discrepancy[i]) << '\n';
  } else {
    const auto ev = hm_full_spectrum(pc, extractor(o, b, 1));
    k = select_k_cumvar(ev, o.cumvar);
    csv << "k,eigenvalue\n";
    for (std::size_t i = 0; i < ev.size(); ++i) csv << i + 1 << ',' << format_double(ev[i]) << '\n';
  }
  std::cout << "k = " << k << "\n";
  if (!o.out.empty()) {
    cli::write_text(o.out, csv.str());
    m.outputs = {o.out};
    m.extra["selected_k"] = k;
    write_manifest(m, inputs, cli::manifest_path_for(o.out));
  }
  return exit_ok;
}

void record_adequacy(MonitorModel& model, const std::vector<FeatureVector>& tuning) {
  model.adequacy = adequacy_check(model, tuning);
  if (!model.adequacy->pass)
    warn("adequacy check failed (statistic " + format_double(model.adequacy->stat) +
         " >= 1): the fitted covariance does not describe the tuning data; monitoring is still permitted");
}

int cmd_train(const Options& o, Manifest& m) {
  std::vector<std::string> in{o.features};
  if (!o.tuning.empty()) in.push_back(o.tuning);
  const auto inputs = hash_inputs(in);
  MonitorModel model = fit_model(feature_vectors(parse_features_csv(read_file(o.features))));
  if (!o.tuning.empty()) record_adequacy(model, feature_vectors(parse_features_csv(read_file(o.tuning))));
  cli::write_text(o.out, to_json(model).dump(2) + "\n");
  m.outputs = {o.out};
  write_manifest(m, inputs, cli::manifest_path_for(o.out));
  return exit_ok;
}

int cmd_calibrate(const Options& o, Manifest& m) {
  const std::string out = o.out.empty() ? o.model : o.out;
  const auto inputs = hash_inputs({o.model, o.tuning});
  MonitorModel model = model_from_json(nlohmann::json::parse(read_file(o.model)));
  const auto tuning = feature_vectors(parse_features_csv(read_file(o.tuning)));
  StatisticSpec spec = statistic_spec_from_string(o.threshold.empty() ? o.statistic : o.statistic + ":" + o.threshold);
  model.statistic = spec.kind;
  model.c = spec.resolve(model.k);
  record_adequacy(model, tuning);
  std::vector<double> stats;
  for (const auto& f : tuning) stats.push_back(control_statistic(standardize(model, f), model.statistic, model.c));
  CalibrationConfig cc;
  cc.arl0 = o.arl0;
  cc.permutations = o.permutations;
  cc.seed = o.seed;
  cc.threads = thread_count();
  const Calibration cal = calibrate_limit(stats, cc);
  model.h = cal.h;
  model.calibration = CalibrationRecord{o.arl0, o.permutations, o.seed, cal.arl, cal.iterations, cal.converged};
  model.provenance.seeds = {o.seed};
  model.provenance.tuning_size = tuning.size();
  cli::write_text(out, to_json(model).dump(2) + "\n");
  std::cout << "h = " << format_double(model.h) << " (ARL " << format_double(cal.arl) << ")\n";
  m.outputs = {out};
  write_manifest(m, inputs, cli::manifest_path_for(out));
  return exit_ok;
}

int cmd_monitor(const Options& o, Manifest& m) {
  if (o.features.empty() == o.clouds.empty()) throw InvalidArgument("monitor: give either --features or cloud files");
  std::vector<std::string> in{o.model};
  if (!o.features.empty()) in.push_back(o.features);
  in.insert(in.end(), o.clouds.begin(), o.clouds.end());
  const auto inputs = hash_inputs(in);
  const MonitorModel model = model_from_json(nlohmann::json::parse(read_file(o.model)));
  if (!model.calibrated()) throw InvalidArgument("monitor: model has no control limit; run calibrate first");
  std::vector<FeatureRow> items;
  if (!o.features.empty()) {
    items = parse_features_csv(read_file(o.features));
  } else {
    const ExtractorConfig ex = extractor(o, model.backend, model.k);
    items.resize(o.clouds.size());
    parallel_for(o.clouds.size(), [&](std::size_t i) {
      items[i] = {stem(o.clouds[i]), extract_features(read_point_cloud(o.clouds[i]), ex)};
    });
  }
  ControlChart chart(model);
  std::vector<DecisionRow> rows;
  for (const auto& it : items) {
    const auto& d = chart.push(it.features);
    rows.push_back({d.t, it.id, d.statistic, d.alarm});
  }
  cli::write_text(o.out, decisions_csv(rows));
  std::size_t alarms = 0;
  for (const auto& r : rows) alarms += r.alarm;
  std::cout << rows.size() << " items, " << alarms << " alarm(s)";
  if (chart.first_alarm()) std::cout << ", first at t = " << chart.first_alarm();
  std::cout << "\n";
  m.outputs = {o.out};
  write_manifest(m, inputs, cli::manifest_path_for(o.out));
  return alarms ? exit_alarm : exit_ok;
}

int cmd_simulate(const Options& o, Manifest& m) {
  const std::string text = read_file(o.config);
  const StudyConfig cfg = parse_study(text);
  const auto inputs = hash_inputs(cfg.path.empty() ? std::vector<std::string>{o.config}
                                                   : std::vector<std::string>{o.config, cfg.path});
  const auto rows = run_study(cfg, thread_count());
  cli::write_text(o.out, study_csv(rows));
  std::size_t failed = 0;
  for (const auto& r : rows) failed += !r.error.empty();
  if (failed) std::cerr << failed << " of " << rows.size() << " row(s) failed; see the error column\n";
  m.seeds = {cfg.seed, cfg.base_seed};
  m.extra["study"] = text;
  m.outputs = {o.out};
  write_manifest(m, inputs, cli::manifest_path_for(o.out));
  return exit_ok;
}

int cmd_chart(const Options& o, Manifest& m) {
  const auto inputs = hash_inputs({o.decisions, o.model});
  const MonitorModel model = model_from_json(nlohmann::json::parse(read_file(o.model)));
  if (!model.calibrated() || !std::isfinite(model.h)) throw InvalidArgument("chart: model needs a finite control limit");
  cli::write_text(o.out, render_chart_svg(parse_decisions_csv(read_file(o.decisions)), model.h, o.title));
  m.outputs = {o.out};
  write_manifest(m, inputs, cli::manifest_path_for(o.out));
  return exit_ok;
}

int run(std::vector<std::string> args);

int cmd_rerun(const Options& o) {
  const auto j = nlohmann::json::parse(read_file(o.manifest));
  const auto args = j.at("args").get<std::vector<std::string>>();
  const fs::path cwd = j.at("cwd").get<std::string>();
  const fs::path here = fs::current_path();
  if (fs::is_directory(cwd)) fs::current_path(cwd);
  for (const auto& [path, hash] : j.at("inputs").items())
    if (!fs::exists(path) || cli::file_sha256(path) != hash.get<std::string>())
      warn("rerun: input '" + path + "' differs from the recorded one");
  const int code = run(args);
  int status = code;
  if (!o.no_verify) {
    for (const auto& [path, hash] : j.at("outputs").items()) {
      const bool same = fs::exists(path) && cli::file_sha256(path) == hash.get<std::string>();
      std::cout << (same ? "identical  " : "DIFFERENT  ") << path << "\n";
      if (!same) status = exit_error;
    }
  }
  fs::current_path(here);
  return status;
}

int run(std::vector<std::string> args) {
  Options o;
  CLI::App app{"Registration-free point-cloud monitoring: spectral features and control charts"};
  app.require_subcommand(1);
  app.set_version_flag("--version", cli::tool_version);
  app.footer("Exit codes: 0 success, 2 monitor raised an alarm, 1 error. Threads: RFM_THREADS (default all cores).");

  auto add_extractor = [&](CLI::App* c) {
    c->add_option("--n-neigh", o.n_neigh, "neighbors per local triangulation")->capture_default_str();
    c->add_option("--time-factor", o.time_factor, "heat time multiplier on the squared mean edge (hm)")->capture_default_str();
  };
  auto add_seed = [&](CLI::App* c) { c->add_option("--seed", o.seed, "random seed")->capture_default_str(); };

  auto* gen = app.add_subcommand("generate", "write a nominal shape or simulated in/out-of-control items");
  gen->add_option("--shape", o.shape, "sphere, ellipsoid, torus or blob")->capture_default_str();
  gen->add_option("--n", o.n, "points in the generated shape")->capture_default_str();
  gen->add_option("--base", o.base, "base cloud file (instead of --shape)")->check(CLI::ExistingFile);
  gen->add_option("--out", o.out, "output file for the nominal shape (.xyz or .ply)");
  gen->add_option("--count", o.count, "number of simulated items");
  gen->add_option("--out-dir", o.out_dir, "directory for simulated items");
  gen->add_option("--prefix", o.prefix, "item file prefix")->capture_default_str();
  gen->add_option("--format", o.format, "item format")->check(CLI::IsMember({"xyz", "ply"}))->capture_default_str();
  gen->add_option("--variant", o.variant,
                  "ic, global_noise, random_point_noise, cluster_noise, gaussian_bubble, lack or excess")
      ->capture_default_str();
  gen->add_option("--sigma0", o.sigma0, "in-control noise sd")->capture_default_str();
  gen->add_option("--snr", o.snr, "sigma1 / sigma0")->capture_default_str();
  gen->add_option("--fraction", o.fraction, "share of affected points");
  gen->add_option("--shift", o.shift, "displacement size");
  gen->add_option("--bandwidth", o.bandwidth, "bubble bandwidth (0: cluster radius / 2)");
  gen->add_option("--n-min", o.n_min, "smallest subsample size (0 keeps all points)");
  gen->add_option("--n-max", o.n_max, "largest subsample size");
  add_seed(gen);

  auto* ext = app.add_subcommand("extract", "spectral feature vectors, one CSV row per cloud");
  ext->add_option("clouds", o.clouds, "point cloud files")->required()->check(CLI::ExistingFile);
  ext->add_option("--backend", o.backend, "rl or hm")->check(CLI::IsMember({"rl", "hm"}))->capture_default_str();
  ext->add_option("--k", o.k, "number of eigenvalues")->required();
  ext->add_option("--out", o.out, "feature CSV")->required();
  add_extractor(ext);

  auto* sel = app.add_subcommand("select-k", "choose k by the elbow rule (rl) or explained variance (hm)");
  sel->add_option("clouds", o.clouds, "one point cloud file")->required()->check(CLI::ExistingFile);
  sel->add_option("--backend", o.backend, "rl or hm")->check(CLI::IsMember({"rl", "hm"}))->capture_default_str();
  sel->add_option("--grid", o.grid, "comma-separated k grid (rl)")->capture_default_str();
  sel->add_option("--threshold", o.cumvar, "explained variance share (hm)")->capture_default_str();
  sel->add_option("--out", o.out, "curve CSV");
  add_extractor(sel);

  auto* tr = app.add_subcommand("train", "fit the in-control mean and covariance");
  tr->add_option("--features", o.features, "training feature CSV")->required()->check(CLI::ExistingFile);
  tr->add_option("--tuning", o.tuning, "tuning feature CSV for the adequacy check")->check(CLI::ExistingFile);
  tr->add_option("--out", o.out, "model JSON")->required();

  auto* cal = app.add_subcommand("calibrate", "set the control limit for a target in-control ARL");
  cal->add_option("--model", o.model, "model JSON")->required()->check(CLI::ExistingFile);
  cal->add_option("--tuning", o.tuning, "tuning feature CSV")->required()->check(CLI::ExistingFile);
  cal->add_option("--statistic", o.statistic, "N, H or S")->check(CLI::IsMember({"N", "H", "S"}))->capture_default_str();
  cal->add_option("--threshold", o.threshold, "c1, c2 or a value (H and S; default c2)");
  cal->add_option("--arl0", o.arl0, "target in-control ARL")->capture_default_str();
  cal->add_option("--permutations", o.permutations, "resampled runs per bisection step")->capture_default_str();
  cal->add_option("--out", o.out, "output model JSON (default: update --model in place)");
  add_seed(cal);

  auto* mon = app.add_subcommand("monitor", "chart a stream of items against a calibrated model");
  mon->add_option("--model", o.model, "calibrated model JSON")->required()->check(CLI::ExistingFile);
  mon->add_option("--features", o.features, "feature CSV in stream order")->check(CLI::ExistingFile);
  mon->add_option("clouds", o.clouds, "point cloud files in stream order")->check(CLI::ExistingFile);
  mon->add_option("--out", o.out, "decisions CSV")->required();
  add_extractor(mon);

  auto* sim = app.add_subcommand("simulate", "run an ARL study described by an INI file");
  sim->add_option("--config", o.config, "study file")->required()->check(CLI::ExistingFile);
  sim->add_option("--out", o.out, "results CSV")->required();

  auto* ch = app.add_subcommand("chart", "draw a control chart as SVG");
  ch->add_option("--decisions", o.decisions, "decisions CSV")->required()->check(CLI::ExistingFile);
  ch->add_option("--model", o.model, "model JSON")->required()->check(CLI::ExistingFile);
  ch->add_option("--out", o.out, "SVG file")->required();
  ch->add_option("--title", o.title, "chart title");

  auto* re = app.add_subcommand("rerun", "repeat a command from its manifest and compare the outputs");
  re->add_option("--manifest", o.manifest, "manifest JSON")->required()->check(CLI::ExistingFile);
  re->add_flag("--no-verify", o.no_verify, "skip the output comparison");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_ok : exit_error;
  }

  Manifest m;
  m.args = args;
  m.started = cli::utc_now();
  auto* sub = app.get_subcommands().front();
  m.config = sub->config_to_str(true, false);
  m.command = sub->get_name();
  if (sub == gen || sub == cal) m.seeds = {o.seed};

  if (sub == gen) return cmd_generate(o, m);
  if (sub == ext) return cmd_extract(o, m);
  if (sub == sel) return cmd_select_k(o, m);
  if (sub == tr) return cmd_train(o, m);
  if (sub == cal) return cmd_calibrate(o, m);
  if (sub == mon) return cmd_monitor(o, m);
  if (sub == sim) return cmd_simulate(o, m);
  if (sub == ch) return cmd_chart(o, m);
  return cmd_rerun(o);
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(std::vector<std::string>(argv + 1, argv + argc));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_error;
  }
}
