// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--only 1,2,...] [--cli path/to/rfm] [--report file]
//
// Exit status is 0 when every selected criterion passes, 1 otherwise.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rfm/extract.hpp"
#include "rfm/heat.hpp"
#include "rfm/io.hpp"
#include "rfm/laplacian.hpp"
#include "rfm/monitoring.hpp"
#include "rfm/shapes.hpp"
#include "rfm/simharness.hpp"

using namespace rfm;
namespace fs = std::filesystem;

namespace {

// Seeds fixed before any run.
constexpr std::uint64_t seed_sphere2000 = 101;
constexpr std::uint64_t seed_sphere1000 = 102;
constexpr std::uint64_t seed_sources = 103;
constexpr std::uint64_t seed_blob = 104;
constexpr std::uint64_t seed_motions = 105;
constexpr std::uint64_t seed_pencils = 106;
constexpr std::uint64_t seed_thresholds = 107;
constexpr std::uint64_t seed_exponential = 108;
constexpr std::uint64_t seed_calibration = 109;
constexpr std::uint64_t seed_study = 110;
constexpr std::uint64_t seed_hm_base = 111;
constexpr std::uint64_t seed_fixtures = 112;

// Desk-scale study settings shared by criteria 7 and 8.
constexpr std::size_t study_n = 2000, study_k = 50, study_m = 200, study_tuning = 500;
constexpr double study_sigma0 = 5e-3, study_arl0 = 50.0;
constexpr std::size_t ic_reps = 500, ic_max_rl = 500;
constexpr std::size_t oc_reps = 200, oc_max_rl = 500;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double relative_gap(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

Outcome sphere_spectrum() {
  Rng rng(seed_sphere2000);
  const PointCloud pc = sample_sphere(2000, rng);
  const auto t0 = Clock::now();
  const FeatureVector f = rl_spectrum(pc, 8, default_n_neigh, {}, 1);
  const double secs = seconds_since(t0);
  const double expected[8] = {2, 2, 2, 6, 6, 6, 6, 6};
  double worst = 0.0;
  for (std::size_t i = 0; i < 8; ++i) worst = std::max(worst, relative_gap(f[i], expected[i]));
  std::ostringstream d;
  d << "max relative error " << fmt("%.4f", worst) << ", " << fmt("%.2f", secs) << " s single-threaded";
  return {worst < 0.10 && secs < 30.0, d.str()};
}

Outcome geodesic_accuracy(std::size_t threads) {
  Rng rng(seed_sphere1000);
  const PointCloud pc = sample_sphere(1000, rng);
  const RobustLaplacian rl = robust_laplacian(pc, default_n_neigh, threads);
  const HeatSolveContext ctx(rl);
  Rng pick(seed_sources);
  const auto sources = sample_without_replacement(pc.size(), 20, pick);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t s : sources) {
    const Eigen::VectorXd phi = ctx.distance_from(s);
    for (std::size_t j = 0; j < pc.size(); ++j) {
      if (j == s) continue;
      const double g = std::acos(std::clamp(pc[s].dot(pc[j]), -1.0, 1.0));
      sum += std::abs(phi[static_cast<Eigen::Index>(j)] - g) / g;
      ++count;
    }
  }
  const double mean = sum / static_cast<double>(count);
  return {mean < 0.03, "mean relative error " + fmt("%.4f", mean) + " over " + std::to_string(count) + " pairs"};
}

Outcome rigid_motion(std::size_t threads) {
  Rng rng(seed_blob);
  const PointCloud pc = sample_blob(1500, rng);
  ExtractorConfig rl_cfg, hm_cfg;
  rl_cfg.k = 20;
  hm_cfg.backend = Backend::hm;
  hm_cfg.k = 20;
  const FeatureVector rl0 = extract_features(pc, rl_cfg, threads), hm0 = extract_features(pc, hm_cfg, threads);
  Rng mrng(seed_motions);
  double worst_rl = 0.0, worst_hm = 0.0;
  for (int i = 0; i < 10; ++i) {
    const PointCloud moved = apply_rigid_motion(pc, RigidMotion::random(mrng, 10.0));
    const FeatureVector a = extract_features(moved, rl_cfg, threads), b = extract_features(moved, hm_cfg, threads);
    for (std::size_t j = 0; j < 20; ++j) {
      worst_rl = std::max(worst_rl, relative_gap(a[j], rl0[j]));
      worst_hm = std::max(worst_hm, relative_gap(b[j], hm0[j]));
    }
  }
  return {worst_rl < 1e-4 && worst_hm < 1e-4,
          "max relative change rl " + fmt("%.2e", worst_rl) + ", hm " + fmt("%.2e", worst_hm)};
}

// Connected weighted graph Laplacian plus a positive diagonal, so the pencil is
// positive definite and every eigenvalue is bounded away from zero.
SparseSym random_spd(std::size_t n, Rng& rng) {
  std::vector<Triplet> t;
  auto edge = [&](std::size_t a, std::size_t b) {
    const double w = 0.1 + 1.9 * rng.uniform();
    t.emplace_back(static_cast<int>(std::max(a, b)), static_cast<int>(std::min(a, b)), -w);
    t.emplace_back(static_cast<int>(a), static_cast<int>(a), w);
    t.emplace_back(static_cast<int>(b), static_cast<int>(b), w);
  };
  for (std::size_t i = 0; i + 1 < n; ++i) edge(i, i + 1);
  for (std::size_t e = 0; e < 2 * n; ++e) {
    const std::size_t a = rng.below(n), b = rng.below(n);
    if (a != b) edge(a, b);
  }
  for (std::size_t i = 0; i < n; ++i) t.emplace_back(static_cast<int>(i), static_cast<int>(i), 0.01 + rng.uniform());
  return SparseSym::from_lower_triplets(n, t);
}

Outcome eigensolver_equivalence() {
  Rng rng(seed_pencils);
  EigenSolverOptions opt;
  opt.force_iterative = true;
  double worst = 0.0;
  for (int p = 0; p < 50; ++p) {
    const std::size_t n = 20 + rng.below(281);
    const std::size_t k = 1 + rng.below(std::min<std::size_t>(30, n - 2));
    const SparseSym l = random_spd(n, rng);
    Eigen::VectorXd mass(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < mass.size(); ++i) mass[i] = 0.5 + rng.uniform();
    const Spectrum ref = dense_eig_reference(l.dense(), mass);
    const Spectrum s = smallest_eigenpairs(l, DiagMass(mass), k, false, opt);
    for (std::size_t i = 0; i < k; ++i) worst = std::max(worst, relative_gap(s.values[i], ref.values[i]));
  }
  return {worst < 1e-8, "max relative difference " + fmt("%.2e", worst) + " over 50 pencils"};
}

Outcome threshold_identities() {
  Rng rng(seed_thresholds);
  std::size_t equal = 0, ordered = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t k = 2 + rng.below(200);
    Eigen::VectorXd z(static_cast<Eigen::Index>(k));
    const double scale = std::exp(2.0 * rng.normal());
    for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = scale * rng.normal();
    const double n = control_statistic(z, StatisticKind::N, 0.0);
    if (control_statistic(z, StatisticKind::H, 0.0) == n && control_statistic(z, StatisticKind::S, 0.0) == n) ++equal;
    const double c = 3.0 * rng.uniform() * scale;
    const double h = control_statistic(z, StatisticKind::H, c), s = control_statistic(z, StatisticKind::S, c);
    if (s <= h && h <= n) ++ordered;
  }
  return {equal == 1000 && ordered == 1000,
          std::to_string(equal) + "/1000 equal at c = 0, " + std::to_string(ordered) + "/1000 ordered at c > 0"};
}

Outcome exponential_limit(std::size_t threads) {
  Rng rng(seed_exponential);
  std::vector<double> stats(100000);
  for (double& s : stats) s = -std::log1p(-rng.uniform());
  CalibrationConfig cfg;
  cfg.arl0 = 100.0;
  cfg.permutations = 5000;
  cfg.seed = seed_exponential;
  cfg.threads = threads;
  const Calibration c = calibrate_limit(stats, cfg);
  const double target = std::log(100.0);
  const double gap = relative_gap(c.h, target);
  return {gap < 0.05, "h = " + fmt("%.4f", c.h) + " vs " + fmt("%.4f", target) + " (" + fmt("%.2f", 100 * gap) + "%)"};
}

// In-control training, tuning and calibration shared by the ARL criteria.
struct Study {
  PointCloud base;
  ExtractorConfig ex;
  MonitorModel model;
  Scenario ic;
};

Study make_study(std::size_t n, std::size_t k, Backend backend, std::size_t m, std::size_t tuning,
                 std::uint64_t base_seed, std::size_t threads) {
  Rng rng(base_seed);
  Study s{sample_sphere(n, rng), {}, {}, {}};
  s.ex.backend = backend;
  s.ex.k = k;
  s.ic.sigma0 = study_sigma0;
  const auto train = simulate_features(s.base, s.ic, m, s.ex, Rng(seed_study, 1), threads);
  const auto tune = simulate_features(s.base, s.ic, tuning, s.ex, Rng(seed_study, 2), threads);
  s.model = fit_model(train);
  s.model.statistic = StatisticKind::H;
  s.model.c = thresholds(k).c2;
  std::vector<double> stats;
  for (const auto& f : tune) stats.push_back(control_statistic(standardize(s.model, f), s.model.statistic, s.model.c));
  CalibrationConfig cfg;
  cfg.arl0 = study_arl0;
  cfg.seed = seed_calibration;
  cfg.threads = threads;
  s.model.h = calibrate_limit(stats, cfg).h;
  return s;
}

const Study& rl_study(std::size_t threads) {
  static const Study s =
      make_study(study_n, study_k, Backend::rl, study_m, study_tuning, seed_sphere2000, threads);
  return s;
}

std::string arl_text(const ArlResult& r) { return fmt("%.2f", r.arl) + " (" + fmt("%.2f", r.sd) + ")"; }

Outcome ic_arl(std::size_t threads) {
  const auto t0 = Clock::now();
  const Study& s = rl_study(threads);
  const ArlResult r = estimate_arl(s.base, s.ic, s.model, s.ex, ic_reps, ic_max_rl, Rng(seed_study, 3), threads);
  const double secs = seconds_since(t0);
  const double gap = relative_gap(r.arl, study_arl0);
  std::ostringstream d;
  d << "ARL " << arl_text(r) << " vs " << study_arl0 << " (" << fmt("%+.1f", 100 * (r.arl - study_arl0) / study_arl0)
    << "%), " << fmt("%.0f", secs) << " s on " << threads << " thread(s)";
  return {gap <= 0.20 && secs < 1800.0, d.str()};
}

Outcome oc_trends(std::size_t threads) {
  const Study& s = rl_study(threads);
  const Rng root(seed_study, 4);
  std::ostringstream d;
  bool pass = true;

  std::vector<double> arls;
  for (double snr : {1.1, 1.3, 1.5}) {
    Scenario sc = s.ic;
    sc.variant = Variant::global_noise;
    sc.snr = snr;
    const ArlResult r = estimate_arl(s.base, sc, s.model, s.ex, oc_reps, oc_max_rl, root, threads);
    arls.push_back(r.arl);
    d << "noise SNR " << snr << ": " << arl_text(r) << "; ";
  }
  const bool monotone = arls[0] >= arls[1] && arls[1] >= arls[2];
  pass = pass && arls[2] < 10.0 && monotone;

  Scenario lack = s.ic;
  lack.variant = Variant::lack;
  lack.fraction = 0.01;
  const ArlResult rl = estimate_arl(s.base, lack, s.model, s.ex, oc_reps, oc_max_rl, root, threads);
  d << "lack 1% rl: " << arl_text(rl) << "; ";

  // The heat backend needs a dense n x n geodesic matrix per item, so it runs on a
  // smaller sphere with a matching smaller training set.
  const Study hm = make_study(500, 20, Backend::hm, 100, 300, seed_hm_base, threads);
  const ArlResult rh = estimate_arl(hm.base, [&] {
    Scenario sc = hm.ic;
    sc.variant = Variant::lack;
    sc.fraction = 0.01;
    return sc;
  }(), hm.model, hm.ex, oc_reps, oc_max_rl, root, threads);
  d << "lack 1% hm (n = 500): " << arl_text(rh);
  pass = pass && rl.arl <= 2.0 && rh.arl <= 2.0;
  return {pass, d.str()};
}

Outcome structural_invariants(std::size_t threads) {
  Rng rng(seed_fixtures);
  std::vector<std::pair<std::string, PointCloud>> fixtures;
  for (const char* shape : {"sphere", "ellipsoid", "torus", "blob"}) fixtures.emplace_back(shape, make_shape(shape, 400, rng));
  fixtures.emplace_back("grid", planar_grid(20, 20, 0.1));
  fixtures.emplace_back("noisy sphere", add_isotropic_noise(sample_sphere(400, rng), 0.01, rng));
  std::vector<std::string> failures;
  for (const auto& [name, pc] : fixtures) {
    auto fail = [&, n = name](const std::string& what) { failures.push_back(n + ": " + what); };
    const RobustLaplacian rl = robust_laplacian(pc, default_n_neigh, threads);
    const SparseMatrix& l = rl.pair.L.matrix();
    const auto n = static_cast<Eigen::Index>(pc.size());
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
    if ((l * ones).cwiseAbs().maxCoeff() > 1e-10 * rl.pair.L.norm_inf()) fail("L 1 != 0");
    for (int c = 0; c < l.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(l, c); it; ++it)
        if (it.row() != it.col() && it.value() > 1e-12 * rl.pair.L.norm_inf()) {
          fail("negative edge weight");
          c = static_cast<int>(l.outerSize()) - 1;
          break;
        }
    const HeatSolveContext ctx(rl);
    for (std::size_t src : {std::size_t{0}, pc.size() / 2, pc.size() - 1}) {
      const Eigen::VectorXd phi = ctx.distance_from(src);
      if (phi[static_cast<Eigen::Index>(src)] != 0.0) fail("phi(source) != 0");
      if (phi.minCoeff() < 0.0) fail("phi < 0");
    }
    const Eigen::MatrixXd b = similarity_matrix(pairwise_geodesics(ctx, threads).D);
    if ((b * ones).cwiseAbs().maxCoeff() > 1e-10 * b.cwiseAbs().maxCoeff()) fail("B 1 != 0");
    const Spectrum up = smallest_eigenpairs(rl.pair.L, rl.pair.M, 10, true);
    if (!std::is_sorted(up.values.begin(), up.values.end())) fail("rl spectrum not ascending");
    const Spectrum down = largest_eigenvalues_dense(b, 10);
    if (!std::is_sorted(down.values.rbegin(), down.values.rend())) fail("hm spectrum not descending");
  }
  std::string d = std::to_string(fixtures.size()) + " fixture clouds";
  for (const auto& f : failures) d += "; " + f;
  return {failures.empty(), d};
}

struct Cli {
  std::string exe;
  fs::path dir;
  int run(const std::string& args) const {
    const std::string cmd = "cd '" + dir.string() + "' && '" + exe + "' " + args + " > out.log 2> err.log";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
};

Outcome cli_reproducibility(const std::string& exe) {
  if (exe.empty()) return {false, "no CLI binary given"};
  Cli cli{fs::absolute(exe).string(), fs::temp_directory_path() / "rfm_acceptance_cli"};
  fs::remove_all(cli.dir);
  fs::create_directories(cli.dir);
  // Each command and the output file its manifest is named after.
  const std::vector<std::pair<std::string, std::string>> steps = {
      {"generate --shape sphere --n 400 --seed 5 --out base.xyz", "base.xyz"},
      {"generate --base base.xyz --count 60 --out-dir train --prefix ic --sigma0 0.005 --seed 6", "train/ic"},
      {"generate --base base.xyz --count 150 --out-dir tune --prefix ic --sigma0 0.005 --seed 7", "tune/ic"},
      {"generate --base base.xyz --count 5 --out-dir stream --prefix oc --variant lack --fraction 0.05 --seed 8",
       "stream/oc"},
      {"extract --k 8 --out train.csv train/*.xyz", "train.csv"},
      {"extract --k 8 --out tune.csv tune/*.xyz", "tune.csv"},
      {"extract --backend hm --k 8 --out stream_hm.csv stream/*.xyz", "stream_hm.csv"},
      {"select-k base.xyz --grid 5,10,20,40 --out curve.csv", "curve.csv"},
      {"train --features train.csv --tuning tune.csv --out model.json", "model.json"},
      {"calibrate --model model.json --tuning tune.csv --arl0 20 --out calibrated.json", "calibrated.json"},
      {"monitor --model calibrated.json --out decisions.csv stream/*.xyz", "decisions.csv"},
      {"chart --decisions decisions.csv --model calibrated.json --out chart.svg", "chart.svg"},
  };
  std::ofstream(cli.dir / "study.ini") << "[base]\nshape = sphere\nn = 300\n[backend]\nk_rl = 8\n[model]\nm = 30\n"
                                          "tuning = 120\narl0 = 10\nreps = 3\nmax_rl = 8\nsigma0 = 0.005\n"
                                          "[scenarios.noise]\nvariant = global_noise\nparam = snr\nvalues = 2\n";
  std::vector<std::pair<std::string, std::string>> all = steps;
  all.emplace_back("simulate --config study.ini --out study.csv", "study.csv");

  std::size_t identical = 0, outputs = 0;
  std::vector<std::string> problems;
  for (const auto& [args, target] : all) {
    const int code = cli.run(args);
    if (code != 0 && code != 2) {
      problems.push_back("'" + args + "' exited " + std::to_string(code));
      continue;
    }
    const fs::path manifest = cli.dir / (target + ".manifest.json");
    const auto j = nlohmann::json::parse(read_file(manifest.string()));
    std::vector<std::pair<std::string, std::string>> before;
    for (const auto& [path, hash] : j["outputs"].items()) before.emplace_back(path, read_file((cli.dir / path).string()));
    const int rerun = cli.run("rerun --manifest '" + manifest.string() + "'");
    if (rerun != code) problems.push_back("rerun of '" + args + "' exited " + std::to_string(rerun));
    for (const auto& [path, bytes] : before) {
      ++outputs;
      if (read_file((cli.dir / path).string()) == bytes)
        ++identical;
      else
        problems.push_back(path + " changed on rerun");
    }
  }
  std::string d = std::to_string(all.size()) + " commands, " + std::to_string(identical) + "/" +
                  std::to_string(outputs) + " outputs byte-identical";
  for (const auto& p : problems) d += "; " + p;
  const bool pass = problems.empty() && outputs > 0;
  if (pass) fs::remove_all(cli.dir);
  return {pass, d};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  std::string cli_exe, report_path;
#ifdef RFM_CLI_PATH
  cli_exe = RFM_CLI_PATH;
#endif
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string item; std::getline(ss, item, ',');) only.insert(std::stoi(item));
    } else if (a == "--cli" && i + 1 < argc) {
      cli_exe = argv[++i];
    } else if (a == "--report" && i + 1 < argc) {
      report_path = argv[++i];
    } else {
      std::cerr << "usage: acceptance [--only 1,2,...] [--cli path] [--report file]\n";
      return 1;
    }
  }
  const std::size_t threads = thread_count();
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, sphere_spectrum},
      {2, [&] { return geodesic_accuracy(threads); }},
      {3, [&] { return rigid_motion(threads); }},
      {4, eigensolver_equivalence},
      {5, threshold_identities},
      {6, [&] { return exponential_limit(threads); }},
      {7, [&] { return ic_arl(threads); }},
      {8, [&] { return oc_trends(threads); }},
      {9, [&] { return structural_invariants(threads); }},
      {10, [&] { return cli_reproducibility(cli_exe); }},
  };
  std::ofstream report;
  if (!report_path.empty()) report.open(report_path);
  int failed = 0;
  for (const auto& [id, fn] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::ostringstream line;
    line << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << "  ["
         << fmt("%.1f", seconds_since(t0)) << " s]";
    std::cout << line.str() << std::endl;
    if (report) report << line.str() << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
