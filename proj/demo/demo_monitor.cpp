// Train a chart on simulated in-control spheres, then watch a stream that
// switches to a small missing patch halfway through.
//
//   demo_monitor [chart.svg]

#include <fstream>
#include <iostream>

#include "rfm/chart.hpp"
#include "rfm/extract.hpp"
#include "rfm/monitoring.hpp"
#include "rfm/shapes.hpp"
#include "rfm/simharness.hpp"

using namespace rfm;

int main(int argc, char** argv) {
  const std::size_t threads = thread_count();
  Rng rng(7);
  const PointCloud base = sample_sphere(1000, rng);

  ExtractorConfig ex;
  ex.k = 20;
  Scenario ic;
  ic.sigma0 = 5e-3;

  const auto train = simulate_features(base, ic, 150, ex, Rng(7, 1), threads);
  const auto tune = simulate_features(base, ic, 400, ex, Rng(7, 2), threads);
  MonitorModel model = fit_model(train);
  const Adequacy adequacy = adequacy_check(model, tune);
  std::cout << "adequacy statistic " << adequacy.stat << (adequacy.pass ? " (pass)" : " (fail)") << "\n";

  model.statistic = StatisticKind::H;
  model.c = thresholds(model.k).c2;
  std::vector<double> stats;
  for (const auto& f : tune) stats.push_back(control_statistic(standardize(model, f), model.statistic, model.c));
  CalibrationConfig cc;
  cc.arl0 = 100.0;
  cc.threads = threads;
  model.h = calibrate_limit(stats, cc).h;
  std::cout << "control limit h = " << model.h << "\n";

  Scenario lack = ic;
  lack.variant = Variant::lack;
  lack.fraction = 0.02;
  const auto before = simulate_features(base, ic, 15, ex, Rng(7, 3), threads);
  const auto after = simulate_features(base, lack, 15, ex, Rng(7, 4), threads);

  ControlChart chart(model);
  std::vector<DecisionRow> rows;
  for (const auto* batch : {&before, &after})
    for (const auto& f : *batch) {
      const auto& d = chart.push(f);
      const std::string id = batch == &before ? "ic" : "lack";
      rows.push_back({d.t, id, d.statistic, d.alarm});
      std::cout << d.t << "\t" << id << "\t" << d.statistic << (d.alarm ? "\tALARM" : "") << "\n";
    }
  std::cout << "first alarm at item " << chart.first_alarm() << " (defect starts at 16)\n";

  if (argc > 1) {
    std::ofstream(argv[1]) << render_chart_svg(rows, model.h, "lack of material after item 15");
    std::cout << "wrote " << argv[1] << "\n";
  }
}
