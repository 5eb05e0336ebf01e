#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rfm/error.hpp"
#include "rfm/feature.hpp"
#include "rfm/log.hpp"
#include "rfm/parallel.hpp"
#include "rfm/rng.hpp"

namespace rfm {

enum class StatisticKind { N, H, S };

inline std::string to_string(StatisticKind s) { return s == StatisticKind::N ? "N" : s == StatisticKind::H ? "H" : "S"; }

inline StatisticKind statistic_from_string(std::string_view s) {
  if (s == "N") return StatisticKind::N;
  if (s == "H") return StatisticKind::H;
  if (s == "S") return StatisticKind::S;
  throw InvalidArgument("unknown statistic '" + std::string(s) + "' (expected N, H or S)");
}

struct Regularization {
  double floor = 0.0;          // eigenvalue floor applied to the covariance
  std::size_t floored = 0;     // eigenvalues raised to the floor
  double min_eigenvalue = 0.0;  // before flooring
  double max_eigenvalue = 0.0;
};

struct Provenance {
  std::vector<std::uint64_t> seeds;
  std::size_t m = 0;
  std::size_t tuning_size = 0;
};

struct Adequacy {
  double stat = 0.0;
  bool pass = false;
};

/// Settings and outcome of the run that set h.
struct CalibrationRecord {
  double arl0 = 0.0;
  std::size_t permutations = 0;
  std::uint64_t seed = 0;
  double arl = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Fitted in-control model; h is NaN until calibrated.
struct MonitorModel {
  static constexpr int version = 1;
  Backend backend = Backend::rl;
  std::size_t k = 0;
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma_inv_sqrt;
  StatisticKind statistic = StatisticKind::N;
  double c = 0.0;
  double h = std::numeric_limits<double>::quiet_NaN();
  Regularization regularization;
  Provenance provenance;
  std::optional<Adequacy> adequacy;
  std::optional<CalibrationRecord> calibration;

  bool calibrated() const { return h > 0.0; }  // +inf is a valid, never-alarming limit
};

namespace detail {
inline void check_features(const std::vector<FeatureVector>& xs, std::size_t k, Backend b, const char* who) {
  for (const auto& x : xs) {
    if (x.size() != k) throw InvalidArgument(std::string(who) + ": feature length " + std::to_string(x.size()) +
                                             " does not match k = " + std::to_string(k));
    if (x.backend != b) throw InvalidArgument(std::string(who) + ": mixed backends");
    if (!x.values.allFinite()) throw InvalidArgument(std::string(who) + ": non-finite feature");
  }
}

// Rows are observations.
inline Eigen::MatrixXd stack(const std::vector<FeatureVector>& xs) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(xs.size()), xs.empty() ? 0 : static_cast<Eigen::Index>(xs[0].size()));
  for (std::size_t i = 0; i < xs.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = xs[i].values.transpose();
  return x;
}

inline Eigen::MatrixXd unbiased_covariance(const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  return centered.transpose() * centered / static_cast<double>(x.rows() - 1);
}
}  // namespace detail

/// Sample mean and floored inverse square root of the unbiased covariance.
inline MonitorModel fit_model(const std::vector<FeatureVector>& training) {
  if (training.empty()) throw InvalidArgument("fit_model: empty training set");
  const std::size_t k = training[0].size(), m = training.size();
  detail::check_features(training, k, training[0].backend, "fit_model");
  if (m <= k)
    throw InvalidArgument("fit_model: insufficient training data (m = " + std::to_string(m) + " must exceed k = " +
                          std::to_string(k) + ")");
  const Eigen::MatrixXd x = detail::stack(training);
  MonitorModel model;
  model.backend = training[0].backend;
  model.k = k;
  model.mu = x.colwise().mean().transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(detail::unbiased_covariance(x));
  Eigen::VectorXd ev = es.eigenvalues();
  const double lmax = std::max(ev.maxCoeff(), 0.0);
  auto& reg = model.regularization;
  reg.min_eigenvalue = ev.minCoeff();
  reg.max_eigenvalue = ev.maxCoeff();
  reg.floor = lmax > 0.0 ? 1e-10 * lmax : 1e-10;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev[i] < reg.floor) {
      ev[i] = reg.floor;
      ++reg.floored;
    }
  if (reg.floored > 0)
    warn("fit_model: " + std::to_string(reg.floored) + " covariance eigenvalue(s) floored at " + std::to_string(reg.floor));
  model.sigma_inv_sqrt = es.eigenvectors() * ev.cwiseSqrt().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  model.sigma_inv_sqrt = 0.5 * (model.sigma_inv_sqrt + model.sigma_inv_sqrt.transpose()).eval();
  model.provenance.m = m;
  return model;
}

inline Eigen::VectorXd standardize(const MonitorModel& model, const FeatureVector& x) {
  if (x.size() != model.k)
    throw InvalidArgument("standardize: feature length " + std::to_string(x.size()) + " does not match model k = " +
                          std::to_string(model.k));
  if (x.backend != model.backend) throw InvalidArgument("standardize: backend does not match the model");
  return model.sigma_inv_sqrt * (x.values - model.mu);
}

/// ||cov(standardized tuning) - I||_F / sqrt(k) < 1.
inline Adequacy adequacy_check(const MonitorModel& model, const std::vector<FeatureVector>& tuning) {
  if (tuning.size() < 2) throw InvalidArgument("adequacy_check: need at least 2 tuning vectors");
  detail::check_features(tuning, model.k, model.backend, "adequacy_check");
  Eigen::MatrixXd z(static_cast<Eigen::Index>(tuning.size()), static_cast<Eigen::Index>(model.k));
  for (std::size_t i = 0; i < tuning.size(); ++i) z.row(static_cast<Eigen::Index>(i)) = standardize(model, tuning[i]).transpose();
  const auto k = static_cast<Eigen::Index>(model.k);
  const double stat = (detail::unbiased_covariance(z) - Eigen::MatrixXd::Identity(k, k)).norm() / std::sqrt(double(k));
  return {stat, stat < 1.0};
}

struct Thresholds {
  double c1 = 0.0, c2 = 0.0;
};

/// c1 = sqrt(2 ln k), c2 = sqrt(2 ln(k a_k)) with a_k = (ln k)^-2.
inline Thresholds thresholds(std::size_t k) {
  if (k < 2) throw InvalidArgument("thresholds: need k >= 2");
  const double lk = std::log(static_cast<double>(k));
  const double kak = static_cast<double>(k) / (lk * lk);
  if (!(kak > 1.0)) throw InvalidArgument("thresholds: k a_k <= 1, c2 undefined for k = " + std::to_string(k));
  return {std::sqrt(2.0 * lk), std::sqrt(2.0 * std::log(kak))};
}

inline double control_statistic(const Eigen::VectorXd& z, StatisticKind kind, double c) {
  if (!(c >= 0.0)) throw InvalidArgument("control_statistic: threshold must be >= 0");
  if (!z.allFinite()) throw InvalidArgument("control_statistic: non-finite z");
  double t = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double a = std::abs(z[i]);
    switch (kind) {
      case StatisticKind::N: t += a * a; break;
      case StatisticKind::H: if (a > c) t += a * a; break;
      case StatisticKind::S: if (a > c) t += (a - c) * (a - c); break;
    }
  }
  return t;
}

struct CalibrationConfig {
  double arl0 = 100.0;
  std::size_t permutations = 1000;  // J
  std::size_t max_iterations = 50;  // K
  double arl_tolerance = 0.0;       // eps_A; 0 selects 0.005 * arl0
  double h_tolerance = 0.0;         // eps_h; 0 selects 1e-6 * (max - min) of the statistics
  std::size_t run_length_cap = 0;   // 0 selects 100 * arl0
  std::uint64_t seed = 1;
  std::size_t threads = 1;

  void validate() const {
    if (!(arl0 > 1.0)) throw InvalidArgument("calibration: ARL0 must exceed 1");
    if (permutations < 1000) throw InvalidArgument("calibration: need at least 1000 permutations per iteration");
    if (max_iterations < 1) throw InvalidArgument("calibration: need at least one iteration");
    if (arl_tolerance < 0.0 || h_tolerance < 0.0) throw InvalidArgument("calibration: tolerances must be positive");
  }
  double eps_a() const { return arl_tolerance > 0.0 ? arl_tolerance : 0.005 * arl0; }
  std::size_t cap() const { return run_length_cap > 0 ? run_length_cap : static_cast<std::size_t>(std::ceil(100.0 * arl0)); }
};

struct Calibration {
  double h = 0.0;
  double arl = 0.0;  // estimate at the returned h
  std::size_t iterations = 0;
  bool converged = false;
};

/// Mean run length at limit h: run j draws statistics with replacement from its
/// own substream until one exceeds h. Substreams are reused for every h, so the
/// estimate is monotone in h.
inline double resampled_arl(const std::vector<double>& stats, double h, const CalibrationConfig& cfg) {
  const std::size_t J = cfg.permutations, cap = cfg.cap();
  std::vector<double> rl(J);
  const Rng root(cfg.seed);
  parallel_for(
      J,
      [&](std::size_t j) {
        Rng rng = root.substream(j);
        std::size_t t = 1;
        while (t < cap && !(stats[rng.below(stats.size())] > h)) ++t;
        rl[j] = static_cast<double>(t);
      },
      cfg.threads);
  double sum = 0.0;
  for (double v : rl) sum += v;
  return sum / static_cast<double>(J);
}

/// Bisection for the control limit on tuning-set statistics.
inline Calibration calibrate_limit(const std::vector<double>& stats, const CalibrationConfig& cfg) {
  cfg.validate();
  if (stats.size() < 100) throw InvalidArgument("calibrate_limit: need at least 100 tuning statistics");
  for (double s : stats)
    if (!std::isfinite(s)) throw InvalidArgument("calibrate_limit: non-finite statistic");
  const auto [lo_it, hi_it] = std::minmax_element(stats.begin(), stats.end());
  double hl = *lo_it, hu = *hi_it;
  if (!(hu > hl)) throw InvalidArgument("calibrate_limit: all tuning statistics are equal");
  const double eps_h = cfg.h_tolerance > 0.0 ? cfg.h_tolerance : 1e-6 * (hu - hl);
  Calibration out;
  double prev = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t it = 1; it <= cfg.max_iterations; ++it) {
    const double h = 0.5 * (hl + hu);
    const double arl = resampled_arl(stats, h, cfg);
    out = {h, arl, it, false};
    if (arl < cfg.arl0)
      hl = h;
    else
      hu = h;
    if (std::abs(h - prev) < eps_h || std::abs(arl - cfg.arl0) < cfg.eps_a()) {
      out.converged = true;
      return out;
    }
    prev = h;
  }
  warn("calibrate_limit: no convergence after " + std::to_string(cfg.max_iterations) + " iterations; h = " +
       std::to_string(out.h) + ", ARL = " + std::to_string(out.arl));
  return out;
}

struct ChartDecision {
  std::size_t t = 0;
  double statistic = 0.0;
  bool alarm = false;
};

inline ChartDecision monitor_step(const MonitorModel& model, const FeatureVector& x, std::size_t t) {
  if (!model.calibrated()) throw InvalidArgument("monitor_step: model has no control limit");
  const double s = control_statistic(standardize(model, x), model.statistic, model.c);
  return {t, s, s > model.h};
}

/// Online chart: one decision per observation, in arrival order.
class ControlChart {
 public:
  explicit ControlChart(MonitorModel model) : model_(std::move(model)) {
    if (!model_.calibrated()) throw InvalidArgument("ControlChart: model has no control limit");
  }
  const ChartDecision& push(const FeatureVector& x) {
    history_.push_back(monitor_step(model_, x, history_.size() + 1));
    return history_.back();
  }
  const MonitorModel& model() const { return model_; }
  const std::vector<ChartDecision>& history() const { return history_; }
  // Index (1-based) of the first alarm, or 0.
  std::size_t first_alarm() const {
    for (const auto& d : history_)
      if (d.alarm) return d.t;
    return 0;
  }

 private:
  MonitorModel model_;
  std::vector<ChartDecision> history_;
};

inline nlohmann::json to_json(const MonitorModel& m) {
  nlohmann::json j;
  j["version"] = MonitorModel::version;
  j["backend"] = to_string(m.backend);
  j["k"] = m.k;
  j["statistic"] = to_string(m.statistic);
  j["c"] = m.c;
  if (!m.calibrated())
    j["h"] = nullptr;
  else
    j["h"] = std::isinf(m.h) ? nlohmann::json("inf") : nlohmann::json(m.h);
  j["mu"] = std::vector<double>(m.mu.data(), m.mu.data() + m.mu.size());
  std::vector<double> s;
  for (Eigen::Index r = 0; r < m.sigma_inv_sqrt.rows(); ++r)
    for (Eigen::Index c = 0; c < m.sigma_inv_sqrt.cols(); ++c) s.push_back(m.sigma_inv_sqrt(r, c));
  j["sigma_inv_sqrt"] = s;
  j["regularization"] = {{"floor", m.regularization.floor},
                         {"floored", m.regularization.floored},
                         {"min_eigenvalue", m.regularization.min_eigenvalue},
                         {"max_eigenvalue", m.regularization.max_eigenvalue}};
  j["provenance"] = {{"seeds", m.provenance.seeds}, {"m", m.provenance.m}, {"tuning_size", m.provenance.tuning_size}};
  if (m.adequacy) j["adequacy"] = {{"stat", m.adequacy->stat}, {"pass", m.adequacy->pass}};
  if (const auto& c = m.calibration)
    j["calibration"] = {{"arl0", c->arl0},   {"permutations", c->permutations}, {"seed", c->seed},
                        {"arl", c->arl},     {"iterations", c->iterations},     {"converged", c->converged}};
  return j;
}

inline MonitorModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != MonitorModel::version) throw InvalidArgument("model: unsupported version");
    MonitorModel m;
    m.backend = backend_from_string(j.at("backend").get<std::string>());
    m.k = j.at("k").get<std::size_t>();
    m.statistic = statistic_from_string(j.at("statistic").get<std::string>());
    m.c = j.at("c").get<double>();
    const auto& h = j.at("h");
    if (h.is_null())
      m.h = std::numeric_limits<double>::quiet_NaN();
    else if (h.is_string() && h.get<std::string>() == "inf")
      m.h = std::numeric_limits<double>::infinity();
    else
      m.h = h.get<double>();
    const auto mu = j.at("mu").get<std::vector<double>>();
    const auto s = j.at("sigma_inv_sqrt").get<std::vector<double>>();
    if (mu.size() != m.k || s.size() != m.k * m.k) throw InvalidArgument("model: array sizes do not match k");
    const auto k = static_cast<Eigen::Index>(m.k);
    m.mu = Eigen::Map<const Eigen::VectorXd>(mu.data(), k);
    m.sigma_inv_sqrt = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(s.data(), k, k);
    const auto& r = j.at("regularization");
    m.regularization = {r.at("floor").get<double>(), r.at("floored").get<std::size_t>(),
                        r.at("min_eigenvalue").get<double>(), r.at("max_eigenvalue").get<double>()};
    const auto& p = j.at("provenance");
    m.provenance = {p.at("seeds").get<std::vector<std::uint64_t>>(), p.at("m").get<std::size_t>(),
                    p.at("tuning_size").get<std::size_t>()};
    if (j.contains("adequacy"))
      m.adequacy = Adequacy{j["adequacy"].at("stat").get<double>(), j["adequacy"].at("pass").get<bool>()};
    if (j.contains("calibration")) {
      const auto& c = j["calibration"];
      m.calibration = CalibrationRecord{c.at("arl0").get<double>(),         c.at("permutations").get<std::size_t>(),
                                        c.at("seed").get<std::uint64_t>(),  c.at("arl").get<double>(),
                                        c.at("iterations").get<std::size_t>(), c.at("converged").get<bool>()};
    }
    if (m.c < 0.0) throw InvalidArgument("model: negative threshold");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("model: malformed JSON: ") + e.what());
  }
}

}  // namespace rfm
