#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "rfm/error.hpp"
#include "rfm/extract.hpp"
#include "rfm/kdtree.hpp"
#include "rfm/monitoring.hpp"
#include "rfm/parallel.hpp"
#include "rfm/pointcloud.hpp"
#include "rfm/rng.hpp"

namespace rfm {

enum class Variant { ic, global_noise, random_point_noise, cluster_noise, gaussian_bubble, lack, excess };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::ic: return "ic";
    case Variant::global_noise: return "global_noise";
    case Variant::random_point_noise: return "random_point_noise";
    case Variant::cluster_noise: return "cluster_noise";
    case Variant::gaussian_bubble: return "gaussian_bubble";
    case Variant::lack: return "lack";
    case Variant::excess: return "excess";
  }
  return "?";
}

inline Variant variant_from_string(std::string_view s) {
  for (auto v : {Variant::ic, Variant::global_noise, Variant::random_point_noise, Variant::cluster_noise,
                 Variant::gaussian_bubble, Variant::lack, Variant::excess})
    if (s == to_string(v)) return v;
  throw InvalidArgument("unknown scenario variant '" + std::string(s) + "'");
}

/// One in-control or defect-injection setting. n_min = n_max = 0 keeps every base point.
struct Scenario {
  Variant variant = Variant::ic;
  double sigma0 = 1e-4;
  double snr = 1.0;        // sigma1 / sigma0
  double fraction = 0.0;   // p: share of points affected
  double shift = 0.0;      // SS
  double bandwidth = 0.0;  // bubble beta; 0 selects cluster radius / 2
  std::size_t n_min = 0, n_max = 0;

  bool uses_snr() const {
    return variant == Variant::global_noise || variant == Variant::random_point_noise || variant == Variant::cluster_noise;
  }
  bool uses_fraction() const { return variant != Variant::ic && variant != Variant::global_noise; }
  bool uses_shift() const { return variant == Variant::gaussian_bubble || variant == Variant::excess; }

  void validate() const {
    if (!(sigma0 > 0.0) || !std::isfinite(sigma0)) throw InvalidArgument("scenario: sigma0 must be positive");
    if (uses_snr() && !(snr >= 1.0)) throw InvalidArgument("scenario: SNR must be >= 1");
    if (uses_fraction() && !(fraction > 0.0 && fraction <= 1.0))
      throw InvalidArgument("scenario: fraction must be in (0, 1] for " + to_string(variant));
    if (uses_shift() && !(shift > 0.0)) throw InvalidArgument("scenario: shift must be positive for " + to_string(variant));
    if (bandwidth < 0.0) throw InvalidArgument("scenario: bandwidth must be >= 0");
    if (n_min > n_max) throw InvalidArgument("scenario: n_min exceeds n_max");
  }
};

namespace detail {

// Seed point plus its nearest neighbors, `count` points in all.
inline std::vector<std::size_t> grow_cluster(const PointCloud& pc, std::size_t count, Rng& rng) {
  if (count > pc.size())
    throw InvalidArgument("scenario: cluster of " + std::to_string(count) + " points exceeds cloud size " +
                          std::to_string(pc.size()));
  const std::size_t seed = rng.below(pc.size());
  std::vector<std::size_t> c{seed};
  if (count > 1) {
    const SpatialIndex index(pc.points());
    const auto nn = index.knn(seed, count - 1);
    c.insert(c.end(), nn.begin(), nn.end());
  }
  return c;
}

// Unit normal of the cluster's best-fit plane, pointing away from the cloud centroid.
inline Vec3 cluster_normal(const PointCloud& pc, const std::vector<std::size_t>& cluster) {
  Vec3 mean = Vec3::Zero();
  for (auto i : cluster) mean += pc[i];
  mean /= static_cast<double>(cluster.size());
  Mat3 cov = Mat3::Zero();
  for (auto i : cluster) cov += (pc[i] - mean) * (pc[i] - mean).transpose();
  Vec3 n = Eigen::SelfAdjointEigenSolver<Mat3>(cov).eigenvectors().col(0);
  if (n.dot(mean - pc.centroid()) < 0.0) n = -n;
  return n;
}

inline std::size_t cluster_size(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
}

}  // namespace detail

/// Simulated observation: subsample, inject the defect, add noise. Subsampling,
/// defect placement and noise use separate substreams of `stream`, so SNR = 1
/// reproduces the in-control cloud exactly.
inline PointCloud inject_defect(const PointCloud& base, const Scenario& s, const Rng& stream) {
  s.validate();
  Rng sub_rng = stream.substream(0), defect_rng = stream.substream(1), noise_rng = stream.substream(2);
  const std::size_t n_max = s.n_max ? s.n_max : base.size(), n_min = s.n_max ? s.n_min : base.size();
  const PointCloud pc = subsample_random(base, n_min, n_max, sub_rng);
  const std::size_t n = pc.size();
  const double sigma1 = s.snr * s.sigma0;
  std::vector<double> sigma(n, s.sigma0);
  std::vector<Vec3> pts = pc.points();

  switch (s.variant) {
    case Variant::ic: break;
    case Variant::global_noise: std::fill(sigma.begin(), sigma.end(), sigma1); break;
    case Variant::random_point_noise:
      for (auto i : sample_without_replacement(n, detail::cluster_size(s.fraction, n), defect_rng)) sigma[i] = sigma1;
      break;
    case Variant::cluster_noise:
      for (auto i : detail::grow_cluster(pc, detail::cluster_size(s.fraction, n), defect_rng)) sigma[i] = sigma1;
      break;
    case Variant::gaussian_bubble: {
      const auto c = detail::grow_cluster(pc, detail::cluster_size(s.fraction, n), defect_rng);
      const Vec3 normal = detail::cluster_normal(pc, c);
      double radius = 0.0;
      for (auto i : c) radius = std::max(radius, (pc[i] - pc[c[0]]).norm());
      const double beta = s.bandwidth > 0.0 ? s.bandwidth : 0.5 * radius;
      for (auto i : c) {
        const double d2 = (pc[i] - pc[c[0]]).squaredNorm();
        pts[i] += s.shift * (beta > 0.0 ? std::exp(-d2 / (2.0 * beta * beta)) : 1.0) * normal;
      }
      break;
    }
    case Variant::excess: {
      const auto c = detail::grow_cluster(pc, detail::cluster_size(s.fraction, n), defect_rng);
      const Vec3 normal = detail::cluster_normal(pc, c);
      for (auto i : c) pts[i] += s.shift * normal;
      break;
    }
    case Variant::lack: {
      const auto c = detail::grow_cluster(pc, detail::cluster_size(s.fraction, n), defect_rng);
      std::vector<char> drop(n, 0);
      for (auto i : c) drop[i] = 1;
      std::vector<Vec3> kept;
      kept.reserve(n - c.size());
      for (std::size_t i = 0; i < n; ++i)
        if (!drop[i]) kept.push_back(pts[i]);
      if (kept.size() < 4) throw InvalidArgument("scenario: lack of material leaves fewer than 4 points");
      return add_isotropic_noise(PointCloud(std::move(kept), pc.source_id()), s.sigma0, noise_rng);
    }
  }
  return add_noise_per_point(PointCloud(std::move(pts), pc.source_id()), sigma, noise_rng);
}

/// Features of `count` independent observations; observation i uses substream i of `root`.
inline std::vector<FeatureVector> simulate_features(const PointCloud& base, const Scenario& s, std::size_t count,
                                                    const ExtractorConfig& ex, const Rng& root,
                                                    std::size_t threads = 1) {
  std::vector<FeatureVector> out(count);
  parallel_for(
      count, [&](std::size_t i) { out[i] = extract_features(inject_defect(base, s, root.substream(i)), ex); }, threads);
  return out;
}

struct ArlResult {
  std::string scenario;
  Backend backend = Backend::rl;
  StatisticKind statistic = StatisticKind::N;
  double c = 0.0;
  double arl = 0.0, sd = 0.0;
  std::size_t reps = 0, max_rl = 0;
  std::vector<std::size_t> run_lengths;
};

/// Run-length study of several charts that share one feature backend. Each
/// replication starts a fresh chart at t = 1 and feeds every chart the same
/// observations, drawn from substream (rep, t) of `root`, until all have alarmed
/// or max_rl is reached.
inline std::vector<ArlResult> estimate_arl(const PointCloud& base, const Scenario& s,
                                           const std::vector<MonitorModel>& models, const ExtractorConfig& ex,
                                           std::size_t reps, std::size_t max_rl, const Rng& root,
                                           std::size_t threads = 1) {
  s.validate();
  if (models.empty()) throw InvalidArgument("estimate_arl: no models");
  if (reps < 1 || max_rl < 1) throw InvalidArgument("estimate_arl: need reps >= 1 and max_rl >= 1");
  for (const auto& m : models) {
    if (!m.calibrated()) throw InvalidArgument("estimate_arl: model has no control limit");
    if (m.k != ex.k || m.backend != ex.backend) throw InvalidArgument("estimate_arl: model does not match the extractor");
  }
  const std::size_t nm = models.size();
  std::vector<std::vector<std::size_t>> rl(nm, std::vector<std::size_t>(reps, max_rl));
  parallel_for(
      reps,
      [&](std::size_t r) {
        const Rng rep_rng = root.substream(r);
        std::vector<char> done(nm, 0);
        std::size_t open = nm;
        for (std::size_t t = 1; t <= max_rl && open > 0; ++t) {
          FeatureVector f;
          try {
            f = extract_features(inject_defect(base, s, rep_rng.substream(t)), ex);
          } catch (const Error& e) {
            throw Error("replication " + std::to_string(r) + ", item " + std::to_string(t) + ": " + e.what());
          }
          for (std::size_t j = 0; j < nm; ++j) {
            if (done[j] || !monitor_step(models[j], f, t).alarm) continue;
            rl[j][r] = t;
            done[j] = 1;
            --open;
          }
        }
      },
      threads);

  std::vector<ArlResult> out;
  for (std::size_t j = 0; j < nm; ++j) {
    ArlResult a;
    a.scenario = to_string(s.variant);
    a.backend = models[j].backend;
    a.statistic = models[j].statistic;
    a.c = models[j].c;
    a.reps = reps;
    a.max_rl = max_rl;
    a.run_lengths = rl[j];
    double sum = 0.0;
    for (auto v : rl[j]) sum += static_cast<double>(v);
    a.arl = sum / static_cast<double>(reps);
    double ss = 0.0;
    for (auto v : rl[j]) ss += (static_cast<double>(v) - a.arl) * (static_cast<double>(v) - a.arl);
    a.sd = reps > 1 ? std::sqrt(ss / static_cast<double>(reps - 1)) : 0.0;
    out.push_back(std::move(a));
  }
  return out;
}

inline ArlResult estimate_arl(const PointCloud& base, const Scenario& s, const MonitorModel& model,
                              const ExtractorConfig& ex, std::size_t reps, std::size_t max_rl, const Rng& root,
                              std::size_t threads = 1) {
  return estimate_arl(base, s, std::vector<MonitorModel>{model}, ex, reps, max_rl, root, threads).front();
}

}  // namespace rfm
