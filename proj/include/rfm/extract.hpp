#pragma once

#include "rfm/feature.hpp"
#include "rfm/heat.hpp"
#include "rfm/laplacian.hpp"

namespace rfm {

/// Backend choice and its parameters for turning a cloud into a feature vector.
struct ExtractorConfig {
  Backend backend = Backend::rl;
  std::size_t k = default_k_rl;
  std::size_t n_neigh = default_n_neigh;
  double time_factor = 1.0;  // hm only
  EigenSolverOptions eig{};
};

inline FeatureVector extract_features(const PointCloud& pc, const ExtractorConfig& cfg, std::size_t threads = 1) {
  if (cfg.backend == Backend::rl) return rl_spectrum(pc, cfg.k, cfg.n_neigh, cfg.eig, threads);
  HeatParams hp;
  hp.n_neigh = cfg.n_neigh;
  hp.time_factor = cfg.time_factor;
  hp.threads = threads;
  hp.eig = cfg.eig;
  return hm_spectrum(pc, cfg.k, hp);
}

/// Full descending spectrum of B, for choosing k by explained variance.
inline std::vector<double> hm_full_spectrum(const PointCloud& pc, const ExtractorConfig& cfg, std::size_t threads = 1) {
  const PointCloud clean = pc.deduplicated();
  const RobustLaplacian rl = robust_laplacian(clean, cfg.n_neigh, threads);
  const HeatSolveContext ctx(rl, cfg.time_factor);
  const Eigen::MatrixXd b = similarity_matrix(pairwise_geodesics(ctx, threads).D);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b, Eigen::EigenvaluesOnly);
  std::vector<double> v(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
  std::reverse(v.begin(), v.end());
  return v;
}

}  // namespace rfm
