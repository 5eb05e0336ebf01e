#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "rfm/eigen.hpp"
#include "rfm/error.hpp"
#include "rfm/feature.hpp"
#include "rfm/local_triangulation.hpp"
#include "rfm/pointcloud.hpp"
#include "rfm/sparse.hpp"
#include "rfm/tufted_cover.hpp"

namespace rfm {

/// Operating points used by the shipped configs.
inline constexpr std::size_t default_n_neigh = 30;
inline constexpr std::size_t default_k_rl = 100;
inline constexpr std::size_t default_k_rl_valve_min = 90;
inline constexpr std::size_t default_k_rl_valve_max = 120;

struct LaplacianPair {
  SparseSym L;
  DiagMass M;
};

/// Cotan stiffness (w = cot/2 per corner) and lumped mass (area/3 per corner), summed
/// over every face of the cover.
inline LaplacianPair assemble_laplacian(const TuftedTriangulation& t) {
  const std::size_t n = t.vertex_count();
  std::vector<Triplet> trip;
  trip.reserve(4 * t.halfedge_count());
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t f = 0; f < t.face_count(); ++f) {
    const double l0 = t.length(3 * f), l1 = t.length(3 * f + 1), l2 = t.length(3 * f + 2);
    const double area = TuftedTriangulation::triangle_area(l0, l1, l2);
    const double lmax = std::max({l0, l1, l2});
    if (!(area >= 1e-14 * lmax * lmax))
      throw GeometryError("assemble_laplacian: degenerate face " + std::to_string(f), f);
    for (std::size_t l = 0; l < 3; ++l) {
      const std::size_t h = 3 * f + l;
      const double a = t.length(h), b = t.length(TuftedTriangulation::next(h)), c = t.length(TuftedTriangulation::prev(h));
      const double w = 0.5 * (b * b + c * c - a * a) / (4.0 * area);
      if (!std::isfinite(w)) throw GeometryError("assemble_laplacian: non-finite cotangent in face " + std::to_string(f), f);
      const auto i = static_cast<int>(t.tail(h)), j = static_cast<int>(t.head(h));
      mass[i] += area / 3.0;
      if (i == j) continue;  // loop edge from flipping: w (u_i - u_i) = 0
      trip.emplace_back(std::max(i, j), std::min(i, j), -w);
      diag[i] += w;
      diag[j] += w;
    }
  }
  for (Eigen::Index i = 0; i < diag.size(); ++i) trip.emplace_back(static_cast<int>(i), static_cast<int>(i), diag[i]);
  return {SparseSym::from_lower_triplets(n, trip), DiagMass(mass)};
}

/// Robust Laplacian of a point cloud with its intrinsic cover.
struct RobustLaplacian {
  TuftedTriangulation cover;
  LaplacianPair pair;
  std::size_t flips = 0;
  // Factor applied to the raw cover assembly: 1/2 for the double cover, 1/3 because
  // each triangle is typically produced by all three of its vertices' stars.
  static constexpr double normalization = 1.0 / 6.0;
};

inline RobustLaplacian robust_laplacian(const PointCloud& pc, std::size_t n_neigh = default_n_neigh,
                                        std::size_t threads = 1) {
  auto tris = all_local_triangles(pc, n_neigh, threads);
  TuftedTriangulation cover = build_tufted_cover(pc, tris);
  const FlipStats fs = intrinsic_delaunay_flip(cover);
  LaplacianPair raw = assemble_laplacian(cover);
  LaplacianPair lp{raw.L.scaled(RobustLaplacian::normalization), raw.M.scaled(RobustLaplacian::normalization)};
  return {std::move(cover), std::move(lp), fs.flips};
}

/// k smallest nonzero eigenvalues of L u = lambda M u for the robust Laplacian.
inline FeatureVector rl_spectrum(const PointCloud& pc, std::size_t k, std::size_t n_neigh = default_n_neigh,
                                 const EigenSolverOptions& opt = {}, std::size_t threads = 1) {
  if (k < 1 || k + 2 > pc.size()) throw InvalidArgument("rl_spectrum: need 1 <= k <= n-2");
  const PointCloud clean = pc.deduplicated();
  if (k + 2 > clean.size()) throw InvalidArgument("rl_spectrum: too few distinct points for k");
  const RobustLaplacian rl = robust_laplacian(clean, n_neigh, threads);
  EigenSolverOptions values_only = opt;
  values_only.compute_vectors = false;
  const Spectrum s = smallest_eigenpairs(rl.pair.L, rl.pair.M, k, true, values_only);
  return {Eigen::Map<const Eigen::VectorXd>(s.values.data(), static_cast<Eigen::Index>(s.size())), Backend::rl};
}

struct ElbowCurve {
  std::vector<std::size_t> k;
  std::vector<double> discrepancy;
  std::size_t selected = 0;
};

/// Discrepancy between the coordinates and their M-orthogonal projection onto the
/// first k eigenvectors (null vector included), for each k in the grid.
inline ElbowCurve elbow_curve(const PointCloud& pc, std::vector<std::size_t> k_grid,
                              std::size_t n_neigh = default_n_neigh, const EigenSolverOptions& opt = {}) {
  if (k_grid.empty()) throw InvalidArgument("elbow_curve: empty k grid");
  std::sort(k_grid.begin(), k_grid.end());
  k_grid.erase(std::unique(k_grid.begin(), k_grid.end()), k_grid.end());
  const PointCloud clean = pc.deduplicated();
  const std::size_t n = clean.size(), kmax = k_grid.back();
  if (k_grid.front() < 1 || kmax > n) throw InvalidArgument("elbow_curve: k out of range");
  const RobustLaplacian rl = robust_laplacian(clean, n_neigh);
  Eigen::MatrixXd u;
  if (kmax + 2 > n) {
    u = dense_eig_reference(rl.pair.L.dense(), rl.pair.M.diagonal()).vectors;
  } else {
    u = smallest_eigenpairs(rl.pair.L, rl.pair.M, kmax, false, opt).vectors;
  }
  Eigen::MatrixXd s0(static_cast<Eigen::Index>(n), 3);
  for (std::size_t i = 0; i < n; ++i) s0.row(static_cast<Eigen::Index>(i)) = clean[i].transpose();
  // Coefficients in the M-orthonormal basis; prefixes give the nested projections.
  const Eigen::MatrixXd coef = u.transpose() * rl.pair.M.diagonal().asDiagonal() * s0;
  ElbowCurve c;
  for (std::size_t k : k_grid) {
    const auto kk = static_cast<Eigen::Index>(k);
    const Eigen::MatrixXd s = u.leftCols(kk) * coef.topRows(kk);
    c.k.push_back(k);
    c.discrepancy.push_back((s0 - s).norm());
  }
  return c;
}

/// Knee of the normalized curve (maximum distance to the endpoint chord), inflated by 10%.
inline std::size_t select_k_elbow(ElbowCurve& curve) {
  const std::size_t m = curve.k.size();
  if (m < 3 || curve.discrepancy.size() != m) throw InvalidArgument("select_k_elbow: need at least 3 grid points");
  const auto [dmin, dmax] = std::minmax_element(curve.discrepancy.begin(), curve.discrepancy.end());
  const double k0 = static_cast<double>(curve.k.front()), k1 = static_cast<double>(curve.k.back());
  if (*dmax - *dmin <= 0.0 || k1 <= k0)
    throw InvalidArgument("select_k_elbow: flat curve, no elbow; choose k manually");
  auto nx = [&](std::size_t i) { return (static_cast<double>(curve.k[i]) - k0) / (k1 - k0); };
  auto ny = [&](std::size_t i) { return (curve.discrepancy[i] - *dmin) / (*dmax - *dmin); };
  const Eigen::Vector2d a(nx(0), ny(0)), b(nx(m - 1), ny(m - 1));
  const Eigen::Vector2d dir = (b - a).normalized();
  std::size_t best = 0;
  double best_d = 0.0;
  for (std::size_t i = 1; i + 1 < m; ++i) {
    const Eigen::Vector2d p = Eigen::Vector2d(nx(i), ny(i)) - a;
    const double d = std::abs(p.x() * dir.y() - p.y() * dir.x());
    if (d > best_d) {
      best_d = d;
      best = i;
    }
  }
  if (best_d <= 1e-12) throw InvalidArgument("select_k_elbow: curve is linear, no elbow; choose k manually");
  curve.selected = static_cast<std::size_t>(std::ceil(1.1 * static_cast<double>(curve.k[best]) - 1e-9));
  return curve.selected;
}

}  // namespace rfm
