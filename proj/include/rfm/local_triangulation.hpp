#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <vector>

#include "rfm/error.hpp"
#include "rfm/kdtree.hpp"
#include "rfm/parallel.hpp"
#include "rfm/pointcloud.hpp"

namespace rfm {

/// Triangles of the neighborhood Delaunay triangulation incident to a center point.
struct LocalTriangulation {
  std::size_t center = 0;
  std::vector<std::array<std::size_t, 3>> triangles;  // (center, a, b)
};

struct TangentFrame {
  Vec3 origin, u, v, normal;
};

/// PCA frame of a neighborhood (center included); normal is the least-variance axis.
inline TangentFrame tangent_frame(const PointCloud& pc, std::size_t i, const std::vector<std::size_t>& nbrs) {
  Vec3 mean = pc[i];
  for (auto j : nbrs) mean += pc[j];
  mean /= static_cast<double>(nbrs.size() + 1);
  Mat3 cov = (pc[i] - mean) * (pc[i] - mean).transpose();
  for (auto j : nbrs) cov += (pc[j] - mean) * (pc[j] - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  const Vec3 ev = es.eigenvalues();
  if (!(ev[1] > 1e-12 * ev[2]))
    throw GeometryError("degenerate neighborhood at point " + std::to_string(i) + " (rank-deficient PCA)", i);
  TangentFrame f;
  f.origin = pc[i];
  f.normal = es.eigenvectors().col(0);
  f.u = es.eigenvectors().col(2);
  f.v = f.normal.cross(f.u);
  return f;
}

namespace detail {

struct ClipVertex {
  Eigen::Vector2d p;
  int label;  // neighbor id of the edge leaving this vertex, -1 for the bounding box
};

// Clip a convex polygon by {x : x.q <= |q|^2 / 2}; the new edge gets `label`.
inline void clip_halfplane(std::vector<ClipVertex>& poly, const Eigen::Vector2d& q, int label) {
  const double c = 0.5 * q.squaredNorm();
  const std::size_t m = poly.size();
  std::vector<double> s(m);
  bool any_out = false;
  for (std::size_t k = 0; k < m; ++k) {
    s[k] = poly[k].p.dot(q) - c;
    any_out |= s[k] > 0.0;
  }
  if (!any_out) return;
  std::vector<ClipVertex> out;
  out.reserve(m + 1);
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t nk = (k + 1) % m;
    const bool in = s[k] <= 0.0, next_in = s[nk] <= 0.0;
    if (in) out.push_back(poly[k]);
    if (in != next_in) {
      const double t = s[k] / (s[k] - s[nk]);
      const Eigen::Vector2d x = poly[k].p + t * (poly[nk].p - poly[k].p);
      // Entering the removed region starts the new edge; leaving resumes the old one.
      out.push_back({x, in ? label : poly[k].label});
    }
  }
  poly.swap(out);
}

}  // namespace detail

/// Delaunay star of point i within its n_neigh nearest neighbors, via the Voronoi cell of i
/// in the tangent plane. Cell edges still on the bounding box (side 2R, R = 100 max|q|)
/// contribute no triangle.
inline LocalTriangulation local_triangulation(const PointCloud& pc, const SpatialIndex& index, std::size_t i,
                                              std::size_t n_neigh) {
  if (n_neigh < 3) throw InvalidArgument("local_triangulation: n_neigh must be >= 3");
  const auto nbrs = index.knn(i, std::min(n_neigh, pc.size() - 1));
  const TangentFrame frame = tangent_frame(pc, i, nbrs);

  std::vector<Eigen::Vector2d> q(nbrs.size());
  double rmax = 0.0;
  for (std::size_t k = 0; k < nbrs.size(); ++k) {
    const Vec3 d = pc[nbrs[k]] - frame.origin;
    q[k] = {d.dot(frame.u), d.dot(frame.v)};
    rmax = std::max(rmax, q[k].norm());
  }
  const double r = 100.0 * rmax;
  std::vector<detail::ClipVertex> cell = {{{-r, -r}, -1}, {{r, -r}, -1}, {{r, r}, -1}, {{-r, r}, -1}};
  const double tiny = 1e-20 * rmax * rmax;
  for (std::size_t k = 0; k < nbrs.size(); ++k)
    if (q[k].squaredNorm() > tiny) detail::clip_halfplane(cell, q[k], static_cast<int>(k));

  LocalTriangulation lt;
  lt.center = i;
  const std::size_t m = cell.size();
  for (std::size_t k = 0; k < m; ++k) {
    const int a = cell[(k + m - 1) % m].label, b = cell[k].label;
    if (a < 0 || b < 0 || a == b) continue;
    const double area2 = std::abs(q[a].x() * q[b].y() - q[a].y() * q[b].x());
    if (area2 <= 1e-12 * rmax * rmax) continue;
    lt.triangles.push_back({i, nbrs[a], nbrs[b]});
  }
  return lt;
}

/// Union of all local triangulations, duplicates kept.
inline std::vector<std::array<std::size_t, 3>> all_local_triangles(const PointCloud& pc, std::size_t n_neigh,
                                                                    std::size_t threads = 1) {
  const SpatialIndex index(pc);
  std::vector<LocalTriangulation> stars(pc.size());
  parallel_for(pc.size(), [&](std::size_t i) { stars[i] = local_triangulation(pc, index, i, n_neigh); }, threads);
  std::vector<std::array<std::size_t, 3>> out;
  for (const auto& s : stars) out.insert(out.end(), s.triangles.begin(), s.triangles.end());
  return out;
}

}  // namespace rfm
