#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "rfm/error.hpp"
#include "rfm/pointcloud.hpp"
#include "rfm/rng.hpp"

// Synthetic base geometries used for tests, demos and desk-scale studies.
namespace rfm {

inline Vec3 random_unit_vector(Rng& rng) {
  for (;;) {
    Vec3 v(rng.normal(), rng.normal(), rng.normal());
    const double len = v.norm();
    if (len > 1e-12) return v / len;
  }
}

// Uniform random sample of the sphere of the given radius.
inline PointCloud sample_sphere(std::size_t n, Rng& rng, double radius = 1.0) {
  std::vector<Vec3> pts;
  pts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) pts.push_back(radius * random_unit_vector(rng));
  return PointCloud(std::move(pts), "sphere");
}

// Area-uniform sample of an axis-aligned ellipsoid (rejection on the
// surface-area element of the radial map).
inline PointCloud sample_ellipsoid(std::size_t n, Rng& rng, const Vec3& radii) {
  std::vector<Vec3> pts;
  pts.reserve(n);
  const double min_r = radii.minCoeff();
  while (pts.size() < n) {
    const Vec3 u = random_unit_vector(rng);
    // Area element of x = diag(radii) u relative to the unit sphere is
    // prod(radii) * |diag(radii)^-1 u|, maximal at prod(radii) / min_r.
    const Vec3 g(u.x() / radii.x(), u.y() / radii.y(), u.z() / radii.z());
    if (rng.uniform() <= min_r * g.norm()) pts.push_back(radii.cwiseProduct(u));
  }
  return PointCloud(std::move(pts), "ellipsoid");
}

// Area-uniform sample of a torus with major radius R and minor radius r.
inline PointCloud sample_torus(std::size_t n, Rng& rng, double major = 1.0, double minor = 0.35) {
  std::vector<Vec3> pts;
  pts.reserve(n);
  while (pts.size() < n) {
    const double u = 2.0 * std::numbers::pi * rng.uniform();
    const double v = 2.0 * std::numbers::pi * rng.uniform();
    const double w = major + minor * std::cos(v);
    if (rng.uniform() * (major + minor) > w) continue;
    pts.emplace_back(w * std::cos(u), w * std::sin(u), minor * std::sin(v));
  }
  return PointCloud(std::move(pts), "torus");
}

// Star-shaped lumpy body, r(u) = 1 + a * (bumps), sampled by direction.
inline PointCloud sample_blob(std::size_t n, Rng& rng, double amplitude = 0.2) {
  std::vector<Vec3> pts;
  pts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 u = random_unit_vector(rng);
    const double r = 1.0 + amplitude * (0.6 * u.x() * u.y() + 0.8 * u.z() * u.z() * u.x() - 0.5 * u.y() * u.z() +
                                        0.3 * std::sin(3.0 * u.x()));
    pts.push_back(r * u);
  }
  return PointCloud(std::move(pts), "blob");
}

// Regular planar grid of nx * ny points with the given spacing, z = 0.
inline PointCloud planar_grid(std::size_t nx, std::size_t ny, double spacing = 1.0) {
  std::vector<Vec3> pts;
  pts.reserve(nx * ny);
  for (std::size_t j = 0; j < ny; ++j)
    for (std::size_t i = 0; i < nx; ++i)
      pts.emplace_back(spacing * static_cast<double>(i), spacing * static_cast<double>(j), 0.0);
  return PointCloud(std::move(pts), "grid");
}

inline PointCloud make_shape(const std::string& name, std::size_t n, Rng& rng) {
  if (name == "sphere") return sample_sphere(n, rng);
  if (name == "ellipsoid") return sample_ellipsoid(n, rng, Vec3(1.0, 0.7, 0.5));
  if (name == "torus") return sample_torus(n, rng);
  if (name == "blob") return sample_blob(n, rng);
  throw InvalidArgument("unknown shape '" + name + "' (sphere, ellipsoid, torus, blob)");
}

}  // namespace rfm
