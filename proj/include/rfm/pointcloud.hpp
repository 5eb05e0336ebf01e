#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rfm/error.hpp"
#include "rfm/log.hpp"
#include "rfm/rng.hpp"

namespace rfm {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// An unstructured set of 3D points, the raw quality observation.
///
/// Construction validates n >= 4 and finite coordinates.  Exact duplicate
/// points are allowed here; `deduplicated()` removes them before anything
/// that would produce zero-length edges.
class PointCloud {
 public:
  PointCloud() = default;
  explicit PointCloud(std::vector<Vec3> points, std::string source_id = {})
      : points_(std::move(points)), source_id_(std::move(source_id)) {
    validate();
  }

  std::size_t size() const { return points_.size(); }
  const Vec3& operator[](std::size_t i) const { return points_[i]; }
  const std::vector<Vec3>& points() const { return points_; }
  const std::string& source_id() const { return source_id_; }
  void set_source_id(std::string id) { source_id_ = std::move(id); }

  // Number of points that exactly repeat an earlier point.
  std::size_t duplicate_count() const { return size() - unique_indices().size(); }

  // Copy without exact duplicates (first occurrence kept, order preserved).
  PointCloud deduplicated() const {
    auto keep = unique_indices();
    if (keep.size() == size()) return *this;
    warn("point cloud '" + source_id_ + "': removed " + std::to_string(size() - keep.size()) +
         " duplicate point(s)");
    std::vector<Vec3> pts;
    pts.reserve(keep.size());
    for (auto i : keep) pts.push_back(points_[i]);
    return PointCloud(std::move(pts), source_id_);
  }

  Vec3 centroid() const {
    Vec3 c = Vec3::Zero();
    for (const auto& p : points_) c += p;
    return c / static_cast<double>(size());
  }

 private:
  void validate() const {
    if (points_.size() < 4)
      throw InvalidArgument("point cloud needs at least 4 points, got " + std::to_string(points_.size()));
    for (std::size_t i = 0; i < points_.size(); ++i)
      if (!points_[i].allFinite()) throw GeometryError("non-finite coordinate", i);
  }

  std::vector<std::size_t> unique_indices() const {
    std::vector<std::size_t> order(size());
    for (std::size_t i = 0; i < size(); ++i) order[i] = i;
    auto less = [&](std::size_t a, std::size_t b) {
      const auto& p = points_[a];
      const auto& q = points_[b];
      if (p.x() != q.x()) return p.x() < q.x();
      if (p.y() != q.y()) return p.y() < q.y();
      if (p.z() != q.z()) return p.z() < q.z();
      return a < b;
    };
    std::sort(order.begin(), order.end(), less);
    std::vector<std::size_t> keep;
    keep.reserve(size());
    for (std::size_t k = 0; k < order.size(); ++k)
      if (k == 0 || points_[order[k]] != points_[order[k - 1]]) keep.push_back(order[k]);
    std::sort(keep.begin(), keep.end());
    return keep;
  }

  std::vector<Vec3> points_;
  std::string source_id_;
};

/// Proper rigid motion p -> R p + t.
struct RigidMotion {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  RigidMotion() = default;
  RigidMotion(const Mat3& r, const Vec3& t) : rotation(r), translation(t) {
    const double ortho = (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (!(ortho <= 1e-12) || r.determinant() <= 0.0)
      throw InvalidArgument("rotation must be orthonormal with determinant +1");
  }

  static RigidMotion random(Rng& rng, double max_translation = 1.0) {
    // Uniform rotation from a normalized Gaussian quaternion.
    Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    q.normalize();
    Vec3 t(rng.uniform(), rng.uniform(), rng.uniform());
    t = (2.0 * t - Vec3::Ones()) * max_translation;
    return RigidMotion(q.toRotationMatrix(), t);
  }
};

inline PointCloud apply_rigid_motion(const PointCloud& pc, const RigidMotion& g) {
  std::vector<Vec3> out;
  out.reserve(pc.size());
  for (const auto& p : pc.points()) out.push_back(g.rotation * p + g.translation);
  return PointCloud(std::move(out), pc.source_id());
}

inline PointCloud scaled(const PointCloud& pc, double s) {
  std::vector<Vec3> out;
  out.reserve(pc.size());
  for (const auto& p : pc.points()) out.push_back(s * p);
  return PointCloud(std::move(out), pc.source_id());
}

// Adds per-point isotropic Gaussian noise with standard deviation sigma[i].
inline PointCloud add_noise_per_point(const PointCloud& pc, const std::vector<double>& sigma, Rng& rng) {
  std::vector<Vec3> out(pc.points());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = rng.normal(), y = rng.normal(), z = rng.normal();
    out[i] += sigma[i] * Vec3(x, y, z);
  }
  return PointCloud(std::move(out), pc.source_id());
}

inline PointCloud add_isotropic_noise(const PointCloud& pc, double sigma, Rng& rng) {
  if (!std::isfinite(sigma) || sigma < 0.0) throw InvalidArgument("noise sigma must be finite and >= 0");
  return add_noise_per_point(pc, std::vector<double>(pc.size(), sigma), rng);
}

// Keeps a uniformly sized random subset in [n_min, n_max], original order.
inline PointCloud subsample_random(const PointCloud& pc, std::size_t n_min, std::size_t n_max, Rng& rng) {
  if (n_min < 4 || n_min > n_max || n_max > pc.size())
    throw InvalidArgument("subsample range [" + std::to_string(n_min) + ", " + std::to_string(n_max) +
                          "] invalid for a cloud of " + std::to_string(pc.size()) + " points");
  const auto target = static_cast<std::size_t>(
      rng.between(static_cast<std::int64_t>(n_min), static_cast<std::int64_t>(n_max)));
  if (target == pc.size()) return pc;
  const auto keep = sample_without_replacement(pc.size(), target, rng);
  std::vector<Vec3> out;
  out.reserve(target);
  for (auto i : keep) out.push_back(pc[i]);
  return PointCloud(std::move(out), pc.source_id());
}

}  // namespace rfm
