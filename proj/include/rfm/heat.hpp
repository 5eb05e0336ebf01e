#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "rfm/eigen.hpp"
#include "rfm/error.hpp"
#include "rfm/feature.hpp"
#include "rfm/laplacian.hpp"
#include "rfm/log.hpp"
#include "rfm/parallel.hpp"
#include "rfm/pointcloud.hpp"
#include "rfm/sparse.hpp"

namespace rfm {

inline constexpr std::size_t default_k_hm = 151;
inline constexpr std::size_t max_geodesic_points = 20000;

struct HeatParams {
  std::size_t n_neigh = default_n_neigh;
  double time_factor = 1.0;  // t = time_factor * mean_edge^2
  std::size_t threads = 1;
  EigenSolverOptions eig{};
};

/// Factorizations and face geometry shared by every heat-method solve on one cover.
class HeatSolveContext {
 public:
  explicit HeatSolveContext(const RobustLaplacian& rl, double time_factor = 1.0)
      : n_(rl.pair.L.size()), scale_(RobustLaplacian::normalization) {
    if (!(time_factor > 0.0)) throw InvalidArgument("heat: time factor must be positive");
    const TuftedTriangulation& c = rl.cover;
    double sum = 0.0;
    for (std::size_t h = 0; h < c.halfedge_count(); ++h) sum += c.length(h);
    mean_edge_ = sum / static_cast<double>(c.halfedge_count());
    time_ = time_factor * mean_edge_ * mean_edge_;

    faces_.reserve(c.face_count());
    for (std::size_t f = 0; f < c.face_count(); ++f) {
      Face fc;
      const double l0 = c.length(3 * f), l1 = c.length(3 * f + 1), l2 = c.length(3 * f + 2);
      fc.area = TuftedTriangulation::triangle_area(l0, l1, l2);
      if (!(fc.area > 0.0)) throw GeometryError("heat: degenerate face", f);
      // Corner 0 at the origin, corner 1 on +x, corner 2 above.
      const double x = (l0 * l0 + l2 * l2 - l1 * l1) / (2.0 * l0);
      fc.p[0] = Eigen::Vector2d::Zero();
      fc.p[1] = Eigen::Vector2d(l0, 0.0);
      fc.p[2] = Eigen::Vector2d(x, std::sqrt(std::max(0.0, l2 * l2 - x * x)));
      for (std::size_t i = 0; i < 3; ++i) {
        fc.v[i] = c.tail(3 * f + i);
        const Eigen::Vector2d a = fc.p[(i + 1) % 3] - fc.p[i], b = fc.p[(i + 2) % 3] - fc.p[i];
        fc.cot[i] = a.dot(b) / (a.x() * b.y() - a.y() * b.x());
      }
      faces_.push_back(fc);
    }

    heat_.emplace(rl.pair.L.scaled(time_), 1.0, rl.pair.M);
    // Pin vertex 0: its row and column become the identity.
    std::vector<Triplet> trip;
    const SparseMatrix& l = rl.pair.L.matrix();
    for (int col = 0; col < l.outerSize(); ++col)
      for (SparseMatrix::InnerIterator it(l, col); it; ++it)
        if (it.row() != 0 && it.col() != 0) trip.emplace_back(static_cast<int>(it.row()), col, it.value());
    trip.emplace_back(0, 0, 1.0);
    SparseMatrix pinned(l.rows(), l.cols());
    pinned.setFromTriplets(trip.begin(), trip.end());
    poisson_.emplace(pinned);
  }

  std::size_t size() const { return n_; }
  double time() const { return time_; }
  double mean_edge_length() const { return mean_edge_; }

  /// Geodesic distance from one point to every point. Negative values are
  /// clamped to zero; the most negative one goes to `clamped` when given,
  /// otherwise a warning is emitted.
  Eigen::VectorXd distance_from(std::size_t source, double* clamped = nullptr) const {
    if (source >= n_) throw InvalidArgument("heat: source id out of range");
    Eigen::VectorXd delta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_));
    delta[static_cast<Eigen::Index>(source)] = 1.0;
    const Eigen::VectorXd u = heat_->solve_unrefined(delta);

    Eigen::VectorXd div = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_));
    for (const Face& fc : faces_) {
      Eigen::Vector2d g = Eigen::Vector2d::Zero();
      for (std::size_t i = 0; i < 3; ++i) {
        const Eigen::Vector2d e = fc.p[(i + 2) % 3] - fc.p[(i + 1) % 3];
        g += u[static_cast<Eigen::Index>(fc.v[i])] * Eigen::Vector2d(-e.y(), e.x());
      }
      const double gn = g.norm();
      if (!(gn > std::numeric_limits<double>::min())) continue;
      const Eigen::Vector2d x = -g / gn;
      for (std::size_t i = 0; i < 3; ++i) {
        const std::size_t j = (i + 1) % 3, k = (i + 2) % 3;
        div[static_cast<Eigen::Index>(fc.v[i])] +=
            0.5 * (fc.cot[k] * (fc.p[j] - fc.p[i]).dot(x) + fc.cot[j] * (fc.p[k] - fc.p[i]).dot(x));
      }
    }
    // L is the positive operator -Delta, so L phi = -div X.
    Eigen::VectorXd rhs = -scale_ * div;
    rhs[0] = 0.0;
    Eigen::VectorXd phi = poisson_->solve(rhs);
    phi.array() -= phi[static_cast<Eigen::Index>(source)];
    phi[static_cast<Eigen::Index>(source)] = 0.0;
    const double mx = phi.maxCoeff(), mn = phi.minCoeff();
    const bool clamp = mn < -1e-6 * mx;
    if (clamped) *clamped = clamp ? mn : 0.0;
    else if (clamp) warn("heat: clamped negative distance " + std::to_string(mn) + " from source " + std::to_string(source));
    return phi.cwiseMax(0.0);
  }

 private:
  struct Face {
    std::array<std::size_t, 3> v;
    std::array<Eigen::Vector2d, 3> p;
    std::array<double, 3> cot;  // at each corner
    double area = 0.0;
  };
  std::size_t n_;
  double scale_, mean_edge_ = 0.0, time_ = 0.0;
  std::vector<Face> faces_;
  std::optional<Factor> heat_, poisson_;
};

struct GeodesicMatrix {
  Eigen::MatrixXd D;
  double asymmetry = 0.0;  // max |D - D^T| before symmetrization
};

inline GeodesicMatrix pairwise_geodesics(const HeatSolveContext& ctx, std::size_t threads = 1) {
  const std::size_t n = ctx.size();
  if (n > max_geodesic_points)
    throw InvalidArgument("pairwise_geodesics: n = " + std::to_string(n) + " exceeds the dense limit of " +
                          std::to_string(max_geodesic_points));
  GeodesicMatrix g;
  g.D.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  std::vector<double> clamped(n, 0.0);
  parallel_for(
      n,
      [&](std::size_t i) {
        try {
          g.D.col(static_cast<Eigen::Index>(i)) = ctx.distance_from(i, &clamped[i]);
        } catch (const Error& e) {
          throw GeometryError(std::string("pairwise_geodesics: source failed: ") + e.what(), i);
        }
      },
      threads);
  const auto worst = std::min_element(clamped.begin(), clamped.end());
  if (*worst < 0.0)
    warn("heat: clamped negative distances from " +
         std::to_string(n - static_cast<std::size_t>(std::count(clamped.begin(), clamped.end(), 0.0))) +
         " source(s), worst " + std::to_string(*worst) + " from source " +
         std::to_string(static_cast<std::size_t>(worst - clamped.begin())));
  // Column i holds distances from source i; stored transposed so rows are sources.
  g.D.transposeInPlace();
  g.asymmetry = (g.D - g.D.transpose()).cwiseAbs().maxCoeff();
  g.D = 0.5 * (g.D + g.D.transpose()).eval();
  g.D.diagonal().setZero();
  return g;
}

/// B = -1/2 H D H by row, column and grand mean subtraction.
inline Eigen::MatrixXd similarity_matrix(const Eigen::MatrixXd& d) {
  if (d.rows() != d.cols()) throw InvalidArgument("similarity_matrix: D not square");
  if (!d.allFinite()) throw InvalidArgument("similarity_matrix: non-finite entry");
  const Eigen::VectorXd row = d.rowwise().mean();
  const Eigen::RowVectorXd col = d.colwise().mean();
  const double grand = d.mean();
  Eigen::MatrixXd b = d;
  b.colwise() -= row;
  b.rowwise() -= col;
  b.array() += grand;
  b *= -0.5;
  // Exact symmetry despite rounding differences between the row and column means.
  b = 0.5 * (b + b.transpose()).eval();
  return b;
}

/// k algebraically largest eigenvalues of B, descending.
inline FeatureVector hm_spectrum(const PointCloud& pc, std::size_t k, const HeatParams& params = {}) {
  const PointCloud clean = pc.deduplicated();
  if (k < 1 || k > clean.size() - 1) throw InvalidArgument("hm_spectrum: need 1 <= k <= n-1");
  const RobustLaplacian rl = robust_laplacian(clean, params.n_neigh, params.threads);
  const HeatSolveContext ctx(rl, params.time_factor);
  const GeodesicMatrix g = pairwise_geodesics(ctx, params.threads);
  const Spectrum s = largest_eigenvalues_dense(similarity_matrix(g.D), k, params.eig);
  return {Eigen::Map<const Eigen::VectorXd>(s.values.data(), static_cast<Eigen::Index>(s.size())), Backend::hm};
}

/// Smallest k whose leading positive eigenvalues reach the threshold share of the
/// positive spectral mass.
inline std::size_t select_k_cumvar(std::vector<double> eigs, double threshold = 0.95) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw InvalidArgument("select_k_cumvar: threshold must be in (0, 1]");
  std::sort(eigs.begin(), eigs.end(), std::greater<>());
  double total = 0.0;
  for (double v : eigs) total += std::max(v, 0.0);
  if (!(total > 0.0)) throw InvalidArgument("select_k_cumvar: no positive eigenvalues");
  double acc = 0.0;
  for (std::size_t i = 0; i < eigs.size(); ++i) {
    acc += std::max(eigs[i], 0.0);
    if (acc >= threshold * total * (1.0 - 1e-14)) return i + 1;
  }
  return eigs.size();
}

}  // namespace rfm
