#include <gtest/gtest.h>

#include <numbers>
#include <numeric>
#include <set>

#include "rfm/laplacian.hpp"
#include "rfm/shapes.hpp"

using namespace rfm;

namespace {

using Tri = std::array<std::size_t, 3>;

PointCloud cloud(std::vector<Vec3> pts) { return PointCloud(std::move(pts), "test"); }

// Unordered neighbor pair of a star triangle (center, a, b).
std::pair<std::size_t, std::size_t> pair_of(const Tri& t) { return {std::min(t[1], t[2]), std::max(t[1], t[2])}; }

// Star of point c in the planar Delaunay triangulation of pts (z ignored), by the
// empty-circumcircle test over every candidate pair.
std::set<std::pair<std::size_t, std::size_t>> delaunay_star_oracle(const std::vector<Vec3>& pts, std::size_t c,
                                                                   const std::vector<std::size_t>& nbrs) {
  std::set<std::pair<std::size_t, std::size_t>> out;
  auto xy = [&](std::size_t i) { return Eigen::Vector2d(pts[i].x(), pts[i].y()); };
  for (std::size_t s = 0; s < nbrs.size(); ++s)
    for (std::size_t t = s + 1; t < nbrs.size(); ++t) {
      const Eigen::Vector2d p0 = xy(c), p1 = xy(nbrs[s]), p2 = xy(nbrs[t]);
      const double d = 2.0 * (p0.x() * (p1.y() - p2.y()) + p1.x() * (p2.y() - p0.y()) + p2.x() * (p0.y() - p1.y()));
      if (std::abs(d) < 1e-12) continue;
      const Eigen::Vector2d cc((p0.squaredNorm() * (p1.y() - p2.y()) + p1.squaredNorm() * (p2.y() - p0.y()) +
                                p2.squaredNorm() * (p0.y() - p1.y())) / d,
                               (p0.squaredNorm() * (p2.x() - p1.x()) + p1.squaredNorm() * (p0.x() - p2.x()) +
                                p2.squaredNorm() * (p1.x() - p0.x())) / d);
      const double r2 = (p0 - cc).squaredNorm();
      bool empty = true;
      for (auto j : nbrs)
        if (j != nbrs[s] && j != nbrs[t] && (xy(j) - cc).squaredNorm() < r2 * (1.0 - 1e-12)) empty = false;
      if (empty) out.insert({std::min(nbrs[s], nbrs[t]), std::max(nbrs[s], nbrs[t])});
    }
  return out;
}

double max_offdiagonal(const SparseSym& l) {
  double m = -1e300;
  for (int c = 0; c < l.matrix().outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(l.matrix(), c); it; ++it)
      if (it.row() != it.col()) m = std::max(m, it.value());
  return m;
}

const PointCloud& sphere2000() {
  static const PointCloud pc = [] {
    Rng rng(2024);
    return sample_sphere(2000, rng);
  }();
  return pc;
}

}  // namespace

TEST(LocalTriangulation, ThreeNeighborsGiveOneTriangle) {
  auto pc = cloud({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {2, 2, 0}});
  SpatialIndex index(pc);
  auto lt = local_triangulation(pc, index, 0, 3);
  ASSERT_EQ(lt.triangles.size(), 1u);
  EXPECT_EQ(lt.triangles[0][0], 0u);
  EXPECT_EQ(pair_of(lt.triangles[0]), (std::pair<std::size_t, std::size_t>{1, 2}));
}

TEST(LocalTriangulation, GridStarIsPlanarDelaunay) {
  auto grid = planar_grid(5, 5, 1.0);
  std::vector<Vec3> pts = grid.points();
  const std::size_t c = 12;  // center of the 5x5 grid
  SpatialIndex exact(grid);
  auto lt = local_triangulation(grid, exact, c, 8);
  EXPECT_GE(lt.triangles.size(), 4u);
  // Cocircular grid: any Delaunay star is valid, so check the empty-circle property.
  const auto nbrs = exact.knn(c, 8);
  const auto oracle_pairs = delaunay_star_oracle(pts, c, nbrs);
  for (const auto& t : lt.triangles) EXPECT_TRUE(oracle_pairs.count(pair_of(t))) << t[1] << "," << t[2];

  // Jittered grid: the Delaunay star is unique and must match exactly.
  Rng rng(5);
  for (auto& p : pts) p += Vec3(0.05 * (rng.uniform() - 0.5), 0.05 * (rng.uniform() - 0.5), 0.0);
  auto jittered = cloud(pts);
  SpatialIndex index(jittered);
  auto lj = local_triangulation(jittered, index, c, 8);
  std::set<std::pair<std::size_t, std::size_t>> got;
  for (const auto& t : lj.triangles) got.insert(pair_of(t));
  EXPECT_EQ(got, delaunay_star_oracle(pts, c, index.knn(c, 8)));
}

TEST(LocalTriangulation, CollinearNeighborhoodNamesPoint) {
  std::vector<Vec3> pts;
  for (int i = 0; i < 10; ++i) pts.emplace_back(0.5 * i, 0.0, 0.0);
  auto pc = cloud(pts);
  SpatialIndex index(pc);
  try {
    local_triangulation(pc, index, 4, 5);
    FAIL() << "expected degenerate-neighborhood error";
  } catch (const GeometryError& e) {
    EXPECT_EQ(e.id(), 4u);
  }
}

TEST(LocalTriangulation, SphereStarsSatisfyInvariants) {
  const auto& pc = sphere2000();
  SpatialIndex index(pc);
  for (std::size_t i = 0; i < pc.size(); i += 37) {
    auto lt = local_triangulation(pc, index, i, 30);
    EXPECT_GE(lt.triangles.size(), 3u);
    for (const auto& t : lt.triangles) {
      EXPECT_EQ(t[0], i);
      EXPECT_TRUE(t[0] != t[1] && t[1] != t[2] && t[0] != t[2]);
      EXPECT_GT((pc[t[1]] - pc[t[0]]).cross(pc[t[2]] - pc[t[0]]).norm(), 0.0);
    }
  }
}

TEST(TuftedCover, OneTriangleTwoFacesThreeEdges) {
  // Clouds need four points and every point must be covered, so use two
  // disjoint triangles; each contributes two faces and three edges.
  auto pc = cloud({{0, 0, 0}, {1, 0, 0}, {0.5, 0.8, 0}, {5, 5, 5}, {6, 5, 5}, {5, 6, 5}});
  auto t = build_tufted_cover(pc, {{0, 1, 2}, {3, 4, 5}});
  EXPECT_EQ(t.face_count(), 4u);
  EXPECT_EQ(t.edge_count(), 6u);
  for (std::size_t h = 0; h < t.halfedge_count(); ++h) {
    EXPECT_EQ(t.twin(t.twin(h)), h);
    EXPECT_NE(TuftedTriangulation::face(t.twin(h)), TuftedTriangulation::face(h));
    EXPECT_EQ(t.tail(t.twin(h)), t.head(h));
    EXPECT_EQ(t.length(h), t.length(t.twin(h)));
  }
  auto pc4 = cloud({{0, 0, 0}, {1, 0, 0}, {0.5, 0.8, 0}, {5, 5, 5}});
  EXPECT_THROW(build_tufted_cover(pc4, {{0, 1, 2}}), GeometryError);
}

TEST(TuftedCover, ClosedOctahedronDoublesAndStaysManifold) {
  auto pc = cloud({{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}});
  std::vector<Tri> tris = {{0, 2, 4}, {2, 1, 4}, {1, 3, 4}, {3, 0, 4}, {2, 0, 5}, {1, 2, 5}, {3, 1, 5}, {0, 3, 5}};
  auto t = build_tufted_cover(pc, tris);
  EXPECT_EQ(t.face_count(), 16u);
  EXPECT_EQ(t.edge_count(), 24u);  // 12 mesh edges, two cover copies each
  for (std::size_t h = 0; h < t.halfedge_count(); ++h) {
    ASSERT_LT(t.twin(h), t.halfedge_count());
    EXPECT_EQ(t.twin(t.twin(h)), h);
    EXPECT_NE(TuftedTriangulation::face(t.twin(h)), TuftedTriangulation::face(h));
  }
}

TEST(TuftedCover, IsolatedVertexNamed) {
  std::vector<Vec3> pts;
  for (int i = 0; i < 10; ++i) pts.emplace_back(std::cos(i), std::sin(i), 0.1 * i);
  auto pc = cloud(pts);
  std::vector<Tri> tris;
  for (std::size_t i = 0; i + 2 < 10; ++i)
    if (i != 7 && i + 1 != 7 && i + 2 != 7) tris.push_back({i, i + 1, i + 2});
  try {
    build_tufted_cover(pc, tris);
    FAIL() << "expected isolated-vertex error";
  } catch (const GeometryError& e) {
    EXPECT_EQ(e.id(), 7u);
  }
}

TEST(Flip, DelaunayCoverUnchanged) {
  auto pc = cloud({{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}});
  std::vector<Tri> tris = {{0, 2, 4}, {2, 1, 4}, {1, 3, 4}, {3, 0, 4}, {2, 0, 5}, {1, 2, 5}, {3, 1, 5}, {0, 3, 5}};
  auto t = build_tufted_cover(pc, tris);
  auto before = t;
  EXPECT_EQ(intrinsic_delaunay_flip(t).flips, 0u);
  for (std::size_t h = 0; h < t.halfedge_count(); ++h) {
    EXPECT_EQ(t.tail(h), before.tail(h));
    EXPECT_EQ(t.twin(h), before.twin(h));
    EXPECT_EQ(t.length(h), before.length(h));
  }
}

TEST(Flip, ObtusePairFlipsToUnfoldedDiagonal) {
  // Quadrilateral a, d, b, c with a long diagonal a-b; both angles opposite it
  // are 2 atan(1 / 0.3) > pi/2.  Unfolded, the other diagonal is |c - d| = 0.6.
  auto pc = cloud({{0, 0, 0}, {2, 0, 0}, {1, 0.3, 0}, {1, -0.3, 0}});
  auto t = build_tufted_cover(pc, {{0, 1, 2}, {1, 0, 3}});
  const double opposite = 2.0 * std::atan(1.0 / 0.3);
  ASSERT_GT(2.0 * opposite, std::numbers::pi);
  const auto st = intrinsic_delaunay_flip(t);
  // The diagonal exists once per cover copy, so it flips once per copy.
  EXPECT_EQ(st.flips, 2u);
  std::size_t new_edges = 0;
  for (std::size_t h = 0; h < t.halfedge_count(); ++h) {
    const bool cd = (t.tail(h) == 2 && t.head(h) == 3) || (t.tail(h) == 3 && t.head(h) == 2);
    if (cd) {
      ++new_edges;
      EXPECT_NEAR(t.length(h), 0.6, 1e-14);
    }
    EXPECT_FALSE((t.tail(h) == 0 && t.head(h) == 1) || (t.tail(h) == 1 && t.head(h) == 0));
  }
  EXPECT_EQ(new_edges, 4u);  // two edges, two halfedges each
  for (std::size_t h = 0; h < t.halfedge_count(); ++h)
    EXPECT_LE(t.opposite_angle(h) + t.opposite_angle(t.twin(h)), std::numbers::pi + 1e-12);
}

TEST(Flip, SphereWeightsNonnegativeAfterFlips) {
  const auto& pc = sphere2000();
  auto cover = build_tufted_cover(pc, all_local_triangles(pc, 30));
  intrinsic_delaunay_flip(cover);
  for (std::size_t h = 0; h < cover.halfedge_count(); ++h)
    ASSERT_LE(cover.opposite_angle(h) + cover.opposite_angle(cover.twin(h)), std::numbers::pi + 1e-12);
  auto lp = assemble_laplacian(cover);
  EXPECT_LE(max_offdiagonal(lp.L), 1e-12);
}

TEST(Assemble, SingleEquilateralTriangleCover) {
  const double s3 = std::sqrt(3.0);
  // Two disjoint equilateral triangles of side 1 so all four+ points are covered.
  auto pc = cloud({{0, 0, 0}, {1, 0, 0}, {0.5, s3 / 2, 0}, {10, 0, 0}, {11, 0, 0}, {10.5, s3 / 2, 0}});
  auto t = build_tufted_cover(pc, {{0, 1, 2}, {3, 4, 5}});
  intrinsic_delaunay_flip(t);
  auto lp = assemble_laplacian(t);
  const Eigen::MatrixXd l = lp.L.dense();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) EXPECT_NEAR(-l(i, j), 1.0 / s3, 1e-14);
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(lp.M[static_cast<std::size_t>(i)], 2.0 * (s3 / 4.0) / 3.0, 1e-15);
  EXPECT_LT((lp.L.matrix() * Eigen::VectorXd::Ones(6)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Assemble, SphereRowSumsAndArea) {
  const auto& pc = sphere2000();
  auto rl = robust_laplacian(pc, 30);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(pc.size()));
  EXPECT_LT((rl.pair.L.matrix() * ones).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE(max_offdiagonal(rl.pair.L), 1e-12);
  EXPECT_NEAR(rl.pair.M.total(), 4.0 * std::numbers::pi, 0.05 * 4.0 * std::numbers::pi);
  // PSD on random vectors.
  Rng rng(9);
  for (int r = 0; r < 20; ++r) {
    Eigen::VectorXd x(ones.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = rng.normal();
    EXPECT_GE(x.dot(rl.pair.L.matrix() * x), -1e-10 * x.squaredNorm());
  }
}

TEST(RlSpectrum, SphereMatchesSphericalHarmonics) {
  auto f = rl_spectrum(sphere2000(), 8);
  ASSERT_EQ(f.size(), 8u);
  EXPECT_EQ(f.backend, Backend::rl);
  const double expected[8] = {2, 2, 2, 6, 6, 6, 6, 6};
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(f[i], expected[i], 0.1 * expected[i]) << i;
  for (std::size_t i = 1; i < 8; ++i) EXPECT_LE(f[i - 1], f[i]);
}

TEST(RlSpectrum, UniformScalingDividesBySquare) {
  const auto& pc = sphere2000();
  auto f1 = rl_spectrum(pc, 20);
  auto f2 = rl_spectrum(scaled(pc, 2.0), 20);
  for (std::size_t i = 0; i < 20; ++i) EXPECT_NEAR(f2[i], f1[i] / 4.0, 0.01 * f1[i] / 4.0);
}

TEST(RlSpectrum, RigidMotionAndReindexingInvariance) {
  Rng rng(31);
  auto pc = sample_torus(1500, rng);
  auto base = rl_spectrum(pc, 30);
  for (int r = 0; r < 3; ++r) {
    auto moved = rl_spectrum(apply_rigid_motion(pc, RigidMotion::random(rng, 2.0)), 30);
    for (std::size_t i = 0; i < 30; ++i) EXPECT_NEAR(moved[i], base[i], 1e-4 * base[i]);
  }
  std::vector<Vec3> perm = pc.points();
  std::vector<std::size_t> order(perm.size());
  std::iota(order.begin(), order.end(), 0);
  shuffle(order, rng);
  std::vector<Vec3> shuffled;
  for (auto i : order) shuffled.push_back(perm[i]);
  auto reindexed = rl_spectrum(cloud(shuffled), 30);
  for (std::size_t i = 0; i < 30; ++i) EXPECT_NEAR(reindexed[i], base[i], 1e-10 * std::max(1.0, base[i]));
}

TEST(RlSpectrum, RejectsOversizedK) {
  Rng rng(1);
  auto pc = sample_sphere(50, rng);
  EXPECT_THROW(rl_spectrum(pc, 49), InvalidArgument);
}

TEST(Elbow, FullBasisReconstructsAndCurveIsMonotone) {
  Rng rng(12);
  auto pc = sample_sphere(200, rng);
  auto c = elbow_curve(pc, {1, 2, 4, 10, 20, 50, 100, 150, 200});
  double s0 = 0.0;
  for (const auto& p : pc.points()) s0 += p.squaredNorm();
  s0 = std::sqrt(s0);
  EXPECT_LT(c.discrepancy.back(), 1e-6 * s0);
  for (std::size_t i = 1; i < c.k.size(); ++i) EXPECT_LE(c.discrepancy[i], c.discrepancy[i - 1] + 1e-8);
  for (double d : c.discrepancy) EXPECT_GE(d, 0.0);
}

TEST(Elbow, SphereCurveFlattensAndSelects) {
  Rng rng(13);
  auto pc = sample_sphere(1000, rng);
  std::vector<std::size_t> grid;
  for (std::size_t k = 10; k <= 200; k += 10) grid.push_back(k);
  auto c = elbow_curve(pc, grid);
  for (std::size_t i = 1; i < c.k.size(); ++i) EXPECT_LE(c.discrepancy[i], c.discrepancy[i - 1] + 1e-8);
  const std::size_t k = select_k_elbow(c);
  EXPECT_GE(k, 11u);
  EXPECT_LE(k, 220u);
}

TEST(Elbow, SyntheticCornerAndLinearCurve) {
  ElbowCurve corner;
  for (std::size_t k = 10; k <= 200; k += 10) {
    corner.k.push_back(k);
    // Steep drop to k = 40, then a shallow tail.
    corner.discrepancy.push_back(k <= 40 ? 100.0 - 2.0 * static_cast<double>(k) : 20.0 - 0.05 * static_cast<double>(k - 40));
  }
  EXPECT_EQ(select_k_elbow(corner), 44u);

  ElbowCurve linear;
  for (std::size_t k = 10; k <= 100; k += 10) {
    linear.k.push_back(k);
    linear.discrepancy.push_back(200.0 - static_cast<double>(k));
  }
  EXPECT_THROW(select_k_elbow(linear), InvalidArgument);

  ElbowCurve flat{{10, 20, 30}, {1.0, 1.0, 1.0}, 0};
  EXPECT_THROW(select_k_elbow(flat), InvalidArgument);
}

TEST(Defaults, OperatingPoints) {
  EXPECT_EQ(default_k_rl, 100u);
  EXPECT_EQ(default_k_rl_valve_min, 90u);
  EXPECT_EQ(default_k_rl_valve_max, 120u);
}
