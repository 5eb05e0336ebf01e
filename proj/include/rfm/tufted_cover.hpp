#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <unordered_map>
#include <vector>

#include "rfm/error.hpp"
#include "rfm/pointcloud.hpp"

namespace rfm {

/// Face-indexed halfedge mesh. Slot 3f+l is the halfedge of face f running from
/// tail(3f+l) to tail(3f+(l+1)%3); the corner opposite it is tail(3f+(l+2)%3).
class TuftedTriangulation {
 public:
  std::size_t vertex_count() const { return n_; }
  std::size_t face_count() const { return tail_.size() / 3; }
  std::size_t halfedge_count() const { return tail_.size(); }
  std::size_t edge_count() const { return tail_.size() / 2; }

  std::size_t tail(std::size_t h) const { return tail_[h]; }
  std::size_t head(std::size_t h) const { return tail_[next(h)]; }
  std::size_t twin(std::size_t h) const { return twin_[h]; }
  double length(std::size_t h) const { return len_[h]; }
  static std::size_t next(std::size_t h) { return h - h % 3 + (h + 1) % 3; }
  static std::size_t prev(std::size_t h) { return h - h % 3 + (h + 2) % 3; }
  static std::size_t face(std::size_t h) { return h / 3; }

  /// Interior angle opposite halfedge h, from intrinsic lengths.
  double opposite_angle(std::size_t h) const {
    const double a = len_[h], b = len_[next(h)], c = len_[prev(h)];
    return std::atan2(4.0 * triangle_area(a, b, c), b * b + c * c - a * a);
  }

  /// Heron's formula with lengths sorted for stability; 0 if the inequality fails.
  static double triangle_area(double a, double b, double c) {
    if (a < b) std::swap(a, b);
    if (a < c) std::swap(a, c);
    if (b < c) std::swap(b, c);
    const double p = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c));
    return p > 0.0 ? 0.25 * std::sqrt(p) : 0.0;
  }

  double face_area(std::size_t f) const { return triangle_area(len_[3 * f], len_[3 * f + 1], len_[3 * f + 2]); }

  /// Flip the edge of h inside the diamond formed with its twin. Returns false when
  /// both sides lie in the same face.
  bool flip(std::size_t h);

  // Construction access for build_tufted_cover.
  TuftedTriangulation(std::size_t n, std::vector<std::size_t> tail, std::vector<std::size_t> twin,
                      std::vector<double> len)
      : n_(n), tail_(std::move(tail)), twin_(std::move(twin)), len_(std::move(len)) {}

 private:
  std::size_t n_;
  std::vector<std::size_t> tail_, twin_;
  std::vector<double> len_;
};

inline bool TuftedTriangulation::flip(std::size_t h) {
  const std::size_t t = twin_[h];
  const std::size_t f = face(h), g = face(t);
  if (f == g) return false;
  const std::size_t h1 = next(h), h2 = prev(h), t1 = next(t), t2 = prev(t);
  const std::size_t a = tail_[h], b = tail_[h1], c = tail_[h2], d = tail_[t2];
  if (tail_[t] != b || tail_[t1] != a) throw Error("tufted cover: inconsistent gluing orientation");

  // Unfold the diamond: a at the origin, b on +x, c above, d below.
  const double lab = len_[h];
  auto apex = [lab](double la, double lb, double sign) {
    const double x = (la * la - lb * lb + lab * lab) / (2.0 * lab);
    return Eigen::Vector2d(x, sign * std::sqrt(std::max(0.0, la * la - x * x)));
  };
  const Eigen::Vector2d pc = apex(len_[h2], len_[h1], 1.0), pd = apex(len_[t1], len_[t2], -1.0);
  const double lcd = (pc - pd).norm();

  // New faces: f = (c, a, d), g = (d, b, c).
  struct Old {
    std::size_t tail, twin;
    double len;
  };
  const Old oh1{tail_[h1], twin_[h1], len_[h1]}, oh2{tail_[h2], twin_[h2], len_[h2]};
  const Old ot1{tail_[t1], twin_[t1], len_[t1]}, ot2{tail_[t2], twin_[t2], len_[t2]};
  const std::array<std::pair<std::size_t, const Old*>, 4> moved = {{{h2, &oh2}, {t1, &ot1}, {t2, &ot2}, {h1, &oh1}}};
  const std::array<std::size_t, 4> dest = {3 * f, 3 * f + 1, 3 * g, 3 * g + 1};
  auto remap = [&](std::size_t s) {
    for (std::size_t k = 0; k < 4; ++k)
      if (moved[k].first == s) return dest[k];
    return s;
  };
  for (std::size_t k = 0; k < 4; ++k) {
    const Old& o = *moved[k].second;
    tail_[dest[k]] = o.tail;
    len_[dest[k]] = o.len;
    const std::size_t tw = remap(o.twin);
    twin_[dest[k]] = tw;
    twin_[tw] = dest[k];
  }
  tail_[3 * f + 2] = d;
  tail_[3 * g + 2] = c;
  len_[3 * f + 2] = len_[3 * g + 2] = lcd;
  twin_[3 * f + 2] = 3 * g + 2;
  twin_[3 * g + 2] = 3 * f + 2;
  return true;
}

/// Two oppositely oriented copies of every triangle, glued around each edge in
/// angular order so each copy pair faces a shared wedge.
inline TuftedTriangulation build_tufted_cover(const PointCloud& pc,
                                              const std::vector<std::array<std::size_t, 3>>& triangles) {
  if (triangles.empty()) throw InvalidArgument("build_tufted_cover: no triangles");
  const std::size_t n = pc.size(), nt = triangles.size();
  std::vector<char> used(n, 0);
  for (const auto& t : triangles) {
    for (auto v : t) {
      if (v >= n) throw InvalidArgument("build_tufted_cover: vertex id out of range");
      used[v] = 1;
    }
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) throw InvalidArgument("build_tufted_cover: repeated vertex in triangle");
  }
  for (std::size_t v = 0; v < n; ++v)
    if (!used[v]) throw GeometryError("build_tufted_cover: isolated vertex " + std::to_string(v), v);

  // Face 2t is (i, j, k), face 2t+1 is (i, k, j).
  std::vector<std::size_t> tail(6 * nt), twin(6 * nt, SIZE_MAX);
  std::vector<double> len(6 * nt);
  for (std::size_t t = 0; t < nt; ++t) {
    const auto& [i, j, k] = triangles[t];
    const std::array<std::size_t, 6> order = {i, j, k, i, k, j};
    for (std::size_t s = 0; s < 6; ++s) tail[6 * t + s] = order[s];
  }
  for (std::size_t h = 0; h < tail.size(); ++h) len[h] = (pc[tail[h]] - pc[tail[TuftedTriangulation::next(h)]]).norm();

  // Incidences keyed by undirected edge: (triangle, slot in front face).
  std::unordered_map<std::uint64_t, std::vector<std::pair<std::size_t, std::size_t>>> around;
  around.reserve(3 * nt);
  auto key = [](std::size_t u, std::size_t v) { return (std::uint64_t(std::min(u, v)) << 32) | std::max(u, v); };
  for (std::size_t t = 0; t < nt; ++t)
    for (std::size_t l = 0; l < 3; ++l) around[key(tail[6 * t + l], tail[6 * t + (l + 1) % 3])].emplace_back(t, l);

  auto back_slot = [&](std::size_t t, std::size_t l) {
    // Front slot l runs u->v; the back face holds v->u.
    const std::size_t u = tail[6 * t + l];
    for (std::size_t s = 0; s < 3; ++s)
      if (tail[6 * t + 3 + (s + 1) % 3] == u) return 6 * t + 3 + s;
    return SIZE_MAX;
  };

  // Copies of the same triangle sit at equal angles around each of their edges.
  // They are stacked by occurrence rank along one normal per group, so every edge
  // agrees on the stacking and the glued surface does not depend on vertex order.
  std::vector<double> dup_rank(nt);
  std::vector<Vec3> group_normal(nt);
  {
    std::map<std::array<std::size_t, 3>, std::size_t> seen;
    for (std::size_t t = 0; t < nt; ++t) {
      auto key3 = triangles[t];
      std::sort(key3.begin(), key3.end());
      dup_rank[t] = static_cast<double>(seen[key3]++);
      group_normal[t] = (pc[key3[1]] - pc[key3[0]]).cross(pc[key3[2]] - pc[key3[0]]);
    }
  }

  struct Entry {
    double angle, stack;
    std::size_t t, l;
    bool front_faces_forward;  // front side points toward increasing angle
  };
  std::vector<Entry> fan;
  for (auto& [k, inc] : around) {
    const std::size_t u = k >> 32, v = k & 0xffffffffu;
    const Vec3 e = (pc[v] - pc[u]).normalized();
    fan.clear();
    Vec3 x0 = Vec3::Zero(), y0 = Vec3::Zero();
    for (auto [t, l] : inc) {
      const std::size_t opp = tail[6 * t + (l + 2) % 3];
      Vec3 r = pc[opp] - pc[u];
      r -= r.dot(e) * e;
      r.normalize();
      if (fan.empty()) {
        x0 = r;
        y0 = e.cross(r);
      }
      const auto& tri = triangles[t];
      const Vec3 nrm = (pc[tri[1]] - pc[tri[0]]).cross(pc[tri[2]] - pc[tri[0]]);
      const Vec3 fwd = e.cross(r);
      const double stack = group_normal[t].dot(fwd) > 0.0 ? dup_rank[t] : -dup_rank[t];
      fan.push_back({std::atan2(r.dot(y0), r.dot(x0)), stack, t, l, nrm.dot(fwd) > 0.0});
    }
    std::stable_sort(fan.begin(), fan.end(), [](const Entry& p, const Entry& q) {
      return p.angle < q.angle || (p.angle == q.angle && p.stack < q.stack);
    });
    const std::size_t m = fan.size();
    for (std::size_t s = 0; s < m; ++s) {
      const Entry& lo = fan[s];
      const Entry& hi = fan[(s + 1) % m];
      const std::size_t h_lo = lo.front_faces_forward ? 6 * lo.t + lo.l : back_slot(lo.t, lo.l);
      const std::size_t h_hi = hi.front_faces_forward ? back_slot(hi.t, hi.l) : 6 * hi.t + hi.l;
      twin[h_lo] = h_hi;
      twin[h_hi] = h_lo;
    }
  }
  return TuftedTriangulation(n, std::move(tail), std::move(twin), std::move(len));
}

struct FlipStats {
  std::size_t flips = 0;
};

/// Flip to an intrinsic Delaunay triangulation: no edge with opposite angles summing past pi + 1e-12.
inline FlipStats intrinsic_delaunay_flip(TuftedTriangulation& t) {
  constexpr double tol = 1e-12;
  auto non_delaunay = [&](std::size_t h) {
    return t.opposite_angle(h) + t.opposite_angle(t.twin(h)) > std::numbers::pi + tol;
  };
  std::vector<std::size_t> stack;
  std::vector<char> queued(t.halfedge_count(), 0);
  for (std::size_t h = 0; h < t.halfedge_count(); ++h)
    if (h < t.twin(h)) {
      stack.push_back(h);
      queued[h] = 1;
    }
  FlipStats st;
  const std::size_t cap = 100 * t.edge_count();
  while (!stack.empty()) {
    const std::size_t h = stack.back();
    stack.pop_back();
    queued[h] = 0;
    if (!non_delaunay(h)) continue;
    const std::size_t f = TuftedTriangulation::face(h), g = TuftedTriangulation::face(t.twin(h));
    if (!t.flip(h)) continue;
    if (++st.flips > cap) {
      std::size_t remaining = 0;
      for (std::size_t e = 0; e < t.halfedge_count(); ++e) remaining += e < t.twin(e) && non_delaunay(e);
      throw ConvergenceError("intrinsic_delaunay_flip: flip cap reached", remaining, "non-Delaunay edges remaining");
    }
    for (std::size_t s : {3 * f, 3 * f + 1, 3 * g, 3 * g + 1}) {
      const std::size_t r = std::min(s, t.twin(s));
      if (!queued[r]) {
        queued[r] = 1;
        stack.push_back(r);
      }
    }
  }
  return st;
}

}  // namespace rfm
