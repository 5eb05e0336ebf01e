#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "rfm/error.hpp"
#include "rfm/pointcloud.hpp"

namespace rfm {

/// Static k-d tree over a point set.
///
/// knn results are exact, sorted by nondecreasing distance, ties broken by
/// ascending point index.  The index keeps a copy of the coordinates and is
/// read-only after construction, so concurrent queries are safe.
class SpatialIndex {
 public:
  static constexpr std::size_t kLeafSize = 12;

  explicit SpatialIndex(std::vector<Vec3> points) : pts_(std::move(points)) {
    perm_.resize(pts_.size());
    for (std::size_t i = 0; i < perm_.size(); ++i) perm_[i] = static_cast<std::uint32_t>(i);
    if (!pts_.empty()) build(0, pts_.size());
  }
  explicit SpatialIndex(const PointCloud& pc) : SpatialIndex(pc.points()) {}

  std::size_t size() const { return pts_.size(); }
  const Vec3& point(std::size_t i) const { return pts_[i]; }

  // q nearest neighbours of point i, excluding i itself.
  std::vector<std::size_t> knn(std::size_t i, std::size_t q) const {
    if (i >= size()) throw InvalidArgument("knn: point id out of range");
    if (q < 1 || q + 1 > size())
      throw InvalidArgument("knn: q=" + std::to_string(q) + " outside [1, " + std::to_string(size() - 1) + "]");
    return query(pts_[i], q, i);
  }

  // q nearest points to an arbitrary location (no exclusion).
  std::vector<std::size_t> nearest(const Vec3& x, std::size_t q) const {
    if (q < 1 || q > size()) throw InvalidArgument("nearest: q out of range");
    return query(x, q, kNone);
  }

 private:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  struct Node {
    std::uint32_t begin, end;  // range in perm_
    std::int32_t left = -1, right = -1;
    int axis = -1;
    double split = 0.0;
  };

  using Candidate = std::pair<double, std::size_t>;  // (squared distance, index)

  int build(std::size_t begin, std::size_t end) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{static_cast<std::uint32_t>(begin), static_cast<std::uint32_t>(end)});
    if (end - begin <= kLeafSize) return id;
    Vec3 lo = pts_[perm_[begin]], hi = lo;
    for (std::size_t k = begin; k < end; ++k) {
      lo = lo.cwiseMin(pts_[perm_[k]]);
      hi = hi.cwiseMax(pts_[perm_[k]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(perm_.begin() + static_cast<std::ptrdiff_t>(begin), perm_.begin() + static_cast<std::ptrdiff_t>(mid),
                     perm_.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::uint32_t a, std::uint32_t b) { return pts_[a][axis] < pts_[b][axis]; });
    const double split = pts_[perm_[mid]][axis];
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    return id;
  }

  std::vector<std::size_t> query(const Vec3& x, std::size_t q, std::size_t exclude) const {
    std::priority_queue<Candidate> heap;  // max-heap on (d2, index)
    search(0, x, q, exclude, heap);
    std::vector<std::size_t> out(heap.size());
    for (std::size_t k = out.size(); k-- > 0;) {
      out[k] = heap.top().second;
      heap.pop();
    }
    return out;
  }

  void search(int id, const Vec3& x, std::size_t q, std::size_t exclude, std::priority_queue<Candidate>& heap) const {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    if (node.left < 0) {
      for (std::uint32_t k = node.begin; k < node.end; ++k) {
        const std::size_t j = perm_[k];
        if (j == exclude) continue;
        const Candidate c{(pts_[j] - x).squaredNorm(), j};
        if (heap.size() < q) {
          heap.push(c);
        } else if (c < heap.top()) {
          heap.pop();
          heap.push(c);
        }
      }
      return;
    }
    const double diff = x[node.axis] - node.split;
    const int first = diff < 0 ? node.left : node.right;
    const int second = diff < 0 ? node.right : node.left;
    search(first, x, q, exclude, heap);
    // Equal distances must still be visited so that lower indices win ties.
    if (heap.size() < q || diff * diff <= heap.top().first) search(second, x, q, exclude, heap);
  }

  std::vector<Vec3> pts_;
  std::vector<std::uint32_t> perm_;
  std::vector<Node> nodes_;
};

}  // namespace rfm
