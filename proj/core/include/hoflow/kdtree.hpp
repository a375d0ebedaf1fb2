#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

namespace hoflow {

// Static k-d tree over K-dimensional points. Built once by median splits on the
// cycling axis; supports orthogonal range queries and nearest-neighbour search.
template <std::size_t K> class KdTree {
public:
  using Point = std::array<double, K>;

  KdTree() = default;

  explicit KdTree(std::vector<Point> points) : points_(std::move(points)) {
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    build(0, order_.size(), 0);
  }

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const Point& point(std::size_t i) const { return points_[i]; }

  /// Indices of all points p with lo[d] <= p[d] <= hi[d] for every axis d,
  /// returned in ascending order.
  std::vector<std::size_t> range(const Point& lo, const Point& hi) const {
    std::vector<std::size_t> out;
    range(0, order_.size(), 0, lo, hi, out);
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Index of the point closest to q in the Euclidean norm; ties resolve to the
  /// lowest index. Tree must be nonempty.
  std::size_t nearest(const Point& q) const {
    std::size_t best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    nearest(0, order_.size(), 0, q, best, best_d2);
    return best;
  }

private:
  void build(std::size_t begin, std::size_t end, std::size_t axis) {
    if (end - begin <= 1) return;
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::size_t a, std::size_t b) { return points_[a][axis] < points_[b][axis]; });
    build(begin, mid, (axis + 1) % K);
    build(mid + 1, end, (axis + 1) % K);
  }

  void range(std::size_t begin, std::size_t end, std::size_t axis, const Point& lo, const Point& hi,
             std::vector<std::size_t>& out) const {
    if (begin >= end) return;
    const std::size_t mid = begin + (end - begin) / 2;
    const Point& p = points_[order_[mid]];
    bool inside = true;
    for (std::size_t d = 0; d < K && inside; ++d) inside = p[d] >= lo[d] && p[d] <= hi[d];
    if (inside) out.push_back(order_[mid]);
    const std::size_t next = (axis + 1) % K;
    if (lo[axis] <= p[axis]) range(begin, mid, next, lo, hi, out);
    if (hi[axis] >= p[axis]) range(mid + 1, end, next, lo, hi, out);
  }

  void nearest(std::size_t begin, std::size_t end, std::size_t axis, const Point& q, std::size_t& best,
               double& best_d2) const {
    if (begin >= end) return;
    const std::size_t mid = begin + (end - begin) / 2;
    const std::size_t idx = order_[mid];
    const Point& p = points_[idx];
    double d2 = 0.0;
    for (std::size_t d = 0; d < K; ++d) d2 += (p[d] - q[d]) * (p[d] - q[d]);
    if (d2 < best_d2 || (d2 == best_d2 && idx < best)) {
      best_d2 = d2;
      best = idx;
    }
    const double delta = q[axis] - p[axis];
    const std::size_t next = (axis + 1) % K;
    const bool left_first = delta <= 0.0;
    if (left_first) nearest(begin, mid, next, q, best, best_d2);
    else nearest(mid + 1, end, next, q, best, best_d2);
    if (delta * delta <= best_d2) {
      if (left_first) nearest(mid + 1, end, next, q, best, best_d2);
      else nearest(begin, mid, next, q, best, best_d2);
    }
  }

  std::vector<Point> points_;
  std::vector<std::size_t> order_;
};

} // namespace hoflow
