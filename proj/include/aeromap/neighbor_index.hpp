#pragma once

#include "aeromap/geometry.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

namespace aeromap {

/// Static kd-tree over a fixed point set.
///
/// Results are defined purely by the lexicographic order (squared distance,
/// original index), independent of tree shape: pruning is only applied when a
/// subtree provably cannot contain a closer-or-equal candidate, so ties
/// resolve to the lowest original index exactly as a linear scan would.
class NeighborIndex {
public:
    struct Neighbor {
        std::size_t index;
        double sq_dist;
    };

    NeighborIndex() = default;

    explicit NeighborIndex(std::vector<Vec3> points) : points_(std::move(points)) {
        order_.resize(points_.size());
        for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
        if (!points_.empty()) {
            nodes_.reserve(2 * points_.size() / kLeafSize + 4);
            build(0, points_.size());
        }
    }

    const std::vector<Vec3>& points() const { return points_; }
    std::size_t size() const { return points_.size(); }
    bool empty() const { return points_.empty(); }

    /// All points with squared distance <= radius^2, sorted by
    /// (squared distance, index) ascending.
    std::vector<Neighbor> radius_query(const Vec3& q, double radius) const {
        std::vector<Neighbor> out;
        if (points_.empty() || radius < 0.0) return out;
        const double sq_radius = radius * radius;
        radius_collect(0, q, sq_radius, out);
        std::sort(out.begin(), out.end(), neighbor_less);
        return out;
    }

    /// Number of points within radius (boundary inclusive).
    std::size_t radius_count(const Vec3& q, double radius) const {
        if (points_.empty() || radius < 0.0) return 0;
        std::size_t count = 0;
        radius_count_rec(0, q, radius * radius, count);
        return count;
    }

    /// Indices of points within radius (boundary inclusive), ascending.
    /// Cheaper than radius_query when distances are not needed.
    std::vector<std::size_t> radius_indices(const Vec3& q,
                                            double radius) const {
        std::vector<std::size_t> out;
        if (points_.empty() || radius < 0.0) return out;
        radius_indices_rec(0, q, radius * radius, out);
        std::sort(out.begin(), out.end());
        return out;
    }

    /// The k nearest points by (squared distance, index), ascending. Returns
    /// fewer than k entries only when the index holds fewer points.
    std::vector<Neighbor> k_nearest(const Vec3& q, std::size_t k) const {
        std::vector<Neighbor> heap;
        if (points_.empty() || k == 0) return heap;
        k = std::min(k, points_.size());
        heap.reserve(k + 1);
        knn_rec(0, q, k, heap);
        std::sort_heap(heap.begin(), heap.end(), neighbor_less);
        return heap;
    }

    /// True if any point lies within `radius` of segment ab (boundary
    /// inclusive), excluding points for which `skip` returns true.
    template <class Skip>
    bool any_point_near_segment(const Vec3& a, const Vec3& b, double radius,
                                const Skip& skip) const {
        if (points_.empty() || radius < 0.0) return false;
        return segment_rec(0, a, b - a, radius * radius, skip);
    }

    bool any_point_near_segment(const Vec3& a, const Vec3& b,
                                double radius) const {
        return any_point_near_segment(a, b, radius,
                                      [](std::size_t) { return false; });
    }

private:
    static constexpr std::size_t kLeafSize = 16;

    struct Node {
        Vec3 box_min;
        Vec3 box_max;
        std::uint32_t begin = 0;
        std::uint32_t end = 0;
        std::int32_t left = -1;
        std::int32_t right = -1;
    };

    static bool neighbor_less(const Neighbor& a, const Neighbor& b) {
        if (a.sq_dist != b.sq_dist) return a.sq_dist < b.sq_dist;
        return a.index < b.index;
    }

    std::int32_t build(std::size_t begin, std::size_t end) {
        const std::int32_t id = static_cast<std::int32_t>(nodes_.size());
        nodes_.push_back(Node{});
        Vec3 lo = points_[order_[begin]];
        Vec3 hi = lo;
        for (std::size_t i = begin + 1; i < end; ++i) {
            lo = lo.cwiseMin(points_[order_[i]]);
            hi = hi.cwiseMax(points_[order_[i]]);
        }
        nodes_[id].box_min = lo;
        nodes_[id].box_max = hi;
        nodes_[id].begin = static_cast<std::uint32_t>(begin);
        nodes_[id].end = static_cast<std::uint32_t>(end);
        if (end - begin > kLeafSize) {
            int axis = 0;
            const Vec3 extent = hi - lo;
            if (extent.y() > extent.x()) axis = 1;
            if (extent.z() > extent[axis]) axis = 2;
            const std::size_t mid = begin + (end - begin) / 2;
            const auto* pts = points_.data();
            std::nth_element(order_.begin() + begin, order_.begin() + mid,
                             order_.begin() + end,
                             [pts, axis](std::size_t i, std::size_t j) {
                                 const double a = pts[i][axis], b = pts[j][axis];
                                 if (a != b) return a < b;
                                 return i < j;
                             });
            const std::int32_t left = build(begin, mid);
            const std::int32_t right = build(mid, end);
            nodes_[id].left = left;
            nodes_[id].right = right;
        }
        return id;
    }

    double point_box_sq_dist(const Vec3& q, const Node& n) const {
        double d = 0.0;
        for (int i = 0; i < 3; ++i) {
            double excess = 0.0;
            if (q[i] < n.box_min[i]) excess = n.box_min[i] - q[i];
            else if (q[i] > n.box_max[i]) excess = q[i] - n.box_max[i];
            d += excess * excess;
        }
        return d;
    }

    void radius_collect(std::int32_t id, const Vec3& q, double sq_radius,
                        std::vector<Neighbor>& out) const {
        const Node& n = nodes_[id];
        if (point_box_sq_dist(q, n) > sq_radius) return;
        if (n.left < 0) {
            for (std::uint32_t i = n.begin; i < n.end; ++i) {
                const std::size_t idx = order_[i];
                const double d = (points_[idx] - q).squaredNorm();
                if (d <= sq_radius) out.push_back(Neighbor{idx, d});
            }
            return;
        }
        radius_collect(n.left, q, sq_radius, out);
        radius_collect(n.right, q, sq_radius, out);
    }

    void radius_count_rec(std::int32_t id, const Vec3& q, double sq_radius,
                          std::size_t& count) const {
        const Node& n = nodes_[id];
        if (point_box_sq_dist(q, n) > sq_radius) return;
        if (n.left < 0) {
            for (std::uint32_t i = n.begin; i < n.end; ++i) {
                if ((points_[order_[i]] - q).squaredNorm() <= sq_radius) ++count;
            }
            return;
        }
        radius_count_rec(n.left, q, sq_radius, count);
        radius_count_rec(n.right, q, sq_radius, count);
    }

    void radius_indices_rec(std::int32_t id, const Vec3& q, double sq_radius,
                            std::vector<std::size_t>& out) const {
        const Node& n = nodes_[id];
        if (point_box_sq_dist(q, n) > sq_radius) return;
        if (n.left < 0) {
            for (std::uint32_t i = n.begin; i < n.end; ++i) {
                const std::size_t idx = order_[i];
                if ((points_[idx] - q).squaredNorm() <= sq_radius)
                    out.push_back(idx);
            }
            return;
        }
        radius_indices_rec(n.left, q, sq_radius, out);
        radius_indices_rec(n.right, q, sq_radius, out);
    }

    void knn_rec(std::int32_t id, const Vec3& q, std::size_t k,
                 std::vector<Neighbor>& heap) const {
        const Node& n = nodes_[id];
        // Prune only on strictly greater: an equal-distance candidate with a
        // lower index could still displace the current worst.
        if (heap.size() == k && point_box_sq_dist(q, n) > heap.front().sq_dist)
            return;
        if (n.left < 0) {
            for (std::uint32_t i = n.begin; i < n.end; ++i) {
                const std::size_t idx = order_[i];
                const Neighbor cand{idx, (points_[idx] - q).squaredNorm()};
                if (heap.size() < k) {
                    heap.push_back(cand);
                    std::push_heap(heap.begin(), heap.end(), neighbor_less);
                } else if (neighbor_less(cand, heap.front())) {
                    std::pop_heap(heap.begin(), heap.end(), neighbor_less);
                    heap.back() = cand;
                    std::push_heap(heap.begin(), heap.end(), neighbor_less);
                }
            }
            return;
        }
        const double dl = point_box_sq_dist(q, nodes_[n.left]);
        const double dr = point_box_sq_dist(q, nodes_[n.right]);
        if (dl <= dr) {
            knn_rec(n.left, q, k, heap);
            knn_rec(n.right, q, k, heap);
        } else {
            knn_rec(n.right, q, k, heap);
            knn_rec(n.left, q, k, heap);
        }
    }

    static double point_segment_sq_dist(const Vec3& p, const Vec3& a,
                                        const Vec3& d) {
        const double dd = d.squaredNorm();
        double t = 0.0;
        if (dd > 0.0) t = std::clamp((p - a).dot(d) / dd, 0.0, 1.0);
        return (a + t * d - p).squaredNorm();
    }

    /// Exact squared distance between segment a + t*d (t in [0,1]) and the
    /// node box. Per axis the point-box excess is piecewise linear in t, so
    /// the total is piecewise quadratic; minimize each piece in closed form.
    double segment_box_sq_dist(const Vec3& a, const Vec3& d,
                               const Node& n) const {
        double ts[8];
        int nt = 0;
        ts[nt++] = 0.0;
        for (int i = 0; i < 3; ++i) {
            if (d[i] == 0.0) continue;
            const double t_lo = (n.box_min[i] - a[i]) / d[i];
            const double t_hi = (n.box_max[i] - a[i]) / d[i];
            if (t_lo > 0.0 && t_lo < 1.0) ts[nt++] = t_lo;
            if (t_hi > 0.0 && t_hi < 1.0) ts[nt++] = t_hi;
        }
        ts[nt++] = 1.0;
        std::sort(ts, ts + nt);
        double best = std::numeric_limits<double>::infinity();
        for (int s = 0; s + 1 < nt; ++s) {
            const double t0 = ts[s], t1 = ts[s + 1];
            if (t1 <= t0) continue;
            const double tm = 0.5 * (t0 + t1);
            // Quadratic A t^2 + B t + C on this interval.
            double A = 0.0, B = 0.0, C = 0.0;
            for (int i = 0; i < 3; ++i) {
                const double pm = a[i] + tm * d[i];
                double e0, e1;  // excess = e0 + e1 * t on this interval
                if (pm < n.box_min[i]) {
                    e0 = n.box_min[i] - a[i];
                    e1 = -d[i];
                } else if (pm > n.box_max[i]) {
                    e0 = a[i] - n.box_max[i];
                    e1 = d[i];
                } else {
                    continue;
                }
                A += e1 * e1;
                B += 2.0 * e0 * e1;
                C += e0 * e0;
            }
            auto eval = [&](double t) { return (A * t + B) * t + C; };
            double piece = std::min(eval(t0), eval(t1));
            if (A > 0.0) {
                const double tv = -B / (2.0 * A);
                if (tv > t0 && tv < t1) piece = std::min(piece, eval(tv));
            }
            best = std::min(best, piece);
        }
        return std::max(best, 0.0);
    }

    template <class Skip>
    bool segment_rec(std::int32_t id, const Vec3& a, const Vec3& d,
                     double sq_radius, const Skip& skip) const {
        const Node& n = nodes_[id];
        // Small slack so floating error in the bound can't cause a false
        // prune; exploring an extra node is always safe.
        if (segment_box_sq_dist(a, d, n) > sq_radius * (1.0 + 1e-12) + 1e-300)
            return false;
        if (n.left < 0) {
            for (std::uint32_t i = n.begin; i < n.end; ++i) {
                const std::size_t idx = order_[i];
                if (skip(idx)) continue;
                if (point_segment_sq_dist(points_[idx], a, d) <= sq_radius)
                    return true;
            }
            return false;
        }
        return segment_rec(n.left, a, d, sq_radius, skip) ||
               segment_rec(n.right, a, d, sq_radius, skip);
    }

    std::vector<Vec3> points_;
    std::vector<std::size_t> order_;
    std::vector<Node> nodes_;
};

/// A cloud bundled with its spatial index, built once and reused.
struct IndexedCloud {
    PointCloud cloud;
    NeighborIndex index;

    IndexedCloud() = default;
    explicit IndexedCloud(PointCloud c)
        : cloud(std::move(c)), index(cloud.points) {}
};

}  // namespace aeromap
