#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "svbias/geo.hpp"

namespace svbias {

/// Static 2-D k-d tree with exact nearest-neighbour and radius queries.
class KdTree {
public:
    static constexpr std::size_t kLeafSize = 8;

    KdTree() = default;
    explicit KdTree(std::span<const ProjPoint> points) : pts_(points.begin(), points.end()) {
        idx_.resize(pts_.size());
        for (std::size_t i = 0; i < idx_.size(); ++i) idx_[i] = static_cast<std::uint32_t>(i);
        if (!pts_.empty()) {
            nodes_.reserve(2 * pts_.size() / kLeafSize + 1);
            build(0, idx_.size(), 0);
        }
    }

    std::size_t size() const noexcept { return pts_.size(); }
    const ProjPoint& point(std::size_t i) const { return pts_[i]; }

    struct Neighbor {
        double dist2;
        std::size_t index;
        friend bool operator<(const Neighbor& a, const Neighbor& b) {
            return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index);
        }
    };

    /// The k nearest points, ascending by (distance, index).
    std::vector<Neighbor> knn(ProjPoint q, std::size_t k) const {
        std::vector<Neighbor> heap;
        if (k == 0 || pts_.empty()) return heap;
        heap.reserve(k + 1);
        search_knn(0, q, k, heap);
        std::sort_heap(heap.begin(), heap.end());
        return heap;
    }

    /// Distance to the k-th nearest point (1-based k).
    double kth_distance(ProjPoint q, std::size_t k) const {
        auto nn = knn(q, k);
        if (nn.size() < k) return std::numeric_limits<double>::infinity();
        return std::sqrt(nn.back().dist2);
    }

    Neighbor nearest(ProjPoint q) const {
        auto nn = knn(q, 1);
        if (nn.empty()) return {std::numeric_limits<double>::infinity(), 0};
        return nn.front();
    }

    /// Indices within `radius` (inclusive), ascending by index.
    std::vector<std::size_t> radius_search(ProjPoint q, double radius) const {
        std::vector<std::size_t> out;
        if (!pts_.empty()) search_radius(0, q, radius * radius, out);
        std::sort(out.begin(), out.end());
        return out;
    }

private:
    struct Node {
        std::uint32_t begin, end;
        std::int32_t left = -1, right = -1;
        int axis = 0;
        double split = 0.0;
        BBox box;
    };

    std::int32_t build(std::size_t begin, std::size_t end, int depth) {
        const auto id = static_cast<std::int32_t>(nodes_.size());
        nodes_.push_back({static_cast<std::uint32_t>(begin), static_cast<std::uint32_t>(end), -1, -1, 0, 0.0, {}});
        BBox box;
        for (std::size_t i = begin; i < end; ++i) box.extend(pts_[idx_[i]]);
        nodes_[id].box = box;
        if (end - begin <= kLeafSize) return id;
        const int axis = box.width() >= box.height() ? 0 : 1;
        const std::size_t mid = begin + (end - begin) / 2;
        auto key = [&](std::uint32_t i) { return axis == 0 ? pts_[i].x : pts_[i].y; };
        std::nth_element(idx_.begin() + static_cast<std::ptrdiff_t>(begin),
                         idx_.begin() + static_cast<std::ptrdiff_t>(mid),
                         idx_.begin() + static_cast<std::ptrdiff_t>(end),
                         [&](std::uint32_t a, std::uint32_t b) { return key(a) < key(b) || (key(a) == key(b) && a < b); });
        nodes_[id].axis = axis;
        nodes_[id].split = key(idx_[mid]);
        const auto l = build(begin, mid, depth + 1);
        const auto r = build(mid, end, depth + 1);
        nodes_[id].left = l;
        nodes_[id].right = r;
        (void)depth;
        return id;
    }

    static double box_dist2(const BBox& b, ProjPoint q) {
        const double dx = std::max({b.min.x - q.x, 0.0, q.x - b.max.x});
        const double dy = std::max({b.min.y - q.y, 0.0, q.y - b.max.y});
        return dx * dx + dy * dy;
    }

    void search_knn(std::int32_t id, ProjPoint q, std::size_t k, std::vector<Neighbor>& heap) const {
        const Node& n = nodes_[id];
        if (heap.size() == k && box_dist2(n.box, q) > heap.front().dist2) return;
        if (n.left < 0) {
            for (std::uint32_t i = n.begin; i < n.end; ++i) {
                const Neighbor cand{squared_distance(pts_[idx_[i]], q), idx_[i]};
                if (heap.size() < k) {
                    heap.push_back(cand);
                    std::push_heap(heap.begin(), heap.end());
                } else if (cand < heap.front()) {
                    std::pop_heap(heap.begin(), heap.end());
                    heap.back() = cand;
                    std::push_heap(heap.begin(), heap.end());
                }
            }
            return;
        }
        const double qv = n.axis == 0 ? q.x : q.y;
        const bool go_left = qv < n.split;
        search_knn(go_left ? n.left : n.right, q, k, heap);
        search_knn(go_left ? n.right : n.left, q, k, heap);
    }

    void search_radius(std::int32_t id, ProjPoint q, double r2, std::vector<std::size_t>& out) const {
        const Node& n = nodes_[id];
        if (box_dist2(n.box, q) > r2) return;
        if (n.left < 0) {
            for (std::uint32_t i = n.begin; i < n.end; ++i)
                if (squared_distance(pts_[idx_[i]], q) <= r2) out.push_back(idx_[i]);
            return;
        }
        search_radius(n.left, q, r2, out);
        search_radius(n.right, q, r2, out);
    }

    std::vector<ProjPoint> pts_;
    std::vector<std::uint32_t> idx_;
    std::vector<Node> nodes_;
};

} // namespace svbias
