#pragma once

// Metric substrate: local projection, polygons, polylines, lattices.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "svbias/error.hpp"

namespace svbias {

inline constexpr double kEarthRadiusM = 6371008.8;

struct GeoPoint {
    double lat = 0.0;
    double lon = 0.0;

    friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

inline bool is_valid(const GeoPoint& p) {
    return std::isfinite(p.lat) && std::isfinite(p.lon) && p.lat >= -90.0 && p.lat <= 90.0 &&
           p.lon >= -180.0 && p.lon <= 180.0;
}

inline void validate(const GeoPoint& p) {
    if (!is_valid(p))
        throw ValidationError("coordinate out of range: lat=" + std::to_string(p.lat) +
                              " lon=" + std::to_string(p.lon));
}

struct ProjPoint {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const ProjPoint&, const ProjPoint&) = default;
    friend auto operator<=>(const ProjPoint&, const ProjPoint&) = default;
    friend ProjPoint operator+(ProjPoint a, ProjPoint b) { return {a.x + b.x, a.y + b.y}; }
    friend ProjPoint operator-(ProjPoint a, ProjPoint b) { return {a.x - b.x, a.y - b.y}; }
    friend ProjPoint operator*(double s, ProjPoint a) { return {s * a.x, s * a.y}; }
};

inline double cross(ProjPoint a, ProjPoint b) { return a.x * b.y - a.y * b.x; }
inline double dot(ProjPoint a, ProjPoint b) { return a.x * b.x + a.y * b.y; }
inline double distance(ProjPoint a, ProjPoint b) { return std::hypot(a.x - b.x, a.y - b.y); }
inline double squared_distance(ProjPoint a, ProjPoint b) {
    const double dx = a.x - b.x, dy = a.y - b.y;
    return dx * dx + dy * dy;
}

inline constexpr double kProjBound = 1e7;

/// Local equirectangular projection about a city centroid.
class Projection {
public:
    Projection() = default;
    explicit Projection(GeoPoint origin, double earth_radius = kEarthRadiusM)
        : origin_(origin), radius_(earth_radius) {
        validate(origin);
        if (!(earth_radius > 0.0)) throw ValidationError("earth radius must be positive");
        cos_lat0_ = std::cos(origin.lat * kDeg);
        if (cos_lat0_ < 1e-9) throw ValidationError("projection origin too close to a pole");
    }

    const GeoPoint& origin() const noexcept { return origin_; }
    double earth_radius() const noexcept { return radius_; }

    ProjPoint project(const GeoPoint& p) const {
        validate(p);
        ProjPoint q{radius_ * (p.lon - origin_.lon) * kDeg * cos_lat0_,
                    radius_ * (p.lat - origin_.lat) * kDeg};
        if (std::abs(q.x) >= kProjBound || std::abs(q.y) >= kProjBound)
            throw ValidationError("projected point beyond city-scale bound");
        return q;
    }

    GeoPoint unproject(const ProjPoint& q) const {
        if (!std::isfinite(q.x) || !std::isfinite(q.y))
            throw ValidationError("non-finite projected point");
        GeoPoint p{origin_.lat + q.y / radius_ / kDeg,
                   origin_.lon + q.x / (radius_ * cos_lat0_) / kDeg};
        validate(p);
        return p;
    }

private:
    static constexpr double kDeg = std::numbers::pi / 180.0;
    GeoPoint origin_{};
    double radius_ = kEarthRadiusM;
    double cos_lat0_ = 1.0;
};

struct BBox {
    ProjPoint min{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    ProjPoint max{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};

    void extend(ProjPoint p) {
        min.x = std::min(min.x, p.x);
        min.y = std::min(min.y, p.y);
        max.x = std::max(max.x, p.x);
        max.y = std::max(max.y, p.y);
    }
    bool empty() const { return !(min.x <= max.x && min.y <= max.y); }
    double width() const { return max.x - min.x; }
    double height() const { return max.y - min.y; }
    bool contains(ProjPoint p) const {
        return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y;
    }
};

inline BBox bbox_of(std::span<const ProjPoint> pts) {
    BBox b;
    for (const auto& p : pts) b.extend(p);
    return b;
}

using Ring = std::vector<ProjPoint>;

/// Signed shoelace area of a closed ring (positive when counter-clockwise).
inline double signed_area(std::span<const ProjPoint> ring) {
    double a = 0.0;
    for (std::size_t i = 0; i + 1 < ring.size(); ++i) a += cross(ring[i], ring[i + 1]);
    return 0.5 * a;
}

namespace detail {

inline constexpr double kGeomEps = 1e-9;

inline double orient(ProjPoint a, ProjPoint b, ProjPoint c) { return cross(b - a, c - a); }

inline bool on_segment(ProjPoint p, ProjPoint a, ProjPoint b, double eps = kGeomEps) {
    const ProjPoint ab = b - a;
    const double len = std::hypot(ab.x, ab.y);
    if (len == 0.0) return distance(p, a) <= eps;
    if (std::abs(cross(ab, p - a)) > eps * len) return false;
    const double t = dot(p - a, ab);
    return t >= -eps * len && t <= len * len + eps * len;
}

inline bool segments_intersect(ProjPoint a, ProjPoint b, ProjPoint c, ProjPoint d) {
    const double o1 = orient(a, b, c), o2 = orient(a, b, d);
    const double o3 = orient(c, d, a), o4 = orient(c, d, b);
    if (((o1 > 0 && o2 < 0) || (o1 < 0 && o2 > 0)) && ((o3 > 0 && o4 < 0) || (o3 < 0 && o4 > 0)))
        return true;
    return on_segment(c, a, b) || on_segment(d, a, b) || on_segment(a, c, d) || on_segment(b, c, d);
}

/// Crossing-number parity of one closed ring.
inline bool ring_crossing_parity(ProjPoint p, std::span<const ProjPoint> ring) {
    bool inside = false;
    for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
        const ProjPoint a = ring[i], b = ring[i + 1];
        if ((a.y > p.y) != (b.y > p.y)) {
            const double xcross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if (p.x < xcross) inside = !inside;
        }
    }
    return inside;
}

inline bool on_ring(ProjPoint p, std::span<const ProjPoint> ring) {
    for (std::size_t i = 0; i + 1 < ring.size(); ++i)
        if (on_segment(p, ring[i], ring[i + 1])) return true;
    return false;
}

inline Ring close_and_clean(Ring ring) {
    Ring out;
    out.reserve(ring.size() + 1);
    for (const auto& p : ring) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw ValidationError("non-finite ring vertex");
        if (out.empty() || out.back() != p) out.push_back(p);
    }
    if (out.size() > 1 && out.front() == out.back()) out.pop_back();
    if (out.size() < 3) throw ValidationError("ring needs at least 3 distinct vertices");
    out.push_back(out.front());
    return out;
}

struct Edge {
    ProjPoint a, b;
    std::size_t ring;
    std::size_t index;
};

} // namespace detail

/// Exterior ring (counter-clockwise) plus holes (clockwise); all rings closed.
class Polygon {
public:
    Polygon() = default;

    /// Closes rings, fixes orientation, and rejects zero-area or self-intersecting input.
    explicit Polygon(Ring exterior, std::vector<Ring> holes = {}) {
        exterior_ = detail::close_and_clean(std::move(exterior));
        if (signed_area(exterior_) < 0) std::reverse(exterior_.begin(), exterior_.end());
        if (!(signed_area(exterior_) > 0.0)) throw ValidationError("polygon has zero area");
        for (auto& h : holes) {
            Ring r = detail::close_and_clean(std::move(h));
            if (signed_area(r) > 0) std::reverse(r.begin(), r.end());
            if (!(signed_area(r) < 0.0)) throw ValidationError("hole has zero area");
            holes_.push_back(std::move(r));
        }
        check_simple();
    }

    /// Axis-aligned rectangle helper.
    static Polygon rectangle(ProjPoint min, ProjPoint max) {
        return Polygon(Ring{min, {max.x, min.y}, max, {min.x, max.y}});
    }

    const Ring& exterior() const noexcept { return exterior_; }
    const std::vector<Ring>& holes() const noexcept { return holes_; }
    bool empty() const noexcept { return exterior_.empty(); }

    double area() const {
        double a = signed_area(exterior_);
        for (const auto& h : holes_) a += signed_area(h);
        return a;
    }

    BBox bbox() const { return bbox_of(exterior_); }

    std::vector<detail::Edge> edges() const {
        std::vector<detail::Edge> out;
        auto add = [&](const Ring& r, std::size_t ri) {
            for (std::size_t i = 0; i + 1 < r.size(); ++i) out.push_back({r[i], r[i + 1], ri, i});
        };
        add(exterior_, 0);
        for (std::size_t h = 0; h < holes_.size(); ++h) add(holes_[h], h + 1);
        return out;
    }

private:
    void check_simple() const {
        auto es = edges();
        std::vector<std::size_t> order(es.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        auto xmin = [&](std::size_t i) { return std::min(es[i].a.x, es[i].b.x); };
        auto xmax = [&](std::size_t i) { return std::max(es[i].a.x, es[i].b.x); };
        std::sort(order.begin(), order.end(), [&](auto l, auto r) { return xmin(l) < xmin(r); });
        auto ring_len = [&](std::size_t ri) {
            return (ri == 0 ? exterior_.size() : holes_[ri - 1].size()) - 1;
        };
        for (std::size_t u = 0; u < order.size(); ++u) {
            const auto& e = es[order[u]];
            for (std::size_t v = u + 1; v < order.size() && xmin(order[v]) <= xmax(order[u]); ++v) {
                const auto& f = es[order[v]];
                if (e.ring == f.ring) {
                    const std::size_t n = ring_len(e.ring);
                    const std::size_t d = e.index > f.index ? e.index - f.index : f.index - e.index;
                    if (d == 1 || d == n - 1) continue;
                }
                if (detail::segments_intersect(e.a, e.b, f.a, f.b))
                    throw ValidationError("polygon is self-intersecting");
            }
        }
    }

    Ring exterior_;
    std::vector<Ring> holes_;
};

/// Ray casting; boundary points (including hole boundaries) count as inside.
inline bool point_in_polygon(ProjPoint p, const Polygon& poly) {
    if (detail::on_ring(p, poly.exterior())) return true;
    for (const auto& h : poly.holes())
        if (detail::on_ring(p, h)) return true;
    if (!detail::ring_crossing_parity(p, poly.exterior())) return false;
    for (const auto& h : poly.holes())
        if (detail::ring_crossing_parity(p, h)) return false;
    return true;
}

/// Polygon with a horizontal band index over its edges, for large boundaries
/// queried many times. Answers match point_in_polygon exactly.
class IndexedPolygon {
public:
    IndexedPolygon() = default;
    explicit IndexedPolygon(Polygon poly) : poly_(std::move(poly)) {
        edges_ = poly_.edges();
        const BBox b = poly_.bbox();
        ymin_ = b.min.y;
        const std::size_t nb = std::max<std::size_t>(1, edges_.size() / 4);
        band_h_ = std::max(b.height() / static_cast<double>(nb), 1e-9);
        bands_.resize(nb);
        for (std::size_t i = 0; i < edges_.size(); ++i) {
            const auto [lo, hi] = band_range(std::min(edges_[i].a.y, edges_[i].b.y),
                                             std::max(edges_[i].a.y, edges_[i].b.y));
            for (std::size_t k = lo; k <= hi; ++k) bands_[k].push_back(i);
        }
    }

    const Polygon& polygon() const noexcept { return poly_; }

    bool contains(ProjPoint p) const {
        const BBox b = poly_.bbox();
        if (p.x < b.min.x - detail::kGeomEps || p.x > b.max.x + detail::kGeomEps ||
            p.y < b.min.y - detail::kGeomEps || p.y > b.max.y + detail::kGeomEps)
            return false;
        const auto [lo, hi] = band_range(p.y, p.y);
        bool parity = false;
        // Band membership is inclusive with slack, so each relevant edge sits in band `lo`.
        for (std::size_t idx : bands_[lo]) {
            const auto& e = edges_[idx];
            if (detail::on_segment(p, e.a, e.b)) return true;
            if ((e.a.y > p.y) != (e.b.y > p.y)) {
                const double xcross = e.a.x + (p.y - e.a.y) * (e.b.x - e.a.x) / (e.b.y - e.a.y);
                if (p.x < xcross) parity = !parity;
            }
        }
        (void)hi;
        return parity;
    }

    /// Indices of edges whose band range overlaps the segment's y-range.
    std::vector<std::size_t> candidate_edges(ProjPoint a, ProjPoint b) const {
        const auto [lo, hi] = band_range(std::min(a.y, b.y), std::max(a.y, b.y));
        std::vector<std::size_t> out;
        for (std::size_t k = lo; k <= hi; ++k) out.insert(out.end(), bands_[k].begin(), bands_[k].end());
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    const std::vector<detail::Edge>& edges() const noexcept { return edges_; }

private:
    std::pair<std::size_t, std::size_t> band_range(double y0, double y1) const {
        const auto clampi = [&](double y) {
            const double k = std::floor((y - ymin_) / band_h_);
            if (!(k > 0)) return std::size_t{0};
            return std::min(bands_.size() - 1, static_cast<std::size_t>(k));
        };
        const double slack = 2 * detail::kGeomEps;
        return {clampi(y0 - slack), clampi(y1 + slack)};
    }

    Polygon poly_;
    std::vector<detail::Edge> edges_;
    std::vector<std::vector<std::size_t>> bands_;
    double ymin_ = 0.0;
    double band_h_ = 1.0;
};

/// Ordered vertices with distinct neighbours and positive length.
class Polyline {
public:
    Polyline() = default;
    explicit Polyline(std::vector<ProjPoint> pts) : pts_(std::move(pts)) {
        if (pts_.size() < 2) throw ValidationError("polyline needs at least 2 points");
        for (std::size_t i = 0; i < pts_.size(); ++i) {
            if (!std::isfinite(pts_[i].x) || !std::isfinite(pts_[i].y))
                throw ValidationError("non-finite polyline vertex");
            if (i > 0 && pts_[i] == pts_[i - 1])
                throw ValidationError("polyline has repeated consecutive points");
        }
    }

    /// Drops consecutive duplicates; returns false when fewer than two points remain.
    static bool try_make(std::vector<ProjPoint> pts, Polyline& out) {
        std::vector<ProjPoint> clean;
        clean.reserve(pts.size());
        for (const auto& p : pts)
            if (clean.empty() || clean.back() != p) clean.push_back(p);
        if (clean.size() < 2) return false;
        out = Polyline(std::move(clean));
        return true;
    }

    const std::vector<ProjPoint>& points() const noexcept { return pts_; }

    double length() const {
        double l = 0.0;
        for (std::size_t i = 1; i < pts_.size(); ++i) l += distance(pts_[i - 1], pts_[i]);
        return l;
    }

private:
    std::vector<ProjPoint> pts_;
};

/// Points at arc lengths 0, interval, 2·interval, ... not exceeding the total
/// length. The trailing partial segment is dropped.
inline std::vector<ProjPoint> resample_polyline(const Polyline& line, double interval) {
    if (!(interval > 0.0) || !std::isfinite(interval))
        throw ValidationError("resample interval must be positive");
    const auto& pts = line.points();
    const double total = line.length();
    const auto count = static_cast<std::size_t>(std::floor(total / interval * (1.0 + 1e-12))) + 1;
    std::vector<ProjPoint> out;
    out.reserve(count);
    std::size_t seg = 0;
    double seg_start = 0.0;
    double seg_len = distance(pts[0], pts[1]);
    for (std::size_t k = 0; k < count; ++k) {
        const double s = static_cast<double>(k) * interval;
        while (seg + 2 < pts.size() && s > seg_start + seg_len) {
            seg_start += seg_len;
            ++seg;
            seg_len = distance(pts[seg], pts[seg + 1]);
        }
        const double t = std::clamp((s - seg_start) / seg_len, 0.0, 1.0);
        out.push_back(pts[seg] + t * (pts[seg + 1] - pts[seg]));
    }
    return out;
}

/// Lattice anchored at bbox.min with the given step, kept where inside `clip`.
inline std::vector<ProjPoint> make_point_grid(const BBox& bbox, double spacing, const Polygon& clip) {
    if (!(spacing > 0.0)) throw ValidationError("grid spacing must be positive");
    if (!(bbox.min.x < bbox.max.x && bbox.min.y < bbox.max.y))
        throw ValidationError("degenerate grid bounding box");
    const auto nx = static_cast<std::size_t>(std::floor(bbox.width() / spacing + 1e-9)) + 1;
    const auto ny = static_cast<std::size_t>(std::floor(bbox.height() / spacing + 1e-9)) + 1;
    const IndexedPolygon index(clip);
    std::vector<ProjPoint> out;
    for (std::size_t j = 0; j < ny; ++j)
        for (std::size_t i = 0; i < nx; ++i) {
            const ProjPoint p{bbox.min.x + static_cast<double>(i) * spacing,
                              bbox.min.y + static_cast<double>(j) * spacing};
            if (index.contains(p)) out.push_back(p);
        }
    return out;
}

namespace detail {

/// Sutherland–Hodgman against one half-plane of an axis-aligned rectangle.
inline Ring clip_half(const Ring& in, int axis, double bound, bool keep_greater) {
    Ring out;
    if (in.empty()) return out;
    auto coord = [&](ProjPoint p) { return axis == 0 ? p.x : p.y; };
    auto inside = [&](ProjPoint p) { return keep_greater ? coord(p) >= bound : coord(p) <= bound; };
    for (std::size_t i = 0; i + 1 < in.size(); ++i) {
        const ProjPoint a = in[i], b = in[i + 1];
        const bool ia = inside(a), ib = inside(b);
        if (ia) out.push_back(a);
        if (ia != ib) {
            const double t = (bound - coord(a)) / (coord(b) - coord(a));
            out.push_back(a + t * (b - a));
        }
    }
    if (!out.empty()) out.push_back(out.front());
    return out;
}

inline double ring_rect_area(const Ring& ring, const BBox& rect) {
    Ring r = ring;
    r = clip_half(r, 0, rect.min.x, true);
    r = clip_half(r, 0, rect.max.x, false);
    r = clip_half(r, 1, rect.min.y, true);
    r = clip_half(r, 1, rect.max.y, false);
    return r.size() < 4 ? 0.0 : std::abs(signed_area(r));
}

} // namespace detail

/// Area of polygon ∩ rectangle.
inline double intersection_area(const Polygon& poly, const BBox& rect) {
    double a = detail::ring_rect_area(poly.exterior(), rect);
    for (const auto& h : poly.holes()) a -= detail::ring_rect_area(h, rect);
    return std::max(0.0, a);
}

/// Splits a polyline at every boundary crossing and keeps the pieces inside `poly`.
inline std::vector<Polyline> clip_polyline(const Polyline& line, const IndexedPolygon& poly) {
    std::vector<Polyline> out;
    std::vector<ProjPoint> current;
    auto flush = [&] {
        Polyline pl;
        if (Polyline::try_make(std::move(current), pl) && pl.length() > 1e-6) out.push_back(std::move(pl));
        current.clear();
    };
    const auto& pts = line.points();
    for (std::size_t s = 0; s + 1 < pts.size(); ++s) {
        const ProjPoint a = pts[s], b = pts[s + 1];
        const ProjPoint ab = b - a;
        std::vector<double> ts{0.0, 1.0};
        for (std::size_t ei : poly.candidate_edges(a, b)) {
            const auto& e = poly.edges()[ei];
            const ProjPoint cd = e.b - e.a;
            const double den = cross(ab, cd);
            if (den == 0.0) continue;
            const double t = cross(e.a - a, cd) / den;
            const double u = cross(e.a - a, ab) / den;
            if (t > 0.0 && t < 1.0 && u >= -1e-12 && u <= 1.0 + 1e-12) ts.push_back(t);
        }
        std::sort(ts.begin(), ts.end());
        for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
            const double t0 = ts[k], t1 = ts[k + 1];
            if (t1 - t0 <= 0.0) continue;
            const ProjPoint p0 = a + t0 * ab, p1 = a + t1 * ab;
            if (poly.contains(a + (0.5 * (t0 + t1)) * ab)) {
                if (current.empty()) current.push_back(p0);
                current.push_back(p1);
            } else {
                flush();
            }
        }
    }
    flush();
    return out;
}

} // namespace svbias
