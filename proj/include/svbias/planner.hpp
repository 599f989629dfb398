#pragma once

// Metadata-request plans for the three collection protocols and their execution
// against a provider adapter.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <numbers>
#include <random>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "svbias/error.hpp"
#include "svbias/geo.hpp"
#include "svbias/ingest.hpp"
#include "svbias/kdtree.hpp"

namespace svbias {

struct PointRadius {
    GeoPoint center;
    double radius_m = 0.0;
};

struct Tile {
    GeoPoint min;  // south-west corner
    GeoPoint max;  // north-east corner
};

using Query = std::variant<PointRadius, Tile>;

struct RequestPlan {
    Provider provider = Provider::Other;
    std::vector<Query> queries;  // row-major from the bbox minimum
    double spacing_m = 0.0;      // lattice step or tile side
    double radius_m = 0.0;       // 0 for tile plans
};

inline constexpr double kGsvSpacingM = 20.0;
inline constexpr double kGsvRadiusM = 100.0;
inline constexpr double kMapillaryTileM = 400.0;
inline constexpr double kAmsterdamSpacingM = 280.0;
inline constexpr double kAmsterdamRadiusM = 200.0;

/// Overlap depth of two circles of `radius` whose centers are `spacing` apart.
inline double axis_overlap_m(double spacing, double radius) { return 2.0 * radius - spacing; }
inline double diagonal_overlap_m(double spacing, double radius) {
    return 2.0 * radius - spacing * std::numbers::sqrt2;
}

inline RequestPlan plan_point_lattice(const Boundary& b, Provider provider, double spacing, double radius) {
    if (!(radius > 0.0)) throw ValidationError("query radius must be positive");
    if (b.polygon.empty() || !(b.polygon.area() > 0.0)) throw ValidationError("boundary has zero area");
    RequestPlan plan{provider, {}, spacing, radius};
    for (const auto& p : make_point_grid(b.polygon.bbox(), spacing, b.polygon))
        plan.queries.emplace_back(PointRadius{b.projection.unproject(p), radius});
    return plan;
}

/// 20 m lattice of 100 m point-radius requests.
inline RequestPlan plan_gsv(const Boundary& b, double spacing = kGsvSpacingM, double radius = kGsvRadiusM) {
    return plan_point_lattice(b, Provider::GSV, spacing, radius);
}

/// 280 m lattice of 200 m point-radius requests.
inline RequestPlan plan_amsterdam(const Boundary& b, double spacing = kAmsterdamSpacingM,
                                  double radius = kAmsterdamRadiusM) {
    return plan_point_lattice(b, Provider::AMS, spacing, radius);
}

/// Square tiles anchored at the bbox minimum; tiles sharing no area with the boundary are dropped.
inline RequestPlan plan_mapillary(const Boundary& b, double side = kMapillaryTileM) {
    if (!(side > 0.0)) throw ValidationError("tile side must be positive");
    if (b.polygon.empty() || !(b.polygon.area() > 0.0)) throw ValidationError("boundary has zero area");
    const BBox box = b.polygon.bbox();
    const auto nx = static_cast<std::size_t>(std::ceil(box.width() / side - 1e-9));
    const auto ny = static_cast<std::size_t>(std::ceil(box.height() / side - 1e-9));
    RequestPlan plan{Provider::MLY, {}, side, 0.0};
    const double min_area = 1e-9 * side * side;
    for (std::size_t j = 0; j < std::max<std::size_t>(ny, 1); ++j)
        for (std::size_t i = 0; i < std::max<std::size_t>(nx, 1); ++i) {
            BBox tile;
            tile.extend({box.min.x + static_cast<double>(i) * side, box.min.y + static_cast<double>(j) * side});
            tile.extend({box.min.x + static_cast<double>(i + 1) * side, box.min.y + static_cast<double>(j + 1) * side});
            if (intersection_area(b.polygon, tile) <= min_area) continue;
            plan.queries.emplace_back(Tile{b.projection.unproject(tile.min), b.projection.unproject(tile.max)});
        }
    return plan;
}

// ---------------------------------------------------------------------------
// Serialization: one query per line.

inline std::string serialize_plan(const RequestPlan& plan) {
    std::string out;
    for (const auto& q : plan.queries) {
        ordered_json j;
        if (const auto* pr = std::get_if<PointRadius>(&q)) {
            j["type"] = "point_radius";
            j["lat"] = pr->center.lat;
            j["lon"] = pr->center.lon;
            j["radius_m"] = pr->radius_m;
        } else {
            const auto& t = std::get<Tile>(q);
            j["type"] = "tile";
            j["min_lat"] = t.min.lat;
            j["min_lon"] = t.min.lon;
            j["max_lat"] = t.max.lat;
            j["max_lon"] = t.max.lon;
        }
        out += j.dump();
        out += '\n';
    }
    return out;
}

inline std::vector<Query> parse_plan(std::string_view text) {
    std::vector<Query> out;
    std::size_t pos = 0, line_no = 0;
    while (pos < text.size()) {
        const auto nl = text.find('\n', pos);
        const auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() : nl + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
        try {
            const json j = json::parse(line.begin(), line.end());
            const std::string type = j.at("type").get<std::string>();
            if (type == "point_radius") {
                PointRadius pr{{j.at("lat").get<double>(), j.at("lon").get<double>()}, j.at("radius_m").get<double>()};
                validate(pr.center);
                out.emplace_back(pr);
            } else if (type == "tile") {
                Tile t{{j.at("min_lat").get<double>(), j.at("min_lon").get<double>()},
                       {j.at("max_lat").get<double>(), j.at("max_lon").get<double>()}};
                validate(t.min);
                validate(t.max);
                out.emplace_back(t);
            } else {
                throw ParseError("unknown query type '" + type + "'");
            }
        } catch (const json::exception& e) {
            throw ParseError("plan line " + std::to_string(line_no) + ": " + e.what());
        } catch (const ValidationError& e) {
            throw ParseError("plan line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Adapters

/// Source of panorama metadata. execute() must be read-only and repeatable.
class ProviderAdapter {
public:
    virtual ~ProviderAdapter() = default;
    virtual std::vector<PanoRecord> execute(const Query& q) const = 0;
    /// Queries per second the source tolerates; 0 means unlimited.
    virtual double max_queries_per_second() const { return 0.0; }
};

inline double haversine_m(GeoPoint a, GeoPoint b) {
    constexpr double deg = std::numbers::pi / 180.0;
    const double dlat = (b.lat - a.lat) * deg, dlon = (b.lon - a.lon) * deg;
    const double h = std::sin(dlat / 2) * std::sin(dlat / 2) +
                     std::cos(a.lat * deg) * std::cos(b.lat * deg) * std::sin(dlon / 2) * std::sin(dlon / 2);
    return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
}

/// Replays a local PanoRecord file: point-radius queries return records within the
/// radius (great-circle distance), tile queries records inside the lat/lon box.
class FixtureAdapter : public ProviderAdapter {
public:
    explicit FixtureAdapter(std::vector<PanoRecord> records, double qps = 0.0)
        : records_(std::move(records)), qps_(qps) {
        order_.resize(records_.size());
        for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
        std::stable_sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) {
            return records_[a].location.lat < records_[b].location.lat;
        });
    }

    std::vector<PanoRecord> execute(const Query& q) const override {
        double lat_lo, lat_hi;
        if (const auto* pr = std::get_if<PointRadius>(&q)) {
            const double dlat = pr->radius_m / kEarthRadiusM * 180.0 / std::numbers::pi * 1.001;
            lat_lo = pr->center.lat - dlat;
            lat_hi = pr->center.lat + dlat;
        } else {
            lat_lo = std::get<Tile>(q).min.lat;
            lat_hi = std::get<Tile>(q).max.lat;
        }
        auto lo = std::lower_bound(order_.begin(), order_.end(), lat_lo,
                                   [&](std::size_t i, double v) { return records_[i].location.lat < v; });
        std::vector<std::size_t> hits;
        for (auto it = lo; it != order_.end() && records_[*it].location.lat <= lat_hi; ++it) {
            const auto& r = records_[*it];
            bool keep;
            if (const auto* pr = std::get_if<PointRadius>(&q)) {
                keep = haversine_m(pr->center, r.location) <= pr->radius_m;
            } else {
                const auto& t = std::get<Tile>(q);
                keep = r.location.lon >= t.min.lon && r.location.lon <= t.max.lon;
            }
            if (keep) hits.push_back(*it);
        }
        std::sort(hits.begin(), hits.end());
        std::vector<PanoRecord> out;
        out.reserve(hits.size());
        for (auto i : hits) out.push_back(records_[i]);
        return out;
    }

    double max_queries_per_second() const override { return qps_; }

private:
    std::vector<PanoRecord> records_;
    std::vector<std::size_t> order_;
    double qps_;
};

// ---------------------------------------------------------------------------
// Execution

struct ExecuteOptions {
    int max_attempts = 3;
    std::chrono::milliseconds backoff{50};  // doubled after each failed attempt
    unsigned jobs = 1;
};

/// Runs every query, concatenates results in plan order, deduplicates by id and
/// clips to the boundary. Persistent failure names the failing query index.
inline PanoDataset execute_plan(const RequestPlan& plan, const ProviderAdapter& adapter, const Boundary& boundary,
                                const ExecuteOptions& opts = {}) {
    const std::size_t n = plan.queries.size();
    std::vector<std::vector<PanoRecord>> results(n);
    std::vector<std::string> errors(n);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};

    std::mutex rate_mu;
    auto next_slot = std::chrono::steady_clock::now();
    const double qps = adapter.max_queries_per_second();
    auto throttle = [&] {
        if (qps <= 0.0) return;
        std::unique_lock lock(rate_mu);
        const auto now = std::chrono::steady_clock::now();
        const auto at = std::max(now, next_slot);
        next_slot = at + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                             std::chrono::duration<double>(1.0 / qps));
        lock.unlock();
        std::this_thread::sleep_until(at);
    };

    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n || failed.load()) return;
            auto delay = opts.backoff;
            for (int attempt = 1;; ++attempt) {
                try {
                    throttle();
                    results[i] = adapter.execute(plan.queries[i]);
                    break;
                } catch (const std::exception& e) {
                    if (attempt >= std::max(1, opts.max_attempts)) {
                        errors[i] = e.what();
                        failed.store(true);
                        return;
                    }
                    std::this_thread::sleep_for(delay);
                    delay *= 2;
                }
            }
        }
    };
    const unsigned jobs = std::max(1u, std::min<unsigned>(opts.jobs, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    {
        std::vector<std::jthread> pool;
        for (unsigned w = 1; w < jobs; ++w) pool.emplace_back(worker);
        worker();
    }
    if (failed.load()) {
        for (std::size_t i = 0; i < n; ++i)
            if (!errors[i].empty())
                throw Error("query #" + std::to_string(i) + " failed after " + std::to_string(opts.max_attempts) +
                            " attempts: " + errors[i]);
    }

    PanoDataset ds;
    ds.provider = plan.provider;
    for (auto& r : results)
        for (auto& rec : r) ds.records.push_back(std::move(rec));
    ds.duplicates = dedup_by_id(ds.records);
    ds.dropped_outside = clip_to_boundary(ds.records, boundary);
    return ds;
}

/// Fraction of `samples` uniform boundary points covered by at least one query footprint.
inline double plan_cover_fraction(const RequestPlan& plan, const Boundary& b, std::size_t samples,
                                  std::uint64_t seed) {
    const IndexedPolygon poly(b.polygon);
    const BBox box = b.polygon.bbox();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(box.min.x, box.max.x), uy(box.min.y, box.max.y);

    std::vector<ProjPoint> centers;
    std::vector<double> radii;
    std::vector<BBox> tiles;
    for (const auto& q : plan.queries) {
        if (const auto* pr = std::get_if<PointRadius>(&q)) {
            centers.push_back(b.projection.project(pr->center));
            radii.push_back(pr->radius_m);
        } else {
            BBox t;
            t.extend(b.projection.project(std::get<Tile>(q).min));
            t.extend(b.projection.project(std::get<Tile>(q).max));
            tiles.push_back(t);
        }
    }
    const double rmax = radii.empty() ? 0.0 : *std::max_element(radii.begin(), radii.end());
    const KdTree tree(centers);
    std::size_t hit = 0, drawn = 0;
    while (drawn < samples) {
        const ProjPoint p{ux(rng), uy(rng)};
        if (!poly.contains(p)) continue;
        ++drawn;
        bool covered = false;
        for (auto i : tree.radius_search(p, rmax))
            if (distance(p, centers[i]) <= radii[i] * (1 + 1e-12)) {
                covered = true;
                break;
            }
        for (std::size_t t = 0; !covered && t < tiles.size(); ++t) covered = tiles[t].contains(p);
        if (covered) ++hit;
    }
    return samples == 0 ? 1.0 : static_cast<double>(hit) / static_cast<double>(samples);
}

} // namespace svbias
