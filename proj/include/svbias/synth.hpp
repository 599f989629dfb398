#pragma once

// Synthetic grid cities and simulated collection drivers.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "svbias/error.hpp"
#include "svbias/geo.hpp"
#include "svbias/ingest.hpp"

namespace svbias {

inline const GeoPoint kSynthOrigin{52.37, 4.90};

struct SynthCity {
    Boundary boundary;
    RoadNetwork net;
    std::size_t nx = 0, ny = 0;
    double block = 0.0;
    std::uint64_t seed = 0;

    /// Street-grid extent (the boundary adds half a block around it).
    BBox grid_box() const {
        BBox b;
        const double w = static_cast<double>(nx) * block, h = static_cast<double>(ny) * block;
        b.extend({-w / 2, -h / 2});
        b.extend({w / 2, h / 2});
        return b;
    }
};

/// Manhattan grid centred on the projection origin: ny+1 east-west streets of
/// length nx·block and nx+1 north-south streets of length ny·block.
inline SynthCity gen_city(std::size_t nx, std::size_t ny, double block, std::uint64_t seed = 0) {
    if (nx < 1 || ny < 1) throw ValidationError("gen_city needs at least one block each way");
    if (!(block > 0.0) || !std::isfinite(block)) throw ValidationError("block size must be positive");
    SynthCity c;
    c.nx = nx;
    c.ny = ny;
    c.block = block;
    c.seed = seed;
    const BBox g = c.grid_box();
    const double pad = block / 2;
    c.boundary.projection = Projection(kSynthOrigin);
    c.boundary.polygon = Polygon::rectangle({g.min.x - pad, g.min.y - pad}, {g.max.x + pad, g.max.y + pad});
    c.net.boundary = c.boundary.polygon;
    c.net.projection = c.boundary.projection;
    std::int64_t id = 1;
    for (std::size_t j = 0; j <= ny; ++j) {
        const double y = g.min.y + static_cast<double>(j) * block;
        c.net.roads.push_back({id++, RoadClass::Driveable, "residential", {Polyline({{g.min.x, y}, {g.max.x, y}})}});
    }
    for (std::size_t i = 0; i <= nx; ++i) {
        const double x = g.min.x + static_cast<double>(i) * block;
        c.net.roads.push_back({id++, RoadClass::Driveable, "residential", {Polyline({{x, g.min.y}, {x, g.max.y}})}});
    }
    return c;
}

struct UniformDrive {
    int passes = 1;
};

struct CenterBiased {
    double factor = 1.0;  // integer-valued, >= 1
    Polygon center_region;
};

struct ObstructionRedrive {
    double p_obstruct = 0.0;
};

struct TerritoryRegion {
    Polygon region;
    int passes = 1;
};

struct Territories {
    std::vector<TerritoryRegion> regions;
};

using DriverPolicy = std::variant<UniformDrive, CenterBiased, ObstructionRedrive, Territories>;

inline void validate(const DriverPolicy& policy) {
    std::visit(
        [](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, UniformDrive>) {
                if (p.passes < 0) throw ValidationError("passes must be non-negative");
            } else if constexpr (std::is_same_v<T, CenterBiased>) {
                if (!(p.factor >= 1.0) || p.factor != std::floor(p.factor))
                    throw ValidationError("center bias factor must be an integer >= 1");
                if (p.center_region.empty()) throw ValidationError("center region is empty");
            } else if constexpr (std::is_same_v<T, ObstructionRedrive>) {
                if (!(p.p_obstruct >= 0.0 && p.p_obstruct <= 1.0))
                    throw ValidationError("p_obstruct must be in [0, 1]");
            } else {
                for (const auto& r : p.regions) {
                    if (r.passes < 0) throw ValidationError("territory passes must be non-negative");
                    if (r.region.empty()) throw ValidationError("territory region is empty");
                }
            }
        },
        policy);
}

namespace detail {

inline ProjPoint point_at(const Polyline& line, double s) {
    const auto& pts = line.points();
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        const double len = distance(pts[i], pts[i + 1]);
        if (s <= len || i + 2 == pts.size()) return pts[i] + std::clamp(s / len, 0.0, 1.0) * (pts[i + 1] - pts[i]);
        s -= len;
    }
    return pts.front();
}

class Driver {
public:
    Driver(const SynthCity& city, double interval, std::uint64_t seed)
        : city_(city), interval_(interval), seed_(seed), rng_(seed) {}

    /// Drops a panorama at every lattice arc length of `line` up to `limit`.
    void lattice_pass(const Polyline& line, double limit) {
        for (const auto& p : positions(line, limit)) emit(p);
    }

    /// Same count as a lattice pass, each position jittered by up to half an
    /// interval and reflected back into [0, limit].
    void jittered_pass(const Polyline& line, double limit) {
        std::uniform_real_distribution<double> jit(-interval_ / 2, interval_ / 2);
        for (std::size_t k = 0; k < count(limit); ++k) {
            double s = static_cast<double>(k) * interval_ + jit(rng_);
            if (s < 0) s = -s;
            if (s > limit) s = 2 * limit - s;
            emit(point_at(line, std::clamp(s, 0.0, limit)));
        }
    }

    void pass(const Polyline& line, double limit, int index) {
        if (index == 0)
            lattice_pass(line, limit);
        else
            jittered_pass(line, limit);
    }

    double uniform01() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }

    PanoDataset finish() {
        ds_.city = "synthetic";
        ds_.provider = Provider::Other;
        ds_.road_class_context = std::string(to_string(RoadClass::Driveable));
        return std::move(ds_);
    }

private:
    std::size_t count(double limit) const {
        return static_cast<std::size_t>(std::floor(limit / interval_ * (1.0 + 1e-12))) + 1;
    }

    std::vector<ProjPoint> positions(const Polyline& line, double limit) const {
        if (limit >= line.length() * (1.0 - 1e-12)) return resample_polyline(line, interval_);
        std::vector<ProjPoint> out;
        for (std::size_t k = 0; k < count(limit); ++k) out.push_back(point_at(line, static_cast<double>(k) * interval_));
        return out;
    }

    void emit(ProjPoint p) {
        PanoRecord r;
        r.id = "sim-" + std::to_string(seed_) + "-" + std::to_string(counter_++);
        r.provider = Provider::Other;
        r.location = city_.boundary.projection.unproject(p);
        ds_.records.push_back(std::move(r));
    }

    const SynthCity& city_;
    double interval_;
    std::uint64_t seed_;
    std::mt19937_64 rng_;
    std::uint64_t counter_ = 0;
    PanoDataset ds_;
};

} // namespace detail

/// Panoramas every `interval` metres along each simulated pass. The first pass
/// over a street sits on the road-sample lattice; repeat passes are jittered.
inline PanoDataset simulate_drive(const SynthCity& city, const DriverPolicy& policy, double interval,
                                  std::uint64_t seed) {
    if (!(interval > 0.0) || !std::isfinite(interval)) throw ValidationError("pano interval must be positive");
    validate(policy);
    detail::Driver drv(city, interval, seed);
    auto parts_in = [](const Polyline& line, const Polygon& region) { return clip_polyline(line, IndexedPolygon(region)); };

    if (const auto* u = std::get_if<UniformDrive>(&policy)) {
        for (const auto& road : city.net.roads)
            for (const auto& part : road.parts)
                for (int k = 0; k < u->passes; ++k) drv.pass(part, part.length(), k);
    } else if (const auto* cb = std::get_if<CenterBiased>(&policy)) {
        // A street touching the center region is driven f times along its whole length.
        const IndexedPolygon region(cb->center_region);
        const int f = static_cast<int>(cb->factor);
        for (const auto& road : city.net.roads) {
            bool hit = false;
            for (const auto& part : road.parts) hit = hit || !clip_polyline(part, region).empty();
            for (const auto& part : road.parts)
                for (int k = 0; k < (hit ? f : 1); ++k) drv.pass(part, part.length(), k);
        }
    } else if (const auto* ob = std::get_if<ObstructionRedrive>(&policy)) {
        for (const auto& road : city.net.roads)
            for (const auto& part : road.parts) {
                drv.lattice_pass(part, part.length());
                if (ob->p_obstruct > 0.0 && drv.uniform01() < ob->p_obstruct)
                    drv.jittered_pass(part, drv.uniform01() * part.length());
            }
    } else {
        const auto& t = std::get<Territories>(policy);
        for (const auto& road : city.net.roads)
            for (const auto& part : road.parts)
                for (const auto& region : t.regions)
                    for (const auto& inner : parts_in(part, region.region))
                        for (int k = 0; k < region.passes; ++k) drv.pass(inner, inner.length(), k);
    }
    return drv.finish();
}

} // namespace svbias
