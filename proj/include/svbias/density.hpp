#pragma once

// Road-prior samples, Gaussian KDE on a regular grid, and difference fields.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "svbias/error.hpp"
#include "svbias/geo.hpp"
#include "svbias/ingest.hpp"
#include "svbias/kdtree.hpp"
#include "svbias/parallel.hpp"

namespace svbias {

inline constexpr double kRoadSampleIntervalM = 20.0;
inline constexpr double kDefaultBandwidthM = 200.0;
inline constexpr double kDefaultCellM = 1000.0;
inline constexpr double kKdeCutoffBandwidths = 6.0;
inline constexpr double kGridPadBandwidths = 4.0;

enum class SampleSource { UniformRoad, Panoramas, WeightedPrior };

struct SamplePoints {
    std::vector<ProjPoint> points;
    std::vector<double> weights;  // empty means every weight is 1
    SampleSource source = SampleSource::Panoramas;

    std::size_t size() const noexcept { return points.size(); }
    bool weighted() const noexcept { return !weights.empty(); }
    double weight(std::size_t i) const { return weights.empty() ? 1.0 : weights[i]; }

    double total_weight() const {
        if (weights.empty()) return static_cast<double>(points.size());
        return pairwise_sum(weights.begin(), weights.end());
    }

    void validate() const {
        if (!weights.empty()) {
            if (weights.size() != points.size()) throw ValidationError("weights and points differ in length");
            for (double w : weights)
                if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("weights must be finite and non-negative");
            if (!(total_weight() > 0.0)) throw ValidationError("sample weights sum to zero");
        }
    }
};

/// Every road resampled at `interval` metres, concatenated in road order.
inline SamplePoints uniform_road_samples(const RoadNetwork& net, double interval = kRoadSampleIntervalM) {
    if (net.empty()) throw ValidationError("road network is empty");
    SamplePoints s;
    s.source = SampleSource::UniformRoad;
    for (const auto& road : net.roads)
        for (const auto& part : road.parts) {
            auto pts = resample_polyline(part, interval);
            s.points.insert(s.points.end(), pts.begin(), pts.end());
        }
    return s;
}

struct RegionWeight {
    Polygon region;
    double weight = 1.0;
};

struct WeightedSamples {
    SamplePoints samples;
    std::size_t uncovered = 0;  // road points outside every region (weight 0)
};

/// Uniform road samples, each weighted by the first region containing it.
inline WeightedSamples weighted_prior_samples(const RoadNetwork& net, std::span<const RegionWeight> regions,
                                              double interval = kRoadSampleIntervalM) {
    for (const auto& r : regions)
        if (!(r.weight >= 0.0) || !std::isfinite(r.weight)) throw ValidationError("region weight must be non-negative");
    WeightedSamples out{uniform_road_samples(net, interval), 0};
    out.samples.source = SampleSource::WeightedPrior;
    std::vector<IndexedPolygon> index;
    index.reserve(regions.size());
    for (const auto& r : regions) index.emplace_back(r.region);
    out.samples.weights.assign(out.samples.size(), 0.0);
    for (std::size_t i = 0; i < out.samples.size(); ++i) {
        bool found = false;
        for (std::size_t k = 0; k < index.size() && !found; ++k)
            if (index[k].contains(out.samples.points[i])) {
                out.samples.weights[i] = regions[k].weight;
                found = true;
            }
        if (!found) ++out.uncovered;
    }
    if (!(out.samples.total_weight() > 0.0)) throw ValidationError("all effective prior weights are zero");
    return out;
}

// ---------------------------------------------------------------------------
// Grid fields

struct GridSpec {
    ProjPoint origin;  // lower-left corner of cell (0, 0)
    double cell_size = kDefaultCellM;
    std::size_t nx = 0, ny = 0;

    ProjPoint cell_center(std::size_t i, std::size_t j) const {
        return {origin.x + (static_cast<double>(i) + 0.5) * cell_size,
                origin.y + (static_cast<double>(j) + 0.5) * cell_size};
    }
    BBox cell_box(std::size_t i, std::size_t j) const {
        BBox b;
        b.extend({origin.x + static_cast<double>(i) * cell_size, origin.y + static_cast<double>(j) * cell_size});
        b.extend({origin.x + static_cast<double>(i + 1) * cell_size, origin.y + static_cast<double>(j + 1) * cell_size});
        return b;
    }
    std::size_t cells() const noexcept { return nx * ny; }

    friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Grid covering `box` padded by `pad` metres on every side.
inline GridSpec grid_for(const BBox& box, double cell_size, double pad) {
    if (!(cell_size > 0.0)) throw ValidationError("cell size must be positive");
    if (box.empty()) throw ValidationError("empty extent for grid");
    GridSpec g;
    g.origin = {box.min.x - pad, box.min.y - pad};
    g.cell_size = cell_size;
    g.nx = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((box.width() + 2 * pad) / cell_size - 1e-9)));
    g.ny = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((box.height() + 2 * pad) / cell_size - 1e-9)));
    return g;
}

enum class FieldKind { Uniform, Real, Delta };

inline std::string_view to_string(FieldKind k) {
    switch (k) {
        case FieldKind::Uniform: return "uniform";
        case FieldKind::Real: return "real";
        default: return "delta";
    }
}

/// Probability density per m² sampled at cell centers, row-major (j * nx + i).
struct DensityField {
    GridSpec grid;
    std::vector<double> values;
    FieldKind kind = FieldKind::Real;
    double bandwidth = 0.0;

    double at(std::size_t i, std::size_t j) const { return values[j * grid.nx + i]; }
    double integral() const {
        return pairwise_sum(values.begin(), values.end()) * grid.cell_size * grid.cell_size;
    }
};

enum class KdeMode { Truncated, Exact };

/// Isotropic Gaussian KDE evaluated at cell centers. Truncated mode ignores
/// samples farther than 6 bandwidths from the cell center.
inline DensityField kde_field(const SamplePoints& samples, double bandwidth, const GridSpec& grid,
                              KdeMode mode = KdeMode::Truncated) {
    if (samples.size() == 0) throw ValidationError("KDE needs at least one sample");
    if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) throw ValidationError("bandwidth must be positive");
    if (grid.cells() == 0 || !(grid.cell_size > 0.0)) throw ValidationError("empty grid");
    samples.validate();

    DensityField f;
    f.grid = grid;
    f.bandwidth = bandwidth;
    f.kind = samples.source == SampleSource::Panoramas ? FieldKind::Real : FieldKind::Uniform;
    f.values.assign(grid.cells(), 0.0);

    // Equal weights cancel; dropping them keeps the field bit-identical to the unweighted one.
    const bool flat = !samples.weighted() ||
                      std::adjacent_find(samples.weights.begin(), samples.weights.end(), std::not_equal_to<>()) ==
                          samples.weights.end();
    auto weight = [&](std::size_t i) { return flat ? 1.0 : samples.weights[i]; };
    const double total = flat ? static_cast<double>(samples.size()) : samples.total_weight();
    const double inv2h2 = 1.0 / (2.0 * bandwidth * bandwidth);
    const double norm = 1.0 / (2.0 * std::numbers::pi * bandwidth * bandwidth * total);
    const KdTree tree(samples.points);
    const double cutoff = kKdeCutoffBandwidths * bandwidth;
    parallel_for(grid.cells(), [&](std::size_t c) {
        const ProjPoint g = grid.cell_center(c % grid.nx, c / grid.nx);
        double acc = 0.0;
        if (mode == KdeMode::Exact) {
            for (std::size_t i = 0; i < samples.size(); ++i)
                acc += weight(i) * std::exp(-squared_distance(g, samples.points[i]) * inv2h2);
        } else {
            for (std::size_t i : tree.radius_search(g, cutoff))
                acc += weight(i) * std::exp(-squared_distance(g, samples.points[i]) * inv2h2);
        }
        f.values[c] = acc * norm;
    });
    return f;
}

/// Cellwise real − uniform; positive cells are oversampled.
inline DensityField delta_field(const DensityField& real, const DensityField& uniform) {
    if (!(real.grid == uniform.grid) || real.values.size() != uniform.values.size())
        throw ValidationError("delta_field needs identical grids");
    DensityField d;
    d.grid = real.grid;
    d.kind = FieldKind::Delta;
    d.bandwidth = real.bandwidth;
    d.values.resize(real.values.size());
    for (std::size_t i = 0; i < d.values.size(); ++i) d.values[i] = real.values[i] - uniform.values[i];
    return d;
}

inline ordered_json field_to_json(const DensityField& f, const Projection& proj) {
    const GeoPoint o = proj.unproject(f.grid.origin);
    ordered_json j;
    j["origin_lat"] = o.lat;
    j["origin_lon"] = o.lon;
    j["origin_x_m"] = f.grid.origin.x;
    j["origin_y_m"] = f.grid.origin.y;
    j["projection_lat"] = proj.origin().lat;
    j["projection_lon"] = proj.origin().lon;
    j["cell_size"] = f.grid.cell_size;
    j["nx"] = f.grid.nx;
    j["ny"] = f.grid.ny;
    j["kind"] = std::string(to_string(f.kind));
    j["bandwidth"] = f.bandwidth;
    j["values"] = f.values;
    return j;
}

} // namespace svbias
