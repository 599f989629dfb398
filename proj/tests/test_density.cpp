#include <gtest/gtest.h>

#include <random>

#include "svbias/density.hpp"
#include "svbias/synth.hpp"

using namespace svbias;

namespace {

RoadNetwork roads(std::vector<double> lengths) {
    RoadNetwork n;
    std::int64_t id = 1;
    double y = 0;
    for (double l : lengths) {
        n.roads.push_back({id++, RoadClass::Driveable, "residential", {Polyline({{0, y}, {l, y}})}});
        y += 50;
    }
    return n;
}

SamplePoints random_points(std::size_t n, double side, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0, side);
    SamplePoints s;
    for (std::size_t i = 0; i < n; ++i) s.points.push_back({u(rng), u(rng)});
    return s;
}

GridSpec grid_around(const SamplePoints& s, double cell, double h) {
    return grid_for(bbox_of(s.points), cell, kGridPadBandwidths * h);
}

} // namespace

TEST(UniformSamples, Counts) {
    EXPECT_EQ(uniform_road_samples(roads({100})).size(), 6u);
    EXPECT_EQ(uniform_road_samples(roads({100, 50})).size(), 9u);
    std::vector<double> ls(20, 500.0);
    const auto s = uniform_road_samples(roads(ls));
    EXPECT_NEAR(static_cast<double>(s.size()), 10000.0 / 20 + 20, 20);
    EXPECT_EQ(s.source, SampleSource::UniformRoad);
    EXPECT_THROW(uniform_road_samples(RoadNetwork{}), ValidationError);
}

TEST(WeightedPrior, SingleRegionIsUniform) {
    const auto net = roads({100, 200, 60});
    const RegionWeight all{Polygon::rectangle({-10, -10}, {300, 300}), 1.0};
    const auto w = weighted_prior_samples(net, std::span(&all, 1));
    const auto u = uniform_road_samples(net);
    EXPECT_EQ(w.samples.points, u.points);
    EXPECT_EQ(w.uncovered, 0u);
    for (double x : w.samples.weights) EXPECT_EQ(x, 1.0);
}

TEST(WeightedPrior, MassRatio) {
    const auto net = roads({200, 200});  // y = 0 and y = 50
    const std::vector<RegionWeight> rw{{Polygon::rectangle({-1, -1}, {201, 25}), 2.0},
                                       {Polygon::rectangle({-1, 25}, {201, 60}), 1.0}};
    const auto w = weighted_prior_samples(net, rw);
    double lo = 0, hi = 0;
    for (std::size_t i = 0; i < w.samples.size(); ++i)
        (w.samples.points[i].y < 25 ? lo : hi) += w.samples.weights[i];
    EXPECT_DOUBLE_EQ(lo / hi, 2.0);
    const std::vector<RegionWeight> zero{{Polygon::rectangle({-1, -1}, {201, 60}), 0.0}};
    EXPECT_THROW(weighted_prior_samples(net, zero), ValidationError);
}

TEST(WeightedPrior, ZeroRegionHasNoMass) {
    // Two streets 4 km apart; the second one carries weight 0.
    RoadNetwork net;
    net.roads.push_back({1, RoadClass::Driveable, "residential", {Polyline({{0, 0}, {1000, 0}})}});
    net.roads.push_back({2, RoadClass::Driveable, "residential", {Polyline({{0, 4000}, {1000, 4000}})}});
    const std::vector<RegionWeight> rw{{Polygon::rectangle({-100, -100}, {1100, 2000}), 1.0},
                                       {Polygon::rectangle({-100, 2000}, {1100, 4100}), 0.0}};
    const auto w = weighted_prior_samples(net, rw);
    const double h = 200;
    GridSpec g = grid_for(bbox_of(w.samples.points), 100, 4 * h);
    const auto f = kde_field(w.samples, h, g);
    double upper = 0;
    for (std::size_t j = 0; j < g.ny; ++j)
        for (std::size_t i = 0; i < g.nx; ++i)
            if (g.cell_center(i, j).y > 2000) upper += f.at(i, j) * 100 * 100;
    EXPECT_LE(upper, 0.01);
    EXPECT_NEAR(f.integral(), 1.0, 0.02);
}

TEST(Kde, SinglePointPeak) {
    SamplePoints s;
    s.points = {{50, 50}};
    GridSpec g;
    g.origin = {0, 0};
    g.cell_size = 100;
    g.nx = g.ny = 1;
    const auto f = kde_field(s, 100, g);
    EXPECT_NEAR(f.values[0], 1.0 / (2 * std::numbers::pi * 100 * 100), 1e-18);
    EXPECT_NEAR(f.values[0], 1.5915e-5, 1e-9);
    EXPECT_EQ(f.kind, FieldKind::Real);
    EXPECT_THROW(kde_field(s, 0.0, g), ValidationError);
    EXPECT_THROW(kde_field(SamplePoints{}, 10.0, g), ValidationError);
}

TEST(Kde, Linearity) {
    SamplePoints a, b, both;
    a.points = {{120, 340}};
    b.points = {{610, 90}};
    both.points = {a.points[0], b.points[0]};
    const auto g = grid_around(both, 50, 100);
    const auto fa = kde_field(a, 100, g, KdeMode::Exact), fb = kde_field(b, 100, g, KdeMode::Exact);
    const auto fab = kde_field(both, 100, g, KdeMode::Exact);
    for (std::size_t c = 0; c < g.cells(); ++c) EXPECT_NEAR(fab.values[c], 0.5 * (fa.values[c] + fb.values[c]), 1e-20);
}

TEST(Kde, TruncationMatchesExact) {
    const auto s = random_points(300, 2000, 4);
    const auto g = grid_around(s, 100, 150);
    const auto t = kde_field(s, 150, g), e = kde_field(s, 150, g, KdeMode::Exact);
    double peak = 0;
    for (double v : e.values) peak = std::max(peak, v);
    for (std::size_t c = 0; c < g.cells(); ++c) EXPECT_NEAR(t.values[c], e.values[c], 1e-7 * peak);
}

TEST(Kde, UniformSquareDensity) {
    const auto s = random_points(10000, 10000, 21);
    GridSpec g;
    g.origin = {0, 0};
    g.cell_size = 1000;
    g.nx = g.ny = 10;
    const auto f = kde_field(s, 200, g);
    std::size_t within = 0, interior = 0;
    double sum = 0;
    for (std::size_t j = 1; j + 1 < g.ny; ++j)
        for (std::size_t i = 1; i + 1 < g.nx; ++i) {
            ++interior;
            sum += f.at(i, j);
            if (std::abs(f.at(i, j) / 1e-8 - 1) <= 0.2) ++within;
        }
    EXPECT_NEAR(sum / static_cast<double>(interior), 1e-8, 0.05e-8);
    EXPECT_GE(static_cast<double>(within) / static_cast<double>(interior), 0.8);
}

TEST(Kde, NormalizationWithPad) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto s = random_points(200, 3000, seed);
        const auto f = kde_field(s, 200, grid_around(s, 50, 200));
        EXPECT_NEAR(f.integral(), 1.0, 0.02);
    }
}

TEST(Kde, TranslationEquivariance) {
    auto s = random_points(150, 1500, 5);
    auto g = grid_around(s, 80, 120);
    const auto f = kde_field(s, 120, g);
    const ProjPoint shift{1234.5, -876.25};
    for (auto& p : s.points) p = p + shift;
    g.origin = g.origin + shift;
    const auto h = kde_field(s, 120, g);
    for (std::size_t c = 0; c < g.cells(); ++c) EXPECT_NEAR(h.values[c], f.values[c], 1e-12 * f.values[c] + 1e-300);
}

TEST(Kde, WeightedEqualWeightsExact) {
    const auto city = gen_city(3, 3, 100);
    const auto u = uniform_road_samples(city.net);
    const RegionWeight all{city.boundary.polygon, 3.5};
    const auto w = weighted_prior_samples(city.net, std::span(&all, 1));
    const auto g = grid_for(city.boundary.polygon.bbox(), 50, 4 * 50);
    const auto fu = kde_field(u, 50, g), fw = kde_field(w.samples, 50, g);
    EXPECT_EQ(fu.values, fw.values);
}

TEST(Delta, IdentityAndMismatch) {
    const auto s = random_points(50, 1000, 1);
    const auto g = grid_around(s, 100, 100);
    const auto f = kde_field(s, 100, g);
    const auto d = delta_field(f, f);
    EXPECT_EQ(d.kind, FieldKind::Delta);
    for (double v : d.values) EXPECT_EQ(v, 0.0);
    auto g2 = g;
    g2.nx += 1;
    const auto f2 = kde_field(s, 100, g2);
    EXPECT_THROW(delta_field(f, f2), ValidationError);
}

TEST(Delta, OversampledRegionPositive) {
    const auto city = gen_city(10, 10, 100);
    const auto prior = uniform_road_samples(city.net);
    SamplePoints real;
    real.points = prior.points;
    for (const auto& p : prior.points)
        if (p.x < 0 && p.y < 0) real.points.push_back(p + ProjPoint{0.5, 0.5});
    const auto g = grid_for(city.boundary.polygon.bbox(), 100, 4 * 100);
    const auto d = delta_field(kde_field(real, 100, g), kde_field(prior, 100, g));
    EXPECT_GT(d.at(g.nx / 4, g.ny / 4), 0.0);
    EXPECT_LT(d.at(3 * g.nx / 4, 3 * g.ny / 4), 0.0);
    EXPECT_NEAR(d.integral(), 0.0, 0.02);
}

TEST(Field, JsonHeader) {
    const auto city = gen_city(2, 2, 100);
    const auto s = uniform_road_samples(city.net);
    const auto f = kde_field(s, 100, grid_for(city.boundary.polygon.bbox(), 100, 400));
    const auto j = field_to_json(f, city.net.projection);
    EXPECT_EQ(j["kind"], "uniform");
    EXPECT_EQ(j["nx"].get<std::size_t>(), f.grid.nx);
    EXPECT_EQ(j["values"].size(), f.values.size());
    EXPECT_NEAR(j["projection_lat"].get<double>(), kSynthOrigin.lat, 1e-12);
}
