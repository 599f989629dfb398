#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "svbias/stats.hpp"

using namespace svbias;

namespace {

json load_json(const std::string& name) {
    std::ifstream in(std::string(SVBIAS_TEST_DATA) + "/" + name);
    return json::parse(in);
}

std::vector<ProjPoint> to_points(const json& arr) {
    std::vector<ProjPoint> out;
    for (const auto& p : arr) out.push_back({p[0].get<double>(), p[1].get<double>()});
    return out;
}

std::vector<ProjPoint> normal_cloud(std::size_t n, double mx, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0, 1);
    std::vector<ProjPoint> out(n);
    for (auto& p : out) p = {mx + g(rng), g(rng)};
    return out;
}

} // namespace

TEST(Coverage, HandExample) {
    const std::vector<ProjPoint> road{{0, 0}, {20, 0}, {40, 0}, {60, 0}, {80, 0}};
    const std::vector<ProjPoint> panos{{0, 0}, {41, 0}};
    const auto c = coverage_percent(road, panos, 20.0);
    EXPECT_EQ(c.n_covered, 4u);
    EXPECT_EQ(c.n_road_points, 5u);
    EXPECT_DOUBLE_EQ(c.covered_fraction, 0.8);
}

TEST(Coverage, Extremes) {
    const std::vector<ProjPoint> road{{0, 0}, {20, 0}, {40, 0}};
    EXPECT_EQ(coverage_percent(road, road, 20.0).covered_fraction, 1.0);
    EXPECT_EQ(coverage_percent(road, std::vector<ProjPoint>{}, 20.0).covered_fraction, 0.0);
    EXPECT_THROW(coverage_percent(std::vector<ProjPoint>{}, road, 20.0), ValidationError);
    EXPECT_THROW(coverage_percent(road, road, 0.0), ValidationError);
}

TEST(Coverage, MonotoneInThreshold) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0, 1000);
    std::vector<ProjPoint> road, panos;
    for (int i = 0; i < 400; ++i) road.push_back({u(rng), u(rng)});
    for (int i = 0; i < 60; ++i) panos.push_back({u(rng), u(rng)});
    double last = -1;
    for (double t = 5; t <= 300; t += 5) {
        const auto c = coverage_percent(road, panos, t);
        EXPECT_EQ(c.covered_fraction, static_cast<double>(c.n_covered) / static_cast<double>(c.n_road_points));
        EXPECT_GE(c.covered_fraction, last);
        last = c.covered_fraction;
    }
}

TEST(RSquared, Examples) {
    std::vector<double> x, y;
    for (int i = 0; i < 10; ++i) {
        x.push_back(i);
        y.push_back(2 * i + 1);
    }
    EXPECT_NEAR(r_squared(x, y), 1.0, 1e-15);

    std::mt19937_64 rng(2);
    std::normal_distribution<double> g;
    std::vector<double> a(1000), b(1000);
    for (auto& v : a) v = g(rng);
    for (auto& v : b) v = g(rng);
    EXPECT_LE(r_squared(a, b), 0.02);
}

TEST(RSquared, AffineInvariance) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    std::vector<double> x(50), y(50);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = g(rng);
        y[i] = 0.4 * x[i] + g(rng);
    }
    const double r = r_squared(x, y);
    auto x2 = x, y2 = y;
    for (auto& v : x2) v = -3.0 * v + 17.0;
    for (auto& v : y2) v = 0.01 * v - 2.0;
    EXPECT_NEAR(r_squared(x2, y2), r, 1e-12);
}

TEST(RSquared, Errors) {
    const std::vector<double> c{1, 1, 1}, v{1, 2, 3};
    EXPECT_THROW(r_squared(c, v), ValidationError);
    EXPECT_THROW(r_squared(std::vector<double>{1, 2}, std::vector<double>{1, 2}), ValidationError);
    EXPECT_THROW(r_squared(v, std::vector<double>{1, 2}), ValidationError);
    EXPECT_THROW(r_squared(v, std::vector<double>{1, std::nan(""), 2}), ValidationError);
}

TEST(FDistribution, ReferenceQuantiles) {
    const auto table = load_json("f_quantiles.json");
    ASSERT_EQ(table.size(), 20u);
    for (const auto& e : table) {
        const double x = e["x"], d1 = e["d1"], d2 = e["d2"];
        EXPECT_NEAR(f_cdf(x, d1, d2), e["cdf"].get<double>(), 1e-6) << x << " " << d1 << " " << d2;
        EXPECT_NEAR(f_sf(x, d1, d2), e["sf"].get<double>(), 1e-6);
    }
}

TEST(FDistribution, Edges) {
    EXPECT_EQ(f_cdf(0.0, 2, 5), 0.0);
    EXPECT_EQ(f_sf(0.0, 2, 5), 1.0);
    EXPECT_NEAR(f_cdf(1.0, 7, 7), 0.5, 1e-12);
    EXPECT_NEAR(incomplete_beta(1, 1, 0.3), 0.3, 1e-14);
    EXPECT_NEAR(incomplete_beta(2, 3, 0.4) + incomplete_beta(3, 2, 0.6), 1.0, 1e-14);
}

TEST(Manova, IdenticalClouds) {
    const auto a = normal_cloud(50, 0, 4);
    const auto r = manova_two_group(a, a);
    EXPECT_DOUBLE_EQ(r.wilks_lambda, 1.0);
    EXPECT_EQ(r.pillai_trace, 0.0);
    EXPECT_EQ(r.hotelling_lawley, 0.0);
    EXPECT_EQ(r.roys_root, 0.0);
    for (double p : r.p_values()) EXPECT_DOUBLE_EQ(p, 1.0);
}

TEST(Manova, SeparatedGroups) {
    const auto r = manova_two_group(normal_cloud(500, 0, 5), normal_cloud(500, 5, 6));
    EXPECT_LT(r.wilks_lambda, 0.2);
    for (double p : r.p_values()) EXPECT_LT(p, 1e-10);
}

TEST(Manova, RankOneIdentities) {
    std::mt19937_64 rng(7);
    for (int t = 0; t < 50; ++t) {
        const auto r = manova_two_group(normal_cloud(10 + t, 0, rng()), normal_cloud(20, 0.1 * t, rng()));
        EXPECT_NEAR(r.wilks_lambda, 1 - r.pillai_trace, 1e-10);
        EXPECT_NEAR(r.hotelling_lawley, r.pillai_trace / (1 - r.pillai_trace), 1e-10);
        EXPECT_NEAR(r.roys_root, r.hotelling_lawley, 1e-10);
        EXPECT_GT(r.wilks_lambda, 0.0);
        EXPECT_LE(r.wilks_lambda, 1.0);
        EXPECT_GE(r.pillai_trace, 0.0);
        EXPECT_LT(r.pillai_trace, 1.0);
    }
}

TEST(Manova, RotationInvariant) {
    auto a = normal_cloud(40, 0, 8), b = normal_cloud(60, 0.7, 9);
    const auto r = manova_two_group(a, b);
    const double c = std::cos(0.7), s = std::sin(0.7);
    for (auto* v : {&a, &b})
        for (auto& p : *v) p = {c * p.x - s * p.y + 100, s * p.x + c * p.y - 50};
    const auto q = manova_two_group(a, b);
    EXPECT_NEAR(q.wilks_lambda, r.wilks_lambda, 1e-9);
    EXPECT_NEAR(q.pillai_trace, r.pillai_trace, 1e-9);
    EXPECT_NEAR(q.hotelling_lawley, r.hotelling_lawley, 1e-9);
    EXPECT_NEAR(q.roys_root, r.roys_root, 1e-9);
}

TEST(Manova, MatchesReferenceImplementation) {
    const auto fx = load_json("manova_oracle.json");
    ASSERT_EQ(fx.size(), 20u);
    for (std::size_t i = 0; i < fx.size(); ++i) {
        const auto& f = fx[i];
        const auto r = manova_two_group(to_points(f["a"]), to_points(f["b"]));
        const std::array<std::pair<const char*, FTest>, 4> tests{
            {{"wilks", r.wilks_test}, {"pillai", r.pillai_test}, {"hotelling", r.hotelling_test}, {"roy", r.roy_test}}};
        const std::array<double, 4> values{r.wilks_lambda, r.pillai_trace, r.hotelling_lawley, r.roys_root};
        for (std::size_t k = 0; k < 4; ++k) {
            const auto& o = f[tests[k].first];
            EXPECT_NEAR(values[k], o["value"].get<double>(), 1e-9 * std::max(1.0, std::abs(o["value"].get<double>())))
                << i << " " << tests[k].first;
            EXPECT_NEAR(tests[k].second.f, o["f"].get<double>(), 1e-8 * std::max(1.0, o["f"].get<double>()));
            EXPECT_NEAR(tests[k].second.df2, o["df2"].get<double>(), 1e-9);
            EXPECT_NEAR(tests[k].second.p_value, o["p"].get<double>(), 1e-6) << i << " " << tests[k].first;
        }
    }
}

TEST(Manova, DegenerateGroupNamed) {
    std::vector<ProjPoint> line{{0, 0}, {1, 1}, {2, 2}, {3, 3}};
    const auto b = normal_cloud(30, 0, 10);
    EXPECT_THROW(manova_two_group(line, std::vector<ProjPoint>{{0, 0}, {1, 1}}), ValidationError);
    try {
        manova_two_group(line, std::vector<ProjPoint>{{0, 1}, {1, 2}, {2, 3}}, {"panos", "roads"});
        FAIL();
    } catch (const ValidationError& e) {
        const std::string w = e.what();
        EXPECT_NE(w.find("panos"), std::string::npos) << w;
        EXPECT_NE(w.find("roads"), std::string::npos) << w;
    }
    EXPECT_NO_THROW(manova_two_group(line, b));
}

TEST(Manova, CsvLayout) {
    const auto r = manova_two_group(normal_cloud(30, 0, 11), normal_cloud(30, 1, 12));
    const auto row = manova_csv_row("Dakar", "GSV", r);
    EXPECT_EQ(row.rfind("Dakar,GSV,30,30,", 0), 0u);
    const auto header = manova_csv_header();
    EXPECT_EQ(std::count(row.begin(), row.end(), ','), std::count(header.begin(), header.end(), ','));
}
