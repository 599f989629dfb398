#pragma once

// Binary coverage, simple-regression R², and two-group MANOVA.

#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "svbias/density.hpp"
#include "svbias/error.hpp"
#include "svbias/geo.hpp"
#include "svbias/ingest.hpp"
#include "svbias/kdtree.hpp"
#include "svbias/parallel.hpp"

namespace svbias {

inline constexpr double kDefaultCoverageThresholdM = 20.0;

struct CoverageResult {
    double covered_fraction = 0.0;
    double threshold = kDefaultCoverageThresholdM;
    std::size_t n_road_points = 0;
    std::size_t n_covered = 0;
};

/// Fraction of road sample points with a panorama within `threshold` (inclusive).
inline CoverageResult coverage_percent(std::span<const ProjPoint> road_points, std::span<const ProjPoint> panos,
                                       double threshold) {
    if (!(threshold > 0.0) || !std::isfinite(threshold)) throw ValidationError("coverage threshold must be positive");
    if (road_points.empty()) throw ValidationError("no road points to cover");
    CoverageResult r;
    r.threshold = threshold;
    r.n_road_points = road_points.size();
    if (panos.empty()) return r;
    const KdTree tree(panos);
    std::vector<unsigned char> hit(road_points.size(), 0);
    const double t2 = threshold * threshold * (1.0 + 1e-12);
    parallel_for(road_points.size(), [&](std::size_t i) { hit[i] = tree.nearest(road_points[i]).dist2 <= t2; });
    for (auto h : hit) r.n_covered += h;
    r.covered_fraction = static_cast<double>(r.n_covered) / static_cast<double>(r.n_road_points);
    return r;
}

inline CoverageResult coverage_percent(const RoadNetwork& net, const PanoDataset& panos,
                                       double threshold = kDefaultCoverageThresholdM) {
    const auto road = uniform_road_samples(net);
    const auto pts = project_records(panos, net.projection);
    return coverage_percent(road.points, pts, threshold);
}

/// Coefficient of determination of the OLS fit y ~ a + b x.
inline double r_squared(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ValidationError("r_squared needs equal-length inputs");
    if (x.size() < 3) throw ValidationError("r_squared needs at least 3 points");
    for (std::size_t i = 0; i < x.size(); ++i)
        if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw ValidationError("r_squared inputs must be finite");
    const double n = static_cast<double>(x.size());
    const double mx = pairwise_sum(x.begin(), x.end()) / n;
    const double my = pairwise_sum(y.begin(), y.end()) / n;
    std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        xx[i] = dx * dx;
        yy[i] = dy * dy;
        xy[i] = dx * dy;
    }
    const double sxx = pairwise_sum(xx.begin(), xx.end());
    const double syy = pairwise_sum(yy.begin(), yy.end());
    const double sxy = pairwise_sum(xy.begin(), xy.end());
    if (!(sxx > 0.0)) throw ValidationError("r_squared: x is constant");
    if (!(syy > 0.0)) throw ValidationError("r_squared: y is constant");
    return std::min(1.0, sxy * sxy / (sxx * syy));
}

// ---------------------------------------------------------------------------
// F distribution

namespace detail {

// Continued fraction for the incomplete beta (modified Lentz).
inline double beta_cf(double a, double b, double x) {
    constexpr int kMaxIter = 10000;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) return h;
    }
    throw Error("incomplete beta continued fraction did not converge");
}

} // namespace detail

/// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw ValidationError("incomplete_beta needs a, b > 0");
    if (!(x >= 0.0 && x <= 1.0)) throw ValidationError("incomplete_beta needs x in [0, 1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double log_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_cf(a, b, x) / a;
    return 1.0 - front * detail::beta_cf(b, a, 1.0 - x) / b;
}

inline double f_cdf(double f, double d1, double d2) {
    if (!(d1 > 0.0) || !(d2 > 0.0)) throw ValidationError("F degrees of freedom must be positive");
    if (std::isnan(f)) throw ValidationError("F statistic is NaN");
    if (f <= 0.0) return 0.0;
    if (std::isinf(f)) return 1.0;
    return incomplete_beta(d1 / 2.0, d2 / 2.0, d1 * f / (d1 * f + d2));
}

/// Upper tail P(F > f), computed without cancellation.
inline double f_sf(double f, double d1, double d2) {
    if (!(d1 > 0.0) || !(d2 > 0.0)) throw ValidationError("F degrees of freedom must be positive");
    if (std::isnan(f)) throw ValidationError("F statistic is NaN");
    if (f <= 0.0) return 1.0;
    if (std::isinf(f)) return 0.0;
    return incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f));
}

// ---------------------------------------------------------------------------
// MANOVA

struct FTest {
    double f = 0.0;
    double df1 = 0.0, df2 = 0.0;
    double p_value = 1.0;
};

struct ManovaResult {
    double wilks_lambda = 1.0;
    double pillai_trace = 0.0;
    double hotelling_lawley = 0.0;
    double roys_root = 0.0;
    FTest wilks_test, pillai_test, hotelling_test, roy_test;
    std::size_t n1 = 0, n2 = 0;
    int d = 2;

    std::array<double, 4> p_values() const {
        return {wilks_test.p_value, pillai_test.p_value, hotelling_test.p_value, roy_test.p_value};
    }
};

namespace detail {

using Mat2 = std::array<double, 4>;  // row-major a b / c d

inline double det2(const Mat2& m) { return m[0] * m[3] - m[1] * m[2]; }
inline double trace2(const Mat2& m) { return m[0] + m[3]; }
inline Mat2 add2(const Mat2& a, const Mat2& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]}; }
inline Mat2 mul2(const Mat2& a, const Mat2& b) {
    return {a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3], a[2] * b[0] + a[3] * b[2],
            a[2] * b[1] + a[3] * b[3]};
}
inline Mat2 inv2(const Mat2& m) {
    const double det = det2(m);
    return {m[3] / det, -m[1] / det, -m[2] / det, m[0] / det};
}

struct GroupMoments {
    ProjPoint mean;
    Mat2 sscp;  // centered
};

inline GroupMoments moments(std::span<const ProjPoint> pts) {
    const double n = static_cast<double>(pts.size());
    std::vector<double> a(pts.size()), b(pts.size()), c(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        a[i] = pts[i].x;
        b[i] = pts[i].y;
    }
    GroupMoments g;
    g.mean = {pairwise_sum(a.begin(), a.end()) / n, pairwise_sum(b.begin(), b.end()) / n};
    parallel_for(pts.size(), [&](std::size_t i) {
        const double dx = pts[i].x - g.mean.x, dy = pts[i].y - g.mean.y;
        a[i] = dx * dx;
        b[i] = dx * dy;
        c[i] = dy * dy;
    });
    const double sxy = pairwise_sum(b.begin(), b.end());
    g.sscp = {pairwise_sum(a.begin(), a.end()), sxy, sxy, pairwise_sum(c.begin(), c.end())};
    return g;
}

inline bool near_singular(const Mat2& m) {
    const double t = trace2(m);
    return !(t > 0.0) || det2(m) <= 1e-12 * t * t;
}

inline FTest make_test(double f, double df1, double df2) { return {f, df1, df2, f_sf(f, df1, df2)}; }

} // namespace detail

/// One-way MANOVA of two 2-D groups. `names` label the groups in errors.
inline ManovaResult manova_two_group(std::span<const ProjPoint> a, std::span<const ProjPoint> b,
                                     std::array<std::string, 2> names = {"A", "B"}) {
    if (a.size() < 3) throw ValidationError("MANOVA group " + names[0] + " needs at least 3 points");
    if (b.size() < 3) throw ValidationError("MANOVA group " + names[1] + " needs at least 3 points");
    const auto ga = detail::moments(a);
    const auto gb = detail::moments(b);
    const detail::Mat2 e = detail::add2(ga.sscp, gb.sscp);
    if (detail::near_singular(e)) {
        std::string who;
        if (detail::near_singular(ga.sscp)) who = names[0];
        if (detail::near_singular(gb.sscp)) who += who.empty() ? names[1] : " and " + names[1];
        if (who.empty()) who = names[0] + " and " + names[1];
        throw ValidationError("MANOVA within-group SSCP is singular: degenerate group " + who);
    }
    const double n1 = static_cast<double>(a.size()), n2 = static_cast<double>(b.size());
    const double N = n1 + n2;
    const double dx = ga.mean.x - gb.mean.x, dy = ga.mean.y - gb.mean.y;
    const double w = n1 * n2 / N;
    const detail::Mat2 h = {w * dx * dx, w * dx * dy, w * dx * dy, w * dy * dy};

    ManovaResult r;
    r.n1 = a.size();
    r.n2 = b.size();
    const detail::Mat2 he = detail::add2(h, e);
    r.wilks_lambda = detail::det2(e) / detail::det2(he);
    r.pillai_trace = detail::trace2(detail::mul2(h, detail::inv2(he)));
    const detail::Mat2 hei = detail::mul2(h, detail::inv2(e));
    r.hotelling_lawley = detail::trace2(hei);
    const double tr = detail::trace2(hei), det = detail::det2(hei);
    r.roys_root = 0.5 * tr + std::sqrt(std::max(0.0, 0.25 * tr * tr - det));

    // General F approximations with p = 2 response variables, q = 1 hypothesis df.
    const double p = 2.0, q = 1.0, v = N - 2.0;
    const double s = std::min(p, q);
    const double m = (std::abs(p - q) - 1.0) / 2.0;
    const double nn = (v - p - 1.0) / 2.0;
    {
        const double rr = v - (p - q + 1.0) / 2.0;
        const double u = (p * q - 2.0) / 4.0;
        const double t = p * p + q * q - 5.0 > 0.0 ? std::sqrt((p * p * q * q - 4.0) / (p * p + q * q - 5.0)) : 1.0;
        const double df1 = p * q, df2 = rr * t - 2.0 * u;
        const double l = std::pow(r.wilks_lambda, 1.0 / t);
        r.wilks_test = detail::make_test((1.0 - l) / l * df2 / df1, df1, df2);
    }
    {
        const double df1 = s * (2.0 * m + s + 1.0), df2 = s * (2.0 * nn + s + 1.0);
        r.pillai_test = detail::make_test(df2 / df1 * r.pillai_trace / (s - r.pillai_trace), df1, df2);
    }
    {
        const double df1 = p * q;
        double df2 = 4.0;  // limit as b -> inf when nn == 1
        if (nn != 1.0) {
            const double bb = (p + 2.0 * nn) * (q + 2.0 * nn) / 2.0 / (2.0 * nn + 1.0) / (nn - 1.0);
            df2 = 4.0 + (p * q + 2.0) / (bb - 1.0);
        }
        const double c = (df2 - 2.0) / 2.0 / nn;
        r.hotelling_test = detail::make_test(df2 / df1 * r.hotelling_lawley / c, df1, df2);
    }
    {
        const double rr = std::max(p, q);
        const double df1 = rr, df2 = v - rr + q;
        r.roy_test = detail::make_test(df2 / df1 * r.roys_root, df1, df2);
    }
    return r;
}

inline ManovaResult manova_two_group(const SamplePoints& a, const SamplePoints& b,
                                     std::array<std::string, 2> names = {"A", "B"}) {
    return manova_two_group(std::span<const ProjPoint>(a.points), std::span<const ProjPoint>(b.points),
                            std::move(names));
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {
inline std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}
} // namespace detail

inline std::string manova_csv_header() {
    return "city,provider,n1,n2,wilks,wilks_p,pillai,pillai_p,hotelling_lawley,hotelling_lawley_p,roy,roy_p\n";
}

/// One row in the appendix layout: value and 3-decimal p-value per statistic.
inline std::string manova_csv_row(std::string_view city, std::string_view provider, const ManovaResult& r) {
    std::string s(city);
    s += ',';
    s += provider;
    s += ',' + std::to_string(r.n1) + ',' + std::to_string(r.n2);
    const std::array<std::pair<double, double>, 4> cols = {{{r.wilks_lambda, r.wilks_test.p_value},
                                                            {r.pillai_trace, r.pillai_test.p_value},
                                                            {r.hotelling_lawley, r.hotelling_test.p_value},
                                                            {r.roys_root, r.roy_test.p_value}}};
    for (auto [v, p] : cols) s += ',' + detail::fmt("%.6g", v) + ',' + detail::fmt("%.3f", p);
    return s + '\n';
}

inline std::string coverage_csv_header() { return "city,provider,threshold_m,n_road_points,n_covered,covered_fraction\n"; }

inline std::string coverage_csv_row(std::string_view city, std::string_view provider, const CoverageResult& c) {
    std::string s(city);
    s += ',';
    s += provider;
    s += ',' + detail::fmt("%.6g", c.threshold) + ',' + std::to_string(c.n_road_points) + ',' +
         std::to_string(c.n_covered) + ',' + detail::fmt("%.6f", c.covered_fraction);
    return s + '\n';
}

} // namespace svbias
