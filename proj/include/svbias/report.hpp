#pragma once

// City rankings and map exports (GeoJSON cells, SVG choropleth).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "svbias/density.hpp"
#include "svbias/error.hpp"
#include "svbias/geo.hpp"
#include "svbias/ingest.hpp"

namespace svbias {

// ---------------------------------------------------------------------------
// Ranking

struct CityScore {
    std::string city;
    std::string provider;
    double emd = 0.0;
    double kl = 0.0;
};

struct RankingRow {
    std::string city;
    std::string provider;
    double emd = 0.0;
    double kl = 0.0;
    std::size_t emd_rank = 0;
    std::size_t kl_rank = 0;
};

struct RankingTable {
    std::vector<RankingRow> rows;  // ascending kl_rank
};

/// 1-based ranks per metric, smaller score first, ties by (city, provider).
inline RankingTable rank_cities(std::vector<CityScore> scores) {
    if (scores.empty()) throw ValidationError("rank_cities needs at least one row");
    for (const auto& s : scores)
        if (!std::isfinite(s.emd) || !std::isfinite(s.kl))
            throw ValidationError("non-finite score for " + s.city + "/" + s.provider);
    auto ranks = [&](auto metric) {
        std::vector<std::size_t> idx(scores.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            const double ma = metric(scores[a]), mb = metric(scores[b]);
            if (ma != mb) return ma < mb;
            if (scores[a].city != scores[b].city) return scores[a].city < scores[b].city;
            return scores[a].provider < scores[b].provider;
        });
        std::vector<std::size_t> r(scores.size());
        for (std::size_t k = 0; k < idx.size(); ++k) r[idx[k]] = k + 1;
        return r;
    };
    const auto er = ranks([](const CityScore& s) { return s.emd; });
    const auto kr = ranks([](const CityScore& s) { return s.kl; });
    RankingTable t;
    t.rows.resize(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i)
        t.rows[kr[i] - 1] = {scores[i].city, scores[i].provider, scores[i].emd, scores[i].kl, er[i], kr[i]};
    return t;
}

namespace detail {

inline std::string format_g(double v, int sig) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", sig, v);
    return buf;
}

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

} // namespace detail

/// Full-precision CSV: city,provider,emd,kl,emd_rank,kl_rank.
inline std::string ranking_csv(const RankingTable& t) {
    std::string s = "city,provider,emd,kl,emd_rank,kl_rank\n";
    for (const auto& r : t.rows)
        s += detail::csv_field(r.city) + ',' + detail::csv_field(r.provider) + ',' + detail::format_g(r.emd, 17) + ',' +
             detail::format_g(r.kl, 17) + ',' + std::to_string(r.emd_rank) + ',' + std::to_string(r.kl_rank) + '\n';
    return s;
}

/// Printed table: EMD in units of 1e-3 to 3 significant digits, KL to 2 decimals.
inline std::string format_ranking(const RankingTable& t) {
    std::size_t wc = 4, wp = 8;
    for (const auto& r : t.rows) {
        wc = std::max(wc, r.city.size());
        wp = std::max(wp, r.provider.size());
    }
    char buf[256];
    std::string s;
    std::snprintf(buf, sizeof buf, "%-*s  %-*s  %10s  %8s  %8s  %7s\n", static_cast<int>(wc), "City",
                  static_cast<int>(wp), "Provider", "EMD(1e-3)", "KL", "EMD-Rank", "KL-Rank");
    s += buf;
    for (const auto& r : t.rows) {
        std::snprintf(buf, sizeof buf, "%-*s  %-*s  %10.3g  %8.2f  %8zu  %7zu\n", static_cast<int>(wc), r.city.c_str(),
                      static_cast<int>(wp), r.provider.c_str(), r.emd * 1e3, r.kl, r.emd_rank, r.kl_rank);
        s += buf;
    }
    return s;
}

/// Reads city,provider,emd,kl rows (header required; extra columns ignored).
inline std::vector<CityScore> parse_scores_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("scores CSV is empty");
    const auto header = detail::split_csv_line(line);
    auto col = [&](const char* name) {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw ParseError(std::string("scores CSV lacks column '") + name + "'");
    };
    const std::size_t ci = col("city"), pi = col("provider"), ei = col("emd"), ki = col("kl");
    std::vector<CityScore> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto f = detail::split_csv_line(line);
        if (f.size() < header.size()) throw ParseError("scores CSV line " + std::to_string(line_no) + " is short");
        try {
            std::size_t used = 0;
            CityScore s{f[ci], f[pi], std::stod(f[ei], &used), 0.0};
            s.kl = std::stod(f[ki], &used);
            out.push_back(std::move(s));
        } catch (const std::logic_error&) {
            throw ParseError("scores CSV line " + std::to_string(line_no) + " has a bad number");
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// GeoJSON cells

/// Cells whose square intersects the boundary with positive area.
inline std::vector<char> cell_mask(const GridSpec& grid, const Polygon& boundary) {
    std::vector<char> m(grid.cells(), 0);
    for (std::size_t c = 0; c < grid.cells(); ++c)
        m[c] = intersection_area(boundary, grid.cell_box(c % grid.nx, c / grid.nx)) > 0.0;
    return m;
}

/// FeatureCollection of delta cells (WGS84 rings) with property `c_delta`.
/// Cells with mask 0 are dropped; an empty mask keeps every cell.
inline std::string export_delta_geojson(const DensityField& field, const Projection& proj,
                                        const std::vector<char>& mask = {}) {
    if (field.kind != FieldKind::Delta) throw ValidationError("export_delta_geojson needs a delta field");
    if (!mask.empty() && mask.size() != field.grid.cells()) throw ValidationError("cell mask size mismatch");
    const auto& g = field.grid;
    ordered_json fc;
    fc["type"] = "FeatureCollection";
    ordered_json meta = field_to_json(field, proj);
    meta.erase("values");
    fc["grid"] = meta;
    fc["features"] = ordered_json::array();
    for (std::size_t j = 0; j < g.ny; ++j)
        for (std::size_t i = 0; i < g.nx; ++i) {
            const std::size_t c = j * g.nx + i;
            if (!mask.empty() && !mask[c]) continue;
            const BBox b = g.cell_box(i, j);
            ordered_json ring = ordered_json::array();
            for (ProjPoint p : {b.min, ProjPoint{b.max.x, b.min.y}, b.max, ProjPoint{b.min.x, b.max.y}, b.min}) {
                const GeoPoint q = proj.unproject(p);
                ring.push_back({q.lon, q.lat});
            }
            ordered_json f;
            f["type"] = "Feature";
            f["properties"] = {{"i", i}, {"j", j}, {"c_delta", field.values[c]}};
            f["geometry"] = {{"type", "Polygon"}, {"coordinates", ordered_json::array({ring})}};
            fc["features"].push_back(std::move(f));
        }
    return fc.dump() + "\n";
}

struct DeltaGeoJson {
    DensityField field;
    Projection projection;
    std::vector<char> mask;
    std::vector<std::vector<GeoPoint>> rings;  // per feature, in file order
};

inline DeltaGeoJson parse_delta_geojson(std::string_view text) {
    const json j = detail::parse_json_text(text);
    try {
        const json& m = j.at("grid");
        DeltaGeoJson out;
        out.projection = Projection({m.at("projection_lat").get<double>(), m.at("projection_lon").get<double>()});
        auto& g = out.field.grid;
        g.origin = {m.at("origin_x_m").get<double>(), m.at("origin_y_m").get<double>()};
        g.cell_size = m.at("cell_size").get<double>();
        g.nx = m.at("nx").get<std::size_t>();
        g.ny = m.at("ny").get<std::size_t>();
        if (m.at("kind").get<std::string>() != "delta") throw TypeError("GeoJSON grid is not a delta field");
        out.field.kind = FieldKind::Delta;
        out.field.bandwidth = m.at("bandwidth").get<double>();
        out.field.values.assign(g.cells(), 0.0);
        out.mask.assign(g.cells(), 0);
        for (const auto& f : j.at("features")) {
            const auto& p = f.at("properties");
            const auto i = p.at("i").get<std::size_t>(), jj = p.at("j").get<std::size_t>();
            if (i >= g.nx || jj >= g.ny) throw ParseError("cell index out of range");
            out.field.values[jj * g.nx + i] = p.at("c_delta").get<double>();
            out.mask[jj * g.nx + i] = 1;
            std::vector<GeoPoint> ring;
            for (const auto& c : f.at("geometry").at("coordinates").at(0))
                ring.push_back({c.at(1).get<double>(), c.at(0).get<double>()});
            out.rings.push_back(std::move(ring));
        }
        return out;
    } catch (const json::exception& e) {
        throw ParseError(std::string("delta GeoJSON: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// SVG

struct Rgb {
    int r = 0, g = 0, b = 0;
    friend bool operator==(const Rgb&, const Rgb&) = default;
};

inline constexpr Rgb kRampNegative{0x21, 0x66, 0xac};
inline constexpr Rgb kRampNeutral{0xf7, 0xf7, 0xf7};
inline constexpr Rgb kRampPositive{0xb2, 0x18, 0x2b};

inline std::string to_hex(Rgb c) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c.r, c.g, c.b);
    return buf;
}

namespace detail {
inline Rgb lerp(Rgb a, Rgb b, double t) {
    auto mix = [t](int x, int y) { return static_cast<int>(std::lround(x + (y - x) * t)); };
    return {mix(a.r, b.r), mix(a.g, b.g), mix(a.b, b.b)};
}
} // namespace detail

/// Diverging ramp on t in [-1, 1]: blue, neutral grey at 0, red.
inline Rgb diverging_color(double t) {
    t = std::clamp(t, -1.0, 1.0);
    return t < 0 ? detail::lerp(kRampNeutral, kRampNegative, -t) : detail::lerp(kRampNeutral, kRampPositive, t);
}

/// Sequential ramp on t in [0, 1].
inline Rgb sequential_color(double t) { return detail::lerp(kRampNeutral, kRampPositive, std::clamp(t, 0.0, 1.0)); }

/// Color of every cell, row-major like the field.
inline std::vector<Rgb> field_colors(const DensityField& f) {
    double vmax = 0.0;
    for (double v : f.values) vmax = std::max(vmax, std::abs(v));
    std::vector<Rgb> out(f.values.size(), kRampNeutral);
    if (!(vmax > 0.0)) return out;
    for (std::size_t c = 0; c < f.values.size(); ++c)
        out[c] = f.kind == FieldKind::Delta ? diverging_color(f.values[c] / vmax) : sequential_color(f.values[c] / vmax);
    return out;
}

/// One rect per cell, north up, plus a legend with numeric ticks.
inline std::string export_svg_choropleth(const DensityField& f, int px = 8) {
    const auto& g = f.grid;
    if (g.cells() == 0 || f.values.size() != g.cells()) throw ValidationError("field has no cells");
    for (double v : f.values)
        if (!std::isfinite(v)) throw ValidationError("field has non-finite values");
    double vmax = 0.0;
    for (double v : f.values) vmax = std::max(vmax, std::abs(v));
    const auto colors = field_colors(f);
    const int w = static_cast<int>(g.nx) * px, h = static_cast<int>(g.ny) * px;
    const int legend_w = 90;
    const int height = std::max(h, 120);
    std::string s;
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w + legend_w) + "\" height=\"" +
         std::to_string(height) + "\">\n";
    s += "<g id=\"cells\" shape-rendering=\"crispEdges\">\n";
    for (std::size_t j = 0; j < g.ny; ++j)
        for (std::size_t i = 0; i < g.nx; ++i) {
            const std::size_t c = j * g.nx + i;
            const int x = static_cast<int>(i) * px, y = (static_cast<int>(g.ny - 1 - j)) * px;
            s += "<rect x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(y) + "\" width=\"" + std::to_string(px) +
                 "\" height=\"" + std::to_string(px) + "\" fill=\"" + to_hex(colors[c]) + "\"/>\n";
        }
    s += "</g>\n<g id=\"legend\" font-family=\"sans-serif\" font-size=\"10\">\n";
    const bool delta = f.kind == FieldKind::Delta;
    std::vector<double> ticks = delta ? std::vector<double>{vmax, vmax / 2, 0.0, -vmax / 2, -vmax}
                                      : std::vector<double>{vmax, vmax / 2, 0.0};
    const int bar_x = w + 10, bar_h = 100, steps = 20;
    for (int k = 0; k < steps; ++k) {
        const double t = 1.0 - (k + 0.5) / steps;  // top of the bar is the maximum
        const Rgb c = delta ? diverging_color(2.0 * t - 1.0) : sequential_color(t);
        s += "<rect x=\"" + std::to_string(bar_x) + "\" y=\"" + std::to_string(10 + k * bar_h / steps) +
             "\" width=\"12\" height=\"" + std::to_string(bar_h / steps) + "\" fill=\"" + to_hex(c) + "\"/>\n";
    }
    for (std::size_t k = 0; k < ticks.size(); ++k) {
        const int y = 10 + static_cast<int>(std::lround(static_cast<double>(k) * bar_h / (ticks.size() - 1)));
        s += "<text x=\"" + std::to_string(bar_x + 16) + "\" y=\"" + std::to_string(y + 3) + "\">" +
             detail::format_g(ticks[k] + 0.0, 3) + "</text>\n";
    }
    s += "</g>\n</svg>\n";
    return s;
}

} // namespace svbias
