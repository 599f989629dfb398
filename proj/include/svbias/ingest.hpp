#pragma once

// Boundary, road-network, and panorama-metadata readers.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <json.hpp>

#include "svbias/error.hpp"
#include "svbias/geo.hpp"

namespace svbias {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Road classes

enum class RoadClass { Driveable, PublicOnly };

inline std::string_view to_string(RoadClass c) {
    return c == RoadClass::Driveable ? "driveable" : "public";
}

inline RoadClass parse_road_class(std::string_view s) {
    if (s == "driveable" || s == "Driveable") return RoadClass::Driveable;
    if (s == "public" || s == "PublicOnly" || s == "public_only") return RoadClass::PublicOnly;
    throw ValidationError("unknown road class '" + std::string(s) + "'");
}

/// Class of an OSM highway value, or nullopt when the way is not a public road.
inline std::optional<RoadClass> classify_highway(std::string_view tag) {
    static constexpr std::array<std::string_view, 9> driveable{
        "motorway", "trunk",        "primary", "secondary",     "tertiary",
        "residential", "unclassified", "service", "living_street"};
    static constexpr std::array<std::string_view, 6> public_extra{
        "pedestrian", "footway", "path", "cycleway", "steps", "track"};
    std::string_view base = tag;
    if (base.ends_with("_link")) base.remove_suffix(5);
    if (std::find(driveable.begin(), driveable.end(), base) != driveable.end()) return RoadClass::Driveable;
    if (std::find(public_extra.begin(), public_extra.end(), tag) != public_extra.end())
        return RoadClass::PublicOnly;
    return std::nullopt;
}

/// A PublicOnly filter admits every public road, driveable ones included.
inline bool admits(RoadClass filter, RoadClass road) {
    return filter == RoadClass::PublicOnly || road == RoadClass::Driveable;
}

// ---------------------------------------------------------------------------
// Boundary

struct Boundary {
    Polygon polygon;
    Projection projection;
};

namespace detail {

inline json parse_json_text(std::string_view text) {
    try {
        return json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("malformed JSON: ") + e.what(), e.byte);
    }
}

using LonLatRing = std::vector<std::array<double, 2>>;
using LonLatPolygon = std::vector<LonLatRing>;

inline LonLatRing read_ring(const json& ring) {
    if (!ring.is_array()) throw TypeError("polygon ring is not an array");
    LonLatRing out;
    for (const auto& c : ring) {
        if (!c.is_array() || c.size() < 2 || !c[0].is_number() || !c[1].is_number())
            throw TypeError("invalid position in ring");
        out.push_back({c[0].get<double>(), c[1].get<double>()});
    }
    return out;
}

inline void collect_polygons(const json& geom, std::vector<LonLatPolygon>& out) {
    if (!geom.is_object() || !geom.contains("type")) throw TypeError("GeoJSON object without type");
    const std::string type = geom["type"].get<std::string>();
    if (type == "FeatureCollection") {
        for (const auto& f : geom.at("features")) collect_polygons(f, out);
    } else if (type == "Feature") {
        if (geom.contains("geometry") && !geom["geometry"].is_null()) collect_polygons(geom["geometry"], out);
    } else if (type == "Polygon") {
        LonLatPolygon p;
        for (const auto& r : geom.at("coordinates")) p.push_back(read_ring(r));
        if (!p.empty()) out.push_back(std::move(p));
    } else if (type == "MultiPolygon") {
        for (const auto& poly : geom.at("coordinates")) {
            LonLatPolygon p;
            for (const auto& r : poly) p.push_back(read_ring(r));
            if (!p.empty()) out.push_back(std::move(p));
        }
    } else {
        throw TypeError("expected Polygon or MultiPolygon geometry, got " + type);
    }
}

inline Ring project_ring(const LonLatRing& r, const Projection& proj) {
    Ring out;
    out.reserve(r.size());
    for (const auto& c : r) out.push_back(proj.project({c[1], c[0]}));
    return out;
}

inline Polygon project_polygon(const LonLatPolygon& p, const Projection& proj) {
    std::vector<Ring> holes;
    for (std::size_t i = 1; i < p.size(); ++i) holes.push_back(project_ring(p[i], proj));
    return Polygon(project_ring(p[0], proj), std::move(holes));
}

inline ProjPoint ring_centroid(const Ring& r) {
    double a = 0, cx = 0, cy = 0;
    for (std::size_t i = 0; i + 1 < r.size(); ++i) {
        const double w = cross(r[i], r[i + 1]);
        a += w;
        cx += (r[i].x + r[i + 1].x) * w;
        cy += (r[i].y + r[i + 1].y) * w;
    }
    return {cx / (3 * a), cy / (3 * a)};
}

} // namespace detail

/// Reads a GeoJSON Polygon/MultiPolygon (bare, Feature, or FeatureCollection).
/// The largest-area polygon is kept and projected about its own centroid.
inline Boundary parse_boundary(std::string_view geojson_text) {
    const json doc = detail::parse_json_text(geojson_text);
    std::vector<detail::LonLatPolygon> candidates;
    try {
        detail::collect_polygons(doc, candidates);
    } catch (const json::exception& e) {
        throw TypeError(std::string("invalid GeoJSON structure: ") + e.what());
    }
    if (candidates.empty()) throw TypeError("no polygon geometry found");

    double lat = 0, lon = 0;
    std::size_t n = 0;
    for (const auto& c : candidates)
        for (const auto& v : c[0]) {
            lon += v[0];
            lat += v[1];
            ++n;
        }
    const Projection provisional(GeoPoint{lat / static_cast<double>(n), lon / static_cast<double>(n)});

    std::size_t best = 0;
    double best_area = -1;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const double a = detail::project_polygon(candidates[i], provisional).area();
        if (a > best_area) {
            best_area = a;
            best = i;
        }
    }
    const Polygon rough = detail::project_polygon(candidates[best], provisional);
    const Projection proj(provisional.unproject(detail::ring_centroid(rough.exterior())));
    return Boundary{detail::project_polygon(candidates[best], proj), proj};
}

inline ordered_json boundary_to_geojson(const Boundary& b) {
    auto ring_json = [&](const Ring& r) {
        ordered_json out = ordered_json::array();
        for (const auto& p : r) {
            const GeoPoint g = b.projection.unproject(p);
            out.push_back({g.lon, g.lat});
        }
        return out;
    };
    ordered_json coords = ordered_json::array();
    coords.push_back(ring_json(b.polygon.exterior()));
    for (const auto& h : b.polygon.holes()) coords.push_back(ring_json(h));
    ordered_json feature;
    feature["type"] = "Feature";
    feature["properties"] = ordered_json::object();
    feature["geometry"] = {{"type", "Polygon"}, {"coordinates", coords}};
    return {{"type", "FeatureCollection"}, {"features", ordered_json::array({feature})}};
}

// ---------------------------------------------------------------------------
// Road network

struct Road {
    std::int64_t way_id = 0;
    RoadClass road_class = RoadClass::Driveable;
    std::string highway;
    std::vector<Polyline> parts;

    double length() const {
        double l = 0;
        for (const auto& p : parts) l += p.length();
        return l;
    }
};

struct RoadNetwork {
    std::vector<Road> roads;  // ascending way_id
    Polygon boundary;
    Projection projection;
    std::size_t dangling_refs = 0;
    std::size_t skipped_ways = 0;
    std::size_t duplicate_ways = 0;

    double total_length() const {
        double l = 0;
        for (const auto& r : roads) l += r.length();
        return l;
    }
    bool empty() const { return roads.empty(); }
};

namespace detail {

struct RawWay {
    std::int64_t id;
    std::string highway;
    std::vector<GeoPoint> points;
};

inline RoadNetwork assemble_network(std::vector<RawWay> ways, const Boundary& boundary, RoadClass filter,
                                    RoadNetwork net) {
    std::sort(ways.begin(), ways.end(), [](const RawWay& a, const RawWay& b) { return a.id < b.id; });
    const IndexedPolygon clip(boundary.polygon);
    std::int64_t last_id = 0;
    bool have_last = false;
    for (auto& w : ways) {
        if (have_last && w.id == last_id) {
            ++net.duplicate_ways;
            continue;
        }
        have_last = true;
        last_id = w.id;
        const auto cls = classify_highway(w.highway);
        if (!cls || !admits(filter, *cls)) continue;
        std::vector<ProjPoint> pts;
        pts.reserve(w.points.size());
        bool ok = true;
        for (const auto& g : w.points) {
            try {
                pts.push_back(boundary.projection.project(g));
            } catch (const ValidationError&) {
                ok = false;
            }
        }
        Polyline line;
        if (!ok || !Polyline::try_make(std::move(pts), line)) {
            ++net.skipped_ways;
            continue;
        }
        Road road{w.id, *cls, w.highway, clip_polyline(line, clip)};
        if (!road.parts.empty()) net.roads.push_back(std::move(road));
    }
    net.boundary = boundary.polygon;
    net.projection = boundary.projection;
    return net;
}

} // namespace detail

/// Reads the node/way/tag subset of OSM XML. Ways whose highway tag is admitted by
/// `filter` become roads clipped to the boundary.
inline RoadNetwork parse_osm_roads(std::string_view osm_xml, const Boundary& boundary, RoadClass filter) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        std::istringstream in{std::string(osm_xml)};
        pt::read_xml(in, tree);
    } catch (const pt::xml_parser_error& e) {
        throw ParseError("malformed OSM XML: " + e.message() + " at line " + std::to_string(e.line()));
    }
    const auto osm = tree.get_child_optional("osm");
    if (!osm) throw ParseError("missing <osm> root element");

    std::unordered_map<std::int64_t, GeoPoint> nodes;
    std::vector<detail::RawWay> ways;
    std::vector<std::vector<std::int64_t>> refs;
    RoadNetwork net;
    try {
        for (const auto& [name, child] : *osm) {
            if (name == "node") {
                const auto id = child.get<std::int64_t>("<xmlattr>.id");
                nodes[id] = GeoPoint{child.get<double>("<xmlattr>.lat"), child.get<double>("<xmlattr>.lon")};
            } else if (name == "way") {
                detail::RawWay w{child.get<std::int64_t>("<xmlattr>.id"), {}, {}};
                std::vector<std::int64_t> way_refs;
                for (const auto& [cname, c] : child) {
                    if (cname == "nd") way_refs.push_back(c.get<std::int64_t>("<xmlattr>.ref"));
                    else if (cname == "tag" && c.get<std::string>("<xmlattr>.k", "") == "highway")
                        w.highway = c.get<std::string>("<xmlattr>.v", "");
                }
                if (w.highway.empty()) continue;
                ways.push_back(std::move(w));
                refs.push_back(std::move(way_refs));
            }
        }
    } catch (const pt::ptree_error& e) {
        throw ParseError(std::string("malformed OSM element: ") + e.what());
    }
    // Nodes may follow ways in the file, so references resolve after the full scan.
    for (std::size_t i = 0; i < ways.size(); ++i) {
        for (auto ref : refs[i]) {
            auto it = nodes.find(ref);
            if (it == nodes.end() || !is_valid(it->second)) {
                ++net.dangling_refs;
                continue;
            }
            ways[i].points.push_back(it->second);
        }
    }
    return detail::assemble_network(std::move(ways), boundary, filter, std::move(net));
}

/// Reads a FeatureCollection of LineString/MultiLineString features carrying a
/// `highway` property. Way ids come from `way_id`, `osm_id`, or the feature id.
inline RoadNetwork parse_geojson_roads(std::string_view text, const Boundary& boundary, RoadClass filter) {
    const json doc = detail::parse_json_text(text);
    std::vector<detail::RawWay> ways;
    RoadNetwork net;
    try {
        if (doc.value("type", "") != "FeatureCollection") throw TypeError("roads GeoJSON must be a FeatureCollection");
        std::int64_t fallback = 0;
        for (const auto& f : doc.at("features")) {
            ++fallback;
            const auto& props = f.contains("properties") && f["properties"].is_object() ? f["properties"] : json::object();
            if (!props.contains("highway") || !props["highway"].is_string()) continue;
            std::int64_t id = fallback;
            auto read_id = [&](const json& v) {
                if (v.is_number_integer()) id = v.get<std::int64_t>();
                else if (v.is_string()) id = std::stoll(v.get<std::string>());
            };
            if (props.contains("way_id")) read_id(props["way_id"]);
            else if (props.contains("osm_id")) read_id(props["osm_id"]);
            else if (f.contains("id")) read_id(f["id"]);
            const auto& geom = f.at("geometry");
            const std::string type = geom.at("type").get<std::string>();
            std::vector<json> lines;
            if (type == "LineString") lines.push_back(geom.at("coordinates"));
            else if (type == "MultiLineString")
                for (const auto& l : geom.at("coordinates")) lines.push_back(l);
            else
                throw TypeError("road feature has geometry " + type);
            // Each line of a MultiLineString shares the way id; only the first survives dedup.
            for (const auto& l : lines) {
                detail::RawWay w{id, props["highway"].get<std::string>(), {}};
                for (const auto& c : l) w.points.push_back({c.at(1).get<double>(), c.at(0).get<double>()});
                ways.push_back(std::move(w));
            }
        }
    } catch (const json::exception& e) {
        throw TypeError(std::string("invalid roads GeoJSON: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw TypeError(std::string("invalid road id: ") + e.what());
    }
    return detail::assemble_network(std::move(ways), boundary, filter, std::move(net));
}

/// Dispatches on content: text starting with '<' is OSM XML, anything else GeoJSON.
inline RoadNetwork parse_roads(std::string_view text, const Boundary& boundary, RoadClass filter) {
    const auto first = text.find_first_not_of(" \t\r\n\xef\xbb\xbf");
    if (first != std::string_view::npos && text[first] == '<') return parse_osm_roads(text, boundary, filter);
    return parse_geojson_roads(text, boundary, filter);
}

inline ordered_json roads_to_geojson(const RoadNetwork& net) {
    ordered_json features = ordered_json::array();
    for (const auto& r : net.roads) {
        ordered_json lines = ordered_json::array();
        for (const auto& part : r.parts) {
            ordered_json coords = ordered_json::array();
            for (const auto& p : part.points()) {
                const GeoPoint g = net.projection.unproject(p);
                coords.push_back({g.lon, g.lat});
            }
            lines.push_back(std::move(coords));
        }
        ordered_json f;
        f["type"] = "Feature";
        f["properties"] = {{"way_id", r.way_id}, {"highway", r.highway}};
        if (lines.size() == 1) f["geometry"] = {{"type", "LineString"}, {"coordinates", lines[0]}};
        else f["geometry"] = {{"type", "MultiLineString"}, {"coordinates", lines}};
        features.push_back(std::move(f));
    }
    return {{"type", "FeatureCollection"}, {"features", features}};
}

// ---------------------------------------------------------------------------
// Panoramas

enum class Provider { GSV, MLY, AMS, Other };

inline std::string_view to_string(Provider p) {
    switch (p) {
        case Provider::GSV: return "GSV";
        case Provider::MLY: return "MLY";
        case Provider::AMS: return "AMS";
        default: return "Other";
    }
}

inline Provider parse_provider(std::string_view s) {
    std::string u(s);
    for (auto& c : u) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (u == "GSV" || u == "GOOGLE") return Provider::GSV;
    if (u == "MLY" || u == "MAPILLARY") return Provider::MLY;
    if (u == "AMS" || u == "AMSTERDAM") return Provider::AMS;
    return Provider::Other;
}

struct PanoRecord {
    std::string id;
    Provider provider = Provider::Other;
    GeoPoint location;
    std::optional<std::string> captured_at;  // ISO-8601 date, UTC
};

struct PanoDataset {
    std::vector<PanoRecord> records;
    std::string city;
    Provider provider = Provider::Other;
    std::string road_class_context;
    std::size_t dropped_outside = 0;
    std::size_t duplicates = 0;
    std::size_t malformed = 0;

    std::size_t size() const noexcept { return records.size(); }
};

namespace detail {

inline bool looks_like_iso_date(const std::string& s) {
    if (s.size() < 10) return false;
    for (int i : {0, 1, 2, 3, 5, 6, 8, 9})
        if (!std::isdigit(static_cast<unsigned char>(s[static_cast<std::size_t>(i)]))) return false;
    return s[4] == '-' && s[7] == '-';
}

inline PanoRecord parse_pano_line(std::string_view line, Provider fallback) {
    json j;
    try {
        j = json::parse(line.begin(), line.end());
    } catch (const json::parse_error& e) {
        throw ParseError(e.what(), e.byte);
    }
    if (!j.is_object()) throw ParseError("line is not a JSON object");
    if (!j.contains("id") || !j["id"].is_string() || j["id"].get<std::string>().empty())
        throw ParseError("missing or empty string field 'id'");
    if (!j.contains("lat") || !j["lat"].is_number() || !j.contains("lon") || !j["lon"].is_number())
        throw ParseError("missing numeric 'lat'/'lon'");
    PanoRecord r;
    r.id = j["id"].get<std::string>();
    r.location = {j["lat"].get<double>(), j["lon"].get<double>()};
    if (!is_valid(r.location)) throw ParseError("coordinates out of range");
    r.provider = fallback;
    if (j.contains("provider") && j["provider"].is_string()) r.provider = parse_provider(j["provider"].get<std::string>());
    if (j.contains("captured_at") && !j["captured_at"].is_null()) {
        if (!j["captured_at"].is_string() || !looks_like_iso_date(j["captured_at"].get<std::string>()))
            throw ParseError("'captured_at' is not an ISO-8601 date");
        r.captured_at = j["captured_at"].get<std::string>();
    }
    return r;
}

} // namespace detail

inline constexpr double kMaxMalformedFraction = 0.01;

/// Collapses duplicate ids to their first occurrence. Returns the number removed.
inline std::size_t dedup_by_id(std::vector<PanoRecord>& records) {
    std::unordered_set<std::string> seen;
    seen.reserve(records.size());
    std::vector<PanoRecord> kept;
    kept.reserve(records.size());
    for (auto& r : records)
        if (seen.insert(r.id).second) kept.push_back(std::move(r));
    const std::size_t removed = records.size() - kept.size();
    records = std::move(kept);
    return removed;
}

/// Keeps records inside the boundary (boundary counts as inside). Returns the number dropped.
inline std::size_t clip_to_boundary(std::vector<PanoRecord>& records, const Boundary& boundary) {
    const IndexedPolygon index(boundary.polygon);
    std::size_t dropped = 0;
    std::erase_if(records, [&](const PanoRecord& r) {
        bool inside = false;
        try {
            inside = index.contains(boundary.projection.project(r.location));
        } catch (const ValidationError&) {
        }
        if (!inside) ++dropped;
        return !inside;
    });
    return dropped;
}

/// Parses panorama JSON-lines. Malformed lines are skipped unless they exceed 1 %
/// of non-blank lines, in which case the whole load fails.
inline PanoDataset load_panos(std::string_view jsonl, const Boundary& boundary, Provider provider) {
    PanoDataset ds;
    ds.provider = provider;
    std::size_t lines = 0, line_no = 0;
    std::string first_error;
    std::size_t pos = 0;
    while (pos <= jsonl.size()) {
        const auto nl = jsonl.find('\n', pos);
        std::string_view line = jsonl.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? jsonl.size() + 1 : nl + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
        ++lines;
        try {
            ds.records.push_back(detail::parse_pano_line(line, provider));
        } catch (const ParseError& e) {
            ++ds.malformed;
            if (first_error.empty()) first_error = "line " + std::to_string(line_no) + ": " + e.what();
        }
    }
    if (ds.malformed > 0 &&
        static_cast<double>(ds.malformed) > kMaxMalformedFraction * static_cast<double>(lines))
        throw ParseError(std::to_string(ds.malformed) + " of " + std::to_string(lines) +
                         " panorama lines malformed; first: " + first_error);
    ds.dropped_outside = clip_to_boundary(ds.records, boundary);
    ds.duplicates = dedup_by_id(ds.records);
    return ds;
}

inline std::string serialize_panos(const PanoDataset& ds) {
    std::string out;
    for (const auto& r : ds.records) {
        ordered_json j;
        j["id"] = r.id;
        j["lat"] = r.location.lat;
        j["lon"] = r.location.lon;
        if (r.captured_at) j["captured_at"] = *r.captured_at;
        j["provider"] = std::string(to_string(r.provider));
        out += j.dump();
        out += '\n';
    }
    return out;
}

inline std::vector<ProjPoint> project_records(const PanoDataset& ds, const Projection& proj) {
    std::vector<ProjPoint> out;
    out.reserve(ds.records.size());
    for (const auto& r : ds.records) out.push_back(proj.project(r.location));
    return out;
}

} // namespace svbias
