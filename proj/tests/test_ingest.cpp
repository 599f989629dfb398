#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "svbias/ingest.hpp"

using namespace svbias;

namespace {

std::string slurp(const std::string& name) {
    std::ifstream in(std::string(SVBIAS_TEST_DATA) + "/" + name);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string square(double lon0, double lat0, double side) {
    std::ostringstream s;
    s.precision(17);
    s << "[[[" << lon0 << "," << lat0 << "],[" << lon0 + side << "," << lat0 << "],[" << lon0 + side << ","
      << lat0 + side << "],[" << lon0 << "," << lat0 + side << "],[" << lon0 << "," << lat0 << "]]]";
    return s.str();
}

Boundary mini_boundary() { return parse_boundary(slurp("mini_boundary.geojson")); }

std::set<std::int64_t> ids(const RoadNetwork& n) {
    std::set<std::int64_t> s;
    for (const auto& r : n.roads) s.insert(r.way_id);
    return s;
}

} // namespace

TEST(Boundary, EquatorDegreeSquare) {
    const auto b = parse_boundary(R"({"type":"Polygon","coordinates":)" + square(-0.5, -0.5, 1.0) + "}");
    EXPECT_EQ(b.polygon.exterior().size(), 5u);
    const double side = 111194.9;  // metres per degree on the sphere
    EXPECT_NEAR(b.polygon.area() / (side * side), 1.0, 0.005);
    EXPECT_NEAR(b.projection.origin().lat, 0.0, 1e-9);
}

TEST(Boundary, MultiPolygonKeepsLargest) {
    const std::string text = R"({"type":"MultiPolygon","coordinates":[)" + square(10, 10, 0.01) + "," +
                             square(10.1, 10, 0.02) + "]}";
    const auto b = parse_boundary(text);
    const auto g = b.projection.origin();
    EXPECT_NEAR(g.lon, 10.11, 1e-6);
    EXPECT_NEAR(g.lat, 10.01, 1e-6);
}

TEST(Boundary, FeatureCollectionWrapper) {
    const std::string text = R"({"type":"FeatureCollection","features":[{"type":"Feature","properties":{},"geometry":{"type":"Polygon","coordinates":)" +
                             square(4.8, 52.3, 0.1) + "}}]}";
    EXPECT_GT(parse_boundary(text).polygon.area(), 0.0);
}

TEST(Boundary, Errors) {
    try {
        parse_boundary(R"({"type":"Polygon","coordinates":[[[0,0],[1,0)");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(e.offset(), ParseError::npos);
    }
    EXPECT_THROW(parse_boundary(R"({"type":"LineString","coordinates":[[0,0],[1,1]]})"), TypeError);
    EXPECT_THROW(parse_boundary(R"({"type":"Polygon","coordinates":"x"})"), TypeError);
}

TEST(Roads, ClassifyHighway) {
    EXPECT_EQ(classify_highway("residential"), RoadClass::Driveable);
    EXPECT_EQ(classify_highway("motorway_link"), RoadClass::Driveable);
    EXPECT_EQ(classify_highway("footway"), RoadClass::PublicOnly);
    EXPECT_EQ(classify_highway("steps"), RoadClass::PublicOnly);
    EXPECT_FALSE(classify_highway("proposed").has_value());
    EXPECT_FALSE(classify_highway("footway_link").has_value());
}

TEST(Roads, OsmFixtureDriveable) {
    const auto b = mini_boundary();
    const auto net = parse_osm_roads(slurp("mini.osm"), b, RoadClass::Driveable);
    EXPECT_EQ(ids(net), (std::set<std::int64_t>{10, 12}));
    EXPECT_EQ(net.dangling_refs, 1u);
    for (const auto& r : net.roads) EXPECT_EQ(r.road_class, RoadClass::Driveable);

    // Way 12 runs east from lon 4.905 past the boundary at lon 4.910.
    const auto& link = net.roads[1];
    ASSERT_EQ(link.parts.size(), 1u);
    const auto end = link.parts[0].points().back();
    const auto edge = b.projection.project({52.365, 4.910});
    EXPECT_NEAR(end.x, edge.x, 1.0);
    EXPECT_NEAR(end.y, edge.y, 1.0);
    const auto start = b.projection.project({52.365, 4.905});
    EXPECT_NEAR(link.length(), edge.x - start.x, 1.0);
}

TEST(Roads, OsmFixturePublic) {
    const auto b = mini_boundary();
    const auto pub = parse_osm_roads(slurp("mini.osm"), b, RoadClass::PublicOnly);
    EXPECT_EQ(ids(pub), (std::set<std::int64_t>{10, 11, 12, 14}));
    const auto drv = parse_osm_roads(slurp("mini.osm"), b, RoadClass::Driveable);
    for (auto id : ids(drv)) EXPECT_TRUE(ids(pub).count(id));
}

TEST(Roads, SingleResidentialWay) {
    const auto b = mini_boundary();
    const std::string xml = R"(<osm><node id="1" lat="52.365" lon="4.895"/><node id="2" lat="52.366" lon="4.895"/>
        <node id="3" lat="52.366" lon="4.896"/><way id="7"><nd ref="1"/><nd ref="2"/><nd ref="3"/>
        <tag k="highway" v="residential"/></way></osm>)";
    const auto net = parse_osm_roads(xml, b, RoadClass::Driveable);
    ASSERT_EQ(net.roads.size(), 1u);
    EXPECT_EQ(net.roads[0].parts.size(), 1u);
    EXPECT_EQ(net.roads[0].parts[0].points().size(), 3u);

    const std::string foot = R"(<osm><node id="1" lat="52.365" lon="4.895"/><node id="2" lat="52.366" lon="4.895"/>
        <way id="8"><nd ref="1"/><nd ref="2"/><tag k="highway" v="footway"/></way></osm>)";
    EXPECT_TRUE(parse_osm_roads(foot, b, RoadClass::Driveable).empty());
    EXPECT_EQ(parse_osm_roads(foot, b, RoadClass::PublicOnly).roads.size(), 1u);
}

TEST(Roads, UnresolvableWaySkipped) {
    const auto b = mini_boundary();
    const std::string xml = R"(<osm><way id="9"><nd ref="41"/><nd ref="42"/><tag k="highway" v="primary"/></way></osm>)";
    const auto net = parse_osm_roads(xml, b, RoadClass::Driveable);
    EXPECT_TRUE(net.empty());
    EXPECT_EQ(net.skipped_ways, 1u);
    EXPECT_EQ(net.dangling_refs, 2u);
}

TEST(Roads, MalformedXml) {
    const auto b = mini_boundary();
    EXPECT_THROW(parse_osm_roads("<osm><node id=\"1\"", b, RoadClass::Driveable), ParseError);
    EXPECT_THROW(parse_osm_roads("<notosm/>", b, RoadClass::Driveable), ParseError);
}

TEST(Roads, NodeOrderInvariance) {
    const auto b = mini_boundary();
    const std::string text = slurp("mini.osm");
    // Move every node element to the end of the file.
    std::istringstream in(text);
    std::string line, nodes, rest;
    while (std::getline(in, line)) {
        if (line.find("<node") != std::string::npos) nodes += line + "\n";
        else if (line.find("</osm>") == std::string::npos) rest += line + "\n";
    }
    const std::string moved = rest + nodes + "</osm>\n";
    const auto a = parse_osm_roads(text, b, RoadClass::PublicOnly);
    const auto c = parse_osm_roads(moved, b, RoadClass::PublicOnly);
    EXPECT_EQ(a.total_length(), c.total_length());
    EXPECT_EQ(ids(a), ids(c));
}

TEST(Roads, GeoJsonRoundTrip) {
    const auto b = mini_boundary();
    const auto net = parse_osm_roads(slurp("mini.osm"), b, RoadClass::PublicOnly);
    const auto back = parse_roads(roads_to_geojson(net).dump(), b, RoadClass::PublicOnly);
    EXPECT_EQ(ids(back), ids(net));
    EXPECT_NEAR(back.total_length(), net.total_length(), 1e-6);
}

TEST(Panos, DedupKeepsFirst) {
    const auto b = mini_boundary();
    const std::string text = R"({"id":"a","lat":52.37,"lon":4.90}
{"id":"a","lat":52.371,"lon":4.90}
{"id":"b","lat":52.372,"lon":4.90})";
    const auto ds = load_panos(text, b, Provider::GSV);
    ASSERT_EQ(ds.size(), 2u);
    EXPECT_EQ(ds.records[0].id, "a");
    EXPECT_DOUBLE_EQ(ds.records[0].location.lat, 52.37);
    EXPECT_EQ(ds.records[1].id, "b");
    EXPECT_EQ(ds.duplicates, 1u);
}

TEST(Panos, OutsideDropped) {
    const auto b = mini_boundary();
    const auto ds = load_panos("{\"id\":\"in\",\"lat\":52.37,\"lon\":4.9}\n{\"id\":\"out\",\"lat\":52.5,\"lon\":4.9}\n",
                               b, Provider::MLY);
    ASSERT_EQ(ds.size(), 1u);
    EXPECT_EQ(ds.dropped_outside, 1u);
    EXPECT_EQ(ds.records[0].provider, Provider::MLY);
}

TEST(Panos, EmptyFile) {
    const auto ds = load_panos("", mini_boundary(), Provider::GSV);
    EXPECT_EQ(ds.size(), 0u);
    EXPECT_EQ(load_panos("\n  \n", mini_boundary(), Provider::GSV).size(), 0u);
}

TEST(Panos, MalformedThreshold) {
    const auto b = mini_boundary();
    std::string good;
    for (int i = 0; i < 200; ++i) good += "{\"id\":\"p" + std::to_string(i) + "\",\"lat\":52.37,\"lon\":4.9}\n";
    const auto ok = load_panos(good + "{broken\n", b, Provider::GSV);
    EXPECT_EQ(ok.malformed, 1u);
    EXPECT_EQ(ok.size(), 200u);
    EXPECT_THROW(load_panos(good + "{broken\n{\"id\":\"\",\"lat\":1,\"lon\":1}\n{\"lat\":1}\n", b, Provider::GSV),
                 ParseError);
}

TEST(Panos, CapturedAtAndProvider) {
    const auto b = mini_boundary();
    const auto ds = load_panos(R"({"id":"x","lat":52.37,"lon":4.9,"captured_at":"2021-05-01","provider":"mapillary"})",
                               b, Provider::GSV);
    ASSERT_EQ(ds.size(), 1u);
    EXPECT_EQ(*ds.records[0].captured_at, "2021-05-01");
    EXPECT_EQ(ds.records[0].provider, Provider::MLY);
}

TEST(Panos, LoadIsIdempotent) {
    const auto b = mini_boundary();
    const std::string text = R"({"id":"a","lat":52.37,"lon":4.90}
{"id":"c","lat":52.39,"lon":4.90}
{"id":"a","lat":52.371,"lon":4.90}
{"id":"b","lat":52.372,"lon":4.901,"captured_at":"2020-01-02"})";
    const auto once = load_panos(text, b, Provider::GSV);
    const auto twice = load_panos(serialize_panos(once), b, Provider::GSV);
    EXPECT_EQ(serialize_panos(once), serialize_panos(twice));
    EXPECT_EQ(twice.duplicates, 0u);
    EXPECT_EQ(twice.dropped_outside, 0u);
}
