#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sys/wait.h>
#include <unistd.h>

#include "svbias/pipeline.hpp"

using namespace svbias;

namespace {

const fs::path kData = SVBIAS_TEST_DATA;

struct Run {
    int code;
    std::string output;
};

Run cli(const std::string& args) {
    const std::string cmd = std::string(SVBIAS_CLI) + " " + args + " 2>&1";
    FILE* p = popen(cmd.c_str(), "r");
    std::string out;
    std::array<char, 4096> buf;
    std::size_t n;
    while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) out.append(buf.data(), n);
    const int status = pclose(p);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("svbias_test_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// Same structure, same strings, numbers equal to a relative 1e-9.
void expect_json_close(const json& got, const json& want, const std::string& path = "") {
    if (want.is_number() && got.is_number()) {
        const double a = got.get<double>(), b = want.get<double>();
        EXPECT_NEAR(a, b, 1e-9 * std::max(1.0, std::abs(b))) << path;
        return;
    }
    ASSERT_EQ(got.type(), want.type()) << path;
    if (want.is_object()) {
        ASSERT_EQ(got.size(), want.size()) << path;
        for (auto it = want.begin(); it != want.end(); ++it) {
            ASSERT_TRUE(got.contains(it.key())) << path << "/" << it.key();
            expect_json_close(got[it.key()], it.value(), path + "/" + it.key());
        }
    } else if (want.is_array()) {
        ASSERT_EQ(got.size(), want.size()) << path;
        for (std::size_t i = 0; i < want.size(); ++i) expect_json_close(got[i], want[i], path + "/" + std::to_string(i));
    } else {
        EXPECT_EQ(got, want) << path;
    }
}

} // namespace

TEST(Config, ParsesAndResolves) {
    const auto cfgs = load_config(kData / "synth_uniform" / "city.json");
    ASSERT_EQ(cfgs.size(), 1u);
    EXPECT_EQ(cfgs[0].city, "synthetic");
    EXPECT_EQ(cfgs[0].cell_m, 100.0);
    EXPECT_EQ(cfgs[0].bandwidth_m, 50.0);
    EXPECT_TRUE(fs::exists(cfgs[0].resolve(cfgs[0].roads)));
}

TEST(Config, Errors) {
    EXPECT_THROW(parse_city_config(json{{"city", "x"}}, "."), ValidationError);
    EXPECT_THROW(parse_city_config(json{{"city", "x"}, {"boundary", "b"}, {"roads", "r"}}, "."), ValidationError);
    EXPECT_THROW(parse_city_config(json{{"city", "x"}, {"boundary", "b"}, {"roads", "r"}, {"panos", "p"}, {"road_class", "boat"}}, "."),
                 ValidationError);
    EXPECT_THROW(load_config(kData / "does_not_exist.json"), ValidationError);
}

TEST(RunCity, GoldenUniformCity) {
    auto cfg = load_config(kData / "synth_uniform" / "city.json").front();
    const auto r = run_city(cfg);
    std::ifstream in(kData / "synth_uniform" / "golden_result.json");
    expect_json_close(json::parse(r.result_json), json::parse(in));
}

TEST(RunCity, WritesArtifactsDeterministically) {
    auto cfg = load_config(kData / "synth_city" / "city.json").front();
    cfg.cell_m = 200;
    const auto a = scratch("artifacts_a"), b = scratch("artifacts_b");
    cfg.out_dir = a;
    run_city(cfg);
    cfg.out_dir = b;
    run_city(cfg);
    for (const char* name : {"result.json", "c_delta.geojson", "c_delta.svg", "manova.csv", "coverage.csv"}) {
        ASSERT_TRUE(fs::exists(a / name)) << name;
        EXPECT_EQ(read_file(a / name), read_file(b / name)) << name;
    }
    const auto j = json::parse(read_file(a / "result.json"));
    EXPECT_EQ(j["manova"]["coordinates"], "projected_xy");
    EXPECT_EQ(j["inputs"]["roads"], "roads.geojson");
    EXPECT_GT(j["divergence"]["emd"].get<double>(), 0.0);
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(RunCity, StageErrorNamesPath) {
    auto cfg = load_config(kData / "synth_uniform" / "city.json").front();
    cfg.roads = "missing_roads.geojson";
    try {
        run_city(cfg);
        FAIL();
    } catch (const StageError& e) {
        EXPECT_TRUE(e.bad_input());
        EXPECT_NE(std::string(e.what()).find("missing_roads.geojson"), std::string::npos) << e.what();
    }
}

TEST(RunCity, PlanAndFixtureInputs) {
    const auto dir = scratch("fixture");
    auto cfg = load_config(kData / "synth_uniform" / "city.json").front();
    const Boundary b = parse_boundary(read_file(cfg.resolve(cfg.boundary)));
    write_file(dir / "plan.jsonl", serialize_plan(plan_mapillary(b, 200)));
    cfg.plan = (dir / "plan.jsonl").string();
    cfg.fixture = cfg.resolve(cfg.panos).string();
    cfg.panos.clear();
    const auto via_plan = run_city(cfg);
    auto direct = load_config(kData / "synth_uniform" / "city.json").front();
    const auto r = run_city(direct);
    EXPECT_EQ(via_plan.coverage.n_covered, r.coverage.n_covered);
    EXPECT_EQ(via_plan.distance.kl, r.distance.kl);
    fs::remove_all(dir);
}

TEST(Cli, MissingRoadsExitCode2) {
    const auto dir = scratch("missing");
    json cfg = json::parse(read_file(kData / "synth_uniform" / "city.json"));
    cfg["boundary"] = (kData / "synth_uniform" / "boundary.geojson").string();
    cfg["panos"] = (kData / "synth_uniform" / "panos.jsonl").string();
    cfg["roads"] = (dir / "nope.geojson").string();
    write_file(dir / "city.json", cfg.dump());
    const auto r = cli("report --config " + (dir / "city.json").string() + " --out " + (dir / "out").string());
    EXPECT_EQ(r.code, 2) << r.output;
    EXPECT_NE(r.output.find((dir / "nope.geojson").string()), std::string::npos) << r.output;
    fs::remove_all(dir);
}

TEST(Cli, BadFlagExitCode2) {
    EXPECT_EQ(cli("report --jobs 0").code, 2);
    EXPECT_EQ(cli("frobnicate").code, 2);
}

TEST(Cli, ReportJobsByteIdentical) {
    const auto dir = scratch("jobs");
    json multi;
    multi["cities"] = json::array();
    for (const char* c : {"synth_uniform", "synth_city"}) {
        json j = json::parse(read_file(kData / c / "city.json"));
        for (const char* k : {"boundary", "roads", "panos"}) j[k] = (kData / c / j[k].get<std::string>()).string();
        j["city"] = c;
        j["cell_m"] = 200;
        multi["cities"].push_back(j);
    }
    write_file(dir / "cities.json", multi.dump(2));
    for (const char* jobs : {"1", "3"}) {
        const auto r = cli("report --config " + (dir / "cities.json").string() + " --jobs " + jobs + " --out " +
                           (dir / (std::string("out") + jobs)).string());
        ASSERT_EQ(r.code, 0) << r.output;
    }
    std::size_t n = 0;
    for (const auto& e : fs::recursive_directory_iterator(dir / "out1")) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), dir / "out1");
        EXPECT_EQ(read_file(e.path()), read_file(dir / "out3" / rel)) << rel;
        ++n;
    }
    EXPECT_GE(n, 3u + 2 * 5);
    fs::remove_all(dir);
}

TEST(Cli, SimulatePlanRank) {
    const auto dir = scratch("verbs");
    auto r = cli("simulate --nx 2 --ny 2 --policy redrive --p-obstruct 0.5 --seed 3 --out " + (dir / "sim").string());
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_TRUE(fs::exists(dir / "sim" / "panos.jsonl"));
    r = cli("plan --boundary " + (dir / "sim" / "boundary.geojson").string() + " --provider mly --out " +
            (dir / "plan.jsonl").string());
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_FALSE(parse_plan(read_file(dir / "plan.jsonl")).empty());
    r = cli("fetch --plan " + (dir / "plan.jsonl").string() + " --fixture " + (dir / "sim" / "panos.jsonl").string() +
            " --boundary " + (dir / "sim" / "boundary.geojson").string() + " --out " + (dir / "fetched.jsonl").string());
    ASSERT_EQ(r.code, 0) << r.output;
    r = cli("rank --scores " + (kData / "table_driveable.csv").string());
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_NE(r.output.find("Kiev"), std::string::npos);
    fs::remove_all(dir);
}
