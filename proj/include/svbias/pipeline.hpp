#pragma once

// Per-city pipeline: ingest, prior, KDE fields, divergences, coverage, MANOVA, exports.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "svbias/density.hpp"
#include "svbias/divergence.hpp"
#include "svbias/error.hpp"
#include "svbias/ingest.hpp"
#include "svbias/planner.hpp"
#include "svbias/report.hpp"
#include "svbias/stats.hpp"

namespace svbias {

namespace fs = std::filesystem;

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ValidationError("cannot open '" + p.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const fs::path& p, std::string_view text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ValidationError("cannot write '" + p.string() + "'");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw ValidationError("write failed for '" + p.string() + "'");
}

struct CityRunConfig {
    std::string city;
    Provider provider = Provider::Other;
    // Paths as written in the config (echoed) and resolved against the config directory.
    std::string boundary, roads, panos, plan, fixture;
    fs::path base_dir;
    RoadClass road_class = RoadClass::Driveable;
    double bandwidth_m = kDefaultBandwidthM;
    double cell_m = kDefaultCellM;
    double threshold_m = kDefaultCoverageThresholdM;
    double sample_interval_m = kRoadSampleIntervalM;
    KlConfig kl;
    SinkhornConfig sinkhorn;
    fs::path out_dir;

    fs::path resolve(const std::string& p) const {
        const fs::path q(p);
        return q.is_absolute() ? q : base_dir / q;
    }
    std::string label() const { return city + "_" + std::string(to_string(provider)); }
};

/// Reads one city object. Relative paths resolve against `base_dir`.
inline CityRunConfig parse_city_config(const json& j, const fs::path& base_dir) {
    try {
        CityRunConfig c;
        c.base_dir = base_dir;
        c.city = j.at("city").get<std::string>();
        if (c.city.empty()) throw ValidationError("city name is empty");
        c.provider = parse_provider(j.value("provider", std::string("other")));
        c.boundary = j.at("boundary").get<std::string>();
        c.roads = j.at("roads").get<std::string>();
        c.panos = j.value("panos", std::string());
        c.plan = j.value("plan", std::string());
        c.fixture = j.value("fixture", std::string());
        if (c.panos.empty() && (c.plan.empty() || c.fixture.empty()))
            throw ValidationError("config needs 'panos' or both 'plan' and 'fixture'");
        c.road_class = parse_road_class(j.value("road_class", std::string("driveable")));
        c.bandwidth_m = j.value("bandwidth_m", c.bandwidth_m);
        c.cell_m = j.value("cell_m", c.cell_m);
        c.threshold_m = j.value("threshold_m", c.threshold_m);
        c.sample_interval_m = j.value("sample_interval_m", c.sample_interval_m);
        if (j.contains("kl")) {
            const auto& k = j["kl"];
            c.kl.k = k.value("k", c.kl.k);
            c.kl.min_distance = k.value("min_distance", c.kl.min_distance);
        }
        if (j.contains("sinkhorn")) {
            const auto& s = j["sinkhorn"];
            c.sinkhorn.blur = s.value("blur", c.sinkhorn.blur);
            c.sinkhorn.p = s.value("p", c.sinkhorn.p);
            c.sinkhorn.max_iters = s.value("max_iters", c.sinkhorn.max_iters);
            c.sinkhorn.tol = s.value("tol", c.sinkhorn.tol);
            c.sinkhorn.max_points = s.value("max_points", c.sinkhorn.max_points);
            c.sinkhorn.seed = s.value("seed", c.sinkhorn.seed);
        }
        if (j.contains("out")) c.out_dir = c.resolve(j["out"].get<std::string>());
        return c;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("bad city config: ") + e.what());
    }
}

/// A config file holds one city object or {"cities": [...], "out": dir}.
inline std::vector<CityRunConfig> load_config(const fs::path& path) {
    const std::string text = read_file(path);
    const json j = detail::parse_json_text(text);
    const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
    std::vector<CityRunConfig> out;
    if (j.contains("cities")) {
        if (!j["cities"].is_array() || j["cities"].empty()) throw ValidationError("'cities' must be a non-empty array");
        for (const auto& c : j["cities"]) out.push_back(parse_city_config(c, base));
        if (j.contains("out"))
            for (auto& c : out)
                if (c.out_dir.empty()) c.out_dir = base / j["out"].get<std::string>() / c.label();
    } else {
        out.push_back(parse_city_config(j, base));
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace detail {

template <typename F>
auto run_stage(const std::string& stage, const std::string& path, F&& body) {
    try {
        return body();
    } catch (const StageError&) {
        throw;
    } catch (const ValidationError& e) {
        throw StageError(stage, path, e.what(), true);
    } catch (const ParseError& e) {
        throw StageError(stage, path, e.what(), true);
    } catch (const TypeError& e) {
        throw StageError(stage, path, e.what(), true);
    } catch (const fs::filesystem_error& e) {
        throw StageError(stage, path, e.what(), true);
    } catch (const std::exception& e) {
        throw StageError(stage, path, e.what(), false);
    }
}

} // namespace detail

struct CityInputs {
    Boundary boundary;
    RoadNetwork net;
    PanoDataset panos;
};

inline CityInputs load_city_inputs(const CityRunConfig& cfg, unsigned jobs = 1) {
    for (const auto* p : {&cfg.boundary, &cfg.roads, &cfg.panos, &cfg.plan, &cfg.fixture})
        if (!p->empty() && !fs::exists(cfg.resolve(*p)))
            throw StageError("config", cfg.resolve(*p).string(), "file not found", true);
    CityInputs in;
    const auto bpath = cfg.resolve(cfg.boundary).string();
    in.boundary = detail::run_stage("ingest.boundary", bpath, [&] { return parse_boundary(read_file(bpath)); });
    const auto rpath = cfg.resolve(cfg.roads).string();
    in.net = detail::run_stage("ingest.roads", rpath, [&] {
        auto net = parse_roads(read_file(rpath), in.boundary, cfg.road_class);
        if (net.empty()) throw ValidationError("no roads of class " + std::string(to_string(cfg.road_class)));
        return net;
    });
    if (!cfg.panos.empty()) {
        const auto ppath = cfg.resolve(cfg.panos).string();
        in.panos = detail::run_stage("ingest.panos", ppath,
                                     [&] { return load_panos(read_file(ppath), in.boundary, cfg.provider); });
    } else {
        const auto fpath = cfg.resolve(cfg.fixture).string();
        const auto plpath = cfg.resolve(cfg.plan).string();
        const auto fixture = detail::run_stage("fetch.fixture", fpath, [&] {
            return load_panos(read_file(fpath), in.boundary, cfg.provider).records;
        });
        in.panos = detail::run_stage("fetch.plan", plpath, [&] {
            RequestPlan plan;
            plan.provider = cfg.provider;
            plan.queries = parse_plan(read_file(plpath));
            ExecuteOptions opts;
            opts.jobs = jobs;
            return execute_plan(plan, FixtureAdapter(fixture), in.boundary, opts);
        });
    }
    in.panos.city = cfg.city;
    in.panos.provider = cfg.provider;
    in.panos.road_class_context = std::string(to_string(cfg.road_class));
    return in;
}

struct CityRunResult {
    CityScore score;
    DistanceResult distance;
    CoverageResult coverage;
    ManovaResult manova;
    DensityField uniform, real, delta;
    std::string result_json;
};

/// Runs every stage for one city and writes its artifacts to cfg.out_dir.
inline CityRunResult run_city(const CityRunConfig& cfg, unsigned jobs = 1) {
    CityInputs in = load_city_inputs(cfg, jobs);
    CityRunResult r;
    const auto rpath = cfg.resolve(cfg.roads).string();
    const auto ppath = cfg.resolve(cfg.panos.empty() ? cfg.fixture : cfg.panos).string();

    SamplePoints prior = detail::run_stage("prior", rpath, [&] { return uniform_road_samples(in.net, cfg.sample_interval_m); });
    SamplePoints obs = detail::run_stage("prior", ppath, [&] {
        SamplePoints s;
        s.source = SampleSource::Panoramas;
        s.points = project_records(in.panos, in.boundary.projection);
        if (s.points.empty()) throw ValidationError("no panoramas inside the boundary");
        return s;
    });

    detail::run_stage("density", ppath, [&] {
        const GridSpec grid = grid_for(in.boundary.polygon.bbox(), cfg.cell_m, kGridPadBandwidths * cfg.bandwidth_m);
        r.uniform = kde_field(prior, cfg.bandwidth_m, grid);
        r.real = kde_field(obs, cfg.bandwidth_m, grid);
        r.delta = delta_field(r.real, r.uniform);
        return 0;
    });
    r.distance = detail::run_stage("divergence", ppath, [&] { return compare_samples(obs, prior, cfg.kl, cfg.sinkhorn); });
    r.coverage = detail::run_stage("coverage", ppath,
                                   [&] { return coverage_percent(prior.points, obs.points, cfg.threshold_m); });
    r.manova = detail::run_stage("manova", ppath,
                                 [&] { return manova_two_group(obs, prior, {"panoramas", "road prior"}); });
    r.score = {cfg.city, std::string(to_string(cfg.provider)), r.distance.emd, r.distance.kl};

    ordered_json j;
    j["city"] = cfg.city;
    j["provider"] = std::string(to_string(cfg.provider));
    j["road_class"] = std::string(to_string(cfg.road_class));
    ordered_json inputs;
    inputs["boundary"] = cfg.boundary;
    inputs["roads"] = cfg.roads;
    if (!cfg.panos.empty()) inputs["panos"] = cfg.panos;
    if (!cfg.plan.empty()) inputs["plan"] = cfg.plan;
    if (!cfg.fixture.empty()) inputs["fixture"] = cfg.fixture;
    j["inputs"] = inputs;
    j["config"] = {{"bandwidth_m", cfg.bandwidth_m},
                   {"cell_m", cfg.cell_m},
                   {"threshold_m", cfg.threshold_m},
                   {"sample_interval_m", cfg.sample_interval_m}};
    j["counts"] = {{"roads", in.net.roads.size()},
                   {"road_length_m", in.net.total_length()},
                   {"road_samples", prior.size()},
                   {"panos", in.panos.size()},
                   {"panos_dropped_outside", in.panos.dropped_outside},
                   {"panos_duplicates", in.panos.duplicates},
                   {"panos_malformed", in.panos.malformed}};
    j["divergence"] = to_json(r.distance);
    j["coverage"] = {{"threshold_m", r.coverage.threshold},
                     {"n_road_points", r.coverage.n_road_points},
                     {"n_covered", r.coverage.n_covered},
                     {"covered_fraction", r.coverage.covered_fraction}};
    auto ftest = [](const FTest& t) { return ordered_json{{"f", t.f}, {"df1", t.df1}, {"df2", t.df2}, {"p_value", t.p_value}}; };
    j["manova"] = {{"coordinates", "projected_xy"},
                   {"weighted", false},
                   {"groups", {"panoramas", "road prior"}},
                   {"n1", r.manova.n1},
                   {"n2", r.manova.n2},
                   {"wilks_lambda", r.manova.wilks_lambda},
                   {"pillai_trace", r.manova.pillai_trace},
                   {"hotelling_lawley", r.manova.hotelling_lawley},
                   {"roys_root", r.manova.roys_root},
                   {"wilks_test", ftest(r.manova.wilks_test)},
                   {"pillai_test", ftest(r.manova.pillai_test)},
                   {"hotelling_test", ftest(r.manova.hotelling_test)},
                   {"roy_test", ftest(r.manova.roy_test)}};
    ordered_json grid = field_to_json(r.delta, in.boundary.projection);
    grid.erase("values");
    double dmin = 0, dmax = 0;
    for (double v : r.delta.values) {
        dmin = std::min(dmin, v);
        dmax = std::max(dmax, v);
    }
    grid["c_delta_min"] = dmin;
    grid["c_delta_max"] = dmax;
    j["grid"] = grid;
    r.result_json = j.dump(2) + "\n";

    if (!cfg.out_dir.empty()) {
        detail::run_stage("export", cfg.out_dir.string(), [&] {
            const auto mask = cell_mask(r.delta.grid, in.boundary.polygon);
            write_file(cfg.out_dir / "result.json", r.result_json);
            write_file(cfg.out_dir / "c_delta.geojson", export_delta_geojson(r.delta, in.boundary.projection, mask));
            write_file(cfg.out_dir / "c_delta.svg", export_svg_choropleth(r.delta));
            write_file(cfg.out_dir / "manova.csv", manova_csv_header() + manova_csv_row(cfg.city, r.score.provider, r.manova));
            write_file(cfg.out_dir / "coverage.csv",
                       coverage_csv_header() + coverage_csv_row(cfg.city, r.score.provider, r.coverage));
            return 0;
        });
    }
    return r;
}

struct ReportResult {
    std::vector<CityRunResult> cities;  // config order
    RankingTable ranking;
};

/// Runs cities in up to `jobs` parallel slots, then writes ranking.csv and the
/// combined manova.csv / coverage.csv to `out_dir` (if non-empty).
inline ReportResult run_report(const std::vector<CityRunConfig>& cfgs, unsigned jobs, const fs::path& out_dir) {
    if (cfgs.empty()) throw ValidationError("no cities to report");
    jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(cfgs.size())));
    std::vector<std::optional<CityRunResult>> results(cfgs.size());
    std::vector<std::exception_ptr> errors(cfgs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < cfgs.size();) {
            try {
                results[i] = run_city(cfgs[i], 1);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        for (unsigned w = 1; w < jobs; ++w) pool.emplace_back(worker);
        worker();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    ReportResult rep;
    std::vector<CityScore> scores;
    std::string manova = manova_csv_header(), coverage = coverage_csv_header();
    for (auto& r : results) {
        scores.push_back(r->score);
        manova += manova_csv_row(r->score.city, r->score.provider, r->manova);
        coverage += coverage_csv_row(r->score.city, r->score.provider, r->coverage);
        rep.cities.push_back(std::move(*r));
    }
    rep.ranking = rank_cities(scores);
    if (!out_dir.empty()) {
        detail::run_stage("export", out_dir.string(), [&] {
            write_file(out_dir / "ranking.csv", ranking_csv(rep.ranking));
            write_file(out_dir / "manova.csv", manova);
            write_file(out_dir / "coverage.csv", coverage);
            return 0;
        });
    }
    return rep;
}

} // namespace svbias
