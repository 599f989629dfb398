#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "svbias/svbias.hpp"

using namespace svbias;

namespace {

struct Overrides {
    std::string config;
    unsigned jobs = 1;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> road_class;
    std::optional<double> bandwidth_m, cell_m, blur, threshold_m;
    std::optional<int> k;
    std::string out;
};

void add_common(CLI::App* cmd, Overrides& o, bool need_config) {
    auto* c = cmd->add_option("--config", o.config, "City or report config (JSON)");
    if (need_config) c->required()->check(CLI::ExistingFile);
    cmd->add_option("--jobs", o.jobs, "Worker slots")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", o.seed, "Seed for subsampling and simulation");
    cmd->add_option("--road-class", o.road_class, "driveable or public")
        ->check(CLI::IsMember({"driveable", "public"}));
    cmd->add_option("--bandwidth-m", o.bandwidth_m, "KDE bandwidth in metres")->check(CLI::PositiveNumber);
    cmd->add_option("--cell-m", o.cell_m, "Grid cell size in metres")->check(CLI::PositiveNumber);
    cmd->add_option("--blur", o.blur, "Sinkhorn blur (unit-square units)")->check(CLI::PositiveNumber);
    cmd->add_option("--k", o.k, "Neighbour order for the KL estimator")->check(CLI::PositiveNumber);
    cmd->add_option("--threshold-m", o.threshold_m, "Coverage threshold in metres")->check(CLI::PositiveNumber);
    cmd->add_option("--out", o.out, "Output path");
}

std::vector<CityRunConfig> configs(const Overrides& o) {
    auto cfgs = load_config(o.config);
    for (auto& c : cfgs) {
        if (o.seed) c.sinkhorn.seed = *o.seed;
        if (o.road_class) c.road_class = parse_road_class(*o.road_class);
        if (o.bandwidth_m) c.bandwidth_m = *o.bandwidth_m;
        if (o.cell_m) c.cell_m = *o.cell_m;
        if (o.blur) c.sinkhorn.blur = *o.blur;
        if (o.k) c.kl.k = *o.k;
        if (o.threshold_m) c.threshold_m = *o.threshold_m;
        if (!o.out.empty()) c.out_dir = cfgs.size() == 1 ? fs::path(o.out) : fs::path(o.out) / c.label();
    }
    return cfgs;
}

void emit(const std::string& out, const std::string& text) {
    if (out.empty())
        std::cout << text;
    else
        write_file(out, text);
}

Polygon centered_square(const SynthCity& city, double frac) {
    const BBox g = city.grid_box();
    const double hx = g.width() * frac / 2, hy = g.height() * frac / 2;
    return Polygon::rectangle({-hx, -hy}, {hx, hy});
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Street-view coverage bias analysis"};
    app.require_subcommand(1);
    Overrides o;

    // plan
    auto* plan = app.add_subcommand("plan", "Emit a provider request plan for a boundary");
    std::string boundary_path, provider_name = "gsv";
    std::optional<double> spacing, radius;
    plan->add_option("--boundary", boundary_path)->required()->check(CLI::ExistingFile);
    plan->add_option("--provider", provider_name)->check(CLI::IsMember({"gsv", "mly", "ams", "GSV", "MLY", "AMS"}));
    plan->add_option("--spacing-m", spacing)->check(CLI::PositiveNumber);
    plan->add_option("--radius-m", radius)->check(CLI::PositiveNumber);
    plan->add_option("--out", o.out);

    // fetch
    auto* fetch = app.add_subcommand("fetch", "Replay a plan against a local fixture");
    std::string plan_path, fixture_path;
    fetch->add_option("--plan", plan_path)->required()->check(CLI::ExistingFile);
    fetch->add_option("--fixture", fixture_path)->required()->check(CLI::ExistingFile);
    fetch->add_option("--boundary", boundary_path)->required()->check(CLI::ExistingFile);
    fetch->add_option("--provider", provider_name);
    fetch->add_option("--jobs", o.jobs)->check(CLI::PositiveNumber);
    fetch->add_option("--out", o.out);

    auto* ingest = app.add_subcommand("ingest", "Load and clean city inputs");
    add_common(ingest, o, true);
    auto* density = app.add_subcommand("density", "Write uniform, real and delta fields");
    add_common(density, o, true);
    auto* compare = app.add_subcommand("compare", "KL and EMD between panoramas and the road prior");
    add_common(compare, o, true);
    auto* coverage = app.add_subcommand("coverage", "Binary coverage percentage");
    add_common(coverage, o, true);
    auto* manova = app.add_subcommand("manova", "Two-group MANOVA of panoramas vs road prior");
    add_common(manova, o, true);
    auto* report = app.add_subcommand("report", "Full pipeline over every configured city");
    add_common(report, o, true);

    // simulate
    auto* simulate = app.add_subcommand("simulate", "Generate a synthetic city and driver output");
    std::size_t nx = 10, ny = 10;
    double block = 100.0, interval = kRoadSampleIntervalM, factor = 2.0, center_frac = 0.4, p_obstruct = 0.3;
    int passes = 1;
    std::string policy = "uniform";
    std::uint64_t sim_seed = 0;
    simulate->add_option("--nx", nx)->check(CLI::PositiveNumber);
    simulate->add_option("--ny", ny)->check(CLI::PositiveNumber);
    simulate->add_option("--block-m", block)->check(CLI::PositiveNumber);
    simulate->add_option("--interval-m", interval)->check(CLI::PositiveNumber);
    simulate->add_option("--policy", policy)->check(CLI::IsMember({"uniform", "center", "redrive", "territories"}));
    simulate->add_option("--passes", passes)->check(CLI::NonNegativeNumber);
    simulate->add_option("--factor", factor)->check(CLI::PositiveNumber);
    simulate->add_option("--center-frac", center_frac)->check(CLI::Range(0.01, 1.0));
    simulate->add_option("--p-obstruct", p_obstruct)->check(CLI::Range(0.0, 1.0));
    simulate->add_option("--seed", sim_seed);
    simulate->add_option("--out", o.out)->required();

    // rank
    auto* rank = app.add_subcommand("rank", "Rank cities from a scores CSV (city,provider,emd,kl)");
    std::string scores_path;
    rank->add_option("--scores", scores_path)->required()->check(CLI::ExistingFile);
    rank->add_option("--out", o.out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        set_thread_count(o.jobs);
        if (plan->parsed()) {
            const Boundary b = parse_boundary(read_file(boundary_path));
            const Provider p = parse_provider(provider_name);
            RequestPlan rp;
            if (p == Provider::GSV)
                rp = plan_gsv(b, spacing.value_or(kGsvSpacingM), radius.value_or(kGsvRadiusM));
            else if (p == Provider::AMS)
                rp = plan_amsterdam(b, spacing.value_or(kAmsterdamSpacingM), radius.value_or(kAmsterdamRadiusM));
            else
                rp = plan_mapillary(b, spacing.value_or(kMapillaryTileM));
            emit(o.out, serialize_plan(rp));
            std::cerr << rp.queries.size() << " queries\n";
        } else if (fetch->parsed()) {
            const Boundary b = parse_boundary(read_file(boundary_path));
            const Provider p = parse_provider(provider_name);
            RequestPlan rp;
            rp.provider = p;
            rp.queries = parse_plan(read_file(plan_path));
            const auto fixture = load_panos(read_file(fixture_path), b, p).records;
            ExecuteOptions opts;
            opts.jobs = o.jobs;
            const auto ds = execute_plan(rp, FixtureAdapter(fixture), b, opts);
            emit(o.out, serialize_panos(ds));
            std::cerr << ds.size() << " panoramas (" << ds.duplicates << " duplicates, " << ds.dropped_outside
                      << " outside)\n";
        } else if (ingest->parsed()) {
            for (const auto& c : configs(o)) {
                const auto in = load_city_inputs(c, o.jobs);
                ordered_json j;
                j["city"] = c.city;
                j["roads"] = in.net.roads.size();
                j["road_length_m"] = in.net.total_length();
                j["dangling_refs"] = in.net.dangling_refs;
                j["skipped_ways"] = in.net.skipped_ways;
                j["duplicate_ways"] = in.net.duplicate_ways;
                j["panos"] = in.panos.size();
                j["panos_dropped_outside"] = in.panos.dropped_outside;
                j["panos_duplicates"] = in.panos.duplicates;
                j["panos_malformed"] = in.panos.malformed;
                std::cout << j.dump() << "\n";
                if (!c.out_dir.empty()) {
                    write_file(c.out_dir / "roads.geojson", roads_to_geojson(in.net).dump() + "\n");
                    write_file(c.out_dir / "panos.jsonl", serialize_panos(in.panos));
                }
            }
        } else if (density->parsed()) {
            for (const auto& c : configs(o)) {
                const auto in = load_city_inputs(c, o.jobs);
                SamplePoints prior = uniform_road_samples(in.net, c.sample_interval_m);
                SamplePoints obs;
                obs.points = project_records(in.panos, in.boundary.projection);
                const GridSpec grid = grid_for(in.boundary.polygon.bbox(), c.cell_m, kGridPadBandwidths * c.bandwidth_m);
                const auto u = kde_field(prior, c.bandwidth_m, grid);
                const auto r = kde_field(obs, c.bandwidth_m, grid);
                const auto d = delta_field(r, u);
                const fs::path out = c.out_dir.empty() ? fs::path(".") : c.out_dir;
                write_file(out / "uniform.json", field_to_json(u, in.boundary.projection).dump() + "\n");
                write_file(out / "real.json", field_to_json(r, in.boundary.projection).dump() + "\n");
                write_file(out / "delta.json", field_to_json(d, in.boundary.projection).dump() + "\n");
                write_file(out / "c_delta.geojson",
                           export_delta_geojson(d, in.boundary.projection, cell_mask(grid, in.boundary.polygon)));
                write_file(out / "c_delta.svg", export_svg_choropleth(d));
            }
        } else if (compare->parsed()) {
            for (const auto& c : configs(o)) {
                const auto in = load_city_inputs(c, o.jobs);
                SamplePoints prior = uniform_road_samples(in.net, c.sample_interval_m);
                SamplePoints obs;
                obs.points = project_records(in.panos, in.boundary.projection);
                const auto res = compare_samples(obs, prior, c.kl, c.sinkhorn);
                ordered_json j = to_json(res);
                j["city"] = c.city;
                j["provider"] = std::string(to_string(c.provider));
                if (c.out_dir.empty())
                    std::cout << j.dump(2) << "\n";
                else
                    write_file(c.out_dir / "compare.json", j.dump(2) + "\n");
            }
        } else if (coverage->parsed()) {
            std::string csv = coverage_csv_header();
            for (const auto& c : configs(o)) {
                const auto in = load_city_inputs(c, o.jobs);
                csv += coverage_csv_row(c.city, to_string(c.provider), coverage_percent(in.net, in.panos, c.threshold_m));
            }
            emit(o.out.empty() ? "" : (fs::path(o.out) / "coverage.csv").string(), csv);
        } else if (manova->parsed()) {
            std::string csv = manova_csv_header();
            for (const auto& c : configs(o)) {
                const auto in = load_city_inputs(c, o.jobs);
                const auto prior = uniform_road_samples(in.net, c.sample_interval_m);
                const auto obs = project_records(in.panos, in.boundary.projection);
                csv += manova_csv_row(c.city, to_string(c.provider),
                                      manova_two_group(obs, prior.points, {"panoramas", "road prior"}));
            }
            emit(o.out.empty() ? "" : (fs::path(o.out) / "manova.csv").string(), csv);
        } else if (simulate->parsed()) {
            const auto city = gen_city(nx, ny, block, sim_seed);
            DriverPolicy pol = UniformDrive{passes};
            if (policy == "center") pol = CenterBiased{factor, centered_square(city, center_frac)};
            if (policy == "redrive") pol = ObstructionRedrive{p_obstruct};
            if (policy == "territories") {
                const BBox g = city.grid_box();
                Territories t;
                t.regions.push_back({Polygon::rectangle(g.min, {0.0, g.max.y}), passes});
                t.regions.push_back({Polygon::rectangle({0.0, g.min.y}, g.max), passes + 1});
                pol = t;
            }
            const auto ds = simulate_drive(city, pol, interval, sim_seed);
            const fs::path out(o.out);
            write_file(out / "boundary.geojson", boundary_to_geojson(city.boundary).dump() + "\n");
            write_file(out / "roads.geojson", roads_to_geojson(city.net).dump() + "\n");
            write_file(out / "panos.jsonl", serialize_panos(ds));
            ordered_json cfg;
            cfg["city"] = "synthetic";
            cfg["provider"] = "other";
            cfg["boundary"] = "boundary.geojson";
            cfg["roads"] = "roads.geojson";
            cfg["panos"] = "panos.jsonl";
            write_file(out / "city.json", cfg.dump(2) + "\n");
            std::cerr << ds.size() << " panoramas\n";
        } else if (rank->parsed()) {
            const auto table = rank_cities(parse_scores_csv(read_file(scores_path)));
            std::cout << format_ranking(table);
            if (!o.out.empty()) write_file(o.out, ranking_csv(table));
        } else if (report->parsed()) {
            const auto cfgs = configs(o);
            fs::path out = o.out.empty() ? fs::path() : fs::path(o.out);
            if (out.empty() && cfgs.size() == 1) out = cfgs.front().out_dir;
            if (out.empty() && !cfgs.empty() && !cfgs.front().out_dir.empty()) out = cfgs.front().out_dir.parent_path();
            const auto rep = run_report(cfgs, o.jobs, out);
            std::cout << format_ranking(rep.ranking);
        }
    } catch (const StageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.bad_input() ? 2 : 1;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const TypeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
