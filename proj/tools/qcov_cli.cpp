// Command-line front end: map, run, sweep, baseline, render.
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qcov/errors.hpp"
#include "qcov/scenario.hpp"
#include "qcov/simulation.hpp"
#include "qcov/svg.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kRunError = 3;

struct Flags {
    std::string config;
    std::string out;
    std::string atlas;
    std::string state;
    std::string snapshot_times;
    std::uint64_t seed = 0;
    int threads = 1;
};

std::vector<double> parse_times(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            size_t used = 0;
            const double t = std::stod(item, &used);
            if (used != item.size() || !(t >= 0.0)) throw std::invalid_argument(item);
            out.push_back(t);
        } catch (const std::exception&) {
            qcov::fail(qcov::ErrorKind::config, "--snapshot-times entry '" + item + "' is not a non-negative number");
        }
    }
    return out;
}

qcov::Scenario scenario_from(const Flags& f, bool seed_given) {
    if (f.config.empty()) qcov::fail(qcov::ErrorKind::config, "--config is required");
    qcov::Scenario s = qcov::load_scenario(f.config);
    if (seed_given) s.seed = f.seed;
    if (!f.out.empty()) s.output.dir = f.out;
    if (!f.snapshot_times.empty()) {
        s.output.snapshot_times = parse_times(f.snapshot_times);
        for (double t : s.output.snapshot_times)
            if (t > s.run.duration)
                qcov::fail(qcov::ErrorKind::config, "--snapshot-times entries must not exceed run.duration");
    }
    if (f.threads < 1) qcov::fail(qcov::ErrorKind::config, "--threads must be at least 1");
    return s;
}

std::string out_path(const std::string& dir, const std::string& name) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) qcov::fail(qcov::ErrorKind::io, "cannot create output directory " + dir + ": " + ec.message());
    return (std::filesystem::path(dir) / name).string();
}

int cmd_map(const qcov::Scenario& s) {
    const qcov::TriMesh mesh = qcov::run_stage("region", [&] { return qcov::scenario_mesh(s); });
    qcov::MapOptions mo;
    mo.cut_start = s.region.cut_start;
    const qcov::MapResult m = qcov::run_stage("mapping", [&] { return qcov::map_region(mesh, mo); });
    qcov::write_atlas(m.atlas, out_path(s.output.dir, "atlas.json"));
    qcov::write_mesh(mesh, out_path(s.output.dir, "mesh.off"));
    nlohmann::ordered_json j;
    j["vertices"] = mesh.num_vertices();
    j["faces"] = mesh.num_faces();
    j["L_star"] = m.atlas.L_star;
    j["sup_mu_before"] = m.correction.sup_before;
    j["sup_mu_after"] = m.correction.sup_after;
    j["flipped_faces"] = qcov::count_flipped_faces(*m.atlas.source, m.atlas.vertex_images());
    j["boundary_radial_deviation"] = qcov::boundary_radial_deviation(m.atlas);
    const std::string text = j.dump(2) + "\n";
    qcov::write_text(out_path(s.output.dir, "map_summary.json"), text);
    std::fputs(text.c_str(), stdout);
    return kOk;
}

int cmd_run(const qcov::Scenario& s, int threads) {
    qcov::RunOptions opt;
    opt.out_dir = s.output.dir;
    opt.threads = threads;
    const qcov::RunSummary r = qcov::run_scenario(s, opt);
    std::fputs(qcov::summary_json(r).c_str(), stdout);
    return kOk;
}

std::unique_ptr<qcov::Pipeline> pipeline_for(const qcov::Scenario& s, const std::string& atlas_path) {
    if (atlas_path.empty()) return qcov::build_pipeline(s);
    const qcov::MappingAtlas atlas = qcov::run_stage("atlas", [&] { return qcov::read_atlas(atlas_path); });
    return qcov::build_pipeline(s, &atlas);
}

int cmd_sweep(const qcov::Scenario& s, const std::string& atlas_path, int threads) {
    const auto pipe = pipeline_for(s, atlas_path);
    const qcov::PartitionState init =
        qcov::run_stage("coverage", [&] { return pipe->model->initial_state(s.initial_psi()); });
    const qcov::SearchReport r = qcov::run_stage("search", [&] { return qcov::run_search(*pipe->model, init, s, threads); });
    qcov::write_text(out_path(s.output.dir, "sweep.csv"), qcov::sweep_csv(r.sweep));
    const auto& best = r.sweep.records[r.sweep.k_star];
    nlohmann::ordered_json j;
    j["K_star"] = r.sweep.plan.K_star;
    j["k_star"] = r.sweep.k_star;
    j["anchor"] = best.anchor;
    j["J"] = best.J;
    j["J_orig"] = best.J_orig;
    j["J_plain"] = r.J_plain;
    j["J_orig_plain"] = r.J_orig_plain;
    const std::string text = j.dump(2) + "\n";
    qcov::write_text(out_path(s.output.dir, "sweep_summary.json"), text);
    qcov::write_text(out_path(s.output.dir, "best_state.json"), qcov::state_json(best.final_state));
    std::fputs(text.c_str(), stdout);
    return kOk;
}

int cmd_baseline(const qcov::Scenario& s, const std::string& atlas_path) {
    const auto pipe = pipeline_for(s, atlas_path);
    const qcov::PartitionState init =
        qcov::run_stage("coverage", [&] { return pipe->model->initial_state(s.initial_psi()); });
    const qcov::BaselineResult b = qcov::run_stage("baseline", [&] {
        return qcov::voronoi_baseline(*pipe->model, init.agents_xi, s.baseline.iterations, s.baseline.tol);
    });
    qcov::write_text(out_path(s.output.dir, "baseline.csv"), qcov::baseline_csv(b));
    nlohmann::ordered_json j;
    j["iterations"] = b.iterations;
    j["variance"] = b.variance;
    j["masses"] = b.masses;
    nlohmann::ordered_json gens = nlohmann::ordered_json::array();
    for (const auto& p : b.generators) gens.push_back({p.x, p.y});
    j["generators_xi"] = gens;
    const std::string text = j.dump(2) + "\n";
    qcov::write_text(out_path(s.output.dir, "baseline_summary.json"), text);
    std::fputs(text.c_str(), stdout);
    return kOk;
}

int cmd_render(const Flags& f, bool seed_given) {
    if (f.atlas.empty()) qcov::fail(qcov::ErrorKind::config, "render needs --atlas");
    if (f.state.empty()) qcov::fail(qcov::ErrorKind::config, "render needs --state");
    const qcov::MappingAtlas atlas = qcov::run_stage("atlas", [&] { return qcov::read_atlas(f.atlas); });
    qcov::PartitionState st = qcov::parse_state_json(qcov::read_text(f.state));
    qcov::SnapshotView view;
    view.psi = st.psi;
    view.time = st.time;
    if (!f.config.empty()) {
        const qcov::Scenario s = scenario_from(f, seed_given);
        view.density = qcov::run_stage("density", [&] { return qcov::scenario_density(s, atlas).samples; });
    }
    const std::string dir = f.out.empty() ? "." : f.out;
    view.agents = st.agents_xi;
    qcov::emit_svg(atlas, view, qcov::Space::annulus, out_path(dir, "render_annulus.svg"));
    if (st.agents_orig.size() != st.agents_xi.size()) {
        st.agents_orig.clear();
        for (const auto& p : st.agents_xi) st.agents_orig.push_back(qcov::tau_inverse(atlas, p));
    }
    view.agents = st.agents_orig;
    qcov::emit_svg(atlas, view, qcov::Space::original, out_path(dir, "render_original.svg"));
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sectorial coverage on multiply connected regions via annulus mapping"};
    app.require_subcommand(1);
    Flags f;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", f.config, "Scenario JSON file");
        sub->add_option("--out", f.out, "Output directory (overrides output.dir)");
        sub->add_option("--seed", f.seed, "Seed for mesh jitter and agent frames (overrides seed)");
        sub->add_option("--threads", f.threads, "Worker threads for the anchor sweep");
        sub->add_option("--snapshot-times", f.snapshot_times, "Comma-separated snapshot times in seconds");
    };
    CLI::App* map = app.add_subcommand("map", "Mesh the region and write its annulus atlas");
    CLI::App* run = app.add_subcommand("run", "Full pipeline: mapping, registration, coverage, search, baseline");
    CLI::App* sweep = app.add_subcommand("sweep", "Anchor sweep only");
    CLI::App* base = app.add_subcommand("baseline", "Geodesic Voronoi / Lloyd baseline");
    CLI::App* render = app.add_subcommand("render", "Draw a saved state as SVG");
    for (CLI::App* sub : {map, run, sweep, base, render}) add_common(sub);
    for (CLI::App* sub : {sweep, base, render}) sub->add_option("--atlas", f.atlas, "Atlas JSON written by map or run");
    render->add_option("--state", f.state, "State JSON written by run or sweep");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    const bool seed_given = [&] {
        for (CLI::App* sub : {map, run, sweep, base, render})
            if (sub->parsed() && sub->count("--seed")) return true;
        return false;
    }();
    try {
        if (render->parsed()) return cmd_render(f, seed_given);
        const qcov::Scenario s = scenario_from(f, seed_given);
        if (map->parsed()) return cmd_map(s);
        if (run->parsed()) return cmd_run(s, f.threads);
        if (sweep->parsed()) return cmd_sweep(s, f.atlas, f.threads);
        if (base->parsed()) return cmd_baseline(s, f.atlas);
    } catch (const qcov::Error& e) {
        std::fprintf(stderr, "qcov: %s\n", e.what());
        return e.kind() == qcov::ErrorKind::config ? kConfigError : kRunError;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "qcov: unexpected failure: %s\n", e.what());
        return kRunError;
    }
    return kOk;
}
