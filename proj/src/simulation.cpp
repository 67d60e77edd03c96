#include "qcov/simulation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "qcov/errors.hpp"
#include "qcov/registration.hpp"
#include "qcov/svg.hpp"

namespace qcov {

using nlohmann::json;
using nlohmann::ordered_json;

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io, "cannot write " + path);
    out << text;
    if (!out) fail(ErrorKind::io, "failed writing " + path);
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

TriMesh scenario_mesh(const Scenario& s) {
    if (!s.region.mesh_file.empty()) {
        TriMesh m = read_mesh(s.region.mesh_file);
        validate_mesh(m);
        return m;
    }
    return generate_region(s.region.generator, s.region.params, s.region.target_vertices, s.seed);
}

DensityField scenario_density(const Scenario& s, const MappingAtlas& atlas) {
    if (s.density.samples_file.empty()) return sample_density(atlas, s.density.spec);
    json j;
    try {
        j = json::parse(read_text(s.density.samples_file));
    } catch (const json::exception& e) {
        fail(ErrorKind::config, "density.file: " + std::string(e.what()));
    }
    if (!j.is_array() || j.size() != atlas.source->num_vertices())
        fail(ErrorKind::config, "density.file must hold one number per mesh vertex (" +
                                    std::to_string(atlas.source->num_vertices()) + ")");
    DensityField d;
    for (size_t v = 0; v < j.size(); ++v) {
        const double rho = j[v].is_number() ? j[v].get<double>() : -1.0;
        if (!(rho > 0.0) || !std::isfinite(rho))
            fail(ErrorKind::config, "density.file entry " + std::to_string(v) + " is not strictly positive");
        d.samples.push_back(rho);
    }
    return d;
}

std::unique_ptr<Pipeline> build_pipeline(const Scenario& s, const MappingAtlas* atlas) {
    auto p = std::make_unique<Pipeline>();
    if (atlas) {
        p->atlas = *atlas;
        p->mesh = *atlas->source;
    } else {
        p->mesh = run_stage("region", [&] { return scenario_mesh(s); });
        MapOptions mo;
        mo.cut_start = s.region.cut_start;
        p->map = run_stage("mapping", [&] { return map_region(p->mesh, mo); });
        p->atlas = p->map->atlas;
    }
    p->density = run_stage("density", [&] { return scenario_density(s, p->atlas); });
    p->graph = run_stage("geodesics", [&] {
        return std::make_unique<GeodesicGraph>(annulus_graph(p->atlas, s.run.geodesic_mode));
    });
    p->model = run_stage("coverage", [&] {
        return std::make_unique<CoverageModel>(p->atlas, *p->graph, p->density, s.run.n_bins);
    });
    return p;
}

RegistrationReport run_registration(const TriMesh& mesh, int n_agents, std::uint64_t seed) {
    RegistrationReport r;
    const auto records = prepare_agent_records(mesh, n_agents, seed);
    const ConsensusResult c = ring_consensus_length(records);
    r.L_consensus = c.L_star;
    r.winner = c.agent;
    r.sweeps = c.sweeps;
    r.messages = c.trace.size();
    r.trace_jsonl = trace_jsonl(c.trace);
    const MergeResult m = merge_global_cloud(records, c.L_star);
    r.merged_points = m.points.size();
    r.merge_eps = m.merge_eps;
    r.hausdorff = hausdorff_distance(m.points, mesh.vertices);
    return r;
}

namespace {

TimeRow make_row(const PartitionState& st, const CostTotals& c) {
    TimeRow row;
    row.t = st.time;
    row.psi = st.psi;
    row.masses = st.masses;
    row.V = lyapunov_value(st.masses);
    row.J = c.J;
    row.J_orig = c.J_orig;
    row.agents_xi = st.agents_xi;
    row.agents_orig = st.agents_orig;
    return row;
}

Snapshot make_snapshot(const CoverageModel& model, const PartitionState& st) {
    Snapshot s;
    s.t = st.time;
    s.state = st;
    const QuadratureRule rule = model.quadrature(st.psi, st.agents_xi);
    for (size_t i = 0; i < st.psi.size(); ++i)
        s.centroids_xi.push_back(model.project_inside(model.sector_mean(rule, static_cast<int>(i))));
    return s;
}

}  // namespace

Trajectory simulate(const CoverageModel& model, const PartitionState& initial, const Gains& gains, double duration,
                    const std::vector<double>& snapshot_times) {
    if (!(gains.dt > 0.0)) fail(ErrorKind::argument, "time step must be positive");
    const long steps = std::lround(duration / gains.dt);
    std::vector<long> snap_steps;
    for (double t : snapshot_times) snap_steps.push_back(std::clamp(std::lround(t / gains.dt), 0L, steps));
    Trajectory tr;
    PartitionState st = initial;
    auto maybe_snapshot = [&](long k) {
        for (long s : snap_steps)
            if (s == k) {
                tr.snapshots.push_back(make_snapshot(model, st));
                break;
            }
    };
    double V_prev = lyapunov_value(st.masses);
    for (long k = 0; k < steps; ++k) {
        maybe_snapshot(k);
        PartitionState before = st;
        const CostTotals c = advance(model, st, gains);
        tr.rows.push_back(make_row(before, c));
        const double V = lyapunov_value(st.masses);
        // Relative slack for rounding in the mass lookup.
        const double rise = V - V_prev;
        if (rise > 1e-12 * std::max(1.0, V_prev)) {
            tr.V_monotone = false;
            tr.max_V_increase = std::max(tr.max_V_increase, rise);
        }
        V_prev = V;
    }
    maybe_snapshot(steps);
    tr.rows.push_back(make_row(st, evaluate(model, st)));
    tr.final_state = std::move(st);
    return tr;
}

ConvergenceFit fit_exponential(const std::vector<double>& t, const std::vector<double>& V) {
    ConvergenceFit f;
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (size_t i = 0; i < std::min(t.size(), V.size()); ++i) {
        if (!(V[i] > 0.0) || !std::isfinite(V[i])) continue;
        const double y = std::log(V[i]);
        sx += t[i];
        sy += y;
        sxx += t[i] * t[i];
        sxy += t[i] * y;
        syy += y * y;
        ++f.samples;
    }
    if (f.samples < 2) return f;
    const double n = f.samples;
    const double vx = sxx - sx * sx / n, vy = syy - sy * sy / n, cxy = sxy - sx * sy / n;
    if (!(vx > 0.0)) return f;
    const double slope = cxy / vx;
    const double icpt = (sy - slope * sx) / n;
    f.c1 = std::exp(icpt);
    f.c2 = -slope;
    f.r2 = vy > 0.0 ? cxy * cxy / (vx * vy) : 1.0;
    return f;
}

double imbalance(const std::vector<double>& masses) {
    if (masses.empty()) return 0.0;
    double mean = 0.0;
    for (double m : masses) mean += m;
    mean /= masses.size();
    double worst = 0.0;
    for (double m : masses) worst = std::max(worst, std::abs(m - mean));
    return mean > 0.0 ? worst / mean : 0.0;
}

double workload_variance(const std::vector<double>& masses) {
    if (masses.empty()) return 0.0;
    double mean = 0.0;
    for (double m : masses) mean += m;
    mean /= masses.size();
    double v = 0.0;
    for (double m : masses) v += (m - mean) * (m - mean);
    return v / masses.size();
}

BaselineResult voronoi_baseline(const CoverageModel& model, const std::vector<Vec2>& initial, int iterations,
                                double tol) {
    if (initial.empty()) fail(ErrorKind::argument, "the baseline needs at least one generator");
    const TriMesh& xi = model.atlas().image.operator*();
    const GeodesicGraph& g = model.graph();
    const size_t nf = xi.num_faces();
    const std::array<double, 3> third{1.0 / 3, 1.0 / 3, 1.0 / 3};
    std::vector<TargetPoint> targets(nf);
    std::vector<Vec2> centroid(nf);
    std::vector<double> w(nf);
    for (size_t f = 0; f < nf; ++f) {
        centroid[f] = xi.face_centroid(static_cast<int>(f));
        targets[f] = g.target(centroid[f], static_cast<int>(f));
        w[f] = model.density().at(xi, static_cast<int>(f), third) * xi.face_area(static_cast<int>(f));
    }
    BaselineResult out;
    out.generators = initial;
    const size_t n = initial.size();
    auto assign = [&] {
        std::vector<double> best(nf, std::numeric_limits<double>::infinity());
        out.face_owner.assign(nf, -1);
        for (size_t i = 0; i < n; ++i) {
            const SourceField src = g.source(out.generators[i]);
            for (size_t f = 0; f < nf; ++f) {
                const double d = src.to(targets[f]).distance;
                if (d < best[f]) {
                    best[f] = d;
                    out.face_owner[f] = static_cast<int>(i);
                }
            }
        }
        out.masses.assign(n, 0.0);
        for (size_t f = 0; f < nf; ++f)
            if (out.face_owner[f] >= 0) out.masses[out.face_owner[f]] += w[f];
        out.variance = workload_variance(out.masses);
        out.variance_history.push_back(out.variance);
    };
    assign();
    for (int it = 0; it < iterations; ++it) {
        std::vector<Vec2> acc(n);
        std::vector<double> m(n, 0.0);
        for (size_t f = 0; f < nf; ++f) {
            const int o = out.face_owner[f];
            if (o < 0) continue;
            acc[o] += centroid[f] * w[f];
            m[o] += w[f];
        }
        double moved = 0.0;
        for (size_t i = 0; i < n; ++i) {
            if (!(m[i] > 0.0)) continue;
            const Vec2 next = model.project_inside(acc[i] / m[i]);
            moved = std::max(moved, dist(next, out.generators[i]));
            out.generators[i] = next;
        }
        out.iterations = it + 1;
        assign();
        if (moved <= tol) break;
    }
    return out;
}

SearchReport run_search(const CoverageModel& model, const PartitionState& initial, const Scenario& s, int threads) {
    SearchReport r;
    const AnchorPlan plan =
        s.search.eps_p > 0.0 ? make_anchor_plan(s.search.eps_p) : anchor_plan_from_count(s.search.K_star);
    r.sweep = run_sweep(model, initial, plan, s.search.T_eps, s.gains, threads);
    PartitionState st = initial;
    const long steps = std::lround(s.search.T_eps / s.gains.dt);
    for (long k = 0; k < steps; ++k) advance(model, st, s.gains);
    const CostTotals c = evaluate(model, st);
    r.J_plain = c.J;
    r.J_orig_plain = c.J_orig;
    return r;
}

namespace {

void put(std::string& s, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    s += buf;
}

}  // namespace

std::string timeseries_csv(const std::vector<TimeRow>& rows) {
    std::string s = "t,V,J,J_orig";
    const size_t n = rows.empty() ? 0 : rows.front().psi.size();
    for (size_t i = 1; i <= n; ++i) s += ",psi_" + std::to_string(i);
    for (size_t i = 1; i <= n; ++i) s += ",m_" + std::to_string(i);
    for (size_t i = 1; i <= n; ++i) s += ",xi_x_" + std::to_string(i) + ",xi_y_" + std::to_string(i);
    for (size_t i = 1; i <= n; ++i) s += ",orig_x_" + std::to_string(i) + ",orig_y_" + std::to_string(i);
    s += '\n';
    for (const TimeRow& r : rows) {
        put(s, r.t);
        for (double v : {r.V, r.J, r.J_orig}) s += ',', put(s, v);
        for (double v : r.psi) s += ',', put(s, v);
        for (double v : r.masses) s += ',', put(s, v);
        for (const Vec2& p : r.agents_xi) s += ',', put(s, p.x), s += ',', put(s, p.y);
        for (const Vec2& p : r.agents_orig) s += ',', put(s, p.x), s += ',', put(s, p.y);
        s += '\n';
    }
    return s;
}

std::string sweep_csv(const SweepResult& sweep) {
    std::string s = "k,anchor,frozen_agent,J,J_orig,V_final,best\n";
    for (const EpisodeRecord& r : sweep.records) {
        s += std::to_string(r.k) + ',';
        put(s, r.anchor);
        s += ',' + std::to_string(r.frozen + 1) + ',';
        put(s, r.J);
        s += ',';
        put(s, r.J_orig);
        s += ',';
        put(s, r.V_final);
        s += r.k == sweep.k_star ? ",1\n" : ",0\n";
    }
    return s;
}

std::string baseline_csv(const BaselineResult& b) {
    std::string s = "iteration,variance\n";
    for (size_t i = 0; i < b.variance_history.size(); ++i) {
        s += std::to_string(i) + ',';
        put(s, b.variance_history[i]);
        s += '\n';
    }
    return s;
}

std::string state_json(const PartitionState& st) {
    ordered_json j;
    j["time"] = st.time;
    j["psi"] = st.psi;
    j["masses"] = st.masses;
    ordered_json xi = ordered_json::array(), orig = ordered_json::array();
    for (const Vec2& p : st.agents_xi) xi.push_back({p.x, p.y});
    for (const Vec2& p : st.agents_orig) orig.push_back({p.x, p.y});
    j["agents_xi"] = xi;
    j["agents_orig"] = orig;
    return j.dump(1) + "\n";
}

PartitionState parse_state_json(const std::string& text) {
    PartitionState st;
    try {
        const json j = json::parse(text);
        st.time = j.value("time", 0.0);
        st.psi = j.at("psi").get<std::vector<double>>();
        if (j.contains("masses")) st.masses = j.at("masses").get<std::vector<double>>();
        for (const auto& p : j.at("agents_xi")) st.agents_xi.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
        if (j.contains("agents_orig"))
            for (const auto& p : j.at("agents_orig"))
                st.agents_orig.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    } catch (const json::exception& e) {
        fail(ErrorKind::config, std::string("malformed state file: ") + e.what());
    }
    if (st.agents_xi.size() != st.psi.size()) fail(ErrorKind::config, "state file: one agent per bar expected");
    return st;
}

std::string summary_json(const RunSummary& r) {
    ordered_json j;
    j["L_star"] = r.L_star;
    j["sup_mu_before"] = r.sup_mu_before;
    j["sup_mu_after"] = r.sup_mu_after;
    j["flipped_faces"] = r.flipped_faces;
    if (r.registration) {
        const auto& g = *r.registration;
        j["registration"] = {{"L_consensus", g.L_consensus}, {"winner", g.winner},          {"sweeps", g.sweeps},
                             {"messages", g.messages},       {"merged_points", g.merged_points},
                             {"merge_eps", g.merge_eps},     {"hausdorff", g.hausdorff}};
    }
    j["final_V"] = r.final_V;
    j["final_J"] = r.final_J;
    j["final_J_orig"] = r.final_J_orig;
    j["imbalance"] = r.imbalance;
    j["sectorial_variance"] = r.sectorial_variance;
    j["V_monotone"] = r.V_monotone;
    j["fit"] = {{"c1", r.fit.c1}, {"c2", r.fit.c2}, {"r2", r.fit.r2}};
    if (r.search) {
        const auto& s = r.search->sweep;
        const auto& best = s.records[s.k_star];
        j["search"] = {{"K_star", s.plan.K_star},     {"k_star", s.k_star},         {"anchor", best.anchor},
                       {"J", best.J},                 {"J_orig", best.J_orig},      {"J_plain", r.search->J_plain},
                       {"J_orig_plain", r.search->J_orig_plain}};
    }
    if (r.baseline) {
        const auto& b = *r.baseline;
        j["baseline"] = {{"iterations", b.iterations}, {"variance", b.variance}, {"masses", b.masses}};
        if (r.sectorial_variance > 0.0) j["baseline"]["variance_ratio"] = b.variance / r.sectorial_variance;
    }
    j["wall_time_s"] = r.wall_time;
    return j.dump(2) + "\n";
}

RunSummary run_scenario(const Scenario& s, const RunOptions& opt) {
    const auto t0 = std::chrono::steady_clock::now();
    RunSummary out;
    out.out_dir = opt.out_dir.empty() ? s.output.dir : opt.out_dir;
    namespace fs = std::filesystem;
    auto path = [&](const std::string& name) { return (fs::path(out.out_dir) / name).string(); };
    if (opt.write) {
        std::error_code ec;
        fs::create_directories(out.out_dir, ec);
        if (ec) fail(ErrorKind::io, "cannot create output directory " + out.out_dir + ": " + ec.message());
    }

    const auto pipe = build_pipeline(s);
    const MappingAtlas& atlas = pipe->atlas;
    out.L_star = atlas.L_star;
    out.sup_mu_before = pipe->map->correction.sup_before;
    out.sup_mu_after = pipe->map->correction.sup_after;
    out.flipped_faces = count_flipped_faces(*atlas.source, atlas.vertex_images());
    if (opt.write) {
        run_stage("output", [&] {
            write_atlas(atlas, path("atlas.json"));
            write_mesh(pipe->mesh, path("mesh.off"));
            write_text(path("scenario.json"), scenario_json(s) + "\n");
        });
    }

    if (opt.with_registration) {
        out.registration = run_stage("registration", [&] { return run_registration(pipe->mesh, s.agents.n, s.seed); });
        if (opt.write) write_text(path("registration_trace.jsonl"), out.registration->trace_jsonl);
    }

    const CoverageModel& model = *pipe->model;
    const PartitionState initial = run_stage("coverage", [&] { return model.initial_state(s.initial_psi()); });
    const Trajectory tr = run_stage("coverage", [&] {
        return simulate(model, initial, s.gains, s.run.duration, opt.write ? s.snapshot_times() : std::vector<double>{});
    });
    const TimeRow& last = tr.rows.back();
    out.final_V = last.V;
    out.final_J = last.J;
    out.final_J_orig = last.J_orig;
    out.imbalance = imbalance(last.masses);
    out.sectorial_variance = workload_variance(last.masses);
    out.V_monotone = tr.V_monotone;
    {
        std::vector<double> t, V;
        for (const TimeRow& r : tr.rows) t.push_back(r.t), V.push_back(r.V);
        out.fit = fit_exponential(t, V);
    }
    if (opt.write) {
        run_stage("output", [&] {
            write_text(path("timeseries.csv"), timeseries_csv(tr.rows));
            write_text(path("final_state.json"), state_json(tr.final_state));
            for (size_t k = 0; k < tr.snapshots.size(); ++k) {
                const Snapshot& snap = tr.snapshots[k];
                char name[64];
                SnapshotView v;
                v.psi = snap.state.psi;
                v.time = snap.t;
                v.density = pipe->density.samples;
                v.agents = snap.state.agents_xi;
                v.centroids = snap.centroids_xi;
                std::snprintf(name, sizeof name, "snapshot_%02zu_annulus.svg", k);
                emit_svg(atlas, v, Space::annulus, path(name));
                v.agents = snap.state.agents_orig;
                v.centroids.clear();
                for (const Vec2& c : snap.centroids_xi) v.centroids.push_back(tau_inverse(atlas, c));
                std::snprintf(name, sizeof name, "snapshot_%02zu_original.svg", k);
                emit_svg(atlas, v, Space::original, path(name));
            }
        });
    }

    if (opt.with_search && s.search.enabled) {
        out.search = run_stage("search", [&] { return run_search(model, initial, s, opt.threads); });
        if (opt.write) write_text(path("sweep.csv"), sweep_csv(out.search->sweep));
    }
    if (opt.with_baseline && s.baseline.iterations > 0) {
        out.baseline = run_stage("baseline", [&] {
            return voronoi_baseline(model, initial.agents_xi, s.baseline.iterations, s.baseline.tol);
        });
        if (opt.write) write_text(path("baseline.csv"), baseline_csv(*out.baseline));
    }
    out.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (opt.write) write_text(path("summary.json"), summary_json(out));
    return out;
}

}  // namespace qcov
