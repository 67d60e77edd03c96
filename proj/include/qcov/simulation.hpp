#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qcov/atlas.hpp"
#include "qcov/coverage.hpp"
#include "qcov/errors.hpp"
#include "qcov/metric.hpp"
#include "qcov/scenario.hpp"
#include "qcov/search.hpp"

namespace qcov {

// Runs f and prefixes any qcov error with the stage name.
template <class F>
auto run_stage(const char* stage, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const Error& e) {
        throw Error(e.kind(), std::string(stage) + ": " + e.detail());
    }
}

// Region, atlas, metric graph, density and coverage model for one scenario. Pinned in memory
// because the model keeps references into it.
struct Pipeline {
    Pipeline() = default;
    Pipeline(const Pipeline&) = delete;
    Pipeline& operator=(const Pipeline&) = delete;

    TriMesh mesh;
    std::optional<MapResult> map;  // absent when the atlas was loaded from disk
    MappingAtlas atlas;
    DensityField density;
    std::unique_ptr<GeodesicGraph> graph;
    std::unique_ptr<CoverageModel> model;
};

TriMesh scenario_mesh(const Scenario& s);
DensityField scenario_density(const Scenario& s, const MappingAtlas& atlas);
// Builds everything from the scenario; a given atlas replaces the mapping stage.
std::unique_ptr<Pipeline> build_pipeline(const Scenario& s, const MappingAtlas* atlas = nullptr);

struct RegistrationReport {
    double L_consensus = 0.0;
    int winner = 0;
    int sweeps = 0;
    size_t messages = 0;
    size_t merged_points = 0;
    double merge_eps = 0.0;
    double hausdorff = 0.0;  // merged cloud against the mesh vertices
    std::string trace_jsonl;
};
RegistrationReport run_registration(const TriMesh& mesh, int n_agents, std::uint64_t seed);

struct TimeRow {
    double t = 0.0;
    std::vector<double> psi;
    std::vector<double> masses;
    double V = 0.0;
    double J = 0.0;
    double J_orig = 0.0;
    std::vector<Vec2> agents_xi;
    std::vector<Vec2> agents_orig;
};

struct Snapshot {
    double t = 0.0;
    PartitionState state;
    std::vector<Vec2> centroids_xi;
};

struct Trajectory {
    std::vector<TimeRow> rows;  // one per step plus the final state
    std::vector<Snapshot> snapshots;
    PartitionState final_state;
    bool V_monotone = true;
    double max_V_increase = 0.0;
};

// Integrates the coupled dynamics for lround(duration / dt) steps; snapshots land on the nearest step.
Trajectory simulate(const CoverageModel& model, const PartitionState& initial, const Gains& gains, double duration,
                    const std::vector<double>& snapshot_times = {});

// Least-squares fit of log V = log c1 - c2 t over the strictly positive samples.
struct ConvergenceFit {
    double c1 = 0.0;
    double c2 = 0.0;
    double r2 = 0.0;
    int samples = 0;
};
ConvergenceFit fit_exponential(const std::vector<double>& t, const std::vector<double>& V);

double imbalance(const std::vector<double>& masses);
double workload_variance(const std::vector<double>& masses);

struct BaselineResult {
    std::vector<Vec2> generators;  // annulus positions
    std::vector<double> masses;    // cell workloads
    std::vector<int> face_owner;
    double variance = 0.0;
    int iterations = 0;
    std::vector<double> variance_history;
};
// Lloyd iterations on geodesic Voronoi cells in the annulus chart.
BaselineResult voronoi_baseline(const CoverageModel& model, const std::vector<Vec2>& initial, int iterations,
                                double tol);

struct SearchReport {
    SweepResult sweep;
    double J_plain = 0.0;       // same horizon, no anchor
    double J_orig_plain = 0.0;
};
SearchReport run_search(const CoverageModel& model, const PartitionState& initial, const Scenario& s, int threads);

std::string timeseries_csv(const std::vector<TimeRow>& rows);
std::string sweep_csv(const SweepResult& sweep);
std::string baseline_csv(const BaselineResult& b);
std::string state_json(const PartitionState& st);
PartitionState parse_state_json(const std::string& text);

struct RunOptions {
    std::string out_dir;  // empty: scenario output.dir
    int threads = 1;
    bool write = true;
    bool with_search = true;
    bool with_baseline = true;
    bool with_registration = true;
};

struct RunSummary {
    double L_star = 0.0;
    double sup_mu_before = 0.0;
    double sup_mu_after = 0.0;
    int flipped_faces = 0;
    std::optional<RegistrationReport> registration;
    double final_V = 0.0;
    double final_J = 0.0;
    double final_J_orig = 0.0;
    double imbalance = 0.0;
    double sectorial_variance = 0.0;
    bool V_monotone = true;
    ConvergenceFit fit;
    std::optional<SearchReport> search;
    std::optional<BaselineResult> baseline;
    double wall_time = 0.0;
    std::string out_dir;
};

std::string summary_json(const RunSummary& r);
RunSummary run_scenario(const Scenario& s, const RunOptions& opt = {});

void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

}  // namespace qcov
