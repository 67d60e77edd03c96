#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qcov/coverage.hpp"
#include "qcov/metric.hpp"
#include "qcov/regions.hpp"

namespace qcov {

struct RegionConfig {
    std::string generator = "serpentine";  // ignored when mesh_file is set
    ParamMap params;                       // merged over the generator defaults
    std::string mesh_file;                 // OFF file with a .loops.json sidecar
    int target_vertices = 2400;
    int cut_start = 0;
};

struct DensityConfig {
    DensitySpec spec;
    std::string samples_file;  // JSON array with one value per mesh vertex; overrides spec
};

struct AgentsConfig {
    int n = 0;
    std::vector<double> psi_init;  // empty: evenly spaced from psi_offset
    double psi_offset = 0.0;
};

struct RunConfig {
    double duration = 16.0;
    int n_bins = 256;
    GeodesicMode geodesic_mode = GeodesicMode::line_of_sight;
};

struct SearchConfig {
    bool enabled = true;
    int K_star = 30;       // used when eps_p is not given
    double eps_p = 0.0;    // > 0 selects K_star as the smallest count with 2 pi / K <= eps_p
    double T_eps = 10.0;
};

struct BaselineConfig {
    int iterations = 60;
    double tol = 1e-6;  // stop once no generator moves farther than this
};

struct OutputConfig {
    std::string dir = "out";
    std::vector<double> snapshot_times;  // empty: 0, T/3, 2T/3, T
};

struct Scenario {
    int schema_version = 1;
    RegionConfig region;
    DensityConfig density;
    AgentsConfig agents;
    Gains gains;
    RunConfig run;
    SearchConfig search;
    BaselineConfig baseline;
    std::uint64_t seed = 1;
    OutputConfig output;

    std::vector<double> initial_psi() const;
    std::vector<double> snapshot_times() const;
};

// Schema violations raise a config error naming the offending field path.
Scenario parse_scenario(const std::string& json_text);
Scenario load_scenario(const std::string& path);
// Canonical JSON echo with every default filled in.
std::string scenario_json(const Scenario& s);

}  // namespace qcov
