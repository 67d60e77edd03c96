#pragma once

#include <vector>

#include "qcov/atlas.hpp"
#include "qcov/metric.hpp"
#include "qcov/regions.hpp"

namespace qcov {

// Workload per unit area, sampled at mesh vertices (shared by the original region and its annulus image).
struct DensityField {
    std::vector<double> samples;
    double at(const TriMesh& mesh, int face, const std::array<double, 3>& bary) const;
};

DensityField sample_density(const MappingAtlas& atlas, const DensitySpec& spec);

// Binned angular workload over [0, 2 pi).
struct WorkloadProfile {
    std::vector<double> bins;
    double total = 0.0;
    std::vector<int> empty_bins;

    int n_bins() const { return static_cast<int>(bins.size()); }
    double width() const { return kTwoPi / bins.size(); }
    // Mass in [0, theta], theta in [0, 2 pi].
    double cumulative(double theta) const;

private:
    friend WorkloadProfile angular_workload_profile(const TriMesh&, const DensityField&, int, const TriMesh*);
    std::vector<double> prefix_;
};

// Triangles are binned by the angle of their annulus-image centroid; area_mesh (same connectivity)
// supplies face areas when masses should be measured in another chart.
WorkloadProfile angular_workload_profile(const TriMesh& xi_mesh, const DensityField& density, int n_bins,
                                         const TriMesh* area_mesh = nullptr);

// Wrap-aware mass of the sector from a to b; equal angles give 0.
double sector_mass(const WorkloadProfile& profile, double a, double b);
// Masses of the sectors [psi_i, psi_{i+1}); a single agent owns the full circle.
std::vector<double> sector_masses(const WorkloadProfile& profile, const std::vector<double>& psi);
double lyapunov_value(const std::vector<double>& masses);
// Bar angle zeta with mass(psi, zeta) = target, walking counter-clockwise.
double next_equal_mass_bar(const WorkloadProfile& profile, double psi, double target);

struct Gains {
    double k_psi = 0.03;
    double k_p = 0.1;
    double dt = 0.05;
};

bool cyclically_ordered(const std::vector<double>& psi);
// One explicit Euler step of the bar dynamics; frozen bars stay put.
std::vector<double> partition_step(const std::vector<double>& psi, const WorkloadProfile& profile, const Gains& gains,
                                   const std::vector<char>& frozen = {});

struct PartitionState {
    std::vector<double> psi;
    std::vector<Vec2> agents_xi;
    std::vector<Vec2> agents_orig;
    std::vector<double> masses;
    double time = 0.0;
    std::vector<int> projections;  // consecutive boundary projections per agent
};

struct QuadPoint {
    Vec2 pos;             // annulus position
    double theta = 0.0;   // polar angle of pos
    double w = 0.0;       // density times annulus area
    double w_orig = 0.0;  // density times original-region area of the same piece
    int sector = 0;
    const TargetPoint* target = nullptr;  // owned by the model
};

struct QuadratureRule {
    std::vector<QuadPoint> pts;
    std::vector<std::vector<int>> by_sector;
};

struct AgentCost {
    double J = 0.0;
    double J_orig = 0.0;
    Vec2 grad;  // covector dJ/dp
};

struct CostTotals {
    double J = 0.0;
    double J_orig = 0.0;
    std::vector<double> per_agent;
    std::vector<double> per_agent_orig;
};

// Everything the coverage dynamics needs about one mapped region and density.
class CoverageModel {
public:
    CoverageModel(const MappingAtlas& atlas, const GeodesicGraph& graph, DensityField density, int n_bins);
    CoverageModel(const CoverageModel&) = delete;
    CoverageModel& operator=(const CoverageModel&) = delete;
    CoverageModel(CoverageModel&&) = default;

    const MappingAtlas& atlas() const { return *atlas_; }
    const GeodesicGraph& graph() const { return *graph_; }
    const DensityField& density() const { return density_; }
    const WorkloadProfile& profile() const { return profile_; }
    const WorkloadProfile& profile_orig() const { return profile_orig_; }
    double total_mass() const { return profile_.total; }

    static int sector_of(double theta, const std::vector<double>& psi);

    // Centroid rule on annulus faces, split 4-way near bars and agents.
    QuadratureRule quadrature(const std::vector<double>& psi, const std::vector<Vec2>& agents) const;
    AgentCost agent_cost(const QuadratureRule& rule, int i, const Vec2& p, bool with_gradient) const;
    CostTotals coverage_cost(const QuadratureRule& rule, const std::vector<Vec2>& agents) const;
    Vec2 cost_gradient(const QuadratureRule& rule, int i, const Vec2& p) const;
    // Annulus velocity -k_p G^{-1} dJ/dp.
    Vec2 control_input(const QuadratureRule& rule, int i, const Vec2& p, const Gains& gains) const;
    // Velocity of the same motion in the original region.
    Vec2 control_input_original(const Vec2& p, const Vec2& u) const;

    PartitionState initial_state(const std::vector<double>& psi) const;
    // Explicit Euler on agent positions; agents with moving[i] == 0 stay.
    void agent_step(PartitionState& state, const QuadratureRule& rule, const Gains& gains,
                    const std::vector<char>& moving = {}) const;
    // Gradient descent with backtracking on one sector's cost.
    Vec2 centroid_solve(const std::vector<double>& psi, int i, double tol, int* iterations = nullptr) const;
    Vec2 sector_mean(const QuadratureRule& rule, int i) const;
    Vec2 project_inside(const Vec2& p) const;
    std::vector<double> masses(const std::vector<double>& psi) const { return sector_masses(profile_, psi); }
    std::vector<double> masses_orig(const std::vector<double>& psi) const { return sector_masses(profile_orig_, psi); }

private:
    struct Piece {
        Vec2 pos;
        double theta = 0.0;
        double w = 0.0;
        double w_orig = 0.0;
    };
    struct BoundaryEdge {
        int a, b, face;
    };

    const MappingAtlas* atlas_;
    const GeodesicGraph* graph_;
    DensityField density_;
    WorkloadProfile profile_;
    WorkloadProfile profile_orig_;
    std::vector<double> face_scale_;        // longest edge per annulus face
    std::vector<Piece> whole_;              // per face: centroid rule
    std::vector<Piece> split_;              // per face, 4 entries: midpoint subdivision
    std::vector<TargetPoint> whole_targets_;
    std::vector<TargetPoint> split_targets_;
    std::vector<BoundaryEdge> boundary_;
};

// One explicit Euler step of the coupled bar and agent dynamics from the current state.
// Bars with frozen[i] set keep their phase. Returns the costs evaluated before the step.
CostTotals advance(const CoverageModel& model, PartitionState& state, const Gains& gains,
                   const std::vector<char>& frozen = {});
// Costs and masses of a state without moving it.
CostTotals evaluate(const CoverageModel& model, const PartitionState& state);

// Bar-boundary crossing angles: deviation between the two charts and the bound implied by the local dilatation.
struct AngleCheck {
    double max_deviation = 0.0;
    double max_excess = 0.0;  // max(deviation - bound), <= 0 when the bound holds
    double sup_mu = 0.0;
};
AngleCheck bar_angle_check(const MappingAtlas& atlas, const std::vector<double>& psi);

}  // namespace qcov
