#pragma once

#include <vector>

#include "qcov/coverage.hpp"

namespace qcov {

struct AnchorPlan {
    double eps_p = 0.0;
    int K_star = 0;
    std::vector<double> anchors;  // anchors[k] = 2 pi k / K_star
};

// Smallest K with 2 pi / K <= eps_p.
AnchorPlan make_anchor_plan(double eps_p);
AnchorPlan anchor_plan_from_count(int K_star);

// Agents (0-based) whose bar is circularly closest to the anchor; ties within 1e-12 are all returned.
std::vector<int> closest_agent(const std::vector<double>& psi, double anchor);

struct AgentRecord {
    double psi = 0.0;
    Vec2 p_xi;
    Vec2 p_orig;
    double J = 0.0;       // own sector cost in the annulus
    double J_orig = 0.0;  // own sector cost in the original region
};

struct EpisodeRecord {
    int k = 0;  // 0-based anchor index
    double anchor = 0.0;
    int frozen = -1;  // agent whose bar stays at the anchor
    std::vector<AgentRecord> agents;
    double J = 0.0;
    double J_orig = 0.0;
    double V_final = 0.0;
    PartitionState final_state;
};

// Bar frozen at the anchor for the nearest agent; everyone else runs the full dynamics for T_eps seconds.
EpisodeRecord run_anchor_episode(const CoverageModel& model, int k, double anchor, const PartitionState& initial,
                                 double T_eps, const Gains& gains);

struct CostEntry {
    int agent = 0;
    int anchor = 0;
    double J = 0.0;
    double J_orig = 0.0;
};

struct RingUnion {
    std::vector<std::vector<CostEntry>> held;  // per agent, sorted by (agent, anchor)
    std::vector<double> J;                     // per agent total over its held set
    std::vector<double> J_orig;
    int rounds = 0;  // ring rounds that changed at least one set
};

// Each agent starts with its own entries and repeatedly merges its predecessor's set until nothing changes.
RingUnion ring_union_costs(const std::vector<std::vector<CostEntry>>& own);

struct SweepResult {
    AnchorPlan plan;
    std::vector<EpisodeRecord> records;  // index = anchor
    int k_star = -1;
};

// argmin of J' over the records; ties go to the smaller anchor index.
int select_best(const std::vector<EpisodeRecord>& records, int K_star);

// Episodes share the initial state and run on up to `threads` workers; the outcome does not depend on the count.
SweepResult run_sweep(const CoverageModel& model, const PartitionState& initial, const AnchorPlan& plan, double T_eps,
                      const Gains& gains, int threads = 1);

}  // namespace qcov
