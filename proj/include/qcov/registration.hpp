#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "qcov/conformal.hpp"
#include "qcov/geometry.hpp"
#include "qcov/mesh.hpp"

namespace qcov {

struct RigidTransform {
    double angle = 0.0;  // radians, counter-clockwise
    Vec2 translation;

    Vec2 apply(const Vec2& p) const;
    RigidTransform inverse() const;
    // (this * other)(p) = this(other(p))
    RigidTransform compose(const RigidTransform& other) const;
};

// One agent's share of the distributed mapping step.
struct AgentMapRecord {
    int agent_id = 1;               // 1..N, ring order
    std::vector<Vec2> sub_cloud;    // points in the agent's own frame
    std::vector<VertexTag> tags;    // per point, when known
    std::vector<int> source_ids;    // per point, vertex id in the full mesh when known
    double local_length = 0.0;      // rectangle length of the agent's patch
    double local_mu_norm = 0.0;     // distortion at that length
    // Patch mesh over sub_cloud and its unit-square chart; empty for bare point clouds.
    std::shared_ptr<const TriMesh> patch;
    std::vector<Vec2> unit_images;
};

struct RingMessage {
    int sweep = 0;
    int from = 0;
    int to = 0;
    double mu = 0.0;
    double length = 0.0;
    int origin = 0;  // agent whose value is carried
};

struct ConsensusResult {
    double L_star = 0.0;
    int agent = 0;  // winning agent id
    int sweeps = 0;
    std::vector<RingMessage> trace;
};

// Neighbour exchange around the ring until no agent changes its belief; (mu, id) compared lexicographically.
ConsensusResult ring_consensus_length(const std::vector<AgentMapRecord>& records);
std::string trace_jsonl(const std::vector<RingMessage>& trace);

// Static 2-D k-d tree for nearest-neighbour queries.
class KdTree {
public:
    explicit KdTree(std::vector<Vec2> points);
    // Index of the nearest point; ties go to the smaller index.
    int nearest(const Vec2& q, double* d2 = nullptr) const;
    const std::vector<Vec2>& points() const { return pts_; }

private:
    struct Node {
        int point;
        int left = -1, right = -1;
        int axis = 0;
    };
    int build(std::vector<int>& idx, int lo, int hi, int depth);
    void search(int node, const Vec2& q, int& best, double& best_d2) const;

    std::vector<Vec2> pts_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

struct IcpOptions {
    int max_iters = 100;
    double tol = 1e-12;  // stop when the RMS improves by less than this
    double max_pair_dist = std::numeric_limits<double>::infinity();  // correspondences farther apart are ignored
    bool align_centroids = true;  // start from the centroid offset instead of the identity
    bool mutual = false;          // keep only pairs that are each other's nearest neighbour
    RigidTransform initial;       // starting guess when centroids are not aligned
};

struct IcpResult {
    RigidTransform transform;  // maps source onto target
    double rms = 0.0;
    std::vector<double> rms_history;
    int iterations = 0;
};

// Closed-form least-squares rigid motion taking a[i] to b[i].
RigidTransform fit_rigid(const std::vector<Vec2>& a, const std::vector<Vec2>& b);
IcpResult icp_register(const std::vector<Vec2>& source, const std::vector<Vec2>& target, const IcpOptions& opt = {});

struct MergeResult {
    std::vector<Vec2> points;
    std::vector<VertexTag> tags;
    std::vector<RigidTransform> transforms;  // per record, in input order: record frame -> merged frame
    double merge_eps = 0.0;
    int duplicates = 0;
};

// Rescale each rectangle chart to the common length, pull the chart back to the agent's frame,
// align clouds in ring order and coalesce duplicates.
MergeResult merge_global_cloud(const std::vector<AgentMapRecord>& records, double L_star);

double hausdorff_distance(const std::vector<Vec2>& a, const std::vector<Vec2>& b);

// Splits an annulus mesh into N overlapping strips (one per inner-boundary arc), maps each to its
// rectangle and expresses it in a randomly perturbed frame (agent 1 keeps the global frame).
std::vector<AgentMapRecord> prepare_agent_records(const TriMesh& mesh, int n_agents, std::uint64_t seed);

}  // namespace qcov
