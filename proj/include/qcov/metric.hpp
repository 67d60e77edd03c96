#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "qcov/atlas.hpp"
#include "qcov/geometry.hpp"
#include "qcov/mesh.hpp"

namespace qcov {

// Symmetric 2x2 metric tensor in annulus coordinates (theta, phi).
Mat2 torus_metric(double phi, double R, double r);

struct AnnulusCoords {
    double theta = 0.0;  // polar angle in [0, 2 pi)
    double phi = 0.0;    // tube angle in [0, pi]: 0 on the outer circle, pi on the inner one
};
AnnulusCoords annulus_coords(const Vec2& p, double R, double r);

// Floor on |sin phi| used wherever the tube metric would degenerate.
constexpr double kSinFloor = 1e-6;

// The annulus metric transported to Cartesian coordinates of the annulus plane.
Mat2 chart_metric(const Vec2& p, double R, double r);
// Metric pulled back to the original region: J^T G(tau(q)) J.
Mat2 pullback_metric(const MappingAtlas& atlas, const Vec2& q);

using MetricFn = std::function<Mat2(const Vec2&)>;

enum class GeodesicMode {
    mesh_edges,     // Dijkstra over mesh edges with triangle unfolding updates
    line_of_sight,  // exact shortest paths in a flat polygonal domain
};
const char* to_string(GeodesicMode m);
GeodesicMode geodesic_mode_from_string(const std::string& s);

// Query point with the per-point data every source needs.
struct TargetPoint {
    Vec2 pos;
    int face = -1;
    std::array<double, 3> bary{};
    std::vector<int> taut;  // reflex corners usable as the last bend (line_of_sight)
};

struct PathSample {
    double distance = 0.0;
    Vec2 first_dir;      // unit (in the metric) direction leaving the source
    Vec2 last_dir;       // unit (in the metric) direction arriving at the target
    bool bends = false;  // path wraps around a boundary corner
};

class GeodesicGraph;

// Single-source shortest-path state; cheap to query for many targets.
class SourceField {
public:
    PathSample to(const TargetPoint& q) const;
    const Vec2& source() const { return p_; }

private:
    friend class GeodesicGraph;
    const GeodesicGraph* g_ = nullptr;
    Vec2 p_;
    int face_ = -1;
    std::vector<double> dist_;  // per graph node
    std::vector<int> first_;    // first node after the source on the best path, -1 if unreached
    std::vector<int> pred_;     // predecessor node, -1 for nodes seeded from the source
};

class GeodesicGraph {
public:
    GeodesicGraph(std::shared_ptr<const TriMesh> mesh, MetricFn metric, GeodesicMode mode);

    GeodesicMode mode() const { return mode_; }
    const TriMesh& mesh() const { return *mesh_; }
    Mat2 metric(const Vec2& q) const { return metric_(q); }
    double metric_length(const Vec2& a, const Vec2& b) const;
    bool contains(const Vec2& q) const { return locator_->locate(q).has_value(); }

    TargetPoint target(const Vec2& q, int hint = -1) const;
    SourceField source(const Vec2& p) const;
    double distance(const Vec2& p, const Vec2& q) const;
    // Unit direction at q of the shortest path arriving from p.
    Vec2 tangent(const Vec2& p, const Vec2& q) const;

    // Straight segment stays inside the domain.
    bool visible(const Vec2& a, const Vec2& b) const;
    size_t num_nodes() const;
    size_t num_edges() const;
    const std::vector<int>& reflex_vertices() const { return reflex_; }

private:
    friend class SourceField;
    struct Loop {
        std::vector<int> ids;
        bool convex = false;
        bool hole = false;
        Vec2 center;
        double outer_radius = 0.0;
        double inner_radius = 0.0;
    };
    struct Arc {
        int to;
        double w;
    };

    // Upper Cholesky factor of the metric on one face; ok is false when the metric is degenerate there.
    struct FaceFrame {
        double m11 = 0.0, m12 = 0.0, m22 = 0.0;
        bool ok = false;
        Vec2 to_flat(const Vec2& p) const { return {m11 * p.x + m12 * p.y, m22 * p.y}; }
        Vec2 from_flat(const Vec2& v) const { return {(v.x - m12 * v.y / m22) / m11, v.y / m22}; }
    };

    // Distance at pos through edge (a, b) of face f from the virtual source consistent with ta and tb.
    // Returns false when that source does not see pos across the edge.
    bool unfold(int f, int a, int b, double ta, double tb, const Vec2& pos, double& d, Vec2* dir) const;
    bool taut_at(int loop_vertex, const Vec2& from) const;
    bool wedge_ok(int vertex, const Vec2& dir) const;
    void build_mesh_graph();
    void build_reflex_graph();

    std::shared_ptr<const TriMesh> mesh_;
    MetricFn metric_;
    GeodesicMode mode_;
    std::shared_ptr<const PointLocator> locator_;
    double eps_w_ = 0.0;
    std::vector<std::vector<Arc>> adj_;  // mesh_edges: over vertices; line_of_sight: over reflex_ indices
    std::vector<FaceFrame> frames_;                // mesh_edges only
    std::vector<std::vector<int>> vertex_faces_;   // mesh_edges only
    std::vector<Loop> loops_;
    std::vector<int> reflex_;            // vertex ids of reflex boundary corners
    std::vector<int> reflex_index_;      // vertex id -> index in reflex_, -1 otherwise
    std::vector<std::array<int, 2>> loop_nbr_;  // vertex id -> (prev, next) along its boundary loop
};

GeodesicGraph annulus_graph(const MappingAtlas& atlas, GeodesicMode mode);
GeodesicGraph original_graph(const MappingAtlas& atlas);
GeodesicGraph flat_graph(const TriMesh& mesh, GeodesicMode mode);

double geodesic_distance(const GeodesicGraph& g, const Vec2& p, const Vec2& q);
Vec2 distance_tangent(const GeodesicGraph& g, const Vec2& p, const Vec2& q);

}  // namespace qcov
