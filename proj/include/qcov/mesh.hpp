#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qcov/geometry.hpp"
#include "qcov/kernels.hpp"

namespace qcov {

enum class VertexTag : std::uint8_t { interior, outer_boundary, inner_boundary, cut };

const char* to_string(VertexTag t);
VertexTag vertex_tag_from_string(const std::string& s);

using Face = std::array<int, 3>;

struct TriMesh {
    std::vector<Vec2> vertices;
    std::vector<Face> faces;
    // Outer loop first. Loops run with the mesh interior on their left.
    std::vector<std::vector<int>> boundary_loops;
    std::vector<VertexTag> vertex_tags;

    size_t num_vertices() const { return vertices.size(); }
    size_t num_faces() const { return faces.size(); }
    double face_area(int f) const;
    Vec2 face_centroid(int f) const;
    double total_area() const;
    double mean_face_area() const;
    double mean_edge_length() const;
    // Same connectivity and metadata, new positions.
    TriMesh with_vertices(std::vector<Vec2> positions) const;
};

struct CutPath {
    std::vector<int> vertex_ids;
};

// Result of cutting an annulus open along a path.
struct SlicedMesh {
    TriMesh mesh;
    std::vector<int> provenance;  // sliced vertex id -> source vertex id
    // (lower copy, upper copy) per path vertex, ordered from inner to outer boundary.
    // The lower copy borders faces on the left of the path direction.
    std::vector<std::pair<int, int>> seam_pairs;
    int v1 = -1;   // lower copy of the inner endpoint
    int v2 = -1;   // lower copy of the outer endpoint
    int v1p = -1;  // upper copy of the inner endpoint
    int v2p = -1;  // upper copy of the outer endpoint
};

struct Location {
    int face = -1;
    std::array<double, 3> bary{};
};

struct MeshCheck {
    bool edge_manifold = true;
    bool oriented = true;
    bool nondegenerate = true;
    int worst_face = -1;
    double min_area_ratio = 0.0;
};

TriMesh build_delaunay(const std::vector<Vec2>& points, const std::vector<int>& outer_loop,
                       const std::vector<int>& inner_loop);

std::vector<std::vector<int>> extract_boundary_loops(const std::vector<Face>& faces,
                                                     const std::vector<Vec2>& vertices);
MeshCheck check_mesh(const TriMesh& mesh);
void validate_mesh(const TriMesh& mesh);
size_t count_edges(const TriMesh& mesh);
long euler_characteristic(const TriMesh& mesh);
std::vector<std::vector<int>> vertex_neighbors(const TriMesh& mesh);
// adj[f][k]: face across the edge opposite corner k, or -1 on the boundary.
std::vector<std::array<int, 3>> face_adjacency(const TriMesh& mesh);
// Tags derived from boundary loops when a mesh carries none.
std::vector<VertexTag> effective_tags(const TriMesh& mesh);

// Removes faces with two edges on one boundary loop (their three corners would share a boundary
// coordinate in the rectangle chart) by flipping or splitting the remaining edge.
TriMesh remove_boundary_ears(const TriMesh& mesh);

CutPath shortest_edge_path(const TriMesh& mesh, int start, int goal);
SlicedMesh slice_along_path(const TriMesh& mesh, const CutPath& path);

kernels::TriSoA gather_faces(const TriMesh& mesh, const std::vector<Vec2>& positions);
std::vector<double> face_signed_areas(const TriMesh& mesh, const std::vector<Vec2>& positions);
int count_flipped_faces(const TriMesh& mesh, const std::vector<Vec2>& images);

class PointLocator {
public:
    explicit PointLocator(const TriMesh& mesh);
    std::optional<Location> locate(const Vec2& q, int hint = -1) const;
    const TriMesh& mesh() const { return *mesh_; }

private:
    bool try_face(int f, const Vec2& q, Location& out) const;
    std::optional<Location> brute_force(const Vec2& q) const;

    const TriMesh* mesh_;
    std::vector<std::array<int, 3>> adj_;  // neighbour across edge opposite vertex k
    Vec2 lo_, hi_;
    int gx_ = 1, gy_ = 1;
    std::vector<std::vector<int>> cells_;
};

std::optional<Location> locate_point(const TriMesh& mesh, const Vec2& q);
Vec2 barycentric_reconstruct(const TriMesh& mesh, const std::vector<Vec2>& positions, const Location& loc);

// Mesh exchange: OFF-style text plus a sidecar JSON with boundary loops and tags.
std::string sidecar_path(const std::string& off_path);
void write_mesh(const TriMesh& mesh, const std::string& off_path);
TriMesh read_mesh(const std::string& off_path);

}  // namespace qcov
