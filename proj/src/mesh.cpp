#include "qcov/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <set>
#include <unordered_map>

#include "qcov/errors.hpp"

namespace qcov {

namespace {

inline std::uint64_t half_edge_key(int a, int b) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

std::unordered_map<std::uint64_t, int> half_edge_map(const std::vector<Face>& faces) {
    std::unordered_map<std::uint64_t, int> he;
    he.reserve(faces.size() * 3);
    for (int f = 0; f < static_cast<int>(faces.size()); ++f) {
        for (int k = 0; k < 3; ++k) he[half_edge_key(faces[f][k], faces[f][(k + 1) % 3])] = f;
    }
    return he;
}

}  // namespace

const char* to_string(VertexTag t) {
    switch (t) {
        case VertexTag::interior: return "interior";
        case VertexTag::outer_boundary: return "outer_boundary";
        case VertexTag::inner_boundary: return "inner_boundary";
        case VertexTag::cut: return "cut";
    }
    return "interior";
}

VertexTag vertex_tag_from_string(const std::string& s) {
    if (s == "interior") return VertexTag::interior;
    if (s == "outer_boundary") return VertexTag::outer_boundary;
    if (s == "inner_boundary") return VertexTag::inner_boundary;
    if (s == "cut") return VertexTag::cut;
    fail(ErrorKind::io, "unknown vertex tag '" + s + "'");
}

double TriMesh::face_area(int f) const {
    const Face& t = faces[f];
    return signed_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
}

Vec2 TriMesh::face_centroid(int f) const {
    const Face& t = faces[f];
    return (vertices[t[0]] + vertices[t[1]] + vertices[t[2]]) / 3.0;
}

double TriMesh::total_area() const {
    double s = 0.0;
    for (int f = 0; f < static_cast<int>(faces.size()); ++f) s += face_area(f);
    return s;
}

double TriMesh::mean_face_area() const { return faces.empty() ? 0.0 : total_area() / faces.size(); }

double TriMesh::mean_edge_length() const {
    double s = 0.0;
    size_t n = 0;
    for (const auto& t : faces) {
        for (int k = 0; k < 3; ++k) {
            const int a = t[k], b = t[(k + 1) % 3];
            s += dist(vertices[a], vertices[b]);
            ++n;
        }
    }
    return n ? s / n : 0.0;
}

TriMesh TriMesh::with_vertices(std::vector<Vec2> positions) const {
    if (positions.size() != vertices.size()) fail(ErrorKind::argument, "position count does not match vertex count");
    TriMesh m = *this;
    m.vertices = std::move(positions);
    return m;
}

std::vector<std::vector<int>> extract_boundary_loops(const std::vector<Face>& faces,
                                                     const std::vector<Vec2>& vertices) {
    const auto he = half_edge_map(faces);
    std::map<int, int> next;  // boundary successor, ordered for determinism
    for (const auto& t : faces) {
        for (int k = 0; k < 3; ++k) {
            const int a = t[k], b = t[(k + 1) % 3];
            if (!he.count(half_edge_key(b, a))) {
                if (next.count(a)) fail(ErrorKind::topology, "vertex " + std::to_string(a) + " is a boundary pinch point");
                next[a] = b;
            }
        }
    }
    std::vector<std::vector<int>> loops;
    std::set<int> used;
    for (const auto& [start, _] : next) {
        if (used.count(start)) continue;
        std::vector<int> loop;
        int v = start;
        do {
            loop.push_back(v);
            used.insert(v);
            auto it = next.find(v);
            if (it == next.end()) fail(ErrorKind::topology, "open boundary chain");
            v = it->second;
            if (loop.size() > next.size()) fail(ErrorKind::topology, "boundary chain does not close");
        } while (v != start);
        loops.push_back(std::move(loop));
    }
    // Outer loop is the one with the largest enclosed (positive) area.
    std::stable_sort(loops.begin(), loops.end(), [&](const auto& a, const auto& b) {
        return polygon_signed_area(vertices, a) > polygon_signed_area(vertices, b);
    });
    return loops;
}

std::vector<std::array<int, 3>> face_adjacency(const TriMesh& mesh) {
    const auto he = half_edge_map(mesh.faces);
    std::vector<std::array<int, 3>> adj(mesh.faces.size(), {-1, -1, -1});
    for (int f = 0; f < static_cast<int>(mesh.faces.size()); ++f) {
        const Face& t = mesh.faces[f];
        for (int k = 0; k < 3; ++k) {
            const int a = t[(k + 1) % 3], b = t[(k + 2) % 3];
            auto it = he.find(half_edge_key(b, a));
            if (it != he.end()) adj[f][k] = it->second;
        }
    }
    return adj;
}

std::vector<VertexTag> effective_tags(const TriMesh& mesh) {
    if (mesh.vertex_tags.size() == mesh.vertices.size()) return mesh.vertex_tags;
    std::vector<VertexTag> tags(mesh.vertices.size(), VertexTag::interior);
    for (size_t l = 0; l < mesh.boundary_loops.size(); ++l) {
        for (int v : mesh.boundary_loops[l]) tags[v] = l == 0 ? VertexTag::outer_boundary : VertexTag::inner_boundary;
    }
    return tags;
}

MeshCheck check_mesh(const TriMesh& mesh) {
    MeshCheck c;
    std::unordered_map<std::uint64_t, int> count;
    for (const auto& t : mesh.faces) {
        for (int k = 0; k < 3; ++k) {
            const int a = t[k], b = t[(k + 1) % 3];
            if (++count[half_edge_key(a, b)] > 1) c.oriented = false;
        }
    }
    for (const auto& [key, n] : count) {
        const int a = static_cast<int>(key >> 32), b = static_cast<int>(key & 0xffffffffu);
        auto it = count.find(half_edge_key(b, a));
        const int total = n + (it == count.end() ? 0 : it->second);
        if (total > 2) c.edge_manifold = false;
    }
    const double mean = mesh.mean_face_area();
    double worst = std::numeric_limits<double>::infinity();
    for (int f = 0; f < static_cast<int>(mesh.faces.size()); ++f) {
        const double a = mesh.face_area(f);
        if (a < 0) c.oriented = false;
        const double ratio = mean > 0 ? a / mean : 0.0;
        if (ratio < worst) {
            worst = ratio;
            c.worst_face = f;
        }
    }
    c.min_area_ratio = mesh.faces.empty() ? 0.0 : worst;
    c.nondegenerate = c.min_area_ratio > 1e-12;
    return c;
}

void validate_mesh(const TriMesh& mesh) {
    const MeshCheck c = check_mesh(mesh);
    if (!c.edge_manifold) fail(ErrorKind::topology, "mesh is not edge-manifold");
    if (!c.oriented) fail(ErrorKind::topology, "mesh faces are not consistently counter-clockwise");
    if (!c.nondegenerate)
        fail(ErrorKind::numerical, "degenerate face " + std::to_string(c.worst_face) + " (area ratio " +
                                       std::to_string(c.min_area_ratio) + ")");
}

size_t count_edges(const TriMesh& mesh) {
    std::set<std::pair<int, int>> edges;
    for (const auto& t : mesh.faces) {
        for (int k = 0; k < 3; ++k) {
            int a = t[k], b = t[(k + 1) % 3];
            if (a > b) std::swap(a, b);
            edges.insert({a, b});
        }
    }
    return edges.size();
}

long euler_characteristic(const TriMesh& mesh) {
    std::vector<char> used(mesh.vertices.size(), 0);
    for (const auto& t : mesh.faces)
        for (int v : t) used[v] = 1;
    long nv = 0;
    for (char u : used) nv += u;
    return nv - static_cast<long>(count_edges(mesh)) + static_cast<long>(mesh.faces.size());
}

std::vector<std::vector<int>> vertex_neighbors(const TriMesh& mesh) {
    std::vector<std::vector<int>> nb(mesh.vertices.size());
    for (const auto& t : mesh.faces) {
        for (int k = 0; k < 3; ++k) {
            nb[t[k]].push_back(t[(k + 1) % 3]);
            nb[t[k]].push_back(t[(k + 2) % 3]);
        }
    }
    for (auto& v : nb) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    }
    return nb;
}

CutPath shortest_edge_path(const TriMesh& mesh, int start, int goal) {
    const int n = static_cast<int>(mesh.vertices.size());
    if (start < 0 || start >= n || goal < 0 || goal >= n) fail(ErrorKind::argument, "vertex id out of range");
    const auto tags = effective_tags(mesh);
    if (tags[start] != VertexTag::inner_boundary)
        fail(ErrorKind::precondition, "path start must lie on the inner boundary");
    if (tags[goal] != VertexTag::outer_boundary)
        fail(ErrorKind::precondition, "path goal must lie on the outer boundary");
    const auto nb = vertex_neighbors(mesh);
    std::vector<double> d(n, std::numeric_limits<double>::infinity());
    std::vector<int> pred(n, -1);
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    d[start] = 0.0;
    pq.push({0.0, start});
    while (!pq.empty()) {
        auto [du, u] = pq.top();
        pq.pop();
        if (du > d[u]) continue;
        if (u == goal) break;
        // Intermediate vertices must be interior so the cut crosses the region cleanly.
        if (u != start && tags[u] != VertexTag::interior) continue;
        for (int v : nb[u]) {
            if (v != goal && tags[v] != VertexTag::interior) continue;
            const double nd = du + dist(mesh.vertices[u], mesh.vertices[v]);
            if (nd < d[v] || (nd == d[v] && u < pred[v])) {
                const bool improved = nd < d[v];
                d[v] = nd;
                pred[v] = u;
                if (improved) pq.push({nd, v});
            }
        }
    }
    if (!std::isfinite(d[goal])) fail(ErrorKind::connectivity, "no edge path between the boundary vertices");
    CutPath p;
    for (int v = goal; v != -1; v = pred[v]) p.vertex_ids.push_back(v);
    std::reverse(p.vertex_ids.begin(), p.vertex_ids.end());
    return p;
}

SlicedMesh slice_along_path(const TriMesh& mesh, const CutPath& path) {
    const auto& P = path.vertex_ids;
    const int n = static_cast<int>(mesh.vertices.size());
    if (mesh.boundary_loops.size() != 2)
        fail(ErrorKind::topology, "slicing needs an annulus mesh with two boundary loops (found " +
                                      std::to_string(mesh.boundary_loops.size()) + ")");
    if (P.size() < 2) fail(ErrorKind::topology, "cut path needs at least one edge");
    const auto tags = effective_tags(mesh);
    std::set<int> seen;
    for (int v : P) {
        if (v < 0 || v >= n) fail(ErrorKind::argument, "cut path vertex out of range");
        if (!seen.insert(v).second) fail(ErrorKind::topology, "cut path touches itself at vertex " + std::to_string(v));
    }
    if (tags[P.front()] != VertexTag::inner_boundary) fail(ErrorKind::topology, "cut path must start on the inner loop");
    if (tags[P.back()] != VertexTag::outer_boundary) fail(ErrorKind::topology, "cut path must end on the outer loop");
    for (size_t i = 1; i + 1 < P.size(); ++i) {
        if (tags[P[i]] != VertexTag::interior)
            fail(ErrorKind::topology, "cut path touches the boundary at vertex " + std::to_string(P[i]));
    }
    const auto he = half_edge_map(mesh.faces);
    auto face_of = [&](int a, int b) {
        auto it = he.find(half_edge_key(a, b));
        return it == he.end() ? -1 : it->second;
    };
    for (size_t i = 0; i + 1 < P.size(); ++i) {
        if (face_of(P[i], P[i + 1]) < 0 && face_of(P[i + 1], P[i]) < 0)
            fail(ErrorKind::topology, "consecutive cut path vertices do not share an edge");
        if (face_of(P[i], P[i + 1]) < 0 || face_of(P[i + 1], P[i]) < 0)
            fail(ErrorKind::topology, "cut path runs along the boundary");
    }
    auto corner = [&](int f, int v) {
        for (int k = 0; k < 3; ++k)
            if (mesh.faces[f][k] == v) return k;
        return -1;
    };

    const int m = static_cast<int>(P.size());
    SlicedMesh out;
    out.mesh = mesh;
    out.mesh.vertices.resize(n + m);
    out.provenance.resize(n + m);
    for (int i = 0; i < n; ++i) out.provenance[i] = i;
    auto& T = out.mesh.vertex_tags;
    T = tags;
    T.resize(n + m);
    for (int i = 0; i < m; ++i) {
        out.mesh.vertices[n + i] = mesh.vertices[P[i]];
        out.provenance[n + i] = P[i];
        out.seam_pairs.push_back({n + i, P[i]});
        if (i > 0 && i + 1 < m) T[P[i]] = VertexTag::cut;
        T[n + i] = T[P[i]];
    }
    out.v1 = n;
    out.v2 = n + m - 1;
    out.v1p = P.front();
    out.v2p = P.back();

    // Left-side faces around each path vertex, found by rotating counter-clockwise
    // from the outgoing path edge to the incoming one.
    const size_t guard = mesh.faces.size() + 1;
    for (int i = 0; i < m; ++i) {
        const int v = P[i];
        std::vector<int> left;
        if (i + 1 < m) {
            const int stop = i > 0 ? P[i - 1] : -1;
            int f = face_of(v, P[i + 1]);
            while (f >= 0 && left.size() < guard) {
                left.push_back(f);
                const int k = corner(f, v);
                const int prev = mesh.faces[f][(k + 2) % 3];
                if (prev == stop) break;
                f = face_of(v, prev);
            }
        } else {
            // Outer endpoint: rotate clockwise from the incoming edge to the boundary.
            int f = face_of(P[i - 1], v);
            while (f >= 0 && left.size() < guard) {
                left.push_back(f);
                const int k = corner(f, v);
                const int nxt = mesh.faces[f][(k + 1) % 3];
                f = face_of(nxt, v);
            }
        }
        if (left.size() >= guard) fail(ErrorKind::topology, "could not separate faces around the cut");
        for (int f : left) out.mesh.faces[f][corner(f, v)] = n + i;
    }

    out.mesh.boundary_loops = extract_boundary_loops(out.mesh.faces, out.mesh.vertices);
    if (out.mesh.boundary_loops.size() != 1 || euler_characteristic(out.mesh) != 1)
        fail(ErrorKind::topology, "slicing did not produce a topological disk");
    return out;
}

TriMesh remove_boundary_ears(const TriMesh& input) {
    TriMesh mesh = input;
    if (mesh.vertex_tags.size() != mesh.vertices.size()) mesh.vertex_tags = effective_tags(mesh);
    for (int fixes = 0; fixes < 10000; ++fixes) {
        const auto he = half_edge_map(mesh.faces);
        auto is_boundary = [&](int a, int b) { return !he.count(half_edge_key(b, a)); };
        bool changed = false;
        for (int f = 0; f < static_cast<int>(mesh.faces.size()); ++f) {
            const Face t = mesh.faces[f];
            int k = -1;
            for (int c = 0; c < 3; ++c) {
                // Corner c is an ear tip when both of its edges are on the boundary.
                if (is_boundary(t[c], t[(c + 1) % 3]) && is_boundary(t[(c + 2) % 3], t[c])) k = c;
            }
            if (k < 0) continue;
            const int a = t[k], b = t[(k + 1) % 3], c = t[(k + 2) % 3];
            auto it = he.find(half_edge_key(c, b));
            if (it == he.end()) continue;
            const int g = it->second;
            int d = -1;
            for (int v : mesh.faces[g])
                if (v != b && v != c) d = v;
            const Vec2 &pa = mesh.vertices[a], &pb = mesh.vertices[b], &pc = mesh.vertices[c], &pd = mesh.vertices[d];
            const bool flip_ok = orient2d(pa, pb, pd) > 0 && orient2d(pa, pd, pc) > 0 && !is_boundary(b, d) &&
                                 !is_boundary(d, c) && !he.count(half_edge_key(a, d)) && !he.count(half_edge_key(d, a));
            if (flip_ok) {
                mesh.faces[f] = {a, b, d};
                mesh.faces[g] = {a, d, c};
            } else {
                const int m = static_cast<int>(mesh.vertices.size());
                mesh.vertices.push_back((pb + pc) * 0.5);
                mesh.vertex_tags.push_back(VertexTag::interior);
                mesh.faces[f] = {a, b, m};
                mesh.faces[g] = {m, b, d};
                mesh.faces.push_back({a, m, c});
                mesh.faces.push_back({m, d, c});
            }
            changed = true;
            break;
        }
        if (!changed) break;
    }
    mesh.boundary_loops = extract_boundary_loops(mesh.faces, mesh.vertices);
    validate_mesh(mesh);
    return mesh;
}

kernels::TriSoA gather_faces(const TriMesh& mesh, const std::vector<Vec2>& positions) {
    kernels::TriSoA s;
    s.resize(mesh.faces.size());
    for (size_t f = 0; f < mesh.faces.size(); ++f) {
        const Face& t = mesh.faces[f];
        s.x0[f] = positions[t[0]].x;
        s.y0[f] = positions[t[0]].y;
        s.x1[f] = positions[t[1]].x;
        s.y1[f] = positions[t[1]].y;
        s.x2[f] = positions[t[2]].x;
        s.y2[f] = positions[t[2]].y;
    }
    return s;
}

std::vector<double> face_signed_areas(const TriMesh& mesh, const std::vector<Vec2>& positions) {
    std::vector<double> a(mesh.faces.size());
    if (!a.empty()) kernels::signed_areas(gather_faces(mesh, positions), a.data());
    return a;
}

int count_flipped_faces(const TriMesh& mesh, const std::vector<Vec2>& images) {
    if (images.size() != mesh.vertices.size()) fail(ErrorKind::argument, "image count does not match vertex count");
    int n = 0;
    for (double a : face_signed_areas(mesh, images)) n += a <= 0.0;
    return n;
}

PointLocator::PointLocator(const TriMesh& mesh) : mesh_(&mesh), adj_(face_adjacency(mesh)) {
    if (mesh.vertices.empty()) return;
    lo_ = hi_ = mesh.vertices[0];
    for (const auto& p : mesh.vertices) {
        lo_ = {std::min(lo_.x, p.x), std::min(lo_.y, p.y)};
        hi_ = {std::max(hi_.x, p.x), std::max(hi_.y, p.y)};
    }
    const double w = std::max(hi_.x - lo_.x, 1e-300), h = std::max(hi_.y - lo_.y, 1e-300);
    const double cells = std::max<double>(1.0, mesh.faces.size() / 2.0);
    const double s = std::sqrt(w * h / cells);
    gx_ = std::clamp(static_cast<int>(w / s), 1, 4096);
    gy_ = std::clamp(static_cast<int>(h / s), 1, 4096);
    cells_.assign(static_cast<size_t>(gx_) * gy_, {});
    auto cx = [&](double x) { return std::clamp(static_cast<int>((x - lo_.x) / w * gx_), 0, gx_ - 1); };
    auto cy = [&](double y) { return std::clamp(static_cast<int>((y - lo_.y) / h * gy_), 0, gy_ - 1); };
    for (int f = 0; f < static_cast<int>(mesh.faces.size()); ++f) {
        const Face& t = mesh.faces[f];
        double x0 = mesh.vertices[t[0]].x, x1 = x0, y0 = mesh.vertices[t[0]].y, y1 = y0;
        for (int k = 1; k < 3; ++k) {
            x0 = std::min(x0, mesh.vertices[t[k]].x);
            x1 = std::max(x1, mesh.vertices[t[k]].x);
            y0 = std::min(y0, mesh.vertices[t[k]].y);
            y1 = std::max(y1, mesh.vertices[t[k]].y);
        }
        for (int j = cy(y0); j <= cy(y1); ++j)
            for (int i = cx(x0); i <= cx(x1); ++i) cells_[static_cast<size_t>(j) * gx_ + i].push_back(f);
    }
}

bool PointLocator::try_face(int f, const Vec2& q, Location& out) const {
    const Face& t = mesh_->faces[f];
    const auto& V = mesh_->vertices;
    auto b = barycentric(V[t[0]], V[t[1]], V[t[2]], q);
    constexpr double tol = 1e-12;
    if (b[0] < -tol || b[1] < -tol || b[2] < -tol) return false;
    for (double& x : b) x = std::max(0.0, x);
    const double s = b[0] + b[1] + b[2];
    for (double& x : b) x /= s;
    out.face = f;
    out.bary = b;
    return true;
}

std::optional<Location> PointLocator::brute_force(const Vec2& q) const {
    Location loc;
    for (int f = 0; f < static_cast<int>(mesh_->faces.size()); ++f)
        if (try_face(f, q, loc)) return loc;
    return std::nullopt;
}

std::optional<Location> PointLocator::locate(const Vec2& q, int hint) const {
    if (mesh_->faces.empty()) return std::nullopt;
    Location loc;
    if (hint >= 0 && hint < static_cast<int>(mesh_->faces.size())) {
        // Short straight walk toward q from the hint face.
        int f = hint;
        for (int step = 0; step < 64 && f >= 0; ++step) {
            if (try_face(f, q, loc)) return loc;
            const Face& t = mesh_->faces[f];
            const auto b = barycentric(mesh_->vertices[t[0]], mesh_->vertices[t[1]], mesh_->vertices[t[2]], q);
            const int k = static_cast<int>(std::min_element(b.begin(), b.end()) - b.begin());
            f = adj_[f][k];
        }
    }
    const double eps = 1e-9 * std::max(hi_.x - lo_.x, hi_.y - lo_.y);
    if (q.x < lo_.x - eps || q.x > hi_.x + eps || q.y < lo_.y - eps || q.y > hi_.y + eps) return std::nullopt;
    const double w = std::max(hi_.x - lo_.x, 1e-300), h = std::max(hi_.y - lo_.y, 1e-300);
    const int i = std::clamp(static_cast<int>((q.x - lo_.x) / w * gx_), 0, gx_ - 1);
    const int j = std::clamp(static_cast<int>((q.y - lo_.y) / h * gy_), 0, gy_ - 1);
    for (int f : cells_[static_cast<size_t>(j) * gx_ + i])
        if (try_face(f, q, loc)) return loc;
    // Points on cell borders can belong to faces registered only in a neighbouring cell.
    for (int dj = -1; dj <= 1; ++dj) {
        for (int di = -1; di <= 1; ++di) {
            const int ii = i + di, jj = j + dj;
            if ((di == 0 && dj == 0) || ii < 0 || jj < 0 || ii >= gx_ || jj >= gy_) continue;
            for (int f : cells_[static_cast<size_t>(jj) * gx_ + ii])
                if (try_face(f, q, loc)) return loc;
        }
    }
    return std::nullopt;
}

std::optional<Location> locate_point(const TriMesh& mesh, const Vec2& q) { return PointLocator(mesh).locate(q); }

Vec2 barycentric_reconstruct(const TriMesh& mesh, const std::vector<Vec2>& positions, const Location& loc) {
    const Face& t = mesh.faces[loc.face];
    return positions[t[0]] * loc.bary[0] + positions[t[1]] * loc.bary[1] + positions[t[2]] * loc.bary[2];
}

}  // namespace qcov
