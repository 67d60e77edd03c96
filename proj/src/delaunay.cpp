#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_set>

#include "qcov/errors.hpp"
#include "qcov/mesh.hpp"

namespace qcov {
namespace {

struct DTri {
    std::array<int, 3> v{};
    std::array<int, 3> n{-1, -1, -1};  // n[k] is the neighbour across the edge opposite v[k]
    bool alive = true;
};

inline std::uint64_t edge_key(int a, int b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
}

double incircle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d, double& mag) {
    const double adx = a.x - d.x, ady = a.y - d.y;
    const double bdx = b.x - d.x, bdy = b.y - d.y;
    const double cdx = c.x - d.x, cdy = c.y - d.y;
    const double al = adx * adx + ady * ady;
    const double bl = bdx * bdx + bdy * bdy;
    const double cl = cdx * cdx + cdy * cdy;
    const double t1 = al * (bdx * cdy - cdx * bdy);
    const double t2 = bl * (cdx * ady - adx * cdy);
    const double t3 = cl * (adx * bdy - bdx * ady);
    mag = std::abs(al) * (std::abs(bdx * cdy) + std::abs(cdx * bdy)) +
          std::abs(bl) * (std::abs(cdx * ady) + std::abs(adx * cdy)) +
          std::abs(cl) * (std::abs(adx * bdy) + std::abs(bdx * ady));
    return t1 + t2 + t3;
}

class Triangulator {
public:
    explicit Triangulator(const std::vector<Vec2>& pts) : P_(pts), n_real_(static_cast<int>(pts.size())) {
        Vec2 lo = pts[0], hi = pts[0];
        for (const auto& p : pts) {
            lo = {std::min(lo.x, p.x), std::min(lo.y, p.y)};
            hi = {std::max(hi.x, p.x), std::max(hi.y, p.y)};
        }
        const double m = std::max(hi.x - lo.x, hi.y - lo.y);
        const Vec2 c = (lo + hi) * 0.5;
        P_.push_back({c.x - 40 * m, c.y - 30 * m});
        P_.push_back({c.x + 40 * m, c.y - 30 * m});
        P_.push_back({c.x, c.y + 40 * m});
        DTri t;
        t.v = {n_real_, n_real_ + 1, n_real_ + 2};
        T_.push_back(t);
        vtri_.assign(P_.size(), -1);
        vtri_[n_real_] = vtri_[n_real_ + 1] = vtri_[n_real_ + 2] = 0;
    }

    void insert_all() {
        std::vector<int> order(n_real_);
        std::iota(order.begin(), order.end(), 0);
        // Snake order over a coarse grid keeps walks short.
        Vec2 lo = P_[0], hi = P_[0];
        for (int i = 0; i < n_real_; ++i) {
            lo = {std::min(lo.x, P_[i].x), std::min(lo.y, P_[i].y)};
            hi = {std::max(hi.x, P_[i].x), std::max(hi.y, P_[i].y)};
        }
        const int g = std::max(1, static_cast<int>(std::sqrt(n_real_ / 4.0)));
        auto cell = [&](int i) {
            const double sx = (hi.x - lo.x) > 0 ? (P_[i].x - lo.x) / (hi.x - lo.x) : 0.0;
            const double sy = (hi.y - lo.y) > 0 ? (P_[i].y - lo.y) / (hi.y - lo.y) : 0.0;
            int cx = std::min(g - 1, static_cast<int>(sx * g));
            const int cy = std::min(g - 1, static_cast<int>(sy * g));
            if (cy % 2) cx = g - 1 - cx;
            return std::make_pair(cy, cx);
        };
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return cell(a) < cell(b); });
        for (int i : order) insert(i);
    }

    void recover_constraint(int a, int b) {
        if (find_edge(a, b).first >= 0) {
            constrained_.insert(edge_key(a, b));
            return;
        }
        std::vector<std::pair<int, int>> crossing = crossing_edges(a, b);
        std::vector<std::pair<int, int>> created;
        const Vec2 pa = P_[a], pb = P_[b];
        size_t guard = 0;
        const size_t limit = 100000 + 100 * crossing.size() * crossing.size();
        while (!crossing.empty()) {
            if (++guard > limit) fail(ErrorKind::geometry, "constraint edge recovery did not terminate");
            auto [u, v] = crossing.front();
            crossing.erase(crossing.begin());
            auto [t, k] = find_edge(u, v);
            if (t < 0) continue;
            // k indexes the vertex of t opposite the edge (u, v).
            const int tt = T_[t].n[k];
            if (tt < 0) continue;
            const int p = T_[t].v[k];
            const int q = opposite_vertex(tt, t);
            if (!segments_cross(P_[u], P_[v], P_[p], P_[q])) {
                crossing.push_back({u, v});
                continue;
            }
            flip(t, k);
            if (segments_cross(pa, pb, P_[p], P_[q]) && p != a && p != b && q != a && q != b) {
                crossing.push_back({p, q});
            } else {
                created.push_back({p, q});
            }
        }
        constrained_.insert(edge_key(a, b));
        // Restore the empty-circle property on the new edges.
        bool changed = true;
        int rounds = 0;
        while (changed && rounds++ < 1000) {
            changed = false;
            for (auto& e : created) {
                if (edge_key(e.first, e.second) == edge_key(a, b)) continue;
                auto [t, k] = find_edge(e.first, e.second);
                if (t < 0) continue;
                if (needs_flip(t, k)) {
                    const int p = T_[t].v[k];
                    const int q = opposite_vertex(T_[t].n[k], t);
                    flip(t, k);
                    e = {p, q};
                    changed = true;
                }
            }
        }
    }

    void lawson_all() {
        for (int round = 0; round < 200; ++round) {
            bool changed = false;
            for (int t = 0; t < static_cast<int>(T_.size()); ++t) {
                if (!T_[t].alive) continue;
                for (int k = 0; k < 3; ++k) {
                    if (needs_flip(t, k)) {
                        flip(t, k);
                        changed = true;
                        break;
                    }
                }
            }
            if (!changed) return;
        }
    }

    const std::vector<DTri>& triangles() const { return T_; }
    int n_real() const { return n_real_; }

private:
    std::vector<Vec2> P_;
    int n_real_;
    std::vector<DTri> T_;
    std::vector<int> vtri_;
    std::unordered_set<std::uint64_t> constrained_;
    int last_ = 0;

    static int idx(const DTri& t, int v) {
        for (int k = 0; k < 3; ++k)
            if (t.v[k] == v) return k;
        return -1;
    }
    static int nidx(const DTri& t, int nb) {
        for (int k = 0; k < 3; ++k)
            if (t.n[k] == nb) return k;
        return -1;
    }
    int opposite_vertex(int u, int t) const { return T_[u].v[nidx(T_[u], t)]; }

    void set_nbr(int tri, int old_nb, int new_nb) {
        if (tri < 0) return;
        const int k = nidx(T_[tri], old_nb);
        if (k >= 0) T_[tri].n[k] = new_nb;
    }

    bool needs_flip(int t, int k) const {
        const DTri& T = T_[t];
        const int u = T.n[k];
        if (u < 0) return false;
        const int b = T.v[(k + 1) % 3], c = T.v[(k + 2) % 3];
        if (constrained_.count(edge_key(b, c))) return false;
        const int a = T.v[k];
        const int d = opposite_vertex(u, t);
        // Only convex quads can flip.
        if (!segments_cross(P_[a], P_[d], P_[b], P_[c])) return false;
        double mag = 0.0;
        const double det = incircle(P_[a], P_[b], P_[c], P_[d], mag);
        return det > 1e-12 * mag;
    }

    // Flip the edge opposite T_[t].v[k].
    void flip(int t, int k) {
        const int u = T_[t].n[k];
        const int a = T_[t].v[k], b = T_[t].v[(k + 1) % 3], c = T_[t].v[(k + 2) % 3];
        const int n_ca = T_[t].n[(k + 1) % 3];
        const int n_ab = T_[t].n[(k + 2) % 3];
        const int j = nidx(T_[u], t);
        const int d = T_[u].v[j];
        // u is (d, c, b) rotated; its neighbour opposite c borders edge b-d.
        const int jc = idx(T_[u], c), jb = idx(T_[u], b);
        const int n_bd = T_[u].n[jc];
        const int n_dc = T_[u].n[jb];
        T_[t].v = {a, b, d};
        T_[t].n = {n_bd, u, n_ab};
        T_[u].v = {a, d, c};
        T_[u].n = {n_dc, n_ca, t};
        set_nbr(n_bd, u, t);
        set_nbr(n_ca, t, u);
        vtri_[a] = t;
        vtri_[b] = t;
        vtri_[d] = t;
        vtri_[c] = u;
    }

    int walk(const Vec2& q) {
        int t = (last_ >= 0 && last_ < static_cast<int>(T_.size()) && T_[last_].alive) ? last_ : 0;
        const size_t limit = 4 * T_.size() + 16;
        int start = 0;
        for (size_t step = 0; step < limit; ++step) {
            const DTri& T = T_[t];
            bool moved = false;
            for (int r = 0; r < 3; ++r) {
                const int k = (start + r) % 3;
                const Vec2& b = P_[T.v[(k + 1) % 3]];
                const Vec2& c = P_[T.v[(k + 2) % 3]];
                if (orient2d(b, c, q) < 0 && T.n[k] >= 0) {
                    t = T.n[k];
                    moved = true;
                    break;
                }
            }
            start = (start + 1) % 3;
            if (!moved) return t;
        }
        for (int i = 0; i < static_cast<int>(T_.size()); ++i) {
            if (!T_[i].alive) continue;
            const DTri& T = T_[i];
            if (orient2d(P_[T.v[0]], P_[T.v[1]], q) >= 0 && orient2d(P_[T.v[1]], P_[T.v[2]], q) >= 0 &&
                orient2d(P_[T.v[2]], P_[T.v[0]], q) >= 0)
                return i;
        }
        fail(ErrorKind::geometry, "point location failed during triangulation");
    }

    void insert(int pi) {
        const Vec2 p = P_[pi];
        const int t = walk(p);
        const DTri T = T_[t];
        for (int k = 0; k < 3; ++k) {
            if (norm2(P_[T.v[k]] - p) == 0.0) fail(ErrorKind::geometry, "duplicate input points");
        }
        // Detect a point lying on an edge of t.
        int on_edge = -1;
        for (int k = 0; k < 3; ++k) {
            const Vec2& b = P_[T.v[(k + 1) % 3]];
            const Vec2& c = P_[T.v[(k + 2) % 3]];
            const double o = orient2d(b, c, p);
            if (std::abs(o) <= 1e-14 * norm2(c - b)) on_edge = k;
        }
        std::vector<std::pair<int, int>> stack;
        if (on_edge >= 0 && T.n[on_edge] >= 0) {
            split_edge(t, on_edge, pi, stack);
        } else {
            split_triangle(t, pi, stack);
        }
        while (!stack.empty()) {
            auto [tri, v] = stack.back();
            stack.pop_back();
            const int k = idx(T_[tri], v);
            if (k < 0) continue;
            if (needs_flip(tri, k)) {
                const int u = T_[tri].n[k];
                flip(tri, k);
                stack.push_back({tri, v});
                stack.push_back({u, v});
            }
        }
        last_ = vtri_[pi];
    }

    void split_triangle(int t, int p, std::vector<std::pair<int, int>>& stack) {
        const DTri T = T_[t];
        const int a = T.v[0], b = T.v[1], c = T.v[2];
        const int na = T.n[0], nb = T.n[1], nc = T.n[2];
        const int t1 = static_cast<int>(T_.size());
        const int t2 = t1 + 1;
        T_.push_back({});
        T_.push_back({});
        T_[t].v = {p, b, c};
        T_[t].n = {na, t1, t2};
        T_[t1].v = {p, c, a};
        T_[t1].n = {nb, t2, t};
        T_[t2].v = {p, a, b};
        T_[t2].n = {nc, t, t1};
        set_nbr(nb, t, t1);
        set_nbr(nc, t, t2);
        vtri_[p] = t;
        vtri_[a] = t1;
        vtri_[b] = t;
        vtri_[c] = t;
        stack.push_back({t, p});
        stack.push_back({t1, p});
        stack.push_back({t2, p});
    }

    void split_edge(int t, int k, int p, std::vector<std::pair<int, int>>& stack) {
        const DTri T = T_[t];
        const int a = T.v[k], b = T.v[(k + 1) % 3], c = T.v[(k + 2) % 3];
        const int nb = T.n[(k + 1) % 3];  // across c-a
        const int nc = T.n[(k + 2) % 3];  // across a-b
        const int u = T.n[k];
        const DTri U = T_[u];
        const int d = U.v[nidx(U, t)];
        const int n_bd = U.n[idx(U, c)];
        const int n_dc = U.n[idx(U, b)];
        const int t2 = static_cast<int>(T_.size());
        const int u2 = t2 + 1;
        T_.push_back({});
        T_.push_back({});
        // t -> (a, b, p), t2 -> (a, p, c), u -> (d, p, b), u2 -> (d, c, p)
        T_[t].v = {a, b, p};
        T_[t].n = {u, t2, nc};
        T_[t2].v = {a, p, c};
        T_[t2].n = {u2, nb, t};
        T_[u].v = {d, p, b};
        T_[u].n = {t, n_bd, u2};
        T_[u2].v = {d, c, p};
        T_[u2].n = {t2, u, n_dc};
        set_nbr(nb, t, t2);
        set_nbr(n_dc, u, u2);
        vtri_[p] = t;
        vtri_[a] = t;
        vtri_[b] = t;
        vtri_[c] = t2;
        vtri_[d] = u;
        stack.push_back({t, p});
        stack.push_back({t2, p});
        stack.push_back({u, p});
        stack.push_back({u2, p});
    }

    std::vector<int> around(int v) const {
        std::vector<int> out;
        const int t0 = vtri_[v];
        if (t0 < 0) return out;
        int t = t0;
        do {
            out.push_back(t);
            const int k = idx(T_[t], v);
            t = T_[t].n[(k + 1) % 3];
        } while (t >= 0 && t != t0 && out.size() < 10000);
        if (t < 0) {
            t = t0;
            while (true) {
                const int k = idx(T_[t], v);
                t = T_[t].n[(k + 2) % 3];
                if (t < 0 || t == t0) break;
                out.push_back(t);
            }
        }
        return out;
    }

    // Returns (triangle, k) where the edge (u, v) is opposite T_[t].v[k].
    std::pair<int, int> find_edge(int u, int v) const {
        for (int t : around(u)) {
            const int ku = idx(T_[t], u);
            const int kv = idx(T_[t], v);
            if (kv >= 0) return {t, 3 - ku - kv};
        }
        return {-1, -1};
    }

    std::vector<std::pair<int, int>> crossing_edges(int a, int b) const {
        std::vector<std::pair<int, int>> out;
        const Vec2 pa = P_[a], pb = P_[b];
        int t = -1;
        int e1 = -1, e2 = -1;
        for (int s : around(a)) {
            const int k = idx(T_[s], a);
            const int x = T_[s].v[(k + 1) % 3], y = T_[s].v[(k + 2) % 3];
            if (segments_cross(pa, pb, P_[x], P_[y])) {
                t = s;
                e1 = x;
                e2 = y;
                break;
            }
            const double ox = orient2d(pa, pb, P_[x]);
            if (ox == 0.0 && dot(P_[x] - pa, pb - pa) > 0 && x != b)
                fail(ErrorKind::geometry, "input point lies on a boundary edge");
        }
        if (t < 0) fail(ErrorKind::geometry, "cannot trace boundary edge through triangulation");
        out.push_back({e1, e2});
        size_t guard = 0;
        while (true) {
            if (++guard > T_.size() + 10) fail(ErrorKind::geometry, "boundary edge trace did not terminate");
            const int u = T_[t].n[3 - idx(T_[t], e1) - idx(T_[t], e2)];
            if (u < 0) fail(ErrorKind::geometry, "boundary edge leaves triangulation");
            const int w = opposite_vertex(u, t);
            if (w == b) break;
            const double ow = orient2d(pa, pb, P_[w]);
            if (ow == 0.0) fail(ErrorKind::geometry, "input point lies on a boundary edge");
            if (segments_cross(pa, pb, P_[e1], P_[w])) {
                e2 = w;
            } else {
                e1 = w;
            }
            out.push_back({e1, e2});
            t = u;
        }
        return out;
    }
};

void check_loop(const std::vector<Vec2>& pts, const std::vector<int>& loop, const char* name) {
    if (loop.size() < 3) fail(ErrorKind::geometry, std::string(name) + " loop needs at least 3 points");
    std::set<int> seen;
    for (int i : loop) {
        if (i < 0 || i >= static_cast<int>(pts.size()))
            fail(ErrorKind::geometry, std::string(name) + " loop index out of range");
        if (!seen.insert(i).second) fail(ErrorKind::geometry, std::string(name) + " loop repeats a vertex");
    }
    const double area = std::abs(polygon_signed_area(pts, loop));
    double ext = 0.0;
    for (size_t i = 0; i < loop.size(); ++i) ext = std::max(ext, dist(pts[loop[i]], pts[loop[0]]));
    if (area <= 1e-12 * ext * ext) fail(ErrorKind::geometry, std::string(name) + " loop is degenerate (collinear)");
    const size_t n = loop.size();
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
            if (j == i + 1 || (i == 0 && j == n - 1)) continue;
            if (segments_touch(pts[loop[i]], pts[loop[(i + 1) % n]], pts[loop[j]], pts[loop[(j + 1) % n]]))
                fail(ErrorKind::geometry, std::string(name) + " loop self-intersects");
        }
    }
}

std::vector<Vec2> loop_polygon(const std::vector<Vec2>& pts, const std::vector<int>& loop) {
    std::vector<Vec2> out;
    out.reserve(loop.size());
    for (int i : loop) out.push_back(pts[i]);
    return out;
}

}  // namespace

TriMesh build_delaunay(const std::vector<Vec2>& points, const std::vector<int>& outer_loop,
                       const std::vector<int>& inner_loop) {
    check_loop(points, outer_loop, "outer");
    check_loop(points, inner_loop, "inner");
    const size_t no = outer_loop.size(), ni = inner_loop.size();
    for (size_t i = 0; i < no; ++i) {
        for (size_t j = 0; j < ni; ++j) {
            if (segments_touch(points[outer_loop[i]], points[outer_loop[(i + 1) % no]], points[inner_loop[j]],
                               points[inner_loop[(j + 1) % ni]]))
                fail(ErrorKind::geometry, "inner and outer loops intersect");
        }
    }
    const auto outer_poly = loop_polygon(points, outer_loop);
    const auto inner_poly = loop_polygon(points, inner_loop);
    for (const Vec2& p : inner_poly) {
        if (!point_in_polygon(outer_poly, p)) fail(ErrorKind::containment, "hole is not inside the outer loop");
    }
    std::vector<char> on_loop(points.size(), 0);
    for (int i : outer_loop) on_loop[i] = 1;
    for (int i : inner_loop) on_loop[i] = 2;
    for (size_t i = 0; i < points.size(); ++i) {
        if (on_loop[i]) continue;
        if (!point_in_polygon(outer_poly, points[i]) || point_in_polygon(inner_poly, points[i]))
            fail(ErrorKind::geometry, "interior point " + std::to_string(i) + " lies outside the region");
    }

    Triangulator tr(points);
    tr.insert_all();
    for (size_t i = 0; i < no; ++i) tr.recover_constraint(outer_loop[i], outer_loop[(i + 1) % no]);
    for (size_t i = 0; i < ni; ++i) tr.recover_constraint(inner_loop[i], inner_loop[(i + 1) % ni]);
    tr.lawson_all();

    TriMesh mesh;
    mesh.vertices = points;
    const int nreal = tr.n_real();
    for (const auto& t : tr.triangles()) {
        if (!t.alive) continue;
        if (t.v[0] >= nreal || t.v[1] >= nreal || t.v[2] >= nreal) continue;
        const Vec2 c = (points[t.v[0]] + points[t.v[1]] + points[t.v[2]]) / 3.0;
        if (!point_in_polygon(outer_poly, c) || point_in_polygon(inner_poly, c)) continue;
        mesh.faces.push_back({t.v[0], t.v[1], t.v[2]});
    }
    std::vector<char> used(points.size(), 0);
    for (const auto& f : mesh.faces)
        for (int v : f) used[v] = 1;
    for (size_t i = 0; i < points.size(); ++i)
        if (!used[i]) fail(ErrorKind::geometry, "point " + std::to_string(i) + " is not part of any face");

    mesh.vertex_tags.assign(points.size(), VertexTag::interior);
    for (int i : outer_loop) mesh.vertex_tags[i] = VertexTag::outer_boundary;
    for (int i : inner_loop) mesh.vertex_tags[i] = VertexTag::inner_boundary;
    mesh.boundary_loops = extract_boundary_loops(mesh.faces, mesh.vertices);
    if (mesh.boundary_loops.size() != 2)
        fail(ErrorKind::topology, "triangulation has " + std::to_string(mesh.boundary_loops.size()) +
                                      " boundary loops, expected 2");
    validate_mesh(mesh);
    return mesh;
}

}  // namespace qcov
