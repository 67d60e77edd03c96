#include "qcov/metric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <set>

#include "qcov/errors.hpp"

namespace qcov {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Vec2 metric_unit(const Vec2& e, const Mat2& G) {
    const double n2 = e.x * (G.a * e.x + G.b * e.y) + e.y * (G.c * e.x + G.d * e.y);
    if (!(n2 > 0.0)) return {0.0, 0.0};
    return e / std::sqrt(n2);
}

}  // namespace

Mat2 torus_metric(double phi, double R, double r) {
    const double rho = R + r * std::cos(phi);
    const double s = std::sin(phi);
    return {rho * rho, 0.0, 0.0, r * r * s * s};
}

AnnulusCoords annulus_coords(const Vec2& p, double R, double r) {
    AnnulusCoords c;
    c.theta = wrap_angle(std::atan2(p.y, p.x));
    const double t = std::clamp((norm(p) - R) / r, -1.0, 1.0);
    c.phi = std::acos(t);
    return c;
}

Mat2 chart_metric(const Vec2& p, double R, double r) {
    const double rho = norm(p);
    if (!(rho > 0.0)) fail(ErrorKind::domain, "annulus metric requested at the origin");
    const AnnulusCoords ac = annulus_coords(p, R, r);
    const double s = std::max(std::sin(ac.phi), kSinFloor);
    const Mat2 eta{std::pow(R + r * std::cos(ac.phi), 2), 0.0, 0.0, r * r * s * s};
    const Vec2 er = p / rho;
    const Vec2 et{-er.y, er.x};
    // Rows: d theta / d(x, y) and d phi / d(x, y).
    const Mat2 P{et.x / rho, et.y / rho, -er.x / (r * s), -er.y / (r * s)};
    return P.transpose() * eta * P;
}

Mat2 pullback_metric(const MappingAtlas& atlas, const Vec2& q) {
    int f = -1;
    const Vec2 z = tau_forward(atlas, q, &f);
    const Mat2 G = chart_metric(z, atlas.R, atlas.r);
    const Mat2& J = atlas.jacobian[f];
    Mat2 out = J.transpose() * G * J;
    // Exact symmetry.
    const double off = 0.5 * (out.b + out.c);
    out.b = out.c = off;
    return out;
}

const char* to_string(GeodesicMode m) { return m == GeodesicMode::mesh_edges ? "mesh_edges" : "line_of_sight"; }

GeodesicMode geodesic_mode_from_string(const std::string& s) {
    if (s == "mesh_edges") return GeodesicMode::mesh_edges;
    if (s == "line_of_sight") return GeodesicMode::line_of_sight;
    fail(ErrorKind::config, "unknown geodesic mode '" + s + "'");
}

GeodesicGraph::GeodesicGraph(std::shared_ptr<const TriMesh> mesh, MetricFn metric, GeodesicMode mode)
    : mesh_(std::move(mesh)), metric_(std::move(metric)), mode_(mode) {
    locator_ = std::make_shared<PointLocator>(*mesh_);
    eps_w_ = 1e-9 * mesh_->mean_edge_length();
    const auto& V = mesh_->vertices;
    loop_nbr_.assign(V.size(), {-1, -1});
    reflex_index_.assign(V.size(), -1);
    for (size_t l = 0; l < mesh_->boundary_loops.size(); ++l) {
        Loop L;
        L.ids = mesh_->boundary_loops[l];
        L.hole = l > 0;
        const size_t n = L.ids.size();
        bool convex = true;
        for (size_t i = 0; i < n; ++i) {
            const int a = L.ids[(i + n - 1) % n], b = L.ids[i], c = L.ids[(i + 1) % n];
            loop_nbr_[b] = {a, c};
            const double o = orient2d(V[a], V[b], V[c]);
            const double scale = dist(V[a], V[b]) * dist(V[b], V[c]);
            if (o < -1e-12 * scale) {
                convex = false;
                reflex_index_[b] = static_cast<int>(reflex_.size());
                reflex_.push_back(b);
            }
            L.center += V[b];
        }
        // For a hole the loop turns clockwise; convexity of the hole means all corners are reflex.
        if (L.hole) {
            convex = true;
            for (size_t i = 0; i < n; ++i) {
                const int a = L.ids[(i + n - 1) % n], b = L.ids[i], c = L.ids[(i + 1) % n];
                if (orient2d(V[a], V[b], V[c]) > 0) convex = false;
            }
        }
        L.convex = convex;
        L.center = L.center / static_cast<double>(n);
        for (int v : L.ids) L.outer_radius = std::max(L.outer_radius, dist(V[v], L.center));
        if (L.hole && L.convex) {
            std::vector<Vec2> poly;
            for (int v : L.ids) poly.push_back(V[v]);
            if (point_in_polygon(poly, L.center)) {
                L.inner_radius = kInf;
                for (size_t i = 0; i < n; ++i)
                    L.inner_radius =
                        std::min(L.inner_radius, point_segment_distance(L.center, V[L.ids[i]], V[L.ids[(i + 1) % n]]));
            }
        }
        loops_.push_back(std::move(L));
    }
    if (mode_ == GeodesicMode::mesh_edges) {
        build_mesh_graph();
    } else {
        for (int f = 0; f < static_cast<int>(mesh_->faces.size()); ++f) {
            const Mat2 G = metric_(mesh_->face_centroid(f));
            const double dev = std::max({std::abs(G.a - 1), std::abs(G.b), std::abs(G.c), std::abs(G.d - 1)});
            if (dev > 1e-8)
                fail(ErrorKind::argument, "line-of-sight geodesics need a flat chart (metric deviates by " +
                                              std::to_string(dev) + " on face " + std::to_string(f) + ")");
        }
        build_reflex_graph();
    }
}

double GeodesicGraph::metric_length(const Vec2& a, const Vec2& b) const {
    const Vec2 e = b - a;
    if (e.x == 0.0 && e.y == 0.0) return 0.0;
    const Mat2 G = metric_((a + b) * 0.5);
    const double n2 = e.x * (G.a * e.x + G.b * e.y) + e.y * (G.c * e.x + G.d * e.y);
    return std::max(std::sqrt(std::max(n2, 0.0)), eps_w_);
}

void GeodesicGraph::build_mesh_graph() {
    const auto& V = mesh_->vertices;
    std::set<std::pair<int, int>> edges;
    for (const auto& t : mesh_->faces) {
        for (int k = 0; k < 3; ++k) {
            int a = t[k], b = t[(k + 1) % 3];
            if (a > b) std::swap(a, b);
            edges.insert({a, b});
        }
    }
    // One-ring shortcuts across convex quads.
    const auto adjf = face_adjacency(*mesh_);
    std::set<std::pair<int, int>> shortcuts;
    for (int f = 0; f < static_cast<int>(mesh_->faces.size()); ++f) {
        for (int k = 0; k < 3; ++k) {
            const int g = adjf[f][k];
            if (g < f) continue;
            const int a = mesh_->faces[f][k];
            const int b = mesh_->faces[f][(k + 1) % 3], c = mesh_->faces[f][(k + 2) % 3];
            int d = -1;
            for (int v : mesh_->faces[g])
                if (v != b && v != c) d = v;
            if (!segments_cross(V[a], V[d], V[b], V[c])) continue;
            const auto key = std::minmax(a, d);
            if (!edges.count(key)) shortcuts.insert(key);
        }
    }
    frames_.assign(mesh_->faces.size(), {});
    vertex_faces_.assign(V.size(), {});
    for (int f = 0; f < static_cast<int>(mesh_->faces.size()); ++f) {
        for (int v : mesh_->faces[f]) vertex_faces_[v].push_back(f);
        const Mat2 G = metric_(mesh_->face_centroid(f));
        FaceFrame& F = frames_[f];
        if (!(G.a > 0.0)) continue;
        F.m11 = std::sqrt(G.a);
        F.m12 = 0.5 * (G.b + G.c) / F.m11;
        const double rest = G.d - F.m12 * F.m12;
        if (!(rest > 1e-12 * G.a)) continue;
        F.m22 = std::sqrt(rest);
        F.ok = true;
    }
    adj_.assign(V.size(), {});
    for (const auto* set : {&edges, &shortcuts}) {
        for (const auto& [a, b] : *set) {
            const double w = metric_length(V[a], V[b]);
            adj_[a].push_back({b, w});
            adj_[b].push_back({a, w});
        }
    }
    for (auto& list : adj_) std::sort(list.begin(), list.end(), [](const Arc& x, const Arc& y) { return x.to < y.to; });
}

bool GeodesicGraph::unfold(int f, int a, int b, double ta, double tb, const Vec2& pos, double& d, Vec2* dir) const {
    const FaceFrame& F = frames_[f];
    if (!F.ok || !std::isfinite(ta) || !std::isfinite(tb)) return false;
    const auto& V = mesh_->vertices;
    const Vec2 A = F.to_flat(V[a]), B = F.to_flat(V[b]), C = F.to_flat(pos);
    const double len = dist(A, B);
    if (!(len > 0.0)) return false;
    const Vec2 e = (B - A) / len;
    const double x = (ta * ta - tb * tb + len * len) / (2.0 * len);
    const double h2 = ta * ta - x * x;
    if (h2 < 0.0) return false;
    // Source on the far side of the edge from pos.
    Vec2 n{-e.y, e.x};
    if (cross(B - A, C - A) > 0.0) n = -n;
    const Vec2 src = A + e * x + n * std::sqrt(h2);
    const double oa = orient2d(src, C, A), ob = orient2d(src, C, B);
    if ((oa > 0.0 && ob > 0.0) || (oa < 0.0 && ob < 0.0)) return false;
    d = dist(src, C);
    if (dir && d > 0.0) *dir = F.from_flat((C - src) / d);
    return true;
}

bool GeodesicGraph::wedge_ok(int v, const Vec2& dir) const {
    const auto [a, c] = loop_nbr_[v];
    if (a < 0) return true;
    const auto& V = mesh_->vertices;
    const Vec2 e1 = V[v] - V[a], e2 = V[c] - V[v];
    const bool right1 = cross(e1, dir) < 0, right2 = cross(e2, dir) < 0;
    if (orient2d(V[a], V[v], V[c]) < 0) return !(right1 && right2);  // reflex corner
    return !(right1 || right2);                                      // convex corner
}

bool GeodesicGraph::taut_at(int v, const Vec2& from) const {
    const auto [a, c] = loop_nbr_[v];
    const auto& V = mesh_->vertices;
    if (from == V[v]) return false;
    const double o1 = orient2d(from, V[v], V[a]);
    const double o2 = orient2d(from, V[v], V[c]);
    return (o1 >= 0 && o2 >= 0) || (o1 <= 0 && o2 <= 0);
}

bool GeodesicGraph::visible(const Vec2& a, const Vec2& b) const {
    const auto& V = mesh_->vertices;
    for (const auto& L : loops_) {
        if (!L.hole && L.convex) continue;
        const double dc = point_segment_distance(L.center, a, b);
        if (dc > L.outer_radius * (1.0 + 1e-12)) continue;
        if (L.hole && L.convex && dc < L.inner_radius * (1.0 - 1e-9)) return false;
        const size_t n = L.ids.size();
        for (size_t i = 0; i < n; ++i) {
            if (segments_cross(a, b, V[L.ids[i]], V[L.ids[(i + 1) % n]])) return false;
        }
        for (int v : L.ids) {
            if (V[v] == a && !wedge_ok(v, b - a)) return false;
            if (V[v] == b && !wedge_ok(v, a - b)) return false;
        }
    }
    return true;
}

void GeodesicGraph::build_reflex_graph() {
    const auto& V = mesh_->vertices;
    const int n = static_cast<int>(reflex_.size());
    adj_.assign(n, {});
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const int a = reflex_[i], b = reflex_[j];
            if (!taut_at(a, V[b]) || !taut_at(b, V[a])) continue;
            if (!visible(V[a], V[b])) continue;
            const double w = dist(V[a], V[b]);
            adj_[i].push_back({j, w});
            adj_[j].push_back({i, w});
        }
    }
}

size_t GeodesicGraph::num_nodes() const { return adj_.size(); }

size_t GeodesicGraph::num_edges() const {
    size_t s = 0;
    for (const auto& l : adj_) s += l.size();
    return s / 2;
}

TargetPoint GeodesicGraph::target(const Vec2& q, int hint) const {
    TargetPoint t;
    t.pos = q;
    const auto loc = locator_->locate(q, hint);
    if (!loc) fail(ErrorKind::domain, "query point outside the geodesic domain");
    t.face = loc->face;
    t.bary = loc->bary;
    if (mode_ == GeodesicMode::line_of_sight) {
        const auto& V = mesh_->vertices;
        for (int i = 0; i < static_cast<int>(reflex_.size()); ++i) {
            const int b = reflex_[i];
            if (taut_at(b, q) && visible(q, V[b])) t.taut.push_back(i);
        }
    }
    return t;
}

SourceField GeodesicGraph::source(const Vec2& p) const {
    SourceField s;
    s.g_ = this;
    s.p_ = p;
    const auto loc = locator_->locate(p);
    if (!loc) fail(ErrorKind::domain, "source point outside the geodesic domain");
    s.face_ = loc->face;
    const auto& V = mesh_->vertices;
    const size_t n = adj_.size();
    s.dist_.assign(n, kInf);
    s.first_.assign(n, -1);
    s.pred_.assign(n, -1);
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    auto seed = [&](int node, double d) {
        if (d < s.dist_[node]) {
            s.dist_[node] = d;
            s.first_[node] = node;
            pq.push({d, node});
        }
    };
    if (mode_ == GeodesicMode::mesh_edges) {
        for (int v : mesh_->faces[s.face_]) seed(v, metric_length(p, V[v]));
    } else {
        for (int i = 0; i < static_cast<int>(reflex_.size()); ++i) {
            const int b = reflex_[i];
            if (taut_at(b, p) && visible(p, V[b])) seed(i, dist(p, V[b]));
        }
    }
    std::vector<char> done(mode_ == GeodesicMode::mesh_edges ? n : 0, 0);
    auto relax = [&](int v, double nd, int from) {
        const bool better = nd < s.dist_[v];
        const bool tie = nd == s.dist_[v] && s.pred_[v] >= 0 && from < s.pred_[v];
        if (better || tie) {
            s.dist_[v] = nd;
            s.pred_[v] = from;
            s.first_[v] = s.dist_[from] == 0.0 ? v : s.first_[from];
            if (better) pq.push({nd, v});
        }
    };
    while (!pq.empty()) {
        const auto [du, u] = pq.top();
        pq.pop();
        if (du > s.dist_[u]) continue;
        if (!done.empty()) {
            if (done[u]) continue;
            done[u] = 1;
            // Wavefront update of each face that now has two settled corners.
            for (int f : vertex_faces_[u]) {
                const Face& F = mesh_->faces[f];
                for (int k = 0; k < 3; ++k) {
                    const int w = F[k], c = F[(k + 1) % 3] == u ? F[(k + 2) % 3] : F[(k + 1) % 3];
                    if (w == u || !done[w]) continue;
                    double d = 0.0;
                    if (unfold(f, u, w, du, s.dist_[w], V[c], d, nullptr) && d < s.dist_[c] * (1.0 - 1e-12)) {
                        // A settled corner that improves is reopened so the correction propagates.
                        done[c] = 0;
                        relax(c, d, s.dist_[u] <= s.dist_[w] ? u : w);
                    }
                }
            }
        }
        for (const Arc& e : adj_[u]) relax(e.to, du + e.w, u);
    }
    return s;
}

PathSample SourceField::to(const TargetPoint& q) const {
    const GeodesicGraph& g = *g_;
    const auto& V = g.mesh_->vertices;
    PathSample out;
    if (q.pos == p_) return out;
    auto finish = [&](const Vec2& first_point, const Vec2& last_from) {
        out.first_dir = metric_unit(first_point - p_, g.metric_(p_));
        out.last_dir = metric_unit(q.pos - last_from, g.metric_(q.pos));
    };
    if (g.mode_ == GeodesicMode::line_of_sight) {
        if (g.visible(p_, q.pos)) {
            out.distance = dist(p_, q.pos);
            finish(q.pos, p_);
            return out;
        }
        double best = kInf;
        int arg = -1;
        for (int i : q.taut) {
            const double d = dist_[i] + dist(V[g.reflex_[i]], q.pos);
            if (d < best) {
                best = d;
                arg = i;
            }
        }
        if (arg < 0) fail(ErrorKind::connectivity, "no path between the query points");
        out.distance = best;
        out.bends = true;
        finish(V[g.reflex_[first_[arg]]], V[g.reflex_[arg]]);
        return out;
    }
    double best = kInf;
    int arg = -1;
    bool direct = false;
    if (q.face == face_) {
        best = g.metric_length(p_, q.pos);
        direct = true;
    }
    const Face& F = g.mesh_->faces[q.face];
    for (int v : F) {
        const double d = dist_[v] + g.metric_length(V[v], q.pos);
        if (d < best || (d == best && !direct && v < arg)) {
            best = d;
            arg = v;
            direct = false;
        }
    }
    if (!std::isfinite(best)) fail(ErrorKind::connectivity, "no path between the query points");
    if (!direct) {
        // Arrivals across a face edge from the virtual source of its two corners.
        double wave = kInf;
        Vec2 wave_dir;
        int wave_arg = -1;
        for (int k = 0; k < 3; ++k) {
            const int a = F[k], b = F[(k + 1) % 3];
            double d = 0.0;
            Vec2 dir;
            if (g.unfold(q.face, a, b, dist_[a], dist_[b], q.pos, d, &dir) && d < wave) {
                wave = d;
                wave_dir = dir;
                wave_arg = dist_[a] <= dist_[b] ? a : b;
            }
        }
        if (wave < best) {
            out.distance = wave;
            const int f = first_[wave_arg];
            out.first_dir = metric_unit((f >= 0 ? V[f] : q.pos) - p_, g.metric_(p_));
            out.last_dir = wave_dir;
            return out;
        }
    }
    out.distance = best;
    if (direct) {
        finish(q.pos, p_);
        return out;
    }
    // Last segment: from the arrival vertex, or from the vertex before it if q sits on it.
    Vec2 from = V[arg];
    if (from == q.pos) from = pred_[arg] >= 0 ? V[pred_[arg]] : p_;
    const int f = first_[arg];
    finish(f >= 0 ? V[f] : q.pos, from);
    return out;
}

double GeodesicGraph::distance(const Vec2& p, const Vec2& q) const { return source(p).to(target(q)).distance; }

Vec2 GeodesicGraph::tangent(const Vec2& p, const Vec2& q) const {
    if (p == q) fail(ErrorKind::argument, "tangent direction is undefined for coincident points");
    return source(p).to(target(q)).last_dir;
}

GeodesicGraph annulus_graph(const MappingAtlas& atlas, GeodesicMode mode) {
    const double R = atlas.R, r = atlas.r;
    return GeodesicGraph(atlas.image, [R, r](const Vec2& p) { return chart_metric(p, R, r); }, mode);
}

GeodesicGraph original_graph(const MappingAtlas& atlas) {
    return GeodesicGraph(atlas.source, [atlas](const Vec2& q) { return pullback_metric(atlas, q); },
                         GeodesicMode::mesh_edges);
}

GeodesicGraph flat_graph(const TriMesh& mesh, GeodesicMode mode) {
    return GeodesicGraph(std::make_shared<TriMesh>(mesh), [](const Vec2&) { return Mat2::identity(); }, mode);
}

double geodesic_distance(const GeodesicGraph& g, const Vec2& p, const Vec2& q) { return g.distance(p, q); }

Vec2 distance_tangent(const GeodesicGraph& g, const Vec2& p, const Vec2& q) { return g.tangent(p, q); }

}  // namespace qcov
