#include "qcov/registration.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <unordered_map>

#include "qcov/atlas.hpp"
#include "qcov/errors.hpp"

namespace qcov {

Vec2 RigidTransform::apply(const Vec2& p) const {
    const double c = std::cos(angle), s = std::sin(angle);
    return {c * p.x - s * p.y + translation.x, s * p.x + c * p.y + translation.y};
}

RigidTransform RigidTransform::inverse() const {
    RigidTransform inv;
    inv.angle = -angle;
    const double c = std::cos(angle), s = std::sin(angle);
    // R^T (-t)
    inv.translation = {-(c * translation.x + s * translation.y), -(-s * translation.x + c * translation.y)};
    return inv;
}

RigidTransform RigidTransform::compose(const RigidTransform& other) const {
    RigidTransform out;
    out.angle = angle + other.angle;
    const Vec2 o = other.translation;
    const double c = std::cos(angle), s = std::sin(angle);
    out.translation = Vec2{c * o.x - s * o.y, s * o.x + c * o.y} + translation;
    return out;
}

ConsensusResult ring_consensus_length(const std::vector<AgentMapRecord>& records) {
    if (records.empty()) fail(ErrorKind::argument, "ring consensus needs at least one record");
    const int n = static_cast<int>(records.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return records[a].agent_id < records[b].agent_id; });
    struct Belief {
        double mu;
        int id;
        double length;
        bool operator<(const Belief& o) const { return mu < o.mu || (mu == o.mu && id < o.id); }
    };
    std::vector<Belief> belief(n);
    for (int j = 0; j < n; ++j) {
        const auto& r = records[order[j]];
        if (!std::isfinite(r.local_mu_norm)) fail(ErrorKind::argument, "non-finite distortion in a record");
        belief[j] = {r.local_mu_norm, r.agent_id, r.local_length};
    }
    ConsensusResult out;
    for (;;) {
        ++out.sweeps;
        const auto prev = belief;
        bool changed = false;
        for (int j = 0; j < n && n > 1; ++j) {
            const int left = (j + n - 1) % n, right = (j + 1) % n;
            for (int from : {left, right}) {
                const Belief& b = prev[from];
                out.trace.push_back({out.sweeps, records[order[from]].agent_id, records[order[j]].agent_id, b.mu,
                                     b.length, b.id});
                if (b < belief[j]) {
                    belief[j] = b;
                    changed = true;
                }
            }
        }
        if (!changed) break;
    }
    out.L_star = belief[0].length;
    out.agent = belief[0].id;
    return out;
}

std::string trace_jsonl(const std::vector<RingMessage>& trace) {
    std::string s;
    char buf[256];
    for (const auto& m : trace) {
        std::snprintf(buf, sizeof buf,
                      "{\"sweep\":%d,\"from\":%d,\"to\":%d,\"mu\":%.17g,\"length\":%.17g,\"origin\":%d}\n", m.sweep,
                      m.from, m.to, m.mu, m.length, m.origin);
        s += buf;
    }
    return s;
}

KdTree::KdTree(std::vector<Vec2> points) : pts_(std::move(points)) {
    std::vector<int> idx(pts_.size());
    std::iota(idx.begin(), idx.end(), 0);
    nodes_.reserve(pts_.size());
    root_ = build(idx, 0, static_cast<int>(idx.size()), 0);
}

int KdTree::build(std::vector<int>& idx, int lo, int hi, int depth) {
    if (lo >= hi) return -1;
    const int axis = depth % 2;
    const int mid = (lo + hi) / 2;
    std::nth_element(idx.begin() + lo, idx.begin() + mid, idx.begin() + hi, [&](int a, int b) {
        const double ka = axis ? pts_[a].y : pts_[a].x, kb = axis ? pts_[b].y : pts_[b].x;
        return ka < kb || (ka == kb && a < b);
    });
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({idx[mid], -1, -1, axis});
    const int l = build(idx, lo, mid, depth + 1);
    const int r = build(idx, mid + 1, hi, depth + 1);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
}

void KdTree::search(int node, const Vec2& q, int& best, double& best_d2) const {
    if (node < 0) return;
    const Node& nd = nodes_[node];
    const Vec2& p = pts_[nd.point];
    const double d2 = norm2(p - q);
    if (d2 < best_d2 || (d2 == best_d2 && nd.point < best)) {
        best_d2 = d2;
        best = nd.point;
    }
    const double diff = nd.axis ? q.y - p.y : q.x - p.x;
    const int near = diff < 0 ? nd.left : nd.right;
    const int far = diff < 0 ? nd.right : nd.left;
    search(near, q, best, best_d2);
    if (diff * diff <= best_d2) search(far, q, best, best_d2);
}

int KdTree::nearest(const Vec2& q, double* d2) const {
    int best = -1;
    double bd = std::numeric_limits<double>::infinity();
    search(root_, q, best, bd);
    if (d2) *d2 = bd;
    return best;
}

RigidTransform fit_rigid(const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
    if (a.size() != b.size() || a.empty()) fail(ErrorKind::argument, "rigid fit needs matched, non-empty point sets");
    Vec2 ca, cb;
    for (size_t i = 0; i < a.size(); ++i) {
        ca += a[i];
        cb += b[i];
    }
    ca = ca / static_cast<double>(a.size());
    cb = cb / static_cast<double>(b.size());
    double sd = 0.0, sc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const Vec2 u = a[i] - ca, v = b[i] - cb;
        sd += dot(u, v);
        sc += cross(u, v);
    }
    RigidTransform t;
    t.angle = (sd == 0.0 && sc == 0.0) ? 0.0 : std::atan2(sc, sd);
    t.translation = cb - RigidTransform{t.angle, {}}.apply(ca);
    return t;
}

IcpResult icp_register(const std::vector<Vec2>& source, const std::vector<Vec2>& target, const IcpOptions& opt) {
    if (source.size() < 3 || target.size() < 3) fail(ErrorKind::argument, "ICP needs at least 3 points per cloud");
    const KdTree tree(target);
    IcpResult out;
    RigidTransform T = opt.initial;
    if (opt.align_centroids) {
        Vec2 cs, ct;
        for (const Vec2& p : source) cs += p;
        for (const Vec2& p : target) ct += p;
        T = {0.0, ct / static_cast<double>(target.size()) - cs / static_cast<double>(source.size())};
    }
    const double max_d2 = opt.max_pair_dist * opt.max_pair_dist;
    std::vector<Vec2> src, dst;
    for (int it = 0;; ++it) {
        src.clear();
        dst.clear();
        double sum = 0.0;
        std::vector<Vec2> moved(source.size());
        for (size_t i = 0; i < source.size(); ++i) moved[i] = T.apply(source[i]);
        std::optional<KdTree> back;
        if (opt.mutual) back.emplace(moved);
        for (size_t i = 0; i < source.size(); ++i) {
            const Vec2& p = source[i];
            double d2 = 0.0;
            const int j = tree.nearest(moved[i], &d2);
            if (d2 > max_d2) continue;
            if (back && back->nearest(target[j]) != static_cast<int>(i)) continue;
            src.push_back(p);
            dst.push_back(target[j]);
            sum += d2;
        }
        if (src.size() < 3) fail(ErrorKind::convergence, "ICP lost its correspondences");
        const double rms = std::sqrt(sum / src.size());
        const double prev = out.rms_history.empty() ? std::numeric_limits<double>::infinity() : out.rms_history.back();
        // Gated or filtered pairings can make a step worse; keep the previous estimate then.
        if (rms > prev) break;
        out.rms_history.push_back(rms);
        out.transform = T;
        out.rms = rms;
        out.iterations = it;
        if (rms <= opt.tol || prev - rms < opt.tol || it >= opt.max_iters) break;
        T = fit_rigid(src, dst);
    }
    return out;
}

double hausdorff_distance(const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
    if (a.empty() || b.empty()) return a.empty() && b.empty() ? 0.0 : std::numeric_limits<double>::infinity();
    const KdTree ta(a), tb(b);
    double h = 0.0, d2 = 0.0;
    for (const Vec2& p : a) {
        tb.nearest(p, &d2);
        h = std::max(h, d2);
    }
    for (const Vec2& p : b) {
        ta.nearest(p, &d2);
        h = std::max(h, d2);
    }
    return std::sqrt(h);
}

namespace {

// Uniform hash grid used to coalesce near-duplicate points.
class DedupGrid {
public:
    explicit DedupGrid(double eps) : eps_(eps) {}
    // Returns the index of an existing point within eps, or -1 after inserting p as `index`.
    int insert(const Vec2& p, int index, const std::vector<Vec2>& pts) {
        const long long cx = cell(p.x), cy = cell(p.y);
        for (long long dx = -1; dx <= 1; ++dx)
            for (long long dy = -1; dy <= 1; ++dy) {
                const auto it = cells_.find(key(cx + dx, cy + dy));
                if (it == cells_.end()) continue;
                for (int j : it->second)
                    if (dist(pts[j], p) <= eps_) return j;
            }
        cells_[key(cx, cy)].push_back(index);
        return -1;
    }

private:
    long long cell(double v) const { return static_cast<long long>(std::floor(v / eps_)); }
    static long long key(long long x, long long y) { return x * 73856093LL ^ y * 19349663LL; }
    double eps_;
    std::unordered_map<long long, std::vector<int>> cells_;
};

std::vector<Vec2> chart_pullback(const AgentMapRecord& r, double L_star) {
    if (!r.patch || r.unit_images.size() != r.sub_cloud.size()) return r.sub_cloud;
    const double Lt = r.local_length;
    if (!(Lt > 0.0)) fail(ErrorKind::argument, "record has no rectangle length");
    const TriMesh chart = r.patch->with_vertices(r.unit_images);
    const PointLocator loc(chart);
    std::vector<Vec2> out(r.sub_cloud.size());
    for (size_t v = 0; v < r.unit_images.size(); ++v) {
        // Rectangle point, rescaled to the common length, back to the unit chart.
        const Vec2 rect{r.unit_images[v].x * Lt, r.unit_images[v].y};
        const Vec2 rescaled{rect.x * (L_star / Lt), rect.y};
        const Vec2 unit{rescaled.x / L_star, rescaled.y};
        const auto l = loc.locate(unit, -1);
        out[v] = l ? barycentric_reconstruct(*r.patch, r.sub_cloud, *l) : r.sub_cloud[v];
    }
    return out;
}

}  // namespace

MergeResult merge_global_cloud(const std::vector<AgentMapRecord>& records, double L_star) {
    if (records.empty()) fail(ErrorKind::argument, "nothing to merge");
    if (!(L_star > 0.0)) fail(ErrorKind::argument, "common rectangle length must be positive");
    MergeResult out;
    std::vector<std::vector<Vec2>> clouds;
    Vec2 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    Vec2 hi = -lo;
    for (const auto& r : records) {
        if (r.sub_cloud.empty()) fail(ErrorKind::argument, "empty sub-cloud for agent " + std::to_string(r.agent_id));
        clouds.push_back(chart_pullback(r, L_star));
        for (const Vec2& p : clouds.back()) {
            lo = {std::min(lo.x, p.x), std::min(lo.y, p.y)};
            hi = {std::max(hi.x, p.x), std::max(hi.y, p.y)};
        }
    }
    const double diameter = dist(lo, hi);
    out.merge_eps = 1e-6 * diameter;
    const bool tagged = std::all_of(records.begin(), records.end(),
                                    [](const AgentMapRecord& r) { return r.tags.size() == r.sub_cloud.size(); });
    DedupGrid grid(out.merge_eps);
    auto add = [&](const std::vector<Vec2>& pts, const RigidTransform& T, const AgentMapRecord& r) {
        for (size_t i = 0; i < pts.size(); ++i) {
            const Vec2 q = T.apply(pts[i]);
            if (grid.insert(q, static_cast<int>(out.points.size()), out.points) >= 0) {
                ++out.duplicates;
                continue;
            }
            out.points.push_back(q);
            if (tagged) out.tags.push_back(r.tags[i]);
        }
    };
    out.transforms.resize(records.size());
    std::vector<size_t> ring(records.size());
    std::iota(ring.begin(), ring.end(), size_t{0});
    std::stable_sort(ring.begin(), ring.end(),
                     [&](size_t a, size_t b) { return records[a].agent_id < records[b].agent_id; });
    add(clouds[ring[0]], out.transforms[ring[0]], records[ring[0]]);
    for (size_t step = 1; step < ring.size(); ++step) {
        const size_t t = ring[step];
        const auto& pts = clouds[t];
        RigidTransform T;
        if (pts.size() >= 3 && out.points.size() >= 3) {
            // Shrinking correspondence radius: coarse capture first, then only near-coincident pairs.
            const double spacing =
                std::sqrt(std::max((hi.x - lo.x) * (hi.y - lo.y), 1e-300) / static_cast<double>(out.points.size()));
            for (double f : {1.0, 0.3, 0.1, 0.01}) {
                IcpOptions opt;
                opt.align_centroids = false;
                opt.mutual = true;
                opt.initial = T;
                opt.max_pair_dist = f * spacing;
                try {
                    T = icp_register(pts, out.points, opt).transform;
                } catch (const Error& e) {
                    if (e.kind() != ErrorKind::convergence) throw;
                    break;
                }
            }
        }
        out.transforms[t] = T;
        add(pts, T, records[t]);
    }
    if (tagged) {
        const auto inner = std::count(out.tags.begin(), out.tags.end(), VertexTag::inner_boundary);
        const auto outer = std::count(out.tags.begin(), out.tags.end(), VertexTag::outer_boundary);
        if (inner < 3 || outer < 3)
            fail(ErrorKind::topology, "merged cloud has too few boundary points (inner " + std::to_string(inner) +
                                          ", outer " + std::to_string(outer) + ")");
    }
    return out;
}

namespace {

struct Patch {
    TriMesh mesh;
    std::vector<int> global;  // local vertex -> mesh vertex
};

Patch extract_patch(const TriMesh& mesh, const std::vector<char>& keep_face) {
    Patch p;
    std::vector<int> local(mesh.num_vertices(), -1);
    for (size_t f = 0; f < mesh.num_faces(); ++f) {
        if (!keep_face[f]) continue;
        Face F;
        for (int k = 0; k < 3; ++k) {
            const int g = mesh.faces[f][k];
            if (local[g] < 0) {
                local[g] = static_cast<int>(p.global.size());
                p.global.push_back(g);
                p.mesh.vertices.push_back(mesh.vertices[g]);
            }
            F[k] = local[g];
        }
        p.mesh.faces.push_back(F);
    }
    p.mesh.boundary_loops = extract_boundary_loops(p.mesh.faces, p.mesh.vertices);
    return p;
}

enum class Run { inner, outer, side };

}  // namespace

std::vector<AgentMapRecord> prepare_agent_records(const TriMesh& mesh, int n_agents, std::uint64_t seed) {
    if (n_agents < 1) fail(ErrorKind::argument, "at least one agent is required");
    if (mesh.boundary_loops.size() != 2) fail(ErrorKind::topology, "agent patches need a region with one hole");
    const auto tags = mesh.vertex_tags.size() == mesh.num_vertices() ? mesh.vertex_tags : effective_tags(mesh);
    const double h = mesh.mean_edge_length();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::vector<AgentMapRecord> out;

    auto finish = [&](AgentMapRecord rec, const TriMesh& patch, const std::vector<int>& global,
                      const RectangularMap& rm) {
        RigidTransform frame;
        if (rec.agent_id > 1) {
            frame.angle = unit(rng) * kPi / 180.0;
            frame.translation = Vec2{unit(rng), unit(rng)} * (0.2 * h);
        }
        for (size_t v = 0; v < global.size(); ++v) {
            rec.sub_cloud.push_back(frame.apply(patch.vertices[v]));
            rec.tags.push_back(tags[global[v]]);
            rec.source_ids.push_back(global[v]);
        }
        rec.local_length = rm.L;
        rec.local_mu_norm = length_distortion(patch, rm.unit_images, rm.L);
        rec.patch = std::make_shared<TriMesh>(patch.with_vertices(rec.sub_cloud));
        rec.unit_images = rm.unit_images;
        out.push_back(std::move(rec));
    };

    if (n_agents == 1) {
        // A single agent cuts the whole region open, exactly as the global mapping does.
        const MapResult m = map_region(mesh, MapOptions{0, {}, false});
        AgentMapRecord rec;
        rec.agent_id = 1;
        finish(std::move(rec), m.sliced.mesh, m.sliced.provenance, m.rect);
        return out;
    }

    const auto& inner = mesh.boundary_loops[1];
    const int n_in = static_cast<int>(inner.size());
    if (n_in < n_agents) fail(ErrorKind::argument, "more agents than inner boundary vertices");
    const auto nbrs = vertex_neighbors(mesh);
    const auto& V = mesh.vertices;

    // Every vertex goes to the nearest inner arc (graph distance); ties to the lower arc.
    std::vector<double> d(V.size(), std::numeric_limits<double>::infinity());
    std::vector<int> label(V.size(), -1);
    using Item = std::tuple<double, int, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    for (int k = 0; k < n_in; ++k) {
        const int arc = static_cast<int>(static_cast<long long>(k) * n_agents / n_in);
        d[inner[k]] = 0.0;
        label[inner[k]] = arc;
        pq.push({0.0, arc, inner[k]});
    }
    while (!pq.empty()) {
        const auto [du, lu, u] = pq.top();
        pq.pop();
        if (du > d[u] || lu != label[u]) continue;
        for (int w : nbrs[u]) {
            const double nd = du + dist(V[u], V[w]);
            if (nd < d[w] || (nd == d[w] && lu < label[w])) {
                d[w] = nd;
                label[w] = lu;
                pq.push({nd, lu, w});
            }
        }
    }

    std::map<std::pair<int, int>, int> inner_edge, outer_edge;
    for (int l = 0; l < 2; ++l) {
        const auto& loop = mesh.boundary_loops[l];
        auto& m = l == 0 ? outer_edge : inner_edge;
        for (size_t k = 0; k < loop.size(); ++k) {
            const int a = loop[k], b = loop[(k + 1) % loop.size()];
            m[std::minmax(a, b)] = 1;
        }
    }

    const size_t nf = mesh.num_faces();
    for (int j = 0; j < n_agents; ++j) {
        std::vector<char> in_core(V.size(), 0), keep(nf, 0);
        for (size_t f = 0; f < nf; ++f)
            for (int v : mesh.faces[f])
                if (label[v] == j) {
                    for (int w : mesh.faces[f]) in_core[w] = 1;
                    break;
                }
        // One ring of overlap with the neighbouring strips.
        for (size_t f = 0; f < nf; ++f)
            for (int v : mesh.faces[f])
                if (in_core[v]) keep[f] = 1;

        Patch P;
        std::vector<std::pair<int, Run>> runs;
        auto edge_run = [&](int a, int b) {
            const auto key = std::minmax(P.global[a], P.global[b]);
            if (inner_edge.count(key)) return Run::inner;
            if (outer_edge.count(key)) return Run::outer;
            return Run::side;
        };
        // Trim ears whose two free edges both lie on a strip side; they would collapse in the rectangle chart.
        for (int pass = 0;; ++pass) {
            P = extract_patch(mesh, keep);
            if (pass > 1000) fail(ErrorKind::topology, "could not trim agent patch " + std::to_string(j + 1));
            std::set<std::pair<int, int>> side_edges;
            for (const auto& loop : P.mesh.boundary_loops)
                for (size_t k = 0; k < loop.size(); ++k) {
                    const int a = loop[k], b = loop[(k + 1) % loop.size()];
                    if (edge_run(a, b) == Run::side) side_edges.insert(std::minmax(a, b));
                }
            bool trimmed = false;
            int lf = 0;
            for (size_t f = 0; f < nf; ++f) {
                if (!keep[f]) continue;
                const Face& F = P.mesh.faces[lf++];
                int on_side = 0;
                for (int k = 0; k < 3; ++k) on_side += side_edges.count(std::minmax(F[k], F[(k + 1) % 3])) ? 1 : 0;
                if (on_side >= 2) {
                    keep[f] = 0;
                    trimmed = true;
                }
            }
            if (!trimmed) break;
        }
        const std::string who = "agent patch " + std::to_string(j + 1);
        if (P.mesh.boundary_loops.size() != 1 || euler_characteristic(P.mesh) != 1)
            fail(ErrorKind::topology, who + " is not a topological disk");
        const auto& loop = P.mesh.boundary_loops[0];
        const int m = static_cast<int>(loop.size());
        if (static_cast<int>(std::set<int>(loop.begin(), loop.end()).size()) != m)
            fail(ErrorKind::topology, who + " has a pinched boundary");
        // Classify boundary edges and locate the four corners.
        std::vector<Run> cls(m);
        for (int k = 0; k < m; ++k) cls[k] = edge_run(loop[k], loop[(k + 1) % m]);
        int start = 0;
        while (start < m && cls[start] == cls[(start + m - 1) % m]) ++start;
        if (start == m) fail(ErrorKind::topology, who + " does not touch both boundary loops");
        for (int k = 0; k < m; ++k) {
            const int e = (start + k) % m;
            if (runs.empty() || runs.back().second != cls[e]) runs.push_back({e, cls[e]});
        }
        if (runs.size() != 4) {
            std::string seq;
            for (const auto& r : runs) seq += r.second == Run::inner ? 'i' : r.second == Run::outer ? 'o' : 's';
            fail(ErrorKind::topology, who + " boundary does not split into four sides (" + seq + ")");
        }
        int ri = -1;
        for (int r = 0; r < 4; ++r)
            if (runs[r].second == Run::inner) ri = r;
        if (ri < 0 || runs[(ri + 1) % 4].second != Run::side || runs[(ri + 2) % 4].second != Run::outer ||
            runs[(ri + 3) % 4].second != Run::side)
            fail(ErrorKind::topology, who + " sides are not inner, side, outer, side");
        const int inner_first = runs[ri].first;
        const int inner_end = runs[(ri + 1) % 4].first;  // first edge after the inner run
        const int outer_first = runs[(ri + 2) % 4].first;
        const int outer_end = runs[(ri + 3) % 4].first;
        QuadCorners c;
        c.c01 = loop[inner_first];
        c.c00 = loop[inner_end];
        c.cL0 = loop[outer_first];
        c.cL1 = loop[outer_end];
        const RectangularMap rm = rectangular_map(P.mesh, c);
        AgentMapRecord rec;
        rec.agent_id = j + 1;
        finish(std::move(rec), P.mesh, P.global, rm);
    }
    return out;
}

}  // namespace qcov
