#include "qcov/coverage.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "qcov/errors.hpp"

namespace qcov {

namespace {

constexpr int kMaxHalvings = 20;
constexpr int kMaxProjections = 10;
constexpr int kCentroidIterations = 10000;

double angle_of(const Vec2& p) { return wrap_angle(std::atan2(p.y, p.x)); }

int bin_of(double theta, int n) {
    const int b = static_cast<int>(theta / kTwoPi * n);
    return std::clamp(b, 0, n - 1);
}

// Midpoint subdivision: three corner children, then the middle one.
std::array<std::array<Vec2, 3>, 4> subdivide(const Vec2& a, const Vec2& b, const Vec2& c) {
    const Vec2 ab = (a + b) * 0.5, bc = (b + c) * 0.5, ca = (c + a) * 0.5;
    return {{{a, ab, ca}, {ab, b, bc}, {ca, bc, c}, {ab, bc, ca}}};
}

std::array<std::array<double, 3>, 4> subdivide(double a, double b, double c) {
    const double ab = 0.5 * (a + b), bc = 0.5 * (b + c), ca = 0.5 * (c + a);
    return {{{a, ab, ca}, {ab, b, bc}, {ca, bc, c}, {ab, bc, ca}}};
}

Vec2 centroid(const std::array<Vec2, 3>& t) { return (t[0] + t[1] + t[2]) / 3.0; }

}  // namespace

double DensityField::at(const TriMesh& mesh, int face, const std::array<double, 3>& bary) const {
    const Face& f = mesh.faces[face];
    return bary[0] * samples[f[0]] + bary[1] * samples[f[1]] + bary[2] * samples[f[2]];
}

DensityField sample_density(const MappingAtlas& atlas, const DensitySpec& spec) {
    DensityField d;
    const auto& V = atlas.source->vertices;
    d.samples.resize(V.size());
    for (size_t v = 0; v < V.size(); ++v) {
        const double rho = spec(V[v]);
        if (!(rho > 0.0) || !std::isfinite(rho))
            fail(ErrorKind::config, "density must be strictly positive (vertex " + std::to_string(v) + " has " +
                                        std::to_string(rho) + ")");
        d.samples[v] = rho;
    }
    return d;
}

double WorkloadProfile::cumulative(double theta) const {
    const int n = n_bins();
    if (theta <= 0.0) return 0.0;
    if (theta >= kTwoPi) return total;
    const double s = theta / width();
    const int b = std::min(static_cast<int>(s), n - 1);
    return prefix_[b] + bins[b] * (s - b);
}

WorkloadProfile angular_workload_profile(const TriMesh& xi_mesh, const DensityField& density, int n_bins,
                                         const TriMesh* area_mesh) {
    if (n_bins < 1) fail(ErrorKind::argument, "workload profile needs at least one bin");
    if (density.samples.size() != xi_mesh.num_vertices())
        fail(ErrorKind::argument, "density samples do not match the mesh");
    if (area_mesh && area_mesh->num_faces() != xi_mesh.num_faces())
        fail(ErrorKind::argument, "area mesh does not match the annulus mesh");
    WorkloadProfile p;
    p.bins.assign(n_bins, 0.0);
    const auto& V = xi_mesh.vertices;
    for (int f = 0; f < static_cast<int>(xi_mesh.num_faces()); ++f) {
        const Face& F = xi_mesh.faces[f];
        const double area = xi_mesh.face_area(f);
        const double scale = area_mesh ? area_mesh->face_area(f) / area : 1.0;
        const double r0 = density.samples[F[0]], r1 = density.samples[F[1]], r2 = density.samples[F[2]];
        const int b0 = bin_of(angle_of(V[F[0]]), n_bins);
        const int b1 = bin_of(angle_of(V[F[1]]), n_bins);
        const int b2 = bin_of(angle_of(V[F[2]]), n_bins);
        if (b0 == b1 && b1 == b2) {
            p.bins[b0] += area * scale * (r0 + r1 + r2) / 3.0;
            continue;
        }
        const auto kids = subdivide(V[F[0]], V[F[1]], V[F[2]]);
        const auto rk = subdivide(r0, r1, r2);
        for (int k = 0; k < 4; ++k) {
            const double m = 0.25 * area * scale * (rk[k][0] + rk[k][1] + rk[k][2]) / 3.0;
            p.bins[bin_of(angle_of(centroid(kids[k])), n_bins)] += m;
        }
    }
    p.prefix_.assign(n_bins + 1, 0.0);
    for (int b = 0; b < n_bins; ++b) {
        p.prefix_[b + 1] = p.prefix_[b] + p.bins[b];
        if (p.bins[b] == 0.0) p.empty_bins.push_back(b);
    }
    p.total = p.prefix_[n_bins];
    return p;
}

double sector_mass(const WorkloadProfile& profile, double a, double b) {
    a = wrap_angle(a);
    b = wrap_angle(b);
    if (a == b) return 0.0;
    if (b > a) return profile.cumulative(b) - profile.cumulative(a);
    return profile.total - profile.cumulative(a) + profile.cumulative(b);
}

std::vector<double> sector_masses(const WorkloadProfile& profile, const std::vector<double>& psi) {
    const size_t n = psi.size();
    if (n == 1) return {profile.total};
    std::vector<double> m(n);
    for (size_t i = 0; i < n; ++i) m[i] = sector_mass(profile, psi[i], psi[(i + 1) % n]);
    return m;
}

double lyapunov_value(const std::vector<double>& masses) {
    if (masses.empty()) return 0.0;
    double total = 0.0;
    for (double m : masses) total += m;
    const double mean = total / masses.size();
    double v = 0.0;
    for (double m : masses) v += (m - mean) * (m - mean);
    return 0.5 * v;
}

double next_equal_mass_bar(const WorkloadProfile& profile, double psi, double target) {
    if (target < 0.0 || target >= profile.total) fail(ErrorKind::argument, "target mass outside [0, M)");
    double c = profile.cumulative(wrap_angle(psi)) + target;
    if (c >= profile.total) c -= profile.total;
    const int n = profile.n_bins();
    // First bin whose cumulative range reaches c.
    int b = 0;
    while (b < n - 1 && profile.cumulative((b + 1) * profile.width()) < c) ++b;
    const double start = profile.cumulative(b * profile.width());
    const double frac = profile.bins[b] > 0.0 ? (c - start) / profile.bins[b] : 0.0;
    return wrap_angle((b + std::clamp(frac, 0.0, 1.0)) * profile.width());
}

bool cyclically_ordered(const std::vector<double>& psi) {
    const size_t n = psi.size();
    for (double p : psi)
        if (!(p >= 0.0 && p < kTwoPi)) return false;
    if (n < 2) return true;
    double sum = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double g = wrap_angle(psi[(i + 1) % n] - psi[i]);
        if (!(g > 0.0)) return false;
        sum += g;
    }
    return std::abs(sum - kTwoPi) < 1e-9;
}

namespace {

// Returns false when the step would reorder bars.
bool try_partition_step(const std::vector<double>& psi, const WorkloadProfile& profile, double k_psi, double h,
                        const std::vector<char>& frozen, std::vector<double>& out) {
    const size_t n = psi.size();
    const auto m = sector_masses(profile, psi);
    std::vector<double> delta(n, 0.0);
    for (size_t i = 0; i < n; ++i) {
        if (!frozen.empty() && frozen[i]) continue;
        delta[i] = h * k_psi * (m[i] - m[(i + n - 1) % n]);
    }
    for (size_t i = 0; i < n; ++i) {
        const size_t j = (i + 1) % n;
        const double gap = wrap_angle(psi[j] - psi[i]) + delta[j] - delta[i];
        if (!(gap > 0.0 && gap < kTwoPi)) return false;
    }
    out.resize(n);
    for (size_t i = 0; i < n; ++i) out[i] = wrap_angle(psi[i] + delta[i]);
    return true;
}

void partition_substep(const std::vector<double>& psi, const WorkloadProfile& profile, double k_psi, double h,
                       const std::vector<char>& frozen, int depth, std::vector<double>& out) {
    if (try_partition_step(psi, profile, k_psi, h, frozen, out)) return;
    if (depth >= kMaxHalvings) fail(ErrorKind::integration, "partition bars would cross after maximal step halving");
    std::vector<double> mid;
    partition_substep(psi, profile, k_psi, 0.5 * h, frozen, depth + 1, mid);
    partition_substep(mid, profile, k_psi, 0.5 * h, frozen, depth + 1, out);
}

}  // namespace

std::vector<double> partition_step(const std::vector<double>& psi, const WorkloadProfile& profile, const Gains& gains,
                                   const std::vector<char>& frozen) {
    if (psi.size() < 2) return psi;
    if (!frozen.empty() && frozen.size() != psi.size()) fail(ErrorKind::argument, "frozen mask size mismatch");
    if (!cyclically_ordered(psi)) fail(ErrorKind::integration, "partition bars are not cyclically ordered");
    std::vector<double> out;
    partition_substep(psi, profile, gains.k_psi, gains.dt, frozen, 0, out);
    return out;
}

CoverageModel::CoverageModel(const MappingAtlas& atlas, const GeodesicGraph& graph, DensityField density, int n_bins)
    : atlas_(&atlas), graph_(&graph), density_(std::move(density)) {
    const TriMesh& xi = *atlas.image;
    const TriMesh& src = *atlas.source;
    if (graph.mesh().num_vertices() != xi.num_vertices() || graph.mesh().num_faces() != xi.num_faces())
        fail(ErrorKind::argument, "coverage graph must live on the annulus mesh");
    profile_ = angular_workload_profile(xi, density_, n_bins);
    profile_orig_ = angular_workload_profile(xi, density_, n_bins, &src);

    const auto& V = xi.vertices;
    const size_t nf = xi.num_faces();
    face_scale_.resize(nf);
    whole_.resize(nf);
    split_.resize(4 * nf);
    whole_targets_.resize(nf);
    split_targets_.resize(4 * nf);
    for (size_t f = 0; f < nf; ++f) {
        const Face& F = xi.faces[f];
        const Vec2 a = V[F[0]], b = V[F[1]], c = V[F[2]];
        face_scale_[f] = std::max({dist(a, b), dist(b, c), dist(c, a)});
        const double area = xi.face_area(static_cast<int>(f));
        const double area_orig = src.face_area(static_cast<int>(f));
        const double r0 = density_.samples[F[0]], r1 = density_.samples[F[1]], r2 = density_.samples[F[2]];
        const double rho = (r0 + r1 + r2) / 3.0;
        Piece& w = whole_[f];
        w.pos = (a + b + c) / 3.0;
        w.theta = angle_of(w.pos);
        w.w = rho * area;
        w.w_orig = rho * area_orig;
        whole_targets_[f] = graph.target(w.pos, static_cast<int>(f));
        const auto kids = subdivide(a, b, c);
        const auto rk = subdivide(r0, r1, r2);
        for (int k = 0; k < 4; ++k) {
            Piece& s = split_[4 * f + k];
            s.pos = centroid(kids[k]);
            s.theta = angle_of(s.pos);
            const double rk_mean = (rk[k][0] + rk[k][1] + rk[k][2]) / 3.0;
            s.w = 0.25 * area * rk_mean;
            s.w_orig = 0.25 * area_orig * rk_mean;
            split_targets_[4 * f + k] = graph.target(s.pos, static_cast<int>(f));
        }
    }

    std::unordered_map<long long, int> directed;
    const long long nv = static_cast<long long>(V.size());
    for (size_t f = 0; f < nf; ++f)
        for (int k = 0; k < 3; ++k) directed[xi.faces[f][k] * nv + xi.faces[f][(k + 1) % 3]] = static_cast<int>(f);
    for (const auto& loop : xi.boundary_loops)
        for (size_t i = 0; i < loop.size(); ++i) {
            const int a = loop[i], b = loop[(i + 1) % loop.size()];
            auto it = directed.find(a * nv + b);
            if (it == directed.end()) it = directed.find(b * nv + a);
            if (it != directed.end()) boundary_.push_back({a, b, it->second});
        }
}

int CoverageModel::sector_of(double theta, const std::vector<double>& psi) {
    const size_t n = psi.size();
    if (n <= 1) return 0;
    for (size_t i = 0; i < n; ++i) {
        const double span = wrap_angle(psi[(i + 1) % n] - psi[i]);
        if (wrap_angle(theta - psi[i]) < span) return static_cast<int>(i);
    }
    // Only reachable with coincident bars; fall back to the closest preceding bar.
    int best = 0;
    double gap = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < n; ++i) {
        const double g = wrap_angle(theta - psi[i]);
        if (g < gap) {
            gap = g;
            best = static_cast<int>(i);
        }
    }
    return best;
}

QuadratureRule CoverageModel::quadrature(const std::vector<double>& psi, const std::vector<Vec2>& agents) const {
    const TriMesh& xi = *atlas_->image;
    const auto& V = xi.vertices;
    const size_t nf = xi.num_faces();
    const int n = std::max<int>(1, static_cast<int>(psi.size()));
    QuadratureRule rule;
    rule.pts.reserve(nf + nf / 4);
    rule.by_sector.assign(n, {});
    auto push = [&](const Piece& pc, const TargetPoint* t, int sector) {
        QuadPoint q;
        q.pos = pc.pos;
        q.theta = pc.theta;
        q.w = pc.w;
        q.w_orig = pc.w_orig;
        q.sector = sector;
        q.target = t;
        rule.by_sector[sector].push_back(static_cast<int>(rule.pts.size()));
        rule.pts.push_back(q);
    };
    for (size_t f = 0; f < nf; ++f) {
        const Piece& w = whole_[f];
        const int s = sector_of(w.theta, psi);
        bool refine = false;
        if (psi.size() > 1) {
            const Face& F = xi.faces[f];
            for (int k = 0; k < 3 && !refine; ++k) refine = sector_of(angle_of(V[F[k]]), psi) != s;
        }
        const double reach = 2.0 * face_scale_[f];
        for (size_t a = 0; a < agents.size() && !refine; ++a) refine = dist(agents[a], w.pos) < reach;
        if (!refine) {
            push(w, &whole_targets_[f], s);
            continue;
        }
        for (int k = 0; k < 4; ++k) {
            const Piece& pc = split_[4 * f + k];
            push(pc, &split_targets_[4 * f + k], sector_of(pc.theta, psi));
        }
    }
    return rule;
}

AgentCost CoverageModel::agent_cost(const QuadratureRule& rule, int i, const Vec2& p, bool with_gradient) const {
    AgentCost out;
    if (i < 0 || i >= static_cast<int>(rule.by_sector.size())) fail(ErrorKind::argument, "agent index out of range");
    if (rule.by_sector[i].empty()) return out;
    const SourceField src = graph_->source(p);
    Vec2 g;
    for (int idx : rule.by_sector[i]) {
        const QuadPoint& q = rule.pts[idx];
        const PathSample s = src.to(*q.target);
        const double d2 = s.distance * s.distance;
        out.J += q.w * d2;
        out.J_orig += q.w_orig * d2;
        // d(d^2)/dp = -2 d * (metric-lowered unit direction leaving p)
        if (with_gradient && s.distance > 0.0) g -= s.first_dir * (2.0 * q.w * s.distance);
    }
    if (with_gradient) {
        const Mat2 G = graph_->metric(p);
        out.grad = G * g;
    }
    return out;
}

CostTotals CoverageModel::coverage_cost(const QuadratureRule& rule, const std::vector<Vec2>& agents) const {
    CostTotals t;
    const size_t n = rule.by_sector.size();
    if (agents.size() != n) fail(ErrorKind::argument, "agent count does not match the sector count");
    t.per_agent.resize(n);
    t.per_agent_orig.resize(n);
    for (size_t i = 0; i < n; ++i) {
        const AgentCost c = agent_cost(rule, static_cast<int>(i), agents[i], false);
        t.per_agent[i] = c.J;
        t.per_agent_orig[i] = c.J_orig;
        t.J += c.J;
        t.J_orig += c.J_orig;
    }
    return t;
}

Vec2 CoverageModel::cost_gradient(const QuadratureRule& rule, int i, const Vec2& p) const {
    return agent_cost(rule, i, p, true).grad;
}

Vec2 CoverageModel::control_input(const QuadratureRule& rule, int i, const Vec2& p, const Gains& gains) const {
    const Vec2 g = cost_gradient(rule, i, p);
    return graph_->metric(p).inverse() * g * -gains.k_p;
}

Vec2 CoverageModel::control_input_original(const Vec2& p, const Vec2& u) const {
    int face = -1;
    tau_inverse(*atlas_, p, &face);
    return atlas_->jacobian_inv[face] * u;
}

Vec2 CoverageModel::sector_mean(const QuadratureRule& rule, int i) const {
    Vec2 acc;
    double m = 0.0;
    for (int idx : rule.by_sector[i]) {
        acc += rule.pts[idx].pos * rule.pts[idx].w;
        m += rule.pts[idx].w;
    }
    if (!(m > 0.0)) fail(ErrorKind::argument, "sector " + std::to_string(i) + " carries no mass");
    return acc / m;
}

Vec2 CoverageModel::project_inside(const Vec2& p) const {
    if (graph_->contains(p)) return p;
    const TriMesh& xi = *atlas_->image;
    const auto& V = xi.vertices;
    double best = std::numeric_limits<double>::infinity();
    Vec2 foot;
    int face = -1;
    for (const BoundaryEdge& e : boundary_) {
        const Vec2 c = closest_point_on_segment(p, V[e.a], V[e.b]);
        const double d = dist(c, p);
        if (d < best) {
            best = d;
            foot = c;
            face = e.face;
        }
    }
    if (face < 0) fail(ErrorKind::domain, "annulus mesh has no boundary edges");
    const Vec2 inward = xi.face_centroid(face) - foot;
    for (double t = 1e-6; t <= 0.5; t *= 10.0) {
        const Vec2 q = foot + inward * t;
        if (graph_->contains(q)) return q;
    }
    return xi.face_centroid(face);
}

PartitionState CoverageModel::initial_state(const std::vector<double>& psi) const {
    if (psi.empty()) fail(ErrorKind::argument, "at least one agent is required");
    if (!cyclically_ordered(psi)) fail(ErrorKind::argument, "initial bars are not cyclically ordered");
    PartitionState st;
    st.psi = psi;
    const QuadratureRule rule = quadrature(psi, {});
    for (size_t i = 0; i < psi.size(); ++i) {
        const Vec2 p = project_inside(sector_mean(rule, static_cast<int>(i)));
        st.agents_xi.push_back(p);
        st.agents_orig.push_back(tau_inverse(*atlas_, p));
    }
    st.masses = masses(psi);
    st.projections.assign(psi.size(), 0);
    return st;
}

void CoverageModel::agent_step(PartitionState& state, const QuadratureRule& rule, const Gains& gains,
                               const std::vector<char>& moving) const {
    const size_t n = state.agents_xi.size();
    if (state.projections.size() != n) state.projections.assign(n, 0);
    std::vector<Vec2> next = state.agents_xi;
    for (size_t i = 0; i < n; ++i) {
        if (!moving.empty() && !moving[i]) continue;
        const Vec2 u = control_input(rule, static_cast<int>(i), state.agents_xi[i], gains);
        Vec2 q = state.agents_xi[i] + u * gains.dt;
        if (graph_->contains(q)) {
            state.projections[i] = 0;
        } else {
            q = project_inside(q);
            if (++state.projections[i] > kMaxProjections)
                fail(ErrorKind::progress, "agent " + std::to_string(i) + " kept leaving the domain");
        }
        next[i] = q;
    }
    for (size_t i = 0; i < n; ++i) {
        if (!(next[i] == state.agents_xi[i])) {
            state.agents_xi[i] = next[i];
            state.agents_orig[i] = tau_inverse(*atlas_, next[i]);
        }
    }
}

Vec2 CoverageModel::centroid_solve(const std::vector<double>& psi, int i, double tol, int* iterations) const {
    // The squared distance is smooth at the agent, so the unrefined rule is the objective throughout.
    const QuadratureRule rule = quadrature(psi, {});
    const Vec2 start = project_inside(sector_mean(rule, i));
    double mass = 0.0;
    for (int idx : rule.by_sector[i]) mass += rule.pts[idx].w;
    const double step0 = 1.0 / (2.0 * mass);

    Vec2 p = start;
    AgentCost cur = agent_cost(rule, i, p, true);
    int it = 0;
    for (; it < kCentroidIterations; ++it) {
        if (norm(cur.grad) < tol) break;
        const Vec2 dir = graph_->metric(p).inverse() * cur.grad * -1.0;
        const double slope = dot(cur.grad, dir);
        double s = step0;
        bool moved = false;
        for (int k = 0; k < 60; ++k, s *= 0.5) {
            const Vec2 q = p + dir * s;
            if (!graph_->contains(q)) continue;
            const AgentCost trial = agent_cost(rule, i, q, true);
            if (trial.J <= cur.J + 1e-4 * s * slope) {
                p = q;
                cur = trial;
                moved = true;
                break;
            }
        }
        if (!moved) break;
    }
    if (iterations) *iterations = it;
    if (!(norm(cur.grad) < tol))
        fail(ErrorKind::convergence, "centroid search for sector " + std::to_string(i) + " stalled with gradient " +
                                         std::to_string(norm(cur.grad)));
    return p;
}

CostTotals advance(const CoverageModel& model, PartitionState& state, const Gains& gains,
                   const std::vector<char>& frozen) {
    const QuadratureRule rule = model.quadrature(state.psi, state.agents_xi);
    const CostTotals before = model.coverage_cost(rule, state.agents_xi);
    model.agent_step(state, rule, gains);
    state.psi = partition_step(state.psi, model.profile(), gains, frozen);
    state.masses = model.masses(state.psi);
    state.time += gains.dt;
    return before;
}

CostTotals evaluate(const CoverageModel& model, const PartitionState& state) {
    return model.coverage_cost(model.quadrature(state.psi, state.agents_xi), state.agents_xi);
}

AngleCheck bar_angle_check(const MappingAtlas& atlas, const std::vector<double>& psi) {
    AngleCheck out;
    const TriMesh& xi = *atlas.image;
    const auto& V = xi.vertices;
    const BeltramiField mu = beltrami_coefficient(*atlas.source, V);
    out.sup_mu = mu.sup_norm();
    auto edge_key = [](int a, int b) { return (static_cast<std::uint64_t>(std::min(a, b)) << 32) | std::max(a, b); };
    std::unordered_map<std::uint64_t, int> edge_face;
    for (size_t f = 0; f < xi.num_faces(); ++f)
        for (int k = 0; k < 3; ++k) edge_face[edge_key(xi.faces[f][k], xi.faces[f][(k + 1) % 3])] = static_cast<int>(f);
    auto angle_between = [](const Vec2& a, const Vec2& b) { return std::atan2(std::abs(cross(a, b)), dot(a, b)); };
    for (double t : psi) {
        const Vec2 e{std::cos(t), std::sin(t)};
        for (size_t l = 0; l < xi.boundary_loops.size(); ++l) {
            const auto& loop = xi.boundary_loops[l];
            // Where the bar meets this boundary polygon.
            Vec2 edge;
            int hit_a = -1, hit_b = -1;
            bool found = false;
            for (size_t k = 0; k < loop.size() && !found; ++k) {
                const Vec2 a = V[loop[k]], b = V[loop[(k + 1) % loop.size()]];
                const Vec2 d = b - a;
                const double den = cross(e, d);
                if (den == 0.0) continue;
                const double s = cross(a, d) / den;
                const double u = cross(a, e) / den;
                if (s > 0.0 && u >= 0.0 && u <= 1.0) {
                    hit_a = loop[k];
                    hit_b = loop[(k + 1) % loop.size()];
                    edge = d;
                    found = true;
                }
            }
            if (!found) continue;
            // The bar enters the face owning the crossed edge, where the map is affine, so the
            // one-sided derivative of the inverse map along the bar is that face's inverse Jacobian.
            const int f = edge_face.at(edge_key(hit_a, hit_b));
            const Vec2 bar_orig = atlas.jacobian_inv[f] * e;
            const Vec2 edge_orig = atlas.jacobian_inv[f] * edge;
            const double dev = std::abs(angle_between(bar_orig, edge_orig) - angle_between(e, edge));
            const double local_mu = std::abs(mu.mu[f]);
            // A linear map with dilatation k turns a pair of lines by at most 2 asin(k).
            const double bound = 2.0 * std::asin(std::min(1.0, local_mu));
            out.max_deviation = std::max(out.max_deviation, dev);
            out.max_excess = std::max(out.max_excess, dev - bound);
        }
    }
    if (psi.empty()) out.max_excess = 0.0;
    return out;
}

}  // namespace qcov
