#include "qcov/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <string>

#include "qcov/errors.hpp"

namespace qcov {

double BeltramiField::sup_norm() const {
    double s = 0.0;
    for (const auto& m : mu) s = std::max(s, std::abs(m));
    return s;
}

double BeltramiField::l2_norm(const std::vector<double>& weights) const {
    if (mu.empty()) return 0.0;
    double num = 0.0, den = 0.0;
    for (size_t f = 0; f < mu.size(); ++f) {
        const double w = weights.empty() ? 1.0 : weights[f];
        num += w * std::norm(mu[f]);
        den += w;
    }
    return den > 0 ? std::sqrt(num / den) : 0.0;
}

kernels::AffineOut face_affine_maps(const TriMesh& mesh, const std::vector<Vec2>& images) {
    if (images.size() != mesh.vertices.size()) fail(ErrorKind::argument, "image count does not match vertex count");
    kernels::AffineOut out;
    out.resize(mesh.faces.size());
    if (!mesh.faces.empty())
        kernels::affine_beltrami(gather_faces(mesh, mesh.vertices), gather_faces(mesh, images), out);
    return out;
}

SparseMatrix cotangent_laplacian(const TriMesh& mesh) {
    const int n = static_cast<int>(mesh.vertices.size());
    const double mean = mesh.mean_face_area();
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(mesh.faces.size() * 12);
    for (int f = 0; f < static_cast<int>(mesh.faces.size()); ++f) {
        const Face& t = mesh.faces[f];
        const double area = mesh.face_area(f);
        if (!(area > 1e-12 * mean)) fail(ErrorKind::numerical, "degenerate face " + std::to_string(f));
        for (int k = 0; k < 3; ++k) {
            // Angle at corner k is opposite the edge (k+1, k+2).
            const Vec2& o = mesh.vertices[t[k]];
            const Vec2 u = mesh.vertices[t[(k + 1) % 3]] - o;
            const Vec2 v = mesh.vertices[t[(k + 2) % 3]] - o;
            const double w = 0.5 * dot(u, v) / cross(u, v);
            const int i = t[(k + 1) % 3], j = t[(k + 2) % 3];
            trips.emplace_back(i, j, -w);
            trips.emplace_back(j, i, -w);
            trips.emplace_back(i, i, w);
            trips.emplace_back(j, j, w);
        }
    }
    SparseMatrix L(n, n);
    L.setFromTriplets(trips.begin(), trips.end());
    L.makeCompressed();
    return L;
}

std::vector<Vec2> harmonic_disk_map(const TriMesh& disk) {
    if (disk.boundary_loops.size() != 1)
        fail(ErrorKind::precondition, "disk map needs exactly one boundary loop");
    const auto& loop = disk.boundary_loops[0];
    const size_t nb = loop.size();
    std::vector<double> s(nb + 1, 0.0);
    for (size_t i = 0; i < nb; ++i) s[i + 1] = s[i] + dist(disk.vertices[loop[i]], disk.vertices[loop[(i + 1) % nb]]);
    LinearConstraints cx, cy;
    for (size_t i = 0; i < nb; ++i) {
        const double th = kTwoPi * s[i] / s[nb];
        cx.fixed.push_back({loop[i], std::cos(th)});
        cy.fixed.push_back({loop[i], std::sin(th)});
    }
    const SparseMatrix L = cotangent_laplacian(disk);
    const std::vector<double> zero(disk.vertices.size(), 0.0);
    const auto x = solve_constrained(L, zero, cx);
    const auto y = solve_constrained(L, zero, cy);
    std::vector<Vec2> out(x.size());
    for (size_t i = 0; i < x.size(); ++i) out[i] = {x[i], y[i]};
    // Boundary values come back from the solver unchanged; snap the radius anyway.
    for (int v : loop) out[v] = out[v] / norm(out[v]);
    return out;
}

double harmonic_residual(const TriMesh& disk, const std::vector<Vec2>& images) {
    const SparseMatrix L = cotangent_laplacian(disk);
    const int n = static_cast<int>(images.size());
    Eigen::VectorXd x(n), y(n);
    for (int i = 0; i < n; ++i) {
        x[i] = images[i].x;
        y[i] = images[i].y;
    }
    const Eigen::VectorXd rx = L * x, ry = L * y;
    std::vector<char> on_boundary(n, 0);
    for (const auto& loop : disk.boundary_loops)
        for (int v : loop) on_boundary[v] = 1;
    double res = 0.0, diag = 0.0;
    int cnt = 0;
    for (int i = 0; i < n; ++i) {
        diag += std::abs(L.coeff(i, i));
        if (on_boundary[i]) continue;
        res = std::max(res, std::hypot(rx[i], ry[i]));
        ++cnt;
    }
    diag /= std::max(1, n);
    return cnt ? res / diag : 0.0;
}

BeltramiField beltrami_coefficient(const TriMesh& mesh, const std::vector<Vec2>& images) {
    const auto a = face_affine_maps(mesh, images);
    BeltramiField b;
    b.mu.resize(mesh.faces.size());
    for (size_t f = 0; f < mesh.faces.size(); ++f) {
        const double dr = a.ja[f] + a.jd[f], di = a.jc[f] - a.jb[f];
        if (dr == 0.0 && di == 0.0)
            fail(ErrorKind::numerical, "conformality singularity: zero complex derivative on face " + std::to_string(f));
        if (!std::isfinite(a.mu_re[f]) || !std::isfinite(a.mu_im[f]))
            fail(ErrorKind::numerical, "non-finite Beltrami coefficient on face " + std::to_string(f));
        b.mu[f] = {a.mu_re[f], a.mu_im[f]};
    }
    return b;
}

SparseMatrix beltrami_operator(const TriMesh& mesh, const BeltramiField& mu) {
    if (mu.mu.size() != mesh.faces.size()) fail(ErrorKind::argument, "Beltrami field size does not match face count");
    const double sup = mu.sup_norm();
    if (!(sup < 1.0)) fail(ErrorKind::ellipticity, "sup |mu| = " + std::to_string(sup) + " is not below 1");
    const int n = static_cast<int>(mesh.vertices.size());
    const double mean = mesh.mean_face_area();
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(mesh.faces.size() * 9);
    for (int f = 0; f < static_cast<int>(mesh.faces.size()); ++f) {
        const Face& t = mesh.faces[f];
        const double area = mesh.face_area(f);
        if (!(area > 1e-12 * mean)) fail(ErrorKind::numerical, "degenerate face " + std::to_string(f));
        const double re = mu.mu[f].real(), im = mu.mu[f].imag();
        const double den = 1.0 - re * re - im * im;
        const double a1 = ((re - 1) * (re - 1) + im * im) / den;
        const double a2 = -2.0 * im / den;
        const double a3 = ((re + 1) * (re + 1) + im * im) / den;
        Vec2 g[3];
        for (int k = 0; k < 3; ++k) {
            const Vec2 e = mesh.vertices[t[(k + 2) % 3]] - mesh.vertices[t[(k + 1) % 3]];
            g[k] = Vec2{-e.y, e.x} / (2.0 * area);
        }
        for (int i = 0; i < 3; ++i) {
            const Vec2 Ag{a1 * g[i].x + a2 * g[i].y, a2 * g[i].x + a3 * g[i].y};
            for (int j = 0; j < 3; ++j) trips.emplace_back(t[i], t[j], area * dot(Ag, g[j]));
        }
    }
    SparseMatrix K(n, n);
    K.setFromTriplets(trips.begin(), trips.end());
    K.makeCompressed();
    return K;
}

std::vector<Vec2> lbs_solve(const TriMesh& mesh, const BeltramiField& mu, const BoundarySpec& spec) {
    const SparseMatrix K = beltrami_operator(mesh, mu);
    const std::vector<double> zero(mesh.vertices.size(), 0.0);
    const auto x = solve_constrained(K, zero, spec.x);
    const auto y = solve_constrained(K, zero, spec.y);
    std::vector<Vec2> out(x.size());
    for (size_t i = 0; i < x.size(); ++i) out[i] = {x[i], y[i]};
    return out;
}

double length_distortion(const TriMesh& mesh, const std::vector<Vec2>& unit_images, double L) {
    std::vector<Vec2> img(unit_images.size());
    for (size_t i = 0; i < img.size(); ++i) img[i] = {L * unit_images[i].x, unit_images[i].y};
    const auto a = face_affine_maps(mesh, img);
    double num = 0.0, den = 0.0;
    for (size_t f = 0; f < mesh.faces.size(); ++f) {
        const double w = std::abs(mesh.face_area(static_cast<int>(f)));
        double m2 = a.mu_re[f] * a.mu_re[f] + a.mu_im[f] * a.mu_im[f];
        if (!std::isfinite(m2)) m2 = 1.0;
        num += w * m2;
        den += w;
    }
    return den > 0 ? std::sqrt(num / den) : 0.0;
}

double optimize_length(const std::vector<std::pair<double, double>>& lengths_and_norms) {
    if (lengths_and_norms.empty()) fail(ErrorKind::argument, "no candidate lengths");
    double bestL = 0.0, bestN = std::numeric_limits<double>::infinity();
    bool have = false;
    for (const auto& [L, nrm] : lengths_and_norms) {
        if (!std::isfinite(nrm)) fail(ErrorKind::argument, "candidate norm is not finite");
        if (!have || nrm < bestN || (nrm == bestN && L < bestL)) {
            bestL = L;
            bestN = nrm;
            have = true;
        }
    }
    return bestL;
}

RectangularMap rectangular_map(const TriMesh& disk, const QuadCorners& corners,
                               const std::vector<std::pair<int, int>>& x_ties, const LengthSearch& search) {
    if (disk.boundary_loops.size() != 1) fail(ErrorKind::precondition, "rectangular map needs a topological disk");
    const auto& loop = disk.boundary_loops[0];
    const int nb = static_cast<int>(loop.size());
    auto pos = [&](int v) {
        const auto it = std::find(loop.begin(), loop.end(), v);
        if (v < 0 || it == loop.end()) fail(ErrorKind::constraint, "corner vertex " + std::to_string(v) + " is not on the boundary");
        return static_cast<int>(it - loop.begin());
    };
    const int p00 = pos(corners.c00), pL0 = pos(corners.cL0), pL1 = pos(corners.cL1), p01 = pos(corners.c01);
    auto rel = [&](int p) { return ((p - p00) % nb + nb) % nb; };
    if (!(rel(pL0) > 0 && rel(pL1) > rel(pL0) && rel(p01) > rel(pL1)))
        fail(ErrorKind::constraint, "corners are not in counter-clockwise boundary order");

    BoundarySpec spec;
    for (int k = 0; k < nb; ++k) {
        const int r = rel(k);
        const int v = loop[k];
        if (r <= rel(pL0)) spec.y.fixed.push_back({v, 0.0});
        if (r >= rel(pL0) && r <= rel(pL1)) spec.x.fixed.push_back({v, 1.0});
        if (r >= rel(pL1) && r <= rel(p01)) spec.y.fixed.push_back({v, 1.0});
        if (r >= rel(p01) || r == 0) spec.x.fixed.push_back({v, 0.0});
    }
    for (const auto& [a, b] : x_ties) spec.x.ties.push_back({a, b, 0.0});

    RectangularMap out;
    // Solve in the disk chart with the dilatation of the inverse disk map; fall back to the
    // source chart (zero dilatation) if the disk chart folds.
    bool solved = false;
    try {
        const auto H = harmonic_disk_map(disk);
        if (count_flipped_faces(disk, H) == 0) {
            const TriMesh disk_chart = disk.with_vertices(H);
            const BeltramiField mu_inv = beltrami_coefficient(disk_chart, disk.vertices);
            if (mu_inv.sup_norm() < 1.0) {
                out.unit_images = lbs_solve(disk_chart, mu_inv, spec);
                solved = true;
            }
        }
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::ellipticity && e.kind() != ErrorKind::numerical) throw;
    }
    if (!solved) {
        BeltramiField zero;
        zero.mu.assign(disk.faces.size(), Complex(0.0, 0.0));
        out.unit_images = lbs_solve(disk, zero, spec);
        out.used_disk_chart = false;
    }

    // Golden-section search on the conformal module.
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = search.lo, b = search.hi;
    auto eval = [&](double L) {
        const double n = length_distortion(disk, out.unit_images, L);
        out.samples.push_back({L, n});
        return n;
    };
    double c = b - invphi * (b - a), d = a + invphi * (b - a);
    double fc = eval(c), fd = eval(d);
    while (b - a > search.tol) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = eval(d);
        }
    }
    eval(0.5 * (a + b));
    out.L = optimize_length(out.samples);
    out.images.resize(out.unit_images.size());
    for (size_t i = 0; i < out.images.size(); ++i) out.images[i] = {out.L * out.unit_images[i].x, out.unit_images[i].y};
    out.mu = beltrami_coefficient(disk, out.images);
    return out;
}

Vec2 exponential_point(const Vec2& p, double L_star) {
    const double r = std::exp(kTwoPi * (p.x - L_star));
    const double t = kTwoPi * p.y;
    return {r * std::cos(t), r * std::sin(t)};
}

std::vector<Vec2> exponential_annulus_map(const std::vector<Vec2>& rect_images, double L_star) {
    std::vector<Vec2> out(rect_images.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = exponential_point(rect_images[i], L_star);
    return out;
}

CorrectionResult quasiconformal_correction(const SlicedMesh& sliced, const std::vector<Vec2>& annulus_images,
                                           double L_star, double tol_map) {
    const TriMesh& S = sliced.mesh;
    const int n = static_cast<int>(S.vertices.size());
    if (static_cast<int>(annulus_images.size()) != n) fail(ErrorKind::argument, "image count does not match vertex count");
    if (sliced.v1 < 0 || sliced.v1 >= n) fail(ErrorKind::argument, "sliced mesh has no seam start");
    CorrectionResult res;
    res.sup_before = beltrami_coefficient(S, annulus_images).sup_norm();

    // Lift to the logarithmic chart, unwrapping the angle across the disk.
    std::vector<Vec2> W(n);
    std::vector<char> seen(n, 0);
    const auto nb = vertex_neighbors(S);
    auto raw = [&](int v) {
        const Vec2& z = annulus_images[v];
        return Vec2{std::log(norm(z)) / kTwoPi + L_star, std::atan2(z.y, z.x) / kTwoPi};
    };
    std::deque<int> queue{sliced.v1};
    W[sliced.v1] = raw(sliced.v1);
    seen[sliced.v1] = 1;
    while (!queue.empty()) {
        const int u = queue.front();
        queue.pop_front();
        for (int v : nb[u]) {
            if (seen[v]) continue;
            Vec2 w = raw(v);
            w.y += std::round(W[u].y - w.y);
            W[v] = w;
            seen[v] = 1;
            queue.push_back(v);
        }
    }
    if (std::find(seen.begin(), seen.end(), 0) != seen.end()) fail(ErrorKind::topology, "sliced mesh is disconnected");

    const TriMesh log_chart = S.with_vertices(W);
    const BeltramiField target = beltrami_coefficient(log_chart, S.vertices);

    const auto tags = effective_tags(S);
    BoundarySpec spec;
    for (int v = 0; v < n; ++v) {
        if (tags[v] == VertexTag::inner_boundary) spec.x.fixed.push_back({v, 0.0});
        if (tags[v] == VertexTag::outer_boundary) spec.x.fixed.push_back({v, L_star});
    }
    for (const auto& [lo, up] : sliced.seam_pairs) {
        spec.x.ties.push_back({lo, up, 0.0});
        spec.y.ties.push_back({lo, up, 1.0});
    }
    spec.y.fixed.push_back({sliced.v1, 0.0});
    const auto corrected = lbs_solve(log_chart, target, spec);
    res.sliced_images = exponential_annulus_map(corrected, L_star);
    res.sup_after = beltrami_coefficient(S, res.sliced_images).sup_norm();

    int n_orig = 0;
    for (int p : sliced.provenance) n_orig = std::max(n_orig, p + 1);
    res.merged_images.assign(n_orig, Vec2{});
    std::vector<char> have(n_orig, 0);
    for (int v = 0; v < n; ++v) {
        const int p = sliced.provenance[v];
        if (v == p || !have[p]) {
            res.merged_images[p] = res.sliced_images[v];
            have[p] = 1;
        }
    }
    for (int v = 0; v < n; ++v) {
        res.seam_gap = std::max(res.seam_gap, dist(res.sliced_images[v], res.merged_images[sliced.provenance[v]]));
    }
    if (res.seam_gap > tol_map)
        fail(ErrorKind::seam, "seam copies differ by " + std::to_string(res.seam_gap) + " after correction");
    return res;
}

}  // namespace qcov
