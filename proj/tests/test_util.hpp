#pragma once

// Small structured meshes and random helpers shared by the unit tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "qcov/geometry.hpp"
#include "qcov/mesh.hpp"

namespace testutil {

using qcov::Face;
using qcov::TriMesh;
using qcov::Vec2;

inline std::mt19937_64 rng(std::uint64_t seed) { return std::mt19937_64(seed); }

inline double uniform(std::mt19937_64& g, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(g);
}

inline void add_ccw(std::vector<Face>& faces, const std::vector<Vec2>& v, int a, int b, int c) {
    if (qcov::orient2d(v[a], v[b], v[c]) < 0) std::swap(b, c);
    faces.push_back({a, b, c});
}

inline TriMesh finish(std::vector<Vec2> vertices, std::vector<Face> faces) {
    TriMesh m;
    m.vertices = std::move(vertices);
    m.faces = std::move(faces);
    m.boundary_loops = qcov::extract_boundary_loops(m.faces, m.vertices);
    m.vertex_tags = qcov::effective_tags(m);
    return m;
}

// [0,w] x [0,h] on an nx x ny cell grid; vertex (i, j) has id j*(nx+1)+i.
inline TriMesh grid_rect(double w, double h, int nx, int ny) {
    std::vector<Vec2> v;
    for (int j = 0; j <= ny; ++j)
        for (int i = 0; i <= nx; ++i) v.push_back({w * i / nx, h * j / ny});
    std::vector<Face> f;
    auto id = [&](int i, int j) { return j * (nx + 1) + i; };
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            // Alternate the diagonal so the grid has no preferred direction.
            if ((i + j) % 2 == 0) {
                add_ccw(f, v, id(i, j), id(i + 1, j), id(i + 1, j + 1));
                add_ccw(f, v, id(i, j), id(i + 1, j + 1), id(i, j + 1));
            } else {
                add_ccw(f, v, id(i, j), id(i + 1, j), id(i, j + 1));
                add_ccw(f, v, id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            }
        }
    return finish(std::move(v), std::move(f));
}

inline int grid_id(int nx, int i, int j) { return j * (nx + 1) + i; }

// Triangulates the band between two closed rings whose vertices are sorted by angle.
inline void stitch_rings(std::vector<Face>& f, const std::vector<Vec2>& v, const std::vector<int>& a,
                         const std::vector<int>& b) {
    auto ang = [&](int id, double floor) {
        double t = std::atan2(v[id].y, v[id].x);
        while (t < floor - 1e-12) t += qcov::kTwoPi;
        return t;
    };
    if (a.size() == 1) {
        for (size_t j = 0; j < b.size(); ++j) add_ccw(f, v, a[0], b[j], b[(j + 1) % b.size()]);
        return;
    }
    const double base = std::min(ang(a[0], -4.0), ang(b[0], -4.0));
    size_t i = 0, j = 0;
    while (i < a.size() || j < b.size()) {
        const double ta = i < a.size() ? ang(a[(i + 1) % a.size()], base) + (i + 1 == a.size() ? qcov::kTwoPi : 0.0)
                                       : 1e300;
        const double tb = j < b.size() ? ang(b[(j + 1) % b.size()], base) + (j + 1 == b.size() ? qcov::kTwoPi : 0.0)
                                       : 1e300;
        if (ta <= tb) {
            add_ccw(f, v, a[i % a.size()], a[(i + 1) % a.size()], b[j % b.size()]);
            ++i;
        } else {
            add_ccw(f, v, a[i % a.size()], b[(j + 1) % b.size()], b[j % b.size()]);
            ++j;
        }
    }
}

// Polar grid annulus; ring k sits at r_in + (r_out - r_in) k / (rings - 1) with n_theta vertices,
// alternate rings shifted by half a step.
inline TriMesh ring_annulus(double r_in, double r_out, int n_theta, int rings) {
    std::vector<Vec2> v;
    std::vector<std::vector<int>> ring(rings);
    for (int k = 0; k < rings; ++k) {
        const double r = r_in + (r_out - r_in) * k / (rings - 1);
        const double shift = (k % 2) * 0.5;
        for (int i = 0; i < n_theta; ++i) {
            const double t = qcov::kTwoPi * (i + shift) / n_theta;
            ring[k].push_back(static_cast<int>(v.size()));
            v.push_back({r * std::cos(t), r * std::sin(t)});
        }
    }
    std::vector<Face> f;
    for (int k = 0; k + 1 < rings; ++k) stitch_rings(f, v, ring[k], ring[k + 1]);
    return finish(std::move(v), std::move(f));
}

// Unit disk: centre vertex plus rings of 6k vertices.
inline TriMesh ring_disk(int rings, double radius = 1.0) {
    std::vector<Vec2> v{{0.0, 0.0}};
    std::vector<std::vector<int>> ring{{0}};
    for (int k = 1; k <= rings; ++k) {
        const double r = radius * k / rings;
        std::vector<int> ids;
        for (int i = 0; i < 6 * k; ++i) {
            const double t = qcov::kTwoPi * i / (6 * k);
            ids.push_back(static_cast<int>(v.size()));
            v.push_back({r * std::cos(t), r * std::sin(t)});
        }
        ring.push_back(ids);
    }
    std::vector<Face> f;
    for (int k = 0; k < rings; ++k) stitch_rings(f, v, ring[k], ring[k + 1]);
    return finish(std::move(v), std::move(f));
}

inline Vec2 rotate(const Vec2& p, double a) {
    return {std::cos(a) * p.x - std::sin(a) * p.y, std::sin(a) * p.x + std::cos(a) * p.y};
}

// Uniform point inside the mesh, by rejection against its boundary loops.
inline Vec2 random_interior(std::mt19937_64& g, const TriMesh& m) {
    Vec2 lo = m.vertices[0], hi = lo;
    for (const auto& p : m.vertices) {
        lo = {std::min(lo.x, p.x), std::min(lo.y, p.y)};
        hi = {std::max(hi.x, p.x), std::max(hi.y, p.y)};
    }
    for (;;) {
        const Vec2 q{uniform(g, lo.x, hi.x), uniform(g, lo.y, hi.y)};
        if (qcov::locate_point(m, q)) return q;
    }
}

}  // namespace testutil
