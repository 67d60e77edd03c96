#include "qcov/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <fstream>
#include <limits>

#include "qcov/errors.hpp"

namespace qcov {

const char* to_string(Space s) { return s == Space::annulus ? "annulus" : "original"; }

namespace {

constexpr double kCanvas = 800.0;
constexpr double kMargin = 20.0;

class Canvas {
public:
    explicit Canvas(const std::vector<Vec2>& pts) {
        Vec2 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
        Vec2 hi = -lo;
        for (const Vec2& p : pts) {
            lo = {std::min(lo.x, p.x), std::min(lo.y, p.y)};
            hi = {std::max(hi.x, p.x), std::max(hi.y, p.y)};
        }
        lo_ = lo;
        scale_ = (kCanvas - 2 * kMargin) / std::max({hi.x - lo.x, hi.y - lo.y, 1e-12});
        top_ = hi.y;
    }
    Vec2 map(const Vec2& p) const { return {kMargin + (p.x - lo_.x) * scale_, kMargin + (top_ - p.y) * scale_}; }
    double scale() const { return scale_; }

private:
    Vec2 lo_;
    double top_ = 0.0;
    double scale_ = 1.0;
};

__attribute__((format(printf, 2, 3))) void append(std::string& s, const char* fmt, ...) {
    char buf[256];
    va_list ap;
    va_start(ap, fmt);
    const int n = std::vsnprintf(buf, sizeof buf, fmt, ap);
    va_end(ap);
    s.append(buf, static_cast<size_t>(std::max(0, std::min<int>(n, sizeof buf - 1))));
}

void append_point(std::string& s, const Vec2& p) { append(s, "%.3f,%.3f ", p.x, p.y); }

// Points along the bar at angle psi from the inner to the outer circle, kept inside the mesh.
std::vector<Vec2> bar_polyline(const MappingAtlas& atlas, double psi, Space space) {
    const double r0 = atlas.inner_radius(), r1 = atlas.outer_radius();
    const Vec2 dir{std::cos(psi), std::sin(psi)};
    std::vector<Vec2> out;
    const int n = 48;
    int hint = -1;
    for (int k = 0; k <= n; ++k) {
        const double s = 1e-6 + (1.0 - 2e-6) * k / n;
        const Vec2 q = dir * (r0 + (r1 - r0) * s);
        const auto loc = locate_in_image(atlas, q, hint);
        if (!loc) continue;
        hint = loc->face;
        out.push_back(space == Space::annulus ? q : barycentric_reconstruct(*atlas.source, atlas.source->vertices, *loc));
    }
    return out;
}

}  // namespace

std::string svg_snapshot(const MappingAtlas& atlas, const SnapshotView& view, Space space) {
    const TriMesh& mesh = space == Space::annulus ? *atlas.image : *atlas.source;
    const Canvas cv(mesh.vertices);
    std::string s;
    append(s, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" viewBox=\"0 0 %.0f %.0f\">\n",
           kCanvas, kCanvas, kCanvas, kCanvas);
    append(s, "<title>%s space, t=%.6g</title>\n", to_string(space), view.time);
    append(s, "<rect width=\"100%%\" height=\"100%%\" fill=\"white\"/>\n");

    const bool shade = view.density.size() == mesh.num_vertices();
    double dlo = 0.0, dhi = 1.0;
    if (shade) {
        dlo = *std::min_element(view.density.begin(), view.density.end());
        dhi = *std::max_element(view.density.begin(), view.density.end());
    }
    s += "<g class=\"mesh\" stroke=\"#b0b0b0\" stroke-width=\"0.3\">\n";
    for (size_t f = 0; f < mesh.num_faces(); ++f) {
        const Face& F = mesh.faces[f];
        int grey = 240;
        if (shade && dhi > dlo) {
            const double rho = (view.density[F[0]] + view.density[F[1]] + view.density[F[2]]) / 3.0;
            grey = static_cast<int>(std::lround(245.0 - 150.0 * (rho - dlo) / (dhi - dlo)));
        }
        s += "<polygon points=\"";
        for (int k = 0; k < 3; ++k) append_point(s, cv.map(mesh.vertices[F[k]]));
        s.pop_back();
        append(s, "\" fill=\"rgb(%d,%d,255)\"/>\n", grey, grey);
    }
    s += "</g>\n";

    s += "<g class=\"boundary\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\">\n";
    for (const auto& loop : mesh.boundary_loops) {
        s += "<polygon points=\"";
        for (int v : loop) append_point(s, cv.map(mesh.vertices[v]));
        if (!loop.empty()) s.pop_back();
        s += "\"/>\n";
    }
    s += "</g>\n";

    for (size_t i = 0; i < view.psi.size(); ++i) {
        const auto line = bar_polyline(atlas, view.psi[i], space);
        append(s, "<polyline class=\"bar\" data-agent=\"%zu\" fill=\"none\" stroke=\"#1f4fd0\" stroke-width=\"2\" points=\"", i + 1);
        for (const Vec2& p : line) append_point(s, cv.map(p));
        if (!line.empty()) s.pop_back();
        s += "\"/>\n";
    }
    for (size_t i = 0; i < view.centroids.size(); ++i) {
        const Vec2 c = cv.map(view.centroids[i]);
        append(s, "<path class=\"centroid\" data-agent=\"%zu\" d=\"M%.3f %.3fl6 6m-6 0l6 -6\" stroke=\"#208020\" stroke-width=\"2\"/>\n",
               i + 1, c.x - 3.0, c.y - 3.0);
    }
    for (size_t i = 0; i < view.agents.size(); ++i) {
        const Vec2 c = cv.map(view.agents[i]);
        append(s, "<circle class=\"agent\" data-agent=\"%zu\" cx=\"%.3f\" cy=\"%.3f\" r=\"6\" fill=\"#d02020\" stroke=\"black\"/>\n",
               i + 1, c.x, c.y);
    }
    s += "</svg>\n";
    return s;
}

void emit_svg(const MappingAtlas& atlas, const SnapshotView& view, Space space, const std::string& path) {
    const std::string text = svg_snapshot(atlas, view, space);
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io, "cannot write " + path);
    out << text;
    if (!out) fail(ErrorKind::io, "failed writing " + path);
}

}  // namespace qcov
