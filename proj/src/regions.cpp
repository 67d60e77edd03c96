#include "qcov/regions.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "qcov/errors.hpp"

namespace qcov {

namespace {

// Resample a dense closed curve at n points of equal arc length.
std::vector<Vec2> resample_closed(const std::vector<Vec2>& dense, int n) {
    const size_t m = dense.size();
    std::vector<double> s(m + 1, 0.0);
    for (size_t i = 0; i < m; ++i) s[i + 1] = s[i] + dist(dense[i], dense[(i + 1) % m]);
    std::vector<Vec2> out;
    out.reserve(n);
    size_t seg = 0;
    for (int k = 0; k < n; ++k) {
        const double target = s[m] * k / n;
        while (seg + 1 < m && s[seg + 1] <= target) ++seg;
        const double len = s[seg + 1] - s[seg];
        const double t = len > 0 ? (target - s[seg]) / len : 0.0;
        out.push_back(dense[seg] + (dense[(seg + 1) % m] - dense[seg]) * t);
    }
    return out;
}

double perimeter(const std::vector<Vec2>& loop) {
    double s = 0.0;
    for (size_t i = 0; i < loop.size(); ++i) s += dist(loop[i], loop[(i + 1) % loop.size()]);
    return s;
}

std::vector<Vec2> sample_curve(const std::function<Vec2(double)>& f, int dense = 4096) {
    std::vector<Vec2> out(dense);
    for (int i = 0; i < dense; ++i) out[i] = f(kTwoPi * i / dense);
    return out;
}

// Square boundary with corners kept exactly.
std::vector<Vec2> square_loop(double half, int per_side) {
    std::vector<Vec2> out;
    const Vec2 c[4] = {{-half, -half}, {half, -half}, {half, half}, {-half, half}};
    for (int s = 0; s < 4; ++s) {
        for (int k = 0; k < per_side; ++k) out.push_back(c[s] + (c[(s + 1) % 4] - c[s]) * (double(k) / per_side));
    }
    return out;
}

std::vector<Vec2> serpentine(double amp, double half_len, double thick) {
    // Centre line y = amp sin(pi x / half_len) on [-half_len, half_len], offset on both sides, round caps.
    const double w = kPi / half_len;
    auto centre = [&](double x) { return Vec2{x, amp * std::sin(w * x)}; };
    auto normal = [&](double x) {
        const Vec2 t{1.0, amp * w * std::cos(w * x)};
        return Vec2{-t.y, t.x} / norm(t);
    };
    std::vector<Vec2> out;
    const int n = 2000;
    for (int i = 0; i <= n; ++i) {  // lower side, left to right
        const double x = -half_len + 2 * half_len * i / n;
        out.push_back(centre(x) - normal(x) * thick);
    }
    auto cap = [&](double x, double sign) {
        const Vec2 nrm = normal(x) * sign;
        const Vec2 tan{nrm.y, -nrm.x};
        for (int i = 1; i < 200; ++i) {
            const double a = kPi * i / 200;
            out.push_back(centre(x) - nrm * (thick * std::cos(a)) + tan * (thick * std::sin(a)));
        }
    };
    cap(half_len, 1.0);
    for (int i = n; i >= 0; --i) {  // upper side, right to left
        const double x = -half_len + 2 * half_len * i / n;
        out.push_back(centre(x) + normal(x) * thick);
    }
    cap(-half_len, -1.0);
    return out;
}

}  // namespace

const std::vector<std::string>& region_generators() {
    static const std::vector<std::string> names{"annulus", "square_hole", "serpentine"};
    return names;
}

ParamMap default_region_params(const std::string& generator) {
    if (generator == "annulus") return {{"r_in", 0.4}, {"r_out", 1.0}};
    if (generator == "square_hole") return {{"half", 1.0}, {"hole_half", 0.35}};
    if (generator == "serpentine")
        return {{"wobble3", 0.12}, {"wobble5", 0.08}, {"hole_amp", 0.12}, {"hole_half_len", 0.5}, {"hole_thick", 0.07}};
    fail(ErrorKind::config, "unknown region generator '" + generator + "'");
}

RegionGeometry region_geometry(const std::string& generator, const ParamMap& given, int target_vertices) {
    ParamMap p = default_region_params(generator);
    for (const auto& [k, v] : given) {
        if (!p.count(k)) fail(ErrorKind::config, "region.params." + k + " is not a parameter of '" + generator + "'");
        p[k] = v;
    }
    if (target_vertices < 16) fail(ErrorKind::config, "region.target_vertices must be at least 16");
    std::vector<Vec2> outer_dense, inner_dense;
    double area = 0.0;
    if (generator == "annulus") {
        const double ri = p["r_in"], ro = p["r_out"];
        if (!(ri > 0 && ro > ri)) fail(ErrorKind::config, "annulus needs 0 < r_in < r_out");
        outer_dense = sample_curve([&](double t) { return Vec2{ro * std::cos(t), ro * std::sin(t)}; });
        inner_dense = sample_curve([&](double t) { return Vec2{ri * std::cos(t), ri * std::sin(t)}; });
        area = kPi * (ro * ro - ri * ri);
    } else if (generator == "square_hole") {
        const double a = p["half"], b = p["hole_half"];
        if (!(b > 0 && a > b)) fail(ErrorKind::config, "square_hole needs 0 < hole_half < half");
        area = 4 * (a * a - b * b);
        const double h = std::sqrt(area / (0.866 * target_vertices));
        RegionGeometry g;
        g.outer = square_loop(a, std::max(2, static_cast<int>(std::lround(2 * a / h))));
        g.inner = square_loop(b, std::max(2, static_cast<int>(std::lround(2 * b / h))));
        return g;
    } else {
        const double w3 = p["wobble3"], w5 = p["wobble5"];
        outer_dense = sample_curve([&](double t) {
            const double r = 1.0 + w3 * std::cos(3 * t) + w5 * std::sin(5 * t);
            return Vec2{r * std::cos(t), r * std::sin(t)};
        });
        inner_dense = serpentine(p["hole_amp"], p["hole_half_len"], p["hole_thick"]);
        area = std::abs(polygon_signed_area(outer_dense)) - std::abs(polygon_signed_area(inner_dense));
        if (!(area > 0)) fail(ErrorKind::config, "serpentine parameters give an empty region");
    }
    const double h = std::sqrt(area / (0.866 * target_vertices));
    RegionGeometry g;
    g.outer = resample_closed(outer_dense, std::max(8, static_cast<int>(std::lround(perimeter(outer_dense) / h))));
    g.inner = resample_closed(inner_dense, std::max(6, static_cast<int>(std::lround(perimeter(inner_dense) / h))));
    return g;
}

TriMesh mesh_region(const RegionGeometry& geom, int target_vertices, std::uint64_t seed) {
    std::vector<Vec2> pts;
    std::vector<int> outer, inner;
    for (const auto& p : geom.outer) {
        outer.push_back(static_cast<int>(pts.size()));
        pts.push_back(p);
    }
    for (const auto& p : geom.inner) {
        inner.push_back(static_cast<int>(pts.size()));
        pts.push_back(p);
    }
    const double area = std::abs(polygon_signed_area(geom.outer)) - std::abs(polygon_signed_area(geom.inner));
    const double h = std::sqrt(area / (0.866 * target_vertices));
    Vec2 lo = geom.outer[0], hi = geom.outer[0];
    for (const auto& p : geom.outer) {
        lo = {std::min(lo.x, p.x), std::min(lo.y, p.y)};
        hi = {std::max(hi.x, p.x), std::max(hi.y, p.y)};
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> jitter(-0.15 * h, 0.15 * h);
    const double dy = h * std::sqrt(3.0) / 2.0;
    auto near_boundary = [&](const Vec2& q) {
        for (const auto* loop : {&geom.outer, &geom.inner}) {
            const size_t n = loop->size();
            for (size_t i = 0; i < n; ++i)
                if (point_segment_distance(q, (*loop)[i], (*loop)[(i + 1) % n]) < 0.6 * h) return true;
        }
        return false;
    };
    int row = 0;
    for (double y = lo.y + 0.5 * dy; y < hi.y; y += dy, ++row) {
        for (double x = lo.x + (row % 2 ? 0.5 * h : 0.0); x < hi.x; x += h) {
            const Vec2 q{x + jitter(rng), y + jitter(rng)};
            if (!point_in_polygon(geom.outer, q) || point_in_polygon(geom.inner, q)) continue;
            if (near_boundary(q)) continue;
            pts.push_back(q);
        }
    }
    return remove_boundary_ears(build_delaunay(pts, outer, inner));
}

TriMesh generate_region(const std::string& generator, const ParamMap& params, int target_vertices,
                        std::uint64_t seed) {
    return mesh_region(region_geometry(generator, params, target_vertices), target_vertices, seed);
}

double DensitySpec::operator()(const Vec2& p) const {
    switch (kind) {
        case Kind::uniform: return base;
        case Kind::radial: return base + slope * dist(p, center);
        case Kind::gaussian: {
            double v = base;
            for (const auto& b : bumps) v += b.amplitude * std::exp(-norm2(p - b.center) / (2 * b.sigma * b.sigma));
            return v;
        }
    }
    return base;
}

const char* to_string(DensitySpec::Kind k) {
    switch (k) {
        case DensitySpec::Kind::uniform: return "uniform";
        case DensitySpec::Kind::gaussian: return "gaussian";
        case DensitySpec::Kind::radial: return "radial";
    }
    return "uniform";
}

}  // namespace qcov
