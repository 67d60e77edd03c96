#include "qcov/geometry.hpp"

#include <algorithm>

namespace qcov {

double polygon_signed_area(const std::vector<Vec2>& pts, const std::vector<int>& loop) {
    double s = 0.0;
    const size_t n = loop.size();
    for (size_t i = 0; i < n; ++i) {
        const Vec2& p = pts[loop[i]];
        const Vec2& q = pts[loop[(i + 1) % n]];
        s += p.x * q.y - q.x * p.y;
    }
    return 0.5 * s;
}

double polygon_signed_area(const std::vector<Vec2>& poly) {
    double s = 0.0;
    const size_t n = poly.size();
    for (size_t i = 0; i < n; ++i) {
        const Vec2& p = poly[i];
        const Vec2& q = poly[(i + 1) % n];
        s += p.x * q.y - q.x * p.y;
    }
    return 0.5 * s;
}

bool point_in_polygon(const std::vector<Vec2>& poly, const Vec2& q) {
    bool inside = false;
    const size_t n = poly.size();
    for (size_t i = 0, j = n - 1; i < n; j = i++) {
        const Vec2& a = poly[i];
        const Vec2& b = poly[j];
        if ((a.y > q.y) != (b.y > q.y)) {
            const double xi = a.x + (q.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if (q.x < xi) inside = !inside;
        }
    }
    return inside;
}

Vec2 closest_point_on_segment(const Vec2& p, const Vec2& a, const Vec2& b) {
    const Vec2 ab = b - a;
    const double l2 = norm2(ab);
    if (l2 == 0.0) return a;
    const double t = std::clamp(dot(p - a, ab) / l2, 0.0, 1.0);
    return a + ab * t;
}

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
    return dist(p, closest_point_on_segment(p, a, b));
}

static int sgn(double v) { return (v > 0) - (v < 0); }

bool segments_cross(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
    const int o1 = sgn(orient2d(a, b, c));
    const int o2 = sgn(orient2d(a, b, d));
    const int o3 = sgn(orient2d(c, d, a));
    const int o4 = sgn(orient2d(c, d, b));
    return o1 * o2 < 0 && o3 * o4 < 0;
}

static bool on_segment(const Vec2& a, const Vec2& b, const Vec2& p) {
    return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
           p.y <= std::max(a.y, b.y);
}

bool segments_touch(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
    const int o1 = sgn(orient2d(a, b, c));
    const int o2 = sgn(orient2d(a, b, d));
    const int o3 = sgn(orient2d(c, d, a));
    const int o4 = sgn(orient2d(c, d, b));
    if (o1 * o2 < 0 && o3 * o4 < 0) return true;
    if (o1 == 0 && on_segment(a, b, c)) return true;
    if (o2 == 0 && on_segment(a, b, d)) return true;
    if (o3 == 0 && on_segment(c, d, a)) return true;
    if (o4 == 0 && on_segment(c, d, b)) return true;
    return false;
}

std::array<double, 3> barycentric(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& q) {
    const double area = orient2d(a, b, c);
    const double l0 = orient2d(b, c, q) / area;
    const double l1 = orient2d(c, a, q) / area;
    return {l0, l1, 1.0 - l0 - l1};
}

double wrap_angle(double t) {
    double r = std::fmod(t, kTwoPi);
    if (r < 0) r += kTwoPi;
    if (r >= kTwoPi) r = 0.0;
    return r;
}

double circular_distance(double a, double b) {
    const double d = wrap_angle(a - b);
    return std::min(d, kTwoPi - d);
}

}  // namespace qcov
