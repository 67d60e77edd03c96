#include <doctest.h>

#include <cmath>
#include <complex>
#include <string>

#include "qcov/kernels.hpp"
#include "test_util.hpp"

using namespace qcov;
using namespace qcov::kernels;

namespace {

TriSoA random_triangles(std::mt19937_64& g, size_t n) {
    TriSoA t;
    t.resize(n);
    for (size_t i = 0; i < n; ++i) {
        t.x0[i] = testutil::uniform(g, -2, 2);
        t.y0[i] = testutil::uniform(g, -2, 2);
        t.x1[i] = testutil::uniform(g, -2, 2);
        t.y1[i] = testutil::uniform(g, -2, 2);
        t.x2[i] = testutil::uniform(g, -2, 2);
        t.y2[i] = testutil::uniform(g, -2, 2);
    }
    return t;
}

// Image of each triangle under a per-triangle random affine map with positive determinant.
TriSoA affine_images(std::mt19937_64& g, const TriSoA& s, std::vector<Mat2>& maps) {
    TriSoA t;
    t.resize(s.size());
    maps.clear();
    for (size_t i = 0; i < s.size(); ++i) {
        Mat2 A;
        do {
            A = {testutil::uniform(g, -2, 2), testutil::uniform(g, -2, 2), testutil::uniform(g, -2, 2),
                 testutil::uniform(g, -2, 2)};
        } while (A.det() < 0.05);
        maps.push_back(A);
        const Vec2 off{testutil::uniform(g, -1, 1), testutil::uniform(g, -1, 1)};
        const Vec2 p0 = A * Vec2{s.x0[i], s.y0[i]} + off;
        const Vec2 p1 = A * Vec2{s.x1[i], s.y1[i]} + off;
        const Vec2 p2 = A * Vec2{s.x2[i], s.y2[i]} + off;
        t.x0[i] = p0.x, t.y0[i] = p0.y, t.x1[i] = p1.x, t.y1[i] = p1.y, t.x2[i] = p2.x, t.y2[i] = p2.y;
    }
    return t;
}

bool close(double a, double b, double rel) { return std::abs(a - b) <= rel * std::max({1.0, std::abs(a), std::abs(b)}); }

}  // namespace

TEST_CASE("signed areas match the shoelace formula") {
    TriSoA t;
    t.resize(2);
    t.x0 = {0, 0}, t.y0 = {0, 0}, t.x1 = {1, 0}, t.y1 = {0, 1}, t.x2 = {0, 1}, t.y2 = {1, 0};
    double out[2];
    signed_areas(t, out, Isa::scalar);
    CHECK(out[0] == doctest::Approx(0.5));
    CHECK(out[1] == doctest::Approx(-0.5));
}

TEST_CASE("affine dilatation matches the closed form for random linear maps") {
    auto g = testutil::rng(11);
    const TriSoA src = random_triangles(g, 200);
    std::vector<Mat2> maps;
    const TriSoA img = affine_images(g, src, maps);
    AffineOut out;
    affine_beltrami(src, img, out, Isa::scalar);
    int checked = 0;
    for (size_t i = 0; i < src.size(); ++i) {
        const double area = 0.5 * ((src.x1[i] - src.x0[i]) * (src.y2[i] - src.y0[i]) -
                                   (src.y1[i] - src.y0[i]) * (src.x2[i] - src.x0[i]));
        if (std::abs(area) < 1e-3) continue;
        const Mat2& A = maps[i];
        const Complex expect = Complex(A.a - A.d, A.c + A.b) / Complex(A.a + A.d, A.c - A.b);
        CHECK(close(out.ja[i], A.a, 1e-9));
        CHECK(close(out.jd[i], A.d, 1e-9));
        CHECK(std::abs(Complex(out.mu_re[i], out.mu_im[i]) - expect) < 1e-9);
        CHECK(close(out.det[i], A.det(), 1e-9));
        // |f_z|^2 (1 - |mu|^2) reproduces the Jacobian determinant.
        const Complex fz = 0.5 * Complex(A.a + A.d, A.c - A.b);
        const double mu2 = std::norm(expect);
        CHECK(close(std::norm(fz) * (1.0 - mu2), out.det[i], 1e-10));
        ++checked;
    }
    CHECK(checked > 150);
}

TEST_CASE("stretching x by two gives dilatation one third") {
    TriSoA src;
    src.resize(1);
    src.x0 = {0}, src.y0 = {0}, src.x1 = {1}, src.y1 = {0}, src.x2 = {0.3}, src.y2 = {0.8};
    TriSoA img = src;
    for (double* x : {&img.x0[0], &img.x1[0], &img.x2[0]}) *x *= 2.0;
    AffineOut out;
    affine_beltrami(src, img, out, Isa::scalar);
    CHECK(out.mu_re[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(std::abs(out.mu_im[0]) < 1e-12);
}

TEST_CASE("weighted moments match a direct sum") {
    auto g = testutil::rng(5);
    std::vector<double> x(37), y(37), w(37);
    for (size_t i = 0; i < x.size(); ++i) {
        x[i] = testutil::uniform(g, -1, 1);
        y[i] = testutil::uniform(g, -1, 1);
        w[i] = testutil::uniform(g, 0, 3);
    }
    const double px = 0.2, py = -0.4;
    double d2 = 0, dx = 0, dy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        d2 += w[i] * ((px - x[i]) * (px - x[i]) + (py - y[i]) * (py - y[i]));
        dx += w[i] * (px - x[i]);
        dy += w[i] * (py - y[i]);
    }
    const Moments m = weighted_sq_moments(x.data(), y.data(), w.data(), x.size(), px, py, Isa::scalar);
    CHECK(m.sum_wd2 == doctest::Approx(d2).epsilon(1e-12));
    CHECK(m.sum_wdx == doctest::Approx(dx).epsilon(1e-12));
    CHECK(m.sum_wdy == doctest::Approx(dy).epsilon(1e-12));
}

TEST_CASE("vector kernels agree with the scalar reference") {
    if (!isa_available(Isa::avx2)) {
        MESSAGE("AVX2 not available on this machine; only the scalar path is exercised");
        return;
    }
    auto g = testutil::rng(21);
    for (size_t n : {size_t{1}, size_t{3}, size_t{4}, size_t{5}, size_t{8}, size_t{13}, size_t{1001}}) {
        CAPTURE(n);
        const TriSoA src = random_triangles(g, n);
        std::vector<Mat2> maps;
        const TriSoA img = affine_images(g, src, maps);

        std::vector<double> a_s(n), a_v(n);
        signed_areas(src, a_s.data(), Isa::scalar);
        signed_areas(src, a_v.data(), Isa::avx2);
        for (size_t i = 0; i < n; ++i) CHECK(close(a_s[i], a_v[i], 1e-14));

        AffineOut s, v;
        affine_beltrami(src, img, s, Isa::scalar);
        affine_beltrami(src, img, v, Isa::avx2);
        for (size_t i = 0; i < n; ++i) {
            CHECK(close(s.ja[i], v.ja[i], 1e-12));
            CHECK(close(s.jb[i], v.jb[i], 1e-12));
            CHECK(close(s.jc[i], v.jc[i], 1e-12));
            CHECK(close(s.jd[i], v.jd[i], 1e-12));
            CHECK(close(s.mu_re[i], v.mu_re[i], 1e-12));
            CHECK(close(s.mu_im[i], v.mu_im[i], 1e-12));
            CHECK(close(s.det[i], v.det[i], 1e-12));
        }

        std::vector<double> qx(n), qy(n), w(n);
        for (size_t i = 0; i < n; ++i) {
            qx[i] = src.x0[i];
            qy[i] = src.y0[i];
            w[i] = std::abs(src.x1[i]);
        }
        const Moments ms = weighted_sq_moments(qx.data(), qy.data(), w.data(), n, 0.3, 0.7, Isa::scalar);
        const Moments mv = weighted_sq_moments(qx.data(), qy.data(), w.data(), n, 0.3, 0.7, Isa::avx2);
        CHECK(close(ms.sum_wd2, mv.sum_wd2, 1e-12));
        CHECK(close(ms.sum_wdx, mv.sum_wdx, 1e-12));
        CHECK(close(ms.sum_wdy, mv.sum_wdy, 1e-12));
    }
}

TEST_CASE("dispatch reports a usable instruction set") {
    CHECK(isa_available(Isa::scalar));
    CHECK(isa_available(active_isa()));
    CHECK(std::string(isa_name(Isa::scalar)) == "scalar");
}
