#include "qcov/kernels.hpp"

#include <cstdlib>

#if defined(__x86_64__) || defined(__i386__)
#define QCOV_X86 1
#include <immintrin.h>
#endif

namespace qcov::kernels {

void TriSoA::resize(size_t n) {
    for (auto* v : {&x0, &y0, &x1, &y1, &x2, &y2}) v->resize(n);
}

void AffineOut::resize(size_t n) {
    for (auto* v : {&ja, &jb, &jc, &jd, &mu_re, &mu_im, &det}) v->resize(n);
}

namespace scalar {

static void signed_areas(const TriSoA& t, double* out) {
    const size_t n = t.size();
    for (size_t i = 0; i < n; ++i) {
        const double ux = t.x1[i] - t.x0[i], uy = t.y1[i] - t.y0[i];
        const double vx = t.x2[i] - t.x0[i], vy = t.y2[i] - t.y0[i];
        out[i] = 0.5 * (ux * vy - uy * vx);
    }
}

static void affine_beltrami(const TriSoA& s, const TriSoA& m, AffineOut& o) {
    const size_t n = s.size();
    for (size_t i = 0; i < n; ++i) {
        const double p1x = s.x1[i] - s.x0[i], p1y = s.y1[i] - s.y0[i];
        const double p2x = s.x2[i] - s.x0[i], p2y = s.y2[i] - s.y0[i];
        const double q1x = m.x1[i] - m.x0[i], q1y = m.y1[i] - m.y0[i];
        const double q2x = m.x2[i] - m.x0[i], q2y = m.y2[i] - m.y0[i];
        const double inv = 1.0 / (p1x * p2y - p2x * p1y);
        // P^{-1} = inv * [[p2y, -p2x], [-p1y, p1x]]
        const double a = (q1x * p2y - q2x * p1y) * inv;
        const double b = (q2x * p1x - q1x * p2x) * inv;
        const double c = (q1y * p2y - q2y * p1y) * inv;
        const double d = (q2y * p1x - q1y * p2x) * inv;
        const double nr = a - d, ni = c + b;
        const double dr = a + d, di = c - b;
        const double den = dr * dr + di * di;
        o.ja[i] = a;
        o.jb[i] = b;
        o.jc[i] = c;
        o.jd[i] = d;
        o.mu_re[i] = (nr * dr + ni * di) / den;
        o.mu_im[i] = (ni * dr - nr * di) / den;
        o.det[i] = a * d - b * c;
    }
}

static Moments weighted_sq_moments(const double* qx, const double* qy, const double* w, size_t n, double px,
                                   double py) {
    Moments m;
    for (size_t i = 0; i < n; ++i) {
        const double dx = px - qx[i], dy = py - qy[i];
        m.sum_wd2 += w[i] * (dx * dx + dy * dy);
        m.sum_wdx += w[i] * dx;
        m.sum_wdy += w[i] * dy;
    }
    return m;
}

}  // namespace scalar

#ifdef QCOV_X86
namespace avx2 {

#define QCOV_AVX2 __attribute__((target("avx2")))

QCOV_AVX2 static void signed_areas(const TriSoA& t, double* out) {
    const size_t n = t.size();
    const __m256d half = _mm256_set1_pd(0.5);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d x0 = _mm256_loadu_pd(&t.x0[i]), y0 = _mm256_loadu_pd(&t.y0[i]);
        const __m256d ux = _mm256_sub_pd(_mm256_loadu_pd(&t.x1[i]), x0);
        const __m256d uy = _mm256_sub_pd(_mm256_loadu_pd(&t.y1[i]), y0);
        const __m256d vx = _mm256_sub_pd(_mm256_loadu_pd(&t.x2[i]), x0);
        const __m256d vy = _mm256_sub_pd(_mm256_loadu_pd(&t.y2[i]), y0);
        const __m256d cr = _mm256_sub_pd(_mm256_mul_pd(ux, vy), _mm256_mul_pd(uy, vx));
        _mm256_storeu_pd(out + i, _mm256_mul_pd(half, cr));
    }
    for (; i < n; ++i) {
        const double ux = t.x1[i] - t.x0[i], uy = t.y1[i] - t.y0[i];
        const double vx = t.x2[i] - t.x0[i], vy = t.y2[i] - t.y0[i];
        out[i] = 0.5 * (ux * vy - uy * vx);
    }
}

QCOV_AVX2 static void affine_beltrami(const TriSoA& s, const TriSoA& m, AffineOut& o) {
    const size_t n = s.size();
    const __m256d one = _mm256_set1_pd(1.0);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d sx0 = _mm256_loadu_pd(&s.x0[i]), sy0 = _mm256_loadu_pd(&s.y0[i]);
        const __m256d mx0 = _mm256_loadu_pd(&m.x0[i]), my0 = _mm256_loadu_pd(&m.y0[i]);
        const __m256d p1x = _mm256_sub_pd(_mm256_loadu_pd(&s.x1[i]), sx0);
        const __m256d p1y = _mm256_sub_pd(_mm256_loadu_pd(&s.y1[i]), sy0);
        const __m256d p2x = _mm256_sub_pd(_mm256_loadu_pd(&s.x2[i]), sx0);
        const __m256d p2y = _mm256_sub_pd(_mm256_loadu_pd(&s.y2[i]), sy0);
        const __m256d q1x = _mm256_sub_pd(_mm256_loadu_pd(&m.x1[i]), mx0);
        const __m256d q1y = _mm256_sub_pd(_mm256_loadu_pd(&m.y1[i]), my0);
        const __m256d q2x = _mm256_sub_pd(_mm256_loadu_pd(&m.x2[i]), mx0);
        const __m256d q2y = _mm256_sub_pd(_mm256_loadu_pd(&m.y2[i]), my0);
        const __m256d inv =
            _mm256_div_pd(one, _mm256_sub_pd(_mm256_mul_pd(p1x, p2y), _mm256_mul_pd(p2x, p1y)));
        const __m256d a =
            _mm256_mul_pd(_mm256_sub_pd(_mm256_mul_pd(q1x, p2y), _mm256_mul_pd(q2x, p1y)), inv);
        const __m256d b =
            _mm256_mul_pd(_mm256_sub_pd(_mm256_mul_pd(q2x, p1x), _mm256_mul_pd(q1x, p2x)), inv);
        const __m256d c =
            _mm256_mul_pd(_mm256_sub_pd(_mm256_mul_pd(q1y, p2y), _mm256_mul_pd(q2y, p1y)), inv);
        const __m256d d =
            _mm256_mul_pd(_mm256_sub_pd(_mm256_mul_pd(q2y, p1x), _mm256_mul_pd(q1y, p2x)), inv);
        const __m256d nr = _mm256_sub_pd(a, d), ni = _mm256_add_pd(c, b);
        const __m256d dr = _mm256_add_pd(a, d), di = _mm256_sub_pd(c, b);
        const __m256d den = _mm256_add_pd(_mm256_mul_pd(dr, dr), _mm256_mul_pd(di, di));
        const __m256d re = _mm256_div_pd(_mm256_add_pd(_mm256_mul_pd(nr, dr), _mm256_mul_pd(ni, di)), den);
        const __m256d im = _mm256_div_pd(_mm256_sub_pd(_mm256_mul_pd(ni, dr), _mm256_mul_pd(nr, di)), den);
        _mm256_storeu_pd(&o.ja[i], a);
        _mm256_storeu_pd(&o.jb[i], b);
        _mm256_storeu_pd(&o.jc[i], c);
        _mm256_storeu_pd(&o.jd[i], d);
        _mm256_storeu_pd(&o.mu_re[i], re);
        _mm256_storeu_pd(&o.mu_im[i], im);
        _mm256_storeu_pd(&o.det[i], _mm256_sub_pd(_mm256_mul_pd(a, d), _mm256_mul_pd(b, c)));
    }
    if (i < n) {
        // Tail through the scalar path on a shifted view.
        TriSoA st, mt;
        st.resize(n - i);
        mt.resize(n - i);
        for (size_t k = i; k < n; ++k) {
            st.x0[k - i] = s.x0[k]; st.y0[k - i] = s.y0[k];
            st.x1[k - i] = s.x1[k]; st.y1[k - i] = s.y1[k];
            st.x2[k - i] = s.x2[k]; st.y2[k - i] = s.y2[k];
            mt.x0[k - i] = m.x0[k]; mt.y0[k - i] = m.y0[k];
            mt.x1[k - i] = m.x1[k]; mt.y1[k - i] = m.y1[k];
            mt.x2[k - i] = m.x2[k]; mt.y2[k - i] = m.y2[k];
        }
        AffineOut ot;
        ot.resize(n - i);
        scalar::affine_beltrami(st, mt, ot);
        for (size_t k = i; k < n; ++k) {
            o.ja[k] = ot.ja[k - i]; o.jb[k] = ot.jb[k - i];
            o.jc[k] = ot.jc[k - i]; o.jd[k] = ot.jd[k - i];
            o.mu_re[k] = ot.mu_re[k - i]; o.mu_im[k] = ot.mu_im[k - i];
            o.det[k] = ot.det[k - i];
        }
    }
}

QCOV_AVX2 static double hsum(__m256d v) {
    alignas(32) double t[4];
    _mm256_store_pd(t, v);
    return (t[0] + t[1]) + (t[2] + t[3]);
}

QCOV_AVX2 static Moments weighted_sq_moments(const double* qx, const double* qy, const double* w, size_t n,
                                             double px, double py) {
    const __m256d vpx = _mm256_set1_pd(px), vpy = _mm256_set1_pd(py);
    __m256d s2 = _mm256_setzero_pd(), sx = _mm256_setzero_pd(), sy = _mm256_setzero_pd();
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d dx = _mm256_sub_pd(vpx, _mm256_loadu_pd(qx + i));
        const __m256d dy = _mm256_sub_pd(vpy, _mm256_loadu_pd(qy + i));
        const __m256d ww = _mm256_loadu_pd(w + i);
        const __m256d d2 = _mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy));
        s2 = _mm256_add_pd(s2, _mm256_mul_pd(ww, d2));
        sx = _mm256_add_pd(sx, _mm256_mul_pd(ww, dx));
        sy = _mm256_add_pd(sy, _mm256_mul_pd(ww, dy));
    }
    Moments m{hsum(s2), hsum(sx), hsum(sy)};
    for (; i < n; ++i) {
        const double dx = px - qx[i], dy = py - qy[i];
        m.sum_wd2 += w[i] * (dx * dx + dy * dy);
        m.sum_wdx += w[i] * dx;
        m.sum_wdy += w[i] * dy;
    }
    return m;
}

#undef QCOV_AVX2

}  // namespace avx2
#endif

bool isa_available(Isa isa) {
    switch (isa) {
        case Isa::scalar: return true;
        case Isa::avx2:
#ifdef QCOV_X86
            return __builtin_cpu_supports("avx2");
#else
            return false;
#endif
    }
    return false;
}

Isa active_isa() {
    static const Isa chosen = [] {
        if (std::getenv("QCOV_FORCE_SCALAR")) return Isa::scalar;
        return isa_available(Isa::avx2) ? Isa::avx2 : Isa::scalar;
    }();
    return chosen;
}

const char* isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

void signed_areas(const TriSoA& t, double* out, Isa isa) {
#ifdef QCOV_X86
    if (isa == Isa::avx2 && isa_available(Isa::avx2)) return avx2::signed_areas(t, out);
#endif
    (void)isa;
    scalar::signed_areas(t, out);
}

void affine_beltrami(const TriSoA& src, const TriSoA& img, AffineOut& out, Isa isa) {
    out.resize(src.size());
#ifdef QCOV_X86
    if (isa == Isa::avx2 && isa_available(Isa::avx2)) return avx2::affine_beltrami(src, img, out);
#endif
    (void)isa;
    scalar::affine_beltrami(src, img, out);
}

Moments weighted_sq_moments(const double* qx, const double* qy, const double* w, size_t n, double px, double py,
                            Isa isa) {
#ifdef QCOV_X86
    if (isa == Isa::avx2 && isa_available(Isa::avx2)) return avx2::weighted_sq_moments(qx, qy, w, n, px, py);
#endif
    (void)isa;
    return scalar::weighted_sq_moments(qx, qy, w, n, px, py);
}

}  // namespace qcov::kernels
