#pragma once

// Data-parallel inner loops with a scalar reference and an AVX2 variant chosen at runtime.

#include <cstddef>
#include <vector>

namespace qcov::kernels {

enum class Isa { scalar, avx2 };

// Triangles in structure-of-arrays form.
struct TriSoA {
    std::vector<double> x0, y0, x1, y1, x2, y2;
    size_t size() const { return x0.size(); }
    void resize(size_t n);
};

struct AffineOut {
    // Row-major Jacobian entries per face.
    std::vector<double> ja, jb, jc, jd;
    std::vector<double> mu_re, mu_im;
    std::vector<double> det;
    void resize(size_t n);
};

struct Moments {
    double sum_wd2 = 0.0;  // sum w * |p - q|^2
    double sum_wdx = 0.0;  // sum w * (p.x - q.x)
    double sum_wdy = 0.0;  // sum w * (p.y - q.y)
};

Isa active_isa();
const char* isa_name(Isa isa);
bool isa_available(Isa isa);

void signed_areas(const TriSoA& t, double* out, Isa isa = active_isa());
void affine_beltrami(const TriSoA& src, const TriSoA& img, AffineOut& out, Isa isa = active_isa());
Moments weighted_sq_moments(const double* qx, const double* qy, const double* w, size_t n, double px, double py,
                            Isa isa = active_isa());

}  // namespace qcov::kernels
