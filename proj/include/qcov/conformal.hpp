#pragma once

#include <utility>
#include <vector>

#include "qcov/geometry.hpp"
#include "qcov/mesh.hpp"
#include "qcov/sparse.hpp"

namespace qcov {

// Per-face complex dilatation of a piecewise-affine map.
struct BeltramiField {
    std::vector<Complex> mu;

    double sup_norm() const;
    // Root-mean-square of |mu| with the given per-face weights (uniform when empty).
    double l2_norm(const std::vector<double>& weights = {}) const;
};

// Per-face affine data of the map mesh.vertices -> images.
kernels::AffineOut face_affine_maps(const TriMesh& mesh, const std::vector<Vec2>& images);

// Positive semi-definite stiffness form: off-diagonal -(cot a + cot b)/2, zero row sums.
SparseMatrix cotangent_laplacian(const TriMesh& mesh);

// Boundary on the unit circle by arc length from the first loop vertex; interior harmonic.
std::vector<Vec2> harmonic_disk_map(const TriMesh& disk);
// Max |(L h)_i| over interior vertices, scaled by the mean |L_ii|.
double harmonic_residual(const TriMesh& disk, const std::vector<Vec2>& images);

BeltramiField beltrami_coefficient(const TriMesh& mesh, const std::vector<Vec2>& images);

struct BoundarySpec {
    LinearConstraints x;
    LinearConstraints y;
};

// Divergence-form operator of the Beltrami equation with per-face coefficient mu.
SparseMatrix beltrami_operator(const TriMesh& mesh, const BeltramiField& mu);
std::vector<Vec2> lbs_solve(const TriMesh& mesh, const BeltramiField& mu, const BoundarySpec& spec);

// Corners of a topological quadrilateral, counter-clockwise from the origin.
struct QuadCorners {
    int c00 = -1;  // -> (0, 0)
    int cL0 = -1;  // -> (L, 0)
    int cL1 = -1;  // -> (L, 1)
    int c01 = -1;  // -> (0, 1)
};

struct LengthSearch {
    double lo = 0.05;
    double hi = 5.0;
    double tol = 1e-3;
};

struct RectangularMap {
    std::vector<Vec2> unit_images;  // solution on the unit square
    std::vector<Vec2> images;       // (L x, y)
    double L = 0.0;
    BeltramiField mu;               // of mesh -> images
    std::vector<std::pair<double, double>> samples;  // (L, distortion norm) evaluated by the search
    bool used_disk_chart = true;    // false when the disk chart was unusable and the source chart was used
};

// Area-weighted RMS |mu| of mesh -> (L x, y).
double length_distortion(const TriMesh& mesh, const std::vector<Vec2>& unit_images, double L);

// x_ties pairs (a, b) force x[b] = x[a], used to keep seam copies aligned.
RectangularMap rectangular_map(const TriMesh& disk, const QuadCorners& corners,
                               const std::vector<std::pair<int, int>>& x_ties = {},
                               const LengthSearch& search = {});

double optimize_length(const std::vector<std::pair<double, double>>& lengths_and_norms);

std::vector<Vec2> exponential_annulus_map(const std::vector<Vec2>& rect_images, double L_star);
Vec2 exponential_point(const Vec2& p, double L_star);

struct CorrectionResult {
    std::vector<Vec2> sliced_images;  // corrected images on the sliced mesh
    std::vector<Vec2> merged_images;  // one image per source vertex (seam copies merged)
    double sup_before = 0.0;
    double sup_after = 0.0;
    double seam_gap = 0.0;  // largest distance between seam copies before merging
};

CorrectionResult quasiconformal_correction(const SlicedMesh& sliced, const std::vector<Vec2>& annulus_images,
                                           double L_star, double tol_map);

}  // namespace qcov
