#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qcov/conformal.hpp"
#include "qcov/mesh.hpp"

namespace qcov {

// Piecewise-affine bijection between the original region and the circular annulus.
struct MappingAtlas {
    std::shared_ptr<const TriMesh> source;  // original region
    std::shared_ptr<const TriMesh> image;   // same connectivity, annulus positions
    std::shared_ptr<const PointLocator> source_locator;
    std::shared_ptr<const PointLocator> image_locator;
    std::vector<Mat2> jacobian;      // per face, source -> annulus
    std::vector<Mat2> jacobian_inv;  // per face, annulus -> source
    std::vector<std::pair<int, int>> seam_pairs;  // source vertex ids of the cut, duplicated while sliced
    double L_star = 0.0;
    double R = 0.0;  // mid radius (1 + e^{-2 pi L}) / 2
    double r = 0.0;  // tube radius (1 - e^{-2 pi L}) / 2
    double tol_map = 1e-6;

    const std::vector<Vec2>& vertex_images() const { return image->vertices; }
    double inner_radius() const { return R - r; }
    double outer_radius() const { return R + r; }
};

MappingAtlas compose_tau(const TriMesh& mesh, const std::vector<Vec2>& final_images, double L_star,
                         std::vector<std::pair<int, int>> seam_pairs = {});

Vec2 tau_forward(const MappingAtlas& atlas, const Vec2& q, int* face = nullptr, int hint = -1);
Vec2 tau_inverse(const MappingAtlas& atlas, const Vec2& q, int* face = nullptr, int hint = -1);
std::optional<Location> locate_in_image(const MappingAtlas& atlas, const Vec2& q, int hint = -1);

// Largest |radius - target| over inner and outer loop images.
double boundary_radial_deviation(const MappingAtlas& atlas);

std::string atlas_json(const MappingAtlas& atlas);
void write_atlas(const MappingAtlas& atlas, const std::string& path);
// Rebuilds the atlas from write_atlas output; a checksum mismatch is an I/O error.
MappingAtlas read_atlas(const std::string& path);
std::uint64_t fnv1a64(const std::string& bytes);

struct MapOptions {
    int cut_start = 0;  // index into the inner loop for the cut's inner endpoint
    LengthSearch search;
    bool correct = true;
};

struct MapResult {
    CutPath cut;
    SlicedMesh sliced;
    RectangularMap rect;
    std::vector<Vec2> annulus_uncorrected;  // on the sliced mesh
    CorrectionResult correction;
    MappingAtlas atlas;
};

// Cut, flatten to the optimal rectangle, wrap onto the annulus and correct the seam distortion.
MapResult map_region(const TriMesh& mesh, const MapOptions& options = {});

}  // namespace qcov
