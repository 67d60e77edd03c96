#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "qcov/geometry.hpp"
#include "qcov/mesh.hpp"

namespace qcov {

// Closed boundary polylines of a region with one hole.
struct RegionGeometry {
    std::vector<Vec2> outer;
    std::vector<Vec2> inner;
};

using ParamMap = std::map<std::string, double>;

const std::vector<std::string>& region_generators();
// Default parameters for a named generator; unknown names raise a config error.
ParamMap default_region_params(const std::string& generator);
// Boundary sampled at roughly the spacing of a mesh with target_vertices vertices.
RegionGeometry region_geometry(const std::string& generator, const ParamMap& params, int target_vertices);
// Delaunay mesh of the region with a jittered interior lattice.
TriMesh mesh_region(const RegionGeometry& geom, int target_vertices, std::uint64_t seed);
TriMesh generate_region(const std::string& generator, const ParamMap& params, int target_vertices,
                        std::uint64_t seed);

struct DensitySpec {
    enum class Kind { uniform, gaussian, radial };
    struct Bump {
        Vec2 center;
        double sigma = 0.2;
        double amplitude = 1.0;
    };
    Kind kind = Kind::uniform;
    double base = 1.0;   // uniform value, gaussian floor, radial intercept
    double slope = 0.0;  // radial growth per unit distance
    Vec2 center{};       // radial origin
    std::vector<Bump> bumps;

    double operator()(const Vec2& p) const;
};

const char* to_string(DensitySpec::Kind k);

}  // namespace qcov
