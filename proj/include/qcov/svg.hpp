#pragma once

#include <string>
#include <vector>

#include "qcov/atlas.hpp"
#include "qcov/geometry.hpp"

namespace qcov {

enum class Space { annulus, original };
const char* to_string(Space s);

// What one snapshot shows; empty psi / agents give a mesh-only picture.
struct SnapshotView {
    std::vector<double> psi;
    std::vector<Vec2> agents;     // in the drawn space
    std::vector<Vec2> centroids;  // optional, in the drawn space
    std::vector<double> density;  // per vertex, optional shading
    double time = 0.0;
};

std::string svg_snapshot(const MappingAtlas& atlas, const SnapshotView& view, Space space);
void emit_svg(const MappingAtlas& atlas, const SnapshotView& view, Space space, const std::string& path);

}  // namespace qcov
