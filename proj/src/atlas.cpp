#include "qcov/atlas.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "qcov/errors.hpp"

namespace qcov {

MappingAtlas compose_tau(const TriMesh& mesh, const std::vector<Vec2>& final_images, double L_star,
                         std::vector<std::pair<int, int>> seam_pairs) {
    if (final_images.size() != mesh.vertices.size())
        fail(ErrorKind::argument, "image count does not match vertex count");
    const auto areas = face_signed_areas(mesh, final_images);
    std::string flipped;
    int nflip = 0;
    for (size_t f = 0; f < areas.size(); ++f) {
        if (areas[f] <= 0.0) {
            if (nflip < 20) flipped += (nflip ? "," : "") + std::to_string(f);
            ++nflip;
        }
    }
    if (nflip) fail(ErrorKind::bijectivity, std::to_string(nflip) + " flipped faces: " + flipped + (nflip > 20 ? ",..." : ""));

    MappingAtlas at;
    auto src = std::make_shared<TriMesh>(mesh);
    auto img = std::make_shared<TriMesh>(mesh.with_vertices(final_images));
    at.source = src;
    at.image = img;
    at.source_locator = std::make_shared<PointLocator>(*src);
    at.image_locator = std::make_shared<PointLocator>(*img);
    const auto a = face_affine_maps(mesh, final_images);
    at.jacobian.resize(mesh.faces.size());
    at.jacobian_inv.resize(mesh.faces.size());
    for (size_t f = 0; f < mesh.faces.size(); ++f) {
        at.jacobian[f] = {a.ja[f], a.jb[f], a.jc[f], a.jd[f]};
        if (!(at.jacobian[f].det() > 0.0)) fail(ErrorKind::bijectivity, "face " + std::to_string(f) + " has det(J) <= 0");
        at.jacobian_inv[f] = at.jacobian[f].inverse();
    }
    at.seam_pairs = std::move(seam_pairs);
    at.L_star = L_star;
    const double e = std::exp(-kTwoPi * L_star);
    at.R = (1.0 + e) / 2.0;
    at.r = (1.0 - e) / 2.0;
    at.tol_map = 1e-6 * at.outer_radius();
    return at;
}

static Vec2 apply(const TriMesh& to, const Location& loc) { return barycentric_reconstruct(to, to.vertices, loc); }

Vec2 tau_forward(const MappingAtlas& atlas, const Vec2& q, int* face, int hint) {
    const auto loc = atlas.source_locator->locate(q, hint);
    if (!loc) fail(ErrorKind::domain, "point outside the original region");
    if (face) *face = loc->face;
    return apply(*atlas.image, *loc);
}

std::optional<Location> locate_in_image(const MappingAtlas& atlas, const Vec2& q, int hint) {
    return atlas.image_locator->locate(q, hint);
}

Vec2 tau_inverse(const MappingAtlas& atlas, const Vec2& q, int* face, int hint) {
    const auto loc = atlas.image_locator->locate(q, hint);
    if (!loc) fail(ErrorKind::domain, "point outside the annulus image");
    if (face) *face = loc->face;
    return apply(*atlas.source, *loc);
}

double boundary_radial_deviation(const MappingAtlas& atlas) {
    double dev = 0.0;
    const auto& loops = atlas.source->boundary_loops;
    for (size_t l = 0; l < loops.size(); ++l) {
        const double target = l == 0 ? atlas.outer_radius() : atlas.inner_radius();
        for (int v : loops[l]) dev = std::max(dev, std::abs(norm(atlas.vertex_images()[v]) - target));
    }
    return dev;
}

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string atlas_json(const MappingAtlas& atlas) {
    using nlohmann::ordered_json;
    ordered_json j;
    j["L_star"] = atlas.L_star;
    j["R"] = atlas.R;
    j["r"] = atlas.r;
    ordered_json src = ordered_json::array(), img = ordered_json::array();
    for (const auto& p : atlas.source->vertices) src.push_back({p.x, p.y});
    for (const auto& p : atlas.vertex_images()) img.push_back({p.x, p.y});
    j["source_vertices"] = src;
    j["faces"] = atlas.source->faces;
    j["boundary_loops"] = atlas.source->boundary_loops;
    j["vertex_images"] = img;
    j["seam_pairs"] = atlas.seam_pairs;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
    j["checksum"] = buf;
    return j.dump(1);
}

void write_atlas(const MappingAtlas& atlas, const std::string& path) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::io, "cannot write " + path);
    out << atlas_json(atlas) << '\n';
    if (!out) fail(ErrorKind::io, "failed writing " + path);
}

MappingAtlas read_atlas(const std::string& path) {
    using nlohmann::ordered_json;
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot read " + path);
    ordered_json j;
    try {
        in >> j;
        const std::string sum = j.at("checksum").get<std::string>();
        j.erase("checksum");
        char buf[32];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
        if (sum != buf) fail(ErrorKind::io, path + ": checksum mismatch");
        TriMesh mesh;
        for (const auto& p : j.at("source_vertices")) mesh.vertices.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
        mesh.faces = j.at("faces").get<std::vector<Face>>();
        mesh.boundary_loops = j.at("boundary_loops").get<std::vector<std::vector<int>>>();
        mesh.vertex_tags = effective_tags(mesh);
        std::vector<Vec2> images;
        for (const auto& p : j.at("vertex_images")) images.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
        return compose_tau(mesh, images, j.at("L_star").get<double>(),
                           j.at("seam_pairs").get<std::vector<std::pair<int, int>>>());
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::io, path + ": malformed atlas (" + e.what() + ")");
    }
}

MapResult map_region(const TriMesh& mesh, const MapOptions& options) {
    if (mesh.boundary_loops.size() != 2) fail(ErrorKind::topology, "mapping needs a region with exactly one hole");
    const auto& outer = mesh.boundary_loops[0];
    const auto& inner = mesh.boundary_loops[1];
    const int n_in = static_cast<int>(inner.size());
    const int v1 = inner[((options.cut_start % n_in) + n_in) % n_in];
    int v2 = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int v : outer) {
        const double d = dist(mesh.vertices[v], mesh.vertices[v1]);
        if (d < best || (d == best && v < v2)) {
            best = d;
            v2 = v;
        }
    }
    MapResult res;
    res.cut = shortest_edge_path(mesh, v1, v2);
    res.sliced = slice_along_path(mesh, res.cut);
    const SlicedMesh& S = res.sliced;
    QuadCorners corners{S.v1, S.v2, S.v2p, S.v1p};
    res.rect = rectangular_map(S.mesh, corners, S.seam_pairs, options.search);
    if (const int nf = count_flipped_faces(S.mesh, res.rect.images))
        fail(ErrorKind::bijectivity, "rectangular map folds " + std::to_string(nf) + " faces");
    res.annulus_uncorrected = exponential_annulus_map(res.rect.images, res.rect.L);
    const double tol_map = 1e-6;
    std::vector<Vec2> merged;
    if (options.correct) {
        res.correction = quasiconformal_correction(S, res.annulus_uncorrected, res.rect.L, tol_map);
        merged = res.correction.merged_images;
    } else {
        res.correction.sliced_images = res.annulus_uncorrected;
        res.correction.sup_before = res.correction.sup_after = beltrami_coefficient(S.mesh, res.annulus_uncorrected).sup_norm();
        merged.assign(mesh.vertices.size(), Vec2{});
        for (size_t v = 0; v < S.provenance.size(); ++v)
            if (static_cast<int>(v) == S.provenance[v]) merged[v] = res.annulus_uncorrected[v];
    }
    std::vector<std::pair<int, int>> seam;
    for (const auto& [lo, up] : S.seam_pairs) seam.push_back({lo, up});
    res.atlas = compose_tau(mesh, merged, res.rect.L, seam);
    if (boundary_radial_deviation(res.atlas) > res.atlas.tol_map)
        fail(ErrorKind::numerical, "annulus boundary images deviate from their circles");
    return res;
}

}  // namespace qcov
