#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "qcov/errors.hpp"
#include "qcov/mesh.hpp"

namespace qcov {

std::string sidecar_path(const std::string& off_path) {
    const auto dot = off_path.rfind('.');
    const auto slash = off_path.find_last_of('/');
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return off_path + ".loops.json";
    return off_path.substr(0, dot) + ".loops.json";
}

void write_mesh(const TriMesh& mesh, const std::string& off_path) {
    std::ofstream off(off_path);
    if (!off) fail(ErrorKind::io, "cannot write " + off_path);
    off << "OFF\n" << mesh.vertices.size() << ' ' << mesh.faces.size() << " 0\n";
    char buf[96];
    for (const auto& p : mesh.vertices) {
        std::snprintf(buf, sizeof buf, "%.17g %.17g 0\n", p.x, p.y);
        off << buf;
    }
    for (const auto& f : mesh.faces) off << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
    if (!off) fail(ErrorKind::io, "failed writing " + off_path);

    nlohmann::json side;
    side["boundary_loops"] = mesh.boundary_loops;
    std::vector<std::string> tags;
    for (auto t : mesh.vertex_tags) tags.emplace_back(to_string(t));
    side["vertex_tags"] = tags;
    std::ofstream js(sidecar_path(off_path));
    if (!js) fail(ErrorKind::io, "cannot write " + sidecar_path(off_path));
    js << side.dump(1) << '\n';
}

TriMesh read_mesh(const std::string& off_path) {
    std::ifstream in(off_path);
    if (!in) fail(ErrorKind::io, "cannot read " + off_path);
    std::string header;
    in >> header;
    if (header != "OFF") fail(ErrorKind::io, off_path + ": missing OFF header");
    long nv = -1, nf = -1, ne = 0;
    if (!(in >> nv >> nf >> ne) || nv < 0 || nf < 0) fail(ErrorKind::io, off_path + ": bad counts line");
    TriMesh mesh;
    mesh.vertices.resize(nv);
    for (long i = 0; i < nv; ++i) {
        double z = 0;
        std::string line;
        if (!(in >> mesh.vertices[i].x >> mesh.vertices[i].y)) fail(ErrorKind::io, off_path + ": bad vertex line");
        std::getline(in, line);
        std::istringstream rest(line);
        rest >> z;
    }
    mesh.faces.resize(nf);
    for (long i = 0; i < nf; ++i) {
        int k = 0;
        if (!(in >> k) || k != 3) fail(ErrorKind::io, off_path + ": only triangular faces are supported");
        for (int j = 0; j < 3; ++j) {
            if (!(in >> mesh.faces[i][j]) || mesh.faces[i][j] < 0 || mesh.faces[i][j] >= nv)
                fail(ErrorKind::io, off_path + ": bad face index");
        }
    }
    std::ifstream js(sidecar_path(off_path));
    if (js) {
        nlohmann::json side;
        try {
            js >> side;
            mesh.boundary_loops = side.at("boundary_loops").get<std::vector<std::vector<int>>>();
            if (side.contains("vertex_tags")) {
                for (const auto& t : side["vertex_tags"]) mesh.vertex_tags.push_back(vertex_tag_from_string(t));
            }
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::io, sidecar_path(off_path) + ": " + e.what());
        }
        for (const auto& loop : mesh.boundary_loops)
            for (int v : loop)
                if (v < 0 || v >= nv) fail(ErrorKind::io, "boundary loop index out of range");
        if (!mesh.vertex_tags.empty() && static_cast<long>(mesh.vertex_tags.size()) != nv)
            fail(ErrorKind::io, "vertex tag count does not match vertex count");
    } else {
        mesh.boundary_loops = extract_boundary_loops(mesh.faces, mesh.vertices);
    }
    if (mesh.vertex_tags.empty()) mesh.vertex_tags = effective_tags(mesh);
    validate_mesh(mesh);
    return mesh;
}

}  // namespace qcov
