#include "qcov/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "qcov/errors.hpp"

namespace qcov {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Typed, path-aware access to one JSON object; every key must be consumed or listed.
class Node {
public:
    Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail(ErrorKind::config, where() + " must be an object");
    }

    void allow(std::initializer_list<const char*> keys) const {
        std::set<std::string> ok(keys.begin(), keys.end());
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!ok.count(it.key())) fail(ErrorKind::config, "unknown key " + child(it.key()));
    }
    bool has(const char* key) const { return j_.contains(key); }
    Node object(const char* key) const { return Node(require(key), child(key)); }
    const json& raw(const char* key) const { return require(key); }
    std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    double number(const char* key, double fallback) const {
        if (!has(key)) return fallback;
        return as_number(j_.at(key), child(key));
    }
    double number(const char* key) const { return as_number(require(key), child(key)); }
    long long integer(const char* key, long long fallback) const {
        if (!has(key)) return fallback;
        return as_integer(j_.at(key), child(key));
    }
    long long integer(const char* key) const { return as_integer(require(key), child(key)); }
    bool boolean(const char* key, bool fallback) const {
        if (!has(key)) return fallback;
        if (!j_.at(key).is_boolean()) fail(ErrorKind::config, child(key) + " must be true or false");
        return j_.at(key).get<bool>();
    }
    std::string string(const char* key, const std::string& fallback) const {
        if (!has(key)) return fallback;
        if (!j_.at(key).is_string()) fail(ErrorKind::config, child(key) + " must be a string");
        return j_.at(key).get<std::string>();
    }
    std::vector<double> numbers(const char* key) const {
        if (!has(key)) return {};
        const json& a = j_.at(key);
        if (!a.is_array()) fail(ErrorKind::config, child(key) + " must be an array of numbers");
        std::vector<double> out;
        for (size_t i = 0; i < a.size(); ++i) out.push_back(as_number(a[i], child(key) + "[" + std::to_string(i) + "]"));
        return out;
    }
    Vec2 point(const char* key, Vec2 fallback) const {
        if (!has(key)) return fallback;
        const auto v = numbers(key);
        if (v.size() != 2) fail(ErrorKind::config, child(key) + " must be [x, y]");
        return {v[0], v[1]};
    }

    static double as_number(const json& v, const std::string& path) {
        if (!v.is_number()) fail(ErrorKind::config, path + " must be a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) fail(ErrorKind::config, path + " must be finite");
        return d;
    }
    static long long as_integer(const json& v, const std::string& path) {
        if (v.is_number_integer()) return v.get<long long>();
        if (v.is_number_float()) {
            const double d = v.get<double>();
            if (std::isfinite(d) && d == std::floor(d) && std::abs(d) < 9e15) return static_cast<long long>(d);
        }
        fail(ErrorKind::config, path + " must be an integer");
    }

private:
    const json& require(const char* key) const {
        if (!has(key)) fail(ErrorKind::config, "missing required field " + child(key));
        return j_.at(key);
    }
    std::string where() const { return path_.empty() ? "scenario" : path_; }

    const json& j_;
    std::string path_;
};

void check(bool ok, const std::string& path, const std::string& what) {
    if (!ok) fail(ErrorKind::config, path + " " + what);
}

}  // namespace

std::vector<double> Scenario::initial_psi() const {
    if (!agents.psi_init.empty()) return agents.psi_init;
    std::vector<double> psi;
    for (int i = 0; i < agents.n; ++i) psi.push_back(wrap_angle(agents.psi_offset + kTwoPi * i / agents.n));
    // keep the cyclic order starting at the smallest phase
    std::rotate(psi.begin(), std::min_element(psi.begin(), psi.end()), psi.end());
    return psi;
}

std::vector<double> Scenario::snapshot_times() const {
    if (!output.snapshot_times.empty()) return output.snapshot_times;
    const double T = run.duration;
    return {0.0, T / 3.0, 2.0 * T / 3.0, T};
}

Scenario parse_scenario(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(ErrorKind::config, std::string("scenario is not valid JSON: ") + e.what());
    }
    const Node root(doc, "");
    root.allow({"schema_version", "region", "density", "agents", "gains", "run", "search", "baseline", "seed", "output"});
    Scenario s;
    s.schema_version = static_cast<int>(root.integer("schema_version", 1));
    check(s.schema_version == 1, "schema_version", "must be 1");

    if (root.has("region")) {
        const Node r = root.object("region");
        r.allow({"generator", "params", "mesh_file", "target_vertices", "cut_start"});
        s.region.generator = r.string("generator", s.region.generator);
        s.region.mesh_file = r.string("mesh_file", "");
        s.region.target_vertices = static_cast<int>(r.integer("target_vertices", s.region.target_vertices));
        s.region.cut_start = static_cast<int>(r.integer("cut_start", 0));
        if (s.region.mesh_file.empty()) {
            try {
                default_region_params(s.region.generator);
            } catch (const Error&) {
                fail(ErrorKind::config, "region.generator '" + s.region.generator + "' is not one of annulus, square_hole, serpentine");
            }
        }
        if (r.has("params")) {
            const Node p = r.object("params");
            const auto defaults = s.region.mesh_file.empty() ? default_region_params(s.region.generator) : ParamMap{};
            for (auto it = r.raw("params").begin(); it != r.raw("params").end(); ++it) {
                if (!defaults.count(it.key()))
                    fail(ErrorKind::config, "unknown key " + p.child(it.key()) + " for generator '" + s.region.generator + "'");
                s.region.params[it.key()] = Node::as_number(it.value(), p.child(it.key()));
            }
        }
        check(s.region.target_vertices >= 16, "region.target_vertices", "must be at least 16");
    }

    if (root.has("density")) {
        const Node d = root.object("density");
        const std::string kind = d.string("kind", "uniform");
        auto& spec = s.density.spec;
        if (kind == "uniform") {
            d.allow({"kind", "base"});
            spec.kind = DensitySpec::Kind::uniform;
        } else if (kind == "gaussian") {
            d.allow({"kind", "base", "bumps"});
            spec.kind = DensitySpec::Kind::gaussian;
            if (d.has("bumps")) {
                const json& arr = d.raw("bumps");
                check(arr.is_array(), "density.bumps", "must be an array");
                for (size_t i = 0; i < arr.size(); ++i) {
                    const Node b(arr[i], "density.bumps[" + std::to_string(i) + "]");
                    b.allow({"center", "sigma", "amplitude"});
                    DensitySpec::Bump bump;
                    bump.center = b.point("center", {});
                    bump.sigma = b.number("sigma", bump.sigma);
                    bump.amplitude = b.number("amplitude", bump.amplitude);
                    check(bump.sigma > 0.0, b.child("sigma"), "must be positive");
                    spec.bumps.push_back(bump);
                }
            }
        } else if (kind == "radial") {
            d.allow({"kind", "base", "slope", "center"});
            spec.kind = DensitySpec::Kind::radial;
            spec.slope = d.number("slope", 0.0);
            spec.center = d.point("center", {});
        } else if (kind == "samples") {
            d.allow({"kind", "file"});
            s.density.samples_file = d.string("file", "");
            check(!s.density.samples_file.empty(), "density.file", "is required for kind 'samples'");
        } else {
            fail(ErrorKind::config, "density.kind '" + kind + "' is not one of uniform, gaussian, radial, samples");
        }
        spec.base = d.number("base", 1.0);
        if (spec.kind == DensitySpec::Kind::uniform) check(spec.base > 0.0, "density.base", "must be positive");
    }

    {
        const Node a = root.object("agents");
        a.allow({"n", "psi_init", "psi_offset"});
        const long long n = a.integer("n");
        check(n >= 2, "agents.n", "must be at least 2");
        check(n <= 4096, "agents.n", "is unreasonably large");
        s.agents.n = static_cast<int>(n);
        s.agents.psi_init = a.numbers("psi_init");
        s.agents.psi_offset = a.number("psi_offset", 0.0);
        if (!s.agents.psi_init.empty()) {
            check(static_cast<int>(s.agents.psi_init.size()) == s.agents.n, "agents.psi_init", "must have agents.n entries");
            for (double& p : s.agents.psi_init) p = wrap_angle(p);
            check(cyclically_ordered(s.agents.psi_init), "agents.psi_init", "must be cyclically ordered and distinct");
        }
    }

    if (root.has("gains")) {
        const Node g = root.object("gains");
        g.allow({"k_psi", "k_p", "dt"});
        s.gains.k_psi = g.number("k_psi", s.gains.k_psi);
        s.gains.k_p = g.number("k_p", s.gains.k_p);
        s.gains.dt = g.number("dt", s.gains.dt);
        check(s.gains.k_psi > 0.0, "gains.k_psi", "must be positive");
        check(s.gains.k_p > 0.0, "gains.k_p", "must be positive");
        check(s.gains.dt > 0.0, "gains.dt", "must be positive");
    }

    if (root.has("run")) {
        const Node r = root.object("run");
        r.allow({"duration", "n_bins", "geodesic_mode"});
        s.run.duration = r.number("duration", s.run.duration);
        s.run.n_bins = static_cast<int>(r.integer("n_bins", s.run.n_bins));
        const std::string mode = r.string("geodesic_mode", to_string(s.run.geodesic_mode));
        try {
            s.run.geodesic_mode = geodesic_mode_from_string(mode);
        } catch (const Error&) {
            fail(ErrorKind::config, "run.geodesic_mode '" + mode + "' is not one of mesh_edges, line_of_sight");
        }
        check(s.run.duration >= 0.0, "run.duration", "must be non-negative");
    }
    check(s.run.n_bins >= 8 * s.agents.n, "run.n_bins", "must be at least 8 * agents.n");

    if (root.has("search")) {
        const Node q = root.object("search");
        q.allow({"enabled", "K_star", "eps_p", "T_eps"});
        s.search.enabled = q.boolean("enabled", true);
        check(!(q.has("K_star") && q.has("eps_p")), "search", "takes K_star or eps_p, not both");
        s.search.K_star = static_cast<int>(q.integer("K_star", s.search.K_star));
        s.search.eps_p = q.number("eps_p", 0.0);
        s.search.T_eps = q.number("T_eps", s.search.T_eps);
        check(s.search.K_star >= 1, "search.K_star", "must be positive");
        if (q.has("eps_p")) check(s.search.eps_p > 0.0 && s.search.eps_p < kTwoPi, "search.eps_p", "must lie in (0, 2 pi)");
        check(s.search.T_eps >= 0.0, "search.T_eps", "must be non-negative");
    }

    if (root.has("baseline")) {
        const Node b = root.object("baseline");
        b.allow({"iterations", "tol"});
        s.baseline.iterations = static_cast<int>(b.integer("iterations", s.baseline.iterations));
        s.baseline.tol = b.number("tol", s.baseline.tol);
        check(s.baseline.iterations >= 0, "baseline.iterations", "must be non-negative");
        check(s.baseline.tol >= 0.0, "baseline.tol", "must be non-negative");
    }

    if (root.has("seed")) {
        const json& v = root.raw("seed");
        check(v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0), "seed",
              "must be a non-negative integer");
        s.seed = v.get<std::uint64_t>();
    }

    if (root.has("output")) {
        const Node o = root.object("output");
        o.allow({"dir", "snapshot_times"});
        s.output.dir = o.string("dir", s.output.dir);
        s.output.snapshot_times = o.numbers("snapshot_times");
        for (double t : s.output.snapshot_times)
            check(t >= 0.0 && t <= s.run.duration, "output.snapshot_times", "entries must lie in [0, run.duration]");
    }
    return s;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::config, "cannot read scenario file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    Scenario s = parse_scenario(ss.str());
    // Data files are looked up next to the scenario.
    const auto base = std::filesystem::path(path).parent_path();
    auto resolve = [&](std::string& f) {
        if (!f.empty() && std::filesystem::path(f).is_relative()) f = (base / f).string();
    };
    resolve(s.region.mesh_file);
    resolve(s.density.samples_file);
    return s;
}

std::string scenario_json(const Scenario& s) {
    ordered_json j;
    j["schema_version"] = s.schema_version;
    auto& r = j["region"];
    r["generator"] = s.region.generator;
    ParamMap params = s.region.mesh_file.empty() ? default_region_params(s.region.generator) : ParamMap{};
    for (const auto& [k, v] : s.region.params) params[k] = v;
    r["params"] = ordered_json::object();
    for (const auto& [k, v] : params) r["params"][k] = v;
    if (!s.region.mesh_file.empty()) r["mesh_file"] = s.region.mesh_file;
    r["target_vertices"] = s.region.target_vertices;
    r["cut_start"] = s.region.cut_start;
    auto& d = j["density"];
    const auto& spec = s.density.spec;
    if (!s.density.samples_file.empty()) {
        d["kind"] = "samples";
        d["file"] = s.density.samples_file;
    } else {
        d["kind"] = to_string(spec.kind);
        d["base"] = spec.base;
        if (spec.kind == DensitySpec::Kind::radial) {
            d["slope"] = spec.slope;
            d["center"] = {spec.center.x, spec.center.y};
        }
        if (spec.kind == DensitySpec::Kind::gaussian) {
            d["bumps"] = ordered_json::array();
            for (const auto& b : spec.bumps)
                d["bumps"].push_back({{"center", {b.center.x, b.center.y}}, {"sigma", b.sigma}, {"amplitude", b.amplitude}});
        }
    }
    j["agents"] = {{"n", s.agents.n}, {"psi_init", s.initial_psi()}, {"psi_offset", s.agents.psi_offset}};
    j["gains"] = {{"k_psi", s.gains.k_psi}, {"k_p", s.gains.k_p}, {"dt", s.gains.dt}};
    j["run"] = {{"duration", s.run.duration}, {"n_bins", s.run.n_bins}, {"geodesic_mode", to_string(s.run.geodesic_mode)}};
    auto& q = j["search"];
    q["enabled"] = s.search.enabled;
    if (s.search.eps_p > 0.0)
        q["eps_p"] = s.search.eps_p;
    else
        q["K_star"] = s.search.K_star;
    q["T_eps"] = s.search.T_eps;
    j["baseline"] = {{"iterations", s.baseline.iterations}, {"tol", s.baseline.tol}};
    j["seed"] = s.seed;
    j["output"] = {{"dir", s.output.dir}, {"snapshot_times", s.snapshot_times()}};
    return j.dump(2);
}

}  // namespace qcov
