#include <doctest.h>

#include <cmath>
#include <map>
#include <memory>
#include <numeric>

#include "qcov/coverage.hpp"
#include "qcov/simulation.hpp"
#include "test_util.hpp"

using namespace qcov;

namespace {

constexpr double kL = 0.12;

// Atlas whose map is the identity on a structured annulus, so both charts coincide.
struct IdentityAnnulus {
    TriMesh mesh;
    MappingAtlas atlas;
    std::unique_ptr<GeodesicGraph> graph;
    std::unique_ptr<CoverageModel> model;

    explicit IdentityAnnulus(const DensitySpec& spec, int n_bins = 64) {
        mesh = testutil::ring_annulus(std::exp(-kTwoPi * kL), 1.0, 64, 8);
        atlas = compose_tau(mesh, mesh.vertices, kL);
        graph = std::make_unique<GeodesicGraph>(annulus_graph(atlas, GeodesicMode::line_of_sight));
        model = std::make_unique<CoverageModel>(atlas, *graph, sample_density(atlas, spec), n_bins);
    }
};

const IdentityAnnulus& uniform_identity() {
    static const IdentityAnnulus a(DensitySpec{});
    return a;
}

DensitySpec bumpy() {
    DensitySpec d;
    d.kind = DensitySpec::Kind::gaussian;
    d.base = 0.2;
    d.bumps = {{{0.5, 0.4}, 0.25, 2.0}, {{-0.6, -0.2}, 0.3, 1.0}};
    return d;
}

Scenario small_scenario(const std::string& gen, const DensitySpec& density, int n_agents, int vertices = 900) {
    Scenario s;
    s.region.generator = gen;
    s.region.target_vertices = vertices;
    s.seed = 3;
    s.density.spec = density;
    s.agents.n = n_agents;
    s.run.n_bins = 128;
    return s;
}

const Pipeline& pipeline(const std::string& key) {
    static std::map<std::string, std::unique_ptr<Pipeline>> cache;
    auto it = cache.find(key);
    if (it != cache.end()) return *it->second;
    std::unique_ptr<Pipeline> p;
    if (key == "annulus/uniform") p = build_pipeline(small_scenario("annulus", DensitySpec{}, 4, 2400));
    else if (key == "annulus/bumpy") p = build_pipeline(small_scenario("annulus", bumpy(), 4));
    else if (key == "serpentine/bumpy") p = build_pipeline(small_scenario("serpentine", bumpy(), 4));
    else if (key == "square_hole/bumpy") p = build_pipeline(small_scenario("square_hole", bumpy(), 4));
    REQUIRE(p);
    return *cache.emplace(key, std::move(p)).first->second;
}

double total_mass(const TriMesh& m, const DensityField& d) {
    double s = 0.0;
    for (size_t f = 0; f < m.num_faces(); ++f) {
        const Face& F = m.faces[f];
        const double rho = (d.samples[F[0]] + d.samples[F[1]] + d.samples[F[2]]) / 3.0;
        s += rho * signed_area(m.vertices[F[0]], m.vertices[F[1]], m.vertices[F[2]]);
    }
    return s;
}

std::vector<double> random_psi(std::mt19937_64& g, int n) {
    std::vector<double> psi(n);
    for (auto& v : psi) v = testutil::uniform(g, 0.0, kTwoPi);
    std::sort(psi.begin(), psi.end());
    return psi;
}

std::vector<Vec2> random_agents(std::mt19937_64& g, const TriMesh& xi, int n) {
    std::vector<Vec2> a(n);
    for (auto& p : a) p = testutil::random_interior(g, xi);
    return a;
}

}  // namespace

TEST_CASE("angular workload profile") {
    SUBCASE("uniform density on a mapped annulus fills the bins evenly") {
        // Faces are binned whole, so each bin needs enough faces to average out.
        const Pipeline& p = pipeline("annulus/uniform");
        const WorkloadProfile prof = angular_workload_profile(*p.atlas.image, p.density, 32);
        const double mean = prof.total / prof.n_bins();
        for (double b : prof.bins) CHECK(std::abs(b - mean) / mean < 0.02);
    }
    SUBCASE("bins sum to the integrated mass and scale with the density") {
        const Pipeline& p = pipeline("serpentine/bumpy");
        const WorkloadProfile prof = angular_workload_profile(*p.atlas.image, p.density, 64);
        const double direct = total_mass(*p.atlas.image, p.density);
        CHECK(prof.total == doctest::Approx(direct).epsilon(1e-12));
        CHECK(std::accumulate(prof.bins.begin(), prof.bins.end(), 0.0) == doctest::Approx(direct).epsilon(1e-12));

        DensityField doubled = p.density;
        for (auto& v : doubled.samples) v *= 2.0;
        const WorkloadProfile prof2 = angular_workload_profile(*p.atlas.image, doubled, 64);
        for (int b = 0; b < 64; ++b) CHECK(prof2.bins[b] == doctest::Approx(2.0 * prof.bins[b]).epsilon(1e-12));

        const WorkloadProfile orig = angular_workload_profile(*p.atlas.image, p.density, 64, p.atlas.source.get());
        CHECK(orig.total == doctest::Approx(total_mass(*p.atlas.source, p.density)).epsilon(1e-12));
    }
}

TEST_CASE("sector masses") {
    const WorkloadProfile& prof = uniform_identity().model->profile();
    const double M = prof.total;
    CHECK(sector_mass(prof, 1.0, 1.0) == 0.0);
    // Whole faces are binned by centroid, so sectors are exact only to about one bin.
    CHECK(sector_mass(prof, 0.0, kTwoPi / 4) == doctest::Approx(M / 4).epsilon(0.02));
    CHECK(sector_mass(prof, 3 * kTwoPi / 4, kTwoPi / 4) == doctest::Approx(M / 2).epsilon(0.02));
    CHECK(sector_masses(prof, {2.0}) == std::vector<double>{M});

    auto g = testutil::rng(11);
    const WorkloadProfile& bp = pipeline("serpentine/bumpy").model->profile();
    for (int t = 0; t < 200; ++t) {
        const double a = testutil::uniform(g, 0.0, kTwoPi), b = testutil::uniform(g, 0.0, kTwoPi);
        CHECK(sector_mass(bp, a, b) >= 0.0);
        CHECK(sector_mass(bp, a, b) + sector_mass(bp, b, a) == doctest::Approx(bp.total).epsilon(1e-12));
        const auto psi = random_psi(g, 1 + t % 9);
        const auto m = sector_masses(bp, psi);
        CHECK(std::accumulate(m.begin(), m.end(), 0.0) == doctest::Approx(bp.total).epsilon(1e-12));
    }
}

TEST_CASE("equal-mass bar placement inverts the sector mass") {
    const WorkloadProfile& bp = pipeline("serpentine/bumpy").model->profile();
    auto g = testutil::rng(4);
    for (int t = 0; t < 100; ++t) {
        const double a = testutil::uniform(g, 0.0, kTwoPi);
        const double target = testutil::uniform(g, 0.01, 0.99) * bp.total;
        const double z = next_equal_mass_bar(bp, a, target);
        CHECK(sector_mass(bp, a, z) == doctest::Approx(target).epsilon(1e-9));
    }
}

TEST_CASE("workload imbalance function") {
    CHECK(lyapunov_value({1.0, 1.0, 1.0, 1.0}) == 0.0);
    CHECK(lyapunov_value({0.6, 0.4}) == doctest::Approx(0.01).epsilon(1e-12));
    auto g = testutil::rng(2);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> m(2 + t % 7);
        for (auto& v : m) v = testutil::uniform(g, 0.0, 3.0);
        CHECK(lyapunov_value(m) >= 0.0);
    }
}

TEST_CASE("partition bar step") {
    const WorkloadProfile& prof = uniform_identity().model->profile();
    const double M = prof.total;
    Gains gains;

    SUBCASE("balanced bars stay put") {
        const std::vector<double> psi{0.0, kTwoPi / 4, kTwoPi / 2, 3 * kTwoPi / 4};
        const auto next = partition_step(psi, prof, gains);
        for (int i = 0; i < 4; ++i) CHECK(next[i] == doctest::Approx(psi[i]).epsilon(1e-12));
    }
    SUBCASE("two agents: the heavier sector shrinks from both ends") {
        const std::vector<double> psi{0.0, 0.6 * kTwoPi};
        const auto m = sector_masses(prof, psi);
        CHECK(m[0] == doctest::Approx(0.6 * M).epsilon(0.02));
        const auto next = partition_step(psi, prof, gains);
        const double delta = gains.dt * gains.k_psi * (m[0] - m[1]);
        CHECK(delta > 0.0);
        CHECK(next[0] == doctest::Approx(psi[0] + delta).epsilon(1e-12));
        CHECK(next[1] == doctest::Approx(psi[1] - delta).epsilon(1e-12));
    }
    SUBCASE("angles wrap into [0, 2pi)") {
        const std::vector<double> psi{kTwoPi - 1e-4, 5.0};
        const auto next = partition_step(psi, prof, gains);
        for (double v : next) {
            CHECK(v >= 0.0);
            CHECK(v < kTwoPi);
        }
        CHECK(next[0] < 0.1);
    }
    SUBCASE("frozen bars keep their phase") {
        const std::vector<double> psi{0.3, 1.0, 4.0};
        const auto next = partition_step(psi, prof, gains, {1, 0, 0});
        CHECK(next[0] == psi[0]);
        CHECK(next[1] != psi[1]);
    }
}

TEST_CASE("bar dynamics conserve mass and never increase the imbalance") {
    const WorkloadProfile& bp = pipeline("serpentine/bumpy").model->profile();
    Gains gains;
    auto g = testutil::rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        auto psi = random_psi(g, 2 + trial % 6);
        double V = lyapunov_value(sector_masses(bp, psi));
        for (int step = 0; step < 200; ++step) {
            psi = partition_step(psi, bp, gains);
            REQUIRE(cyclically_ordered(psi));
            const auto m = sector_masses(bp, psi);
            CHECK(std::accumulate(m.begin(), m.end(), 0.0) == doctest::Approx(bp.total).epsilon(1e-12));
            const double Vn = lyapunov_value(m);
            CHECK(Vn <= V + 1e-12);
            V = Vn;
        }
    }
}

TEST_CASE("chart mass differences keep their sign during the transient") {
    // The two charts weigh the same pieces with different area elements, so once the annulus
    // imbalance drops below that gap the signs decouple; only the transient is asserted.
    const CoverageModel& model = *pipeline("serpentine/bumpy").model;
    Gains gains;
    std::vector<double> psi{0.1, 0.4, 0.9, 1.3};
    int first_mismatch = -1;
    for (int step = 0; step < 320; ++step) {
        const auto m = model.masses(psi);
        const auto mo = model.masses_orig(psi);
        const int n = static_cast<int>(m.size());
        double gap = 0.0;
        for (int i = 0; i < n; ++i) gap = std::max(gap, std::abs(m[i] - mo[i]));
        for (int i = 0; i < n; ++i) {
            const int j = (i + n - 1) % n;
            const double d = m[i] - m[j], dp = mo[i] - mo[j];
            if (d * dp <= 0.0 && first_mismatch < 0) first_mismatch = step;
            if (std::abs(d) > 2.0 * gap) CHECK(d * dp > 0.0);
        }
        psi = partition_step(psi, model.profile(), gains);
    }
    MESSAGE("first step with opposite chart signs: " << first_mismatch);
}

TEST_CASE("coverage cost") {
    const IdentityAnnulus& ia = uniform_identity();
    const CoverageModel& model = *ia.model;

    SUBCASE("single quadrature point gives weight times squared distance") {
        QuadratureRule rule;
        const TargetPoint tp = ia.graph->target({0.0, 0.8});
        QuadPoint q;
        q.pos = {0.0, 0.8};
        q.w = 0.7;
        q.w_orig = 0.3;
        q.target = &tp;
        rule.pts.push_back(q);
        rule.by_sector = {{0}};
        const AgentCost c = model.agent_cost(rule, 0, {0.6, 0.2}, true);
        const double d2 = 0.36 + 0.36;
        CHECK(c.J == doctest::Approx(0.7 * d2).epsilon(1e-9));
        CHECK(c.J_orig == doctest::Approx(0.3 * d2).epsilon(1e-9));
        // Straight segment, so the gradient is -2 w (q - p).
        CHECK(c.grad.x == doctest::Approx(-2 * 0.7 * (-0.6)).epsilon(1e-6));
        CHECK(c.grad.y == doctest::Approx(-2 * 0.7 * 0.6).epsilon(1e-6));
    }
    SUBCASE("doubling the density doubles the cost") {
        const Pipeline& p = pipeline("serpentine/bumpy");
        DensityField doubled = p.density;
        for (auto& v : doubled.samples) v *= 2.0;
        const CoverageModel m2(p.atlas, *p.graph, doubled, 128);
        auto g = testutil::rng(5);
        const auto psi = random_psi(g, 4);
        const auto agents = random_agents(g, *p.atlas.image, 4);
        const CostTotals a = p.model->coverage_cost(p.model->quadrature(psi, agents), agents);
        const CostTotals b = m2.coverage_cost(m2.quadrature(psi, agents), agents);
        CHECK(b.J == doctest::Approx(2.0 * a.J).epsilon(1e-12));
        CHECK(b.J_orig == doctest::Approx(2.0 * a.J_orig).epsilon(1e-12));
    }
}

TEST_CASE("cost gradient matches central differences") {
    for (const std::string key : {"serpentine/bumpy", "square_hole/bumpy"}) {
        CAPTURE(key);
        const Pipeline& p = pipeline(key);
        const CoverageModel& model = *p.model;
        auto g = testutil::rng(21);
        int checked = 0;
        for (int t = 0; t < 20; ++t) {
            const auto psi = random_psi(g, 4);
            const auto agents = random_agents(g, *p.atlas.image, 4);
            const QuadratureRule rule = model.quadrature(psi, agents);
            const int i = t % 4;
            const Vec2 grad = model.cost_gradient(rule, i, agents[i]);
            const double h = 1e-6;
            auto J = [&](Vec2 q) {
                auto moved = agents;
                moved[i] = q;
                return model.coverage_cost(rule, moved).J;
            };
            const Vec2 fd{(J(agents[i] + Vec2{h, 0}) - J(agents[i] - Vec2{h, 0})) / (2 * h),
                          (J(agents[i] + Vec2{0, h}) - J(agents[i] - Vec2{0, h})) / (2 * h)};
            if (norm(grad) < 1e-8) continue;
            CHECK(norm(fd - grad) / norm(grad) < 1e-3);
            ++checked;
        }
        CHECK(checked >= 15);
    }
}

TEST_CASE("control input") {
    const Pipeline& p = pipeline("serpentine/bumpy");
    const CoverageModel& model = *p.model;
    Gains gains;
    auto g = testutil::rng(31);
    int descents = 0, trials = 0;
    for (int t = 0; t < 20; ++t) {
        const auto psi = random_psi(g, 4);
        const auto agents = random_agents(g, *p.atlas.image, 4);
        const QuadratureRule rule = model.quadrature(psi, agents);
        const int i = t % 4;
        const Vec2 grad = model.cost_gradient(rule, i, agents[i]);
        const Vec2 u = model.control_input(rule, i, agents[i], gains);
        // The annulus chart is flat, so the input is the plain scaled negative gradient.
        CHECK(norm(u + grad * gains.k_p) <= 1e-9 * (1.0 + norm(grad)));
        if (norm(u) < 1e-9) continue;
        const Vec2 q = agents[i] + u * 1e-3;
        if (!p.graph->contains(q)) continue;
        ++trials;
        auto moved = agents;
        moved[i] = q;
        if (model.coverage_cost(rule, moved).J < model.coverage_cost(rule, agents).J) ++descents;
    }
    CHECK(trials > 10);
    CHECK(descents == trials);
}

TEST_CASE("agent step keeps both charts consistent") {
    const Pipeline& p = pipeline("serpentine/bumpy");
    const CoverageModel& model = *p.model;
    PartitionState st = model.initial_state({0.0, 1.5, 3.0, 4.5});
    Gains gains;
    for (int step = 0; step < 20; ++step) advance(model, st, gains);
    REQUIRE(st.agents_orig.size() == 4);
    for (int i = 0; i < 4; ++i) {
        const Vec2 back = tau_forward(p.atlas, st.agents_orig[i]);
        CHECK(norm(back - st.agents_xi[i]) < 1e-9);
        CHECK(p.graph->contains(st.agents_xi[i]));
    }
}

TEST_CASE("sector centroid search") {
    SUBCASE("symmetric sector puts the optimum on its bisector") {
        const CoverageModel& model = *uniform_identity().model;
        const Vec2 c = model.centroid_solve({0.0, kTwoPi / 4, kTwoPi / 2, 3 * kTwoPi / 4}, 0, 1e-6);
        // The triangulation is not mirror-symmetric; one angular column spans 0.098 rad.
        CHECK(std::abs(std::atan2(c.y, c.x) - kTwoPi / 8) < 0.02);
    }
    SUBCASE("agrees with a brute-force grid search") {
        const Pipeline& p = pipeline("annulus/bumpy");
        const CoverageModel& model = *p.model;
        const std::vector<double> psi{0.2, 1.9, 3.4, 5.0};
        const int i = 1;
        const Vec2 c = model.centroid_solve(psi, i, 1e-5);
        const QuadratureRule rule = model.quadrature(psi, {});
        const AgentCost at_c = model.agent_cost(rule, i, c, true);
        CHECK(norm(at_c.grad) < 1e-3);

        double h = 0.0;
        const TriMesh& xi = *p.atlas.image;
        for (const Face& F : xi.faces) h += norm(xi.vertices[F[0]] - xi.vertices[F[1]]);
        h /= xi.num_faces();
        const double step = h / 4;
        double best = std::numeric_limits<double>::infinity();
        Vec2 arg;
        for (double x = -1.0; x <= 1.0; x += step)
            for (double y = -1.0; y <= 1.0; y += step) {
                if (!p.graph->contains({x, y})) continue;
                const double J = model.agent_cost(rule, i, {x, y}, false).J;
                if (J < best) best = J, arg = {x, y};
            }
        CHECK(norm(arg - c) < 2 * h);
        CHECK(at_c.J <= best + 1e-9 * std::abs(best));
    }
    SUBCASE("single agent converges over the whole region") {
        const CoverageModel& model = *pipeline("serpentine/bumpy").model;
        int iters = 0;
        const Vec2 c = model.centroid_solve({0.0}, 0, 1e-4, &iters);
        const QuadratureRule rule = model.quadrature({0.0}, {c});
        CHECK(norm(model.cost_gradient(rule, 0, c)) < 1e-3);
    }
}

TEST_CASE("bar crossing angles stay within the dilatation bound") {
    for (const std::string key : {"serpentine/bumpy", "square_hole/bumpy", "annulus/bumpy"}) {
        CAPTURE(key);
        const Pipeline& p = pipeline(key);
        auto g = testutil::rng(9);
        for (int t = 0; t < 5; ++t) {
            const AngleCheck a = bar_angle_check(p.atlas, random_psi(g, 6));
            CHECK(a.max_excess <= 1e-12);
            CHECK(a.sup_mu < 1.0);
        }
    }
}
