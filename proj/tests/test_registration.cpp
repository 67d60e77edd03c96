#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "qcov/errors.hpp"
#include "qcov/regions.hpp"
#include "qcov/registration.hpp"
#include "test_util.hpp"

using namespace qcov;

namespace {

std::vector<AgentMapRecord> bare_records(const std::vector<double>& mu, const std::vector<double>& len) {
    std::vector<AgentMapRecord> out;
    for (size_t i = 0; i < mu.size(); ++i) {
        AgentMapRecord r;
        r.agent_id = static_cast<int>(i) + 1;
        r.local_mu_norm = mu[i];
        r.local_length = len[i];
        out.push_back(r);
    }
    return out;
}

std::vector<Vec2> random_cloud(std::mt19937_64& g, int n) {
    std::vector<Vec2> pts;
    for (int i = 0; i < n; ++i) pts.push_back({testutil::uniform(g, 0, 1), testutil::uniform(g, 0, 0.6)});
    return pts;
}

std::vector<Vec2> moved(const RigidTransform& T, const std::vector<Vec2>& pts) {
    std::vector<Vec2> out;
    for (const Vec2& p : pts) out.push_back(T.apply(p));
    return out;
}

double deg(double d) { return d * kPi / 180.0; }

}  // namespace

TEST_CASE("ring consensus picks the smallest distortion") {
    SUBCASE("three agents") {
        const auto c = ring_consensus_length(bare_records({0.3, 0.1, 0.2}, {1.0, 0.5, 0.8}));
        CHECK(c.L_star == 0.5);
        CHECK(c.agent == 2);
    }
    SUBCASE("ties go to the lowest id") {
        const auto c = ring_consensus_length(bare_records({0.2, 0.2, 0.2, 0.2}, {1.0, 2.0, 3.0, 4.0}));
        CHECK(c.agent == 1);
        CHECK(c.L_star == 1.0);
    }
    SUBCASE("two agents") {
        const auto c = ring_consensus_length(bare_records({0.2, 0.4}, {0.7, 0.9}));
        CHECK(c.agent == 1);
        CHECK(c.L_star == 0.7);
    }
    SUBCASE("one agent sends nothing") {
        const auto c = ring_consensus_length(bare_records({0.5}, {1.25}));
        CHECK(c.agent == 1);
        CHECK(c.trace.empty());
    }
}

TEST_CASE("ring consensus equals the global argmin on random instances") {
    auto g = testutil::rng(1234);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 1 + static_cast<int>(g() % 16);
        std::vector<double> mu(n), len(n);
        // Coarse values so ties are common.
        for (int i = 0; i < n; ++i) {
            mu[i] = static_cast<double>(g() % 6) / 10.0;
            len[i] = 0.1 + static_cast<double>(g() % 1000) / 100.0;
        }
        auto recs = bare_records(mu, len);
        std::shuffle(recs.begin(), recs.end(), g);
        const auto c = ring_consensus_length(recs);
        int best = 0;
        for (int i = 1; i < n; ++i)
            if (mu[i] < mu[best]) best = i;
        CAPTURE(trial);
        REQUIRE(c.agent == best + 1);
        REQUIRE(c.L_star == len[best]);
        // Messages only travel between ring neighbours.
        for (const auto& m : c.trace) {
            const int d = std::abs(m.from - m.to);
            CHECK((d == 1 || d == n - 1));
        }
    }
}

TEST_CASE("consensus trace serialises one JSON object per message") {
    const auto c = ring_consensus_length(bare_records({0.3, 0.1, 0.2, 0.4}, {1, 2, 3, 4}));
    const std::string text = trace_jsonl(c.trace);
    size_t lines = 0, start = 0;
    while (start < text.size()) {
        const size_t end = text.find('\n', start);
        const auto j = nlohmann::json::parse(text.substr(start, end - start));
        CHECK(j.contains("sweep"));
        CHECK(j.contains("from"));
        CHECK(j.contains("to"));
        CHECK(j.contains("mu"));
        ++lines;
        start = end + 1;
    }
    CHECK(lines == c.trace.size());
    CHECK(text == trace_jsonl(ring_consensus_length(bare_records({0.3, 0.1, 0.2, 0.4}, {1, 2, 3, 4})).trace));
}

TEST_CASE("rigid transforms compose and invert") {
    const RigidTransform a{0.3, {1.0, -2.0}}, b{-1.1, {0.5, 0.25}};
    const Vec2 p{0.7, 0.2};
    CHECK(dist(a.compose(b).apply(p), a.apply(b.apply(p))) < 1e-14);
    CHECK(dist(a.inverse().apply(a.apply(p)), p) < 1e-14);
}

TEST_CASE("k-d tree agrees with brute force and breaks ties by index") {
    auto g = testutil::rng(4);
    const auto pts = random_cloud(g, 300);
    const KdTree tree(pts);
    for (int i = 0; i < 500; ++i) {
        const Vec2 q{testutil::uniform(g, -0.2, 1.2), testutil::uniform(g, -0.2, 0.8)};
        int best = 0;
        for (size_t j = 1; j < pts.size(); ++j)
            if (norm2(pts[j] - q) < norm2(pts[best] - q)) best = static_cast<int>(j);
        CHECK(tree.nearest(q) == best);
    }
    const KdTree dup({{1, 1}, {0, 0}, {1, 1}, {0, 0}});
    CHECK(dup.nearest({0.1, 0.0}) == 1);
    CHECK(dup.nearest({0.9, 1.0}) == 0);
}

TEST_CASE("closed-form rigid fit is exact on noiseless pairs") {
    auto g = testutil::rng(6);
    const auto a = random_cloud(g, 20);
    const RigidTransform T{deg(-25), {0.4, 0.1}};
    const RigidTransform fit = fit_rigid(a, moved(T, a));
    CHECK(fit.angle == doctest::Approx(T.angle).epsilon(1e-12));
    CHECK(dist(fit.translation, T.translation) < 1e-12);
}

TEST_CASE("ICP") {
    auto g = testutil::rng(77);
    const auto source = random_cloud(g, 400);
    SUBCASE("recovers a 10 degree rotation with offset") {
        const RigidTransform T{deg(10), {0.1, -0.2}};
        const IcpResult r = icp_register(source, moved(T, source));
        CHECK(std::abs(r.transform.angle - T.angle) < 1e-6);
        CHECK(dist(r.transform.translation, T.translation) < 1e-6);
        CHECK(r.rms < 1e-8);
        for (size_t i = 1; i < r.rms_history.size(); ++i) CHECK(r.rms_history[i] <= r.rms_history[i - 1]);
    }
    SUBCASE("identical clouds") {
        const IcpResult r = icp_register(source, source);
        CHECK(r.rms == 0.0);
        CHECK(r.transform.angle == 0.0);
        CHECK(norm(r.transform.translation) == 0.0);
    }
    SUBCASE("random rotations up to 30 degrees about the cloud") {
        for (int trial = 0; trial < 20; ++trial) {
            const RigidTransform T{deg(testutil::uniform(g, -30, 30)),
                                   {testutil::uniform(g, -0.1, 0.1), testutil::uniform(g, -0.1, 0.1)}};
            const IcpResult r = icp_register(source, moved(T, source));
            CAPTURE(T.angle);
            CHECK(std::abs(r.transform.angle - T.angle) < 1e-6);
            CHECK(dist(r.transform.translation, T.translation) < 1e-6);
        }
    }
    SUBCASE("thirty percent subsample under a 5 degree rotation") {
        std::vector<Vec2> target = random_cloud(g, 1500);
        std::vector<Vec2> sub;
        for (const Vec2& p : target)
            if (testutil::uniform(g, 0, 1) < 0.3) sub.push_back(p);
        const RigidTransform T{deg(5), {0.0, 0.0}};
        const IcpResult r = icp_register(moved(T.inverse(), sub), target);
        CHECK(r.rms < 1e-3);
        for (size_t i = 1; i < r.rms_history.size(); ++i) CHECK(r.rms_history[i] <= r.rms_history[i - 1]);
    }
    SUBCASE("too few points") {
        try {
            icp_register({{0, 0}, {1, 0}}, source);
            FAIL("expected an argument error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::argument);
        }
    }
}

TEST_CASE("Hausdorff distance") {
    CHECK(hausdorff_distance({{0, 0}, {1, 0}}, {{0, 0}, {1, 0}}) == 0.0);
    CHECK(hausdorff_distance({{0, 0}}, {{0, 0}, {3, 4}}) == doctest::Approx(5.0));
}

TEST_CASE("merging agent clouds") {
    const TriMesh mesh = generate_region("annulus", {}, 800, 3);
    std::set<int> all_ids;
    for (size_t v = 0; v < mesh.num_vertices(); ++v) all_ids.insert(static_cast<int>(v));

    SUBCASE("a single agent keeps its cloud") {
        const auto recs = prepare_agent_records(mesh, 1, 5);
        REQUIRE(recs.size() == 1);
        const MergeResult m = merge_global_cloud(recs, recs[0].local_length);
        // The cloud comes from the slit mesh; its seam copies coincide and are coalesced, nothing else moves.
        const std::set<int> ids(recs[0].source_ids.begin(), recs[0].source_ids.end());
        CHECK(m.points.size() == ids.size());
        CHECK(m.duplicates == static_cast<int>(recs[0].sub_cloud.size() - ids.size()));
        CHECK(hausdorff_distance(m.points, recs[0].sub_cloud) < 1e-9);
    }
    SUBCASE("two overlapping strips cover the region once") {
        const auto recs = prepare_agent_records(mesh, 2, 5);
        REQUIRE(recs.size() == 2);
        std::set<int> a(recs[0].source_ids.begin(), recs[0].source_ids.end());
        std::set<int> b(recs[1].source_ids.begin(), recs[1].source_ids.end());
        std::vector<int> overlap;
        std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(overlap));
        CHECK(!overlap.empty());
        std::set<int> uni = a;
        uni.insert(b.begin(), b.end());
        CHECK(uni == all_ids);

        const auto c = ring_consensus_length(recs);
        const MergeResult m = merge_global_cloud(recs, c.L_star);
        CHECK(m.points.size() == uni.size());
        CHECK(m.duplicates == static_cast<int>(overlap.size()));
        CHECK(hausdorff_distance(m.points, mesh.vertices) < m.merge_eps);
    }
    SUBCASE("merge is insensitive to record order") {
        for (int n : {3, 5}) {
            auto recs = prepare_agent_records(mesh, n, 11);
            const MergeResult a = merge_global_cloud(recs, 1.0);
            auto g = testutil::rng(static_cast<std::uint64_t>(n));
            for (int k = 0; k < 3; ++k) {
                std::shuffle(recs.begin(), recs.end(), g);
                const MergeResult b = merge_global_cloud(recs, 1.0);
                CHECK(hausdorff_distance(a.points, b.points) < a.merge_eps);
            }
        }
    }
    SUBCASE("agent frames are recovered") {
        const auto recs = prepare_agent_records(mesh, 4, 2);
        const MergeResult m = merge_global_cloud(recs, 1.0);
        REQUIRE(m.transforms.size() == 4);
        double worst = 0.0;
        for (size_t r = 0; r < recs.size(); ++r)
            for (size_t i = 0; i < recs[r].sub_cloud.size(); ++i)
                worst = std::max(worst, dist(m.transforms[r].apply(recs[r].sub_cloud[i]),
                                             mesh.vertices[recs[r].source_ids[i]]));
        CHECK(worst < 1e-9);
    }
}
