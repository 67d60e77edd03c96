#include <doctest.h>

#include <cmath>
#include <map>
#include <memory>

#include "qcov/errors.hpp"
#include "qcov/search.hpp"
#include "qcov/simulation.hpp"
#include "test_util.hpp"

using namespace qcov;

namespace {

const Pipeline& small_pipeline() {
    static const std::unique_ptr<Pipeline> p = [] {
        Scenario s;
        s.region.generator = "serpentine";
        s.region.target_vertices = 700;
        s.seed = 7;
        s.density.spec.kind = DensitySpec::Kind::gaussian;
        s.density.spec.base = 0.3;
        s.density.spec.bumps = {{{0.4, 0.5}, 0.3, 2.0}};
        s.agents.n = 3;
        s.run.n_bins = 128;
        return build_pipeline(s);
    }();
    return *p;
}

EpisodeRecord record(int k, double J_orig) {
    EpisodeRecord r;
    r.k = k;
    r.J_orig = J_orig;
    return r;
}

}  // namespace

TEST_CASE("anchor plan size") {
    CHECK(make_anchor_plan(kTwoPi / 30).K_star == 30);
    CHECK(make_anchor_plan(kPi).K_star == 2);
    CHECK(make_anchor_plan(kTwoPi / 7 + 1e-9).K_star == 7);
    CHECK(make_anchor_plan(kTwoPi / 7 - 1e-9).K_star == 8);
    CHECK_THROWS_AS(make_anchor_plan(0.0), Error);
    CHECK_THROWS_AS(make_anchor_plan(-1.0), Error);

    auto g = testutil::rng(3);
    for (int t = 0; t < 500; ++t) {
        const double eps = testutil::uniform(g, 0.01, 6.0);
        const AnchorPlan p = make_anchor_plan(eps);
        CHECK(kTwoPi / p.K_star <= eps);
        if (p.K_star > 1) CHECK(kTwoPi / (p.K_star - 1) > eps);
        REQUIRE(p.anchors.size() == static_cast<size_t>(p.K_star));
        CHECK(p.anchors[0] == 0.0);
    }
    const AnchorPlan p30 = anchor_plan_from_count(30);
    CHECK(p30.anchors[15] == doctest::Approx(kPi).epsilon(1e-15));
}

TEST_CASE("closest bar to an anchor") {
    CHECK(closest_agent({0.0, kPi}, 0.1) == std::vector<int>{0});
    CHECK(closest_agent({0.0, kPi}, kPi / 2) == std::vector<int>{0, 1});
    CHECK(closest_agent({0.1, 3.0}, 6.2) == std::vector<int>{0});
    CHECK(closest_agent({1.0, 2.0, 4.0}, 4.0) == std::vector<int>{2});
    CHECK(closest_agent({}, 1.0).empty());
}

TEST_CASE("ring union of cost sets") {
    SUBCASE("single agent keeps its own set") {
        const RingUnion u = ring_union_costs({{{0, 0, 2.0, 3.0}, {0, 1, 1.0, 1.5}}});
        CHECK(u.rounds == 0);
        CHECK(u.J[0] == 3.0);
        CHECK(u.J_orig[0] == 4.5);
    }
    SUBCASE("four agents end with the same total") {
        const RingUnion u = ring_union_costs({{{0, 0, 1.0, 1.0}}, {{1, 0, 2.0, 2.0}}, {{2, 0, 3.0, 3.0}}, {{3, 0, 4.0, 4.0}}});
        CHECK(u.rounds == 3);
        for (int i = 0; i < 4; ++i) {
            CHECK(u.J[i] == 10.0);
            CHECK(u.held[i].size() == 4);
        }
    }
    SUBCASE("equal costs from different agents are all kept") {
        const RingUnion u = ring_union_costs({{{0, 0, 1.0, 1.0}}, {{1, 0, 1.0, 1.0}}, {{2, 0, 1.0, 1.0}}});
        for (int i = 0; i < 3; ++i) CHECK(u.J[i] == 3.0);
    }
    SUBCASE("matches direct summation on random instances") {
        auto g = testutil::rng(17);
        for (int t = 0; t < 1000; ++t) {
            const int n = 1 + static_cast<int>(g() % 16);
            std::vector<std::vector<CostEntry>> own(n);
            double J = 0.0, Jo = 0.0;
            for (int i = 0; i < n; ++i) {
                const int entries = static_cast<int>(g() % 3);
                for (int e = 0; e < entries; ++e) {
                    // Coarse values so collisions between agents are common.
                    const double c = std::floor(testutil::uniform(g, 0.0, 4.0));
                    own[i].push_back({i, e, c, 2.0 * c});
                    J += c;
                    Jo += 2.0 * c;
                }
            }
            const RingUnion u = ring_union_costs(own);
            for (int i = 0; i < n; ++i) {
                CHECK(u.J[i] == doctest::Approx(J).epsilon(1e-12));
                CHECK(u.J_orig[i] == doctest::Approx(Jo).epsilon(1e-12));
            }
            CHECK(u.rounds <= n - 1);
        }
    }
}

TEST_CASE("best anchor selection") {
    std::vector<EpisodeRecord> recs;
    for (int k = 0; k < 5; ++k) recs.push_back(record(k, 10.0 - k));
    CHECK(select_best(recs, 5) == 4);
    recs[1].J_orig = 0.5;
    recs[3].J_orig = 0.5;
    CHECK(select_best(recs, 5) == 1);
    std::swap(recs[0], recs[3]);
    CHECK(select_best(recs, 5) == 1);
    recs.pop_back();
    CHECK_THROWS_AS(select_best(recs, 5), Error);
}

TEST_CASE("anchor episodes") {
    const CoverageModel& model = *small_pipeline().model;
    const PartitionState init = model.initial_state({0.5, 2.6, 4.7});
    Gains gains;

    SUBCASE("zero horizon reports the pinned initial configuration") {
        const EpisodeRecord r = run_anchor_episode(model, 0, 0.0, init, 0.0, gains);
        CHECK(r.frozen == 0);
        CHECK(r.final_state.psi[0] == 0.0);
        PartitionState pinned = init;
        pinned.psi[0] = 0.0;
        const CostTotals c = evaluate(model, pinned);
        CHECK(r.J == doctest::Approx(c.J).epsilon(1e-12));
        CHECK(r.J_orig == doctest::Approx(c.J_orig).epsilon(1e-12));
    }
    SUBCASE("the pinned bar never moves") {
        const EpisodeRecord r = run_anchor_episode(model, 3, 2.9, init, 1.0, gains);
        CHECK(r.frozen == 1);
        CHECK(r.final_state.psi[1] == 2.9);
        CHECK(r.final_state.psi[0] != init.psi[0]);
        double J = 0.0;
        for (const auto& a : r.agents) J += a.J;
        CHECK(r.J == doctest::Approx(J).epsilon(1e-12));
    }
    SUBCASE("negative horizon is rejected") {
        CHECK_THROWS_AS(run_anchor_episode(model, 0, 0.0, init, -1.0, gains), Error);
    }
}

TEST_CASE("anchor sweep is independent of the worker count") {
    const CoverageModel& model = *small_pipeline().model;
    const PartitionState init = model.initial_state({0.5, 2.6, 4.7});
    Gains gains;
    const AnchorPlan plan = anchor_plan_from_count(6);
    const SweepResult a = run_sweep(model, init, plan, 0.5, gains, 1);
    const SweepResult b = run_sweep(model, init, plan, 0.5, gains, 4);
    REQUIRE(a.records.size() == 6);
    CHECK(a.k_star == b.k_star);
    for (int k = 0; k < 6; ++k) {
        CHECK(a.records[k].k == k);
        CHECK(a.records[k].J == b.records[k].J);
        CHECK(a.records[k].J_orig == b.records[k].J_orig);
        CHECK(a.records[k].final_state.psi == b.records[k].final_state.psi);
        CHECK(a.records[a.k_star].J_orig <= a.records[k].J_orig);
    }
}
