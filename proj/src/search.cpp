#include "qcov/search.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <thread>

#include "qcov/errors.hpp"

namespace qcov {

AnchorPlan make_anchor_plan(double eps_p) {
    if (!(eps_p > 0.0 && eps_p < kTwoPi)) fail(ErrorKind::argument, "eps_p must lie in (0, 2 pi)");
    int k = static_cast<int>(std::ceil(kTwoPi / eps_p));
    while (k > 1 && kTwoPi / (k - 1) <= eps_p) --k;
    while (kTwoPi / k > eps_p) ++k;
    AnchorPlan plan = anchor_plan_from_count(k);
    plan.eps_p = eps_p;
    return plan;
}

AnchorPlan anchor_plan_from_count(int K_star) {
    if (K_star < 1) fail(ErrorKind::argument, "K_star must be positive");
    AnchorPlan plan;
    plan.K_star = K_star;
    plan.eps_p = kTwoPi / K_star;
    for (int k = 0; k < K_star; ++k) plan.anchors.push_back(kTwoPi * k / K_star);
    return plan;
}

std::vector<int> closest_agent(const std::vector<double>& psi, double anchor) {
    std::vector<int> out;
    if (psi.empty()) return out;
    double best = kTwoPi;
    for (double p : psi) best = std::min(best, circular_distance(p, anchor));
    for (size_t i = 0; i < psi.size(); ++i)
        if (circular_distance(psi[i], anchor) <= best + 1e-12) out.push_back(static_cast<int>(i));
    return out;
}

RingUnion ring_union_costs(const std::vector<std::vector<CostEntry>>& own) {
    const size_t n = own.size();
    using Key = std::pair<int, int>;
    std::vector<std::map<Key, CostEntry>> sets(n);
    for (size_t i = 0; i < n; ++i)
        for (const CostEntry& e : own[i]) sets[i].emplace(Key{e.agent, e.anchor}, e);
    RingUnion out;
    // Synchronous rounds: every agent receives what its predecessor held at the end of the previous round.
    for (;;) {
        const auto inbox = sets;
        bool changed = false;
        for (size_t i = 0; i < n; ++i) {
            const auto& from = inbox[(i + n - 1) % n];
            const size_t before = sets[i].size();
            sets[i].insert(from.begin(), from.end());
            changed = changed || sets[i].size() != before;
        }
        if (!changed) break;
        ++out.rounds;
    }
    out.held.resize(n);
    out.J.assign(n, 0.0);
    out.J_orig.assign(n, 0.0);
    for (size_t i = 0; i < n; ++i) {
        for (const auto& [key, e] : sets[i]) {
            out.held[i].push_back(e);
            out.J[i] += e.J;
            out.J_orig[i] += e.J_orig;
        }
    }
    return out;
}

EpisodeRecord run_anchor_episode(const CoverageModel& model, int k, double anchor, const PartitionState& initial,
                                 double T_eps, const Gains& gains) {
    if (T_eps < 0.0) fail(ErrorKind::argument, "T_eps must be non-negative");
    EpisodeRecord rec;
    rec.k = k;
    rec.anchor = wrap_angle(anchor);
    PartitionState st = initial;
    const size_t n = st.psi.size();
    try {
        const auto chi = closest_agent(st.psi, rec.anchor);
        rec.frozen = chi.front();
        st.psi[rec.frozen] = rec.anchor;
        if (!cyclically_ordered(st.psi)) fail(ErrorKind::integration, "pinning the bar reordered the partition");
        st.masses = model.masses(st.psi);
        std::vector<char> frozen(n, 0);
        frozen[rec.frozen] = 1;
        const long steps = std::lround(T_eps / gains.dt);
        for (long s = 0; s < steps; ++s) advance(model, st, gains, frozen);
    } catch (const Error& e) {
        throw Error(e.kind(), "anchor " + std::to_string(k) + ": " + e.detail());
    }
    const CostTotals c = evaluate(model, st);
    std::vector<std::vector<CostEntry>> own(n);
    rec.agents.resize(n);
    for (size_t i = 0; i < n; ++i) {
        rec.agents[i] = {st.psi[i], st.agents_xi[i], st.agents_orig[i], c.per_agent[i], c.per_agent_orig[i]};
        own[i].push_back({static_cast<int>(i), k, c.per_agent[i], c.per_agent_orig[i]});
    }
    const RingUnion ring = ring_union_costs(own);
    rec.J = ring.J.empty() ? 0.0 : ring.J[0];
    rec.J_orig = ring.J_orig.empty() ? 0.0 : ring.J_orig[0];
    rec.V_final = lyapunov_value(st.masses);
    rec.final_state = std::move(st);
    return rec;
}

int select_best(const std::vector<EpisodeRecord>& records, int K_star) {
    std::vector<const EpisodeRecord*> by_k(std::max(K_star, 0), nullptr);
    for (const auto& r : records)
        if (r.k >= 0 && r.k < K_star) by_k[r.k] = &r;
    for (int k = 0; k < K_star; ++k)
        if (!by_k[k]) fail(ErrorKind::completeness, "missing episode record for anchor " + std::to_string(k));
    if (K_star < 1) fail(ErrorKind::completeness, "no episode records");
    int best = 0;
    for (int k = 1; k < K_star; ++k)
        if (by_k[k]->J_orig < by_k[best]->J_orig) best = k;
    return best;
}

SweepResult run_sweep(const CoverageModel& model, const PartitionState& initial, const AnchorPlan& plan, double T_eps,
                      const Gains& gains, int threads) {
    SweepResult out;
    out.plan = plan;
    const int K = plan.K_star;
    out.records.resize(K);
    std::atomic<int> next{0};
    std::exception_ptr error;
    int error_k = K;
    std::mutex mu;
    auto worker = [&] {
        for (int k = next++; k < K; k = next++) {
            try {
                out.records[k] = run_anchor_episode(model, k, plan.anchors[k], initial, T_eps, gains);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                // Report the lowest failing anchor so the outcome is independent of scheduling.
                if (k < error_k) {
                    error_k = k;
                    error = std::current_exception();
                }
            }
        }
    };
    const int nt = std::clamp(threads, 1, std::max(1, K));
    if (nt == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < nt; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (error) std::rethrow_exception(error);
    out.k_star = select_best(out.records, K);
    return out;
}

}  // namespace qcov
