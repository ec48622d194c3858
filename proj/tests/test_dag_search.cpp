#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace bnsl;

namespace {

using Kind = EdgeOp::Kind;

std::size_t count_kind(const std::vector<EdgeOp>& ops, Kind k) {
    return static_cast<std::size_t>(std::count_if(ops.begin(), ops.end(), [k](const EdgeOp& o) { return o.kind == k; }));
}

double full_rescore(const std::vector<std::vector<VarId>>& parents, const Dataset& d) {
    AdTree tree(d);
    FamilyScorer raw(tree, {}, false);
    return network_score(parents, raw);
}

} // namespace

TEST(LegalOps, EmptyGraphOfThree) {
    auto d = oracle::random_dataset(3, 50, 2, 2, 1);
    AdTree tree(d);
    FamilyScorer score(tree, {});
    auto s = empty_dag_state(3, score);
    ParentConstraints pc(all_candidates(3), 2);
    auto ops = legal_ops(s, pc);
    EXPECT_EQ(count_kind(ops, Kind::Add), 6u);
    EXPECT_EQ(count_kind(ops, Kind::Delete), 0u);
    EXPECT_EQ(count_kind(ops, Kind::Reverse), 0u);
}

TEST(LegalOps, ChainExcludesClosingEdge) {
    auto d = oracle::random_dataset(3, 50, 2, 2, 1);
    AdTree tree(d);
    FamilyScorer score(tree, {});
    auto s = make_dag_state({{}, {0}, {1}}, score);
    ParentConstraints pc(all_candidates(3), 2);
    auto ops = legal_ops(s, pc);
    for (const auto& op : ops) {
        EXPECT_FALSE(op.kind == Kind::Add && op.from == 2 && op.to == 0);
        EXPECT_FALSE(op.kind == Kind::Add && op.from == 1 && op.to == 0);
    }
    EXPECT_NE(std::find(ops.begin(), ops.end(), EdgeOp{Kind::Add, 0, 2}), ops.end());
    // reversing 0->1 keeps acyclicity; no other path 0 ~> 1 exists
    EXPECT_NE(std::find(ops.begin(), ops.end(), EdgeOp{Kind::Reverse, 0, 1}), ops.end());

    auto s2 = make_dag_state({{}, {0}, {0, 1}}, score);
    auto ops2 = legal_ops(s2, pc);
    // 0->2 reversed would close 0->1->2->0
    EXPECT_EQ(std::find(ops2.begin(), ops2.end(), EdgeOp{Kind::Reverse, 0, 2}), ops2.end());
}

TEST(LegalOps, InDegreeBoundAndCandidates) {
    auto d = oracle::random_dataset(4, 50, 2, 2, 1);
    AdTree tree(d);
    FamilyScorer score(tree, {});
    auto s = make_dag_state({{}, {}, {0, 1}, {}}, score);
    ParentConstraints pc(all_candidates(4), 2);
    for (const auto& op : legal_ops(s, pc)) {
        EXPECT_FALSE(op.kind == Kind::Add && op.to == 2);
        EXPECT_FALSE(op.kind == Kind::Reverse && op.from == 2);
    }
    CandidateSets narrow{{1}, {0}, {0}, {2}};
    ParentConstraints pn(narrow, 2);
    for (const auto& op : legal_ops(empty_dag_state(4, score), pn)) EXPECT_TRUE(pn.allows(op.from, op.to));
    EXPECT_EQ(legal_ops(empty_dag_state(4, score), pn).size(), 4u);
}

TEST(OpDelta, DeleteThenAddNegates) {
    auto d = oracle::synthetic(5, 2, 300, 3);
    AdTree tree(d);
    FamilyScorer score(tree, {});
    auto s = make_dag_state({{}, {0}, {1}, {}, {2}}, score);
    const EdgeOp del{Kind::Delete, 1, 2};
    const double dd = op_delta(s, del, score);
    apply_op(s, del, score);
    EXPECT_EQ(op_delta(s, del.inverse(), score), -dd);
}

TEST(OpDelta, MatchesFullRescoreOnRandomStates) {
    auto d = oracle::synthetic(6, 2, 300, 4);
    AdTree tree(d);
    FamilyScorer score(tree, {});
    ParentConstraints pc(all_candidates(6), 3);
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        auto s = empty_dag_state(6, score);
        for (int m = 0; m < 6; ++m) {
            auto ops = legal_ops(s, pc, true);
            apply_op(s, ops[uniform_index(rng, ops.size())], score);
        }
        for (const auto& op : legal_ops(s, pc, true)) {
            auto next = s;
            apply_op(next, op, score);
            ASSERT_TRUE(oracle::acyclic_by_peeling(next.parents));
            const double delta = op_delta(s, op, score);
            double per_node = 0.0;
            for (VarId v = 0; v < 6; ++v) per_node += next.family[v] - s.family[v];
            EXPECT_EQ(delta, per_node);
            EXPECT_NEAR(delta, full_rescore(next.parents, d) - full_rescore(s.parents, d), 1e-9);
        }
    }
}

TEST(OpDelta, ReverseIsDeleteThenAdd) {
    auto d = oracle::synthetic(5, 2, 300, 6);
    AdTree tree(d);
    FamilyScorer score(tree, {});
    auto s = make_dag_state({{}, {0}, {0, 1}, {2}, {}}, score);
    const EdgeOp rev{Kind::Reverse, 2, 3};
    const double whole = op_delta(s, rev, score);
    auto mid = s;
    const double first = op_delta(mid, {Kind::Delete, 2, 3}, score);
    apply_op(mid, {Kind::Delete, 2, 3}, score);
    const double second = op_delta(mid, {Kind::Add, 3, 2}, score);
    EXPECT_EQ(whole, first + second);
}

TEST(EdgeOp, InverseUndoes) {
    EXPECT_EQ((EdgeOp{Kind::Add, 1, 2}.inverse()), (EdgeOp{Kind::Delete, 1, 2}));
    EXPECT_EQ((EdgeOp{Kind::Delete, 1, 2}.inverse()), (EdgeOp{Kind::Add, 1, 2}));
    EXPECT_EQ((EdgeOp{Kind::Reverse, 1, 2}.inverse()), (EdgeOp{Kind::Reverse, 2, 1}));
}

TEST(DagStep, TabuBlocksUndo) {
    auto d = oracle::synthetic(5, 2, 300, 7);
    AdTree tree(d);
    FamilyScorer score(tree, {});
    ParentConstraints pc(all_candidates(5), 2);
    auto s = empty_dag_state(5, score);
    s.best = s.total;
    for (int i = 0; i < 15; ++i) {
        auto r = dag_step(s, pc, score, 100);
        ASSERT_TRUE(r.op);
        for (const auto& op : legal_ops(s, pc)) EXPECT_FALSE(op == r.op->inverse());
        EXPECT_TRUE(oracle::acyclic_by_peeling(s.parents));
        for (const auto& p : s.parents) EXPECT_LE(p.size(), 2u);
    }
}

TEST(DagSearch, FindsExhaustiveOptimum) {
    const auto dags = oracle::all_dags(5, 2);
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        auto d = oracle::synthetic(5, 2, 300, seed);
        AdTree tree(d);
        FamilyScorer score(tree, {});
        auto scores = oracle::score_masks(5, 2, [&](VarId v, const std::vector<VarId>& p) { return score(v, p); });
        const double best = oracle::best_dag(dags, scores);
        SearchConfig cfg;
        cfg.restarts = 20;
        cfg.max_parents = 2;
        cfg.seed = seed;
        auto res = dag_search(score, all_candidates(5), cfg);
        EXPECT_NEAR(res.score, best, 1e-9 * std::abs(best)) << "seed " << seed;
        EXPECT_EQ(res.score, network_score(res.parents, score));
    }
}

TEST(DagSearch, ZeroBudgetReturnsEmptyNetwork) {
    auto d = oracle::synthetic(5, 2, 200, 2);
    AdTree tree(d);
    FamilyScorer score(tree, {});
    SearchConfig cfg;
    cfg.max_steps = 0;
    auto res = dag_search(score, all_candidates(5), cfg);
    for (const auto& p : res.parents) EXPECT_TRUE(p.empty());
    EXPECT_EQ(res.score, network_score(std::vector<std::vector<VarId>>(5), score));
}

TEST(DagSearch, DeterministicAndMonotone) {
    auto d = oracle::synthetic(8, 3, 300, 9);
    AdTree tree(d);
    SearchConfig cfg;
    cfg.seed = 4;
    cfg.restarts = 3;
    cfg.tabu_size = 20;
    cfg.trace_steps = true;
    FamilyScorer s1(tree, {}), s2(tree, {});
    auto a = dag_search(s1, all_candidates(8), cfg);
    auto b = dag_search(s2, all_candidates(8), cfg);
    EXPECT_EQ(a.parents, b.parents);
    EXPECT_EQ(a.score, b.score);
    ASSERT_EQ(a.trace.points.size(), b.trace.points.size());
    for (std::size_t i = 0; i < a.trace.points.size(); ++i)
        EXPECT_EQ(a.trace.points[i].best_score, b.trace.points[i].best_score);
    for (std::size_t i = 1; i < a.trace.points.size(); ++i)
        EXPECT_GE(a.trace.points[i].best_score, a.trace.points[i - 1].best_score);
    EXPECT_TRUE(oracle::acyclic_by_peeling(a.parents));
    EXPECT_GT(a.stats.score_evaluations, 0u);
}

TEST(DagSearch, RespectsCandidates) {
    auto d = oracle::synthetic(8, 3, 300, 10);
    AdTree tree(d);
    FamilyScorer score(tree, {});
    auto cands = select_candidates(d, 3);
    SearchConfig cfg;
    cfg.max_parents = 2;
    cfg.restart_mode = RestartMode::Random;
    auto res = dag_search(score, cands, cfg);
    for (VarId v = 0; v < 8; ++v) {
        EXPECT_LE(res.parents[v].size(), 2u);
        for (auto p : res.parents[v])
            EXPECT_NE(std::find(cands[v].begin(), cands[v].end(), p), cands[v].end());
    }
}

TEST(DagStep, TabuIndexTracksList) {
    auto d = oracle::random_dataset(4, 60, 2, 2, 12);
    AdTree tree(d);
    FamilyScorer score(tree, {});
    ParentConstraints pc(all_candidates(4), 2);
    Rng rng(1);
    auto s = empty_dag_state(4, score);
    s.best = s.total;
    for (int i = 0; i < 40; ++i) {
        dag_step(s, pc, score, 5, &rng);
        std::size_t hits = 0;
        for (const auto& [key, count] : s.tabu_hits) hits += count;
        EXPECT_EQ(hits, s.tabu.size());
        for (const auto& op : s.tabu) EXPECT_TRUE(s.is_tabu(op));
        EXPECT_TRUE(oracle::acyclic_by_peeling(s.parents));
    }
}

TEST(DagSearch, ClimbStagnationDeterministic) {
    auto d = oracle::synthetic(8, 3, 300, 15);
    AdTree tree(d);
    SearchConfig cfg;
    cfg.seed = 2;
    cfg.restarts = 4;
    cfg.tabu_size = 10;
    cfg.stagnation_base = StagnationBase::Climb;
    FamilyScorer s1(tree, {}), s2(tree, {});
    auto a = dag_search(s1, all_candidates(8), cfg), b = dag_search(s2, all_candidates(8), cfg);
    EXPECT_EQ(a.parents, b.parents);
    EXPECT_EQ(a.stats.steps, b.stats.steps);
    EXPECT_EQ(a.score, network_score(a.parents, s1));
}
