#include "oracles.hpp"

#include <gtest/gtest.h>

#include <set>
#include <sstream>

using namespace bnsl;

namespace {

std::vector<VarId> to_vec(std::span<const VarId> s) { return {s.begin(), s.end()}; }

// Random scores on every subset of {0..c-1} of size <= k.
std::vector<ScoredFamily> random_scores(std::size_t c, std::size_t k, Rng& rng) {
    std::vector<VarId> pool(c);
    for (VarId i = 0; i < c; ++i) pool[i] = i;
    std::vector<ScoredFamily> out;
    for_each_subset(pool, k, [&](const std::vector<VarId>& p) {
        // coarse grid so ties occur
        out.push_back({p, -static_cast<double>(uniform_index(rng, 20))});
    });
    return out;
}

} // namespace

TEST(Candidates, CopiedColumnIsPreferred) {
    Rng rng(3);
    std::vector<Value> v;
    for (int m = 0; m < 400; ++m) {
        const auto a = static_cast<Value>(uniform_index(rng, 3));
        v.insert(v.end(), {a, a, static_cast<Value>(uniform_index(rng, 2))});
    }
    const std::vector<std::size_t> cards{3, 3, 2};
    Dataset d(Schema::with_cardinalities(cards), v);
    auto c = select_candidates(d, 1);
    EXPECT_EQ(c[0], std::vector<VarId>{1});
    EXPECT_EQ(c[1], std::vector<VarId>{0});
    EXPECT_GT(mutual_information(d, 0, 1), mutual_information(d, 0, 2));
    EXPECT_NEAR(mutual_information(d, 0, 1), mutual_information(d, 1, 0), 1e-15);
}

TEST(Candidates, FullSelectionIsEveryOtherNode) {
    auto d = oracle::random_dataset(5, 50, 2, 3, 1);
    auto c = select_candidates(d, 4);
    for (VarId i = 0; i < 5; ++i) {
        std::set<VarId> s(c[i].begin(), c[i].end());
        EXPECT_EQ(s.size(), 4u);
        EXPECT_FALSE(s.count(i));
    }
    EXPECT_THROW(select_candidates(d, 0), ConfigError);
    EXPECT_THROW(select_candidates(d, 5), ConfigError);
}

TEST(Candidates, TiesGoToLowerId) {
    const std::vector<std::size_t> cards{2, 2, 2, 2};
    std::vector<Value> v;
    for (int m = 0; m < 8; ++m) {
        const auto hi = static_cast<Value>(m >> 1 & 1);
        v.insert(v.end(), {static_cast<Value>(m & 1), hi, hi, hi});
    }
    Dataset d(Schema::with_cardinalities(cards), v);
    auto c = select_candidates(d, 2);
    EXPECT_EQ(c[0], (std::vector<VarId>{1, 2}));
}

TEST(Enumerate, FamilyCounts) {
    auto d = oracle::random_dataset(5, 60, 2, 3, 2);
    AdTree tree(d);
    CandidateSets cands = all_candidates(5);
    auto f = enumerate_and_score(0, cands, 2, tree, {});
    EXPECT_EQ(f.size(), 11u);
    EXPECT_EQ(count_families(4, 2), 11u);
    auto f0 = enumerate_and_score(0, cands, 0, tree, {});
    ASSERT_EQ(f0.size(), 1u);
    EXPECT_TRUE(f0[0].parents.empty());
    std::set<std::vector<VarId>> distinct;
    for (const auto& s : f) {
        EXPECT_TRUE(std::is_sorted(s.parents.begin(), s.parents.end()));
        EXPECT_EQ(s.score, family_score(tree.contingency_table(0, s.parents), {}));
        distinct.insert(s.parents);
    }
    EXPECT_EQ(distinct.size(), 11u);
}

TEST(Enumerate, AlarmSizedCount) {
    EXPECT_EQ(binomial(36, 4), 58905u);
    EXPECT_EQ(count_families(36, 4), 1u + 36 + 630 + 7140 + 58905);
    EXPECT_EQ(binomial(3, 5), 0u);
}

TEST(Prune, DefinitionExample) {
    std::vector<ScoredFamily> s{{{}, -5}, {{0}, -6}, {{1}, -7}, {{0, 1}, -4}};
    auto nf = prune_dominated(s);
    ASSERT_EQ(nf.size(), 2u);
    EXPECT_EQ(to_vec(nf.parents(0)), (std::vector<VarId>{0, 1}));
    EXPECT_EQ(nf.score(0), -4);
    EXPECT_TRUE(nf.parents(1).empty());
    EXPECT_EQ(nf.f_max, 4u);
}

TEST(Prune, AllWorseThanEmpty) {
    std::vector<ScoredFamily> s{{{}, -1}, {{0}, -2}, {{1}, -3}, {{0, 1}, -1.5}};
    auto nf = prune_dominated(s);
    ASSERT_EQ(nf.size(), 1u);
    EXPECT_TRUE(nf.parents(0).empty());
}

TEST(Prune, EqualScoreSupersetIsDominated) {
    std::vector<ScoredFamily> s{{{}, -3}, {{0}, -3}};
    EXPECT_EQ(prune_dominated(s).size(), 1u);
}

TEST(Prune, KeptFamiliesBeatEverySubset) {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        auto scored = random_scores(6, 3, rng);
        std::map<std::vector<VarId>, double> all;
        for (const auto& f : scored) all[f.parents] = f.score;
        auto nf = prune_dominated(scored);
        EXPECT_LE(nf.size(), nf.f_max);
        std::set<std::vector<VarId>> kept;
        for (std::size_t e = 0; e < nf.size(); ++e) kept.insert(to_vec(nf.parents(e)));
        for (const auto& [p, sc] : all) {
            bool dominated = false;
            for (const auto& [q, qs] : all)
                if (q.size() < p.size() && std::includes(p.begin(), p.end(), q.begin(), q.end()) && qs >= sc)
                    dominated = true;
            EXPECT_EQ(kept.count(p) == 1, p.empty() || !dominated);
        }
        for (std::size_t e = 1; e < nf.size(); ++e) EXPECT_GE(nf.score(e - 1), nf.score(e));
    }
}

TEST(Prune, BestConsistentUnchangedForEveryOrdering) {
    Rng rng(11);
    const auto perms = oracle::all_permutations(5);
    for (int trial = 0; trial < 50; ++trial) {
        // families of node 4 over the other four nodes
        std::vector<VarId> pool{0, 1, 2, 3};
        std::vector<ScoredFamily> scored;
        for_each_subset(pool, 4, [&](const std::vector<VarId>& p) {
            scored.push_back({p, -static_cast<double>(uniform_index(rng, 30))});
        });
        auto pruned = prune_dominated(scored);
        auto full = rank_families(scored);
        for (const auto& perm : perms) {
            Ordering ord(perm);
            const auto a = best_consistent_family(4, ord, pruned);
            const auto b = best_consistent_family(4, ord, full);
            EXPECT_EQ(pruned.score(a), full.score(b));
            EXPECT_EQ(to_vec(full.parents(b)), oracle::argmax_consistent(scored, 4, perm));
        }
    }
}

TEST(Tables, PrunedIsSubsetAndStatsReport) {
    auto d = oracle::synthetic(8, 2, 400, 5);
    AdTree tree(d);
    auto cands = all_candidates(8);
    auto pruned = build_family_tables(tree, cands, 2, {});
    auto full = build_family_tables(tree, cands, 2, {}, false);
    auto st = pruned.stats();
    EXPECT_EQ(st.f_max, count_families(7, 2));
    EXPECT_EQ(st.f_max_top, binomial(7, 2));
    EXPECT_LE(st.f_eff_max, st.f_max);
    EXPECT_EQ(full.stats().f_eff_max, st.f_max);
    for (VarId i = 0; i < 8; ++i) {
        ASSERT_EQ(full[i].size(), count_families(7, 2));
        for (std::size_t e = 0; e < pruned[i].size(); ++e)
            EXPECT_EQ(*full[i].find(pruned[i].parents(e)), pruned[i].score(e));
        EXPECT_TRUE(pruned[i].find(std::vector<VarId>{}).has_value());
    }
}

TEST(Tables, ThreadedBuildIsIdentical) {
    auto d = oracle::synthetic(10, 3, 300, 8);
    AdTree tree(d);
    auto cands = select_candidates(d, 5);
    auto a = build_family_tables(tree, cands, 3, {});
    auto b = build_family_tables(tree, cands, 3, {}, true, 4);
    EXPECT_EQ(a, b);
}

TEST(Tables, CacheRoundTripIsExact) {
    auto d = oracle::synthetic(6, 2, 200, 3);
    AdTree tree(d);
    auto t = build_family_tables(tree, all_candidates(6), 2, {ScoreKind::BDe, 2.5});
    FamilyCacheKey key{d.hash(), 0, 2, {ScoreKind::BDe, 2.5}};
    std::stringstream io;
    save_family_tables(io, t, key);
    const std::string text = io.str();

    std::istringstream in(text);
    auto back = load_family_tables(in, key);
    ASSERT_TRUE(back);
    EXPECT_EQ(*back, t);

    auto other = key;
    other.score.ess = 5.0;
    std::istringstream in2(text);
    EXPECT_FALSE(load_family_tables(in2, other));

    std::istringstream junk("not a cache\n");
    EXPECT_THROW(load_family_tables(junk, key), ParseError);
}
