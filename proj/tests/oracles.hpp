#pragma once
// Brute-force reference implementations used only by the tests.  None of
// these share code paths with the library beyond the plain data types.

#include "bnsl/bnsl.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <vector>

namespace oracle {

using bnsl::Dataset;
using bnsl::Value;
using bnsl::VarId;

inline std::uint64_t naive_count(const Dataset& d, const bnsl::CountQuery& q) {
    std::uint64_t c = 0;
    for (std::size_t m = 0; m < d.num_records(); ++m) {
        bool ok = true;
        for (const auto& b : q)
            if (d.value(m, b.var) != b.value) { ok = false; break; }
        c += ok;
    }
    return c;
}

// counts[u * r + x] with the first listed parent most significant
inline std::vector<std::uint64_t> naive_table(const Dataset& d, VarId child, const std::vector<VarId>& parents) {
    const auto& s = d.schema();
    std::size_t q = 1;
    for (auto p : parents) q *= s.cardinality(p);
    const std::size_t r = s.cardinality(child);
    std::vector<std::uint64_t> t(r * q, 0);
    for (std::size_t m = 0; m < d.num_records(); ++m) {
        std::size_t u = 0;
        for (auto p : parents) u = u * s.cardinality(p) + d.value(m, p);
        ++t[u * r + d.value(m, child)];
    }
    return t;
}

// Sequential predictive product: each record's child value is predicted from
// the Dirichlet posterior over the records seen so far.
inline double polya_bde(const Dataset& d, VarId child, const std::vector<VarId>& parents, double ess) {
    const auto& s = d.schema();
    std::size_t q = 1;
    for (auto p : parents) q *= s.cardinality(p);
    const std::size_t r = s.cardinality(child);
    const double a_xu = ess / static_cast<double>(r * q), a_u = ess / static_cast<double>(q);
    std::vector<double> seen(r * q, 0.0), seen_u(q, 0.0);
    double ll = 0.0;
    for (std::size_t m = 0; m < d.num_records(); ++m) {
        std::size_t u = 0;
        for (auto p : parents) u = u * s.cardinality(p) + d.value(m, p);
        const auto x = d.value(m, child);
        ll += std::log((a_xu + seen[u * r + x]) / (a_u + seen_u[u]));
        seen[u * r + x] += 1.0;
        seen_u[u] += 1.0;
    }
    return ll;
}

// Maximised log-likelihood summed record by record, minus the BIC penalty.
inline double direct_bic(const Dataset& d, VarId child, const std::vector<VarId>& parents) {
    const auto t = naive_table(d, child, parents);
    const auto& s = d.schema();
    const std::size_t r = s.cardinality(child), q = t.size() / r;
    std::vector<double> mu(q, 0.0);
    for (std::size_t u = 0; u < q; ++u)
        for (std::size_t x = 0; x < r; ++x) mu[u] += static_cast<double>(t[u * r + x]);
    double ll = 0.0;
    for (std::size_t m = 0; m < d.num_records(); ++m) {
        std::size_t u = 0;
        for (auto p : parents) u = u * s.cardinality(p) + d.value(m, p);
        ll += std::log(static_cast<double>(t[u * r + d.value(m, child)]) / mu[u]);
    }
    const double M = static_cast<double>(d.num_records());
    return ll - std::log(M) / 2.0 * static_cast<double>((r - 1) * q);
}

// Product of CPT entries per record, then averaged.
inline double chain_rule_ll(const bnsl::Network& net, const Dataset& d) {
    double total = 0.0;
    for (std::size_t m = 0; m < d.num_records(); ++m) {
        double p = 1.0;
        for (VarId i = 0; i < net.size(); ++i) {
            std::size_t u = 0;
            for (auto pa : net.parents[i]) u = u * net.schema.cardinality(pa) + d.value(m, pa);
            p *= net.cpts[i].probs[u * net.schema.cardinality(i) + d.value(m, i)];
        }
        total += std::log(p);
    }
    return total / static_cast<double>(d.num_records());
}

inline bool acyclic_by_peeling(const std::vector<std::vector<VarId>>& parents) {
    const std::size_t n = parents.size();
    std::vector<bool> gone(n, false);
    for (std::size_t round = 0; round < n; ++round) {
        bool removed = false;
        for (VarId v = 0; v < n && !removed; ++v) {
            if (gone[v]) continue;
            bool source = true;
            for (auto p : parents[v])
                if (!gone[p]) { source = false; break; }
            if (source) { gone[v] = true; removed = true; }
        }
        if (!removed) return false;
    }
    return true;
}

// Parent sets of each node as bitmasks over the other nodes, size <= k.
inline std::vector<std::vector<std::uint32_t>> parent_masks(std::size_t n, std::size_t k) {
    std::vector<std::vector<std::uint32_t>> out(n);
    for (std::size_t v = 0; v < n; ++v)
        for (std::uint32_t mask = 0; mask < (1u << n); ++mask)
            if (!(mask >> v & 1u) && static_cast<std::size_t>(std::popcount(mask)) <= k) out[v].push_back(mask);
    return out;
}

inline std::vector<VarId> mask_to_set(std::uint32_t mask) {
    std::vector<VarId> s;
    for (VarId i = 0; mask; ++i, mask >>= 1)
        if (mask & 1u) s.push_back(i);
    return s;
}

inline bool acyclic_masks(const std::vector<std::uint32_t>& pa) {
    const std::size_t n = pa.size();
    std::uint32_t done = 0;
    for (std::size_t round = 0; round < n; ++round) {
        bool progressed = false;
        for (std::size_t v = 0; v < n; ++v)
            if (!(done >> v & 1u) && (pa[v] & ~done) == 0) {
                done |= 1u << v;
                progressed = true;
            }
        if (!progressed) break;
    }
    return done == (1u << n) - 1;
}

/// Every DAG on n nodes with in-degree <= k, as per-node parent masks.
inline std::vector<std::vector<std::uint32_t>> all_dags(std::size_t n, std::size_t k) {
    const auto opts = parent_masks(n, k);
    std::vector<std::vector<std::uint32_t>> dags;
    std::vector<std::size_t> idx(n, 0);
    std::vector<std::uint32_t> pa(n);
    for (;;) {
        for (std::size_t v = 0; v < n; ++v) pa[v] = opts[v][idx[v]];
        if (acyclic_masks(pa)) dags.push_back(pa);
        std::size_t v = 0;
        while (v < n && ++idx[v] == opts[v].size()) idx[v++] = 0;
        if (v == n) break;
    }
    return dags;
}

/// Family scores indexed [node][parent mask], from any scoring function.
using MaskScores = std::vector<std::map<std::uint32_t, double>>;

inline MaskScores score_masks(std::size_t n, std::size_t k,
                              const std::function<double(VarId, const std::vector<VarId>&)>& score) {
    MaskScores s(n);
    const auto opts = parent_masks(n, k);
    for (VarId v = 0; v < n; ++v)
        for (auto mask : opts[v]) s[v][mask] = score(v, mask_to_set(mask));
    return s;
}

inline double dag_score(const std::vector<std::uint32_t>& pa, const MaskScores& s) {
    double total = 0.0;
    for (VarId v = 0; v < pa.size(); ++v) total += s[v].at(pa[v]);
    return total;
}

inline bool consistent(const std::vector<std::uint32_t>& pa, const std::vector<VarId>& order) {
    std::vector<std::size_t> pos(order.size());
    for (std::size_t p = 0; p < order.size(); ++p) pos[order[p]] = p;
    for (VarId v = 0; v < pa.size(); ++v)
        for (auto p : mask_to_set(pa[v]))
            if (pos[p] >= pos[v]) return false;
    return true;
}

/// Best score over the given DAGs that are consistent with `order`.
inline double best_consistent_dag(const std::vector<std::vector<std::uint32_t>>& dags, const MaskScores& s,
                                  const std::vector<VarId>& order) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& pa : dags)
        if (consistent(pa, order)) best = std::max(best, dag_score(pa, s));
    return best;
}

inline double best_dag(const std::vector<std::vector<std::uint32_t>>& dags, const MaskScores& s) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& pa : dags) best = std::max(best, dag_score(pa, s));
    return best;
}

/// Highest-scoring family (ranked order) whose parents all precede `node`.
inline std::vector<VarId> argmax_consistent(const std::vector<bnsl::ScoredFamily>& scored, VarId node,
                                            const std::vector<VarId>& order) {
    std::vector<std::size_t> pos(order.size());
    for (std::size_t p = 0; p < order.size(); ++p) pos[order[p]] = p;
    const bnsl::ScoredFamily* best = nullptr;
    for (const auto& f : scored) {
        bool ok = true;
        for (auto p : f.parents)
            if (pos[p] >= pos[node]) ok = false;
        if (ok && (!best || bnsl::family_rank_less(f, *best))) best = &f;
    }
    return best ? best->parents : std::vector<VarId>{};
}

/// Random dataset with cardinalities drawn from [lo, hi], values skewed so
/// the AD-tree exercises both common and rare branches.
inline Dataset random_dataset(std::size_t n, std::size_t m, std::size_t lo, std::size_t hi, std::uint64_t seed) {
    bnsl::Rng rng(seed);
    std::vector<std::size_t> cards(n);
    for (auto& c : cards) c = lo + bnsl::uniform_index(rng, hi - lo + 1);
    std::vector<Value> values(n * m);
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t i = 0; i < n; ++i) {
            const double u = bnsl::uniform01(rng);
            values[r * n + i] = static_cast<Value>(std::min(cards[i] - 1, static_cast<std::size_t>(u * u * cards[i])));
        }
    return Dataset(bnsl::Schema::with_cardinalities(cards), std::move(values));
}

/// Data sampled from a random network, for search tests.
inline Dataset synthetic(std::size_t n, std::size_t k, std::size_t m, std::uint64_t seed, std::size_t max_card = 3) {
    auto s = bnsl::random_structure(n, k, 2, max_card, seed);
    auto net = bnsl::random_cpts(s, seed);
    return bnsl::forward_sample(net, m, seed);
}

inline std::vector<std::vector<VarId>> all_permutations(std::size_t n) {
    std::vector<VarId> p(n);
    std::iota(p.begin(), p.end(), 0);
    std::vector<std::vector<VarId>> out;
    do out.push_back(p);
    while (std::next_permutation(p.begin(), p.end()));
    return out;
}

} // namespace oracle
