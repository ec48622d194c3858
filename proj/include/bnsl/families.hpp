#pragma once

#include "bnsl/adtree.hpp"
#include "bnsl/data.hpp"
#include "bnsl/error.hpp"
#include "bnsl/scoring.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <span>
#include <string>
#include <mutex>
#include <thread>
#include <utility>
#include <vector>

namespace bnsl {

/// Per node, candidate parents ordered by decreasing affinity.
using CandidateSets = std::vector<std::vector<VarId>>;

/// Empirical mutual information I(X_i; X_j) in nats.
inline double mutual_information(const Dataset& data, VarId i, VarId j) {
    const auto ri = data.schema().cardinality(i), rj = data.schema().cardinality(j);
    std::vector<std::uint64_t> joint(ri * rj, 0), mi(ri, 0), mj(rj, 0);
    const std::size_t m = data.num_records();
    for (std::size_t r = 0; r < m; ++r) {
        const auto a = data.value(r, i), b = data.value(r, j);
        ++joint[a * rj + b];
        ++mi[a];
        ++mj[b];
    }
    const double total = static_cast<double>(m);
    double info = 0.0;
    for (std::size_t a = 0; a < ri; ++a)
        for (std::size_t b = 0; b < rj; ++b) {
            const auto c = joint[a * rj + b];
            if (!c) continue;
            info += (c / total) * std::log((c * total) / (static_cast<double>(mi[a]) * mj[b]));
        }
    return info;
}

inline CandidateSets all_candidates(std::size_t n) {
    CandidateSets out(n);
    for (VarId i = 0; i < n; ++i)
        for (VarId j = 0; j < n; ++j)
            if (i != j) out[i].push_back(j);
    return out;
}

/// The `c` variables with the highest pairwise mutual information with each
/// node; ties go to the lower variable id.
inline CandidateSets select_candidates(const Dataset& data, std::size_t c) {
    const std::size_t n = data.num_vars();
    if (c == 0 || c > n - 1)
        throw ConfigError("candidate count must be in [1, " + std::to_string(n - 1) + "]");
    std::vector<double> mi(n * n, 0.0);
    for (VarId i = 0; i < n; ++i)
        for (VarId j = i + 1; j < n; ++j) mi[i * n + j] = mi[j * n + i] = mutual_information(data, i, j);
    CandidateSets out(n);
    for (VarId i = 0; i < n; ++i) {
        std::vector<VarId> others;
        for (VarId j = 0; j < n; ++j)
            if (j != i) others.push_back(j);
        std::stable_sort(others.begin(), others.end(),
                         [&](VarId a, VarId b) { return mi[i * n + a] > mi[i * n + b]; });
        others.resize(c);
        out[i] = std::move(others);
    }
    return out;
}

inline std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
    if (k > n) return 0;
    k = std::min(k, n - k);
    std::uint64_t r = 1;
    for (std::uint64_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

/// Number of parent sets of size <= k drawn from c candidates.
inline std::uint64_t count_families(std::uint64_t c, std::uint64_t k) {
    std::uint64_t total = 0;
    for (std::uint64_t j = 0; j <= std::min(c, k); ++j) total += binomial(c, j);
    return total;
}

struct ScoredFamily {
    std::vector<VarId> parents; // ascending
    double score;
};

/// Calls `fn(parents)` for every subset of `pool` with size <= k, by size,
/// then lexicographically over the ascending pool.
template <class Fn>
void for_each_subset(std::span<const VarId> pool, std::size_t k, Fn&& fn) {
    std::vector<VarId> sorted(pool.begin(), pool.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t c = sorted.size();
    std::vector<std::size_t> idx;
    std::vector<VarId> subset;
    for (std::size_t size = 0; size <= std::min(k, c); ++size) {
        idx.resize(size);
        for (std::size_t j = 0; j < size; ++j) idx[j] = j;
        for (;;) {
            subset.resize(size);
            for (std::size_t j = 0; j < size; ++j) subset[j] = sorted[idx[j]];
            fn(std::as_const(subset));
            std::size_t j = size;
            while (j > 0 && idx[j - 1] == c - size + j - 1) --j;
            if (j == 0) break;
            ++idx[j - 1];
            for (std::size_t t = j; t < size; ++t) idx[t] = idx[t - 1] + 1;
        }
    }
}

inline std::vector<ScoredFamily> enumerate_and_score(VarId node, const CandidateSets& candidates,
                                                     std::size_t k, const AdTree& tree,
                                                     const ScoreConfig& cfg) {
    cfg.validate();
    std::vector<ScoredFamily> out;
    out.reserve(count_families(candidates.at(node).size(), k));
    for_each_subset(candidates.at(node), k, [&](const std::vector<VarId>& parents) {
        out.push_back(ScoredFamily{parents, family_score(tree.contingency_table(node, parents), cfg)});
    });
    return out;
}

/// One node's ranked, dominance-pruned family list.  Parent sets are stored
/// flat so consistency scans stay cache-friendly.
class NodeFamilies {
public:
    std::size_t size() const noexcept { return scores_.size(); }
    double score(std::size_t e) const noexcept { return scores_[e]; }
    std::span<const VarId> parents(std::size_t e) const noexcept {
        return {parents_.data() + offsets_[e], offsets_[e + 1] - offsets_[e]};
    }

    /// Number of families enumerated before pruning, and how many of those
    /// had the maximal size k.
    std::uint64_t f_max = 0;
    std::uint64_t f_max_top = 0;

    void push_back(std::span<const VarId> parents, double score) {
        parents_.insert(parents_.end(), parents.begin(), parents.end());
        offsets_.push_back(static_cast<std::uint32_t>(parents_.size()));
        scores_.push_back(score);
    }

    std::optional<double> find(std::span<const VarId> parents) const {
        for (std::size_t e = 0; e < size(); ++e) {
            auto p = this->parents(e);
            if (std::equal(p.begin(), p.end(), parents.begin(), parents.end())) return scores_[e];
        }
        return std::nullopt;
    }

    bool operator==(const NodeFamilies&) const = default;

private:
    std::vector<double> scores_;
    std::vector<std::uint32_t> offsets_{0};
    std::vector<VarId> parents_;
};

/// Descending score, then smaller family, then lexicographic ids.
inline bool family_rank_less(const ScoredFamily& a, const ScoredFamily& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.parents.size() != b.parents.size()) return a.parents.size() < b.parents.size();
    return a.parents < b.parents;
}

/// Ranks `scored` without removing anything.
inline NodeFamilies rank_families(std::vector<ScoredFamily> scored) {
    std::sort(scored.begin(), scored.end(), family_rank_less);
    NodeFamilies out;
    for (const auto& f : scored) out.push_back(f.parents, f.score);
    out.f_max = scored.size();
    return out;
}

/// Drops every family that has a proper subset scoring at least as well.
/// The input must be downward closed (every immediate subset of an entry is
/// itself an entry); the best proper-subset score is then propagated by size.
inline NodeFamilies prune_dominated(std::vector<ScoredFamily> scored) {
    std::sort(scored.begin(), scored.end(), [](const ScoredFamily& a, const ScoredFamily& b) {
        if (a.parents.size() != b.parents.size()) return a.parents.size() < b.parents.size();
        return a.parents < b.parents;
    });
    std::map<std::vector<VarId>, double> best_within; // max score over U and its subsets
    std::vector<ScoredFamily> kept;
    std::vector<VarId> sub;
    for (auto& f : scored) {
        double best_sub = -std::numeric_limits<double>::infinity();
        for (std::size_t drop = 0; drop < f.parents.size(); ++drop) {
            sub.assign(f.parents.begin(), f.parents.end());
            sub.erase(sub.begin() + static_cast<std::ptrdiff_t>(drop));
            auto it = best_within.find(sub);
            if (it != best_within.end()) best_sub = std::max(best_sub, it->second);
        }
        best_within.emplace(f.parents, std::max(best_sub, f.score));
        if (f.parents.empty() || f.score > best_sub) kept.push_back(std::move(f));
    }
    auto out = rank_families(std::move(kept));
    out.f_max = scored.size();
    return out;
}

struct FamilyTableStats {
    std::uint64_t f_max = 0;     // largest per-node enumeration
    std::uint64_t f_max_top = 0; // largest per-node count of size-k sets
    std::size_t f_eff_max = 0;
    double f_eff_mean = 0.0;
};

/// Per-node ranked family lists consumed by both searches.
struct RankedFamilyTable {
    std::size_t max_parents = 0;
    std::vector<NodeFamilies> nodes;

    std::size_t size() const noexcept { return nodes.size(); }
    const NodeFamilies& operator[](VarId i) const { return nodes.at(i); }

    FamilyTableStats stats() const {
        FamilyTableStats s;
        for (const auto& nf : nodes) {
            s.f_max = std::max(s.f_max, nf.f_max);
            s.f_max_top = std::max(s.f_max_top, nf.f_max_top);
            s.f_eff_max = std::max(s.f_eff_max, nf.size());
            s.f_eff_mean += static_cast<double>(nf.size());
        }
        if (!nodes.empty()) s.f_eff_mean /= static_cast<double>(nodes.size());
        return s;
    }

    bool operator==(const RankedFamilyTable&) const = default;
};

/// Enumerates, scores and prunes the families of every node.  Nodes are
/// independent; `threads > 1` spreads them over a worker pool.
inline RankedFamilyTable build_family_tables(const AdTree& tree, const CandidateSets& candidates,
                                             std::size_t k, const ScoreConfig& cfg,
                                             bool prune = true, unsigned threads = 1) {
    cfg.validate();
    const std::size_t n = tree.num_vars();
    if (candidates.size() != n) throw ConfigError("candidate sets do not cover every node");
    RankedFamilyTable table;
    table.max_parents = k;
    table.nodes.resize(n);
    auto work = [&](VarId i) {
        auto scored = enumerate_and_score(i, candidates, k, tree, cfg);
        auto nf = prune ? prune_dominated(std::move(scored)) : rank_families(std::move(scored));
        nf.f_max_top = candidates[i].size() >= k ? binomial(candidates[i].size(), k) : 0;
        table.nodes[i] = std::move(nf);
    };
    if (threads <= 1) {
        for (VarId i = 0; i < n; ++i) work(i);
        return table;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (std::size_t i; (i = next.fetch_add(1)) < n;) {
                try {
                    work(static_cast<VarId>(i));
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    pool.clear();
    if (failure) std::rethrow_exception(failure);
    return table;
}

/// Identifies the inputs a cached table was built from.
struct FamilyCacheKey {
    std::uint64_t dataset_hash = 0;
    std::size_t candidates = 0; // 0 = unrestricted
    std::size_t max_parents = 0;
    ScoreConfig score;

    bool operator==(const FamilyCacheKey& o) const {
        return dataset_hash == o.dataset_hash && candidates == o.candidates &&
               max_parents == o.max_parents && score.kind == o.score.kind &&
               score.ess == o.score.ess;
    }
};

inline constexpr int kFamilyCacheVersion = 1;

/// Text cache; scores are written as hex floats so a reload is bit-exact.
inline void save_family_tables(std::ostream& out, const RankedFamilyTable& t, const FamilyCacheKey& key) {
    out << "bnsl-families " << kFamilyCacheVersion << '\n';
    out << "key " << std::hex << key.dataset_hash << std::dec << ' ' << key.candidates << ' '
        << key.max_parents << ' ' << to_string(key.score.kind) << ' ' << std::hexfloat
        << key.score.ess << std::defaultfloat << '\n';
    out << "nodes " << t.nodes.size() << ' ' << t.max_parents << '\n';
    for (std::size_t i = 0; i < t.nodes.size(); ++i) {
        const auto& nf = t.nodes[i];
        out << "node " << i << ' ' << nf.f_max << ' ' << nf.f_max_top << ' ' << nf.size() << '\n';
        for (std::size_t e = 0; e < nf.size(); ++e) {
            out << std::hexfloat << nf.score(e) << std::defaultfloat;
            for (auto p : nf.parents(e)) out << ' ' << p;
            out << '\n';
        }
    }
}

/// Returns the cached table, or nothing when the file was built from other inputs.
inline std::optional<RankedFamilyTable> load_family_tables(std::istream& in, const FamilyCacheKey& expect) {
    std::string line;
    std::size_t line_no = 0;
    auto next_line = [&]() -> std::istringstream {
        if (!std::getline(in, line)) throw ParseError("truncated family cache", line_no + 1);
        ++line_no;
        return std::istringstream(line);
    };
    auto parse_double = [&](const std::string& tok) {
        char* end = nullptr;
        double v = std::strtod(tok.c_str(), &end);
        if (tok.empty() || *end) throw ParseError("bad number '" + tok + "'", line_no);
        return v;
    };
    {
        auto ls = next_line();
        std::string magic;
        int version = 0;
        if (!(ls >> magic >> version) || magic != "bnsl-families")
            throw ParseError("not a family cache file", line_no);
        if (version != kFamilyCacheVersion) return std::nullopt;
    }
    FamilyCacheKey key;
    {
        auto ls = next_line();
        std::string tag, kind, ess;
        if (!(ls >> tag >> std::hex >> key.dataset_hash >> std::dec >> key.candidates >>
              key.max_parents >> kind >> ess) ||
            tag != "key")
            throw ParseError("bad cache key line", line_no);
        key.score.kind = parse_score_kind(kind);
        key.score.ess = parse_double(ess);
    }
    if (!(key == expect)) return std::nullopt;
    RankedFamilyTable t;
    std::size_t n = 0;
    {
        auto ls = next_line();
        std::string tag;
        if (!(ls >> tag >> n >> t.max_parents) || tag != "nodes")
            throw ParseError("bad nodes line", line_no);
    }
    t.nodes.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto ls = next_line();
        std::string tag;
        std::size_t idx = 0, count = 0;
        auto& nf = t.nodes[i];
        if (!(ls >> tag >> idx >> nf.f_max >> nf.f_max_top >> count) || tag != "node" || idx != i)
            throw ParseError("bad node header", line_no);
        for (std::size_t e = 0; e < count; ++e) {
            auto es = next_line();
            std::string tok;
            es >> tok;
            const double score = parse_double(tok);
            std::vector<VarId> parents;
            for (VarId p; es >> p;) parents.push_back(p);
            if (!es.eof()) throw ParseError("bad family entry", line_no);
            nf.push_back(parents, score);
        }
    }
    return t;
}

} // namespace bnsl
