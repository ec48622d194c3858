#pragma once

#include "bnsl/families.hpp"
#include "bnsl/rng.hpp"
#include "bnsl/search.hpp"

#include <algorithm>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

namespace bnsl {

/// A permutation of variable ids with its inverse.
class Ordering {
public:
    Ordering() = default;

    explicit Ordering(std::vector<VarId> perm) : perm_(std::move(perm)), pos_(perm_.size(), kUnset) {
        for (std::size_t p = 0; p < perm_.size(); ++p) {
            if (perm_[p] >= perm_.size() || pos_[perm_[p]] != kUnset)
                throw ConfigError("ordering is not a permutation");
            pos_[perm_[p]] = static_cast<std::uint32_t>(p);
        }
    }

    static Ordering identity(std::size_t n) {
        std::vector<VarId> p(n);
        for (VarId i = 0; i < n; ++i) p[i] = i;
        return Ordering(std::move(p));
    }

    static Ordering random(std::size_t n, Rng& rng) {
        std::vector<VarId> p(n);
        for (VarId i = 0; i < n; ++i) p[i] = i;
        for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[uniform_index(rng, i)]);
        return Ordering(std::move(p));
    }

    std::size_t size() const noexcept { return perm_.size(); }
    VarId at(std::size_t position) const noexcept { return perm_[position]; }
    std::size_t position(VarId v) const noexcept { return pos_[v]; }
    const std::vector<VarId>& permutation() const noexcept { return perm_; }

    void swap_adjacent(std::size_t j) {
        std::swap(perm_[j], perm_[j + 1]);
        pos_[perm_[j]] = static_cast<std::uint32_t>(j);
        pos_[perm_[j + 1]] = static_cast<std::uint32_t>(j + 1);
    }

    bool operator==(const Ordering&) const = default;

private:
    static constexpr std::uint32_t kUnset = std::numeric_limits<std::uint32_t>::max();
    std::vector<VarId> perm_;
    std::vector<std::uint32_t> pos_;
};

namespace detail {

// First entry at or after `from` whose parents all precede `node` under the
// position map `pos`.  Every entry examined is counted in `scans`.
template <class Pos>
std::uint32_t first_consistent(const NodeFamilies& nf, VarId node, std::size_t from, std::size_t until,
                               Pos&& pos, std::uint64_t& scans) {
    const auto node_pos = pos(node);
    for (std::size_t e = from; e < until; ++e) {
        ++scans;
        bool ok = true;
        for (auto p : nf.parents(e))
            if (pos(p) >= node_pos) { ok = false; break; }
        if (ok) return static_cast<std::uint32_t>(e);
    }
    return std::numeric_limits<std::uint32_t>::max();
}

inline void require_entry(std::uint32_t e) {
    if (e == std::numeric_limits<std::uint32_t>::max())
        throw ConfigError("family table lacks a consistent entry (is the empty set missing?)");
}

} // namespace detail

/// Index of the highest-ranked family of `node` whose parents all precede it.
inline std::uint32_t best_consistent_family(VarId node, const Ordering& ord, const NodeFamilies& nf,
                                            std::uint64_t* scans = nullptr) {
    std::uint64_t local = 0;
    auto e = detail::first_consistent(nf, node, 0, nf.size(),
                                      [&ord](VarId v) { return ord.position(v); }, local);
    if (scans) *scans += local;
    detail::require_entry(e);
    return e;
}

struct OrderedNetwork {
    std::vector<std::vector<VarId>> parents;
    std::vector<std::uint32_t> entries; // chosen table entry per node
    double score = 0.0;
};

/// Best bounded in-degree network consistent with `ord`: every node takes its
/// own best consistent family.  Score summed in ascending node order.
inline OrderedNetwork network_for_ordering(const Ordering& ord, const RankedFamilyTable& tables) {
    if (ord.size() != tables.size()) throw ConfigError("ordering and tables disagree on node count");
    OrderedNetwork net;
    net.parents.resize(ord.size());
    net.entries.resize(ord.size());
    for (VarId i = 0; i < ord.size(); ++i) {
        const auto e = best_consistent_family(i, ord, tables[i]);
        net.entries[i] = e;
        auto p = tables[i].parents(e);
        net.parents[i].assign(p.begin(), p.end());
        net.score += tables[i].score(e);
    }
    return net;
}

/// Cached outcome of swapping positions (j, j+1): the entries the two nodes
/// would choose afterwards and the resulting score change.
struct SwapProposal {
    double delta = 0.0;
    std::uint32_t later_entry = 0;   // node at j, which moves to j+1
    std::uint32_t earlier_entry = 0; // node at j+1, which moves to j
};

struct OrderingState {
    Ordering ordering;
    std::vector<std::uint32_t> chosen; // table entry per node
    double total = 0.0;
    double best = -std::numeric_limits<double>::infinity(); // stagnation reference, set by the caller
    std::vector<SwapProposal> proposals; // per adjacent position
    std::deque<std::pair<VarId, VarId>> tabu; // unordered pairs, oldest first
    std::vector<std::uint32_t> tabu_hits;     // n*n multiplicity of each pair in `tabu`
    std::size_t stagnation = 0;
    std::uint64_t scans = 0;
};

namespace detail {

inline double sum_chosen(const OrderingState& s, const RankedFamilyTable& t) {
    double total = 0.0;
    for (VarId i = 0; i < s.chosen.size(); ++i) total += t[i].score(s.chosen[i]);
    return total;
}

inline double proposal_delta(const RankedFamilyTable& t, VarId later, std::uint32_t later_old,
                             std::uint32_t later_new, VarId earlier, std::uint32_t earlier_old,
                             std::uint32_t earlier_new) {
    return (t[later].score(later_new) - t[later].score(later_old)) +
           (t[earlier].score(earlier_new) - t[earlier].score(earlier_old));
}

// Uses the current choices to narrow both scans: the node moving later gains
// a predecessor, so it can only improve on entries ranked above its current
// one; the node moving earlier keeps its family unless that family contains
// the other node, in which case it resumes after it.
inline SwapProposal evaluate_swap(const OrderingState& s, std::size_t j, const RankedFamilyTable& t,
                                  std::uint64_t& scans) {
    const auto& ord = s.ordering;
    const VarId a = ord.at(j), b = ord.at(j + 1);
    auto pos = [&](VarId v) -> std::size_t {
        if (v == a) return j + 1;
        if (v == b) return j;
        return ord.position(v);
    };
    SwapProposal p;
    const auto cur_a = s.chosen[a], cur_b = s.chosen[b];
    p.later_entry = first_consistent(t[a], a, 0, cur_a, pos, scans);
    if (p.later_entry == std::numeric_limits<std::uint32_t>::max()) p.later_entry = cur_a;
    auto pb = t[b].parents(cur_b);
    p.earlier_entry = cur_b;
    if (std::find(pb.begin(), pb.end(), a) != pb.end()) {
        p.earlier_entry = first_consistent(t[b], b, cur_b + 1, t[b].size(), pos, scans);
        require_entry(p.earlier_entry);
    }
    p.delta = proposal_delta(t, a, cur_a, p.later_entry, b, cur_b, p.earlier_entry);
    return p;
}

inline std::size_t pair_index(const OrderingState& s, VarId x, VarId y) {
    const auto key = std::minmax(x, y);
    return static_cast<std::size_t>(key.first) * s.ordering.size() + key.second;
}

inline bool is_tabu(const OrderingState& s, VarId x, VarId y) {
    return !s.tabu_hits.empty() && s.tabu_hits[pair_index(s, x, y)] > 0;
}

} // namespace detail

/// Score change from swapping positions j and j+1, recomputed from scratch:
/// both swapped nodes rescan their whole ranked lists; no other node's
/// predecessor set changes.
inline SwapProposal swap_delta(const OrderingState& s, std::size_t j, const RankedFamilyTable& t) {
    if (j + 1 >= s.ordering.size()) throw ConfigError("swap position out of range");
    Ordering swapped = s.ordering;
    swapped.swap_adjacent(j);
    const VarId a = s.ordering.at(j), b = s.ordering.at(j + 1);
    SwapProposal p;
    p.later_entry = best_consistent_family(a, swapped, t[a]);
    p.earlier_entry = best_consistent_family(b, swapped, t[b]);
    p.delta = detail::proposal_delta(t, a, s.chosen[a], p.later_entry, b, s.chosen[b], p.earlier_entry);
    return p;
}

/// Full evaluation of an ordering: chosen families plus all n-1 cached deltas.
inline OrderingState make_state(Ordering ord, const RankedFamilyTable& t) {
    if (ord.size() != t.size()) throw ConfigError("ordering and tables disagree on node count");
    OrderingState s;
    s.ordering = std::move(ord);
    const std::size_t n = s.ordering.size();
    s.chosen.resize(n);
    for (VarId i = 0; i < n; ++i) s.chosen[i] = best_consistent_family(i, s.ordering, t[i], &s.scans);
    s.total = detail::sum_chosen(s, t);
    s.proposals.resize(n > 0 ? n - 1 : 0);
    for (std::size_t j = 0; j + 1 < n; ++j) s.proposals[j] = detail::evaluate_swap(s, j, t, s.scans);
    return s;
}

struct StepResult {
    std::size_t position = 0;
    double delta = 0.0;
    bool aspiration = false;
    std::uint64_t scans = 0;
};

/// Applies the best non-tabu adjacent swap, even when it lowers the score.
/// Ties go to the lowest position, or to a uniformly drawn one when `ties`
/// is given.  If every swap is tabu the best one is taken anyway.  Only the
/// proposals at j-1 and j+1 are re-evaluated; the one at j is the exact
/// reverse of the move just made.
inline StepResult step(OrderingState& s, const RankedFamilyTable& t, std::size_t tabu_size, Rng* ties = nullptr) {
    const std::size_t n = s.ordering.size();
    if (n < 2) throw ConfigError("cannot step an ordering of fewer than two nodes");
    StepResult r;
    std::optional<std::size_t> pick, any;
    std::size_t pick_ties = 0, any_ties = 0;
    const auto consider = [&](std::optional<std::size_t>& best, std::size_t& seen, std::size_t j) {
        const double d = s.proposals[j].delta;
        if (!best || d > s.proposals[*best].delta) {
            best = j;
            seen = 1;
        } else if (ties && d == s.proposals[*best].delta && uniform_index(*ties, ++seen) == 0) {
            best = j;
        }
    };
    for (std::size_t j = 0; j + 1 < n; ++j) {
        consider(any, any_ties, j);
        if (!detail::is_tabu(s, s.ordering.at(j), s.ordering.at(j + 1))) consider(pick, pick_ties, j);
    }
    if (!pick) {
        pick = any;
        r.aspiration = true;
    }
    const std::size_t j = *pick;
    const auto prop = s.proposals[j];
    const VarId a = s.ordering.at(j), b = s.ordering.at(j + 1);
    const auto old_a = s.chosen[a], old_b = s.chosen[b];
    s.chosen[a] = prop.later_entry;
    s.chosen[b] = prop.earlier_entry;
    s.ordering.swap_adjacent(j);
    s.total = detail::sum_chosen(s, t);

    // Position j now holds (b, a); swapping back restores the old choices.
    s.proposals[j] = SwapProposal{detail::proposal_delta(t, b, s.chosen[b], old_b, a, s.chosen[a], old_a),
                                  old_b, old_a};
    const auto before = s.scans;
    if (j > 0) s.proposals[j - 1] = detail::evaluate_swap(s, j - 1, t, s.scans);
    if (j + 2 < n) s.proposals[j + 1] = detail::evaluate_swap(s, j + 1, t, s.scans);
    r.scans = s.scans - before;

    if (tabu_size > 0) {
        const auto key = std::minmax(a, b);
        s.tabu.emplace_back(key.first, key.second);
        if (s.tabu_hits.empty()) s.tabu_hits.assign(n * n, 0);
        ++s.tabu_hits[detail::pair_index(s, a, b)];
        while (s.tabu.size() > tabu_size) {
            --s.tabu_hits[detail::pair_index(s, s.tabu.front().first, s.tabu.front().second)];
            s.tabu.pop_front();
        }
    }
    if (s.total > s.best) {
        s.best = s.total;
        s.stagnation = 0;
    } else {
        ++s.stagnation;
    }
    r.position = j;
    r.delta = prop.delta;
    return r;
}

/// Tabu hill-climbing over orderings with restarts.  Each climb runs until
/// `stagnation()` consecutive steps fail to beat the global best, or the
/// climb's own best under StagnationBase::Climb (in greedy mode, until no
/// non-tabu swap improves).  Restarts perturb the best
/// ordering found so far by random adjacent swaps, or start from a fresh
/// random ordering.
inline SearchResult order_search(const RankedFamilyTable& t, const SearchConfig& cfg,
                                 std::optional<Ordering> initial = std::nullopt) {
    const std::size_t n = t.size();
    Rng rng(derive_seed(cfg.seed, "order-search"));
    SearchClock clock(cfg);
    SearchResult result;
    auto& trace = result.trace.points;

    Ordering start = initial ? *initial : Ordering::random(n, rng);
    OrderingState s = make_state(std::move(start), t);
    Ordering best_ordering = s.ordering;
    s.best = s.total;
    double global_best = s.best;
    result.stats.family_scans = s.scans;
    trace.push_back({clock.elapsed(), s.best, TraceEvent::Start});

    const std::size_t limit = cfg.stagnation();
    for (;;) {
        while (n >= 2 && s.stagnation < limit && !clock.exhausted(result.stats.steps)) {
            if (cfg.greedy) {
                bool improving = false;
                for (std::size_t j = 0; j + 1 < n; ++j)
                    if (s.proposals[j].delta > 0 && !detail::is_tabu(s, s.ordering.at(j), s.ordering.at(j + 1)))
                        improving = true;
                if (!improving) break;
            }
            auto r = step(s, t, cfg.tabu_size, cfg.random_ties ? &rng : nullptr);
            ++result.stats.steps;
            result.stats.aspiration_moves += r.aspiration;
            result.stats.family_scans += r.scans;
            result.stats.max_step_scans = std::max(result.stats.max_step_scans, r.scans);
            if (s.total > global_best) {
                global_best = s.total;
                best_ordering = s.ordering;
                trace.push_back({clock.elapsed(), global_best, TraceEvent::Improve});
            } else if (cfg.trace_steps) {
                trace.push_back({clock.elapsed(), global_best, TraceEvent::Step});
            }
        }
        if (result.stats.restarts >= cfg.restarts || clock.exhausted(result.stats.steps)) break;
        ++result.stats.restarts;

        Ordering next = cfg.restart_mode == RestartMode::Random ? Ordering::random(n, rng) : best_ordering;
        if (n >= 2)
            for (std::size_t m = 0; m < cfg.perturbation_for(n); ++m) next.swap_adjacent(uniform_index(rng, n - 1));
        s = make_state(std::move(next), t);
        result.stats.family_scans += s.scans;
        s.best = cfg.stagnation_base == StagnationBase::Climb ? s.total : global_best;
        trace.push_back({clock.elapsed(), global_best, TraceEvent::Restart});
        if (s.total > global_best) {
            global_best = s.best = s.total;
            best_ordering = s.ordering;
            trace.push_back({clock.elapsed(), global_best, TraceEvent::Improve});
        }
    }

    auto net = network_for_ordering(best_ordering, t);
    result.parents = std::move(net.parents);
    result.score = net.score;
    return result;
}

} // namespace bnsl
