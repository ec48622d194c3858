#pragma once

#include "bnsl/families.hpp"
#include "bnsl/rng.hpp"
#include "bnsl/scoring.hpp"
#include "bnsl/search.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <optional>
#include <unordered_map>
#include <vector>

namespace bnsl {

struct EdgeOp {
    enum class Kind { Add, Delete, Reverse };
    Kind kind;
    VarId from;
    VarId to;

    /// The operation that undoes this one.
    EdgeOp inverse() const {
        switch (kind) {
        case Kind::Add: return {Kind::Delete, from, to};
        case Kind::Delete: return {Kind::Add, from, to};
        case Kind::Reverse: return {Kind::Reverse, to, from};
        }
        return *this;
    }

    bool operator==(const EdgeOp&) const = default;
};

/// Which parents each node may take, and how many.
class ParentConstraints {
public:
    ParentConstraints(const CandidateSets& candidates, std::size_t max_parents)
        : n_(candidates.size()), k_(max_parents), allowed_(n_ * n_, false) {
        for (VarId to = 0; to < n_; ++to)
            for (auto from : candidates[to])
                if (from != to && from < n_) allowed_[to * n_ + from] = true;
    }

    std::size_t size() const noexcept { return n_; }
    std::size_t max_parents() const noexcept { return k_; }
    bool allows(VarId from, VarId to) const noexcept { return allowed_[to * n_ + from]; }

private:
    std::size_t n_;
    std::size_t k_;
    std::vector<bool> allowed_;
};

struct DagState {
    std::vector<std::vector<VarId>> parents; // ascending
    std::vector<double> family;              // per-node family score
    double total = 0.0;
    double best = -std::numeric_limits<double>::infinity();
    std::deque<EdgeOp> tabu; // inverses of recent moves, oldest first
    std::unordered_map<std::uint64_t, std::uint32_t> tabu_hits;
    std::size_t stagnation = 0;

    bool has_edge(VarId from, VarId to) const {
        return std::binary_search(parents[to].begin(), parents[to].end(), from);
    }
    static std::uint64_t key(const EdgeOp& op) {
        return (static_cast<std::uint64_t>(op.kind) << 62) | (static_cast<std::uint64_t>(op.from) << 31) | op.to;
    }
    bool is_tabu(const EdgeOp& op) const { return tabu_hits.contains(key(op)); }
    void push_tabu(const EdgeOp& op, std::size_t capacity) {
        tabu.push_back(op);
        ++tabu_hits[key(op)];
        while (tabu.size() > capacity) {
            auto it = tabu_hits.find(key(tabu.front()));
            if (--it->second == 0) tabu_hits.erase(it);
            tabu.pop_front();
        }
    }
};

namespace detail {

inline double sum_family(const DagState& s) {
    double total = 0.0;
    for (double f : s.family) total += f;
    return total;
}

inline std::vector<std::vector<VarId>> children_of(const DagState& s) {
    std::vector<std::vector<VarId>> ch(s.parents.size());
    for (VarId v = 0; v < s.parents.size(); ++v)
        for (auto p : s.parents[v]) ch[p].push_back(v);
    return ch;
}

// Marks every node reachable from `src` along child edges, optionally
// ignoring the single edge skip_from -> skip_to.
inline std::vector<bool> reachable(const std::vector<std::vector<VarId>>& children, VarId src,
                                   std::optional<std::pair<VarId, VarId>> skip = std::nullopt) {
    std::vector<bool> seen(children.size(), false);
    std::vector<VarId> stack{src};
    seen[src] = true;
    while (!stack.empty()) {
        const VarId v = stack.back();
        stack.pop_back();
        for (auto c : children[v]) {
            if (skip && v == skip->first && c == skip->second) continue;
            if (!seen[c]) {
                seen[c] = true;
                stack.push_back(c);
            }
        }
    }
    return seen;
}

inline std::vector<VarId> with_parent(std::vector<VarId> pa, VarId p) {
    pa.insert(std::upper_bound(pa.begin(), pa.end(), p), p);
    return pa;
}

inline std::vector<VarId> without_parent(std::vector<VarId> pa, VarId p) {
    pa.erase(std::lower_bound(pa.begin(), pa.end(), p));
    return pa;
}

} // namespace detail

inline DagState make_dag_state(std::vector<std::vector<VarId>> parents, const FamilyScorer& score) {
    DagState s;
    s.parents = std::move(parents);
    for (auto& p : s.parents) std::sort(p.begin(), p.end());
    s.family.resize(s.parents.size());
    for (VarId v = 0; v < s.parents.size(); ++v) s.family[v] = score(v, s.parents[v]);
    s.total = detail::sum_family(s);
    return s;
}

inline DagState empty_dag_state(std::size_t n, const FamilyScorer& score) {
    return make_dag_state(std::vector<std::vector<VarId>>(n), score);
}

/// Every add/delete/reverse that keeps the graph acyclic, respects the
/// in-degree bound and candidate sets, and (unless `include_tabu`) is not
/// on the tabu list.  Order: additions by (to, from), then deletions and
/// reversals by (to, from).
inline std::vector<EdgeOp> legal_ops(const DagState& s, const ParentConstraints& pc, bool include_tabu = false) {
    const std::size_t n = s.parents.size();
    const auto children = detail::children_of(s);
    std::vector<EdgeOp> ops;
    auto push = [&](EdgeOp op) {
        if (include_tabu || !s.is_tabu(op)) ops.push_back(op);
    };
    for (VarId to = 0; to < n; ++to) {
        if (s.parents[to].size() >= pc.max_parents()) continue;
        // from -> to closes a cycle iff from is a descendant of to
        const auto desc = detail::reachable(children, to);
        for (VarId from = 0; from < n; ++from)
            if (from != to && pc.allows(from, to) && !s.has_edge(from, to) && !desc[from])
                push({EdgeOp::Kind::Add, from, to});
    }
    for (VarId to = 0; to < n; ++to)
        for (auto from : s.parents[to]) {
            push({EdgeOp::Kind::Delete, from, to});
            if (!pc.allows(to, from) || s.parents[from].size() >= pc.max_parents()) continue;
            // to -> from closes a cycle iff another path from -> to exists
            const auto reach = detail::reachable(children, from, std::pair{from, to});
            if (!reach[to]) push({EdgeOp::Kind::Reverse, from, to});
        }
    return ops;
}

/// Score change of `op`: one family rescored for add/delete, two for reverse.
inline double op_delta(const DagState& s, const EdgeOp& op, const FamilyScorer& score) {
    switch (op.kind) {
    case EdgeOp::Kind::Add:
        return score(op.to, detail::with_parent(s.parents[op.to], op.from)) - s.family[op.to];
    case EdgeOp::Kind::Delete:
        return score(op.to, detail::without_parent(s.parents[op.to], op.from)) - s.family[op.to];
    case EdgeOp::Kind::Reverse:
        return (score(op.to, detail::without_parent(s.parents[op.to], op.from)) - s.family[op.to]) +
               (score(op.from, detail::with_parent(s.parents[op.from], op.to)) - s.family[op.from]);
    }
    return 0.0;
}

/// Applies `op` without legality checks; updates family scores and total.
inline void apply_op(DagState& s, const EdgeOp& op, const FamilyScorer& score) {
    switch (op.kind) {
    case EdgeOp::Kind::Add:
        s.parents[op.to] = detail::with_parent(s.parents[op.to], op.from);
        s.family[op.to] = score(op.to, s.parents[op.to]);
        break;
    case EdgeOp::Kind::Delete:
        s.parents[op.to] = detail::without_parent(s.parents[op.to], op.from);
        s.family[op.to] = score(op.to, s.parents[op.to]);
        break;
    case EdgeOp::Kind::Reverse:
        s.parents[op.to] = detail::without_parent(s.parents[op.to], op.from);
        s.parents[op.from] = detail::with_parent(s.parents[op.from], op.to);
        s.family[op.to] = score(op.to, s.parents[op.to]);
        s.family[op.from] = score(op.from, s.parents[op.from]);
        break;
    }
    s.total = detail::sum_family(s);
}

struct DagStepResult {
    std::optional<EdgeOp> op; // empty when no legal move exists
    double delta = 0.0;
    bool aspiration = false;
};

/// Applies the best non-tabu legal op (first in legal_ops order on ties, or
/// a uniformly drawn one when `ties` is given), falling back to tabu ops when
/// nothing else is legal.  Pushes the inverse onto the tabu list.
inline DagStepResult dag_step(DagState& s, const ParentConstraints& pc, const FamilyScorer& score,
                              std::size_t tabu_size, Rng* ties = nullptr) {
    DagStepResult r;
    auto ops = legal_ops(s, pc, false);
    if (ops.empty()) {
        ops = legal_ops(s, pc, true);
        r.aspiration = true;
    }
    if (ops.empty()) return r;
    std::size_t best = 0, seen = 0;
    double best_delta = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < ops.size(); ++i) {
        const double d = op_delta(s, ops[i], score);
        if (d > best_delta) {
            best_delta = d;
            best = i;
            seen = 1;
        } else if (ties && d == best_delta && uniform_index(*ties, ++seen) == 0) {
            best = i;
        }
    }
    r.op = ops[best];
    r.delta = best_delta;
    apply_op(s, *r.op, score);
    if (tabu_size > 0) s.push_tabu(r.op->inverse(), tabu_size);
    if (s.total > s.best) {
        s.best = s.total;
        s.stagnation = 0;
    } else {
        ++s.stagnation;
    }
    return r;
}

/// Tabu hill-climbing over DAGs from the empty graph, with restarts that
/// apply random legal ops to the incumbent best (or to the empty graph).
inline SearchResult dag_search(const FamilyScorer& score, const CandidateSets& candidates,
                               const SearchConfig& cfg) {
    const std::size_t n = candidates.size();
    const ParentConstraints pc(candidates, cfg.max_parents);
    Rng rng(derive_seed(cfg.seed, "dag-search"));
    SearchClock clock(cfg);
    SearchResult result;
    auto& trace = result.trace.points;
    const auto evals_before = score.evaluations();

    DagState s = empty_dag_state(n, score);
    s.best = s.total;
    double global_best = s.best;
    auto best_parents = s.parents;
    trace.push_back({clock.elapsed(), s.best, TraceEvent::Start});

    const std::size_t limit = cfg.stagnation();
    for (;;) {
        while (s.stagnation < limit && !clock.exhausted(result.stats.steps)) {
            if (cfg.greedy) {
                bool improving = false;
                for (const auto& op : legal_ops(s, pc, false))
                    if (op_delta(s, op, score) > 0) { improving = true; break; }
                if (!improving) break;
            }
            auto r = dag_step(s, pc, score, cfg.tabu_size, cfg.random_ties ? &rng : nullptr);
            if (!r.op) break;
            ++result.stats.steps;
            result.stats.aspiration_moves += r.aspiration;
            if (s.total > global_best) {
                global_best = s.total;
                best_parents = s.parents;
                trace.push_back({clock.elapsed(), global_best, TraceEvent::Improve});
            } else if (cfg.trace_steps) {
                trace.push_back({clock.elapsed(), global_best, TraceEvent::Step});
            }
        }
        if (result.stats.restarts >= cfg.restarts || clock.exhausted(result.stats.steps)) break;
        ++result.stats.restarts;

        s = make_dag_state(cfg.restart_mode == RestartMode::Random ? std::vector<std::vector<VarId>>(n)
                                                                   : best_parents,
                           score);
        for (std::size_t m = 0; m < cfg.perturbation_for(n); ++m) {
            const auto ops = legal_ops(s, pc, true);
            if (ops.empty()) break;
            apply_op(s, ops[uniform_index(rng, ops.size())], score);
        }
        s.best = cfg.stagnation_base == StagnationBase::Climb ? s.total : global_best;
        trace.push_back({clock.elapsed(), global_best, TraceEvent::Restart});
        if (s.total > global_best) {
            global_best = s.best = s.total;
            best_parents = s.parents;
            trace.push_back({clock.elapsed(), global_best, TraceEvent::Improve});
        }
    }
    result.stats.score_evaluations = score.evaluations() - evals_before;
    result.parents = best_parents;
    result.score = global_best;
    return result;
}

} // namespace bnsl
