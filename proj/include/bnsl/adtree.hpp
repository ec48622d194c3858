#pragma once

#include "bnsl/data.hpp"
#include "bnsl/error.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace bnsl {

struct Binding {
    VarId var;
    Value value;
};

/// Conjunction of (variable = value) bindings over distinct variables.
using CountQuery = std::vector<Binding>;

/// Dense counts M[x, u] for one family.  Parents are sorted ascending and the
/// joint parent index is mixed-radix with the first parent most significant;
/// cell (x, u) lives at `u * child_card + x`.
struct ContingencyTable {
    VarId child = 0;
    std::vector<VarId> parents;
    std::size_t child_card = 0;
    std::size_t parent_configs = 1;
    std::vector<std::uint32_t> counts;

    std::uint32_t at(std::size_t x, std::size_t u) const { return counts[u * child_card + x]; }
    std::uint64_t total() const {
        std::uint64_t t = 0;
        for (auto c : counts) t += c;
        return t;
    }
};

struct AdTreeOptions {
    std::size_t leaf_list_threshold = 32;
    std::optional<std::size_t> max_depth; // unbounded when empty
    std::size_t table_cell_ceiling = std::size_t{1} << 24;
};

/// All-dimensions tree of cached counts.  Every count node expands one vary
/// node per later variable; a vary node stores a child count node per value
/// except its most common value, whose counts are recovered by subtraction.
/// Nodes covering few records (or at the depth limit) keep a row list instead.
class AdTree {
public:
    explicit AdTree(const Dataset& data, AdTreeOptions opt = {})
        : schema_(data.schema()), n_(data.num_vars()), m_(data.num_records()),
          values_(data.values()), opt_(opt) {
        if (m_ == 0) throw ConfigError("cannot build an AD-tree over an empty dataset");
        std::vector<std::uint32_t> rows(m_);
        for (std::size_t r = 0; r < m_; ++r) rows[r] = static_cast<std::uint32_t>(r);
        build(rows, 0, 0);
    }

    std::size_t num_records() const noexcept { return m_; }
    std::size_t num_vars() const noexcept { return n_; }
    const Schema& schema() const noexcept { return schema_; }
    const AdTreeOptions& options() const noexcept { return opt_; }
    std::size_t node_count() const noexcept { return nodes_.size(); }
    std::size_t vary_count() const noexcept { return varies_.size(); }
    std::size_t leaf_row_count() const noexcept { return leaf_rows_.size(); }

    std::uint64_t count(CountQuery query) const {
        std::sort(query.begin(), query.end(),
                  [](const Binding& a, const Binding& b) { return a.var < b.var; });
        for (std::size_t i = 0; i < query.size(); ++i) {
            if (query[i].var >= n_)
                throw QueryError("unknown variable id " + std::to_string(query[i].var));
            if (query[i].value >= schema_.cardinality(query[i].var))
                throw QueryError("value " + std::to_string(query[i].value) +
                                 " out of range for variable " + std::to_string(query[i].var));
            if (i && query[i].var == query[i - 1].var)
                throw QueryError("variable " + std::to_string(query[i].var) + " bound twice");
        }
        return count_at(0, query);
    }

    ContingencyTable contingency_table(VarId child, std::vector<VarId> parents) const {
        std::sort(parents.begin(), parents.end());
        if (child >= n_) throw QueryError("unknown child id " + std::to_string(child));
        for (std::size_t i = 0; i < parents.size(); ++i) {
            if (parents[i] >= n_) throw QueryError("unknown parent id " + std::to_string(parents[i]));
            if (parents[i] == child) throw QueryError("child listed among its parents");
            if (i && parents[i] == parents[i - 1]) throw QueryError("duplicate parent id");
        }
        ContingencyTable t;
        t.child = child;
        t.parents = parents;
        t.child_card = schema_.cardinality(child);
        std::size_t cells = t.child_card;
        for (VarId p : parents) {
            const auto c = schema_.cardinality(p);
            if (cells > opt_.table_cell_ceiling / c)
                throw QueryError("contingency table exceeds the cell ceiling");
            cells *= c;
            t.parent_configs *= c;
        }
        if (cells > opt_.table_cell_ceiling)
            throw QueryError("contingency table exceeds the cell ceiling");

        std::vector<VarId> vars = parents;
        vars.insert(std::upper_bound(vars.begin(), vars.end(), child), child);
        std::vector<std::uint32_t> sorted_counts(cells, 0);
        fill_table(0, vars, 0, sorted_counts);

        // Re-index from the ascending-id layout into (u, x).
        t.counts.assign(cells, 0);
        const std::size_t k = vars.size();
        std::vector<std::size_t> digit(k, 0);
        std::size_t child_pos = static_cast<std::size_t>(
            std::find(vars.begin(), vars.end(), child) - vars.begin());
        for (std::size_t cell = 0; cell < cells; ++cell) {
            std::size_t u = 0;
            for (std::size_t j = 0; j < k; ++j)
                if (j != child_pos) u = u * schema_.cardinality(vars[j]) + digit[j];
            t.counts[u * t.child_card + digit[child_pos]] = sorted_counts[cell];
            for (std::size_t j = k; j-- > 0;) {
                if (++digit[j] < schema_.cardinality(vars[j])) break;
                digit[j] = 0;
            }
        }
        return t;
    }

    /// Structural fingerprint used to check build determinism.
    std::uint64_t fingerprint() const noexcept {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        auto mix = [&h](std::uint64_t x) { h = (h ^ x) * 0x100000001b3ULL; };
        for (const auto& nd : nodes_) {
            mix(nd.count);
            mix(nd.start_var);
            mix(nd.vary_begin);
            mix(nd.rows_begin);
            mix(nd.rows_end);
        }
        for (const auto& v : varies_) {
            mix(v.mcv);
            mix(v.child_begin);
        }
        for (auto c : children_) mix(c);
        for (auto r : leaf_rows_) mix(r);
        return h;
    }

    /// Walks every vary node and checks that the elided value really is the
    /// most common one: the stored siblings never exceed the parent's count
    /// and none of them outnumbers the recovered MCV count.
    bool check_conservation() const {
        if (nodes_.front().count != m_) return false;
        for (const auto& nd : nodes_) {
            if (nd.is_leaf() || nd.vary_begin == kNone) continue;
            for (VarId v = nd.start_var; v < n_; ++v) {
                const auto& vary = varies_[nd.vary_begin + (v - nd.start_var)];
                std::uint64_t sum = 0, largest = 0;
                for (std::size_t x = 0; x < schema_.cardinality(v); ++x) {
                    if (x == vary.mcv) continue;
                    auto c = children_[vary.child_begin + x];
                    if (c == kNone) continue;
                    sum += nodes_[c].count;
                    largest = std::max<std::uint64_t>(largest, nodes_[c].count);
                }
                if (sum > nd.count || largest > nd.count - sum) return false;
            }
        }
        return true;
    }

private:
    static constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();

    struct Node {
        std::uint32_t count = 0;
        std::uint32_t start_var = 0;
        std::uint32_t vary_begin = kNone; // varies for start_var..n-1
        std::uint32_t rows_begin = kNone; // leaf list when != kNone
        std::uint32_t rows_end = kNone;
        bool is_leaf() const noexcept { return rows_begin != kNone; }
    };
    struct Vary {
        std::uint32_t mcv = 0;
        std::uint32_t child_begin = 0; // one slot per value in children_
    };

    Value at(std::uint32_t row, VarId var) const noexcept { return values_[row * n_ + var]; }

    std::uint32_t build(std::span<const std::uint32_t> rows, VarId start, std::size_t depth) {
        const auto id = static_cast<std::uint32_t>(nodes_.size());
        nodes_.push_back(Node{static_cast<std::uint32_t>(rows.size()), start, kNone, kNone, kNone});
        if (start >= n_) return id;
        const bool depth_limited = opt_.max_depth && depth >= *opt_.max_depth;
        if (rows.size() <= opt_.leaf_list_threshold || depth_limited) {
            nodes_[id].rows_begin = static_cast<std::uint32_t>(leaf_rows_.size());
            leaf_rows_.insert(leaf_rows_.end(), rows.begin(), rows.end());
            nodes_[id].rows_end = static_cast<std::uint32_t>(leaf_rows_.size());
            return id;
        }
        const auto vary_begin = static_cast<std::uint32_t>(varies_.size());
        nodes_[id].vary_begin = vary_begin;
        varies_.resize(varies_.size() + (n_ - start));
        std::vector<std::vector<std::uint32_t>> buckets;
        for (VarId v = start; v < n_; ++v) {
            const auto card = schema_.cardinality(v);
            buckets.assign(card, {});
            for (auto r : rows) buckets[at(r, v)].push_back(r);
            std::uint32_t mcv = 0;
            for (std::uint32_t x = 1; x < card; ++x)
                if (buckets[x].size() > buckets[mcv].size()) mcv = x;
            const auto child_begin = static_cast<std::uint32_t>(children_.size());
            children_.resize(children_.size() + card, kNone);
            varies_[vary_begin + (v - start)] = Vary{mcv, child_begin};
            auto local = std::move(buckets);
            for (std::uint32_t x = 0; x < card; ++x) {
                if (x == mcv || local[x].empty()) continue;
                auto child = build(local[x], v + 1, depth + 1);
                children_[child_begin + x] = child;
            }
        }
        return id;
    }

    std::uint64_t scan_count(const Node& nd, std::span<const Binding> q) const {
        std::uint64_t c = 0;
        for (auto i = nd.rows_begin; i < nd.rows_end; ++i) {
            const auto r = leaf_rows_[i];
            bool ok = true;
            for (const auto& b : q)
                if (at(r, b.var) != b.value) { ok = false; break; }
            c += ok;
        }
        return c;
    }

    std::uint64_t count_at(std::uint32_t id, std::span<const Binding> q) const {
        const Node& nd = nodes_[id];
        if (q.empty()) return nd.count;
        if (nd.is_leaf()) return scan_count(nd, q);
        const auto& b = q.front();
        const auto& vary = varies_[nd.vary_begin + (b.var - nd.start_var)];
        const auto rest = q.subspan(1);
        if (b.value != vary.mcv) {
            const auto child = children_[vary.child_begin + b.value];
            return child == kNone ? 0 : count_at(child, rest);
        }
        std::uint64_t c = count_at(id, rest);
        for (std::size_t x = 0; x < schema_.cardinality(b.var); ++x) {
            if (x == vary.mcv) continue;
            const auto child = children_[vary.child_begin + x];
            if (child != kNone) c -= count_at(child, rest);
        }
        return c;
    }

    // Writes counts over vars[i..] (ascending ids, first most significant)
    // under node `id` into `out`.
    void fill_table(std::uint32_t id, std::span<const VarId> vars, std::size_t i,
                    std::span<std::uint32_t> out) const {
        const Node& nd = nodes_[id];
        if (i == vars.size()) {
            out[0] = nd.count;
            return;
        }
        if (nd.is_leaf()) {
            std::fill(out.begin(), out.end(), 0u);
            for (auto k = nd.rows_begin; k < nd.rows_end; ++k) {
                const auto r = leaf_rows_[k];
                std::size_t cell = 0;
                for (std::size_t j = i; j < vars.size(); ++j)
                    cell = cell * schema_.cardinality(vars[j]) + at(r, vars[j]);
                ++out[cell];
            }
            return;
        }
        const VarId v = vars[i];
        const auto card = schema_.cardinality(v);
        const std::size_t stride = out.size() / card;
        const auto& vary = varies_[nd.vary_begin + (v - nd.start_var)];
        auto mcv_slice = out.subspan(vary.mcv * stride, stride);
        // MCV slice = (counts ignoring v) - sum of the other slices.
        fill_table(id, vars, i + 1, mcv_slice);
        for (std::uint32_t x = 0; x < card; ++x) {
            if (x == vary.mcv) continue;
            auto slice = out.subspan(x * stride, stride);
            const auto child = children_[vary.child_begin + x];
            if (child == kNone) {
                std::fill(slice.begin(), slice.end(), 0u);
                continue;
            }
            fill_table(child, vars, i + 1, slice);
            for (std::size_t c = 0; c < stride; ++c) mcv_slice[c] -= slice[c];
        }
    }

    Schema schema_;
    std::size_t n_;
    std::size_t m_;
    std::vector<Value> values_;
    AdTreeOptions opt_;
    std::vector<Node> nodes_;
    std::vector<Vary> varies_;
    std::vector<std::uint32_t> children_;
    std::vector<std::uint32_t> leaf_rows_;
};

} // namespace bnsl
