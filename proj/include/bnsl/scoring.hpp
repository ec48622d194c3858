#pragma once

#include "bnsl/adtree.hpp"
#include "bnsl/error.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace bnsl {

enum class ScoreKind { BDe, BIC };

inline std::string to_string(ScoreKind k) { return k == ScoreKind::BDe ? "bde" : "bic"; }

inline ScoreKind parse_score_kind(const std::string& s) {
    if (s == "bde" || s == "BDe") return ScoreKind::BDe;
    if (s == "bic" || s == "BIC") return ScoreKind::BIC;
    throw ConfigError("unknown score '" + s + "' (expected bde or bic)");
}

/// Score configuration.  The structure prior is always uniform.
struct ScoreConfig {
    ScoreKind kind = ScoreKind::BDe;
    double ess = 5.0; // equivalent sample size, BDe only

    void validate() const {
        if (!(ess > 0.0) || !std::isfinite(ess))
            throw ConfigError("equivalent sample size must be positive");
    }
};

inline double log_gamma(double x) {
    // lgamma_r avoids the global signgam write of plain lgamma
    int sign = 0;
    return ::lgamma_r(x, &sign);
}

/// Decomposable family score from counts, in natural-log units.
///
/// BDe with a uniform Dirichlet prior spread over the family's cells:
///   sum_u [lnG(a_u) - lnG(a_u + M_u)] + sum_{u,x} [lnG(a_xu + M_xu) - lnG(a_xu)]
/// with a_xu = ess / (|child| * |parent configs|).
///
/// BIC: sum_{u,x} M_xu ln(M_xu / M_u) - (ln M / 2) (|child| - 1) |parent configs|.
inline double family_score(const ContingencyTable& t, const ScoreConfig& cfg) {
    cfg.validate();
    const std::size_t r = t.child_card, q = t.parent_configs;
    if (t.counts.size() != r * q) throw ConfigError("contingency table dimensions mismatch");
    double score = 0.0;
    if (cfg.kind == ScoreKind::BDe) {
        const double a_xu = cfg.ess / static_cast<double>(r * q);
        const double a_u = cfg.ess / static_cast<double>(q);
        const double lg_axu = log_gamma(a_xu), lg_au = log_gamma(a_u);
        for (std::size_t u = 0; u < q; ++u) {
            std::uint64_t m_u = 0;
            double cells = 0.0;
            for (std::size_t x = 0; x < r; ++x) {
                const auto m = t.counts[u * r + x];
                m_u += m;
                if (m) cells += log_gamma(a_xu + m) - lg_axu;
            }
            if (m_u) score += (lg_au - log_gamma(a_u + static_cast<double>(m_u))) + cells;
        }
        return score;
    }
    std::uint64_t total = 0;
    for (std::size_t u = 0; u < q; ++u) {
        std::uint64_t m_u = 0;
        for (std::size_t x = 0; x < r; ++x) m_u += t.counts[u * r + x];
        total += m_u;
        for (std::size_t x = 0; x < r; ++x) {
            const auto m = t.counts[u * r + x];
            if (m) score += m * std::log(static_cast<double>(m) / static_cast<double>(m_u));
        }
    }
    const double params = static_cast<double>((r - 1) * q);
    const double penalty = total ? 0.5 * std::log(static_cast<double>(total)) * params : 0.0;
    return score - penalty;
}

/// Scores (child, parents) families straight from an AD-tree, with an
/// optional memo.  Not thread-safe when memoizing.
class FamilyScorer {
public:
    FamilyScorer(const AdTree& tree, ScoreConfig cfg, bool memoize = true)
        : tree_(&tree), cfg_(cfg), memoize_(memoize) {
        cfg_.validate();
    }

    const AdTree& tree() const noexcept { return *tree_; }
    const ScoreConfig& config() const noexcept { return cfg_; }
    std::size_t evaluations() const noexcept { return evaluations_; }

    /// `parents` must be sorted ascending.
    double operator()(VarId child, std::span<const VarId> parents) const {
        if (!memoize_) return compute(child, parents);
        key_.assign(1, child);
        key_.insert(key_.end(), parents.begin(), parents.end());
        auto it = memo_.find(key_);
        if (it != memo_.end()) return it->second;
        const double s = compute(child, parents);
        memo_.emplace(key_, s);
        return s;
    }

private:
    struct KeyHash {
        std::size_t operator()(const std::vector<VarId>& k) const noexcept {
            std::uint64_t h = 0xcbf29ce484222325ULL;
            for (auto v : k) h = (h ^ v) * 0x100000001b3ULL;
            return static_cast<std::size_t>(h);
        }
    };

    double compute(VarId child, std::span<const VarId> parents) const {
        ++evaluations_;
        return family_score(
            tree_->contingency_table(child, std::vector<VarId>(parents.begin(), parents.end())),
            cfg_);
    }

    const AdTree* tree_;
    ScoreConfig cfg_;
    bool memoize_;
    mutable std::size_t evaluations_ = 0;
    mutable std::vector<VarId> key_;
    mutable std::unordered_map<std::vector<VarId>, double, KeyHash> memo_;
};

/// Looks up a node's family score; empty when the family is unknown.
using FamilyLookup = std::function<std::optional<double>(VarId, std::span<const VarId>)>;

/// Sum of family scores in ascending node order.
inline double network_score(std::span<const std::vector<VarId>> parents, const FamilyLookup& lookup) {
    double total = 0.0;
    for (VarId i = 0; i < parents.size(); ++i) {
        auto s = lookup(i, parents[i]);
        if (!s) throw ModelError("no score for the family of node " + std::to_string(i));
        total += *s;
    }
    return total;
}

inline double network_score(std::span<const std::vector<VarId>> parents, const FamilyScorer& scorer) {
    return network_score(parents, FamilyLookup([&scorer](VarId c, std::span<const VarId> p) {
                             return std::optional<double>(scorer(c, p));
                         }));
}

} // namespace bnsl
