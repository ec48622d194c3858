#pragma once

#include "bnsl/adtree.hpp"
#include "bnsl/dag_search.hpp"
#include "bnsl/data.hpp"
#include "bnsl/families.hpp"
#include "bnsl/network.hpp"
#include "bnsl/ordering_search.hpp"
#include "bnsl/scoring.hpp"
#include "bnsl/search.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>

namespace bnsl {

enum class Method { Order, Dag };

inline std::string to_string(Method m) { return m == Method::Order ? "order" : "dag"; }

inline Method parse_method(const std::string& s) {
    if (s == "order") return Method::Order;
    if (s == "dag") return Method::Dag;
    throw ConfigError("unknown method '" + s + "' (expected order or dag)");
}

struct LearnConfig {
    ScoreConfig score;
    std::size_t max_parents = 3;
    std::size_t candidates = 10; // 0 = every other variable
    SearchConfig search;
    AdTreeOptions adtree;
    unsigned threads = 1;
    double total_seconds = 0.0; // per-method budget including its own precompute; 0 = none
    std::optional<std::string> family_cache;

    void validate(std::size_t n) const {
        score.validate();
        if (n < 1) throw ConfigError("dataset has no variables");
        if (candidates > n - 1) throw ConfigError("candidate count exceeds n - 1");
        if (max_parents > 16) throw ConfigError("max parents above 16 is not supported");
        if (total_seconds < 0 || search.max_seconds < 0) throw ConfigError("negative time budget");
    }
};

/// Inputs shared by both searches: the AD-tree and the candidate parents.
struct SharedPrecompute {
    AdTree tree;
    CandidateSets candidates;
    double seconds = 0.0;
};

namespace detail {
inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}
} // namespace detail

inline SharedPrecompute precompute_shared(const Dataset& data, const LearnConfig& cfg) {
    cfg.validate(data.num_vars());
    const auto t0 = std::chrono::steady_clock::now();
    AdTreeOptions opt = cfg.adtree;
    if (!opt.max_depth) opt.max_depth = cfg.max_parents + 1;
    AdTree tree(data, opt);
    auto cands = (cfg.candidates == 0 || cfg.candidates == data.num_vars() - 1)
                     ? all_candidates(data.num_vars())
                     : select_candidates(data, cfg.candidates);
    return SharedPrecompute{std::move(tree), std::move(cands), detail::seconds_since(t0)};
}

/// Builds (or loads from the configured cache) the ranked family tables.
inline RankedFamilyTable family_tables_for(const Dataset& data, const SharedPrecompute& shared,
                                           const LearnConfig& cfg) {
    const FamilyCacheKey key{data.hash(), cfg.candidates, cfg.max_parents, cfg.score};
    if (cfg.family_cache) {
        std::ifstream in(*cfg.family_cache);
        if (in)
            if (auto cached = load_family_tables(in, key)) return std::move(*cached);
    }
    auto tables = build_family_tables(shared.tree, shared.candidates, cfg.max_parents, cfg.score, true,
                                      cfg.threads);
    if (cfg.family_cache) {
        std::ofstream out(*cfg.family_cache);
        if (!out) throw Error("io", "cannot write family cache '" + *cfg.family_cache + "'");
        save_family_tables(out, tables, key);
    }
    return tables;
}

struct LearnSummary {
    Method method = Method::Order;
    Network network;
    std::size_t records = 0;
    double score = 0.0;
    double precompute_seconds = 0.0; // shared + method-specific
    double search_seconds = 0.0;
    double time_to_best = 0.0;       // precompute + search time until the final best
    std::optional<FamilyTableStats> families;
    SearchStats stats;
    SearchTrace trace;

    double score_per_datapoint() const { return score / static_cast<double>(records); }
    double total_seconds() const { return precompute_seconds + search_seconds; }
};

inline LearnSummary learn(const Dataset& data, Method method, const LearnConfig& cfg,
                          const SharedPrecompute& shared) {
    cfg.validate(data.num_vars());
    LearnSummary out;
    out.method = method;
    out.records = data.num_records();
    SearchConfig scfg = cfg.search;
    scfg.max_parents = cfg.max_parents;

    const auto t0 = std::chrono::steady_clock::now();
    SearchResult res;
    if (method == Method::Order) {
        auto tables = family_tables_for(data, shared, cfg);
        out.families = tables.stats();
        out.precompute_seconds = shared.seconds + detail::seconds_since(t0);
        if (cfg.total_seconds > 0)
            scfg.max_seconds = std::max(1e-3, cfg.total_seconds - out.precompute_seconds);
        const auto t1 = std::chrono::steady_clock::now();
        res = order_search(tables, scfg);
        out.search_seconds = detail::seconds_since(t1);
    } else {
        out.precompute_seconds = shared.seconds;
        if (cfg.total_seconds > 0)
            scfg.max_seconds = std::max(1e-3, cfg.total_seconds - out.precompute_seconds);
        FamilyScorer scorer(shared.tree, cfg.score);
        res = dag_search(scorer, shared.candidates, scfg);
        out.search_seconds = detail::seconds_since(t0);
    }
    out.network = Network(data.schema(), res.parents);
    out.score = res.score;
    out.stats = res.stats;
    out.trace = std::move(res.trace);
    out.trace.precompute_seconds = out.precompute_seconds;
    out.trace.points.insert(out.trace.points.begin(),
                            TracePoint{0.0, out.trace.points.empty() ? out.score : out.trace.points.front().best_score,
                                       TraceEvent::Precompute});
    out.time_to_best = out.precompute_seconds + out.trace.time_to_best();
    return out;
}

inline LearnSummary learn(const Dataset& data, Method method, const LearnConfig& cfg) {
    return learn(data, method, cfg, precompute_shared(data, cfg));
}

/// Score of a structure rescored from raw data, independent of any search.
inline double rescore(const Network& net, const Dataset& data, const ScoreConfig& cfg) {
    AdTree tree(data);
    FamilyScorer scorer(tree, cfg, false);
    return network_score(net.parents, scorer);
}

inline void write_summary_header(std::ostream& out) {
    out << "method\tscore_per_datapoint\tscore\ttime_to_best_s\tprecompute_s\tsearch_s\ttotal_s"
           "\tsteps\trestarts\tedges\tf_max\tf_max_top\tf_eff_mean\tf_eff_max\n";
}

inline void write_summary_row(std::ostream& out, const LearnSummary& s) {
    char buf[512];
    const auto f = s.families.value_or(FamilyTableStats{});
    std::snprintf(buf, sizeof buf, "%s\t%.10f\t%.10f\t%.6f\t%.6f\t%.6f\t%.6f\t%zu\t%zu\t%zu\t%llu\t%llu\t%.2f\t%zu\n",
                  to_string(s.method).c_str(), s.score_per_datapoint(), s.score, s.time_to_best,
                  s.precompute_seconds, s.search_seconds, s.total_seconds(), s.stats.steps, s.stats.restarts,
                  s.network.edge_count(), static_cast<unsigned long long>(f.f_max),
                  static_cast<unsigned long long>(f.f_max_top), f.f_eff_mean, f.f_eff_max);
    out << buf;
}

/// Average held-out log-likelihood over folds, parameters fitted per train split.
inline double cross_validate(const Network& structure, const Dataset& data, std::size_t folds,
                             std::uint64_t seed, double ess) {
    double sum = 0.0;
    const auto parts = split_folds(data, folds, seed);
    for (const auto& f : parts) sum += log_likelihood(fit_parameters(structure, f.train, ess), f.test);
    return sum / static_cast<double>(parts.size());
}

} // namespace bnsl
