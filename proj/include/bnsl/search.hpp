#pragma once

#include "bnsl/data.hpp"
#include "bnsl/error.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace bnsl {

enum class RestartMode {
    Perturb, // random moves applied to the incumbent best
    Random,  // fresh random state, then the random moves
};

inline std::string to_string(RestartMode m) { return m == RestartMode::Perturb ? "perturb" : "random"; }

inline RestartMode parse_restart_mode(const std::string& s) {
    if (s == "perturb") return RestartMode::Perturb;
    if (s == "random") return RestartMode::Random;
    throw ConfigError("unknown restart mode '" + s + "' (expected perturb or random)");
}

/// What a step must beat to reset the stagnation counter.
enum class StagnationBase {
    Global, // best score seen by the whole search
    Climb,  // best score seen since the last restart
};

inline StagnationBase parse_stagnation_base(const std::string& s) {
    if (s == "global") return StagnationBase::Global;
    if (s == "climb") return StagnationBase::Climb;
    throw ConfigError("unknown stagnation base '" + s + "' (expected global or climb)");
}

/// Tabu hill-climbing parameters shared by the ordering and DAG searches.
struct SearchConfig {
    std::size_t tabu_size = 100;
    std::optional<std::size_t> stagnation_limit; // non-improving moves before a restart; defaults to tabu_size
    std::size_t restarts = 10;
    std::size_t perturbation = 0; // random moves per restart; 0 means n / 2
    RestartMode restart_mode = RestartMode::Perturb;
    StagnationBase stagnation_base = StagnationBase::Global;
    bool random_ties = true;      // break equal-delta moves uniformly instead of by position
    bool greedy = false;          // stop climbing at a local maximum instead of taking worsening moves
    std::uint64_t seed = 0;
    std::size_t max_parents = 3;  // DAG search only; ordering search takes k from its tables
    std::optional<std::size_t> max_steps; // across all restarts
    double max_seconds = 0.0;     // wall-clock budget, 0 = none
    bool trace_steps = false;

    std::size_t stagnation() const { return stagnation_limit.value_or(tabu_size); }
    std::size_t perturbation_for(std::size_t n) const {
        return perturbation ? perturbation : std::max<std::size_t>(1, n / 2);
    }
};

enum class TraceEvent { Precompute, Start, Step, Improve, Restart };

inline const char* to_string(TraceEvent e) {
    switch (e) {
    case TraceEvent::Precompute: return "precompute";
    case TraceEvent::Start: return "start";
    case TraceEvent::Step: return "step";
    case TraceEvent::Improve: return "improve";
    case TraceEvent::Restart: return "restart";
    }
    return "?";
}

struct TracePoint {
    double seconds;    // since search start
    double best_score; // global best so far (raw, not per datapoint)
    TraceEvent event;
};

struct SearchTrace {
    double precompute_seconds = 0.0;
    std::vector<TracePoint> points;

    double time_to_best() const {
        double t = 0.0, best = -std::numeric_limits<double>::infinity();
        for (const auto& p : points)
            if (p.best_score > best) {
                best = p.best_score;
                t = p.seconds;
            }
        return t;
    }
};

/// Tab-separated trace.  Scores are divided by `records`; the precompute
/// duration is emitted as a leading comment and a `precompute` row at 0.
inline void write_trace(std::ostream& out, const SearchTrace& trace, std::size_t records) {
    out << "# precompute_seconds\t" << trace.precompute_seconds << '\n';
    out << "elapsed_seconds\tbest_score_per_datapoint\tevent\n";
    const double m = static_cast<double>(records ? records : 1);
    char buf[96];
    for (const auto& p : trace.points) {
        std::snprintf(buf, sizeof buf, "%.6f\t%.10f\t%s\n", p.seconds, p.best_score / m, to_string(p.event));
        out << buf;
    }
}

struct SearchStats {
    std::size_t steps = 0;
    std::size_t restarts = 0;
    std::size_t aspiration_moves = 0;
    std::uint64_t family_scans = 0;        // ranked-list entries examined
    std::uint64_t max_step_scans = 0;      // largest per-step count after the initial evaluation
    std::uint64_t score_evaluations = 0;   // DAG search: families scored
};

struct SearchResult {
    std::vector<std::vector<VarId>> parents;
    double score = -std::numeric_limits<double>::infinity();
    SearchTrace trace;
    SearchStats stats;
};

/// Wall clock plus the step/time budget.
class SearchClock {
public:
    explicit SearchClock(const SearchConfig& cfg)
        : start_(std::chrono::steady_clock::now()), max_steps_(cfg.max_steps), max_seconds_(cfg.max_seconds) {}

    double elapsed() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }
    bool exhausted(std::size_t steps) const {
        if (max_steps_ && steps >= *max_steps_) return true;
        return max_seconds_ > 0.0 && elapsed() >= max_seconds_;
    }

private:
    std::chrono::steady_clock::time_point start_;
    std::optional<std::size_t> max_steps_;
    double max_seconds_;
};

} // namespace bnsl
