// Command-line front end: generate, sample, learn, eval, bench.

#include "bnsl/bnsl.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

namespace {

using namespace bnsl;

struct DataArgs {
    std::string path;
    std::string delimiter = "\t";
    bool no_header = false;
    bool allow_constant = false;
    std::string schema; // network file whose variables the data must follow

    void add(CLI::App* app, const std::string& flag = "--data", bool required = true) {
        auto* opt = app->add_option(flag, path, "Dataset file (delimited text)");
        if (required) opt->required();
        app->add_option("--delimiter", delimiter, "Field delimiter (default: tab)");
        app->add_flag("--no-header", no_header, "Dataset has no header row");
        app->add_flag("--allow-constant", allow_constant, "Accept single-valued columns");
        app->add_option("--schema", schema, "Network file fixing variable order and value symbols");
    }

    LoadOptions options() const {
        if (delimiter.size() != 1) throw ConfigError("delimiter must be a single character");
        return LoadOptions{delimiter[0], !no_header, allow_constant};
    }

    Dataset load(const std::string& file, const Schema* conform = nullptr) const {
        if (!conform && !schema.empty()) {
            const auto net = load_network(schema);
            return load_dataset(file, options(), &net.schema);
        }
        return load_dataset(file, options(), conform);
    }
};

struct LearnArgs {
    DataArgs data;
    std::string score = "bde";
    double ess = 5.0;
    std::size_t max_parents = 3;
    std::optional<std::size_t> candidates;
    std::size_t tabu = 100;
    std::optional<std::size_t> stagnation;
    std::size_t restarts = 10;
    std::size_t perturbation = 0;
    std::string restart_mode = "perturb";
    std::string stagnation_base = "global";
    bool greedy = false;
    std::string ties = "random";
    std::optional<std::size_t> max_steps;
    double max_seconds = 0.0;
    double budget = 0.0;
    std::uint64_t seed = 1;
    unsigned threads = 1;
    std::string family_cache;

    void add(CLI::App* app) {
        data.add(app);
        app->add_option("--score", score, "bde or bic")->capture_default_str();
        app->add_option("--ess", ess, "BDe equivalent sample size")->capture_default_str();
        app->add_option("-k,--max-parents", max_parents, "Maximum in-degree")->capture_default_str();
        app->add_option("-C,--candidates", candidates, "Candidate parents per node (0 = all, default min(10, n-1))");
        app->add_option("--tabu", tabu, "Tabu list length")->capture_default_str();
        app->add_option("--stagnation", stagnation, "Non-improving moves before restart (default: tabu length)");
        app->add_option("--restarts", restarts, "Number of restarts")->capture_default_str();
        app->add_option("--perturbation", perturbation, "Random moves per restart (0 = n/2)")->capture_default_str();
        app->add_option("--restart-mode", restart_mode, "perturb or random")->capture_default_str();
        app->add_option("--stagnation-base", stagnation_base, "global or climb: best a move must beat to reset the stagnation count")
            ->capture_default_str();
        app->add_option("--ties", ties, "random or position: how equal-score moves are chosen")->capture_default_str();
        app->add_flag("--greedy", greedy, "Stop each climb at a local maximum");
        app->add_option("--max-steps", max_steps, "Step budget across restarts");
        app->add_option("--max-seconds", max_seconds, "Search wall-clock budget (0 = none)");
        app->add_option("--budget", budget, "Per-method wall-clock budget including precompute (0 = none)");
        app->add_option("--seed", seed, "Root random seed")->capture_default_str();
        app->add_option("--threads", threads, "Worker threads for family precomputation")->capture_default_str();
        app->add_option("--family-cache", family_cache, "Read/write ranked family tables here");
    }

    LearnConfig config(std::size_t n) const {
        LearnConfig cfg;
        cfg.score.kind = parse_score_kind(score);
        cfg.score.ess = ess;
        cfg.max_parents = max_parents;
        cfg.candidates = candidates.value_or(std::min<std::size_t>(10, n - 1));
        cfg.search.tabu_size = tabu;
        cfg.search.stagnation_limit = stagnation;
        cfg.search.restarts = restarts;
        cfg.search.perturbation = perturbation;
        cfg.search.restart_mode = parse_restart_mode(restart_mode);
        cfg.search.stagnation_base = parse_stagnation_base(stagnation_base);
        cfg.search.greedy = greedy;
        if (ties != "random" && ties != "position") throw ConfigError("unknown tie rule '" + ties + "'");
        cfg.search.random_ties = ties == "random";
        cfg.search.seed = seed;
        cfg.search.max_steps = max_steps;
        cfg.search.max_seconds = max_seconds;
        cfg.total_seconds = budget;
        cfg.threads = std::max(1u, threads);
        if (!family_cache.empty()) cfg.family_cache = family_cache;
        return cfg;
    }
};

void write_file(const std::string& path, const auto& writer) {
    std::ofstream out(path);
    if (!out) throw Error("io", "cannot write '" + path + "'");
    writer(out);
    if (!out) throw Error("io", "write failed for '" + path + "'");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian network structure learning by ordering search and DAG search"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "Write a synthetic network with random CPTs");
    bool alarm = false;
    std::size_t gen_nodes = 20, gen_parents = 3, gen_min_card = 2, gen_max_card = 4;
    double gen_alpha = 1.0;
    std::uint64_t gen_seed = 1;
    std::string gen_out;
    gen->add_flag("--alarm", alarm, "Use the 37-node Alarm topology");
    gen->add_option("--nodes", gen_nodes, "Number of nodes for a random DAG")->capture_default_str();
    gen->add_option("--max-parents", gen_parents, "Maximum in-degree of the random DAG")->capture_default_str();
    gen->add_option("--min-card", gen_min_card)->capture_default_str();
    gen->add_option("--max-card", gen_max_card)->capture_default_str();
    gen->add_option("--alpha", gen_alpha, "Dirichlet concentration for CPT rows")->capture_default_str();
    gen->add_option("--seed", gen_seed)->capture_default_str();
    gen->add_option("-o,--out", gen_out, "Network file")->required();

    // sample
    auto* sample = app.add_subcommand("sample", "Forward-sample records from a network");
    std::string sample_net, sample_out;
    std::size_t sample_records = 0;
    std::uint64_t sample_seed = 1;
    sample->add_option("-n,--network", sample_net, "Network file with CPTs")->required();
    sample->add_option("-m,--records", sample_records, "Number of records")->required();
    sample->add_option("--seed", sample_seed)->capture_default_str();
    sample->add_option("-o,--out", sample_out, "Dataset file")->required();

    // learn
    auto* learn_cmd = app.add_subcommand("learn", "Learn a network structure");
    LearnArgs learn_args;
    std::string method = "order", learn_out, learn_trace;
    bool structure_only = false;
    learn_args.add(learn_cmd);
    learn_cmd->add_option("--method", method, "order or dag")->capture_default_str();
    learn_cmd->add_option("-o,--out", learn_out, "Learned network file");
    learn_cmd->add_option("--trace", learn_trace, "Score-vs-time trace file");
    learn_cmd->add_flag("--structure-only", structure_only, "Do not fit CPTs into the output network");

    // eval
    auto* eval = app.add_subcommand("eval", "Per-datapoint log-likelihood of a network");
    DataArgs eval_data;
    std::string eval_net, eval_train;
    std::size_t eval_folds = 0;
    double eval_ess = 5.0;
    std::uint64_t eval_seed = 1;
    eval->add_option("-n,--network", eval_net, "Network file")->required();
    eval_data.add(eval);
    eval->add_option("--train", eval_train, "Fit CPTs on this file, evaluate on --data");
    eval->add_option("--folds", eval_folds, "Cross-validate the structure on --data");
    eval->add_option("--ess", eval_ess, "Equivalent sample size for fitting")->capture_default_str();
    eval->add_option("--seed", eval_seed)->capture_default_str();

    // bench
    auto* bench = app.add_subcommand("bench", "Run both searches on identical inputs");
    LearnArgs bench_args;
    std::string trace_prefix;
    bench_args.add(bench);
    bench->add_option("--trace-prefix", trace_prefix, "Write <prefix>.order.tsv and <prefix>.dag.tsv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error\tusage\t" << e.what() << '\n';
        return 2;
    }

    try {
        if (*gen) {
            auto structure = alarm ? alarm_structure()
                                   : random_structure(gen_nodes, gen_parents, gen_min_card, gen_max_card, gen_seed);
            auto net = random_cpts(structure, gen_seed, gen_alpha);
            save_network(gen_out, net);
        } else if (*sample) {
            if (sample_records == 0) throw ConfigError("--records must be positive");
            const auto net = load_network(sample_net);
            const auto data = forward_sample(net, sample_records, sample_seed);
            write_file(sample_out, [&](std::ostream& o) { write_dataset(o, data); });
        } else if (*learn_cmd) {
            const auto data = learn_args.data.load(learn_args.data.path);
            const auto cfg = learn_args.config(data.num_vars());
            auto summary = learn(data, parse_method(method), cfg);
            if (!learn_out.empty()) {
                auto net = structure_only ? summary.network : fit_parameters(summary.network, data, cfg.score.ess);
                save_network(learn_out, net);
            }
            if (!learn_trace.empty())
                write_file(learn_trace, [&](std::ostream& o) { write_trace(o, summary.trace, summary.records); });
            write_summary_header(std::cout);
            write_summary_row(std::cout, summary);
        } else if (*eval) {
            const auto net = load_network(eval_net);
            const auto data = eval_data.load(eval_data.path, &net.schema);
            double ll = 0.0;
            if (eval_folds > 0) {
                ll = cross_validate(net, data, eval_folds, eval_seed, eval_ess);
            } else if (!eval_train.empty()) {
                const auto train = eval_data.load(eval_train, &net.schema);
                ll = log_likelihood(fit_parameters(net, train, eval_ess), data);
            } else {
                ll = log_likelihood(net, data);
            }
            std::printf("log_likelihood_per_datapoint\n%.12f\n", ll);
        } else if (*bench) {
            const auto data = bench_args.data.load(bench_args.data.path);
            const auto cfg = bench_args.config(data.num_vars());
            const auto shared = precompute_shared(data, cfg);
            write_summary_header(std::cout);
            for (auto m : {Method::Order, Method::Dag}) {
                auto summary = learn(data, m, cfg, shared);
                write_summary_row(std::cout, summary);
                if (!trace_prefix.empty())
                    write_file(trace_prefix + "." + to_string(m) + ".tsv",
                               [&](std::ostream& o) { write_trace(o, summary.trace, summary.records); });
            }
        }
    } catch (const bnsl::Error& e) {
        std::cerr << "error\t" << e.kind() << '\t' << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error\tinternal\t" << e.what() << '\n';
        return 1;
    }
    return 0;
}
