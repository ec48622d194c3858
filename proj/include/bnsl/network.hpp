#pragma once

#include "bnsl/data.hpp"
#include "bnsl/error.hpp"
#include "bnsl/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace bnsl {

/// Conditional probability table: row u (joint parent state, parents in the
/// order of the node's parent list, first most significant) holds P(x | u)
/// at `probs[u * card + x]`.
struct Cpt {
    std::vector<double> probs;
};

/// A DAG over a schema, optionally parameterized.
struct Network {
    Schema schema;
    std::vector<std::vector<VarId>> parents; // per node, ascending
    std::vector<Cpt> cpts;                   // empty, or one per node

    Network() = default;
    explicit Network(Schema s) : schema(std::move(s)), parents(schema.size()) {}
    Network(Schema s, std::vector<std::vector<VarId>> pa) : schema(std::move(s)), parents(std::move(pa)) {
        for (auto& p : parents) std::sort(p.begin(), p.end());
    }

    std::size_t size() const noexcept { return parents.size(); }
    bool has_cpts() const noexcept { return !cpts.empty(); }

    std::size_t parent_configs(VarId i) const {
        std::size_t q = 1;
        for (auto p : parents[i]) q *= schema.cardinality(p);
        return q;
    }

    std::size_t edge_count() const {
        std::size_t e = 0;
        for (const auto& p : parents) e += p.size();
        return e;
    }

    /// Joint parent index of node i in a record.
    std::size_t parent_state(VarId i, std::span<const Value> record) const {
        std::size_t u = 0;
        for (auto p : parents[i]) u = u * schema.cardinality(p) + record[p];
        return u;
    }

    double prob(VarId i, std::size_t u, std::size_t x) const {
        return cpts[i].probs[u * schema.cardinality(i) + x];
    }

    bool same_structure(const Network& o) const { return schema == o.schema && parents == o.parents; }
};

/// Kahn topological order (lowest ready id first); empty when cyclic.
inline std::vector<VarId> topological_order(std::span<const std::vector<VarId>> parents) {
    const std::size_t n = parents.size();
    std::vector<std::size_t> indeg(n, 0);
    std::vector<std::vector<VarId>> children(n);
    for (VarId i = 0; i < n; ++i)
        for (auto p : parents[i]) {
            if (p >= n || p == i) return {};
            children[p].push_back(i);
            ++indeg[i];
        }
    std::vector<VarId> ready, order;
    for (VarId i = n; i-- > 0;)
        if (!indeg[i]) ready.push_back(i);
    while (!ready.empty()) {
        const VarId v = ready.back();
        ready.pop_back();
        order.push_back(v);
        for (auto c : children[v])
            if (--indeg[c] == 0) {
                ready.push_back(c);
                std::sort(ready.rbegin(), ready.rend());
            }
    }
    if (order.size() != n) return {};
    return order;
}

inline bool is_acyclic(std::span<const std::vector<VarId>> parents) {
    return parents.empty() || !topological_order(parents).empty();
}

/// Checks acyclicity, CPT shapes and row normalization.
inline void validate_network(const Network& net) {
    if (net.parents.size() != net.schema.size()) throw ModelError("parent lists do not match the schema");
    for (VarId i = 0; i < net.size(); ++i)
        for (std::size_t j = 0; j < net.parents[i].size(); ++j) {
            if (net.parents[i][j] >= net.size() || net.parents[i][j] == i)
                throw ModelError("invalid parent of '" + net.schema[i].name + "'");
            if (j && net.parents[i][j] == net.parents[i][j - 1])
                throw ModelError("duplicate parent of '" + net.schema[i].name + "'");
        }
    if (!is_acyclic(net.parents)) throw ModelError("network structure is cyclic");
    if (!net.has_cpts()) return;
    if (net.cpts.size() != net.size()) throw ModelError("CPT count does not match node count");
    for (VarId i = 0; i < net.size(); ++i) {
        const auto r = net.schema.cardinality(i), q = net.parent_configs(i);
        if (net.cpts[i].probs.size() != r * q)
            throw ModelError("CPT of '" + net.schema[i].name + "' has wrong dimensions");
        for (std::size_t u = 0; u < q; ++u) {
            double sum = 0.0;
            for (std::size_t x = 0; x < r; ++x) {
                const double p = net.cpts[i].probs[u * r + x];
                if (!(p >= 0.0) || !std::isfinite(p))
                    throw ModelError("negative or non-finite probability in CPT of '" + net.schema[i].name + "'");
                sum += p;
            }
            if (std::abs(sum - 1.0) > 1e-9)
                throw ModelError("CPT row " + std::to_string(u) + " of '" + net.schema[i].name +
                                 "' sums to " + std::to_string(sum));
        }
    }
}

/// Dirichlet posterior mean with the BDe hyperparameters
/// a_xu = ess / (|child| * |parent configs|):
///   P(x | u) = (M_xu + a_xu) / (M_u + a_u).
inline Network fit_parameters(const Network& structure, const Dataset& data, double ess) {
    if (!(ess > 0.0)) throw ConfigError("equivalent sample size must be positive");
    if (!(structure.schema == data.schema())) throw ModelError("dataset schema does not match network");
    Network net = structure;
    net.cpts.assign(net.size(), {});
    for (VarId i = 0; i < net.size(); ++i) {
        const auto r = net.schema.cardinality(i), q = net.parent_configs(i);
        std::vector<double> counts(r * q, 0.0);
        for (std::size_t m = 0; m < data.num_records(); ++m) {
            auto rec = data.record(m);
            counts[net.parent_state(i, rec) * r + rec[i]] += 1.0;
        }
        const double a_xu = ess / static_cast<double>(r * q), a_u = ess / static_cast<double>(q);
        auto& probs = net.cpts[i].probs;
        probs.resize(r * q);
        for (std::size_t u = 0; u < q; ++u) {
            double m_u = 0.0;
            for (std::size_t x = 0; x < r; ++x) m_u += counts[u * r + x];
            for (std::size_t x = 0; x < r; ++x) probs[u * r + x] = (counts[u * r + x] + a_xu) / (m_u + a_u);
        }
    }
    return net;
}

/// Draws `records` samples in topological order.  Record m uses its own
/// generator seeded from (seed, m), so records can be produced in any order.
inline Dataset forward_sample(const Network& net, std::size_t records, std::uint64_t seed) {
    if (!net.has_cpts()) throw ModelError("network has no CPTs to sample from");
    if (records == 0) throw ConfigError("sample size must be positive");
    const auto order = topological_order(net.parents);
    if (order.empty() && net.size()) throw ModelError("network structure is cyclic");
    const std::size_t n = net.size();
    std::vector<Value> values(records * n);
    for (std::size_t m = 0; m < records; ++m) {
        Rng rng(derive_seed(seed, "sample", m));
        std::span<Value> rec(values.data() + m * n, n);
        for (auto i : order) {
            const auto r = net.schema.cardinality(i);
            const auto u = net.parent_state(i, rec);
            const double draw = uniform01(rng);
            double acc = 0.0;
            std::size_t x = 0;
            for (; x + 1 < r; ++x) {
                acc += net.prob(i, u, x);
                if (draw < acc) break;
            }
            // skip trailing zero-probability values that rounding could land on
            while (x > 0 && net.prob(i, u, x) == 0.0) --x;
            rec[i] = static_cast<Value>(x);
        }
    }
    return Dataset(net.schema, std::move(values));
}

/// Average per-record log-likelihood (natural log).
inline double log_likelihood(const Network& net, const Dataset& data) {
    if (!net.has_cpts()) throw ModelError("network has no CPTs");
    if (!(net.schema == data.schema())) throw ModelError("dataset schema does not match network");
    if (data.num_records() == 0) throw ModelError("no records to evaluate");
    double total = 0.0;
    for (std::size_t m = 0; m < data.num_records(); ++m) {
        auto rec = data.record(m);
        for (VarId i = 0; i < net.size(); ++i) {
            const double p = net.prob(i, net.parent_state(i, rec), rec[i]);
            if (p <= 0.0)
                throw ModelError("record " + std::to_string(m) + " has zero probability at '" +
                                 net.schema[i].name + "'");
            total += std::log(p);
        }
    }
    return total / static_cast<double>(data.num_records());
}

// ---------------------------------------------------------------------------
// Text format
//
//   var <name> <cardinality> [<symbol> ...]
//   parents <child> [<parent> ...]
//   cpt <child> [<parent value index> ...] <p_0> ... <p_{card-1}>
//
// '#' starts a comment.  CPT lines are all-or-nothing across the network.

inline void save_network(std::ostream& out, const Network& net) {
    validate_network(net);
    for (VarId i = 0; i < net.size(); ++i) {
        const auto& v = net.schema[i];
        out << "var " << v.name << ' ' << v.cardinality();
        bool default_symbols = true;
        for (std::size_t s = 0; s < v.symbols.size(); ++s) default_symbols &= v.symbols[s] == std::to_string(s);
        if (!default_symbols)
            for (const auto& s : v.symbols) out << ' ' << s;
        out << '\n';
    }
    for (VarId i = 0; i < net.size(); ++i) {
        out << "parents " << net.schema[i].name;
        for (auto p : net.parents[i]) out << ' ' << net.schema[p].name;
        out << '\n';
    }
    if (!net.has_cpts()) return;
    char buf[64];
    for (VarId i = 0; i < net.size(); ++i) {
        const auto r = net.schema.cardinality(i), q = net.parent_configs(i);
        const auto& pa = net.parents[i];
        std::vector<std::size_t> digit(pa.size(), 0);
        for (std::size_t u = 0; u < q; ++u) {
            out << "cpt " << net.schema[i].name;
            for (auto d : digit) out << ' ' << d;
            for (std::size_t x = 0; x < r; ++x) {
                std::snprintf(buf, sizeof buf, "%.17g", net.prob(i, u, x));
                out << ' ' << buf;
            }
            out << '\n';
            for (std::size_t j = pa.size(); j-- > 0;) {
                if (++digit[j] < net.schema.cardinality(pa[j])) break;
                digit[j] = 0;
            }
        }
    }
}

inline Network read_network(std::istream& in) {
    std::vector<Variable> vars;
    std::map<std::string, VarId> ids;
    struct PendingParents {
        std::vector<std::string> names;
        std::size_t line;
    };
    std::map<std::string, PendingParents> parent_lines;
    struct PendingRow {
        std::string child;
        std::vector<std::string> tokens;
        std::size_t line;
    };
    std::vector<PendingRow> rows;

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string kw;
        if (!(ls >> kw)) continue;
        std::vector<std::string> tok;
        for (std::string t; ls >> t;) tok.push_back(t);
        if (kw == "var") {
            if (tok.size() < 2) throw ParseError("var needs a name and a cardinality", line_no);
            auto card = detail::parse_integer(tok[1]);
            if (!card || *card < 2) throw ParseError("bad cardinality '" + tok[1] + "'", line_no);
            if (ids.count(tok[0])) throw ParseError("duplicate variable '" + tok[0] + "'", line_no);
            Variable v{tok[0], {}};
            if (tok.size() == 2) {
                for (long long s = 0; s < *card; ++s) v.symbols.push_back(std::to_string(s));
            } else if (static_cast<long long>(tok.size() - 2) == *card) {
                v.symbols.assign(tok.begin() + 2, tok.end());
            } else {
                throw ParseError("symbol count does not match cardinality", line_no);
            }
            ids.emplace(v.name, static_cast<VarId>(vars.size()));
            vars.push_back(std::move(v));
        } else if (kw == "parents") {
            if (tok.empty()) throw ParseError("parents needs a child", line_no);
            if (parent_lines.count(tok[0])) throw ParseError("parents of '" + tok[0] + "' given twice", line_no);
            parent_lines[tok[0]] = PendingParents{{tok.begin() + 1, tok.end()}, line_no};
        } else if (kw == "cpt") {
            if (tok.empty()) throw ParseError("cpt needs a child", line_no);
            rows.push_back(PendingRow{tok[0], {tok.begin() + 1, tok.end()}, line_no});
        } else {
            throw ParseError("unknown keyword '" + kw + "'", line_no);
        }
    }
    if (vars.empty()) throw ParseError("network declares no variables");

    Network net(Schema(std::move(vars)));
    for (const auto& [child, pp] : parent_lines) {
        auto c = ids.find(child);
        if (c == ids.end()) throw ParseError("unknown variable '" + child + "'", pp.line);
        for (const auto& p : pp.names) {
            auto it = ids.find(p);
            if (it == ids.end()) throw ParseError("unknown parent '" + p + "'", pp.line);
            net.parents[c->second].push_back(it->second);
        }
        auto& pa = net.parents[c->second];
        std::sort(pa.begin(), pa.end());
        if (std::adjacent_find(pa.begin(), pa.end()) != pa.end())
            throw ParseError("duplicate parent of '" + child + "'", pp.line);
    }
    if (!is_acyclic(net.parents)) throw ModelError("network structure is cyclic");

    if (!rows.empty()) {
        net.cpts.assign(net.size(), {});
        std::vector<std::vector<bool>> seen(net.size());
        for (VarId i = 0; i < net.size(); ++i) {
            net.cpts[i].probs.assign(net.schema.cardinality(i) * net.parent_configs(i), 0.0);
            seen[i].assign(net.parent_configs(i), false);
        }
        for (const auto& row : rows) {
            auto c = ids.find(row.child);
            if (c == ids.end()) throw ParseError("unknown variable '" + row.child + "'", row.line);
            const VarId i = c->second;
            const auto& pa = net.parents[i];
            const auto r = net.schema.cardinality(i);
            if (row.tokens.size() != pa.size() + r)
                throw ParseError("cpt row for '" + row.child + "' needs " + std::to_string(pa.size()) +
                                     " parent values and " + std::to_string(r) + " probabilities",
                                 row.line);
            std::size_t u = 0;
            for (std::size_t j = 0; j < pa.size(); ++j) {
                auto v = detail::parse_integer(row.tokens[j]);
                if (!v || *v < 0 || static_cast<std::size_t>(*v) >= net.schema.cardinality(pa[j]))
                    throw ParseError("bad parent value '" + row.tokens[j] + "'", row.line);
                u = u * net.schema.cardinality(pa[j]) + static_cast<std::size_t>(*v);
            }
            if (seen[i][u]) throw ParseError("duplicate cpt row", row.line);
            seen[i][u] = true;
            double sum = 0.0;
            for (std::size_t x = 0; x < r; ++x) {
                const auto& t = row.tokens[pa.size() + x];
                char* end = nullptr;
                const double p = std::strtod(t.c_str(), &end);
                if (*end || t.empty()) throw ParseError("bad probability '" + t + "'", row.line);
                net.cpts[i].probs[u * r + x] = p;
                sum += p;
            }
            if (std::abs(sum - 1.0) > 1e-9)
                throw ParseError("cpt row for '" + row.child + "' sums to " + std::to_string(sum), row.line);
        }
        for (VarId i = 0; i < net.size(); ++i)
            if (std::find(seen[i].begin(), seen[i].end(), false) != seen[i].end())
                throw ParseError("missing cpt rows for '" + net.schema[i].name + "'");
    }
    validate_network(net);
    return net;
}

inline void save_network(const std::string& path, const Network& net) {
    std::ofstream out(path);
    if (!out) throw Error("io", "cannot write '" + path + "'");
    save_network(out, net);
}

inline Network load_network(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("io", "cannot open '" + path + "'");
    return read_network(in);
}

// ---------------------------------------------------------------------------
// Synthetic generators

/// Random DAG: a random ordering, each node taking up to `max_parents`
/// distinct predecessors (count uniform in [0, min(max_parents, position)]).
inline Network random_structure(std::size_t n, std::size_t max_parents, std::size_t min_card,
                                std::size_t max_card, std::uint64_t seed) {
    if (min_card < 2 || max_card < min_card) throw ConfigError("bad cardinality range");
    Rng rng(derive_seed(seed, "structure"));
    std::vector<std::size_t> cards(n);
    for (auto& c : cards) c = min_card + uniform_index(rng, max_card - min_card + 1);
    std::vector<VarId> order(n);
    for (VarId i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    Network net(Schema::with_cardinalities(cards));
    for (std::size_t pos = 1; pos < n; ++pos) {
        const std::size_t count = uniform_index(rng, std::min(max_parents, pos) + 1);
        std::vector<VarId> pool(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(pos));
        for (std::size_t j = 0; j < count; ++j) {
            std::swap(pool[j], pool[j + uniform_index(rng, pool.size() - j)]);
            net.parents[order[pos]].push_back(pool[j]);
        }
        std::sort(net.parents[order[pos]].begin(), net.parents[order[pos]].end());
    }
    return net;
}

/// Fills every CPT row with a Dirichlet(alpha) draw.
inline Network random_cpts(const Network& structure, std::uint64_t seed, double alpha = 1.0) {
    Network net = structure;
    Rng rng(derive_seed(seed, "cpts"));
    std::gamma_distribution<double> gamma(alpha, 1.0);
    net.cpts.assign(net.size(), {});
    for (VarId i = 0; i < net.size(); ++i) {
        const auto r = net.schema.cardinality(i), q = net.parent_configs(i);
        auto& probs = net.cpts[i].probs;
        probs.resize(r * q);
        for (std::size_t u = 0; u < q; ++u) {
            double sum = 0.0;
            for (std::size_t x = 0; x < r; ++x) sum += probs[u * r + x] = gamma(rng);
            if (sum <= 0.0) {
                for (std::size_t x = 0; x < r; ++x) probs[u * r + x] = 1.0 / static_cast<double>(r);
                continue;
            }
            for (std::size_t x = 0; x < r; ++x) probs[u * r + x] /= sum;
        }
    }
    return net;
}

/// Topology and cardinalities of the 37-node ICU-Alarm monitoring network
/// (46 arcs, maximum in-degree 4).  No CPTs; see random_cpts.
inline Network alarm_structure() {
    struct Spec {
        const char* name;
        std::size_t card;
        std::vector<const char*> parents;
    };
    const std::vector<Spec> spec = {
        {"HISTORY", 2, {"LVFAILURE"}},
        {"CVP", 3, {"LVEDVOLUME"}},
        {"PCWP", 3, {"LVEDVOLUME"}},
        {"HYPOVOLEMIA", 2, {}},
        {"LVEDVOLUME", 3, {"HYPOVOLEMIA", "LVFAILURE"}},
        {"LVFAILURE", 2, {}},
        {"STROKEVOLUME", 3, {"HYPOVOLEMIA", "LVFAILURE"}},
        {"ERRLOWOUTPUT", 2, {}},
        {"HRBP", 3, {"ERRLOWOUTPUT", "HR"}},
        {"HREKG", 3, {"ERRCAUTER", "HR"}},
        {"ERRCAUTER", 2, {}},
        {"HRSAT", 3, {"ERRCAUTER", "HR"}},
        {"INSUFFANESTH", 2, {}},
        {"ANAPHYLAXIS", 2, {}},
        {"TPR", 3, {"ANAPHYLAXIS"}},
        {"EXPCO2", 4, {"ARTCO2", "VENTLUNG"}},
        {"KINKEDTUBE", 2, {}},
        {"MINVOL", 4, {"INTUBATION", "VENTLUNG"}},
        {"FIO2", 2, {}},
        {"PVSAT", 3, {"FIO2", "VENTALV"}},
        {"SAO2", 3, {"PVSAT", "SHUNT"}},
        {"PAP", 3, {"PULMEMBOLUS"}},
        {"PULMEMBOLUS", 2, {}},
        {"SHUNT", 2, {"INTUBATION", "PULMEMBOLUS"}},
        {"INTUBATION", 3, {}},
        {"PRESS", 4, {"INTUBATION", "KINKEDTUBE", "VENTTUBE"}},
        {"DISCONNECT", 2, {}},
        {"MINVOLSET", 3, {}},
        {"VENTMACH", 4, {"MINVOLSET"}},
        {"VENTTUBE", 4, {"DISCONNECT", "VENTMACH"}},
        {"VENTLUNG", 4, {"INTUBATION", "KINKEDTUBE", "VENTTUBE"}},
        {"VENTALV", 4, {"INTUBATION", "VENTLUNG"}},
        {"ARTCO2", 3, {"VENTALV"}},
        {"CATECHOL", 2, {"ARTCO2", "INSUFFANESTH", "SAO2", "TPR"}},
        {"HR", 3, {"CATECHOL"}},
        {"CO", 3, {"HR", "STROKEVOLUME"}},
        {"BP", 3, {"CO", "TPR"}},
    };
    std::vector<Variable> vars;
    for (const auto& s : spec) {
        Variable v{s.name, {}};
        for (std::size_t x = 0; x < s.card; ++x) v.symbols.push_back(std::to_string(x));
        vars.push_back(std::move(v));
    }
    Network net(Schema(std::move(vars)));
    for (VarId i = 0; i < spec.size(); ++i)
        for (auto p : spec[i].parents) net.parents[i].push_back(*net.schema.find(p));
    for (auto& p : net.parents) std::sort(p.begin(), p.end());
    return net;
}

} // namespace bnsl
