#pragma once

#include "bnsl/error.hpp"
#include "bnsl/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace bnsl {

using VarId = std::uint32_t;
using Value = std::uint16_t;

struct Variable {
    std::string name;
    std::vector<std::string> symbols; // symbols[v] decodes value index v

    std::size_t cardinality() const noexcept { return symbols.size(); }
};

/// Ordered list of discrete variables.  A variable's position is its id.
class Schema {
public:
    Schema() = default;

    explicit Schema(std::vector<Variable> vars) : vars_(std::move(vars)) {
        for (std::size_t i = 0; i < vars_.size(); ++i) {
            const auto& v = vars_[i];
            if (v.cardinality() < 2)
                throw ConfigError("variable '" + v.name + "' has cardinality < 2");
            if (v.cardinality() > 0xffff)
                throw ConfigError("variable '" + v.name + "' has too many values");
            if (!by_name_.emplace(v.name, static_cast<VarId>(i)).second)
                throw ConfigError("duplicate variable name '" + v.name + "'");
        }
    }

    /// Variables named `prefix<i>` with symbols "0".."card-1".
    static Schema with_cardinalities(std::span<const std::size_t> cards,
                                     const std::string& prefix = "X") {
        std::vector<Variable> vars;
        vars.reserve(cards.size());
        for (std::size_t i = 0; i < cards.size(); ++i) {
            Variable v{prefix + std::to_string(i), {}};
            for (std::size_t s = 0; s < cards[i]; ++s) v.symbols.push_back(std::to_string(s));
            vars.push_back(std::move(v));
        }
        return Schema(std::move(vars));
    }

    std::size_t size() const noexcept { return vars_.size(); }
    const Variable& operator[](VarId i) const { return vars_.at(i); }
    std::size_t cardinality(VarId i) const { return vars_.at(i).cardinality(); }
    const std::vector<Variable>& variables() const noexcept { return vars_; }

    std::optional<VarId> find(const std::string& name) const {
        auto it = by_name_.find(name);
        if (it == by_name_.end()) return std::nullopt;
        return it->second;
    }

    bool operator==(const Schema& o) const {
        if (vars_.size() != o.vars_.size()) return false;
        for (std::size_t i = 0; i < vars_.size(); ++i)
            if (vars_[i].name != o.vars_[i].name || vars_[i].symbols != o.vars_[i].symbols)
                return false;
        return true;
    }

private:
    std::vector<Variable> vars_;
    std::unordered_map<std::string, VarId> by_name_;
};

/// Fully observed records, stored row-major as value indices.
class Dataset {
public:
    Dataset() = default;

    Dataset(Schema schema, std::vector<Value> values)
        : schema_(std::move(schema)), values_(std::move(values)) {
        const std::size_t n = schema_.size();
        if (n == 0) throw ConfigError("dataset has no variables");
        if (values_.size() % n != 0) throw ConfigError("value array is not rectangular");
        for (std::size_t k = 0; k < values_.size(); ++k)
            if (values_[k] >= schema_.cardinality(static_cast<VarId>(k % n)))
                throw ConfigError("value out of range in record " + std::to_string(k / n));
    }

    const Schema& schema() const noexcept { return schema_; }
    std::size_t num_vars() const noexcept { return schema_.size(); }
    std::size_t num_records() const noexcept {
        return schema_.size() ? values_.size() / schema_.size() : 0;
    }
    Value value(std::size_t record, VarId var) const noexcept {
        return values_[record * schema_.size() + var];
    }
    std::span<const Value> record(std::size_t m) const noexcept {
        return {values_.data() + m * schema_.size(), schema_.size()};
    }
    const std::vector<Value>& values() const noexcept { return values_; }

    Dataset subset(std::span<const std::size_t> rows) const {
        std::vector<Value> out;
        out.reserve(rows.size() * num_vars());
        for (std::size_t r : rows) {
            auto rec = record(r);
            out.insert(out.end(), rec.begin(), rec.end());
        }
        return Dataset(schema_, std::move(out));
    }

    std::vector<std::string> decode(std::size_t m) const {
        std::vector<std::string> out;
        out.reserve(num_vars());
        for (VarId i = 0; i < num_vars(); ++i) out.push_back(schema_[i].symbols[value(m, i)]);
        return out;
    }

    /// FNV-1a over schema and values; keys on-disk caches.
    std::uint64_t hash() const noexcept {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        auto mix = [&h](std::uint64_t x) {
            for (int b = 0; b < 8; ++b) {
                h ^= (x >> (8 * b)) & 0xff;
                h *= 0x100000001b3ULL;
            }
        };
        mix(num_vars());
        for (const auto& v : schema_.variables()) {
            for (char c : v.name) mix(static_cast<unsigned char>(c));
            mix(v.cardinality());
        }
        for (Value x : values_) mix(x);
        return h;
    }

private:
    Schema schema_;
    std::vector<Value> values_;
};

struct LoadOptions {
    char delimiter = '\t';
    bool header = true;
    bool allow_constant = false;
};

namespace detail {

inline std::vector<std::string> split_line(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        auto pos = line.find(delim, start);
        out.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    if (delim == ' ' || delim == '\t') {
        // tolerate runs of whitespace delimiters
        std::erase_if(out, [](const std::string& s) { return s.empty(); });
    }
    return out;
}

inline std::optional<long long> parse_integer(const std::string& s) {
    long long v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

inline bool all_integers(const std::vector<std::string>& symbols) {
    return std::all_of(symbols.begin(), symbols.end(),
                       [](const std::string& s) { return parse_integer(s).has_value(); });
}

} // namespace detail

/// Reads delimited text.  When `conform` is given, columns must match its
/// variables and symbols are looked up in its symbol lists; otherwise the
/// schema is inferred: distinct symbols per column, ordered lexicographically
/// (numerically when every symbol in the column is an integer).
inline Dataset read_dataset(std::istream& in, const LoadOptions& opt = {},
                            const Schema* conform = nullptr) {
    std::vector<std::string> names;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> row_lines;
    std::string line;
    std::size_t line_no = 0;
    bool header_pending = opt.header;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        auto fields = detail::split_line(line, opt.delimiter);
        if (header_pending) {
            names = std::move(fields);
            width = names.size();
            header_pending = false;
            continue;
        }
        if (width == 0) width = fields.size();
        if (fields.size() != width)
            throw ParseError("row " + std::to_string(rows.size() + 1) + " has " +
                                 std::to_string(fields.size()) + " fields, expected " +
                                 std::to_string(width),
                             line_no);
        rows.push_back(std::move(fields));
        row_lines.push_back(line_no);
    }
    if (rows.empty()) throw ParseError("no records");
    if (names.empty())
        for (std::size_t c = 0; c < width; ++c) names.push_back("c" + std::to_string(c));

    const std::size_t n = width;
    std::vector<Value> values(rows.size() * n);

    if (conform) {
        if (conform->size() != n)
            throw ParseError("dataset has " + std::to_string(n) + " columns, schema has " +
                             std::to_string(conform->size()));
        if (opt.header)
            for (VarId i = 0; i < n; ++i)
                if (names[i] != (*conform)[i].name)
                    throw ParseError("column " + std::to_string(i) + " is '" + names[i] +
                                     "', schema expects '" + (*conform)[i].name + "'");
        for (VarId i = 0; i < n; ++i) {
            std::unordered_map<std::string, Value> index;
            const auto& syms = (*conform)[i].symbols;
            for (std::size_t s = 0; s < syms.size(); ++s) index.emplace(syms[s], static_cast<Value>(s));
            for (std::size_t m = 0; m < rows.size(); ++m) {
                auto it = index.find(rows[m][i]);
                if (it == index.end())
                    throw ParseError("unknown symbol '" + rows[m][i] + "' for variable '" +
                                         (*conform)[i].name + "'",
                                     row_lines[m]);
                values[m * n + i] = it->second;
            }
        }
        return Dataset(*conform, std::move(values));
    }

    std::vector<Variable> vars;
    for (std::size_t c = 0; c < n; ++c) {
        std::vector<std::string> syms;
        syms.reserve(rows.size());
        for (const auto& r : rows) syms.push_back(r[c]);
        std::sort(syms.begin(), syms.end());
        syms.erase(std::unique(syms.begin(), syms.end()), syms.end());
        if (syms.size() == 1) {
            if (!opt.allow_constant)
                throw ParseError("column '" + names[c] + "' has a single distinct value");
            auto as_int = detail::parse_integer(syms[0]);
            syms.push_back(as_int ? std::to_string(*as_int + 1) : syms[0] + "<unseen>");
        }
        if (detail::all_integers(syms))
            std::sort(syms.begin(), syms.end(), [](const std::string& a, const std::string& b) {
                return *detail::parse_integer(a) < *detail::parse_integer(b);
            });
        std::map<std::string, Value> index;
        for (std::size_t s = 0; s < syms.size(); ++s) index.emplace(syms[s], static_cast<Value>(s));
        for (std::size_t m = 0; m < rows.size(); ++m) values[m * n + c] = index.at(rows[m][c]);
        vars.push_back(Variable{names[c], std::move(syms)});
    }
    return Dataset(Schema(std::move(vars)), std::move(values));
}

inline Dataset load_dataset(const std::string& path, const LoadOptions& opt = {},
                            const Schema* conform = nullptr) {
    std::ifstream in(path);
    if (!in) throw Error("io", "cannot open '" + path + "'");
    return read_dataset(in, opt, conform);
}

inline void write_dataset(std::ostream& out, const Dataset& data, char delimiter = '\t',
                          bool header = true) {
    const auto n = data.num_vars();
    if (header) {
        for (VarId i = 0; i < n; ++i) out << (i ? std::string(1, delimiter) : "") << data.schema()[i].name;
        out << '\n';
    }
    for (std::size_t m = 0; m < data.num_records(); ++m) {
        for (VarId i = 0; i < n; ++i)
            out << (i ? std::string(1, delimiter) : "") << data.schema()[i].symbols[data.value(m, i)];
        out << '\n';
    }
}

struct Fold {
    Dataset train;
    Dataset test;
};

/// Seeded shuffle, then near-equal contiguous partitions (sizes differ by at
/// most one, larger partitions first).  Fold i tests on partition i.
inline std::vector<Fold> split_folds(const Dataset& data, std::size_t folds, std::uint64_t seed) {
    const std::size_t m = data.num_records();
    if (folds < 2) throw ConfigError("folds must be >= 2");
    if (folds > m) throw ConfigError("folds (" + std::to_string(folds) + ") exceed records (" +
                                     std::to_string(m) + ")");
    std::vector<std::size_t> perm(m);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(derive_seed(seed, "folds"));
    for (std::size_t i = m; i > 1; --i) std::swap(perm[i - 1], perm[uniform_index(rng, i)]);

    std::vector<Fold> out;
    const std::size_t base = m / folds, extra = m % folds;
    std::size_t begin = 0;
    for (std::size_t f = 0; f < folds; ++f) {
        const std::size_t len = base + (f < extra ? 1 : 0);
        std::vector<std::size_t> test(perm.begin() + begin, perm.begin() + begin + len);
        std::vector<std::size_t> train(perm.begin(), perm.begin() + begin);
        train.insert(train.end(), perm.begin() + begin + len, perm.end());
        out.push_back(Fold{data.subset(train), data.subset(test)});
        begin += len;
    }
    return out;
}

} // namespace bnsl
