#pragma once

// Seeded generators for property tests.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "dil/core/expression.hpp"
#include "dil/core/table.hpp"

namespace dil::testing {

class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    int uniform(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
    bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng_); }
    double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    std::mt19937_64& engine() { return rng_; }

    template <typename T>
    const T& pick(const std::vector<T>& v) {
        return v[static_cast<std::size_t>(uniform(0, static_cast<int>(v.size()) - 1))];
    }

    std::string word() {
        static const std::vector<std::string> words = {"alpha", "beta", "Gamma", "delta", "x", "",
                                                       "Oakland", "San Jose", "caf\xc3\xa9", "q\"uote",
                                                       "line\nbreak", "tab\t", "\xe6\x97\xa5\xe6\x9c\xac"};
        return pick(words);
    }

    // Arbitrary (possibly nested) value, for serialization properties.
    Value any_value(int depth = 0) {
        int kind = uniform(0, depth >= 2 ? 4 : 6);
        switch (kind) {
            case 0: return Value();
            case 1: return Value(coin());
            case 2: return Value(static_cast<std::int64_t>(uniform(-1000, 1000)) *
                                 (coin(0.1) ? 1000000000000LL : 1));
            case 3: {
                double d = real(-1e6, 1e6);
                if (coin(0.2)) d = std::ldexp(d, uniform(-60, 60));
                if (coin(0.1)) d = static_cast<double>(uniform(-5, 5));
                return Value(d);
            }
            case 4: return Value(word());
            case 5: {
                List l;
                int n = uniform(0, 3);
                for (int i = 0; i < n; ++i) l.push_back(any_value(depth + 1));
                return Value(std::move(l));
            }
            default: {
                Map m;
                int n = uniform(0, 3);
                for (int i = 0; i < n; ++i) m[attr_name(8)] = any_value(depth + 1);
                return Value(std::move(m));
            }
        }
    }

    std::string attr_name(int pool = 4) {
        static const std::vector<std::string> names = {"a", "b", "c", "d", "city", "rent", "t_x", "k.z"};
        return names[static_cast<std::size_t>(uniform(0, std::min<int>(pool, 8) - 1))];
    }

    // Small typed pool for relational oracle tests: keys collide often.
    Value pool_value() {
        switch (uniform(0, 5)) {
            case 0: return Value();
            case 1: return Value(static_cast<std::int64_t>(uniform(0, 3)));
            case 2: return Value(static_cast<double>(uniform(0, 3)) + (coin(0.5) ? 0.0 : 0.5));
            case 3: return Value(pick(std::vector<std::string>{"a", "b", "c"}));
            case 4: return Value(coin());
            default: return Value(static_cast<std::int64_t>(uniform(0, 3)));
        }
    }

    Row pool_row(int attrs = 3) {
        Row r;
        static const std::vector<std::string> names = {"a", "b", "c", "d"};
        for (int i = 0; i < attrs; ++i) {
            if (coin(0.85)) r[names[static_cast<std::size_t>(i)]] = pool_value();
        }
        return r;
    }

    Table pool_table(int max_rows = 8, int attrs = 3) {
        Table t;
        int n = uniform(0, max_rows);
        for (int i = 0; i < n; ++i) t.rows.push_back(pool_row(attrs));
        return t;
    }

    DataBatch any_batch() {
        DataBatch b;
        int tables = uniform(0, 3);
        for (int t = 0; t < tables; ++t) {
            Table tab;
            int rows = uniform(0, 4);
            for (int r = 0; r < rows; ++r) {
                Row row;
                int attrs = uniform(0, 4);
                for (int k = 0; k < attrs; ++k) row[attr_name(8)] = any_value();
                tab.rows.push_back(std::move(row));
            }
            if (coin(0.3)) {
                Schema s;
                for (const auto& n : tab.attribute_names()) s.push_back({n, DeclaredType::any, "d", coin()});
                tab.schema = std::move(s);
            }
            b.tables.push_back(std::move(tab));
        }
        return b;
    }

    // Random expression text from the grammar (always valid).
    std::string expression_text(int depth = 0) {
        int kind = uniform(0, depth >= 3 ? 3 : 7);
        switch (kind) {
            case 0:
            case 1: return term_text() + " " + pick(std::vector<std::string>{"=", "!=", "<", "<=", ">", ">=", "=="}) +
                           " " + term_text();
            case 2: {
                std::string s = term_text() + " in [";
                int n = uniform(0, 3);
                for (int i = 0; i < n; ++i) s += (i ? "," : "") + literal_text();
                return s + "]";
            }
            case 3: return term_text() + " contains " + term_text();
            case 4: return expression_text(depth + 1) + " and " + expression_text(depth + 1);
            case 5: return expression_text(depth + 1) + " or " + expression_text(depth + 1);
            case 6: return "not (" + expression_text(depth + 1) + ")";
            default: return "(" + expression_text(depth + 1) + ")";
        }
    }

    std::string literal_text() {
        switch (uniform(0, 5)) {
            case 0: return std::to_string(uniform(-3, 3));
            case 1: return std::to_string(uniform(0, 3)) + ".5";
            case 2: return "\"" + pick(std::vector<std::string>{"a", "b", "c", "ab"}) + "\"";
            case 3: return "true";
            case 4: return "null";
            default: return "false";
        }
    }

    std::string term_text() {
        if (coin(0.55)) {
            std::string name = pick(std::vector<std::string>{"a", "b", "c", "d", "zz"});
            return coin(0.15) ? "t1." + name : name;
        }
        return literal_text();
    }

private:
    std::mt19937_64 rng_;
};

}  // namespace dil::testing
