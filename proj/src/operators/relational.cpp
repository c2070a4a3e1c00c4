#include "dil/operators/relational.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <numeric>
#include <regex>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "dil/core/codec.hpp"
#include "dil/error.hpp"

namespace dil::ops {

namespace {

const Value& attr(const Row& row, const std::string& name) {
    static const Value null;
    auto it = row.find(name);
    return it == row.end() ? null : it->second;
}

std::set<std::string> attribute_set(const Table& t) {
    auto names = t.attribute_names();
    return {names.begin(), names.end()};
}

std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

}  // namespace

Table project(const Table& in, const std::vector<std::string>& columns, const std::map<std::string, std::string>& rename) {
    std::set<std::string> seen;
    for (const auto& c : columns) {
        if (c.empty() || !seen.insert(c).second) fail(ErrorCode::bad_request, "project: duplicate or empty column \"" + c + "\"");
    }
    std::vector<std::string> out_names = columns;
    for (const auto& [from, to] : rename) {
        if (!seen.count(from)) fail(ErrorCode::bad_request, "project: rename of unprojected column \"" + from + "\"");
        if (to.empty()) fail(ErrorCode::bad_request, "project: empty rename target");
    }
    for (auto& n : out_names) {
        if (auto it = rename.find(n); it != rename.end()) n = it->second;
    }
    if (std::set<std::string>(out_names.begin(), out_names.end()).size() != out_names.size()) {
        fail(ErrorCode::bad_request, "project: renames produce duplicate columns");
    }
    Table out;
    out.rows.reserve(in.rows.size());
    for (const auto& r : in.rows) {
        Row row;
        for (std::size_t i = 0; i < columns.size(); ++i) row.emplace(out_names[i], attr(r, columns[i]));
        out.rows.push_back(std::move(row));
    }
    if (in.schema) {
        Schema s;
        for (std::size_t i = 0; i < columns.size(); ++i) {
            const ColumnSpec* c = find_column(*in.schema, columns[i]);
            ColumnSpec spec = c ? *c : ColumnSpec{columns[i], DeclaredType::any, "", false};
            if (!c) spec.required = false;
            spec.name = out_names[i];
            s.push_back(spec);
        }
        out.schema = std::move(s);
    }
    return out;
}

Table filter(const Table& in, const Expr& predicate, Policy policy) {
    Table out;
    out.schema = in.schema;
    for (auto i : kernels::filter_indices(predicate, in.rows, {}, policy)) out.rows.push_back(in.rows[i]);
    return out;
}

Table join(const Table& left, const Table& right, const JoinOptions& opts, Policy policy) {
    if (!opts.left_key && !opts.condition) fail(ErrorCode::bad_request, "join needs a key or a condition");
    const auto left_names = attribute_set(left);
    const auto right_names_vec = right.attribute_names();
    std::set<std::string> taken(left_names);
    taken.insert(right_names_vec.begin(), right_names_vec.end());
    std::map<std::string, std::string> mapped;
    for (const auto& n : right_names_vec) {
        if (!left_names.count(n)) {
            mapped[n] = n;
            continue;
        }
        std::string m = "r_" + n;
        while (taken.count(m)) m = "r_" + m;
        taken.insert(m);
        mapped[n] = m;
    }
    auto map_name = [&](const std::string& n) -> const std::string& {
        auto it = mapped.find(n);
        return it == mapped.end() ? n : it->second;
    };

    kernels::JoinSpec spec;
    spec.left_key = opts.left_key;
    spec.right_key = opts.right_key ? opts.right_key : opts.left_key;
    spec.condition = opts.condition ? &*opts.condition : nullptr;
    auto matches = kernels::join_matches(left.rows, right.rows, spec, policy);

    Table out;
    for (std::size_t i = 0; i < left.rows.size(); ++i) {
        for (auto j : matches[i]) {
            Row row = left.rows[i];
            for (const auto& [k, v] : right.rows[j]) row.emplace(map_name(k), v);
            out.rows.push_back(std::move(row));
        }
        if (matches[i].empty() && opts.kind == JoinKind::left) {
            Row row = left.rows[i];
            for (const auto& n : right_names_vec) row.emplace(map_name(n), Value());
            out.rows.push_back(std::move(row));
        }
    }
    if (left.schema && right.schema) {
        Schema s = *left.schema;
        for (auto c : *right.schema) {
            c.name = map_name(c.name);
            if (opts.kind == JoinKind::left) c.required = false;
            s.push_back(c);
        }
        out.schema = std::move(s);
    }
    return out;
}

Table in_filter(const Table& in, const Table& members, const std::string& key, const std::string& member_key,
                Policy policy) {
    std::unordered_set<std::string> set;
    for (const auto& k : kernels::attribute_keys(members.rows, member_key, policy)) {
        if (k) set.insert(*k);
    }
    auto keys = kernels::attribute_keys(in.rows, key, policy);
    Table out;
    out.schema = in.schema;
    for (std::size_t i = 0; i < in.rows.size(); ++i) {
        if (keys[i] && set.count(*keys[i])) out.rows.push_back(in.rows[i]);
    }
    return out;
}

Table union_all(const std::vector<Table>& inputs, bool distinct, Policy policy) {
    Table out;
    bool same_schema = !inputs.empty();
    for (const auto& t : inputs) same_schema = same_schema && t.schema && t.schema == inputs.front().schema;
    if (same_schema) out.schema = inputs.front().schema;
    std::unordered_set<std::string> seen;
    for (const auto& t : inputs) {
        if (!distinct) {
            out.rows.insert(out.rows.end(), t.rows.begin(), t.rows.end());
            continue;
        }
        auto keys = kernels::row_keys(t.rows, policy);
        for (std::size_t i = 0; i < t.rows.size(); ++i) {
            if (seen.insert(keys[i]).second) out.rows.push_back(t.rows[i]);
        }
    }
    return out;
}

Table sort_limit(const Table& in, const std::vector<SortKey>& by, std::optional<std::int64_t> limit,
                 std::int64_t offset) {
    if (offset < 0 || (limit && *limit < 0)) fail(ErrorCode::bad_request, "sort_limit: negative offset or limit");
    std::vector<std::size_t> order(in.rows.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        for (const auto& k : by) {
            const Value& x = attr(in.rows[a], k.key);
            const Value& y = attr(in.rows[b], k.key);
            if (x.is_null() != y.is_null()) return x.is_null();
            int c = compare(x, y);
            if (c != 0) return k.desc ? c > 0 : c < 0;
        }
        return false;
    });
    Table out;
    out.schema = in.schema;
    auto start = std::min<std::size_t>(static_cast<std::size_t>(offset), order.size());
    auto end = order.size();
    if (limit) end = std::min<std::size_t>(end, start + static_cast<std::size_t>(*limit));
    for (auto i = start; i < end; ++i) out.rows.push_back(in.rows[order[i]]);
    return out;
}

AggFn parse_agg_fn(std::string_view name) {
    if (name == "count") return AggFn::count;
    if (name == "sum") return AggFn::sum;
    if (name == "min") return AggFn::min;
    if (name == "max") return AggFn::max;
    if (name == "avg") return AggFn::avg;
    fail(ErrorCode::bad_request, "unknown aggregate \"" + std::string(name) + "\"");
}

namespace {

struct Accumulator {
    std::int64_t rows = 0;
    std::int64_t isum = 0;
    double fsum = 0.0;
    bool all_int = true;
    bool overflow = false;
    std::int64_t numbers = 0;
    std::optional<Value> lo, hi;

    void add(const Value& v) {
        ++rows;
        if (v.is_null()) return;
        if (!lo || compare(v, *lo) < 0) lo = v;
        if (!hi || compare(v, *hi) > 0) hi = v;
        if (!v.is_number()) return;
        ++numbers;
        fsum += *v.number();
        if (v.is_int()) {
            if (!overflow && __builtin_add_overflow(isum, v.as_int(), &isum)) overflow = true;
        } else {
            all_int = false;
        }
    }

    Value result(AggFn fn) const {
        switch (fn) {
            case AggFn::count: return Value(rows);
            case AggFn::sum:
                if (numbers == 0) return Value();
                return all_int && !overflow ? Value(isum) : Value(fsum);
            case AggFn::avg: return numbers == 0 ? Value() : Value(fsum / static_cast<double>(numbers));
            case AggFn::min: return lo.value_or(Value());
            case AggFn::max: return hi.value_or(Value());
        }
        return Value();
    }
};

}  // namespace

Table group_agg(const Table& in, const std::vector<std::string>& keys, const std::vector<Aggregate>& aggs) {
    std::set<std::string> names(keys.begin(), keys.end());
    if (names.size() != keys.size()) fail(ErrorCode::bad_request, "group_agg: duplicate key");
    for (const auto& a : aggs) {
        if (a.as.empty() || !names.insert(a.as).second) {
            fail(ErrorCode::bad_request, "group_agg: output name \"" + a.as + "\" is empty or duplicated");
        }
    }
    struct Group {
        Row key_values;
        std::vector<Accumulator> acc;
    };
    std::vector<Group> groups;
    std::unordered_map<std::string, std::size_t> index;
    for (const auto& r : in.rows) {
        std::string gk;
        for (const auto& k : keys) gk += normalized_key(attr(r, k)) + '\x1f';
        auto [it, fresh] = index.emplace(gk, groups.size());
        if (fresh) {
            Group g;
            for (const auto& k : keys) g.key_values.emplace(k, attr(r, k));
            g.acc.resize(aggs.size());
            groups.push_back(std::move(g));
        }
        auto& g = groups[it->second];
        for (std::size_t i = 0; i < aggs.size(); ++i) g.acc[i].add(aggs[i].on.empty() ? Value() : attr(r, aggs[i].on));
    }
    Table out;
    for (auto& g : groups) {
        Row row = std::move(g.key_values);
        for (std::size_t i = 0; i < aggs.size(); ++i) row.emplace(aggs[i].as, g.acc[i].result(aggs[i].fn));
        out.rows.push_back(std::move(row));
    }
    return out;
}

namespace {

Table with_extracted(const Table& in, const std::string& as, const std::function<Value(const std::string&)>& f,
                     const std::string& column) {
    Table out;
    out.rows.reserve(in.rows.size());
    for (const auto& r : in.rows) {
        Row row = r;
        const Value& v = attr(r, column);
        row[as] = v.is_string() ? f(v.as_string()) : Value();
        out.rows.push_back(std::move(row));
    }
    if (in.schema) {
        Schema s;
        for (const auto& c : *in.schema) {
            if (c.name != as) s.push_back(c);
        }
        s.push_back({as, DeclaredType::string, "", false});
        out.schema = std::move(s);
    }
    return out;
}

}  // namespace

Table extract_regex(const Table& in, const std::string& column, const std::string& pattern, const std::string& as) {
    std::regex re;
    try {
        re = std::regex(pattern, std::regex::ECMAScript);
    } catch (const std::regex_error& e) {
        fail(ErrorCode::bad_request, "invalid regex \"" + pattern + "\": " + e.what());
    }
    return with_extracted(
        in, as,
        [&](const std::string& s) -> Value {
            std::smatch m;
            if (!std::regex_search(s, m, re)) return Value();
            if (m.size() > 1 && m[1].matched) return Value(m[1].str());
            return Value(m[0].str());
        },
        column);
}

Table extract_dictionary(const Table& in, const std::string& column, const std::vector<std::string>& dictionary,
                         const std::string& as) {
    std::vector<std::string> lowered;
    for (const auto& t : dictionary) lowered.push_back(lower(t));
    return with_extracted(
        in, as,
        [&](const std::string& s) -> Value {
            auto text = lower(s);
            for (std::size_t i = 0; i < dictionary.size(); ++i) {
                if (!lowered[i].empty() && text.find(lowered[i]) != std::string::npos) return Value(dictionary[i]);
            }
            return Value();
        },
        column);
}

}  // namespace dil::ops
