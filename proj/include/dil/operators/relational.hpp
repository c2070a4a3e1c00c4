#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dil/core/expression.hpp"
#include "dil/core/table.hpp"
#include "dil/kernels/kernels.hpp"

namespace dil::ops {

using kernels::Policy;

// Columns in the given order (missing -> null), then renames. Throws
// bad_request on duplicate columns or a rename that does not target a
// projected column or collides with another output column.
Table project(const Table& in, const std::vector<std::string>& columns, const std::map<std::string, std::string>& rename);

// Rows where the predicate is boolean true, in input order.
Table filter(const Table& in, const Expr& predicate, Policy policy = Policy::parallel);

enum class JoinKind { inner, left };

struct JoinOptions {
    std::optional<std::string> left_key;
    std::optional<std::string> right_key;  // defaults to left_key
    std::optional<Expr> condition;         // left row at port 0, right row at port 1
    JoinKind kind = JoinKind::inner;
};

// Equality join with numeric key normalization. Right attribute names that
// occur anywhere in the left table are prefixed "r_" (repeatedly, until
// unique). Output order: left order, then right order within a key.
Table join(const Table& left, const Table& right, const JoinOptions& opts, Policy policy = Policy::parallel);

// Semi-join: rows of `in` whose key appears in members[member_key].
Table in_filter(const Table& in, const Table& members, const std::string& key, const std::string& member_key,
                Policy policy = Policy::parallel);

// Concatenation in port order; distinct keeps the first of canonically equal rows.
Table union_all(const std::vector<Table>& inputs, bool distinct, Policy policy = Policy::parallel);

struct SortKey {
    std::string key;
    bool desc = false;
};

// Stable multi-key sort; null (or missing) sorts first in both directions,
// desc reverses the order among non-null values. Then offset and limit.
Table sort_limit(const Table& in, const std::vector<SortKey>& by, std::optional<std::int64_t> limit,
                 std::int64_t offset);

enum class AggFn { count, sum, min, max, avg };

struct Aggregate {
    AggFn fn = AggFn::count;
    std::string on;
    std::string as;
};

AggFn parse_agg_fn(std::string_view name);

// One row per distinct key tuple in order of first appearance. count counts
// rows; sum/avg use numeric values only and min/max non-null values; an
// aggregate with nothing to aggregate is null.
Table group_agg(const Table& in, const std::vector<std::string>& keys, const std::vector<Aggregate>& aggs);

// Adds `as`: first capture group (or the whole match) of the first regex
// match in the string value of `column`; null otherwise.
Table extract_regex(const Table& in, const std::string& column, const std::string& pattern, const std::string& as);

// Adds `as`: the first dictionary term (in dictionary order) contained
// case-insensitively in the string value of `column`; null otherwise.
Table extract_dictionary(const Table& in, const std::string& column, const std::vector<std::string>& dictionary,
                         const std::string& as);

}  // namespace dil::ops
