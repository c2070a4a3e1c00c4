#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dil/core/value.hpp"

namespace dil {

// attribute name -> value; names are non-empty and unique (map keys).
using Row = Map;

enum class DeclaredType { any, boolean, integer, floating, string, list, map };

std::string_view to_string(DeclaredType type);
DeclaredType parse_declared_type(std::string_view name);

// null always conforms; integers conform to float columns.
bool conforms(const Value& v, DeclaredType type);

struct ColumnSpec {
    std::string name;
    DeclaredType type = DeclaredType::any;
    std::string description;
    bool required = false;

    bool operator==(const ColumnSpec&) const = default;
};

// Ordered: column order is the attribute order a source reported.
using Schema = std::vector<ColumnSpec>;

const ColumnSpec* find_column(const Schema& schema, std::string_view name);

// Accepts {"a":"integer"} or {"a":{"type":"integer","description":..,"required":..}}
// or a list of {"name","type",...}. Throws bad_request on malformed input.
Schema schema_from_value(const Value& v);
// Renders as the {"name": {"type": ...}} map form.
Value schema_to_value(const Schema& schema);

struct Table {
    std::vector<Row> rows;
    std::optional<Schema> schema;

    bool empty() const noexcept { return rows.empty(); }
    std::size_t size() const noexcept { return rows.size(); }

    // Attribute names in schema order, then any extra names seen in rows
    // (sorted).
    std::vector<std::string> attribute_names() const;

    bool operator==(const Table&) const = default;
};

// The uniform operator payload: an ordered list of tables (positional ports).
struct DataBatch {
    std::vector<Table> tables;

    DataBatch() = default;
    explicit DataBatch(std::vector<Table> t) : tables(std::move(t)) {}
    static DataBatch single(Table t) {
        DataBatch b;
        b.tables.push_back(std::move(t));
        return b;
    }

    bool operator==(const DataBatch&) const = default;
};

// Throws bad_request if a row has an empty attribute name or, when a schema is
// present, an attribute outside the schema or a non-conforming value.
void check_invariants(const Table& table);
void check_invariants(const DataBatch& batch);

}  // namespace dil
