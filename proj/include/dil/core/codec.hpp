#pragma once

#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "dil/core/table.hpp"
#include "dil/core/value.hpp"

namespace dil {

// Canonical JSON: object keys sorted, no insignificant whitespace, UTF-8
// passed through unescaped, integers unadorned, floats in shortest
// round-trip form (always carrying a '.' or exponent so they read back as
// floats).
std::string serialize_value(const Value& v);
std::string canonical_serialize(const Table& table);
std::string canonical_serialize(const DataBatch& batch);

// Strict readers: reject non-finite numbers, integers outside int64, empty
// map keys, and schema violations. Throw dil::Error(bad_request).
Value parse_value(std::string_view text);
DataBatch deserialize_batch(std::string_view text);

// Bridges to nlohmann::json for the HTTP and file layers.
nlohmann::json to_json(const Value& v);
Value from_json(const nlohmann::json& j);
nlohmann::json to_json(const Table& t);
Table table_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DataBatch& b);
DataBatch batch_from_json(const nlohmann::json& j);

// Convenience for rows given as a JSON array of objects.
Table table_from_rows(const nlohmann::json& rows);

}  // namespace dil
