#include "dil/core/table.hpp"

#include <set>

#include "dil/error.hpp"

namespace dil {

std::string_view to_string(DeclaredType type) {
    switch (type) {
        case DeclaredType::any: return "any";
        case DeclaredType::boolean: return "boolean";
        case DeclaredType::integer: return "integer";
        case DeclaredType::floating: return "float";
        case DeclaredType::string: return "string";
        case DeclaredType::list: return "list";
        case DeclaredType::map: return "map";
    }
    return "any";
}

DeclaredType parse_declared_type(std::string_view name) {
    if (name == "any") return DeclaredType::any;
    if (name == "boolean" || name == "bool") return DeclaredType::boolean;
    if (name == "integer" || name == "int") return DeclaredType::integer;
    if (name == "float" || name == "number") return DeclaredType::floating;
    if (name == "string") return DeclaredType::string;
    if (name == "list") return DeclaredType::list;
    if (name == "map") return DeclaredType::map;
    fail(ErrorCode::bad_request, "unknown declared type \"" + std::string(name) + "\"");
}

bool conforms(const Value& v, DeclaredType type) {
    if (v.is_null()) return true;
    switch (type) {
        case DeclaredType::any: return true;
        case DeclaredType::boolean: return v.is_bool();
        case DeclaredType::integer: return v.is_int();
        case DeclaredType::floating: return v.is_number();
        case DeclaredType::string: return v.is_string();
        case DeclaredType::list: return v.is_list();
        case DeclaredType::map: return v.is_map();
    }
    return false;
}

const ColumnSpec* find_column(const Schema& schema, std::string_view name) {
    for (const auto& c : schema) {
        if (c.name == name) return &c;
    }
    return nullptr;
}

namespace {
ColumnSpec column_from(std::string name, const Value& spec) {
    ColumnSpec c;
    c.name = std::move(name);
    if (c.name.empty()) fail(ErrorCode::bad_request, "schema attribute names must be non-empty");
    if (spec.is_string()) {
        c.type = parse_declared_type(spec.as_string());
        return c;
    }
    if (!spec.is_map()) fail(ErrorCode::bad_request, "schema entry for \"" + c.name + "\" is malformed");
    if (const auto* t = spec.find("type")) c.type = parse_declared_type(t->as_string());
    if (const auto* d = spec.find("description")) c.description = d->as_string();
    if (const auto* r = spec.find("required")) c.required = r->as_bool();
    return c;
}
}  // namespace

Schema schema_from_value(const Value& v) {
    Schema schema;
    if (v.is_map()) {
        for (const auto& [name, spec] : v.as_map()) schema.push_back(column_from(name, spec));
    } else if (v.is_list()) {
        std::set<std::string> seen;
        for (const auto& entry : v.as_list()) {
            const auto* name = entry.find("name");
            if (!name) fail(ErrorCode::bad_request, "schema list entries need a \"name\"");
            if (!seen.insert(name->as_string()).second) {
                fail(ErrorCode::bad_request, "duplicate schema attribute \"" + name->as_string() + "\"");
            }
            schema.push_back(column_from(name->as_string(), entry));
        }
    } else if (!v.is_null()) {
        fail(ErrorCode::bad_request, "schema must be a map or a list");
    }
    return schema;
}

Value schema_to_value(const Schema& schema) {
    Map m;
    for (const auto& c : schema) {
        Map spec{{"type", std::string(to_string(c.type))}};
        if (!c.description.empty()) spec.emplace("description", c.description);
        if (c.required) spec.emplace("required", true);
        m.emplace(c.name, Value(std::move(spec)));
    }
    return Value(std::move(m));
}

std::vector<std::string> Table::attribute_names() const {
    std::vector<std::string> names;
    std::set<std::string, std::less<>> seen;
    if (schema) {
        for (const auto& c : *schema) {
            names.push_back(c.name);
            seen.insert(c.name);
        }
    }
    std::set<std::string> extra;
    for (const auto& r : rows) {
        for (const auto& [k, _] : r) {
            if (!seen.contains(k)) extra.insert(k);
        }
    }
    names.insert(names.end(), extra.begin(), extra.end());
    return names;
}

void check_invariants(const Table& table) {
    if (table.schema) {
        std::set<std::string, std::less<>> names;
        for (const auto& c : *table.schema) {
            if (c.name.empty() || !names.insert(c.name).second) {
                fail(ErrorCode::bad_request, "schema attribute names must be unique and non-empty");
            }
        }
    }
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        for (const auto& [k, v] : table.rows[i]) {
            if (k.empty()) fail(ErrorCode::bad_request, "empty attribute name in row " + std::to_string(i));
            if (!table.schema) continue;
            const auto* col = find_column(*table.schema, k);
            if (!col) {
                fail(ErrorCode::bad_request,
                     "row " + std::to_string(i) + " attribute \"" + k + "\" is not in the table schema");
            }
            if (!conforms(v, col->type)) {
                fail(ErrorCode::bad_request, "row " + std::to_string(i) + " attribute \"" + k +
                                                 "\" does not conform to " + std::string(to_string(col->type)));
            }
        }
    }
}

void check_invariants(const DataBatch& batch) {
    for (const auto& t : batch.tables) check_invariants(t);
}

}  // namespace dil
