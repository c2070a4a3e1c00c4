#include "dil/core/schema.hpp"

namespace dil {

std::string_view to_string(ViolationKind kind) {
    switch (kind) {
        case ViolationKind::unknown_attribute: return "unknown_attribute";
        case ViolationKind::type_mismatch: return "type_mismatch";
        case ViolationKind::missing_required: return "missing_required";
    }
    return "type_mismatch";
}

std::string ValidationReport::render() const {
    std::string out;
    for (const auto& v : violations) {
        out += "row " + std::to_string(v.row) + ": " + v.attribute + ": " + v.detail + "\n";
    }
    return out;
}

nlohmann::json ValidationReport::to_json() const {
    auto arr = nlohmann::json::array();
    for (const auto& v : violations) {
        arr.push_back({{"row", v.row},
                       {"attribute", v.attribute},
                       {"kind", std::string(to_string(v.kind))},
                       {"detail", v.detail}});
    }
    return arr;
}

ValidationReport validate_schema(const Table& table, const Schema& schema) {
    ValidationReport report;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const Row& row = table.rows[i];
        for (const auto& [name, value] : row) {
            const ColumnSpec* col = find_column(schema, name);
            if (!col) {
                report.violations.push_back(
                    {i, name, ViolationKind::unknown_attribute, "attribute not in schema"});
            } else if (!conforms(value, col->type)) {
                report.violations.push_back({i, name, ViolationKind::type_mismatch,
                                             "expected " + std::string(to_string(col->type)) + ", got " +
                                                 std::string(to_string(value.type()))});
            }
        }
        for (const auto& col : schema) {
            if (col.required && !row.contains(col.name)) {
                report.violations.push_back(
                    {i, col.name, ViolationKind::missing_required, "required attribute missing"});
            }
        }
    }
    return report;
}

}  // namespace dil
