#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dil/core/table.hpp"

namespace dil {

enum class ViolationKind { unknown_attribute, type_mismatch, missing_required };

std::string_view to_string(ViolationKind kind);

struct SchemaViolation {
    std::size_t row = 0;
    std::string attribute;
    ViolationKind kind = ViolationKind::type_mismatch;
    std::string detail;

    bool operator==(const SchemaViolation&) const = default;
};

struct ValidationReport {
    std::vector<SchemaViolation> violations;

    bool ok() const noexcept { return violations.empty(); }
    std::size_t size() const noexcept { return violations.size(); }

    // One line per violation, e.g. "row 0: salary: expected integer, got string".
    std::string render() const;
    nlohmann::json to_json() const;
};

// Violations are reported in row order, then attribute-name order within a
// row (unknown/mismatch), then schema order (missing required).
ValidationReport validate_schema(const Table& table, const Schema& schema);

}  // namespace dil
