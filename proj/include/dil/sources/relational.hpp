#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "dil/core/table.hpp"
#include "dil/registry/data_registry.hpp"

struct sqlite3;

namespace dil {

// Tables and columns an SQL statement may read: table -> column names.
using SqlCatalog = std::map<std::string, std::set<std::string>>;

struct SqlViolation {
    std::string kind;  // unknown_relation, unknown_attribute, not_read_only, syntax
    std::string detail;

    bool operator==(const SqlViolation&) const = default;
};

// A relational source backed by SQLite. The connection map either names a
// database file ({"path": ...}, opened read-only) or a JSON fixture
// ({"fixture": ...}) that is loaded into a private in-memory database.
class RelationalSource {
public:
    RelationalSource(std::string source_id, const Map& connection, const std::filesystem::path& base_dir);
    ~RelationalSource();
    RelationalSource(const RelationalSource&) = delete;
    RelationalSource& operator=(const RelationalSource&) = delete;

    const std::string& source_id() const noexcept { return id_; }

    // Single read-only statement -> one-table batch whose schema keeps the
    // result column order. Write statements and multi-statement text are
    // rejected with bad_request; SQLite errors are surfaced verbatim.
    DataBatch query(const std::string& statement) const;

    // Tables with their declared columns and all rows (for registry sync).
    SourceSnapshot snapshot() const;

    // Checks that sql is a single read-only statement touching only catalog
    // tables/columns. Empty result means the statement is acceptable.
    std::vector<SqlViolation> verify(const std::string& sql, const SqlCatalog& catalog) const;

private:
    std::string id_;
    sqlite3* db_ = nullptr;
    std::map<std::string, std::string> descriptions_;  // table or "table.column" -> text
    mutable std::mutex mu_;
};

// Loads {"tables":[{"name","description?","columns":[{name,type,description?}],"rows":[[...]]}]}
// into the given SQLite handle and returns the descriptions it declares.
std::map<std::string, std::string> load_relational_fixture(sqlite3* db, const std::filesystem::path& file);

}  // namespace dil
