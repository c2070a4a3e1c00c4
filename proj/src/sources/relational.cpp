#include "dil/sources/relational.hpp"

#include <sqlite3.h>

#include <algorithm>
#include <cctype>
#include <fstream>

#include "dil/core/codec.hpp"
#include "dil/error.hpp"

namespace dil {

namespace {

std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::string quote_ident(const std::string& name) {
    std::string out = "\"";
    for (char c : name) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    return out + "\"";
}

DeclaredType type_from_decl(const char* decl) {
    if (!decl) return DeclaredType::any;
    std::string d = lower(decl);
    if (d.find("int") != std::string::npos) return DeclaredType::integer;
    if (d.find("char") != std::string::npos || d.find("text") != std::string::npos ||
        d.find("clob") != std::string::npos)
        return DeclaredType::string;
    if (d.find("real") != std::string::npos || d.find("floa") != std::string::npos ||
        d.find("doub") != std::string::npos)
        return DeclaredType::floating;
    return DeclaredType::any;
}

std::string_view sql_type(DeclaredType t) {
    switch (t) {
        case DeclaredType::integer:
        case DeclaredType::boolean: return "INTEGER";
        case DeclaredType::floating: return "REAL";
        case DeclaredType::string: return "TEXT";
        default: return "";
    }
}

Value column_value(sqlite3_stmt* stmt, int i) {
    switch (sqlite3_column_type(stmt, i)) {
        case SQLITE_INTEGER: return Value(static_cast<std::int64_t>(sqlite3_column_int64(stmt, i)));
        case SQLITE_FLOAT: return Value(sqlite3_column_double(stmt, i));
        case SQLITE_NULL: return Value();
        default: {
            const auto* text = reinterpret_cast<const char*>(sqlite3_column_text(stmt, i));
            int n = sqlite3_column_bytes(stmt, i);
            return Value(std::string(text ? text : "", static_cast<std::size_t>(n)));
        }
    }
}

void bind_value(sqlite3_stmt* stmt, int i, const Value& v) {
    switch (v.type()) {
        case ValueType::null: sqlite3_bind_null(stmt, i); break;
        case ValueType::boolean: sqlite3_bind_int64(stmt, i, v.as_bool() ? 1 : 0); break;
        case ValueType::integer: sqlite3_bind_int64(stmt, i, v.as_int()); break;
        case ValueType::floating: sqlite3_bind_double(stmt, i, v.as_float()); break;
        case ValueType::string:
            sqlite3_bind_text(stmt, i, v.as_string().c_str(), static_cast<int>(v.as_string().size()), SQLITE_TRANSIENT);
            break;
        default: {
            auto text = serialize_value(v);
            sqlite3_bind_text(stmt, i, text.c_str(), static_cast<int>(text.size()), SQLITE_TRANSIENT);
        }
    }
}

struct StmtGuard {
    sqlite3_stmt* stmt = nullptr;
    ~StmtGuard() { sqlite3_finalize(stmt); }
};

void exec(sqlite3* db, const std::string& sql) {
    char* err = nullptr;
    if (sqlite3_exec(db, sql.c_str(), nullptr, nullptr, &err) != SQLITE_OK) {
        std::string msg = err ? err : "sqlite error";
        sqlite3_free(err);
        fail(ErrorCode::bad_request, msg);
    }
}

bool only_trailing_noise(const char* tail) {
    for (; tail && *tail; ++tail) {
        if (!std::isspace(static_cast<unsigned char>(*tail)) && *tail != ';') return false;
    }
    return true;
}

// Prepares a single statement; throws bad_request on SQLite errors or when
// more than one statement is present.
sqlite3_stmt* prepare_single(sqlite3* db, const std::string& sql) {
    sqlite3_stmt* stmt = nullptr;
    const char* tail = nullptr;
    if (sqlite3_prepare_v2(db, sql.c_str(), static_cast<int>(sql.size()), &stmt, &tail) != SQLITE_OK) {
        fail(ErrorCode::bad_request, sqlite3_errmsg(db), {{"statement", sql}});
    }
    if (!stmt) fail(ErrorCode::bad_request, "empty SQL statement");
    if (!only_trailing_noise(tail)) {
        sqlite3_finalize(stmt);
        fail(ErrorCode::bad_request, "only a single SQL statement is allowed", {{"statement", sql}});
    }
    return stmt;
}

}  // namespace

std::map<std::string, std::string> load_relational_fixture(sqlite3* db, const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) fail(ErrorCode::not_found, "relational fixture not found: " + file.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::bad_request, "malformed relational fixture " + file.string() + ": " + e.what());
    }
    std::map<std::string, std::string> descriptions;
    exec(db, "BEGIN");
    for (const auto& t : j.at("tables")) {
        const std::string name = t.at("name");
        Schema cols = schema_from_value(from_json(t.at("columns")));
        if (t.contains("description")) descriptions[name] = t["description"];
        std::string ddl = "CREATE TABLE " + quote_ident(name) + " (";
        std::string ins = "INSERT INTO " + quote_ident(name) + " VALUES (";
        for (std::size_t i = 0; i < cols.size(); ++i) {
            ddl += (i ? ", " : "") + quote_ident(cols[i].name) + " " + std::string(sql_type(cols[i].type));
            ins += i ? ", ?" : "?";
            if (!cols[i].description.empty()) descriptions[name + "." + cols[i].name] = cols[i].description;
        }
        exec(db, ddl + ")");
        StmtGuard g{prepare_single(db, ins + ")")};
        for (const auto& r : t.value("rows", nlohmann::json::array())) {
            sqlite3_reset(g.stmt);
            for (std::size_t i = 0; i < cols.size(); ++i) {
                Value v;
                if (r.is_array() && i < r.size()) v = from_json(r[i]);
                if (r.is_object() && r.contains(cols[i].name)) v = from_json(r[cols[i].name]);
                bind_value(g.stmt, static_cast<int>(i + 1), v);
            }
            if (sqlite3_step(g.stmt) != SQLITE_DONE) fail(ErrorCode::bad_request, sqlite3_errmsg(db));
        }
    }
    exec(db, "COMMIT");
    return descriptions;
}

RelationalSource::RelationalSource(std::string source_id, const Map& connection, const std::filesystem::path& base_dir)
    : id_(std::move(source_id)) {
    auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_absolute() ? path : base_dir / path;
    };
    if (const Value* fixture = connection.count("fixture") ? &connection.at("fixture") : nullptr) {
        if (sqlite3_open(":memory:", &db_) != SQLITE_OK) fail(ErrorCode::internal, "cannot open in-memory database");
        try {
            descriptions_ = load_relational_fixture(db_, resolve(fixture->as_string()));
        } catch (...) {
            sqlite3_close(db_);
            db_ = nullptr;
            throw;
        }
    } else if (const Value* path = connection.count("path") ? &connection.at("path") : nullptr) {
        auto file = resolve(path->as_string());
        if (!std::filesystem::exists(file)) {
            fail(ErrorCode::backend_unreachable, "database file not found: " + file.string());
        }
        if (sqlite3_open_v2(file.c_str(), &db_, SQLITE_OPEN_READONLY, nullptr) != SQLITE_OK) {
            std::string msg = sqlite3_errmsg(db_);
            sqlite3_close(db_);
            db_ = nullptr;
            fail(ErrorCode::backend_unreachable, "cannot open " + file.string() + ": " + msg);
        }
    } else {
        fail(ErrorCode::bad_request, "relational source " + id_ + " needs a \"fixture\" or \"path\" connection");
    }
}

RelationalSource::~RelationalSource() { sqlite3_close(db_); }

DataBatch RelationalSource::query(const std::string& statement) const {
    std::lock_guard lock(mu_);
    StmtGuard g{prepare_single(db_, statement)};
    if (!sqlite3_stmt_readonly(g.stmt)) {
        fail(ErrorCode::bad_request, "only read-only statements are allowed", {{"statement", statement}});
    }
    const int n = sqlite3_column_count(g.stmt);
    Schema schema;
    for (int i = 0; i < n; ++i) {
        ColumnSpec c;
        c.name = sqlite3_column_name(g.stmt, i);
        c.type = type_from_decl(sqlite3_column_decltype(g.stmt, i));
        if (c.name.empty() || find_column(schema, c.name)) {
            fail(ErrorCode::bad_request, "result column names must be non-empty and unique: \"" + c.name + "\"");
        }
        schema.push_back(c);
    }
    Table t;
    int rc;
    while ((rc = sqlite3_step(g.stmt)) == SQLITE_ROW) {
        Row row;
        for (int i = 0; i < n; ++i) {
            Value v = column_value(g.stmt, i);
            if (!conforms(v, schema[i].type)) schema[i].type = DeclaredType::any;
            row.emplace(schema[i].name, std::move(v));
        }
        t.rows.push_back(std::move(row));
    }
    if (rc != SQLITE_DONE) fail(ErrorCode::bad_request, sqlite3_errmsg(db_), {{"statement", statement}});
    t.schema = std::move(schema);
    return DataBatch::single(std::move(t));
}

SourceSnapshot RelationalSource::snapshot() const {
    std::vector<std::string> tables;
    {
        std::lock_guard lock(mu_);
        StmtGuard g{prepare_single(
            db_, "SELECT name FROM sqlite_master WHERE type IN ('table','view') AND name NOT LIKE 'sqlite_%' ORDER BY name")};
        while (sqlite3_step(g.stmt) == SQLITE_ROW) tables.push_back(column_value(g.stmt, 0).as_string());
    }
    SourceSnapshot snap;
    for (const auto& name : tables) {
        CollectionSnapshot c;
        c.name = name;
        if (auto it = descriptions_.find(name); it != descriptions_.end()) c.description = it->second;
        Table rows = query("SELECT * FROM " + quote_ident(name)).tables[0];
        c.columns = *rows.schema;
        for (auto& col : c.columns) {
            if (auto it = descriptions_.find(name + "." + col.name); it != descriptions_.end()) col.description = it->second;
        }
        c.rows = std::move(rows.rows);
        snap.collections.push_back(std::move(c));
    }
    return snap;
}

namespace {

struct AuthState {
    const SqlCatalog* catalog;
    std::vector<SqlViolation> violations;
};

int authorize(void* user, int action, const char* a1, const char* a2, const char*, const char*) {
    auto* st = static_cast<AuthState*>(user);
    auto add = [&](std::string kind, std::string detail) {
        SqlViolation v{std::move(kind), std::move(detail)};
        if (std::find(st->violations.begin(), st->violations.end(), v) == st->violations.end()) {
            st->violations.push_back(std::move(v));
        }
    };
    switch (action) {
        case SQLITE_SELECT:
        case SQLITE_FUNCTION:
        case SQLITE_RECURSIVE:
            return SQLITE_OK;
        case SQLITE_READ: {
            std::string table = a1 ? a1 : "";
            std::string column = a2 ? a2 : "";
            const std::set<std::string>* cols = nullptr;
            for (const auto& [t, c] : *st->catalog) {
                if (lower(t) == lower(table)) cols = &c;
            }
            if (!cols) {
                add("unknown_relation", table);
                return SQLITE_OK;
            }
            if (column.empty()) return SQLITE_OK;
            bool found = false;
            for (const auto& c : *cols) found = found || lower(c) == lower(column);
            if (!found) add("unknown_attribute", table + "." + column);
            return SQLITE_OK;
        }
        default:
            add("not_read_only", "statement performs a non-read action");
            return SQLITE_OK;
    }
}

}  // namespace

std::vector<SqlViolation> RelationalSource::verify(const std::string& sql, const SqlCatalog& catalog) const {
    std::lock_guard lock(mu_);
    AuthState st{&catalog, {}};
    sqlite3_set_authorizer(db_, authorize, &st);
    sqlite3_stmt* stmt = nullptr;
    const char* tail = nullptr;
    int rc = sqlite3_prepare_v2(db_, sql.c_str(), static_cast<int>(sql.size()), &stmt, &tail);
    sqlite3_set_authorizer(db_, nullptr, nullptr);
    if (rc != SQLITE_OK) {
        std::string msg = sqlite3_errmsg(db_);
        if (msg.rfind("no such table: ", 0) == 0) {
            st.violations.push_back({"unknown_relation", msg.substr(15)});
        } else if (msg.rfind("no such column: ", 0) == 0) {
            st.violations.push_back({"unknown_attribute", msg.substr(16)});
        } else {
            st.violations.push_back({"syntax", msg});
        }
        return st.violations;
    }
    if (!stmt) return {{"syntax", "empty SQL statement"}};
    if (!only_trailing_noise(tail)) st.violations.push_back({"syntax", "only a single SQL statement is allowed"});
    if (!sqlite3_stmt_readonly(stmt) &&
        std::none_of(st.violations.begin(), st.violations.end(), [](const auto& v) { return v.kind == "not_read_only"; })) {
        st.violations.push_back({"not_read_only", "statement modifies the database"});
    }
    sqlite3_finalize(stmt);
    return st.violations;
}

}  // namespace dil
