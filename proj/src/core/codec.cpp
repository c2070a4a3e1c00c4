#include "dil/core/codec.hpp"

#include <charconv>
#include <cmath>
#include <limits>

#include "dil/error.hpp"

namespace dil {

namespace {

// Returns false on malformed UTF-8 (overlong forms and surrogates included).
bool valid_utf8(std::string_view s) {
    std::size_t i = 0;
    while (i < s.size()) {
        auto c = static_cast<unsigned char>(s[i]);
        std::size_t len;
        std::uint32_t cp;
        if (c < 0x80) {
            ++i;
            continue;
        } else if ((c & 0xE0) == 0xC0) {
            len = 2;
            cp = c & 0x1F;
        } else if ((c & 0xF0) == 0xE0) {
            len = 3;
            cp = c & 0x0F;
        } else if ((c & 0xF8) == 0xF0) {
            len = 4;
            cp = c & 0x07;
        } else {
            return false;
        }
        if (i + len > s.size()) return false;
        for (std::size_t k = 1; k < len; ++k) {
            auto cc = static_cast<unsigned char>(s[i + k]);
            if ((cc & 0xC0) != 0x80) return false;
            cp = (cp << 6) | (cc & 0x3F);
        }
        if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
            cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
            return false;
        }
        i += len;
    }
    return true;
}

void write_string(std::string_view s, std::string& out) {
    if (!valid_utf8(s)) fail(ErrorCode::bad_request, "string is not valid UTF-8");
    out.push_back('"');
    for (char ch : s) {
        switch (ch) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\b': out += "\\b"; break;
            case '\f': out += "\\f"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default:
                if (static_cast<unsigned char>(ch) < 0x20) {
                    static constexpr char hex[] = "0123456789abcdef";
                    out += "\\u00";
                    out.push_back(hex[(ch >> 4) & 0xF]);
                    out.push_back(hex[ch & 0xF]);
                } else {
                    out.push_back(ch);
                }
        }
    }
    out.push_back('"');
}

void write_float(double d, std::string& out) {
    if (!std::isfinite(d)) fail(ErrorCode::bad_request, "cannot serialize non-finite float");
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), d);
    std::string_view text(buf, static_cast<std::size_t>(res.ptr - buf));
    out += text;
    if (text.find_first_of(".eE") == std::string_view::npos) out += ".0";
}

void write_value(const Value& v, std::string& out) {
    switch (v.type()) {
        case ValueType::null: out += "null"; break;
        case ValueType::boolean: out += v.as_bool() ? "true" : "false"; break;
        case ValueType::integer: out += std::to_string(v.as_int()); break;
        case ValueType::floating: write_float(v.as_float(), out); break;
        case ValueType::string: write_string(v.as_string(), out); break;
        case ValueType::list: {
            out.push_back('[');
            bool first = true;
            for (const auto& e : v.as_list()) {
                if (!first) out.push_back(',');
                first = false;
                write_value(e, out);
            }
            out.push_back(']');
            break;
        }
        case ValueType::map: {
            out.push_back('{');
            bool first = true;
            for (const auto& [k, e] : v.as_map()) {
                if (!first) out.push_back(',');
                first = false;
                write_string(k, out);
                out.push_back(':');
                write_value(e, out);
            }
            out.push_back('}');
            break;
        }
    }
}

Value schema_entry(const ColumnSpec& c) {
    return Value(Map{{"description", c.description},
                     {"name", c.name},
                     {"required", c.required},
                     {"type", std::string(to_string(c.type))}});
}

Value table_value(const Table& t) {
    List rows;
    rows.reserve(t.rows.size());
    for (const auto& r : t.rows) rows.emplace_back(r);
    Map m{{"rows", Value(std::move(rows))}};
    if (t.schema) {
        List cols;
        for (const auto& c : *t.schema) cols.push_back(schema_entry(c));
        m.emplace("schema", Value(std::move(cols)));
    }
    return Value(std::move(m));
}

Value batch_value(const DataBatch& b) {
    List tables;
    tables.reserve(b.tables.size());
    for (const auto& t : b.tables) tables.push_back(table_value(t));
    return Value(Map{{"tables", Value(std::move(tables))}});
}

}  // namespace

std::string serialize_value(const Value& v) {
    std::string out;
    write_value(v, out);
    return out;
}

std::string canonical_serialize(const Table& table) {
    check_invariants(table);
    return serialize_value(table_value(table));
}

std::string canonical_serialize(const DataBatch& batch) {
    check_invariants(batch);
    return serialize_value(batch_value(batch));
}

nlohmann::json to_json(const Value& v) {
    switch (v.type()) {
        case ValueType::null: return nullptr;
        case ValueType::boolean: return v.as_bool();
        case ValueType::integer: return v.as_int();
        case ValueType::floating: return v.as_float();
        case ValueType::string: return v.as_string();
        case ValueType::list: {
            auto arr = nlohmann::json::array();
            for (const auto& e : v.as_list()) arr.push_back(to_json(e));
            return arr;
        }
        case ValueType::map: {
            auto obj = nlohmann::json::object();
            for (const auto& [k, e] : v.as_map()) obj[k] = to_json(e);
            return obj;
        }
    }
    return nullptr;
}

Value from_json(const nlohmann::json& j) {
    using T = nlohmann::json::value_t;
    switch (j.type()) {
        case T::null: return Value();
        case T::boolean: return Value(j.get<bool>());
        case T::number_integer: return Value(j.get<std::int64_t>());
        case T::number_unsigned: {
            auto u = j.get<std::uint64_t>();
            if (u > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
                fail(ErrorCode::bad_request, "integer out of 64-bit signed range");
            }
            return Value(static_cast<std::int64_t>(u));
        }
        case T::number_float: {
            double d = j.get<double>();
            if (!std::isfinite(d)) fail(ErrorCode::bad_request, "non-finite float value");
            return Value(d);
        }
        case T::string: return Value(j.get<std::string>());
        case T::array: {
            List l;
            l.reserve(j.size());
            for (const auto& e : j) l.push_back(from_json(e));
            return Value(std::move(l));
        }
        case T::object: {
            Map m;
            for (auto it = j.begin(); it != j.end(); ++it) m.emplace(it.key(), from_json(it.value()));
            return Value(std::move(m));
        }
        default: fail(ErrorCode::bad_request, "unsupported JSON value");
    }
}

Value parse_value(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorCode::bad_request, std::string("invalid JSON: ") + e.what(),
             {{"offset", e.byte}});
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::bad_request, std::string("invalid JSON: ") + e.what());
    }
    return from_json(j);
}

nlohmann::json to_json(const Table& t) { return to_json(table_value(t)); }

Table table_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("rows") || !j["rows"].is_array()) {
        fail(ErrorCode::bad_request, "table must be an object with a \"rows\" array");
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.key() != "rows" && it.key() != "schema") {
            fail(ErrorCode::bad_request, "unexpected table field \"" + it.key() + "\"");
        }
    }
    Table t = table_from_rows(j["rows"]);
    if (j.contains("schema")) t.schema = schema_from_value(from_json(j["schema"]));
    check_invariants(t);
    return t;
}

nlohmann::json to_json(const DataBatch& b) { return to_json(batch_value(b)); }

DataBatch batch_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("tables") || !j["tables"].is_array() || j.size() != 1) {
        fail(ErrorCode::bad_request, "batch must be an object with a single \"tables\" array");
    }
    DataBatch b;
    for (const auto& t : j["tables"]) b.tables.push_back(table_from_json(t));
    return b;
}

DataBatch deserialize_batch(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorCode::bad_request, std::string("invalid batch JSON: ") + e.what(),
             {{"offset", e.byte}});
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::bad_request, std::string("invalid batch JSON: ") + e.what());
    }
    return batch_from_json(j);
}

Table table_from_rows(const nlohmann::json& rows) {
    if (!rows.is_array()) fail(ErrorCode::bad_request, "rows must be a JSON array");
    Table t;
    t.rows.reserve(rows.size());
    for (const auto& r : rows) {
        if (!r.is_object()) fail(ErrorCode::bad_request, "each row must be a JSON object");
        Value v = from_json(r);
        t.rows.push_back(v.as_map());
    }
    return t;
}

}  // namespace dil
