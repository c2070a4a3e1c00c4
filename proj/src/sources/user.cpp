#include "dil/sources/user.hpp"

#include <cctype>
#include <charconv>

#include "dil/core/codec.hpp"
#include "dil/error.hpp"
#include "dil/sources/llm.hpp"

namespace dil {

std::string normalize_question(std::string_view question) {
    std::string out;
    for (char c : question) {
        auto u = static_cast<unsigned char>(c);
        if (std::ispunct(u)) continue;
        out.push_back(static_cast<char>(std::tolower(u)));
    }
    return normalize_whitespace(out);
}

ProfileStore::ProfileStore(std::shared_ptr<const Clock> clock) : clock_(std::move(clock)) {}

std::optional<UserProfileEntry> ProfileStore::lookup(const std::string& ns, const std::string& question) const {
    std::lock_guard lock(mu_);
    auto n = entries_.find(ns);
    if (n == entries_.end()) return std::nullopt;
    auto it = n->second.find(normalize_question(question));
    if (it == n->second.end()) return std::nullopt;
    return it->second;
}

std::optional<UserProfileEntry> ProfileStore::lookup_fresh(const std::string& ns, const std::string& question) const {
    auto e = lookup(ns, question);
    if (!e || !e->fresh(clock_->now())) return std::nullopt;
    return e;
}

void ProfileStore::store(const std::string& ns, const std::string& question, Table value, std::int64_t ttl_seconds) {
    if (ttl_seconds < 0) fail(ErrorCode::bad_request, "ttl_seconds must be non-negative");
    UserProfileEntry e{normalize_question(question), std::move(value), clock_->now(), ttl_seconds};
    std::lock_guard lock(mu_);
    entries_[ns][e.key] = std::move(e);
}

nlohmann::json ProfileStore::to_json() const {
    std::lock_guard lock(mu_);
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [ns, entries] : entries_) {
        for (const auto& [key, e] : entries) {
            j[ns][key] = {{"value", dil::to_json(e.value)}, {"asked_at", e.asked_at}, {"ttl_seconds", e.ttl_seconds}};
        }
    }
    return j;
}

void ProfileStore::load_json(const nlohmann::json& j) {
    std::lock_guard lock(mu_);
    for (auto ns = j.begin(); ns != j.end(); ++ns) {
        for (auto it = ns.value().begin(); it != ns.value().end(); ++it) {
            UserProfileEntry e{it.key(), table_from_json(it.value().at("value")), it.value().at("asked_at").get<std::int64_t>(),
                               it.value().at("ttl_seconds").get<std::int64_t>()};
            entries_[ns.key()][e.key] = std::move(e);
        }
    }
}

namespace {

Value coerce_text(const std::string& text, DeclaredType type) {
    std::string t = normalize_whitespace(text);
    if (type == DeclaredType::integer || type == DeclaredType::floating) {
        std::string digits;
        for (char c : t) {
            if (c != ',' && c != '$' && c != '_') digits.push_back(c);
        }
        std::int64_t i = 0;
        auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), i);
        if (ec == std::errc() && p == digits.data() + digits.size() && !digits.empty()) return Value(i);
        if (type == DeclaredType::floating) {
            double d = 0;
            auto [q, ec2] = std::from_chars(digits.data(), digits.data() + digits.size(), d);
            if (ec2 == std::errc() && q == digits.data() + digits.size() && !digits.empty()) return Value(d);
        }
    }
    if (type == DeclaredType::boolean) {
        std::string l = normalize_question(t);
        if (l == "yes" || l == "true") return Value(true);
        if (l == "no" || l == "false") return Value(false);
    }
    return Value(t);
}

Table rows_from(const Value& v) {
    Table t;
    if (v.is_map()) {
        t.rows.push_back(v.as_map());
    } else {
        for (const auto& r : v.as_list()) {
            if (!r.is_map()) fail(ErrorCode::bad_request, "answer rows must be objects");
            t.rows.push_back(r.as_map());
        }
    }
    return t;
}

}  // namespace

ParsedAnswer parse_user_answer(const Value& answer, const Schema& schema) {
    ParsedAnswer out;
    Value structured = answer;
    if (answer.is_string()) {
        auto text = normalize_whitespace(answer.as_string());
        if (!text.empty() && (text.front() == '{' || text.front() == '[')) {
            try {
                structured = parse_value(text);
            } catch (const Error&) {
            }
        }
    }
    bool done = false;
    if (structured.is_map() || structured.is_list()) {
        try {
            out.table = rows_from(structured);
            done = true;
        } catch (const Error&) {
        }
    }
    if (!done) {
        ColumnSpec col = schema.empty() ? ColumnSpec{"answer", DeclaredType::string, "", false} : schema.front();
        Value v = structured.is_string() ? coerce_text(structured.as_string(), col.type) : structured;
        out.table.rows.push_back(Row{{col.name, v}});
    }
    out.report = validate_schema(out.table, schema);
    if (out.report.ok()) out.table.schema = schema;
    return out;
}

}  // namespace dil
