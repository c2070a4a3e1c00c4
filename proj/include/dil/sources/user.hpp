#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>

#include "dil/core/clock.hpp"
#include "dil/core/schema.hpp"
#include "dil/core/table.hpp"

namespace dil {

inline constexpr std::int64_t kDefaultProfileTtl = 86400;

struct UserProfileEntry {
    std::string key;  // normalized question
    Table value;
    std::int64_t asked_at = 0;
    std::int64_t ttl_seconds = kDefaultProfileTtl;

    bool fresh(std::int64_t now) const { return now - asked_at < ttl_seconds; }
    bool operator==(const UserProfileEntry&) const = default;
};

// Lowercase, punctuation stripped, whitespace collapsed.
std::string normalize_question(std::string_view question);

// Stored answers per profile namespace. Writes are serialized.
class ProfileStore {
public:
    explicit ProfileStore(std::shared_ptr<const Clock> clock = system_clock());

    std::optional<UserProfileEntry> lookup_fresh(const std::string& ns, const std::string& question) const;
    std::optional<UserProfileEntry> lookup(const std::string& ns, const std::string& question) const;
    void store(const std::string& ns, const std::string& question, Table value, std::int64_t ttl_seconds);
    std::int64_t now() const { return clock_->now(); }

    nlohmann::json to_json() const;
    void load_json(const nlohmann::json& j);

private:
    std::shared_ptr<const Clock> clock_;
    mutable std::mutex mu_;
    std::map<std::string, std::map<std::string, UserProfileEntry>> entries_;
};

struct ParsedAnswer {
    Table table;
    ValidationReport report;
};

// Turns a user answer into a table: a map is one row, a list of maps is many
// rows, a string holding JSON is parsed as such, and any other text becomes a
// one-row table with a single attribute named after the schema's first column
// (coerced to its declared type when the text allows it).
ParsedAnswer parse_user_answer(const Value& answer, const Schema& schema);

}  // namespace dil
