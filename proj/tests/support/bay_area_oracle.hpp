#pragma once

// Brute-force answer to the bay-area question straight from the fixture
// files: job rows whose title mentions "Data Scientist", located in one of
// the stub's Bay Area locations, paying at least the scripted minimum. Each
// row also carries the user's answer attributes, as a join with it would.

#include <algorithm>
#include <cctype>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "support/fixture_env.hpp"

namespace dil::testing {

inline std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

inline nlohmann::json bay_area_answer() {
    return read_json(kFixtures / "answers/bay_area.json")["what jobs are suitable for me?"];
}

inline nlohmann::json bay_area_oracle_rows() {
    auto db = read_json(kFixtures / "relational/jobs_db.json")["tables"][0];
    std::set<std::string> bay;
    for (const auto& e : read_json(kFixtures / "llm/stub_mapping.json")) {
        if (lower(e["pattern"].get<std::string>()).find("which locations are considered bay area") == std::string::npos) continue;
        for (const auto& r : e["response"]) bay.insert(r["location"].get<std::string>());
    }
    auto answer = bay_area_answer();
    nlohmann::json out = nlohmann::json::array();
    for (const auto& raw : db["rows"]) {
        nlohmann::json row = nlohmann::json::object();
        for (std::size_t i = 0; i < db["columns"].size(); ++i) row[db["columns"][i]["name"].get<std::string>()] = raw[i];
        if (lower(row["title"].get<std::string>()).find("data scientist") == std::string::npos) continue;
        if (!bay.count(row["location"].get<std::string>())) continue;
        if (row["salary"].get<std::int64_t>() < answer["min_salary"].get<std::int64_t>()) continue;
        for (const auto& [k, v] : answer.items()) row[k] = v;
        out.push_back(row);
    }
    return out;
}

}  // namespace dil::testing
