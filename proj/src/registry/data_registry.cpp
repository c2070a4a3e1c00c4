#include "dil/registry/data_registry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <unordered_set>

#include "dil/core/codec.hpp"
#include "dil/error.hpp"
#include "dil/registry/embedding.hpp"

namespace dil {

std::string_view to_string(MetadataLevel level) {
    switch (level) {
        case MetadataLevel::source: return "source";
        case MetadataLevel::database: return "database";
        case MetadataLevel::collection: return "collection";
        case MetadataLevel::entity: return "entity";
        case MetadataLevel::relation: return "relation";
        case MetadataLevel::attribute: return "attribute";
        case MetadataLevel::value: return "value";
    }
    return "source";
}

MetadataLevel parse_level(std::string_view name) {
    for (auto l : {MetadataLevel::source, MetadataLevel::database, MetadataLevel::collection, MetadataLevel::entity,
                   MetadataLevel::relation, MetadataLevel::attribute, MetadataLevel::value}) {
        if (to_string(l) == name) return l;
    }
    fail(ErrorCode::bad_request, "unknown metadata level \"" + std::string(name) + "\"");
}

std::size_t path_length(MetadataLevel level) {
    switch (level) {
        case MetadataLevel::source: return 1;
        case MetadataLevel::database: return 2;
        case MetadataLevel::collection:
        case MetadataLevel::entity:
        case MetadataLevel::relation: return 3;
        case MetadataLevel::attribute: return 4;
        case MetadataLevel::value: return 5;
    }
    return 1;
}

std::string MetadataEntry::path_string() const {
    std::string out;
    for (std::size_t i = 0; i < path.size(); ++i) {
        if (i) out.push_back('/');
        out += path[i];
    }
    return out;
}

nlohmann::json to_json(const MetadataEntry& e) {
    nlohmann::json stats = nlohmann::json::object();
    if (e.statistics.row_count) stats["row_count"] = *e.statistics.row_count;
    if (e.statistics.distinct_count) stats["distinct_count"] = *e.statistics.distinct_count;
    if (e.statistics.min) stats["min"] = to_json(*e.statistics.min);
    if (e.statistics.max) stats["max"] = to_json(*e.statistics.max);
    return {{"path", e.path},
            {"level", std::string(to_string(e.level))},
            {"description", e.description},
            {"samples", to_json(Value(e.samples))},
            {"statistics", stats},
            {"embedding", e.embedding}};
}

MetadataEntry metadata_from_json(const nlohmann::json& j) {
    MetadataEntry e;
    e.path = j.at("path").get<std::vector<std::string>>();
    e.level = parse_level(j.at("level").get<std::string>());
    e.description = j.value("description", "");
    if (j.contains("samples")) e.samples = from_json(j["samples"]).as_list();
    if (j.contains("statistics")) {
        const auto& s = j["statistics"];
        if (s.contains("row_count")) e.statistics.row_count = s["row_count"].get<std::int64_t>();
        if (s.contains("distinct_count")) e.statistics.distinct_count = s["distinct_count"].get<std::int64_t>();
        if (s.contains("min")) e.statistics.min = from_json(s["min"]);
        if (s.contains("max")) e.statistics.max = from_json(s["max"]);
    }
    if (j.contains("embedding")) e.embedding = j["embedding"].get<std::vector<double>>();
    return e;
}

std::string_view to_string(Protocol p) {
    switch (p) {
        case Protocol::relational: return "relational";
        case Protocol::vector: return "vector";
        case Protocol::llm: return "llm";
        case Protocol::user: return "user";
        case Protocol::web: return "web";
    }
    return "relational";
}

Protocol parse_protocol(std::string_view name) {
    for (auto p : {Protocol::relational, Protocol::vector, Protocol::llm, Protocol::user, Protocol::web}) {
        if (to_string(p) == name) return p;
    }
    fail(ErrorCode::bad_request, "unknown source protocol \"" + std::string(name) + "\"");
}

nlohmann::json to_json(const SourceDescriptor& d) {
    return {{"source_id", d.source_id},
            {"protocol", std::string(to_string(d.protocol))},
            {"connection", to_json(Value(d.connection))},
            {"natural_language_capable", d.natural_language_capable}};
}

SourceDescriptor source_from_json(const nlohmann::json& j) {
    SourceDescriptor d;
    if (!j.is_object() || !j.contains("source_id") || !j.contains("protocol")) {
        fail(ErrorCode::bad_request, "source descriptor needs source_id and protocol");
    }
    d.source_id = j["source_id"].get<std::string>();
    if (d.source_id.empty()) fail(ErrorCode::bad_request, "source_id must be non-empty");
    d.protocol = parse_protocol(j["protocol"].get<std::string>());
    if (j.contains("connection")) d.connection = from_json(j["connection"]).as_map();
    d.natural_language_capable = j.value("natural_language_capable", d.protocol != Protocol::relational &&
                                                                          d.protocol != Protocol::vector);
    return d;
}

namespace {

std::string substitute_env(const std::string& s) {
    std::string out;
    std::size_t i = 0;
    while (i < s.size()) {
        auto start = s.find("${", i);
        if (start == std::string::npos) break;
        auto end = s.find('}', start + 2);
        if (end == std::string::npos) break;
        out.append(s, i, start - i);
        std::string name = s.substr(start + 2, end - start - 2);
        if (const char* v = std::getenv(name.c_str())) out += v;
        i = end + 1;
    }
    out.append(s, i, std::string::npos);
    return out;
}

Value resolve_value(const Value& v) {
    if (v.is_string()) return Value(substitute_env(v.as_string()));
    if (v.is_list()) {
        List l;
        for (const auto& e : v.as_list()) l.push_back(resolve_value(e));
        return Value(std::move(l));
    }
    if (v.is_map()) {
        Map m;
        for (const auto& [k, e] : v.as_map()) m.emplace(k, resolve_value(e));
        return Value(std::move(m));
    }
    return v;
}

std::string joined_text(const std::vector<std::string>& path, const std::string& description) {
    std::string text;
    for (const auto& p : path) text += p + " ";
    return text + description;
}

MetadataEntry make_entry(std::vector<std::string> path, MetadataLevel level, std::string description) {
    MetadataEntry e;
    e.path = std::move(path);
    e.level = level;
    e.description = std::move(description);
    e.embedding = embed(joined_text(e.path, e.description));
    return e;
}

MetadataEntry root_entry(const SourceDescriptor& d) {
    std::string desc = std::string(to_string(d.protocol)) + " source " + d.source_id;
    if (const auto* given = d.connection.count("description") ? &d.connection.at("description") : nullptr;
        given && given->is_string()) {
        desc += ": " + given->as_string();
    }
    if (d.natural_language_capable) desc += " (accepts natural language queries)";
    return make_entry({d.source_id}, MetadataLevel::source, desc);
}

bool starts_with(const std::vector<std::string>& path, const std::vector<std::string>& prefix) {
    return path.size() >= prefix.size() && std::equal(prefix.begin(), prefix.end(), path.begin());
}

}  // namespace

Map resolve_env(const Map& connection) { return resolve_value(Value(connection)).as_map(); }

std::vector<MetadataEntry> build_metadata(const SourceDescriptor& source, const SourceSnapshot& snapshot) {
    std::vector<MetadataEntry> out;
    const std::string& sid = source.source_id;
    if (snapshot.capability) {
        out.push_back(make_entry({sid, "capability"}, MetadataLevel::database, *snapshot.capability));
    }
    if (snapshot.collections.empty()) return out;
    out.push_back(make_entry({sid, snapshot.database}, MetadataLevel::database,
                             "database " + snapshot.database + " of " + std::string(to_string(source.protocol)) +
                                 " source " + sid));
    for (const auto& c : snapshot.collections) {
        const auto rows = static_cast<std::int64_t>(c.rows.size());
        auto coll = make_entry({sid, snapshot.database, c.name}, MetadataLevel::collection,
                               c.description.empty() ? "collection " + c.name : c.description);
        coll.statistics.row_count = rows;
        for (std::size_t i = 0; i < c.rows.size() && i < 5; ++i) coll.samples.emplace_back(c.rows[i]);
        out.push_back(std::move(coll));
        // Relational collections describe their columns; vector collections
        // stop at the collection level.
        if (source.protocol != Protocol::relational) continue;
        for (const auto& col : c.columns) {
            std::string desc = "column " + col.name + " (" + std::string(to_string(col.type)) + ") of " + c.name;
            if (!col.description.empty()) desc += ": " + col.description;
            auto attr = make_entry({sid, snapshot.database, c.name, col.name}, MetadataLevel::attribute, desc);
            std::unordered_set<std::string> distinct;
            std::optional<Value> lo, hi;
            for (const auto& row : c.rows) {
                auto it = row.find(col.name);
                if (it == row.end() || it->second.is_null()) continue;
                const Value& v = it->second;
                if (distinct.insert(normalized_key(v)).second && attr.samples.size() < 5) attr.samples.push_back(v);
                if (!lo || compare(v, *lo) < 0) lo = v;
                if (!hi || compare(v, *hi) > 0) hi = v;
            }
            attr.statistics.row_count = rows;
            attr.statistics.distinct_count = static_cast<std::int64_t>(distinct.size());
            attr.statistics.min = lo;
            attr.statistics.max = hi;
            out.push_back(std::move(attr));
        }
    }
    return out;
}

DataRegistry::DataRegistry() : state_(std::make_shared<const State>()) {}

std::shared_ptr<const DataRegistry::State> DataRegistry::snapshot() const {
    std::lock_guard lock(read_mu_);
    return state_;
}

void DataRegistry::publish(std::shared_ptr<const State> next) {
    std::lock_guard lock(read_mu_);
    state_ = std::move(next);
}

std::string DataRegistry::register_source(SourceDescriptor descriptor) {
    if (descriptor.source_id.empty()) fail(ErrorCode::bad_request, "source_id must be non-empty");
    std::lock_guard wlock(write_mu_);
    auto next = std::make_shared<State>(*snapshot());
    if (next->sources.count(descriptor.source_id)) {
        fail(ErrorCode::conflict, "source \"" + descriptor.source_id + "\" is already registered");
    }
    auto root = root_entry(descriptor);
    if (next->entries.count(root.path)) {
        fail(ErrorCode::conflict, "metadata path \"" + root.path_string() + "\" already exists");
    }
    next->entries.emplace(root.path, root);
    std::string id = descriptor.source_id;
    next->sources.emplace(id, std::move(descriptor));
    publish(std::move(next));
    return id;
}

std::vector<SourceDescriptor> DataRegistry::list_sources() const {
    auto s = snapshot();
    std::vector<SourceDescriptor> out;
    for (const auto& [_, d] : s->sources) out.push_back(d);
    return out;
}

std::optional<SourceDescriptor> DataRegistry::source(const std::string& source_id) const {
    auto s = snapshot();
    auto it = s->sources.find(source_id);
    if (it == s->sources.end()) return std::nullopt;
    return it->second;
}

std::vector<MetadataEntry> DataRegistry::sync_source(const std::string& source_id,
                                                     const SourceIntrospector& introspector, std::int64_t now) {
    std::lock_guard wlock(write_mu_);
    auto current = snapshot();
    auto it = current->sources.find(source_id);
    if (it == current->sources.end()) fail(ErrorCode::not_found, "unknown source \"" + source_id + "\"");
    const SourceDescriptor& desc = it->second;

    // Everything that can fail happens before the new state is assembled.
    SourceSnapshot snap = introspector.snapshot(desc);
    std::vector<MetadataEntry> built = build_metadata(desc, snap);

    auto next = std::make_shared<State>(*current);
    std::vector<std::string> root_path{source_id};
    for (auto e = next->entries.begin(); e != next->entries.end();) {
        if (e->first.size() > 1 && starts_with(e->first, root_path)) {
            e = next->entries.erase(e);
        } else {
            ++e;
        }
    }
    next->entries[root_path] = root_entry(desc);
    for (auto& e : built) {
        if (e.path.size() != path_length(e.level)) {
            fail(ErrorCode::internal, "metadata path \"" + e.path_string() + "\" does not fit its level");
        }
        if (!next->entries.emplace(e.path, e).second) {
            fail(ErrorCode::conflict, "duplicate metadata path \"" + e.path_string() + "\"");
        }
    }
    auto& log = next->logs[source_id];
    log.last_sync = now;
    log.sync_count += 1;
    publish(next);

    std::vector<MetadataEntry> out;
    for (const auto& [path, e] : next->entries) {
        if (starts_with(path, root_path)) out.push_back(e);
    }
    return out;
}

std::vector<SearchHit> DataRegistry::search(const std::string& query, std::optional<MetadataLevel> level,
                                            std::size_t top_k) const {
    if (top_k < 1) fail(ErrorCode::bad_request, "top_k must be at least 1");
    auto s = snapshot();
    auto q_tokens_vec = tokenize(query);
    std::set<std::string> q_tokens(q_tokens_vec.begin(), q_tokens_vec.end());
    auto q_embedding = embed(query);
    std::string q_norm;
    for (const auto& t : q_tokens_vec) q_norm += (q_norm.empty() ? "" : " ") + t;

    std::vector<SearchHit> hits;
    for (const auto& [path, e] : s->entries) {
        if (level && e.level != *level) continue;
        double keyword = 0.0;
        if (!q_tokens.empty()) {
            auto e_tokens_vec = tokenize(joined_text(e.path, e.description));
            std::set<std::string> e_tokens(e_tokens_vec.begin(), e_tokens_vec.end());
            std::size_t overlap = 0;
            for (const auto& t : q_tokens) overlap += e_tokens.count(t);
            keyword = static_cast<double>(overlap) / static_cast<double>(q_tokens.size());
        }
        double score = 0.5 * keyword + 0.5 * cosine_similarity(q_embedding, e.embedding);
        // Rounded so that mathematically equal scores tie exactly and fall
        // through to the path order.
        score = std::round(score * 1e12) / 1e12;
        std::string last;
        for (const auto& t : tokenize(path.back())) last += (last.empty() ? "" : " ") + t;
        bool exact = !q_norm.empty() && last == q_norm;
        hits.push_back({e, score, exact});
    }
    std::stable_sort(hits.begin(), hits.end(), [](const SearchHit& a, const SearchHit& b) {
        if (a.exact != b.exact) return a.exact;
        if (a.score != b.score) return a.score > b.score;
        return a.entry.path < b.entry.path;
    });
    if (hits.size() > top_k) hits.resize(top_k);
    return hits;
}

void DataRegistry::insert_entry(MetadataEntry entry) {
    if (entry.path.empty() || entry.path.size() != path_length(entry.level)) {
        fail(ErrorCode::bad_request, "path length does not match level " + std::string(to_string(entry.level)));
    }
    if (entry.statistics.row_count && entry.statistics.distinct_count &&
        *entry.statistics.distinct_count > *entry.statistics.row_count) {
        fail(ErrorCode::bad_request, "distinct_count exceeds row_count");
    }
    if (entry.samples.size() > 5) fail(ErrorCode::bad_request, "at most 5 samples per entry");
    if (entry.embedding.empty()) entry.embedding = embed(joined_text(entry.path, entry.description));
    std::lock_guard wlock(write_mu_);
    auto next = std::make_shared<State>(*snapshot());
    if (!next->entries.emplace(entry.path, entry).second) {
        fail(ErrorCode::conflict, "metadata path \"" + entry.path_string() + "\" already exists");
    }
    publish(std::move(next));
}

std::optional<MetadataEntry> DataRegistry::entry(const std::vector<std::string>& path) const {
    auto s = snapshot();
    auto it = s->entries.find(path);
    if (it == s->entries.end()) return std::nullopt;
    return it->second;
}

std::vector<MetadataEntry> DataRegistry::subtree(const std::vector<std::string>& prefix) const {
    auto s = snapshot();
    std::vector<MetadataEntry> out;
    for (const auto& [path, e] : s->entries) {
        if (starts_with(path, prefix)) out.push_back(e);
    }
    return out;
}

std::vector<MetadataEntry> DataRegistry::entries() const { return subtree({}); }

std::size_t DataRegistry::size() const { return snapshot()->entries.size(); }

std::optional<SyncLog> DataRegistry::sync_log(const std::string& source_id) const {
    auto s = snapshot();
    auto it = s->logs.find(source_id);
    if (it == s->logs.end()) return std::nullopt;
    return it->second;
}

nlohmann::json DataRegistry::to_json() const {
    auto s = snapshot();
    nlohmann::json j = {{"version", 1}};
    j["sources"] = nlohmann::json::array();
    for (const auto& [_, d] : s->sources) j["sources"].push_back(dil::to_json(d));
    j["entries"] = nlohmann::json::array();
    for (const auto& [_, e] : s->entries) j["entries"].push_back(dil::to_json(e));
    j["sync_log"] = nlohmann::json::object();
    for (const auto& [id, log] : s->logs) {
        j["sync_log"][id] = {{"last_sync", log.last_sync}, {"sync_count", log.sync_count}};
    }
    return j;
}

std::unique_ptr<DataRegistry> DataRegistry::from_json(const nlohmann::json& j) {
    auto reg = std::make_unique<DataRegistry>();
    auto state = std::make_shared<State>();
    try {
        for (const auto& d : j.at("sources")) {
            auto desc = source_from_json(d);
            state->sources.emplace(desc.source_id, desc);
        }
        for (const auto& e : j.at("entries")) {
            auto entry = metadata_from_json(e);
            if (!state->entries.emplace(entry.path, entry).second) {
                fail(ErrorCode::bad_request, "duplicate metadata path \"" + entry.path_string() + "\"");
            }
        }
        if (j.contains("sync_log")) {
            for (auto it = j["sync_log"].begin(); it != j["sync_log"].end(); ++it) {
                state->logs[it.key()] = {it.value().value("last_sync", std::int64_t{0}),
                                         it.value().value("sync_count", std::int64_t{0})};
            }
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::bad_request, std::string("malformed data registry: ") + e.what());
    }
    reg->state_ = std::move(state);
    return reg;
}

void atomic_write(const std::filesystem::path& file, const std::string& text) {
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    auto tmp = file;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorCode::internal, "cannot write " + tmp.string());
        out << text;
        if (!out.flush()) fail(ErrorCode::internal, "cannot write " + tmp.string());
    }
    std::filesystem::rename(tmp, file);
}

void DataRegistry::save(const std::filesystem::path& file) const { atomic_write(file, to_json().dump(2) + "\n"); }

std::unique_ptr<DataRegistry> DataRegistry::load(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) fail(ErrorCode::not_found, "cannot read " + file.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::bad_request, "malformed " + file.string() + ": " + e.what());
    }
    return from_json(j);
}

}  // namespace dil
