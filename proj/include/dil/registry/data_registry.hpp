#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dil/core/table.hpp"

namespace dil {

enum class MetadataLevel { source, database, collection, entity, relation, attribute, value };

std::string_view to_string(MetadataLevel level);
MetadataLevel parse_level(std::string_view name);
// source=1, database=2, collection/entity/relation=3, attribute=4, value=5
std::size_t path_length(MetadataLevel level);

struct Statistics {
    std::optional<std::int64_t> row_count;
    std::optional<std::int64_t> distinct_count;
    std::optional<Value> min;
    std::optional<Value> max;

    bool operator==(const Statistics&) const = default;
};

struct MetadataEntry {
    std::vector<std::string> path;
    MetadataLevel level = MetadataLevel::source;
    std::string description;
    List samples;  // at most 5
    Statistics statistics;
    std::vector<double> embedding;  // kEmbeddingDim

    std::string path_string() const;  // components joined by '/'
    bool operator==(const MetadataEntry&) const = default;
};

nlohmann::json to_json(const MetadataEntry& e);
MetadataEntry metadata_from_json(const nlohmann::json& j);

enum class Protocol { relational, vector, llm, user, web };

std::string_view to_string(Protocol p);
Protocol parse_protocol(std::string_view name);

struct SourceDescriptor {
    std::string source_id;
    Protocol protocol = Protocol::relational;
    Map connection;
    bool natural_language_capable = false;

    bool operator==(const SourceDescriptor&) const = default;
};

nlohmann::json to_json(const SourceDescriptor& d);
SourceDescriptor source_from_json(const nlohmann::json& j);

// Replaces "${NAME}" in every string of the connection map with the
// environment variable NAME (empty when unset).
Map resolve_env(const Map& connection);

// What a source reports about itself during sync; statistics are computed by
// the registry from the rows.
struct CollectionSnapshot {
    std::string name;
    std::string description;
    Schema columns;
    std::vector<Row> rows;
};

struct SourceSnapshot {
    std::string database = "main";
    std::vector<CollectionSnapshot> collections;
    std::optional<std::string> capability;  // llm / user / web sources
};

class SourceIntrospector {
public:
    virtual ~SourceIntrospector() = default;
    // Throws Error(backend_unreachable) when the source cannot be reached.
    virtual SourceSnapshot snapshot(const SourceDescriptor& source) const = 0;
};

struct SyncLog {
    std::int64_t last_sync = 0;
    std::int64_t sync_count = 0;

    bool operator==(const SyncLog&) const = default;
};

struct SearchHit {
    MetadataEntry entry;
    double score = 0.0;
    bool exact = false;
};

// Catalog of sources and their multi-level metadata. Readers work on an
// immutable snapshot; writers are serialized and publish a new snapshot, so
// a reader never observes a partially synced tree.
class DataRegistry {
public:
    DataRegistry();

    // Throws conflict on a duplicate id. Creates the source-level root entry.
    std::string register_source(SourceDescriptor descriptor);
    std::vector<SourceDescriptor> list_sources() const;  // ordered by id
    std::optional<SourceDescriptor> source(const std::string& source_id) const;

    // Rebuilds the subtree below the source root from a snapshot. Idempotent;
    // on failure the previous subtree is left untouched. Returns the subtree
    // (root first, then path order).
    std::vector<MetadataEntry> sync_source(const std::string& source_id, const SourceIntrospector& introspector,
                                           std::int64_t now = 0);

    // score = 0.5 * keyword overlap + 0.5 * cosine(embed(query), embedding);
    // entries whose last path component equals the query rank first.
    std::vector<SearchHit> search(const std::string& query, std::optional<MetadataLevel> level,
                                  std::size_t top_k) const;

    // Throws conflict when the path exists or bad_request when the path
    // length does not fit the level.
    void insert_entry(MetadataEntry entry);
    std::optional<MetadataEntry> entry(const std::vector<std::string>& path) const;
    std::vector<MetadataEntry> subtree(const std::vector<std::string>& prefix) const;
    std::vector<MetadataEntry> entries() const;
    std::size_t size() const;
    std::optional<SyncLog> sync_log(const std::string& source_id) const;

    nlohmann::json to_json() const;
    static std::unique_ptr<DataRegistry> from_json(const nlohmann::json& j);
    // Atomic: write to a temporary file, then rename over the target.
    void save(const std::filesystem::path& file) const;
    static std::unique_ptr<DataRegistry> load(const std::filesystem::path& file);

private:
    struct State {
        std::map<std::string, SourceDescriptor> sources;
        std::map<std::vector<std::string>, MetadataEntry> entries;
        std::map<std::string, SyncLog> logs;
    };

    std::shared_ptr<const State> snapshot() const;
    void publish(std::shared_ptr<const State> next);

    mutable std::mutex read_mu_;  // guards state_ pointer swaps
    std::mutex write_mu_;         // serializes writers
    std::shared_ptr<const State> state_;
};

// Builds the metadata entries for a snapshot (without the source root).
std::vector<MetadataEntry> build_metadata(const SourceDescriptor& source, const SourceSnapshot& snapshot);

// Writes text to file atomically (temp file + rename).
void atomic_write(const std::filesystem::path& file, const std::string& text);

}  // namespace dil
