#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "dil/registry/data_registry.hpp"
#include "dil/sources/llm.hpp"
#include "dil/sources/relational.hpp"
#include "dil/sources/user.hpp"
#include "dil/sources/vector_store.hpp"
#include "dil/sources/web.hpp"

namespace dil {

// Source adapters by id. Adapters are built lazily from their descriptors,
// so a source can be registered while its backend is down; the connection
// error surfaces on first use (sync or query).
class SourceCatalog final : public SourceIntrospector {
public:
    SourceCatalog(std::filesystem::path base_dir, std::shared_ptr<LlmCache> cache,
                  std::shared_ptr<ProfileStore> profiles);

    void add(const SourceDescriptor& descriptor);
    bool has(const std::string& source_id) const;
    SourceDescriptor descriptor(const std::string& source_id) const;  // throws not_found

    // Throw not_found for unknown ids and bad_request for a protocol mismatch.
    std::shared_ptr<RelationalSource> relational(const std::string& source_id) const;
    std::shared_ptr<VectorStore> vector(const std::string& source_id) const;
    std::shared_ptr<LlmSource> llm(const std::string& source_id) const;
    std::shared_ptr<WebSource> web(const std::string& source_id) const;

    // LLM used to write SQL for a relational source: its "nl_backend"
    // connection entry, else the first llm source by id.
    std::shared_ptr<LlmSource> llm_for(const std::string& source_id) const;
    // First llm source by id; throws not_found when none is registered.
    std::shared_ptr<LlmSource> default_llm() const;
    // Profile TTL configured on a user source ("ttl_seconds"), else the default.
    std::int64_t user_ttl(const std::string& source_id) const;

    SourceSnapshot snapshot(const SourceDescriptor& source) const override;

    LlmCache& cache() const { return *cache_; }
    const std::shared_ptr<LlmCache>& cache_ptr() const { return cache_; }
    ProfileStore& profiles() const { return *profiles_; }
    const std::filesystem::path& base_dir() const { return base_dir_; }

    // Swaps in a backend for an llm source (tests, benchmarks).
    void set_llm_backend(const std::string& source_id, std::shared_ptr<LlmBackend> backend);

private:
    struct Slot {
        SourceDescriptor descriptor;
        std::shared_ptr<void> adapter;
    };
    std::shared_ptr<void> adapter(const std::string& source_id, Protocol expected) const;
    std::shared_ptr<void> build(const SourceDescriptor& d) const;

    std::filesystem::path base_dir_;
    std::shared_ptr<LlmCache> cache_;
    std::shared_ptr<ProfileStore> profiles_;
    mutable std::recursive_mutex mu_;
    mutable std::map<std::string, Slot> slots_;
};

}  // namespace dil
