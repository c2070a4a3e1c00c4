#include "dil/sources/catalog.hpp"

#include "dil/error.hpp"

namespace dil {

namespace {

std::string connection_string(const Map& connection, std::string_view key) {
    auto it = connection.find(key);
    return it != connection.end() && it->second.is_string() ? it->second.as_string() : "";
}

}  // namespace

SourceCatalog::SourceCatalog(std::filesystem::path base_dir, std::shared_ptr<LlmCache> cache,
                             std::shared_ptr<ProfileStore> profiles)
    : base_dir_(std::move(base_dir)), cache_(std::move(cache)), profiles_(std::move(profiles)) {}

void SourceCatalog::add(const SourceDescriptor& descriptor) {
    std::lock_guard lock(mu_);
    if (slots_.count(descriptor.source_id)) {
        fail(ErrorCode::conflict, "source \"" + descriptor.source_id + "\" already has an adapter");
    }
    SourceDescriptor resolved = descriptor;
    resolved.connection = resolve_env(descriptor.connection);
    slots_.emplace(descriptor.source_id, Slot{std::move(resolved), nullptr});
}

bool SourceCatalog::has(const std::string& source_id) const {
    std::lock_guard lock(mu_);
    return slots_.count(source_id) > 0;
}

SourceDescriptor SourceCatalog::descriptor(const std::string& source_id) const {
    std::lock_guard lock(mu_);
    auto it = slots_.find(source_id);
    if (it == slots_.end()) fail(ErrorCode::not_found, "unknown source \"" + source_id + "\"");
    return it->second.descriptor;
}

std::shared_ptr<void> SourceCatalog::build(const SourceDescriptor& d) const {
    const Map& c = d.connection;
    switch (d.protocol) {
        case Protocol::relational: return std::make_shared<RelationalSource>(d.source_id, c, base_dir_);
        case Protocol::vector: return std::make_shared<VectorStore>(c, base_dir_);
        case Protocol::llm: return std::make_shared<LlmSource>(d.source_id, make_llm_backend(c, base_dir_), cache_);
        case Protocol::web: {
            std::shared_ptr<Fetcher> fetcher;
            auto live = c.find("live");
            if (live != c.end() && live->second.is_bool() && live->second.as_bool()) {
                fetcher = std::make_shared<HttpFetcher>();
            } else {
                std::filesystem::path corpus(connection_string(c, "corpus"));
                fetcher = std::make_shared<FixtureFetcher>(corpus.is_absolute() ? corpus : base_dir_ / corpus);
            }
            std::shared_ptr<LlmBackend> extractor;
            std::string kind = connection_string(c, "extractor");
            if (kind.empty() || kind == "heuristic") {
                extractor = std::make_shared<HeuristicExtractor>();
            } else {
                extractor = llm(kind)->backend_ptr();
            }
            return std::make_shared<WebSource>(d.source_id, fetcher, extractor, cache_);
        }
        case Protocol::user: return nullptr;
    }
    return nullptr;
}

std::shared_ptr<void> SourceCatalog::adapter(const std::string& source_id, Protocol expected) const {
    std::lock_guard lock(mu_);
    auto it = slots_.find(source_id);
    if (it == slots_.end()) fail(ErrorCode::not_found, "unknown source \"" + source_id + "\"");
    if (it->second.descriptor.protocol != expected) {
        fail(ErrorCode::bad_request, "source \"" + source_id + "\" is " +
                                         std::string(to_string(it->second.descriptor.protocol)) + ", not " +
                                         std::string(to_string(expected)));
    }
    if (!it->second.adapter) it->second.adapter = build(it->second.descriptor);
    return it->second.adapter;
}

std::shared_ptr<RelationalSource> SourceCatalog::relational(const std::string& id) const {
    return std::static_pointer_cast<RelationalSource>(adapter(id, Protocol::relational));
}

std::shared_ptr<VectorStore> SourceCatalog::vector(const std::string& id) const {
    return std::static_pointer_cast<VectorStore>(adapter(id, Protocol::vector));
}

std::shared_ptr<LlmSource> SourceCatalog::llm(const std::string& id) const {
    return std::static_pointer_cast<LlmSource>(adapter(id, Protocol::llm));
}

std::shared_ptr<WebSource> SourceCatalog::web(const std::string& id) const {
    return std::static_pointer_cast<WebSource>(adapter(id, Protocol::web));
}

std::shared_ptr<LlmSource> SourceCatalog::default_llm() const {
    std::lock_guard lock(mu_);
    for (const auto& [id, slot] : slots_) {
        if (slot.descriptor.protocol == Protocol::llm) return llm(id);
    }
    fail(ErrorCode::not_found, "no llm source is registered");
}

std::shared_ptr<LlmSource> SourceCatalog::llm_for(const std::string& source_id) const {
    auto named = connection_string(descriptor(source_id).connection, "nl_backend");
    return named.empty() ? default_llm() : llm(named);
}

std::int64_t SourceCatalog::user_ttl(const std::string& source_id) const {
    auto d = descriptor(source_id);
    auto it = d.connection.find("ttl_seconds");
    return it != d.connection.end() && it->second.is_int() ? it->second.as_int() : kDefaultProfileTtl;
}

SourceSnapshot SourceCatalog::snapshot(const SourceDescriptor& source) const {
    auto d = descriptor(source.source_id);
    std::string capability = connection_string(d.connection, "capability");
    switch (d.protocol) {
        case Protocol::relational: return relational(d.source_id)->snapshot();
        case Protocol::vector: return vector(d.source_id)->snapshot();
        case Protocol::llm:
            llm(d.source_id);
            if (capability.empty()) capability = "answers commonsense and world-knowledge questions with structured rows";
            break;
        case Protocol::user:
            if (capability.empty()) capability = "the user: personal preferences, constraints and profile information";
            break;
        case Protocol::web:
            web(d.source_id);
            if (capability.empty()) capability = "web pages: on-demand structured extraction from documents";
            break;
    }
    SourceSnapshot s;
    s.capability = capability;
    return s;
}

void SourceCatalog::set_llm_backend(const std::string& source_id, std::shared_ptr<LlmBackend> backend) {
    std::lock_guard lock(mu_);
    auto it = slots_.find(source_id);
    if (it == slots_.end() || it->second.descriptor.protocol != Protocol::llm) {
        fail(ErrorCode::not_found, "unknown llm source \"" + source_id + "\"");
    }
    it->second.adapter = std::make_shared<LlmSource>(source_id, std::move(backend), cache_);
}

}  // namespace dil
