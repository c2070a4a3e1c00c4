#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <string>

#include "dil/sources/llm.hpp"

namespace dil {

class Fetcher {
public:
    virtual ~Fetcher() = default;
    // Document text for a URL or fixture key; throws not_found when missing.
    virtual std::string fetch(const std::string& key) const = 0;
};

// Reads documents from a local corpus: index.json maps keys to files;
// without an entry the key itself is tried as a relative file name.
class FixtureFetcher final : public Fetcher {
public:
    explicit FixtureFetcher(std::filesystem::path corpus);
    std::string fetch(const std::string& key) const override;

private:
    std::filesystem::path corpus_;
    nlohmann::json index_;
};

// Live HTTP(S) GET; only constructed when a web source sets "live": true.
class HttpFetcher final : public Fetcher {
public:
    std::string fetch(const std::string& url) const override;
};

// Offline extraction backend for listing-style pages: the document is split
// into blank-line separated blocks and each schema attribute is read from a
// "Label: value" line whose label equals the attribute name (underscores as
// spaces, case-insensitive). Blocks that mention no attribute are skipped;
// numeric attributes take the first number on the line.
class HeuristicExtractor final : public LlmBackend {
public:
    std::string id() const override { return "heuristic-extractor"; }
    Table complete(const std::string& prompt, const Schema& output_schema, const Map& properties) override;
    std::int64_t calls() const override { return calls_.load(); }

private:
    std::atomic<std::int64_t> calls_{0};
};

// The section markers render_prompt() places around an inlined document.
inline constexpr std::string_view kDocumentOpen = "<<<\n";
inline constexpr std::string_view kDocumentClose = "\n>>>";

class WebSource {
public:
    WebSource(std::string source_id, std::shared_ptr<Fetcher> fetcher, std::shared_ptr<LlmBackend> extractor,
              std::shared_ptr<LlmCache> cache);
    const std::string& source_id() const noexcept { return id_; }

    // web_extract: fetch, then schema-guided extraction with the document
    // inlined in the prompt. An empty document yields an empty table.
    DataBatch extract(const std::string& key, const Schema& output_schema, const Map& properties) const;

private:
    std::string id_;
    std::shared_ptr<Fetcher> fetcher_;
    std::shared_ptr<LlmBackend> extractor_;
    std::shared_ptr<LlmCache> cache_;
};

}  // namespace dil
