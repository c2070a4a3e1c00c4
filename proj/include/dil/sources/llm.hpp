#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dil/core/table.hpp"

namespace dil {

class LlmBackend {
public:
    virtual ~LlmBackend() = default;
    virtual std::string id() const = 0;
    // Returns rows as produced by the model; verification is the caller's job.
    virtual Table complete(const std::string& prompt, const Schema& output_schema, const Map& properties) = 0;
    // Number of complete() invocations so far.
    virtual std::int64_t calls() const = 0;
};

// Deterministic backend driven by {pattern, response} pairs. Patterns are
// case-insensitive ECMAScript regexes searched anywhere in the prompt; the
// first match wins and no match yields an empty table. An entry with
// "unreachable": true simulates a connectivity failure.
class StubBackend final : public LlmBackend {
public:
    struct Entry {
        std::string pattern;
        std::regex re;
        Table response;
        bool unreachable = false;
    };

    explicit StubBackend(std::vector<Entry> entries, std::string id = "stub");
    static std::shared_ptr<StubBackend> from_file(const std::filesystem::path& file);
    static std::shared_ptr<StubBackend> from_json(const nlohmann::json& j);

    std::string id() const override { return id_; }
    Table complete(const std::string& prompt, const Schema& output_schema, const Map& properties) override;
    std::int64_t calls() const override { return calls_.load(); }
    const std::vector<std::string>& prompts() const { return prompts_; }  // for tests

private:
    std::vector<Entry> entries_;
    std::string id_;
    std::atomic<std::int64_t> calls_{0};
    std::mutex mu_;
    std::vector<std::string> prompts_;
};

// OpenAI-style chat-completions client. Connection: {base_url, model,
// api_key?, timeout_seconds?}. The reply content is parsed as a JSON array of
// rows (or {"rows": [...]}, or a single object).
class HttpBackend final : public LlmBackend {
public:
    explicit HttpBackend(const Map& connection);
    std::string id() const override { return "http:" + model_; }
    Table complete(const std::string& prompt, const Schema& output_schema, const Map& properties) override;
    std::int64_t calls() const override { return calls_.load(); }

private:
    std::string base_url_;
    std::string model_;
    std::string api_key_;
    int timeout_ = 30;
    std::atomic<std::int64_t> calls_{0};
};

// Parses model text into rows; unparseable text becomes one {"_raw": text}
// row so that verification reports it.
Table parse_model_rows(const std::string& text);

// Stores verified outputs as canonical text, so a hit is byte-identical.
class LlmCache {
public:
    std::optional<Table> get(const std::string& key);
    void put(const std::string& key, const Table& table);
    std::int64_t hits() const { return hits_.load(); }
    std::size_t size() const;
    nlohmann::json to_json() const;
    void load_json(const nlohmann::json& j);

private:
    mutable std::mutex mu_;
    std::map<std::string, std::string> entries_;
    std::atomic<std::int64_t> hits_{0};
};

struct PromptRequest {
    std::string task;      // nl2llm, nl2sql, query_breakdown, web_extract
    std::string question;  // already normalized
    Schema schema;
    std::vector<std::pair<std::string, std::string>> sections;  // title, text
    std::vector<std::string> feedback;                          // previous violations
};

std::string render_prompt(const PromptRequest& req);

// Trims and collapses runs of whitespace to one space.
std::string normalize_whitespace(std::string_view text);

// Single string column named after the question's head noun: the word right
// after a leading "which"/"what" when it is not a stop word, otherwise the
// last non-stop word, singularized. Falls back to "answer".
Schema auto_schema(std::string_view question);

// Extra checks run after schema validation (e.g. SQL verification); returns
// one line per violation.
using OutputVerifier = std::function<std::vector<std::string>(const Table&)>;

struct LlmCallResult {
    Table table;
    bool cache_hit = false;
    int attempts = 0;
};

// The LLM pipeline: cache lookup, backend call, schema verification plus the
// optional verifier, retries (properties.max_retries, default 2) with the
// violations appended to the prompt, cache store. Properties: max_retries,
// cache (default true), model, temperature. Throws verification_failed with
// the last report when retries run out.
LlmCallResult run_llm(LlmBackend& backend, LlmCache* cache, PromptRequest request, const Map& properties,
                      const OutputVerifier& verifier = {});

// An LLM registered as a data source (LLMDB).
class LlmSource {
public:
    LlmSource(std::string source_id, std::shared_ptr<LlmBackend> backend, std::shared_ptr<LlmCache> cache);
    const std::string& source_id() const noexcept { return id_; }
    LlmBackend& backend() const { return *backend_; }
    const std::shared_ptr<LlmBackend>& backend_ptr() const { return backend_; }
    const std::shared_ptr<LlmCache>& cache() const { return cache_; }

    // llm_query: one-table batch conforming to the (given or derived) schema.
    DataBatch query(const std::string& question, const std::optional<Schema>& output_schema, const Map& properties,
                    bool* cache_hit = nullptr) const;

private:
    std::string id_;
    std::shared_ptr<LlmBackend> backend_;
    std::shared_ptr<LlmCache> cache_;
};

// Backend from a connection map: {"backend":"stub","mapping":FILE} or
// {"backend":"http", base_url, model, api_key}.
std::shared_ptr<LlmBackend> make_llm_backend(const Map& connection, const std::filesystem::path& base_dir);

}  // namespace dil
