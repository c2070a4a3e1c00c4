#include "dil/sources/llm.hpp"

#include <cctype>
#include <fstream>
#include <set>

#include <httplib.h>

#include "dil/core/codec.hpp"
#include "dil/core/digest.hpp"
#include "dil/core/schema.hpp"
#include "dil/error.hpp"
#include "dil/registry/embedding.hpp"
#include "dil/sources/prompt_template.hpp"

namespace dil {

namespace {

Table response_table(const nlohmann::json& j) {
    if (j.is_array()) return table_from_rows(j);
    if (j.is_object() && j.contains("rows")) return table_from_rows(j["rows"]);
    if (j.is_object()) return table_from_rows(nlohmann::json::array({j}));
    fail(ErrorCode::bad_request, "stub response must be a list of rows or {\"rows\": [...]}");
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
    for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
        s.replace(pos, from.size(), to);
    }
}

const Value* prop(const Map& props, std::string_view name) {
    auto it = props.find(name);
    return it == props.end() || it->second.is_null() ? nullptr : &it->second;
}

}  // namespace

StubBackend::StubBackend(std::vector<Entry> entries, std::string id) : entries_(std::move(entries)), id_(std::move(id)) {}

std::shared_ptr<StubBackend> StubBackend::from_json(const nlohmann::json& j) {
    if (!j.is_array()) fail(ErrorCode::bad_request, "stub mapping must be a list of {pattern, response}");
    std::vector<Entry> entries;
    for (const auto& e : j) {
        Entry entry;
        entry.pattern = e.at("pattern").get<std::string>();
        try {
            entry.re = std::regex(entry.pattern, std::regex::ECMAScript | std::regex::icase);
        } catch (const std::regex_error& err) {
            fail(ErrorCode::bad_request, "invalid stub pattern \"" + entry.pattern + "\": " + err.what());
        }
        entry.unreachable = e.value("unreachable", false);
        if (e.contains("response")) entry.response = response_table(e["response"]);
        entries.push_back(std::move(entry));
    }
    return std::make_shared<StubBackend>(std::move(entries));
}

std::shared_ptr<StubBackend> StubBackend::from_file(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) fail(ErrorCode::backend_unreachable, "stub mapping not found: " + file.string());
    try {
        return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::bad_request, "malformed stub mapping " + file.string() + ": " + e.what());
    }
}

Table StubBackend::complete(const std::string& prompt, const Schema&, const Map&) {
    ++calls_;
    {
        std::lock_guard lock(mu_);
        prompts_.push_back(prompt);
    }
    for (const auto& e : entries_) {
        if (std::regex_search(prompt, e.re)) {
            if (e.unreachable) fail(ErrorCode::backend_unreachable, "stub backend unreachable for /" + e.pattern + "/");
            return e.response;
        }
    }
    return {};
}

Table parse_model_rows(const std::string& text) {
    auto start = text.find_first_of("[{");
    if (start != std::string::npos) {
        auto end = text.find_last_of("]}");
        if (end != std::string::npos && end > start) {
            try {
                return response_table(nlohmann::json::parse(text.substr(start, end - start + 1)));
            } catch (const std::exception&) {
            }
        }
    }
    Table t;
    t.rows.push_back(Row{{"_raw", Value(text)}});
    return t;
}

HttpBackend::HttpBackend(const Map& connection) {
    auto get = [&](std::string_view key) -> std::string {
        const Value* v = prop(connection, key);
        return v && v->is_string() ? v->as_string() : "";
    };
    base_url_ = get("base_url");
    model_ = get("model");
    api_key_ = get("api_key");
    if (const Value* t = prop(connection, "timeout_seconds")) timeout_ = static_cast<int>(t->as_int());
    if (base_url_.empty() || model_.empty()) fail(ErrorCode::bad_request, "http LLM backend needs base_url and model");
    while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

Table HttpBackend::complete(const std::string& prompt, const Schema&, const Map& properties) {
    ++calls_;
    auto scheme_end = base_url_.find("://");
    auto path_start = base_url_.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    std::string origin = base_url_.substr(0, path_start);
    std::string path = (path_start == std::string::npos ? "" : base_url_.substr(path_start)) + "/chat/completions";

    nlohmann::json body = {{"model", model_}, {"messages", {{{"role", "user"}, {"content", prompt}}}}};
    if (const Value* t = prop(properties, "temperature")) body["temperature"] = *t->number();
    httplib::Client client(origin);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res) fail(ErrorCode::backend_unreachable, "LLM backend unreachable: " + httplib::to_string(res.error()));
    if (res->status != 200) {
        fail(ErrorCode::backend_unreachable, "LLM backend returned HTTP " + std::to_string(res->status));
    }
    try {
        auto j = nlohmann::json::parse(res->body);
        return parse_model_rows(j.at("choices").at(0).at("message").at("content").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::backend_unreachable, std::string("malformed LLM backend reply: ") + e.what());
    }
}

std::optional<Table> LlmCache::get(const std::string& key) {
    std::string text;
    {
        std::lock_guard lock(mu_);
        auto it = entries_.find(key);
        if (it == entries_.end()) return std::nullopt;
        text = it->second;
    }
    ++hits_;
    return deserialize_batch(text).tables.at(0);
}

void LlmCache::put(const std::string& key, const Table& table) {
    auto text = canonical_serialize(DataBatch::single(table));
    std::lock_guard lock(mu_);
    entries_[key] = std::move(text);
}

std::size_t LlmCache::size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
}

nlohmann::json LlmCache::to_json() const {
    std::lock_guard lock(mu_);
    return entries_;
}

void LlmCache::load_json(const nlohmann::json& j) {
    std::lock_guard lock(mu_);
    for (auto it = j.begin(); it != j.end(); ++it) entries_[it.key()] = it.value().get<std::string>();
}

std::string normalize_whitespace(std::string_view text) {
    std::string out;
    bool space = false;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            space = !out.empty();
        } else {
            if (space) out.push_back(' ');
            space = false;
            out.push_back(c);
        }
    }
    return out;
}

std::string render_prompt(const PromptRequest& req) {
    std::string sections;
    for (const auto& [title, text] : req.sections) sections += title + ":\n" + text + "\n";
    std::string schema;
    for (const auto& c : req.schema) {
        schema += "- " + c.name + ": " + std::string(to_string(c.type));
        if (c.required) schema += " (required)";
        if (!c.description.empty()) schema += " -- " + c.description;
        schema += "\n";
    }
    std::string feedback;
    if (!req.feedback.empty()) {
        feedback = "The previous answer was rejected:\n";
        for (const auto& f : req.feedback) feedback += "- " + f + "\n";
    }
    std::string out(kPromptTemplateV1);
    replace_all(out, "{task}", req.task);
    replace_all(out, "{question}", req.question);
    replace_all(out, "{sections}", sections);
    replace_all(out, "{schema}", schema);
    replace_all(out, "{feedback}", feedback);
    return out;
}

namespace {

const std::set<std::string>& stop_words() {
    static const std::set<std::string> words = {
        "a",     "about", "all",   "an",    "and",   "any",   "are",   "as",    "at",    "be",    "been",  "being",
        "by",    "can",   "could", "did",   "do",    "does",  "find",  "for",   "from",  "give",  "he",    "how",
        "i",     "in",    "into",  "is",    "it",    "its",   "list",  "me",    "mine",  "my",    "of",    "on",
        "or",    "our",   "please", "she",  "should", "show", "some",  "than",  "that",  "the",   "their", "them",
        "there", "these", "they",  "this",  "those", "to",    "was",   "we",    "were",  "what",  "when",  "where",
        "which", "who",   "whom",  "whose", "why",   "will",  "with",  "would", "you",   "your"};
    return words;
}

std::string singular(std::string w) {
    auto ends = [&](std::string_view s) { return w.size() > s.size() && w.compare(w.size() - s.size(), s.size(), s) == 0; };
    if (ends("ies") && w.size() > 4) return w.substr(0, w.size() - 3) + "y";
    if (ends("sses") || ends("xes") || ends("ches") || ends("shes")) return w.substr(0, w.size() - 2);
    if (ends("ss") || ends("us") || ends("is")) return w;
    if (ends("s") && w.size() > 3) return w.substr(0, w.size() - 1);
    return w;
}

}  // namespace

Schema auto_schema(std::string_view question) {
    auto tokens = tokenize(question);
    const auto& stop = stop_words();
    std::string head;
    if (tokens.size() >= 2 && (tokens[0] == "which" || tokens[0] == "what") && !stop.count(tokens[1])) {
        head = tokens[1];
    } else {
        for (const auto& t : tokens) {
            if (!stop.count(t) && !std::isdigit(static_cast<unsigned char>(t[0]))) head = t;
        }
    }
    ColumnSpec c;
    c.name = head.empty() ? "answer" : singular(head);
    c.type = DeclaredType::string;
    return {c};
}

LlmCallResult run_llm(LlmBackend& backend, LlmCache* cache, PromptRequest request, const Map& properties,
                      const OutputVerifier& verifier) {
    std::int64_t max_retries = 2;
    if (const Value* v = prop(properties, "max_retries")) max_retries = v->as_int();
    if (max_retries < 0) fail(ErrorCode::bad_request, "max_retries must be non-negative");
    bool use_cache = cache != nullptr;
    if (const Value* v = prop(properties, "cache")) use_cache = use_cache && v->as_bool();

    request.question = normalize_whitespace(request.question);
    request.feedback.clear();
    Map key_parts{{"prompt", render_prompt(request)},
                  {"schema", schema_to_value(request.schema)},
                  {"backend", backend.id()}};
    for (std::string_view p : {"model", "temperature"}) {
        if (const Value* v = prop(properties, p)) key_parts.emplace(std::string(p), *v);
    }
    const std::string key = digest(Value(key_parts));

    LlmCallResult result;
    if (use_cache) {
        if (auto hit = cache->get(key)) {
            result.table = std::move(*hit);
            result.cache_hit = true;
            return result;
        }
    }
    std::vector<std::string> violations;
    nlohmann::json report;
    for (std::int64_t attempt = 0; attempt <= max_retries; ++attempt) {
        ++result.attempts;
        Table t = backend.complete(render_prompt(request), request.schema, properties);
        t.schema.reset();
        auto r = validate_schema(t, request.schema);
        violations.clear();
        for (const auto& v : r.violations) {
            violations.push_back("row " + std::to_string(v.row) + ": " + v.attribute + ": " + v.detail);
        }
        report = r.to_json();
        if (r.ok() && verifier) {
            violations = verifier(t);
            report = violations;
        }
        if (violations.empty()) {
            t.schema = request.schema;
            if (use_cache) cache->put(key, t);
            result.table = std::move(t);
            return result;
        }
        request.feedback = violations;
    }
    fail(ErrorCode::verification_failed,
         request.task + " output failed verification after " + std::to_string(result.attempts) + " attempt(s): " +
             violations.front(),
         {{"violations", violations}, {"report", report}, {"attempts", result.attempts}});
}

LlmSource::LlmSource(std::string source_id, std::shared_ptr<LlmBackend> backend, std::shared_ptr<LlmCache> cache)
    : id_(std::move(source_id)), backend_(std::move(backend)), cache_(std::move(cache)) {}

DataBatch LlmSource::query(const std::string& question, const std::optional<Schema>& output_schema,
                           const Map& properties, bool* cache_hit) const {
    PromptRequest req;
    req.task = "nl2llm";
    req.question = normalize_whitespace(question);
    req.schema = output_schema && !output_schema->empty() ? *output_schema : auto_schema(req.question);
    auto r = run_llm(*backend_, cache_.get(), std::move(req), properties);
    if (cache_hit) *cache_hit = r.cache_hit;
    return DataBatch::single(std::move(r.table));
}

std::shared_ptr<LlmBackend> make_llm_backend(const Map& connection, const std::filesystem::path& base_dir) {
    std::string kind = "stub";
    if (const Value* b = prop(connection, "backend")) kind = b->as_string();
    if (kind == "stub") {
        const Value* m = prop(connection, "mapping");
        if (!m) return std::make_shared<StubBackend>(std::vector<StubBackend::Entry>{});
        std::filesystem::path file(m->as_string());
        return StubBackend::from_file(file.is_absolute() ? file : base_dir / file);
    }
    if (kind == "http") return std::make_shared<HttpBackend>(connection);
    fail(ErrorCode::bad_request, "unknown LLM backend \"" + kind + "\"");
}

}  // namespace dil
