#include "dil/sources/web.hpp"

#include <cctype>
#include <fstream>
#include <regex>
#include <sstream>

#include <httplib.h>

#include "dil/error.hpp"

namespace dil {

namespace {

std::string read_file(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

Value read_cell(const std::string& text, DeclaredType type) {
    if (type == DeclaredType::integer || type == DeclaredType::floating) {
        static const std::regex number(R"(-?\d[\d,]*(\.\d+)?)");
        std::smatch m;
        if (!std::regex_search(text, m, number)) return Value();
        std::string digits;
        for (char c : m.str()) {
            if (c != ',') digits.push_back(c);
        }
        if (type == DeclaredType::integer && digits.find('.') == std::string::npos) return Value(std::stoll(digits));
        return Value(std::stod(digits));
    }
    if (type == DeclaredType::boolean) {
        auto l = lower(text);
        if (l == "yes" || l == "true") return Value(true);
        if (l == "no" || l == "false") return Value(false);
        return Value();
    }
    return Value(text);
}

}  // namespace

FixtureFetcher::FixtureFetcher(std::filesystem::path corpus) : corpus_(std::move(corpus)), index_(nlohmann::json::object()) {
    auto index = corpus_ / "index.json";
    if (std::filesystem::exists(index)) {
        try {
            index_ = nlohmann::json::parse(read_file(index));
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::bad_request, "malformed web corpus index: " + std::string(e.what()));
        }
    }
}

std::string FixtureFetcher::fetch(const std::string& key) const {
    std::filesystem::path file;
    if (index_.contains(key)) {
        file = corpus_ / index_[key].get<std::string>();
    } else if (key.find("..") == std::string::npos && !key.empty() && key.front() != '/') {
        file = corpus_ / key;
    }
    if (file.empty() || !std::filesystem::is_regular_file(file)) {
        fail(ErrorCode::not_found, "no fixture document for \"" + key + "\"");
    }
    return read_file(file);
}

std::string HttpFetcher::fetch(const std::string& url) const {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) fail(ErrorCode::bad_request, "not a URL: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    httplib::Client client(url.substr(0, path_start));
    client.set_follow_location(true);
    auto res = client.Get(path_start == std::string::npos ? "/" : url.substr(path_start));
    if (!res) fail(ErrorCode::backend_unreachable, "cannot fetch " + url);
    if (res->status == 404) fail(ErrorCode::not_found, "document not found: " + url);
    if (res->status != 200) fail(ErrorCode::backend_unreachable, "fetch of " + url + " returned " + std::to_string(res->status));
    return res->body;
}

Table HeuristicExtractor::complete(const std::string& prompt, const Schema& schema, const Map&) {
    ++calls_;
    Table out;
    auto open = prompt.find(kDocumentOpen);
    if (open == std::string::npos) return out;
    open += kDocumentOpen.size();
    auto close = prompt.find(kDocumentClose, open);
    std::string doc = prompt.substr(open, close == std::string::npos ? std::string::npos : close - open);

    std::vector<std::vector<std::string>> blocks(1);
    std::istringstream lines(doc);
    for (std::string line; std::getline(lines, line);) {
        if (trim(line).empty()) {
            if (!blocks.back().empty()) blocks.emplace_back();
        } else {
            blocks.back().push_back(line);
        }
    }
    for (const auto& block : blocks) {
        Row row;
        bool any = false;
        for (const auto& col : schema) {
            std::string label = col.name;
            for (auto& c : label) {
                if (c == '_') c = ' ';
            }
            label = lower(label);
            Value v;
            for (const auto& line : block) {
                auto colon = line.find(':');
                if (colon == std::string::npos) continue;
                if (lower(trim(line.substr(0, colon))) != label) continue;
                v = read_cell(trim(line.substr(colon + 1)), col.type);
                any = true;
                break;
            }
            row.emplace(col.name, std::move(v));
        }
        if (any) out.rows.push_back(std::move(row));
    }
    return out;
}

WebSource::WebSource(std::string source_id, std::shared_ptr<Fetcher> fetcher, std::shared_ptr<LlmBackend> extractor,
                     std::shared_ptr<LlmCache> cache)
    : id_(std::move(source_id)), fetcher_(std::move(fetcher)), extractor_(std::move(extractor)), cache_(std::move(cache)) {}

DataBatch WebSource::extract(const std::string& key, const Schema& output_schema, const Map& properties) const {
    if (output_schema.empty()) fail(ErrorCode::bad_request, "web_extract needs an output schema");
    std::string doc = fetcher_->fetch(key);
    if (trim(normalize_whitespace(doc)).empty()) {
        Table empty;
        empty.schema = output_schema;
        return DataBatch::single(std::move(empty));
    }
    PromptRequest req;
    req.task = "web_extract";
    req.question = "extract structured records from " + key;
    req.schema = output_schema;
    req.sections.push_back({"Document", std::string(kDocumentOpen) + doc + std::string(kDocumentClose)});
    return DataBatch::single(run_llm(*extractor_, cache_.get(), std::move(req), properties).table);
}

}  // namespace dil
