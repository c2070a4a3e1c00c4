#include "dil/sources/vector_store.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "dil/core/codec.hpp"
#include "dil/error.hpp"
#include "dil/registry/embedding.hpp"

namespace dil {

VectorStore::VectorStore(const Map& connection, const std::filesystem::path& base_dir) {
    auto it = connection.find("fixture");
    if (it == connection.end()) return;
    std::filesystem::path file(it->second.as_string());
    if (!file.is_absolute()) file = base_dir / file;
    std::ifstream in(file);
    if (!in) fail(ErrorCode::backend_unreachable, "vector fixture not found: " + file.string());
    nlohmann::json j;
    try {
        in >> j;
        for (const auto& c : j.at("collections")) {
            const std::string name = c.at("name");
            create_collection(name, c.value("dimension", kEmbeddingDim), c.value("description", ""));
            const std::string text_field = c.value("text_field", "text");
            for (const auto& item : c.at("items")) {
                VectorItem v;
                v.id = item.at("id").get<std::string>();
                v.payload = from_json(item.value("payload", nlohmann::json::object())).as_map();
                if (item.contains("vector")) {
                    v.vector = item["vector"].get<std::vector<double>>();
                } else {
                    auto text = v.payload.find(text_field);
                    v.vector = embed(text != v.payload.end() && text->second.is_string() ? text->second.as_string() : "");
                }
                add(name, std::move(v));
            }
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::bad_request, "malformed vector fixture " + file.string() + ": " + e.what());
    }
}

void VectorStore::create_collection(const std::string& name, std::size_t dimension, std::string description) {
    if (name.empty() || dimension == 0) fail(ErrorCode::bad_request, "collection needs a name and a dimension");
    std::lock_guard lock(mu_);
    if (!collections_.emplace(name, Collection{dimension, std::move(description), {}}).second) {
        fail(ErrorCode::conflict, "collection \"" + name + "\" already exists");
    }
}

void VectorStore::add(const std::string& collection, VectorItem item) {
    std::lock_guard lock(mu_);
    auto it = collections_.find(collection);
    if (it == collections_.end()) fail(ErrorCode::not_found, "unknown collection \"" + collection + "\"");
    if (item.vector.size() != it->second.dimension) {
        fail(ErrorCode::bad_request, "vector dimension " + std::to_string(item.vector.size()) + " does not match " +
                                         std::to_string(it->second.dimension));
    }
    for (const auto& existing : it->second.items) {
        if (existing.id == item.id) fail(ErrorCode::conflict, "duplicate item id \"" + item.id + "\"");
    }
    it->second.items.push_back(std::move(item));
}

const VectorStore::Collection& VectorStore::get(const std::string& name) const {
    auto it = collections_.find(name);
    if (it == collections_.end()) fail(ErrorCode::not_found, "unknown collection \"" + name + "\"");
    return it->second;
}

DataBatch VectorStore::query(const std::string& collection, const std::vector<double>& query_vector, std::int64_t k,
                             kernels::Policy policy) const {
    if (k < 1) fail(ErrorCode::bad_request, "k must be at least 1");
    std::lock_guard lock(mu_);
    const auto& c = get(collection);
    if (query_vector.size() != c.dimension) {
        fail(ErrorCode::bad_request, "query dimension " + std::to_string(query_vector.size()) + " does not match " +
                                         std::to_string(c.dimension));
    }
    std::vector<std::vector<double>> vectors;
    vectors.reserve(c.items.size());
    for (const auto& item : c.items) vectors.push_back(item.vector);
    auto scores = kernels::cosine_scores(vectors, query_vector, policy);
    std::vector<std::size_t> order(c.items.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return c.items[a].id < c.items[b].id;
    });
    if (order.size() > static_cast<std::size_t>(k)) order.resize(static_cast<std::size_t>(k));
    Table t;
    for (auto i : order) {
        Row row = c.items[i].payload;
        row["_score"] = Value(scores[i]);
        t.rows.push_back(std::move(row));
    }
    return DataBatch::single(std::move(t));
}

std::vector<std::string> VectorStore::collections() const {
    std::lock_guard lock(mu_);
    std::vector<std::string> out;
    for (const auto& [name, _] : collections_) out.push_back(name);
    return out;
}

std::size_t VectorStore::dimension(const std::string& collection) const {
    std::lock_guard lock(mu_);
    return get(collection).dimension;
}

SourceSnapshot VectorStore::snapshot() const {
    std::lock_guard lock(mu_);
    SourceSnapshot s;
    s.database = "default";
    for (const auto& [name, c] : collections_) {
        CollectionSnapshot cs;
        cs.name = name;
        cs.description = c.description;
        for (const auto& item : c.items) cs.rows.push_back(item.payload);
        s.collections.push_back(std::move(cs));
    }
    return s;
}

}  // namespace dil
