#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "dil/core/table.hpp"
#include "dil/kernels/kernels.hpp"
#include "dil/registry/data_registry.hpp"

namespace dil {

struct VectorItem {
    std::string id;
    std::vector<double> vector;
    Row payload;
};

// In-memory vector collections with exhaustive cosine search.
class VectorStore {
public:
    VectorStore() = default;
    // Connection {"fixture": FILE}; FILE holds
    // {"collections":[{"name","description?","dimension?","text_field?","items":[{"id","vector?","payload"}]}]}.
    // Items without a vector are embedded from payload[text_field].
    VectorStore(const Map& connection, const std::filesystem::path& base_dir);

    void create_collection(const std::string& name, std::size_t dimension, std::string description = "");
    // Throws bad_request on a dimension mismatch or duplicate id.
    void add(const std::string& collection, VectorItem item);

    // Top-k by cosine similarity, ties by ascending id; each row is the
    // payload plus "_score".
    DataBatch query(const std::string& collection, const std::vector<double>& query_vector, std::int64_t k,
                    kernels::Policy policy = kernels::Policy::parallel) const;

    std::vector<std::string> collections() const;
    std::size_t dimension(const std::string& collection) const;
    SourceSnapshot snapshot() const;

private:
    struct Collection {
        std::size_t dimension = 0;
        std::string description;
        std::vector<VectorItem> items;
    };
    const Collection& get(const std::string& name) const;

    mutable std::mutex mu_;
    std::map<std::string, Collection> collections_;
};

}  // namespace dil
