#include "dil/core/digest.hpp"

#include <algorithm>
#include <array>
#include <memory>

#include <openssl/evp.h>

#include "dil/core/codec.hpp"
#include "dil/error.hpp"

namespace dil {

std::string sha256_hex(std::string_view bytes) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), md.data(), &len) != 1) {
        fail(ErrorCode::internal, "SHA-256 computation failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xF]);
    }
    return out;
}

std::string digest(const DataBatch& batch) { return sha256_hex(canonical_serialize(batch)); }

std::string digest(const Table& table) { return sha256_hex(canonical_serialize(table)); }

std::string digest(const Value& value) { return sha256_hex(serialize_value(value)); }

std::string sorted_rows_digest(const Table& table) {
    std::vector<std::string> rows;
    rows.reserve(table.rows.size());
    for (const auto& r : table.rows) rows.push_back(serialize_value(Value(r)));
    std::sort(rows.begin(), rows.end());
    std::string joined = "[";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (i) joined.push_back(',');
        joined += rows[i];
    }
    joined.push_back(']');
    return sha256_hex(joined);
}

}  // namespace dil
