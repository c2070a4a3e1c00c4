#pragma once

#include <string>
#include <string_view>

#include "dil/core/table.hpp"

namespace dil {

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);

// SHA-256 of the canonical serialization; equal batches give equal digests.
std::string digest(const DataBatch& batch);
std::string digest(const Table& table);
std::string digest(const Value& value);

// Digest of the rows sorted by their own canonical form; insensitive to row
// order. Used to compare result sets.
std::string sorted_rows_digest(const Table& table);

}  // namespace dil
