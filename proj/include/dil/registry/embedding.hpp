#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dil {

inline constexpr std::size_t kEmbeddingDim = 64;

// Lowercased ASCII-alphanumeric runs; everything else separates tokens.
std::vector<std::string> tokenize(std::string_view text);

// 64-bit FNV-1a.
std::uint64_t hash64(std::string_view token);

// Deterministic hashing embedding: each token adds 1 to dimension
// hash64(token) % 64, then the vector is L2-normalized. Empty text (or text
// with no tokens) embeds to the zero vector.
std::vector<double> embed(std::string_view text);

// Dot product over normalized inputs; 0 when either side is zero.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

}  // namespace dil
