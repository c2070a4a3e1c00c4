#pragma once

// Data-parallel inner loops shared by the operators and the vector store.
// Each kernel has an OpenMP path and a serial reference path; both must
// produce identical results (tests/unit/test_kernels.cpp, bench/).

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dil/core/expression.hpp"
#include "dil/core/table.hpp"

namespace dil::kernels {

enum class Policy { serial, parallel };

// Below this many rows the parallel path falls back to the serial loop.
inline constexpr std::size_t kParallelThreshold = 256;

// Ascending indices of rows for which pred is true. `extra` binds ports 1..N.
std::vector<std::size_t> filter_indices(const Expr& pred, std::span<const Row> rows,
                                        std::span<const Row* const> extra, Policy policy);

// Canonical serialization of every row (input to digests and dedup).
std::vector<std::string> row_keys(std::span<const Row> rows, Policy policy);

// Numeric-normalized key of one attribute per row; nullopt when the attribute
// is missing or null (such rows never match).
std::vector<std::optional<std::string>> attribute_keys(std::span<const Row> rows, const std::string& attribute,
                                                       Policy policy);

// Cosine similarity of every item against the query. Zero-norm vectors score 0.
std::vector<double> cosine_scores(std::span<const std::vector<double>> items, std::span<const double> query,
                                  Policy policy);

struct JoinSpec {
    std::optional<std::string> left_key;
    std::optional<std::string> right_key;
    const Expr* condition = nullptr;  // evaluated with left at port 0, right at port 1
};

// For each left row, the matching right row indices in right-table order.
std::vector<std::vector<std::size_t>> join_matches(std::span<const Row> left, std::span<const Row> right,
                                                   const JoinSpec& spec, Policy policy);

}  // namespace dil::kernels
