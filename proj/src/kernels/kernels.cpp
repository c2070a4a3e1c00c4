#include "dil/kernels/kernels.hpp"

#include <cmath>
#include <exception>
#include <unordered_map>

#include "dil/core/codec.hpp"

namespace dil::kernels {

namespace {

// Runs body(i) for i in [0, n); the first exception thrown inside the
// parallel region is rethrown on the calling thread.
template <typename Body>
void for_each_index(Policy policy, std::size_t n, Body&& body) {
    if (policy != Policy::parallel || n < kParallelThreshold) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::exception_ptr error;
    const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 64)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        try {
            body(static_cast<std::size_t>(i));
        } catch (...) {
#pragma omp critical(dil_kernel_error)
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
}

double norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double cosine(std::span<const double> a, std::span<const double> b, double b_norm) {
    if (a.size() != b.size()) return 0.0;
    double dot = 0.0;
    double aa = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        aa += a[i] * a[i];
    }
    if (aa == 0.0 || b_norm == 0.0) return 0.0;
    return dot / (std::sqrt(aa) * b_norm);
}

}  // namespace

std::vector<std::size_t> filter_indices(const Expr& pred, std::span<const Row> rows,
                                        std::span<const Row* const> extra, Policy policy) {
    const std::size_t n = rows.size();
    std::vector<char> keep(n, 0);
    auto eval_row = [&](std::size_t i) {
        std::vector<const Row*> ctx;
        ctx.reserve(1 + extra.size());
        ctx.push_back(&rows[i]);
        ctx.insert(ctx.end(), extra.begin(), extra.end());
        keep[i] = matches(pred, ctx) ? 1 : 0;
    };
    for_each_index(policy, n, eval_row);
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n; ++i) {
        if (keep[i]) out.push_back(i);
    }
    return out;
}

std::vector<std::string> row_keys(std::span<const Row> rows, Policy policy) {
    const std::size_t n = rows.size();
    std::vector<std::string> keys(n);
    for_each_index(policy, n, [&](std::size_t i) { keys[i] = serialize_value(Value(rows[i])); });
    return keys;
}

std::vector<std::optional<std::string>> attribute_keys(std::span<const Row> rows, const std::string& attribute,
                                                       Policy policy) {
    const std::size_t n = rows.size();
    std::vector<std::optional<std::string>> keys(n);
    auto one = [&](std::size_t i) {
        auto it = rows[i].find(attribute);
        if (it != rows[i].end() && !it->second.is_null()) keys[i] = normalized_key(it->second);
    };
    for_each_index(policy, n, one);
    return keys;
}

std::vector<double> cosine_scores(std::span<const std::vector<double>> items, std::span<const double> query,
                                  Policy policy) {
    const std::size_t n = items.size();
    const double q_norm = norm(query);
    std::vector<double> scores(n, 0.0);
    for_each_index(policy, n, [&](std::size_t i) { scores[i] = cosine(items[i], query, q_norm); });
    return scores;
}

std::vector<std::vector<std::size_t>> join_matches(std::span<const Row> left, std::span<const Row> right,
                                                   const JoinSpec& spec, Policy policy) {
    const std::size_t n = left.size();
    std::vector<std::vector<std::size_t>> out(n);
    const bool keyed = spec.left_key && spec.right_key;

    // Build side: right key -> right row indices in table order.
    std::unordered_map<std::string, std::vector<std::size_t>> index;
    std::vector<std::optional<std::string>> left_keys;
    if (keyed) {
        auto right_keys = attribute_keys(right, *spec.right_key, policy);
        for (std::size_t j = 0; j < right_keys.size(); ++j) {
            if (right_keys[j]) index[*right_keys[j]].push_back(j);
        }
        left_keys = attribute_keys(left, *spec.left_key, policy);
    }

    auto probe = [&](std::size_t i) {
        auto accept = [&](std::size_t j) {
            if (spec.condition) {
                const Row* ctx[2] = {&left[i], &right[j]};
                if (!matches(*spec.condition, ctx)) return;
            }
            out[i].push_back(j);
        };
        if (keyed) {
            if (!left_keys[i]) return;
            auto it = index.find(*left_keys[i]);
            if (it == index.end()) return;
            for (std::size_t j : it->second) accept(j);
        } else {
            for (std::size_t j = 0; j < right.size(); ++j) accept(j);
        }
    };

    for_each_index(policy, n, probe);
    return out;
}

}  // namespace dil::kernels
