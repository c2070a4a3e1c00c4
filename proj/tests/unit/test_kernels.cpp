#include <doctest.h>

#include <cmath>

#include "dil/kernels/kernels.hpp"
#include "support/random_data.hpp"

using namespace dil;
using namespace dil::kernels;
using dil::testing::Gen;

// Inputs here are well past kParallelThreshold so the OpenMP paths run.

namespace {

std::vector<Row> rows(Gen& g, std::size_t n) {
    std::vector<Row> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(g.pool_row(4));
    return out;
}

}  // namespace

TEST_CASE("filter_indices: parallel equals serial equals a plain loop") {
    Gen g(11);
    for (int round = 0; round < 30; ++round) {
        auto data = rows(g, static_cast<std::size_t>(g.uniform(300, 2000)));
        auto pred = parse_expression(g.expression_text());
        Row side = g.pool_row(4);
        const Row* extra[] = {&side};
        std::vector<std::size_t> expect;
        for (std::size_t i = 0; i < data.size(); ++i) {
            const Row* ctx[] = {&data[i], &side};
            if (matches(pred, ctx)) expect.push_back(i);
        }
        CHECK(filter_indices(pred, data, extra, Policy::serial) == expect);
        CHECK(filter_indices(pred, data, extra, Policy::parallel) == expect);
    }
}

TEST_CASE("row_keys and attribute_keys agree across policies") {
    Gen g(12);
    for (int round = 0; round < 10; ++round) {
        auto data = rows(g, static_cast<std::size_t>(g.uniform(300, 3000)));
        CHECK(row_keys(data, Policy::parallel) == row_keys(data, Policy::serial));
        for (const char* a : {"a", "b", "c", "d", "zz"}) {
            auto keys = attribute_keys(data, a, Policy::serial);
            CHECK(attribute_keys(data, a, Policy::parallel) == keys);
            for (std::size_t i = 0; i < data.size(); ++i) {
                auto it = data[i].find(a);
                CHECK(keys[i].has_value() == (it != data[i].end() && !it->second.is_null()));
            }
        }
    }
}

TEST_CASE("cosine_scores: policies identical, close to the formula") {
    Gen g(13);
    const std::size_t dim = 64;
    std::vector<std::vector<double>> items(5000, std::vector<double>(dim));
    for (auto& v : items) {
        if (g.coin(0.01)) continue;  // zero vector
        for (auto& x : v) x = g.real(-1, 1);
    }
    std::vector<double> q(dim);
    for (auto& x : q) x = g.real(-1, 1);
    auto serial = cosine_scores(items, q, Policy::serial);
    CHECK(cosine_scores(items, q, Policy::parallel) == serial);
    for (std::size_t i = 0; i < items.size(); ++i) {
        double dot = 0, a = 0, b = 0;
        for (std::size_t k = 0; k < dim; ++k) {
            dot += items[i][k] * q[k];
            a += items[i][k] * items[i][k];
            b += q[k] * q[k];
        }
        double expect = (a == 0 || b == 0) ? 0.0 : dot / (std::sqrt(a) * std::sqrt(b));
        CHECK(serial[i] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("join_matches: policies agree with a nested loop") {
    Gen g(14);
    for (int round = 0; round < 12; ++round) {
        auto left = rows(g, static_cast<std::size_t>(g.uniform(300, 800)));
        auto right = rows(g, static_cast<std::size_t>(g.uniform(20, 400)));
        JoinSpec spec;
        std::optional<Expr> cond;
        if (round % 3 != 2) {
            spec.left_key = g.pick(std::vector<std::string>{"a", "b", "c"});
            spec.right_key = g.pick(std::vector<std::string>{"a", "b", "c"});
        }
        if (round % 3 != 0) {
            cond = parse_expression("d <= t1.d or t1.a = 1");
            spec.condition = &*cond;
        }
        auto lk = spec.left_key ? attribute_keys(left, *spec.left_key, Policy::serial)
                                : std::vector<std::optional<std::string>>{};
        auto rk = spec.right_key ? attribute_keys(right, *spec.right_key, Policy::serial)
                                 : std::vector<std::optional<std::string>>{};
        std::vector<std::vector<std::size_t>> expect(left.size());
        for (std::size_t i = 0; i < left.size(); ++i) {
            for (std::size_t j = 0; j < right.size(); ++j) {
                if (spec.left_key && (!lk[i] || !rk[j] || *lk[i] != *rk[j])) continue;
                const Row* ctx[] = {&left[i], &right[j]};
                if (cond && !matches(*cond, ctx)) continue;
                expect[i].push_back(j);
            }
        }
        CHECK(join_matches(left, right, spec, Policy::serial) == expect);
        CHECK(join_matches(left, right, spec, Policy::parallel) == expect);
    }
}
