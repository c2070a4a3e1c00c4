#include <benchmark/benchmark.h>

#include <random>

#include "dil/core/expression.hpp"
#include "dil/kernels/kernels.hpp"

using namespace dil;
using namespace dil::kernels;

namespace {

std::vector<Row> make_rows(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> salary(40, 250);
    std::uniform_int_distribution<int> city(0, 49);
    std::vector<Row> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(Row{{"id", static_cast<std::int64_t>(i)},
                          {"salary", static_cast<std::int64_t>(salary(rng) * 1000)},
                          {"city", "city" + std::to_string(city(rng))},
                          {"title", i % 3 ? std::string("Data Scientist") : std::string("Engineer")}});
    }
    return out;
}

Policy policy_of(const benchmark::State& s) { return s.range(1) ? Policy::parallel : Policy::serial; }

void label(benchmark::State& s) {
    s.SetLabel(s.range(1) ? "parallel" : "serial");
    s.SetItemsProcessed(s.iterations() * s.range(0));
}

void BM_filter(benchmark::State& s) {
    auto rows = make_rows(static_cast<std::size_t>(s.range(0)), 1);
    auto pred = parse_expression("salary >= 150000 and title contains 'Data'");
    for (auto _ : s) benchmark::DoNotOptimize(filter_indices(pred, rows, {}, policy_of(s)));
    label(s);
}

void BM_row_keys(benchmark::State& s) {
    auto rows = make_rows(static_cast<std::size_t>(s.range(0)), 2);
    for (auto _ : s) benchmark::DoNotOptimize(row_keys(rows, policy_of(s)));
    label(s);
}

void BM_join(benchmark::State& s) {
    auto left = make_rows(static_cast<std::size_t>(s.range(0)), 3);
    auto right = make_rows(50, 4);
    JoinSpec spec{std::string("city"), std::string("city"), nullptr};
    for (auto _ : s) benchmark::DoNotOptimize(join_matches(left, right, spec, policy_of(s)));
    label(s);
}

void BM_cosine(benchmark::State& s) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> d;
    std::vector<std::vector<double>> items(static_cast<std::size_t>(s.range(0)), std::vector<double>(256));
    for (auto& v : items)
        for (auto& x : v) x = d(rng);
    std::vector<double> q(256);
    for (auto& x : q) x = d(rng);
    for (auto _ : s) benchmark::DoNotOptimize(cosine_scores(items, q, policy_of(s)));
    label(s);
}

void sizes(benchmark::internal::Benchmark* b) {
    for (long n : {1 << 10, 1 << 14, 1 << 17})
        for (long p : {0, 1}) b->Args({n, p});
}

}  // namespace

BENCHMARK(BM_filter)->Apply(sizes);
BENCHMARK(BM_row_keys)->Apply(sizes);
BENCHMARK(BM_join)->Apply(sizes);
BENCHMARK(BM_cosine)->Apply(sizes);

BENCHMARK_MAIN();
