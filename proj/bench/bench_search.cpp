// Parallel vs serial inner-product scoring over a flat matrix, plus the full
// top-n search path.

#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "dtr/kernels.hpp"
#include "dtr/vector_index.hpp"

namespace {

struct Fixture {
    std::vector<float> matrix;
    std::vector<float> probe;
    std::size_t rows;
    std::size_t dim;

    Fixture(std::size_t r, std::size_t d) : rows(r), dim(d) {
        std::mt19937 rng(7);
        std::uniform_real_distribution<float> u(-1.0f, 1.0f);
        matrix.resize(rows * dim);
        for (auto& x : matrix) x = u(rng);
        probe.resize(dim);
        for (auto& x : probe) x = u(rng);
    }
};

void BM_InnerProductsParallel(benchmark::State& state) {
    Fixture f(static_cast<std::size_t>(state.range(0)), 768);
    std::vector<double> out(f.rows);
    for (auto _ : state) {
        dtr::kernels::inner_products({f.matrix, f.rows, f.dim}, f.probe, out);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(f.rows));
}

void BM_InnerProductsSerial(benchmark::State& state) {
    Fixture f(static_cast<std::size_t>(state.range(0)), 768);
    std::vector<double> out(f.rows);
    for (auto _ : state) {
        dtr::kernels::reference::inner_products({f.matrix, f.rows, f.dim}, f.probe, out);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(f.rows));
}

void BM_FlatSearchTop5(benchmark::State& state) {
    const auto rows = static_cast<std::size_t>(state.range(0));
    Fixture f(rows, 256);
    std::vector<dtr::DocChunk> chunks;
    std::vector<dtr::UnitVector> vecs;
    for (std::size_t i = 0; i < rows; ++i) {
        chunks.push_back({"d" + std::to_string(i), "", "x"});
        vecs.push_back(dtr::UnitVector::normalize(
                std::span<const float>(f.matrix.data() + i * f.dim, f.dim)));
    }
    auto index = dtr::FlatIndex::build(chunks, vecs);
    auto probe = dtr::UnitVector::normalize(std::span<const float>(f.probe));
    for (auto _ : state) {
        auto hits = index.search(probe, 5);
        benchmark::DoNotOptimize(hits.data());
    }
}

} // namespace

BENCHMARK(BM_InnerProductsParallel)->Arg(10'000)->Arg(100'000);
BENCHMARK(BM_InnerProductsSerial)->Arg(10'000)->Arg(100'000);
BENCHMARK(BM_FlatSearchTop5)->Arg(10'000)->Arg(50'000);

BENCHMARK_MAIN();
