#include <random>

#include <benchmark/benchmark.h>

#include "prose/data.hpp"
#include "prose/disentangle.hpp"
#include "prose/linalg.hpp"
#include "prose/manifold.hpp"

namespace {

prose::Matrix gaussian(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    prose::Matrix m(rows, cols);
    for (double& v : m.data()) v = g(rng);
    return m;
}

void BM_Matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(1);
    const prose::Matrix a = gaussian(n, n, rng);
    const prose::Matrix b = gaussian(n, n, rng);
    for (auto _ : state) benchmark::DoNotOptimize(prose::matmul(a, b));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(64)->Arg(256);

void BM_CayleyStep(benchmark::State& state) {
    const auto d = static_cast<std::size_t>(state.range(0));
    const auto k = static_cast<std::size_t>(state.range(1));
    std::mt19937_64 rng(2);
    const prose::LatentBlocks z(prose::qr_orthonormalize(gaussian(d, k, rng)));
    const prose::Matrix j = gaussian(d, k, rng);
    for (auto _ : state) benchmark::DoNotOptimize(prose::cayley_step(z, j, {}));
}
BENCHMARK(BM_CayleyStep)->Args({16, 4})->Args({64, 8});

void BM_CayleyVjp(benchmark::State& state) {
    std::mt19937_64 rng(3);
    const prose::LatentBlocks z(prose::qr_orthonormalize(gaussian(16, 4, rng)));
    const prose::Matrix j = gaussian(16, 4, rng);
    const prose::Matrix up = gaussian(16, 4, rng);
    for (auto _ : state) benchmark::DoNotOptimize(prose::cayley_vjp(z, j, {}, up));
}
BENCHMARK(BM_CayleyVjp);

void BM_TrainStep(benchmark::State& state) {
    const bool orthonormal = state.range(0) != 0;
    prose::FactorSpec spec = prose::FactorSpec::quads();
    spec.train_fraction = 0.5;
    spec.replicas = 2;
    const prose::FactorDataset ds = prose::generate_toy(spec, 4);
    prose::ProseConfig cfg = prose::ProseConfig::quads();
    cfg.cayley_enabled = orthonormal;
    cfg.lambda_orth = orthonormal ? 1.0 : 0.0;
    prose::ProseModel model = prose::make_model(cfg, ds.spec.image);
    std::vector<std::size_t> rows(cfg.batch_size);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    const prose::Matrix batch = prose::gather_rows(ds.images, rows);
    for (auto _ : state) benchmark::DoNotOptimize(prose::train_step(model, batch));
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
