// Serial reference vs OpenMP kernels, and one federation round with 1 vs N client workers.

#include <benchmark/benchmark.h>
#include <omp.h>

#include <random>

#include "fedgkd/data.hpp"
#include "fedgkd/federation.hpp"
#include "fedgkd/kernels.hpp"
#include "fedgkd/nn.hpp"

using namespace fedgkd;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix m(rows, cols);
    for (double& v : m.values()) v = g(rng);
    return m;
}

void BM_Forward(benchmark::State& state, Exec exec) {
    const auto batch = static_cast<std::size_t>(state.range(0));
    const auto width = static_cast<std::size_t>(state.range(1));
    const MlpSpec spec{{width, width, width, 10}, Activation::relu};
    const ParamVector params = init_params(spec, 1);
    const Matrix x = random_matrix(batch, width, 2);
    for (auto _ : state) benchmark::DoNotOptimize(forward(params, spec, x, exec));
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * batch));
}

void BM_ForwardBackward(benchmark::State& state, Exec exec) {
    const auto batch = static_cast<std::size_t>(state.range(0));
    const auto width = static_cast<std::size_t>(state.range(1));
    const MlpSpec spec{{width, width, width, 10}, Activation::relu};
    const ParamVector params = init_params(spec, 1);
    const Matrix x = random_matrix(batch, width, 2);
    const Matrix upstream = random_matrix(batch, 10, 3);
    for (auto _ : state) {
        const ForwardCache cache = forward(params, spec, x, exec);
        benchmark::DoNotOptimize(backprop(cache, params, spec, upstream, exec));
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * batch));
}

void BM_Round(benchmark::State& state) {
    FedConfig cfg;
    cfg.strategy = Strategy::fedgkd;
    cfg.num_clients = 8;
    cfg.participation = 1.0;
    cfg.local_epochs = 2;
    cfg.batch_size = 32;
    cfg.workers = static_cast<std::size_t>(state.range(0));
    const Dataset train = gen_toy_dataset(4000, 1);
    auto shards = dirichlet_partition(train, PartitionSpec{0.5, 8, 2, 0.0});
    Federation fed(cfg, MlpSpec{{2, 64, 64, 4}}, std::move(shards), gen_toy_dataset(1000, 3));
    for (auto _ : state) benchmark::DoNotOptimize(fed.run_round());
}

}  // namespace

BENCHMARK_CAPTURE(BM_Forward, serial, Exec::serial)->Args({256, 64})->Args({1024, 256});
BENCHMARK_CAPTURE(BM_Forward, omp, Exec::parallel)->Args({256, 64})->Args({1024, 256});
BENCHMARK_CAPTURE(BM_ForwardBackward, serial, Exec::serial)->Args({256, 64})->Args({1024, 256});
BENCHMARK_CAPTURE(BM_ForwardBackward, omp, Exec::parallel)->Args({256, 64})->Args({1024, 256});
BENCHMARK(BM_Round)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
