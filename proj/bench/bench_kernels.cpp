// Serial reference kernels against their OpenMP versions.

#include <benchmark/benchmark.h>

#include <vector>

#include "kgcal/kernels.hpp"
#include "kgcal/rng.hpp"

using namespace kgcal;

namespace {

std::vector<PairQuery> queries(std::size_t n, std::size_t entities) {
    Engine eng(1);
    std::vector<PairQuery> q(n);
    for (auto& p : q) {
        p.head = static_cast<std::int32_t>(uniform_index(eng, entities));
        p.tail = static_cast<std::int32_t>(uniform_index(eng, entities));
    }
    return q;
}

// Roughly WN18RR-sized: 11 relations, a test split of 9300 queries.
void BM_ScoreQueries(benchmark::State& state) {
    const int threads = static_cast<int>(state.range(0));
    const auto model = init_model(ModelKind::TransH, 100, 40000, 11, 7);
    const auto q = queries(9300, 40000);
    for (auto _ : state) {
        auto m = threads == 0 ? kernels::score_queries_serial(model, q) : kernels::score_queries(model, q, threads);
        benchmark::DoNotOptimize(m.values().data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * q.size()));
}

void BM_AffineCrossEntropy(benchmark::State& state) {
    const int threads = static_cast<int>(state.range(0));
    const bool diagonal = state.range(1) != 0;
    const std::size_t n = 9300, k = 11;
    Engine eng(2);
    Matrix scores(n, k);
    for (double& x : scores.values()) x = uniform(eng, -5, 5);
    std::vector<std::int32_t> labels(n);
    for (auto& y : labels) y = static_cast<std::int32_t>(uniform_index(eng, k));
    std::vector<double> params(kernels::affine_param_count(k, diagonal), 0.1);
    std::vector<double> grad(params.size());
    for (auto _ : state) {
        const double f = threads == 0
                             ? kernels::affine_cross_entropy_serial(scores, labels, params, diagonal, 0.0, grad)
                             : kernels::affine_cross_entropy(scores, labels, params, diagonal, 0.0, grad, threads);
        benchmark::DoNotOptimize(f);
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}

}  // namespace

// threads = 0 is the serial reference
BENCHMARK(BM_ScoreQueries)->Arg(0)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_AffineCrossEntropy)
    ->ArgsProduct({{0, 1, 2, 4, 8}, {1, 0}})
    ->Unit(benchmark::kMicrosecond)
    ->UseRealTime();

BENCHMARK_MAIN();
