#include <benchmark/benchmark.h>

#include "smoothcert/certify.hpp"
#include "smoothcert/harness.hpp"
#include "smoothcert/population.hpp"
#include "smoothcert/radius_model.hpp"
#include "smoothcert/rng.hpp"
#include "smoothcert/stat_bounds.hpp"

using namespace smoothcert;

namespace {

const ConfidenceSpec kConf{0.001, ZConvention::two_sided_quantile};

void BM_CpLowerBound(benchmark::State& state) {
    const auto n = static_cast<std::uint64_t>(state.range(0));
    const ProbEstimate est(n * 9 / 10, n);
    for (auto _ : state) benchmark::DoNotOptimize(cp_lower_bound(est, {0.001}));
}
BENCHMARK(BM_CpLowerBound)->Arg(100)->Arg(10'000)->Arg(1'000'000);

void BM_NormalQuantile(benchmark::State& state) {
    double p = 0.5;
    for (auto _ : state) {
        benchmark::DoNotOptimize(normal_quantile(p));
        p = p > 0.999 ? 0.5 : p + 1e-4;
    }
}
BENCHMARK(BM_NormalQuantile);

void BM_SampleBinomial(benchmark::State& state) {
    const auto n = static_cast<std::uint64_t>(state.range(0));
    CounterStream stream(1);
    for (auto _ : state) benchmark::DoNotOptimize(sample_binomial(stream, n, 0.9));
}
BENCHMARK(BM_SampleBinomial)->Arg(100)->Arg(1000)->Arg(100'000);

void BM_CertifySynthetic(benchmark::State& state) {
    const SyntheticVoteSource source({0.9, 10, RivalPolicy::uniform_rivals});
    const SmoothingConfig cfg{0.5, kConf, static_cast<std::uint64_t>(state.range(0))};
    for (auto _ : state) benchmark::DoNotOptimize(certify(source, "pt-0", cfg));
}
BENCHMARK(BM_CertifySynthetic)->Arg(1000)->Arg(100'000);

void BM_PlanSamples(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(plan_samples(0.93, 0.25, kConf, 0.3));
}
BENCHMARK(BM_PlanSamples);

void BM_AverageRadius(benchmark::State& state) {
    const auto dist = PADistribution::uniform_from(0.5);
    for (auto _ : state) benchmark::DoNotOptimize(average_radius(dist, {0.5, kConf, 1000}));
}
BENCHMARK(BM_AverageRadius);

void BM_ThetaNumeric(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(theta_numeric(0.8));
}
BENCHMARK(BM_ThetaNumeric);

void BM_BoundComparisonGrid(benchmark::State& state) {
    SweepGrid g;
    g.p_list = {0.6, 0.7, 0.8, 0.9, 0.95};
    g.n_list = {30, 100, 300, 1000, 3000, 10000};
    g.trials = 100;
    g.parallelism = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(run_bound_comparison(g));
}
BENCHMARK(BM_BoundComparisonGrid)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
